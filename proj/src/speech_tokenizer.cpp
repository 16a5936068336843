#include "token2vec/speech_tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "token2vec/detail/binary_io.hpp"
#include "token2vec/errors.hpp"
#include "token2vec/rng.hpp"

namespace token2vec {

namespace {

double squared_distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

// Returns inertia; fills labels and per-frame squared distances.
double assign_all(const double* frames, std::size_t n, const std::vector<double>& centroids, std::size_t k,
                  std::size_t d, std::vector<std::int64_t>& labels, std::vector<double>& dist) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::int64_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double dd = squared_distance(frames + i * d, centroids.data() + c * d, d);
      if (dd < best) {
        best = dd;
        arg = static_cast<std::int64_t>(c);
      }
    }
    labels[i] = arg;
    dist[i] = best;
    inertia += best;
  }
  return inertia;
}

std::vector<double> kmeanspp_init(const double* frames, std::size_t n, std::size_t k, std::size_t d, Rng& rng) {
  std::vector<double> centroids(k * d);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t first = pick(rng);
  std::copy_n(frames + first * d, d, centroids.begin());
  std::vector<double> closest(n);
  for (std::size_t i = 0; i < n; ++i) closest[i] = squared_distance(frames + i * d, centroids.data(), d);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : closest) total += v;
    if (!(total > 0.0)) {
      throw ConfigError("kmeans_train: only " + std::to_string(c) + " distinct frames available for K=" +
                        std::to_string(k));
    }
    const double target = unit(rng) * total;
    double acc = 0.0;
    std::size_t chosen = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (closest[i] <= 0.0) continue;
      acc += closest[i];
      chosen = i;
      if (acc >= target) break;
    }
    std::copy_n(frames + chosen * d, d, centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], squared_distance(frames + i * d, centroids.data() + c * d, d));
    }
  }
  return centroids;
}

}  // namespace

Codebook kmeans_train(const Tensor& frames, const KMeansConfig& config) {
  if (frames.dim() != 2 || frames.shape()[0] == 0) throw ConfigError("kmeans_train: no input frames");
  const std::size_t n = frames.shape()[0], d = frames.shape()[1], k = config.k;
  if (k == 0) throw ConfigError("kmeans_train: K must be at least 1");
  if (n < k) {
    throw ConfigError("kmeans_train: " + std::to_string(n) + " frames is fewer than K=" + std::to_string(k));
  }
  const double* x = frames.data().data();
  Rng rng(derive_seed(config.seed, "kmeans++"));
  std::vector<double> centroids = kmeanspp_init(x, n, k, d, rng);

  Codebook cb;
  std::vector<std::int64_t> labels(n);
  std::vector<double> dist(n);
  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  double inertia = assign_all(x, n, centroids, k, d, labels, dist);
  cb.inertia_history.push_back(inertia);

  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    // Update step: sums accumulate in frame order so the result is reproducible.
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(labels[i]);
      ++counts[c];
      for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += x[i * d + j];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) centroids[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the frame farthest from its current centroid.
      std::size_t far = 0;
      double far_dist = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        const double dd = squared_distance(x + i * d, centroids.data() + c * d, d);
        if (dd > far_dist) {
          far_dist = dd;
          far = i;
        }
      }
      taken[far] = true;
      std::copy_n(x + far * d, d, centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
    }
    const double next = assign_all(x, n, centroids, k, d, labels, dist);
    cb.iterations = iter + 1;
    // Lloyd steps can only lower inertia; anything else is a numeric fault.
    if (next > inertia * (1.0 + 1e-12) + 1e-300) {
      throw NumericError("kmeans_train: inertia increased from " + std::to_string(inertia) + " to " +
                         std::to_string(next) + " at iteration " + std::to_string(iter + 1));
    }
    cb.inertia_history.push_back(next);
    const double improvement = inertia > 0.0 ? (inertia - next) / inertia : 0.0;
    inertia = next;
    if (improvement < config.tol) break;
  }
  cb.inertia = inertia;
  cb.centroids = Tensor(Shape{k, d}, std::move(centroids));
  return cb;
}

std::vector<std::int64_t> nearest_centroids(const Codebook& codebook, const Tensor& frames) {
  if (frames.dim() != 2 || (frames.shape()[0] > 0 && frames.shape()[1] != codebook.feat_dim())) {
    throw DimensionError("kmeans_assign: feature dim " + shape_to_string(frames.shape()) + " vs codebook dim " +
                         std::to_string(codebook.feat_dim()));
  }
  const std::size_t n = frames.shape()[0];
  std::vector<std::int64_t> labels(n);
  std::vector<double> dist(n);
  std::vector<double> centroids(codebook.centroids.data().begin(), codebook.centroids.data().end());
  assign_all(frames.data().data(), n, centroids, codebook.k(), codebook.feat_dim(), labels, dist);
  return labels;
}

TokenSequence kmeans_assign(const Codebook& codebook, const FeatureMatrix& features) {
  TokenSequence seq;
  seq.id = features.id;
  seq.modality = Modality::kSpeech;
  seq.vocab_size = codebook.k();
  seq.ids = nearest_centroids(codebook, features.frames);
  return seq;
}

Tensor pool_frames(const std::vector<FeatureMatrix>& utterances, std::size_t stride) {
  if (stride == 0) throw ConfigError("pool_frames: stride must be >= 1");
  std::size_t dim = 0;
  std::vector<double> values;
  std::size_t rows = 0;
  for (const auto& u : utterances) {
    if (u.num_frames() == 0) continue;
    if (dim == 0) dim = u.feat_dim();
    if (u.feat_dim() != dim) {
      throw DimensionError("pool_frames: utterance " + u.id + " has dim " + std::to_string(u.feat_dim()) +
                           ", expected " + std::to_string(dim));
    }
    const auto data = u.frames.data();
    for (std::size_t f = 0; f < u.num_frames(); f += stride) {
      values.insert(values.end(), data.begin() + static_cast<std::ptrdiff_t>(f * dim),
                    data.begin() + static_cast<std::ptrdiff_t>((f + 1) * dim));
      ++rows;
    }
  }
  return Tensor(Shape{rows, dim}, std::move(values));
}

TokenSequence run_length_reduce(const TokenSequence& seq) {
  TokenSequence out = seq;
  out.ids.clear();
  for (auto id : seq.ids) {
    if (out.ids.empty() || out.ids.back() != id) out.ids.push_back(id);
  }
  return out;
}

std::vector<std::size_t> run_lengths(const std::vector<std::int64_t>& ids) {
  std::vector<std::size_t> runs;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i == 0 || ids[i] != ids[i - 1]) runs.push_back(0);
    ++runs.back();
  }
  return runs;
}

LengthStats estimate_token_length_stats(const std::vector<TokenSequence>& corpus) {
  if (corpus.empty()) throw ConfigError("estimate_token_length_stats: empty corpus");
  LengthStats s;
  // Welford keeps one pass numerically stable.
  double mean = 0.0, m2 = 0.0;
  std::size_t count = 0;
  for (const auto& seq : corpus) {
    const double x = static_cast<double>(seq.ids.size());
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
    ++s.histogram[seq.ids.size()];
  }
  s.mean = mean;
  s.std = std::sqrt(m2 / static_cast<double>(count));
  return s;
}

Codebook read_codebook(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader in(bytes, "codebook " + path);
  in.expect_magic("TV2C");
  const auto version = in.u32("version");
  if (version != kCodebookFileVersion) in.fail("unsupported version " + std::to_string(version));
  const std::uint64_t k = in.u32("K");
  const std::uint64_t dim = in.u32("feat_dim");
  if (in.remaining() != k * dim * 4) {
    in.fail("payload size " + std::to_string(in.remaining()) + " does not match " + std::to_string(k) + "x" +
            std::to_string(dim) + " float32");
  }
  std::vector<double> values(k * dim);
  for (auto& v : values) v = in.f32("centroids");
  Codebook cb;
  cb.centroids = Tensor(Shape{k, dim}, std::move(values));
  return cb;
}

void write_codebook(const std::string& path, const Codebook& codebook) {
  detail::ByteWriter out;
  out.bytes("TV2C");
  out.u32(kCodebookFileVersion);
  out.u32(static_cast<std::uint32_t>(codebook.k()));
  out.u32(static_cast<std::uint32_t>(codebook.feat_dim()));
  for (double v : codebook.centroids.data()) out.f32(static_cast<float>(v));
  detail::write_file_bytes(path, out.buffer());
}

}  // namespace token2vec
