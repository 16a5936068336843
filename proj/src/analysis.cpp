#include "token2vec/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "token2vec/errors.hpp"
#include "token2vec/rng.hpp"

namespace token2vec {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMatrix to_eigen(const Tensor& t) {
  RowMatrix m(static_cast<Eigen::Index>(t.shape()[0]), static_cast<Eigen::Index>(t.shape()[1]));
  std::copy(t.data().begin(), t.data().end(), m.data());
  return m;
}

Tensor from_eigen(const RowMatrix& m) {
  std::vector<double> v(m.data(), m.data() + m.size());
  return Tensor(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(v));
}

void require_points(const Tensor& points, const char* op) {
  if (points.dim() != 2) throw DimensionError(std::string(op) + ": points must be [n x d]");
  if (points.shape()[0] < 3) throw ConfigError(std::string(op) + ": need at least 3 points");
  const std::size_t n = points.shape()[0], d = points.shape()[1];
  bool identical = true;
  for (std::size_t i = 1; i < n && identical; ++i)
    for (std::size_t c = 0; c < d; ++c)
      if (points.at(i, c) != points.at(0, c)) {
        identical = false;
        break;
      }
  if (identical) throw ConfigError(std::string(op) + ": degenerate input, all embeddings are identical");
}

NormSummary norms_of(const Tensor& rows) {
  NormSummary s;
  const std::size_t n = rows.shape()[0], d = rows.shape()[1];
  if (n == 0) return s;
  s.min = std::numeric_limits<double>::infinity();
  s.max = 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) sq += rows.at(r, c) * rows.at(r, c);
    const double norm = std::sqrt(sq);
    total += norm;
    s.min = std::min(s.min, norm);
    s.max = std::max(s.max, norm);
  }
  s.mean = total / static_cast<double>(n);
  return s;
}

}  // namespace

double mixing_rate(const Tensor& speech, const Tensor& text, std::size_t k) {
  if (speech.dim() != 2 || text.dim() != 2 || speech.shape()[1] != text.shape()[1]) {
    throw DimensionError("mixing_rate: embeddings " + shape_to_string(speech.shape()) + " and " +
                         shape_to_string(text.shape()) + " are not comparable");
  }
  const std::size_t ns = speech.shape()[0], nt = text.shape()[0], n = ns + nt, d = speech.shape()[1];
  if (ns == 0 || nt == 0) throw ContractError("mixing_rate: both modalities must contribute tokens");
  if (k < 1 || k >= n) {
    throw ConfigError("mixing_rate: k=" + std::to_string(k) + " must be in [1, " + std::to_string(n - 1) + "]");
  }
  // Unit-normalize once; cosine distance ordering equals -dot ordering.
  std::vector<double> unit(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor& src = i < ns ? speech : text;
    const std::size_t r = i < ns ? i : i - ns;
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) sq += src.at(r, c) * src.at(r, c);
    const double norm = std::max(std::sqrt(sq), kCosineNormFloor);
    for (std::size_t c = 0; c < d; ++c) unit[i * d + c] = src.at(r, c) / norm;
  }
  std::vector<std::pair<double, std::size_t>> dist(n - 1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t w = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += unit[i * d + c] * unit[j * d + c];
      dist[w++] = {1.0 - dot, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::size_t other = 0;
    const bool is_speech = i < ns;
    for (std::size_t q = 0; q < k; ++q) {
      if ((dist[q].second < ns) != is_speech) ++other;
    }
    total += static_cast<double>(other) / static_cast<double>(k);
  }
  return total / static_cast<double>(n);
}

PcaResult pca_2d(const Tensor& points) {
  require_points(points, "project_2d");
  RowMatrix x = to_eigen(points);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const Eigen::Index comps = std::min<Eigen::Index>(2, svd.matrixV().cols());
  RowMatrix axes = RowMatrix::Zero(2, x.cols());
  PcaResult r;
  for (Eigen::Index c = 0; c < comps; ++c) {
    Eigen::VectorXd v = svd.matrixV().col(c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.row(c) = v.transpose();
    const double s = svd.singularValues()(c);
    r.variances.push_back(s * s / static_cast<double>(x.rows() - 1));
  }
  while (r.variances.size() < 2) r.variances.push_back(0.0);
  RowMatrix coords = x * axes.transpose();
  r.components = from_eigen(axes);
  r.coords = from_eigen(coords);
  return r;
}

Tensor tsne_2d(const Tensor& points, const ProjectionConfig& config) {
  require_points(points, "project_2d");
  const std::size_t n = points.shape()[0], d = points.shape()[1];
  std::vector<double> d2(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = points.at(i, c) - points.at(j, c);
        s += diff * diff;
      }
      d2[i * n + j] = d2[j * n + i] = s;
    }

  // Conditional affinities with a per-point bandwidth matching the perplexity.
  const double perplexity = std::min(config.perplexity, static_cast<double>(n - 1) / 3.0);
  const double target_entropy = std::log(std::max(perplexity, 1.0));
  std::vector<double> p(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 100; ++it) {
      double sum = 0.0, weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double v = std::exp(-beta * d2[i * n + j]);
        p[i * n + j] = v;
        sum += v;
        weighted += v * d2[i * n + j];
      }
      sum = std::max(sum, 1e-300);
      const double entropy = std::log(sum) + beta * weighted / sum;
      for (std::size_t j = 0; j < n; ++j) p[i * n + j] /= sum;
      const double diff = entropy - target_entropy;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
  }
  std::vector<double> pj(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      pj[i * n + j] = std::max((p[i * n + j] + p[j * n + i]) / (2.0 * static_cast<double>(n)), 1e-12);

  Rng rng(derive_seed(config.seed, "tsne"));
  std::normal_distribution<double> init(0.0, 1e-4);
  std::vector<double> y(n * 2), gains(n * 2, 1.0), velocity(n * 2, 0.0), grad(n * 2);
  for (auto& v : y) v = init(rng);
  std::vector<double> num(n * n);
  const double learning_rate = std::max(static_cast<double>(n) / 12.0 / 4.0, 1.0);
  for (std::size_t iter = 0; iter < config.tsne_iterations; ++iter) {
    const double exaggeration = iter < 250 ? 12.0 : 1.0;
    const double momentum = iter < 250 ? 0.5 : 0.8;
    double qsum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) {
          num[i * n + j] = 0.0;
          continue;
        }
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
        qsum += num[i * n + j];
      }
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = std::max(num[i * n + j] / qsum, 1e-12);
        const double mult = 4.0 * (exaggeration * pj[i * n + j] - q) * num[i * n + j];
        grad[2 * i] += mult * (y[2 * i] - y[2 * j]);
        grad[2 * i + 1] += mult * (y[2 * i + 1] - y[2 * j + 1]);
      }
    for (std::size_t k = 0; k < y.size(); ++k) {
      const bool same_sign = (grad[k] > 0) == (velocity[k] > 0);
      gains[k] = std::max(same_sign ? gains[k] * 0.8 : gains[k] + 0.2, 0.01);
      velocity[k] = momentum * velocity[k] - learning_rate * gains[k] * grad[k];
      y[k] += velocity[k];
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += y[2 * i];
      my += y[2 * i + 1];
    }
    for (std::size_t i = 0; i < n; ++i) {
      y[2 * i] -= mx / static_cast<double>(n);
      y[2 * i + 1] -= my / static_cast<double>(n);
    }
  }
  return Tensor(Shape{n, 2}, std::move(y));
}

Tensor project_2d(const Tensor& points, const ProjectionConfig& config) {
  return config.method == ProjectionMethod::kPca ? pca_2d(points).coords : tsne_2d(points, config);
}

OverlapReport analyze_embeddings(const JointModel& model, std::uint64_t step, std::size_t k,
                                 const ProjectionConfig& projection) {
  const Tensor speech = slice_rows(model.token_table(Modality::kSpeech), 0, model.vocab_size(Modality::kSpeech));
  const Tensor text = slice_rows(model.token_table(Modality::kText), 0, model.vocab_size(Modality::kText));
  OverlapReport r;
  r.step = step;
  r.k = k;
  r.mixing_rate = mixing_rate(speech, text, k);
  r.speech_norms = norms_of(speech);
  r.text_norms = norms_of(text);
  const std::size_t ns = speech.shape()[0], nt = text.shape()[0], d = speech.shape()[1];
  std::vector<double> all(speech.data().begin(), speech.data().end());
  all.insert(all.end(), text.data().begin(), text.data().end());
  const Tensor coords = project_2d(Tensor(Shape{ns + nt, d}, std::move(all)), projection);
  for (std::size_t i = 0; i < ns + nt; ++i) {
    ProjectedPoint p;
    p.x = coords.at(i, 0);
    p.y = coords.at(i, 1);
    p.modality = i < ns ? Modality::kSpeech : Modality::kText;
    p.token = static_cast<std::int64_t>(i < ns ? i : i - ns);
    r.points.push_back(p);
  }
  return r;
}

std::string report_to_json(const OverlapReport& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["mixing_rate"] = r.mixing_rate;
  j["k"] = r.k;
  auto norms = [](const NormSummary& s) {
    nlohmann::ordered_json o;
    o["mean"] = s.mean;
    o["min"] = s.min;
    o["max"] = s.max;
    return o;
  };
  j["norms"] = {{"speech", norms(r.speech_norms)}, {"text", norms(r.text_norms)}};
  std::vector<double> xs, ys;
  std::vector<std::string> mods;
  std::vector<std::int64_t> toks;
  for (const auto& p : r.points) {
    xs.push_back(p.x);
    ys.push_back(p.y);
    mods.emplace_back(modality_name(p.modality));
    toks.push_back(p.token);
  }
  j["coordinates"] = {{"x", xs}, {"y", ys}, {"modality", mods}, {"token", toks}};
  return j.dump(2) + "\n";
}

std::string report_to_csv(const OverlapReport& r) {
  std::string out = "modality,token,x,y\n";
  for (const auto& p : r.points) {
    out += std::string(modality_name(p.modality)) + "," + std::to_string(p.token) + "," +
           nlohmann::json(p.x).dump() + "," + nlohmann::json(p.y).dump() + "\n";
  }
  return out;
}

}  // namespace token2vec
