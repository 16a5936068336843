#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "token2vec/corpus_io.hpp"
#include "token2vec/tensor.hpp"
#include "token2vec/token_sequence.hpp"

namespace token2vec {

struct KMeansConfig {
  std::size_t k = 500;
  std::size_t max_iters = 100;
  // Stop once (prev - cur) / prev inertia drops below this.
  double tol = 1e-4;
  std::uint64_t seed = 0;
};

/// K centroids defining the speech-token vocabulary. Stored on disk as
/// "TV2C": magic, u32 version=1, u32 K, u32 feat_dim, float32 rows.
struct Codebook {
  Tensor centroids{Shape{0, 0}};
  std::size_t iterations = 0;
  double inertia = 0.0;
  // Inertia after each assignment step, in order.
  std::vector<double> inertia_history;

  std::size_t k() const { return centroids.shape()[0]; }
  std::size_t feat_dim() const { return centroids.shape()[1]; }
};

inline constexpr std::uint32_t kCodebookFileVersion = 1;

// Lloyd's algorithm with k-means++ seeding. `frames` is [n x dim].
Codebook kmeans_train(const Tensor& frames, const KMeansConfig& config);

// Nearest centroid per row; ties go to the lowest index.
std::vector<std::int64_t> nearest_centroids(const Codebook& codebook, const Tensor& frames);
TokenSequence kmeans_assign(const Codebook& codebook, const FeatureMatrix& features);

// Stacks every `stride`-th frame of each utterance into one matrix.
Tensor pool_frames(const std::vector<FeatureMatrix>& utterances, std::size_t stride = 1);

TokenSequence run_length_reduce(const TokenSequence& seq);
std::vector<std::size_t> run_lengths(const std::vector<std::int64_t>& ids);

struct LengthStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::map<std::size_t, std::size_t> histogram;
};

LengthStats estimate_token_length_stats(const std::vector<TokenSequence>& corpus);

Codebook read_codebook(const std::string& path);
void write_codebook(const std::string& path, const Codebook& codebook);

}  // namespace token2vec
