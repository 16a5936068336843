#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "token2vec/model.hpp"
#include "token2vec/tensor.hpp"
#include "token2vec/token_sequence.hpp"

namespace token2vec {

// Mean over all tokens of the fraction of their k nearest neighbours (cosine
// distance, both modalities pooled, self excluded) that belong to the other
// modality. Rows of `speech` and `text` are token embeddings.
double mixing_rate(const Tensor& speech, const Tensor& text, std::size_t k);

enum class ProjectionMethod { kPca, kTsne };

struct ProjectionConfig {
  ProjectionMethod method = ProjectionMethod::kPca;
  std::uint64_t seed = 0;
  double perplexity = 30.0;
  std::size_t tsne_iterations = 1000;
};

struct PcaResult {
  Tensor components{Shape{0, 0}};  // [2 x d], rows are unit principal axes
  std::vector<double> variances;   // variance along each component
  Tensor coords{Shape{0, 2}};      // [n x 2]
};

// Top-2 principal components; each axis's sign is fixed so that its
// largest-magnitude loading is positive.
PcaResult pca_2d(const Tensor& points);
// Exact (O(n^2)) t-SNE to two dimensions.
Tensor tsne_2d(const Tensor& points, const ProjectionConfig& config);
Tensor project_2d(const Tensor& points, const ProjectionConfig& config);

struct NormSummary {
  double mean = 0.0, min = 0.0, max = 0.0;
};

struct ProjectedPoint {
  double x = 0.0, y = 0.0;
  Modality modality = Modality::kSpeech;
  std::int64_t token = 0;
};

struct OverlapReport {
  std::uint64_t step = 0;
  double mixing_rate = 0.0;
  std::size_t k = 10;
  NormSummary speech_norms, text_norms;
  std::vector<ProjectedPoint> points;
};

// Analyses the input token tables U and V with their mask rows excluded.
OverlapReport analyze_embeddings(const JointModel& model, std::uint64_t step, std::size_t k,
                                 const ProjectionConfig& projection);

std::string report_to_json(const OverlapReport& report);
std::string report_to_csv(const OverlapReport& report);

}  // namespace token2vec
