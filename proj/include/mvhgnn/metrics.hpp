#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mvhgnn/matrix.hpp"

namespace mvhgnn {

/// Queries and gallery embeddings with integer class ids.
struct RetrievalRun {
  Matrix queries;  // Q x d
  std::vector<std::size_t> query_labels;
  Matrix gallery;  // G x d
  std::vector<std::size_t> gallery_labels;

  void validate() const;
};

// Unit-length copy of every row; throws kDegenerateInput on a zero row.
Matrix row_normalized(const Matrix& m);

// Gallery indices by descending cosine similarity, ties by ascending index.
std::vector<std::vector<std::size_t>> rank_gallery(const RetrievalRun& run);

struct MetricTable {
  // All in percent. E is an error (lower is better).
  double nn = 0, ft = 0, st = 0, ndcg = 0, e = 0, mrr = 0, map = 0;

  static const std::vector<std::string>& columns();  // NN FT ST nDCG E MRR mAP
  std::vector<double> values() const;
  std::string to_text() const;  // aligned header + row
  std::string to_json() const;
};

inline constexpr std::size_t kEMeasureCutoff = 32;

// Per-query scores from a ranking's relevance pattern (1 = same class).
MetricTable query_metrics(const std::vector<int>& relevant);

// Throws kProtocol if a query class has no gallery item.
MetricTable compute_metrics(const RetrievalRun& run);
MetricTable compute_metrics(const RetrievalRun& run, const std::vector<std::vector<std::size_t>>& rankings);

// Cosine distance (1 - cos) over gallery pairs i < j, `bins` equal-width bins on [0, 2].
struct DistanceHistograms {
  std::vector<double> bin_start;
  std::vector<std::size_t> intra;
  std::vector<std::size_t> inter;
  std::string to_csv() const;
};
DistanceHistograms distance_histograms(const Matrix& embeddings, const std::vector<std::size_t>& labels,
                                       std::size_t bins = 40);

// Mean inter-class minus mean intra-class cosine distance over gallery pairs.
double margin_statistic(const Matrix& embeddings, const std::vector<std::size_t>& labels);

// Expected mAP of uniformly random rankings, estimated from `trials` permutations.
double random_map_baseline(const RetrievalRun& run, std::size_t trials, std::uint64_t seed);

}  // namespace mvhgnn
