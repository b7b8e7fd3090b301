#include "mvhgnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mvhgnn {

Matrix row_normalized(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const double n = l2_norm(out.row(r));
    if (!(n > 0.0)) throw Error(ErrorCode::kDegenerateInput, "zero embedding row " + std::to_string(r));
    for (double& v : out.row(r)) v /= n;
  }
  return out;
}

void RetrievalRun::validate() const {
  if (queries.rows() != query_labels.size() || gallery.rows() != gallery_labels.size()) {
    throw Error(ErrorCode::kDimension, "one label per embedding row required");
  }
  if (gallery.rows() == 0) throw Error(ErrorCode::kArgument, "empty gallery");
  if (queries.cols() != gallery.cols()) throw Error(ErrorCode::kDimension, "query and gallery widths differ");
}

std::vector<std::vector<std::size_t>> rank_gallery(const RetrievalRun& run) {
  run.validate();
  const Matrix q = row_normalized(run.queries);
  const Matrix g = row_normalized(run.gallery);
  std::vector<std::vector<std::size_t>> out(q.rows());
  std::vector<double> sim(g.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    for (std::size_t j = 0; j < g.rows(); ++j) sim[j] = dot(q.row(i), g.row(j));
    auto& order = out[i];
    order.resize(g.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&sim](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
  }
  return out;
}

const std::vector<std::string>& MetricTable::columns() {
  static const std::vector<std::string> c{"NN", "FT", "ST", "nDCG", "E", "MRR", "mAP"};
  return c;
}

std::vector<double> MetricTable::values() const { return {nn, ft, st, ndcg, e, mrr, map}; }

std::string MetricTable::to_text() const {
  std::string head, row;
  char buf[32];
  for (const auto& c : columns()) {
    std::snprintf(buf, sizeof buf, "%8s", c.c_str());
    head += buf;
  }
  for (double v : values()) {
    std::snprintf(buf, sizeof buf, "%8.2f", v);
    row += buf;
  }
  return head + "\n" + row + "\n";
}

std::string MetricTable::to_json() const {
  nlohmann::ordered_json j;
  const auto v = values();
  for (std::size_t i = 0; i < v.size(); ++i) j[columns()[i]] = v[i];
  return j.dump();
}

MetricTable query_metrics(const std::vector<int>& relevant) {
  const std::size_t g = relevant.size();
  std::size_t r = 0;
  for (int x : relevant) r += x != 0;
  if (r == 0) throw Error(ErrorCode::kProtocol, "query has no relevant gallery item");

  MetricTable m;
  m.nn = relevant[0] != 0 ? 1.0 : 0.0;

  std::size_t hits = 0, hits_r = 0, hits_2r = 0, hits_k = 0;
  const std::size_t k = std::min(kEMeasureCutoff, g);
  double dcg = 0.0, ap = 0.0;
  bool first = true;
  for (std::size_t i = 0; i < g; ++i) {
    if (relevant[i] == 0) continue;
    ++hits;
    const double rank = static_cast<double>(i + 1);
    if (i < r) ++hits_r;
    if (i < 2 * r) ++hits_2r;
    if (i < k) ++hits_k;
    dcg += 1.0 / std::log2(rank + 1.0);
    ap += static_cast<double>(hits) / rank;
    if (first) {
      m.mrr = 1.0 / rank;
      first = false;
    }
  }
  double idcg = 0.0;
  for (std::size_t i = 0; i < r; ++i) idcg += 1.0 / std::log2(static_cast<double>(i + 1) + 1.0);

  const double rd = static_cast<double>(r);
  m.ft = static_cast<double>(hits_r) / rd;
  m.st = static_cast<double>(hits_2r) / rd;
  m.ndcg = dcg / idcg;
  m.map = ap / rd;
  if (hits_k == 0) {
    m.e = 1.0;
  } else {
    const double p = static_cast<double>(hits_k) / static_cast<double>(k);
    const double rec = static_cast<double>(hits_k) / rd;
    m.e = 1.0 - 2.0 / (1.0 / p + 1.0 / rec);
  }
  return m;
}

MetricTable compute_metrics(const RetrievalRun& run, const std::vector<std::vector<std::size_t>>& rankings) {
  run.validate();
  if (rankings.size() != run.queries.rows()) throw Error(ErrorCode::kDimension, "one ranking per query required");
  const std::set<std::size_t> gallery_classes(run.gallery_labels.begin(), run.gallery_labels.end());
  MetricTable sum;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    if (!gallery_classes.contains(run.query_labels[q])) {
      throw Error(ErrorCode::kProtocol, "query " + std::to_string(q) + " has a class absent from the gallery");
    }
    if (rankings[q].size() != run.gallery.rows()) throw Error(ErrorCode::kDimension, "ranking is not a full permutation");
    std::vector<int> rel(rankings[q].size());
    for (std::size_t i = 0; i < rel.size(); ++i) rel[i] = run.gallery_labels[rankings[q][i]] == run.query_labels[q];
    const MetricTable m = query_metrics(rel);
    sum.nn += m.nn;
    sum.ft += m.ft;
    sum.st += m.st;
    sum.ndcg += m.ndcg;
    sum.e += m.e;
    sum.mrr += m.mrr;
    sum.map += m.map;
  }
  const auto n = static_cast<double>(rankings.size());
  for (double* v : {&sum.nn, &sum.ft, &sum.st, &sum.ndcg, &sum.e, &sum.mrr, &sum.map}) *v = 100.0 * *v / n;
  return sum;
}

MetricTable compute_metrics(const RetrievalRun& run) { return compute_metrics(run, rank_gallery(run)); }

std::string DistanceHistograms::to_csv() const {
  std::ostringstream os;
  os << "bin_start,intra_count,inter_count\n";
  for (std::size_t b = 0; b < bin_start.size(); ++b) os << bin_start[b] << "," << intra[b] << "," << inter[b] << "\n";
  return os.str();
}

namespace {

template <typename Visit>
void for_each_pair_distance(const Matrix& embeddings, const std::vector<std::size_t>& labels, Visit visit) {
  if (embeddings.rows() != labels.size()) throw Error(ErrorCode::kDimension, "one label per embedding row required");
  const Matrix e = row_normalized(embeddings);
  for (std::size_t i = 0; i < e.rows(); ++i)
    for (std::size_t j = i + 1; j < e.rows(); ++j) {
      const double d = std::clamp(1.0 - dot(e.row(i), e.row(j)), 0.0, 2.0);
      visit(d, labels[i] == labels[j]);
    }
}

}  // namespace

DistanceHistograms distance_histograms(const Matrix& embeddings, const std::vector<std::size_t>& labels,
                                       std::size_t bins) {
  if (bins == 0) throw Error(ErrorCode::kArgument, "need at least one bin");
  DistanceHistograms h;
  const double width = 2.0 / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) h.bin_start.push_back(width * static_cast<double>(b));
  h.intra.assign(bins, 0);
  h.inter.assign(bins, 0);
  for_each_pair_distance(embeddings, labels, [&](double d, bool same) {
    const std::size_t b = std::min(bins - 1, static_cast<std::size_t>(d / width));
    ++(same ? h.intra : h.inter)[b];
  });
  return h;
}

double margin_statistic(const Matrix& embeddings, const std::vector<std::size_t>& labels) {
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for_each_pair_distance(embeddings, labels, [&](double d, bool same) {
    if (same) {
      intra += d;
      ++n_intra;
    } else {
      inter += d;
      ++n_inter;
    }
  });
  if (n_intra == 0 || n_inter == 0) throw Error(ErrorCode::kArgument, "margin needs both intra- and inter-class pairs");
  return inter / static_cast<double>(n_inter) - intra / static_cast<double>(n_intra);
}

double random_map_baseline(const RetrievalRun& run, std::size_t trials, std::uint64_t seed) {
  run.validate();
  std::mt19937_64 rng(seed);
  double total = 0.0;
  std::vector<std::vector<std::size_t>> rankings(run.queries.rows());
  for (std::size_t t = 0; t < trials; ++t) {
    for (auto& r : rankings) {
      r.resize(run.gallery.rows());
      std::iota(r.begin(), r.end(), std::size_t{0});
      std::shuffle(r.begin(), r.end(), rng);
    }
    total += compute_metrics(run, rankings).map;
  }
  return total / static_cast<double>(trials);
}

}  // namespace mvhgnn
