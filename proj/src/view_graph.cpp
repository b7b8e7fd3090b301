#include "mvhgnn/view_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace mvhgnn {

namespace {

constexpr double kUnitTolerance = 1e-9;

double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

}  // namespace

CameraRig::CameraRig(std::vector<Vec3> positions, bool require_distinct) : positions_(std::move(positions)) {
  if (positions_.empty()) throw Error(ErrorCode::kArgument, "camera rig needs at least one position");
  for (const Vec3& p : positions_) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2]) ||
        std::abs(norm3(p) - 1.0) > kUnitTolerance) {
      throw Error(ErrorCode::kArgument, "camera position is not a unit vector");
    }
  }
  if (!require_distinct) return;
  for (std::size_t i = 0; i < positions_.size(); ++i)
    for (std::size_t j = i + 1; j < positions_.size(); ++j)
      if (positions_[i] == positions_[j]) throw Error(ErrorCode::kArgument, "duplicate camera position");
}

CameraRig CameraRig::normalized(std::vector<Vec3> positions) {
  for (Vec3& p : positions) {
    const double n = norm3(p);
    if (!(n > 0.0)) throw Error(ErrorCode::kDegenerateInput, "zero camera position");
    for (double& c : p) c /= n;
  }
  return CameraRig(std::move(positions));
}

Matrix CameraRig::as_matrix() const {
  Matrix m(positions_.size(), 3);
  for (std::size_t i = 0; i < positions_.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) m(i, c) = positions_[i][c];
  return m;
}

CameraRig CameraRig::permuted(std::span<const std::size_t> order) const {
  std::vector<Vec3> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(positions_.at(i));
  return CameraRig(std::move(out), false);
}

Matrix ViewGraph::support_with_self_loops() const {
  const std::size_t n = node_count();
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    s(i, i) = 1.0;
    for (std::size_t j : neighbors[i]) s(i, j) = 1.0;
  }
  return s;
}

double chordal_distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

CameraRig build_camera_rig(std::size_t v_count) {
  if (v_count == 0) throw Error(ErrorCode::kArgument, "v_count must be at least 1");
  const double elevation = std::numbers::pi / 6.0;
  std::vector<Vec3> positions;
  positions.reserve(v_count);
  for (std::size_t i = 0; i < v_count; ++i) {
    const double azimuth = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(v_count);
    positions.push_back({std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
                         std::sin(elevation)});
  }
  return CameraRig(std::move(positions));
}

CameraRig load_rig_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open rig file " + path.string());
  std::vector<Vec3> positions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream is(line);
    Vec3 p{};
    std::string extra;
    if (!(is >> p[0] >> p[1] >> p[2]) || (is >> extra)) {
      throw Error(ErrorCode::kConfig, path.string() + ":" + std::to_string(line_no) + ": expected 'x y z'");
    }
    positions.push_back(p);
  }
  return CameraRig::normalized(std::move(positions));
}

ViewGraph knn_edges(const CameraRig& rig, std::size_t k, int level) {
  const std::size_t n = rig.size();
  if (k < 1 || k + 1 > n) {
    throw Error(ErrorCode::kArgument,
                "k=" + std::to_string(k) + " outside [1, " + std::to_string(n == 0 ? 0 : n - 1) + "]");
  }
  ViewGraph g{level, std::vector<std::vector<std::size_t>>(n), rig};
  std::vector<std::size_t> order(n);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) dist[j] = chordal_distance(rig[i], rig[j]);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::erase(order, i);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
    g.neighbors[i].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    order.resize(n);
  }
  return g;
}

ViewGraph level_graph(const CameraRig& rig, std::size_t k0, int level) {
  const std::size_t k = std::min(k0, rig.size() - 1);
  if (k == 0) return ViewGraph{level, std::vector<std::vector<std::size_t>>(rig.size()), rig};
  return knn_edges(rig, k, level);
}

CameraRig coarsen_positions(const Matrix& assign, const CameraRig& rig) {
  if (assign.cols() != rig.size()) {
    throw Error(ErrorCode::kDimension, "assignment has " + std::to_string(assign.cols()) + " columns for " +
                                           std::to_string(rig.size()) + " cameras");
  }
  std::vector<Vec3> out(assign.rows(), Vec3{0.0, 0.0, 0.0});
  for (std::size_t k = 0; k < assign.rows(); ++k) {
    double row_total = 0.0;
    for (std::size_t v = 0; v < assign.cols(); ++v) {
      const double w = assign(k, v);
      if (w < 0.0) throw Error(ErrorCode::kArgument, "negative assignment weight");
      row_total += w;
      for (std::size_t c = 0; c < 3; ++c) out[k][c] += w * rig[v][c];
    }
    if (std::abs(row_total - 1.0) > 1e-9) throw Error(ErrorCode::kArgument, "assignment row does not sum to 1");
    const double n = norm3(out[k]);
    if (n < 1e-9) throw Error(ErrorCode::kDegenerateInput, "coarsened camera position collapsed to the origin");
    for (double& c : out[k]) c /= n;
  }
  return CameraRig(std::move(out), false);
}

}  // namespace mvhgnn
