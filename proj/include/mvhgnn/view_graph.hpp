#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "mvhgnn/matrix.hpp"

namespace mvhgnn {

using Vec3 = std::array<double, 3>;

/// Camera directions on the unit sphere, one per view.
class CameraRig {
 public:
  CameraRig() = default;

  // Validates unit norms and, when `require_distinct`, pairwise distinctness.
  // Coarsened rigs may legitimately repeat positions, so they skip that check.
  explicit CameraRig(std::vector<Vec3> positions, bool require_distinct = true);

  // Normalizes every row before validation.
  static CameraRig normalized(std::vector<Vec3> positions);

  std::size_t size() const noexcept { return positions_.size(); }
  const Vec3& operator[](std::size_t i) const { return positions_[i]; }
  const std::vector<Vec3>& positions() const noexcept { return positions_; }
  Matrix as_matrix() const;  // N x 3

  CameraRig permuted(std::span<const std::size_t> order) const;

 private:
  std::vector<Vec3> positions_;
};

/// Directed kNN view graph at one hierarchy level. neighbors[i] is sorted by
/// ascending distance from node i, ties by ascending index; never contains i.
struct ViewGraph {
  int level = 0;
  std::vector<std::vector<std::size_t>> neighbors;
  CameraRig rig;

  std::size_t node_count() const noexcept { return neighbors.size(); }
  // N x N indicator of N(i) plus the self loop.
  Matrix support_with_self_loops() const;
};

double chordal_distance(const Vec3& a, const Vec3& b);

// `v_count` cameras on a ring at 30 degrees elevation, azimuth 2*pi*i/v_count.
CameraRig build_camera_rig(std::size_t v_count);

// Plain text, one "x y z" per line; '#' starts a comment. Rows are normalized.
CameraRig load_rig_file(const std::filesystem::path& path);

// Requires 1 <= k <= N - 1.
ViewGraph knn_edges(const CameraRig& rig, std::size_t k, int level = 0);

// Level graph with k = min(k0, N - 1); a single node gets an empty list.
ViewGraph level_graph(const CameraRig& rig, std::size_t k0, int level);

// assign is K x V row-stochastic; returns assign * positions renormalized.
CameraRig coarsen_positions(const Matrix& assign, const CameraRig& rig);

}  // namespace mvhgnn
