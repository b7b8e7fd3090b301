#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "mvhgnn/view_graph.hpp"

using namespace mvhgnn;

namespace {

// Exhaustive oracle: sort all other nodes by (distance, index).
std::vector<std::vector<std::size_t>> brute_force_knn(const std::vector<Vec3>& pts, std::size_t k) {
  std::vector<std::vector<std::size_t>> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (int c = 0; c < 3; ++c) s += (pts[i][c] - pts[j][c]) * (pts[i][c] - pts[j][c]);
      all.emplace_back(std::sqrt(s), j);
    }
    std::sort(all.begin(), all.end());
    for (std::size_t n = 0; n < k; ++n) out[i].push_back(all[n].second);
  }
  return out;
}

std::vector<Vec3> random_sphere_points(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<Vec3> pts(n);
  for (auto& p : pts) {
    p = {g(rng), g(rng), g(rng)};
    const double norm = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    for (double& c : p) c /= norm;
  }
  return pts;
}

}  // namespace

TEST_CASE("camera rig layout") {
  const CameraRig rig = build_camera_rig(12);
  REQUIRE(rig.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) {
    const auto& a = rig[i];
    const auto& b = rig[(i + 1) % 12];
    const double az = std::atan2(b[1], b[0]) - std::atan2(a[1], a[0]);
    double deg = std::fmod(az * 180.0 / std::numbers::pi + 360.0, 360.0);
    CHECK(deg == doctest::Approx(30.0));
  }
  const CameraRig one = build_camera_rig(1);
  CHECK(one[0][0] == doctest::Approx(std::cos(std::numbers::pi / 6)));
  CHECK(one[0][1] == doctest::Approx(0.0));
  CHECK(one[0][2] == doctest::Approx(0.5));
  for (std::size_t v = 1; v <= 24; ++v) {
    const CameraRig r = build_camera_rig(v);
    for (const auto& p : r.positions()) {
      CHECK(std::abs(std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) - 1.0) < 1e-12);
    }
  }
  CHECK_THROWS_AS(build_camera_rig(0), Error);
}

TEST_CASE("knn on four coplanar cameras picks azimuthal neighbours") {
  const CameraRig rig({{1, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}});
  const ViewGraph g = knn_edges(rig, 2);
  const auto oracle = brute_force_knn(rig.positions(), 2);
  CHECK(g.neighbors == oracle);
  for (std::size_t i = 0; i < 4; ++i) {
    auto n = g.neighbors[i];
    std::sort(n.begin(), n.end());
    std::vector<std::size_t> expect{(i + 1) % 4, (i + 3) % 4};
    std::sort(expect.begin(), expect.end());
    CHECK(n == expect);
  }
}

TEST_CASE("knn with k = N-1 is complete without self loops") {
  const CameraRig rig = build_camera_rig(7);
  const ViewGraph g = knn_edges(rig, 6);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(g.neighbors[i].size() == 6);
    CHECK(std::find(g.neighbors[i].begin(), g.neighbors[i].end(), i) == g.neighbors[i].end());
  }
  CHECK_THROWS_AS(knn_edges(rig, 0), Error);
  CHECK_THROWS_AS(knn_edges(rig, 7), Error);
}

TEST_CASE("standard ring with k=2 links i-1 and i+1") {
  const ViewGraph g = knn_edges(build_camera_rig(12), 2);
  for (std::size_t i = 0; i < 12; ++i) {
    auto n = g.neighbors[i];
    std::sort(n.begin(), n.end());
    std::vector<std::size_t> expect{(i + 11) % 12, (i + 1) % 12};
    std::sort(expect.begin(), expect.end());
    CHECK(n == expect);
  }
}

TEST_CASE("knn matches the exhaustive oracle and is permutation consistent") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 3 + trial % 10;
    const auto pts = random_sphere_points(n, rng);
    const std::size_t k = 1 + static_cast<std::size_t>(trial) % (n - 1);
    const ViewGraph g = knn_edges(CameraRig(pts), k);
    CHECK(g.neighbors == brute_force_knn(pts, k));

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const ViewGraph gp = knn_edges(CameraRig(pts).permuted(perm), k);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> mapped;
      for (std::size_t j : gp.neighbors[i]) mapped.push_back(perm[j]);
      CHECK(mapped == g.neighbors[perm[i]]);
    }
  }
}

TEST_CASE("coarsen_positions") {
  const CameraRig rig = build_camera_rig(12);
  const CameraRig same = coarsen_positions(Matrix::identity(12), rig);
  for (std::size_t i = 0; i < 12; ++i)
    for (int c = 0; c < 3; ++c) CHECK(same[i][c] == doctest::Approx(rig[i][c]).epsilon(1e-15));

  // The symmetric ring's centroid is (0, 0, sin 30deg), i.e. the +z axis after renormalization.
  const CameraRig pole = coarsen_positions(Matrix(1, 12, 1.0 / 12.0), rig);
  CHECK(std::abs(pole[0][0]) < 1e-12);
  CHECK(std::abs(pole[0][1]) < 1e-12);
  CHECK(std::abs(pole[0][2] - 1.0) < 1e-12);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix assign(6, 12);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 12; ++c) s += (assign(r, c) = u(rng));
    for (std::size_t c = 0; c < 12; ++c) assign(r, c) /= s;
  }
  const CameraRig coarse = coarsen_positions(assign, rig);
  for (const auto& p : coarse.positions()) {
    CHECK(std::abs(std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(coarsen_positions(Matrix(1, 12, 0.5), rig), Error);

  // Antipodal pair averages to the origin.
  const CameraRig opposite({{1, 0, 0}, {-1, 0, 0}});
  try {
    coarsen_positions(Matrix{{0.5, 0.5}}, opposite);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateInput);
  }
}

TEST_CASE("rig file loads and normalizes") {
  const auto path = std::filesystem::temp_directory_path() / "mvhgnn_rig_test.txt";
  {
    std::ofstream out(path);
    out << "# three cameras\n2 0 0\n0 3 0\n\n0 0 0.5  # top\n";
  }
  const CameraRig rig = load_rig_file(path);
  REQUIRE(rig.size() == 3);
  CHECK(rig[0] == Vec3{1, 0, 0});
  CHECK(rig[1] == Vec3{0, 1, 0});
  CHECK(rig[2] == Vec3{0, 0, 1});
  {
    std::ofstream out(path);
    out << "1 2\n";
  }
  CHECK_THROWS_AS(load_rig_file(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("level graph handles a single node") {
  const ViewGraph g = level_graph(build_camera_rig(1), 4, 0);
  CHECK(g.node_count() == 1);
  CHECK(g.neighbors[0].empty());
  CHECK(g.support_with_self_loops() == Matrix{{1.0}});
  CHECK(level_graph(build_camera_rig(3), 4, 2).neighbors[0].size() == 2);
}
