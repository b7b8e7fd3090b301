#include "mvhgnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "mvhgnn/archive.hpp"

namespace mvhgnn {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return splitmix(splitmix(splitmix(base ^ splitmix(a)) ^ b) ^ c);
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 normalize3(Vec3 v) {
  const double n = std::sqrt(dot3(v, v));
  for (double& c : v) c /= n;
  return v;
}

// Point on the triangle (a, b, c), uniform by area.
Vec3 on_triangle(const Vec3& a, const Vec3& b, const Vec3& c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double s = u(rng), t = u(rng);
  if (s + t > 1.0) {
    s = 1.0 - s;
    t = 1.0 - t;
  }
  Vec3 p;
  for (int i = 0; i < 3; ++i) p[i] = a[i] + s * (b[i] - a[i]) + t * (c[i] - a[i]);
  return p;
}

// Picks a face index with probability proportional to `areas`.
std::size_t pick_face(const std::vector<double>& areas, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> d(areas.begin(), areas.end());
  return d(rng);
}

double tri_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const Vec3 ac{c[0] - a[0], c[1] - a[1], c[2] - a[2]};
  const Vec3 x = cross(ab, ac);
  return 0.5 * std::sqrt(dot3(x, x));
}

Vec3 sample_mesh(const std::vector<std::array<Vec3, 3>>& tris, std::mt19937_64& rng) {
  std::vector<double> areas;
  for (const auto& t : tris) areas.push_back(tri_area(t[0], t[1], t[2]));
  const auto& t = tris[pick_face(areas, rng)];
  return on_triangle(t[0], t[1], t[2], rng);
}

Vec3 sample_primitive(Primitive kind, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;
  const double two_pi = 2.0 * std::numbers::pi;
  switch (kind) {
    case Primitive::kSphere:
    case Primitive::kEllipsoid: {
      Vec3 p = normalize3({g(rng), g(rng), g(rng)});
      if (kind == Primitive::kEllipsoid) {
        p[1] *= 0.5;
        p[2] *= 0.5;
      }
      return p;
    }
    case Primitive::kBox: {
      const int face = static_cast<int>(u(rng) * 6.0) % 6;
      Vec3 p{2 * u(rng) - 1, 2 * u(rng) - 1, 2 * u(rng) - 1};
      p[face / 2] = face % 2 == 0 ? -1.0 : 1.0;
      return p;
    }
    case Primitive::kCylinder: {
      // side area 2*pi*r*h = 4*pi, caps 2*pi
      const double a = two_pi * u(rng);
      if (u(rng) < 4.0 / 6.0) return {std::cos(a), std::sin(a), 2 * u(rng) - 1};
      const double r = std::sqrt(u(rng));
      return {r * std::cos(a), r * std::sin(a), u(rng) < 0.5 ? -1.0 : 1.0};
    }
    case Primitive::kCone: {
      // slant sqrt(5): lateral pi*sqrt(5), base pi
      const double a = two_pi * u(rng);
      const double side = std::sqrt(5.0);
      if (u(rng) < side / (side + 1.0)) {
        const double r = std::sqrt(u(rng));  // uniform over the lateral surface
        return {r * std::cos(a), r * std::sin(a), 1.0 - 2.0 * r};
      }
      const double r = std::sqrt(u(rng));
      return {r * std::cos(a), r * std::sin(a), -1.0};
    }
    case Primitive::kTorus: {
      const double big = 1.0, small = 0.35;
      // rejection on the tube angle for uniform area density
      for (;;) {
        const double a = two_pi * u(rng), b = two_pi * u(rng);
        if (u(rng) * (big + small) <= big + small * std::cos(b)) {
          const double w = big + small * std::cos(b);
          return {w * std::cos(a), w * std::sin(a), small * std::sin(b)};
        }
      }
    }
    case Primitive::kPyramid: {
      static const std::vector<std::array<Vec3, 3>> tris = [] {
        // Triangular base: a square one is too easily mistaken for a cone from a single view.
        const double s = std::sqrt(3.0) / 2.0;
        const Vec3 apex{0, 0, 1}, a{1, 0, -1}, b{-0.5, s, -1}, c{-0.5, -s, -1};
        return std::vector<std::array<Vec3, 3>>{{a, b, apex}, {b, c, apex}, {c, a, apex}, {a, b, c}};
      }();
      return sample_mesh(tris, rng);
    }
    case Primitive::kPrism: {
      static const std::vector<std::array<Vec3, 3>> tris = [] {
        const double s = std::sqrt(3.0) / 2.0;
        const Vec3 a0{1, 0, -1}, b0{-0.5, s, -1}, c0{-0.5, -s, -1};
        const Vec3 a1{1, 0, 1}, b1{-0.5, s, 1}, c1{-0.5, -s, 1};
        return std::vector<std::array<Vec3, 3>>{{a0, b0, c0}, {a1, b1, c1}, {a0, b0, b1}, {a0, b1, a1},
                                                {b0, c0, c1}, {b0, c1, b1}, {c0, a0, a1}, {c0, a1, c1}};
      }();
      return sample_mesh(tris, rng);
    }
  }
  throw Error(ErrorCode::kArgument, "unknown primitive");
}

// Raw (unshifted) descriptor.
std::vector<double> raw_descriptor(const Matrix& points, const Vec3& direction) {
  const Vec3 c = normalize3(direction);
  Vec3 u = cross({0, 0, 1}, c);
  u = dot3(u, u) < 1e-18 ? Vec3{1, 0, 0} : normalize3(u);
  const Vec3 v = cross(c, u);

  const std::size_t n = points.rows();
  std::vector<double> px(n), py(n), pz(n);
  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p{points(i, 0), points(i, 1), points(i, 2)};
    px[i] = dot3(p, u);
    py[i] = dot3(p, v);
    pz[i] = dot3(p, c);
    cx += px[i];
    cy += py[i];
  }
  cx /= static_cast<double>(n);
  cy /= static_cast<double>(n);

  std::vector<double> out(kDescriptorSize, 0.0);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = px[i] - cx, dy = py[i] - cy;
    const double theta = std::atan2(dy, dx) + std::numbers::pi;
    auto bin = static_cast<std::size_t>(theta / two_pi * kRadialBins);
    bin = std::min(bin, kRadialBins - 1);
    out[bin] = std::max(out[bin], std::hypot(dx, dy));
    auto dbin = static_cast<std::size_t>(std::clamp((pz[i] + 1.0) / 2.0, 0.0, 1.0) * kDepthBins);
    dbin = std::min(dbin, kDepthBins - 1);
    out[kRadialBins + dbin] += 1.0 / static_cast<double>(n);
  }
  return out;
}

void shift_descriptor(std::vector<double>& d) {
  for (std::size_t b = 0; b < kRadialBins; ++b) d[b] -= 0.6;
  for (std::size_t b = kRadialBins; b < kDescriptorSize; ++b) d[b] = 0.25 * (d[b] * kDepthBins - 1.0);
}

Matrix embed(const Matrix& map, const std::vector<double>& descriptor) {
  Matrix out(1, map.rows());
  for (std::size_t r = 0; r < map.rows(); ++r) out(0, r) = dot(map.row(r), descriptor);
  return out;
}

}  // namespace

const std::vector<Primitive>& all_primitives() {
  static const std::vector<Primitive> all{Primitive::kSphere, Primitive::kBox,     Primitive::kCylinder,
                                          Primitive::kCone,   Primitive::kTorus,   Primitive::kPyramid,
                                          Primitive::kEllipsoid, Primitive::kPrism};
  return all;
}

const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::kSphere: return "sphere";
    case Primitive::kBox: return "box";
    case Primitive::kCylinder: return "cylinder";
    case Primitive::kCone: return "cone";
    case Primitive::kTorus: return "torus";
    case Primitive::kPyramid: return "pyramid";
    case Primitive::kEllipsoid: return "ellipsoid";
    case Primitive::kPrism: return "prism";
  }
  return "?";
}

Primitive primitive_from_name(const std::string& name) {
  for (Primitive p : all_primitives())
    if (name == primitive_name(p)) return p;
  throw Error(ErrorCode::kConfig, "unknown primitive class '" + name + "'");
}

SyntheticShape make_shape(std::size_t class_id, Primitive kind, std::uint64_t seed, bool deform) {
  std::mt19937_64 rng(seed);
  SyntheticShape s;
  s.class_id = class_id;
  s.kind = kind;
  s.seed = seed;
  s.points = Matrix(kShapePoints, 3);
  for (std::size_t i = 0; i < kShapePoints; ++i) {
    const Vec3 p = sample_primitive(kind, rng);
    for (int c = 0; c < 3; ++c) s.points(i, c) = p[c];
  }
  if (deform) {
    std::uniform_real_distribution<double> scale(0.9, 1.1), spin(0.0, 2.0 * std::numbers::pi),
        tilt(-std::numbers::pi / 12, std::numbers::pi / 12);
    const double sx = scale(rng), sy = scale(rng), sz = scale(rng);
    const double a = spin(rng), b = tilt(rng);
    const double ca = std::cos(a), sa = std::sin(a), cb = std::cos(b), sb = std::sin(b);
    for (std::size_t i = 0; i < kShapePoints; ++i) {
      const double x = s.points(i, 0) * sx, y = s.points(i, 1) * sy, z = s.points(i, 2) * sz;
      // tilt about x, then spin about z
      const double y1 = cb * y - sb * z, z1 = sb * y + cb * z;
      s.points(i, 0) = ca * x - sa * y1;
      s.points(i, 1) = sa * x + ca * y1;
      s.points(i, 2) = z1;
    }
  }
  Vec3 mean{0, 0, 0};
  for (std::size_t i = 0; i < kShapePoints; ++i)
    for (int c = 0; c < 3; ++c) mean[c] += s.points(i, c) / kShapePoints;
  double radius = 0.0;
  for (std::size_t i = 0; i < kShapePoints; ++i) {
    double r2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      s.points(i, c) -= mean[c];
      r2 += s.points(i, c) * s.points(i, c);
    }
    radius = std::max(radius, std::sqrt(r2));
  }
  for (double& v : s.points.data()) v /= radius;
  return s;
}

std::vector<double> view_descriptor(const Matrix& points, const Vec3& direction) {
  auto d = raw_descriptor(points, direction);
  shift_descriptor(d);
  return d;
}

EmbeddingMaps embedding_maps(std::size_t d, std::size_t d_in, std::uint64_t seed) {
  if (d < 8 || d_in < 8) throw Error(ErrorCode::kConfig, "feature widths must be at least 8");
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(kDescriptorSize)));
  // Rows are drawn in order, so the view map does not depend on d_in.
  std::mt19937_64 base_rng(derive_seed(seed, 101));
  Matrix base(std::max(d, d_in), kDescriptorSize);
  for (double& v : base.data()) v = g(base_rng);
  std::mt19937_64 noise_rng(derive_seed(seed, 202));
  EmbeddingMaps maps{Matrix(d, kDescriptorSize), Matrix(d_in, kDescriptorSize)};
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < kDescriptorSize; ++c) maps.view(r, c) = base(r, c);
  const double norm = 1.0 / std::sqrt(1.25);
  for (std::size_t r = 0; r < d_in; ++r)
    for (std::size_t c = 0; c < kDescriptorSize; ++c) maps.sketch(r, c) = (base(r, c) + 0.5 * g(noise_rng)) * norm;
  return maps;
}

ViewSet synth_views(const SyntheticShape& shape, const CameraRig& rig, const EmbeddingMaps& maps) {
  ViewSet out{Matrix(rig.size(), maps.view.rows()), rig};
  for (std::size_t v = 0; v < rig.size(); ++v) {
    const Matrix f = embed(maps.view, view_descriptor(shape.points, rig[v]));
    std::copy(f.data().begin(), f.data().end(), out.features.row(v).begin());
  }
  return out;
}

ViewSet synth_views(const SyntheticShape& shape, const CameraRig& rig, std::size_t d, std::uint64_t seed) {
  return synth_views(shape, rig, embedding_maps(d, d, seed));
}

Matrix synth_sketch(const SyntheticShape& shape, const CameraRig& rig, const EmbeddingMaps& maps, double noise,
                    std::uint64_t seed) {
  if (!(noise >= 0.0 && noise <= 1.0)) throw Error(ErrorCode::kArgument, "sketch noise outside [0, 1]");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, rig.size() - 1);
  const Vec3 camera = rig[pick(rng)];
  // Sparse strokes: a random `noise` fraction of the surface samples is lost.
  std::vector<std::size_t> order(shape.points.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const auto lost = static_cast<std::size_t>(std::floor(noise * static_cast<double>(order.size())));
  const std::size_t kept = std::max<std::size_t>(1, order.size() - lost);
  order.resize(kept);
  std::sort(order.begin(), order.end());
  auto d = raw_descriptor(gather_rows(shape.points, order), camera);
  // Depth mass stays relative to the full sample, so dropped points really remove mass.
  for (std::size_t b = kRadialBins; b < kDescriptorSize; ++b) d[b] *= static_cast<double>(kept) / static_cast<double>(shape.points.rows());
  if (noise > 0.0) {
    std::normal_distribution<double> g(0.0, 0.1 * noise);
    for (double& v : d) v += g(rng);
  }
  shift_descriptor(d);
  return embed(maps.sketch, d);
}

Matrix synth_sketch(const SyntheticShape& shape, const CameraRig& rig, std::size_t d_in, double noise,
                    std::uint64_t seed) {
  return synth_sketch(shape, rig, embedding_maps(d_in, d_in, seed), noise, seed);
}

PrototypeBank synth_prototypes(const std::vector<std::string>& classes, std::size_t d_p, std::uint64_t seed) {
  if (classes.size() > d_p) {
    throw Error(ErrorCode::kConfig, "cannot orthonormalize " + std::to_string(classes.size()) + " prototypes in " +
                                        std::to_string(d_p) + " dimensions");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(classes.size(), d_p);
  for (double& v : m.data()) v = g(rng);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    // Two passes of modified Gram-Schmidt keep the residual dots near 1e-16.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t q = 0; q < r; ++q) {
        const double proj = dot(m.row(r), m.row(q));
        for (std::size_t c = 0; c < d_p; ++c) m(r, c) -= proj * m(q, c);
      }
    }
    const double n = l2_norm(m.row(r));
    for (double& v : m.row(r)) v /= n;
  }
  return PrototypeBank(classes, m);
}

std::vector<std::size_t> Dataset::shape_indices(Split s) const {
  if (!has_splits()) throw Error(ErrorCode::kProtocol, "dataset has no splits");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < shapes.size(); ++i)
    if (shape_split[i] == s) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::sketch_indices(Split s) const {
  if (!has_splits()) throw Error(ErrorCode::kProtocol, "dataset has no splits");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < sketches.size(); ++i)
    if (sketch_split[i] == s) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::seen_classes() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < classes.size(); ++c)
    if (seen.empty() || seen[c]) out.push_back(c);
  return out;
}

Dataset Dataset::with_views(std::size_t v) const {
  if (v == 0 || v > rig.size()) throw Error(ErrorCode::kConfig, "view count must be in [1, " + std::to_string(rig.size()) + "]");
  Dataset out = *this;
  out.rig = CameraRig(std::vector<Vec3>(rig.positions().begin(), rig.positions().begin() + static_cast<std::ptrdiff_t>(v)));
  for (auto& s : out.shapes) {
    Matrix m(v, s.views.cols());
    std::copy_n(s.views.data().begin(), v * s.views.cols(), m.data().begin());
    s.views = std::move(m);
  }
  return out;
}

void Dataset::validate() const {
  if (classes.size() < 2) throw Error(ErrorCode::kConfig, "dataset needs at least two classes");
  if (prototypes.labels() != classes) throw Error(ErrorCode::kConfig, "prototype labels differ from dataset classes");
  for (const auto& s : shapes) {
    if (s.views.rows() != rig.size() || s.views.cols() != feature_dim()) {
      throw Error(ErrorCode::kShapeMismatch, "inconsistent view matrix " + s.views.shape_string());
    }
    if (s.label >= classes.size()) throw Error(ErrorCode::kArgument, "shape label out of range");
  }
  for (const auto& s : sketches) {
    if (s.embedding.rows() != 1 || s.embedding.cols() != sketch_dim()) {
      throw Error(ErrorCode::kShapeMismatch, "inconsistent sketch embedding " + s.embedding.shape_string());
    }
    if (s.label >= classes.size()) throw Error(ErrorCode::kArgument, "sketch label out of range");
  }
  if (has_splits()) {
    if (shape_split.size() != shapes.size() || sketch_split.size() != sketches.size() || seen.size() != classes.size()) {
      throw Error(ErrorCode::kProtocol, "split tags do not cover the dataset");
    }
    check_no_leakage(*this);
  }
}

std::vector<std::string> SynthConfig::class_names() const {
  if (!classes.empty()) return classes;
  if (class_count > all_primitives().size()) {
    throw Error(ErrorCode::kConfig, "at most " + std::to_string(all_primitives().size()) + " synthetic classes");
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < class_count; ++i) out.push_back(primitive_name(all_primitives()[i]));
  return out;
}

void SynthConfig::validate() const {
  const auto names = class_names();
  if (names.size() < 2) throw Error(ErrorCode::kConfig, "need at least two classes");
  std::set<std::string> unique;
  for (const auto& n : names) {
    primitive_from_name(n);
    if (!unique.insert(n).second) throw Error(ErrorCode::kConfig, "duplicate class '" + n + "'");
  }
  if (per_class < 1 || sketches_per_class < 1) throw Error(ErrorCode::kConfig, "need at least one item per class");
  if (views < 1) throw Error(ErrorCode::kConfig, "need at least one view");
  if (feature_dim < 8 || sketch_dim < 8) throw Error(ErrorCode::kConfig, "feature widths must be at least 8");
  if (!(sketch_noise >= 0.0 && sketch_noise <= 1.0)) throw Error(ErrorCode::kConfig, "sketch noise outside [0, 1]");
  if (names.size() > proto_dim) throw Error(ErrorCode::kConfig, "prototype width below class count");
}

Dataset generate_dataset(const SynthConfig& config) {
  config.validate();
  Dataset data;
  data.classes = config.class_names();
  data.rig = build_camera_rig(config.views);
  const EmbeddingMaps maps = embedding_maps(config.feature_dim, config.sketch_dim, derive_seed(config.seed, 1));
  for (std::size_t c = 0; c < data.classes.size(); ++c) {
    const Primitive kind = primitive_from_name(data.classes[c]);
    for (std::size_t i = 0; i < config.per_class; ++i) {
      const SyntheticShape s = make_shape(c, kind, derive_seed(config.seed, 2, c, i));
      data.shapes.push_back({synth_views(s, data.rig, maps).features, c});
    }
    for (std::size_t j = 0; j < config.sketches_per_class; ++j) {
      const SyntheticShape s = make_shape(c, kind, derive_seed(config.seed, 3, c, j));
      data.sketches.push_back({synth_sketch(s, data.rig, maps, config.sketch_noise, derive_seed(config.seed, 4, c, j)), c});
    }
  }
  data.prototypes = synth_prototypes(data.classes, config.proto_dim, derive_seed(config.seed, 5));
  return data;
}

void check_no_leakage(const Dataset& data) {
  for (std::size_t i = 0; i < data.shapes.size(); ++i) {
    if (data.shape_split[i] == Split::kTrain && !data.seen[data.shapes[i].label]) {
      throw Error(ErrorCode::kProtocol, "unseen class '" + data.classes[data.shapes[i].label] + "' in shape training split");
    }
  }
  for (std::size_t i = 0; i < data.sketches.size(); ++i) {
    if (data.sketch_split[i] == Split::kTrain && !data.seen[data.sketches[i].label]) {
      throw Error(ErrorCode::kProtocol, "unseen class '" + data.classes[data.sketches[i].label] + "' in sketch training split");
    }
  }
}

Dataset make_splits(Dataset data, SplitMode mode, std::uint64_t seed, const std::vector<std::string>& unseen) {
  data.mode = mode;
  data.seen.assign(data.classes.size(), true);
  data.shape_split.assign(data.shapes.size(), Split::kTrain);
  data.sketch_split.assign(data.sketches.size(), Split::kTrain);

  if (mode == SplitMode::kZeroShot) {
    if (unseen.empty()) throw Error(ErrorCode::kConfig, "zero-shot mode needs at least one unseen class");
    for (const auto& name : unseen) {
      auto it = std::find(data.classes.begin(), data.classes.end(), name);
      if (it == data.classes.end()) throw Error(ErrorCode::kConfig, "unseen class '" + name + "' not in dataset");
      data.seen[static_cast<std::size_t>(it - data.classes.begin())] = false;
    }
    if (data.seen_classes().size() < 2) throw Error(ErrorCode::kConfig, "zero-shot mode needs at least two seen classes");
    for (std::size_t i = 0; i < data.shapes.size(); ++i)
      if (!data.seen[data.shapes[i].label]) data.shape_split[i] = Split::kTest;
    for (std::size_t i = 0; i < data.sketches.size(); ++i)
      if (!data.seen[data.sketches[i].label]) data.sketch_split[i] = Split::kTest;
  } else {
    if (!unseen.empty()) throw Error(ErrorCode::kConfig, "unseen classes only apply to zero-shot mode");
    std::mt19937_64 rng(derive_seed(seed, 7));
    auto split_class = [&rng](std::vector<std::size_t> members, std::vector<Split>& tags, double fraction, bool round) {
      std::shuffle(members.begin(), members.end(), rng);
      const double want = fraction * static_cast<double>(members.size());
      const auto train = static_cast<std::size_t>(round ? std::round(want) : std::floor(want));
      for (std::size_t k = train; k < members.size(); ++k) tags[members[k]] = Split::kTest;
    };
    for (std::size_t c = 0; c < data.classes.size(); ++c) {
      std::vector<std::size_t> shape_members, sketch_members;
      for (std::size_t i = 0; i < data.shapes.size(); ++i)
        if (data.shapes[i].label == c) shape_members.push_back(i);
      for (std::size_t i = 0; i < data.sketches.size(); ++i)
        if (data.sketches[i].label == c) sketch_members.push_back(i);
      split_class(shape_members, data.shape_split, 0.8, false);
      split_class(sketch_members, data.sketch_split, 0.625, true);
    }
  }
  check_no_leakage(data);
  return data;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  data.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  FeatureArchive shapes;
  Tensor views;
  views.dims = {static_cast<std::uint32_t>(data.shapes.size()), static_cast<std::uint32_t>(data.rig.size()),
                static_cast<std::uint32_t>(data.feature_dim())};
  std::vector<std::string> shape_labels;
  for (const auto& s : data.shapes) {
    views.values.insert(views.values.end(), s.views.data().begin(), s.views.data().end());
    shape_labels.push_back(data.classes[s.label]);
  }
  shapes.add("views", std::move(views));
  shapes.add("rig", data.rig.as_matrix());
  shapes.set_item_labels(shape_labels);
  write_archive(dir / "shapes.mvhf", shapes);

  FeatureArchive sketches;
  Matrix emb(data.sketches.size(), data.sketch_dim());
  std::vector<std::string> sketch_labels;
  for (std::size_t i = 0; i < data.sketches.size(); ++i) {
    std::copy(data.sketches[i].embedding.data().begin(), data.sketches[i].embedding.data().end(), emb.row(i).begin());
    sketch_labels.push_back(data.classes[data.sketches[i].label]);
  }
  sketches.add("embeddings", emb);
  sketches.set_item_labels(sketch_labels);
  write_archive(dir / "sketches.mvhf", sketches);

  FeatureArchive protos;
  protos.add("prototypes", data.prototypes.vectors());
  protos.set_item_labels(data.prototypes.labels());
  write_archive(dir / "prototypes.mvhf", protos);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  const FeatureArchive protos = read_archive(dir / "prototypes.mvhf");
  data.classes = protos.item_labels("prototypes");
  data.prototypes = PrototypeBank(data.classes, protos.tensor("prototypes").as_matrix());
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < data.classes.size(); ++c) index[data.classes[c]] = c;
  auto class_of = [&index](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw Error(ErrorCode::kUnlabeled, "class '" + name + "' has no prototype");
    return it->second;
  };

  const FeatureArchive shapes = read_archive(dir / "shapes.mvhf");
  const Tensor& views = shapes.tensor("views");
  if (views.dims.size() != 3) throw Error(ErrorCode::kShapeMismatch, "'views' must be N x V x d");
  const Matrix rig = shapes.tensor("rig").as_matrix();
  if (rig.rows() != views.dims[1] || rig.cols() != 3) throw Error(ErrorCode::kShapeMismatch, "'rig' must be V x 3");
  std::vector<Vec3> positions;
  for (std::size_t r = 0; r < rig.rows(); ++r) positions.push_back({rig(r, 0), rig(r, 1), rig(r, 2)});
  data.rig = CameraRig::normalized(positions);  // float32 storage loses the last bits of the norm
  const auto shape_labels = shapes.item_labels("views");
  const std::size_t per = static_cast<std::size_t>(views.dims[1]) * views.dims[2];
  for (std::size_t i = 0; i < views.dims[0]; ++i) {
    Matrix m(views.dims[1], views.dims[2]);
    std::copy_n(views.values.begin() + static_cast<std::ptrdiff_t>(i * per), per, m.data().begin());
    data.shapes.push_back({std::move(m), class_of(shape_labels[i])});
  }

  const FeatureArchive sketches = read_archive(dir / "sketches.mvhf");
  const Matrix emb = sketches.tensor("embeddings").as_matrix();
  const auto sketch_labels = sketches.item_labels("embeddings");
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    data.sketches.push_back({Matrix::row_vector(emb.row(i)), class_of(sketch_labels[i])});
  }
  data.validate();
  return data;
}

}  // namespace mvhgnn
