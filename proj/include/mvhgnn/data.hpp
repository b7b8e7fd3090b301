#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvhgnn/encoder.hpp"
#include "mvhgnn/losses.hpp"
#include "mvhgnn/view_graph.hpp"

namespace mvhgnn {

enum class Primitive { kSphere, kBox, kCylinder, kCone, kTorus, kPyramid, kEllipsoid, kPrism };

const std::vector<Primitive>& all_primitives();
const char* primitive_name(Primitive p);
Primitive primitive_from_name(const std::string& name);

inline constexpr std::size_t kShapePoints = 1024;
inline constexpr std::size_t kRadialBins = 36;
inline constexpr std::size_t kDepthBins = 16;
inline constexpr std::size_t kDescriptorSize = kRadialBins + kDepthBins;

struct SyntheticShape {
  std::size_t class_id = 0;
  Primitive kind = Primitive::kSphere;
  Matrix points;  // kShapePoints x 3, inside the unit ball
  std::uint64_t seed = 0;
};

// Surface samples of the primitive, randomly scaled and rotated per
// instance (unless `deform` is false), centered and scaled into the unit ball.
SyntheticShape make_shape(std::size_t class_id, Primitive kind, std::uint64_t seed, bool deform = true);

// 36-bin radial silhouette profile + 16-bin depth histogram of the points
// seen along `direction`, shifted so that a typical shape is near zero mean.
std::vector<double> view_descriptor(const Matrix& points, const Vec3& direction);

// Fixed random maps from descriptors to features. The sketch map is the view
// map plus independent noise, so sketches and views share structure without
// being identical modalities.
struct EmbeddingMaps {
  Matrix view;    // d x kDescriptorSize
  Matrix sketch;  // d_in x kDescriptorSize
};
EmbeddingMaps embedding_maps(std::size_t d, std::size_t d_in, std::uint64_t seed);

ViewSet synth_views(const SyntheticShape& shape, const CameraRig& rig, std::size_t d, std::uint64_t seed);
ViewSet synth_views(const SyntheticShape& shape, const CameraRig& rig, const EmbeddingMaps& maps);

// One random camera, a `noise` fraction of the points dropped, Gaussian
// noise with sigma = 0.1 * noise, then the sketch map. Returns 1 x d_in.
Matrix synth_sketch(const SyntheticShape& shape, const CameraRig& rig, std::size_t d_in, double noise,
                    std::uint64_t seed);
Matrix synth_sketch(const SyntheticShape& shape, const CameraRig& rig, const EmbeddingMaps& maps, double noise,
                    std::uint64_t seed);

// Seeded Gaussian rows, Gram-Schmidt orthonormalized. Needs classes <= d_p.
PrototypeBank synth_prototypes(const std::vector<std::string>& classes, std::size_t d_p, std::uint64_t seed);

enum class SplitMode { kCategory, kZeroShot };
enum class Split : std::uint8_t { kTrain, kTest };

struct ShapeItem {
  Matrix views;  // V x d
  std::size_t label = 0;
};

struct SketchItem {
  Matrix embedding;  // 1 x d_in
  std::size_t label = 0;
};

/// Shapes share one camera rig. Split tags are empty until make_splits.
struct Dataset {
  std::vector<std::string> classes;
  CameraRig rig;
  std::vector<ShapeItem> shapes;
  std::vector<SketchItem> sketches;
  PrototypeBank prototypes;  // rows ordered like `classes`

  SplitMode mode = SplitMode::kCategory;
  std::vector<Split> shape_split;
  std::vector<Split> sketch_split;
  std::vector<bool> seen;  // per class

  std::size_t feature_dim() const { return shapes.empty() ? 0 : shapes.front().views.cols(); }
  std::size_t sketch_dim() const { return sketches.empty() ? 0 : sketches.front().embedding.cols(); }
  bool has_splits() const { return !shape_split.empty(); }

  std::vector<std::size_t> shape_indices(Split s) const;
  std::vector<std::size_t> sketch_indices(Split s) const;
  std::vector<std::size_t> seen_classes() const;

  // Keeps the first `v` cameras of every shape (view-count ablations).
  Dataset with_views(std::size_t v) const;
  void validate() const;
};

struct SynthConfig {
  std::vector<std::string> classes;  // primitive names; empty = first `class_count` primitives
  std::size_t class_count = 8;
  std::size_t per_class = 30;
  std::size_t sketches_per_class = 20;
  std::size_t views = 12;
  std::size_t feature_dim = 64;
  std::size_t sketch_dim = 64;
  std::size_t proto_dim = 64;
  double sketch_noise = 0.1;
  std::uint64_t seed = 0;

  std::vector<std::string> class_names() const;
  void validate() const;
};

Dataset generate_dataset(const SynthConfig& config);

// Category: per class, floor(0.8 n) shapes and round(0.625 n) sketches train.
// Zero-shot: every item of an `unseen` class is test, everything else train.
// Throws kProtocol if the result would leak an unseen class into training.
Dataset make_splits(Dataset data, SplitMode mode, std::uint64_t seed, const std::vector<std::string>& unseen = {});

// Verifies that no unseen-class item is tagged train. Throws kProtocol.
void check_no_leakage(const Dataset& data);

// Directory layout: shapes.mvhf (tensor "views" N x V x d, "rig" V x 3),
// sketches.mvhf ("embeddings" N x d_in), prototypes.mvhf ("prototypes" C x d_p),
// each with a labels sidecar. Splits are not stored.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace mvhgnn
