#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "mvhgnn/data.hpp"
#include "mvhgnn/encoder.hpp"
#include "mvhgnn/losses.hpp"
#include "mvhgnn/metrics.hpp"
#include "mvhgnn/params.hpp"

namespace mvhgnn {

// lr_end + (lr_start - lr_end) (1 + cos(pi epoch / total)) / 2
double cosine_lr(std::size_t epoch, std::size_t total, double lr_start, double lr_end);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  ParamSet m;
  ParamSet v;
};

// One bias-corrected Adam update of every parameter named in `grads`;
// parameters without a gradient are left alone.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr);

struct Quadruplet {
  std::size_t anchor;           // sketch index
  std::size_t positive;         // shape index, same class
  std::size_t negative_shape;   // shape index, other class
  std::size_t negative_sketch;  // sketch index, other class
};

// Uniform quadruplets drawn from the given pools (dataset indices).
// Throws kArgument when no anchor has both a positive and negatives.
std::vector<Quadruplet> sample_quadruplets(const Dataset& data, std::span<const std::size_t> sketch_pool,
                                           std::span<const std::size_t> shape_pool, std::size_t count,
                                           std::mt19937_64& rng);
std::vector<Quadruplet> sample_quadruplets(const Dataset& data, std::size_t count, std::uint64_t seed);

// kDefault is two-stage for category mode and one-stage for zero-shot mode.
enum class Strategy { kDefault, kOneStage, kTwoStage };

struct TrainConfig {
  SplitMode mode = SplitMode::kCategory;
  int stage = 0;  // 0 runs the whole strategy; 1 or 2 runs one stage of the two-stage schedule
  Strategy strategy = Strategy::kDefault;
  std::size_t epochs = 100;  // per stage
  double lr_start = 1e-4;
  double lr_end = 1e-6;
  std::size_t batch_size = 32;
  std::size_t quadruplets = 512;
  std::uint64_t seed = 0;
  LossSettings losses;
  EncoderConfig encoder;     // feature_dim must match the data; schedule[0] the view count
  std::size_t views = 0;     // 0 keeps every camera
  std::size_t out_dim = 0;   // 0 = encoder.out_dim

  bool two_stage() const;
  void validate() const;
};

// Scaled-down settings for minutes-scale runs on the default synthetic set.
TrainConfig desk_config();

/// Everything needed to embed shapes and sketches after training.
struct Model {
  EncoderConfig encoder;
  ParamSet params;  // shape.*, sketch.*, proj.weight, classifier.weight
  std::vector<std::string> classes;             // rows of the prototype bank the model was built for
  std::vector<std::string> classifier_classes;  // rows of classifier.weight

  std::size_t sketch_dim() const;
  std::size_t proto_dim() const;
};

Model init_model(const Dataset& data, const TrainConfig& config);

struct StageReport {
  std::string stage;
  std::vector<double> epoch_loss;          // mean total loss per epoch
  std::vector<double> epoch_lr;
  std::vector<std::vector<std::pair<std::string, double>>> epoch_terms;
  std::uint64_t frozen_digest_before = 0;  // stage 2 only
  std::uint64_t frozen_digest_after = 0;
};

// Each stage logs one JSON object per epoch to `log` when given.
StageReport train_stage1(Model& model, const Dataset& data, const TrainConfig& config, std::ostream* log = nullptr);
StageReport train_stage2(Model& model, const Dataset& data, const TrainConfig& config, std::ostream* log = nullptr);
StageReport train_joint(Model& model, const Dataset& data, const TrainConfig& config, std::ostream* log = nullptr);

// Applies the configured view count, then runs the strategy for the mode.
// `data` must carry splits matching config.mode.
Model train(const Dataset& data, const TrainConfig& config, std::ostream* log = nullptr,
            std::vector<StageReport>* reports = nullptr);

// Parameter names frozen during stage 2.
bool is_stage1_param(const std::string& name);

Matrix embed_shapes(const Model& model, const Dataset& data, std::span<const std::size_t> indices);
Matrix embed_sketches(const Model& model, const Dataset& data, std::span<const std::size_t> indices);
Matrix embed_sketches(const Model& model, const Matrix& sketches);

// Category: test sketches against test shapes. Zero-shot: unseen-class
// sketches against every shape.
RetrievalRun retrieval_run(const Model& model, const Dataset& data);

// MVHF tensors plus <path>.manifest.json (encoder settings, class lists, shapes).
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);
std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);

}  // namespace mvhgnn
