#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "mvhgnn/autodiff.hpp"
#include "mvhgnn/params.hpp"
#include "mvhgnn/view_graph.hpp"

namespace mvhgnn {

enum class Pooling { kMax, kMean };
// kNormActivation: feature_norm followed by leaky_relu after A F W.
// kIdentity drops both (used by tests that check the bare propagation).
enum class GcnActivation { kNormActivation, kIdentity };

// Statistics of the GCN feature norm. kShape standardizes each feature over
// the nodes of one shape; kNode standardizes each node over its features.
enum class NormMode { kShape, kNode };

struct EncoderConfig {
  std::size_t feature_dim = 512;
  std::size_t out_dim = 512;
  // Node count per hierarchy level; strictly decreasing, first entry = view count.
  std::vector<std::size_t> schedule{12, 6, 3};
  std::size_t k0 = 4;
  double leaky_slope = 0.2;
  double norm_eps = 1e-5;
  Pooling pooling = Pooling::kMax;
  GcnActivation gcn_activation = GcnActivation::kNormActivation;
  NormMode norm = NormMode::kShape;
  bool local_gcn = true;
  bool global_attention = true;

  std::size_t level_count() const noexcept { return schedule.size(); }
  std::size_t selector_hidden() const noexcept { return feature_dim / 2; }
  void validate() const;
};

struct ViewSet {
  Matrix features;  // V x d
  CameraRig rig;

  void validate(std::size_t feature_dim) const;
};

/// Per-call diagnostics gathered while encoding one shape.
struct EncodeTrace {
  std::vector<std::size_t> node_counts;
  std::vector<Matrix> local_attention;   // N_l x N_l per level
  std::vector<Matrix> global_attention;  // N_l x N_l per level
  std::vector<Matrix> assignments;       // K x N_l per selector
  std::vector<Matrix> pooled;            // 1 x d per level
  std::vector<Matrix> level_outputs;     // N_l x d post-attention features per level
};

struct ShapeEmbedding {
  Matrix vector;               // 1 x d_out
  std::vector<Matrix> pooled;  // one 1 x d per level
};

struct SelectorOutput {
  Var prototypes;  // K x d
  Var assignment;  // K x N, rows sum to 1
  CameraRig rig;
};

// Parameter names use the prefix "shape." for the 3D encoder and "sketch."
// for the adapter.
ParamSet init_shape_encoder(const EncoderConfig& config, std::mt19937_64& rng);
ParamSet init_sketch_adapter(std::size_t in_dim, std::size_t out_dim, std::mt19937_64& rng);

std::string level_param(std::size_t level, const char* leaf);

// softmax over N(i) plus i of f_i . f_j / sqrt(d). Row-stochastic.
Var local_attention_weights(Var features, const ViewGraph& graph);
Matrix local_attention_weights(const Matrix& features, const ViewGraph& graph);

Var local_gcn(Var features, const ViewGraph& graph, ParamBinder& params, std::size_t level,
              const EncoderConfig& config, EncodeTrace* trace = nullptr);

// F + softmax(Q K^T / sqrt(d/2)) V
Var global_attention(Var features, ParamBinder& params, std::size_t level, EncodeTrace* trace = nullptr);

SelectorOutput view_selector(Var features, const CameraRig& rig, ParamBinder& params, std::size_t level,
                             std::size_t k_out, const EncoderConfig& config);

Var encode_shape(Var features, const CameraRig& rig, ParamBinder& params, const EncoderConfig& config,
                 EncodeTrace* trace = nullptr);

// Forward-only convenience with a frozen parameter set.
ShapeEmbedding encode_shape(const ViewSet& views, const ParamSet& params, const EncoderConfig& config,
                            EncodeTrace* trace = nullptr);

// x Ws + W2 leaky(x W1 + b1) + b2. Zero weights give zero; Ws = I with the
// other weights zero reproduces the input.
Var sketch_adapter(Var embedding, ParamBinder& params, double leaky_slope = 0.2);
Matrix sketch_adapter(const Matrix& embeddings, const ParamSet& params, double leaky_slope = 0.2);

}  // namespace mvhgnn
