#include "mvhgnn/encoder.hpp"

#include <cmath>

namespace mvhgnn {

void EncoderConfig::validate() const {
  if (feature_dim < 2 || feature_dim % 2 != 0) throw Error(ErrorCode::kConfig, "feature_dim must be even and >= 2");
  if (out_dim == 0) throw Error(ErrorCode::kConfig, "out_dim must be positive");
  if (schedule.empty()) throw Error(ErrorCode::kConfig, "level schedule is empty");
  if (schedule[0] == 0) throw Error(ErrorCode::kConfig, "level schedule starts at zero views");
  for (std::size_t i = 1; i < schedule.size(); ++i) {
    if (schedule[i] == 0 || schedule[i] >= schedule[i - 1]) {
      throw Error(ErrorCode::kConfig, "level schedule must be strictly decreasing and positive");
    }
  }
  if (k0 == 0) throw Error(ErrorCode::kConfig, "k0 must be positive");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw Error(ErrorCode::kConfig, "leaky slope outside [0, 1)");
}

void ViewSet::validate(std::size_t feature_dim) const {
  if (features.rows() != rig.size()) {
    throw Error(ErrorCode::kDimension, "view set has " + std::to_string(features.rows()) + " feature rows for " +
                                           std::to_string(rig.size()) + " cameras");
  }
  if (features.cols() != feature_dim) {
    throw Error(ErrorCode::kDimension, "view feature width " + std::to_string(features.cols()) + ", expected " +
                                           std::to_string(feature_dim));
  }
}

std::string level_param(std::size_t level, const char* leaf) {
  return "shape.level" + std::to_string(level) + "." + leaf;
}

ParamSet init_shape_encoder(const EncoderConfig& config, std::mt19937_64& rng) {
  config.validate();
  const std::size_t d = config.feature_dim;
  const std::size_t h = config.selector_hidden();
  ParamSet p;
  for (std::size_t l = 0; l < config.level_count(); ++l) {
    p[level_param(l, "gcn.weight")] = glorot(d, d, rng);
    p[level_param(l, "norm.gamma")] = Matrix(1, d, 1.0);
    p[level_param(l, "norm.beta")] = Matrix(1, d, 0.0);
    p[level_param(l, "attn.query")] = glorot(d, d / 2, rng);
    p[level_param(l, "attn.key")] = glorot(d, d / 2, rng);
    p[level_param(l, "attn.value")] = glorot(d, d, rng);
    if (l + 1 < config.level_count()) {
      const std::size_t k = config.schedule[l + 1];
      p[level_param(l, "select.w1")] = glorot(d, h, rng);
      p[level_param(l, "select.b1")] = Matrix(1, h);
      // No output bias: softmax over views ignores a per-prototype shift.
      p[level_param(l, "select.w2")] = glorot(h, k, rng);
    }
  }
  p["shape.head.w1"] = glorot(config.level_count() * d, d, rng);
  p["shape.head.b1"] = Matrix(1, d);
  p["shape.head.w2"] = glorot(d, config.out_dim, rng);
  p["shape.head.b2"] = Matrix(1, config.out_dim);
  return p;
}

ParamSet init_sketch_adapter(std::size_t in_dim, std::size_t out_dim, std::mt19937_64& rng) {
  if (in_dim == 0 || out_dim == 0) throw Error(ErrorCode::kConfig, "adapter widths must be positive");
  ParamSet p;
  p["sketch.skip"] = glorot(in_dim, out_dim, rng);
  p["sketch.w1"] = glorot(in_dim, out_dim, rng);
  p["sketch.b1"] = Matrix(1, out_dim);
  p["sketch.w2"] = glorot(out_dim, out_dim, rng);
  p["sketch.b2"] = Matrix(1, out_dim);
  return p;
}

Var local_attention_weights(Var features, const ViewGraph& graph) {
  if (features.rows() != graph.node_count()) {
    throw Error(ErrorCode::kDimension, "graph has " + std::to_string(graph.node_count()) + " nodes, features " +
                                           std::to_string(features.rows()));
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(features.cols()));
  Var sim = scale(matmul(features, transpose(features)), inv_sqrt_d);
  return masked_softmax_rows(sim, graph.support_with_self_loops());
}

Matrix local_attention_weights(const Matrix& features, const ViewGraph& graph) {
  Tape tape(false);
  return local_attention_weights(tape.constant(features), graph).value();
}

Var local_gcn(Var features, const ViewGraph& graph, ParamBinder& params, std::size_t level,
              const EncoderConfig& config, EncodeTrace* trace) {
  Var attention = local_attention_weights(features, graph);
  if (trace) trace->local_attention.push_back(attention.value());
  Var mixed = matmul(matmul(attention, features), params(level_param(level, "gcn.weight")));
  if (config.gcn_activation == GcnActivation::kIdentity) return mixed;
  Var gamma = params(level_param(level, "norm.gamma"));
  Var beta = params(level_param(level, "norm.beta"));
  Var normed;
  if (config.norm == NormMode::kShape) {
    normed = feature_norm(mixed, gamma, beta, config.norm_eps);
  } else {
    Tape& t = *mixed.tape();
    const std::size_t n = mixed.rows();
    Var rows = transpose(feature_norm(transpose(mixed), t.constant(Matrix(1, n, 1.0)), t.constant(Matrix(1, n, 0.0)),
                                      config.norm_eps));
    normed = add(mul(rows, gamma), beta);
  }
  return leaky_relu(normed, config.leaky_slope);
}

Var global_attention(Var features, ParamBinder& params, std::size_t level, EncodeTrace* trace) {
  const std::size_t d = features.cols();
  if (d % 2 != 0) throw Error(ErrorCode::kDimension, "global attention needs an even feature width");
  Var q = matmul(features, params(level_param(level, "attn.query")));
  Var k = matmul(features, params(level_param(level, "attn.key")));
  Var v = matmul(features, params(level_param(level, "attn.value")));
  Var attention = softmax_rows(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d / 2))));
  if (trace) trace->global_attention.push_back(attention.value());
  return add(features, matmul(attention, v));
}

SelectorOutput view_selector(Var features, const CameraRig& rig, ParamBinder& params, std::size_t level,
                             std::size_t k_out, const EncoderConfig& config) {
  const std::size_t n = features.rows();
  if (k_out >= n) {
    throw Error(ErrorCode::kArgument,
                "selector needs fewer prototypes than views (" + std::to_string(k_out) + " >= " + std::to_string(n) + ")");
  }
  if (rig.size() != n) throw Error(ErrorCode::kDimension, "selector rig size does not match features");
  Var hidden = leaky_relu(
      add(matmul(features, params(level_param(level, "select.w1"))), params(level_param(level, "select.b1"))),
      config.leaky_slope);
  Var logits = matmul(hidden, params(level_param(level, "select.w2")));
  if (logits.cols() != k_out) {
    throw Error(ErrorCode::kConfig, "selector emits " + std::to_string(logits.cols()) + " prototypes, schedule wants " +
                                        std::to_string(k_out));
  }
  // Each prototype row is a distribution over the current views.
  Var assignment = softmax_rows(transpose(logits));
  Var prototypes = matmul(assignment, features);
  return {prototypes, assignment, coarsen_positions(assignment.value(), rig)};
}

Var encode_shape(Var features, const CameraRig& rig, ParamBinder& params, const EncoderConfig& config,
                 EncodeTrace* trace) {
  config.validate();
  if (features.rows() != config.schedule[0] || rig.size() != config.schedule[0]) {
    throw Error(ErrorCode::kConfig, "encoder expects " + std::to_string(config.schedule[0]) + " views, got " +
                                        std::to_string(features.rows()) + " features and " +
                                        std::to_string(rig.size()) + " cameras");
  }
  if (features.cols() != config.feature_dim) throw Error(ErrorCode::kDimension, "view feature width mismatch");

  std::vector<Var> pooled;
  Var current = features;
  CameraRig current_rig = rig;
  for (std::size_t l = 0; l < config.level_count(); ++l) {
    if (trace) trace->node_counts.push_back(current.rows());
    const ViewGraph graph = level_graph(current_rig, config.k0, static_cast<int>(l));
    Var h = config.local_gcn ? local_gcn(current, graph, params, l, config, trace) : current;
    if (config.global_attention) h = global_attention(h, params, l, trace);
    if (trace) trace->level_outputs.push_back(h.value());
    pooled.push_back(config.pooling == Pooling::kMax ? max_over_rows(h) : mean_over_rows(h));
    if (trace) trace->pooled.push_back(pooled.back().value());
    if (l + 1 < config.level_count()) {
      SelectorOutput sel = view_selector(h, current_rig, params, l, config.schedule[l + 1], config);
      if (trace) trace->assignments.push_back(sel.assignment.value());
      current = sel.prototypes;
      current_rig = std::move(sel.rig);
    }
  }
  Var joined = concat_cols(pooled);
  Var hidden = leaky_relu(add(matmul(joined, params("shape.head.w1")), params("shape.head.b1")), config.leaky_slope);
  return add(matmul(hidden, params("shape.head.w2")), params("shape.head.b2"));
}

ShapeEmbedding encode_shape(const ViewSet& views, const ParamSet& params, const EncoderConfig& config,
                            EncodeTrace* trace) {
  views.validate(config.feature_dim);
  Tape tape(false);
  ParamBinder binder(tape, params, [](const std::string&) { return false; });
  EncodeTrace local;
  EncodeTrace& t = trace ? *trace : local;
  Var out = encode_shape(tape.constant(views.features), views.rig, binder, config, &t);
  return ShapeEmbedding{out.value(), t.pooled};
}

Var sketch_adapter(Var embedding, ParamBinder& params, double leaky_slope) {
  Var skip = params("sketch.skip");
  if (embedding.cols() != skip.rows()) {
    throw Error(ErrorCode::kConfig, "sketch embedding width " + std::to_string(embedding.cols()) +
                                        " does not match adapter input " + std::to_string(skip.rows()));
  }
  Var direct = matmul(embedding, skip);
  Var hidden = leaky_relu(add(matmul(embedding, params("sketch.w1")), params("sketch.b1")), leaky_slope);
  return add(add(direct, matmul(hidden, params("sketch.w2"))), params("sketch.b2"));
}

Matrix sketch_adapter(const Matrix& embeddings, const ParamSet& params, double leaky_slope) {
  Tape tape(false);
  ParamBinder binder(tape, params, [](const std::string&) { return false; });
  return sketch_adapter(tape.constant(embeddings), binder, leaky_slope).value();
}

}  // namespace mvhgnn
