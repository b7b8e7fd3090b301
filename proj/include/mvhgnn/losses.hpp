#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvhgnn/autodiff.hpp"

namespace mvhgnn {

/// Fixed per-class semantic targets. Rows are unit-normalized on construction.
class PrototypeBank {
 public:
  PrototypeBank() = default;
  PrototypeBank(std::vector<std::string> labels, Matrix vectors);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return vectors_.cols(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const Matrix& vectors() const noexcept { return vectors_; }
  std::size_t index_of(const std::string& label) const;
  bool contains(const std::string& label) const;

  // Bank restricted to `labels`, in that order.
  PrototypeBank subset(std::span<const std::string> labels) const;

 private:
  std::vector<std::string> labels_;
  Matrix vectors_;
};

struct LossSettings {
  double tau = 0.07;    // semantic temperature
  double scale = 15.0;  // AM-softmax t
  double margin = 0.3;  // AM-softmax m
  double mu = 1.0;      // quadruplet margin

  // Term weights; a zero weight removes the term from the graph.
  double w_cls = 1.0;
  double w_sem_shape = 1.0;
  double w_sem_sketch = 1.0;
  double w_quad = 1.0;

  void validate() const;
};

struct QuadrupletVars {
  Var anchor;           // sketch embeddings
  Var positive;         // same-class shape embeddings
  Var negative_shape;   // other-class shape embeddings
  Var negative_sketch;  // other-class sketch embeddings
};

struct Objective {
  Var total;
  std::vector<std::pair<std::string, double>> terms;

  double term(const std::string& name) const;
};

// Mean over rows of -log softmax_i(cos(l2(p), w_i) / tau) at the true class.
// `labels` index rows of the bank.
Var semantic_loss(Var projected, const PrototypeBank& bank, std::span<const std::size_t> labels, double tau);

// Mean over rows of the additive-margin softmax loss on cosine logits.
Var am_softmax_loss(Var features, std::span<const std::size_t> labels, Var classifier, double scale, double margin);

// Mean over rows of the two hinge terms on squared distances between
// l2-normalized embeddings.
Var quadruplet_loss(const QuadrupletVars& q, double mu);

Objective stage1_objective(Var shape_embeddings, Var shape_projected, std::span<const std::size_t> labels,
                           Var classifier, const PrototypeBank& bank, const LossSettings& s);

Objective stage2_objective(const QuadrupletVars& quads, Var sketch_embeddings, Var sketch_projected,
                           std::span<const std::size_t> sketch_labels, Var frozen_classifier,
                           const PrototypeBank& bank, const LossSettings& s);

Objective zeroshot_objective(const QuadrupletVars& quads, Var shape_projected,
                             std::span<const std::size_t> shape_labels, Var sketch_projected,
                             std::span<const std::size_t> sketch_labels, const PrototypeBank& bank,
                             const LossSettings& s);

}  // namespace mvhgnn
