#include "mvhgnn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mvhgnn {

PrototypeBank::PrototypeBank(std::vector<std::string> labels, Matrix vectors)
    : labels_(std::move(labels)), vectors_(std::move(vectors)) {
  if (labels_.size() < 2) throw Error(ErrorCode::kArgument, "prototype bank needs at least two classes");
  if (vectors_.rows() != labels_.size()) throw Error(ErrorCode::kDimension, "one prototype row per label required");
  if (std::set<std::string>(labels_.begin(), labels_.end()).size() != labels_.size()) {
    throw Error(ErrorCode::kArgument, "prototype labels must be unique");
  }
  for (std::size_t r = 0; r < vectors_.rows(); ++r) {
    const double n = l2_norm(vectors_.row(r));
    if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorCode::kDegenerateInput, "zero prototype vector");
    for (double& v : vectors_.row(r)) v /= n;
  }
}

std::size_t PrototypeBank::index_of(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw Error(ErrorCode::kArgument, "class '" + label + "' not in prototype bank");
  return static_cast<std::size_t>(it - labels_.begin());
}

bool PrototypeBank::contains(const std::string& label) const {
  return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

PrototypeBank PrototypeBank::subset(std::span<const std::string> labels) const {
  std::vector<std::size_t> rows;
  for (const auto& l : labels) rows.push_back(index_of(l));
  return PrototypeBank(std::vector<std::string>(labels.begin(), labels.end()), gather_rows(vectors_, rows));
}

void LossSettings::validate() const {
  if (!(tau > 0.0)) throw Error(ErrorCode::kConfig, "tau must be positive");
  if (!(scale > 0.0)) throw Error(ErrorCode::kConfig, "AM-softmax scale must be positive");
  if (!(margin >= 0.0 && margin < 1.0)) throw Error(ErrorCode::kConfig, "AM-softmax margin outside [0, 1)");
  if (!(mu >= 0.0)) throw Error(ErrorCode::kConfig, "quadruplet margin must be non-negative");
  for (double w : {w_cls, w_sem_shape, w_sem_sketch, w_quad}) {
    if (!(w >= 0.0)) throw Error(ErrorCode::kConfig, "loss weights must be non-negative");
  }
}

double Objective::term(const std::string& name) const {
  for (const auto& [n, v] : terms)
    if (n == name) return v;
  throw Error(ErrorCode::kArgument, "no loss term '" + name + "'");
}

namespace {

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  return scale(mean(pick(log_softmax_rows(logits), labels)), -1.0);
}

void check_labels(std::span<const std::size_t> labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows) throw Error(ErrorCode::kDimension, "one label per row required");
  for (std::size_t y : labels)
    if (y >= classes) throw Error(ErrorCode::kArgument, "label index out of range");
}

// Accumulates weighted terms; zero-weight terms are skipped entirely.
class ObjectiveBuilder {
 public:
  explicit ObjectiveBuilder(Tape& tape) : tape_(tape) {}

  template <typename MakeTerm>
  void add(const std::string& name, double weight, MakeTerm make) {
    if (weight == 0.0) {
      out_.terms.emplace_back(name, 0.0);
      return;
    }
    Var term = make();
    out_.terms.emplace_back(name, term.scalar());
    Var weighted = weight == 1.0 ? term : scale(term, weight);
    out_.total = out_.total.valid() ? mvhgnn::add(out_.total, weighted) : weighted;
  }

  Objective finish() {
    if (!out_.total.valid()) out_.total = tape_.constant(Matrix(1, 1, 0.0));
    return std::move(out_);
  }

 private:
  Tape& tape_;
  Objective out_;
};

}  // namespace

Var semantic_loss(Var projected, const PrototypeBank& bank, std::span<const std::size_t> labels, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::kArgument, "tau must be positive");
  if (projected.cols() != bank.dim()) throw Error(ErrorCode::kDimension, "projection width differs from prototypes");
  check_labels(labels, projected.rows(), bank.size());
  Var prototypes_t = projected.tape()->constant(bank.vectors().transposed());
  Var cosines = matmul(row_l2_normalize(projected), prototypes_t);
  return cross_entropy(scale(cosines, 1.0 / tau), labels);
}

Var am_softmax_loss(Var features, std::span<const std::size_t> labels, Var classifier, double t, double m) {
  if (!(t > 0.0) || !(m >= 0.0 && m < 1.0)) throw Error(ErrorCode::kArgument, "AM-softmax needs t > 0, 0 <= m < 1");
  if (features.rows() == 0) throw Error(ErrorCode::kArgument, "AM-softmax on an empty batch");
  if (features.cols() != classifier.cols()) throw Error(ErrorCode::kDimension, "classifier width mismatch");
  check_labels(labels, features.rows(), classifier.rows());
  Var cosines = matmul(row_l2_normalize(features), transpose(row_l2_normalize(classifier)));
  Matrix margin(cosines.rows(), cosines.cols());
  for (std::size_t r = 0; r < labels.size(); ++r) margin(r, labels[r]) = m;
  Var logits = scale(sub(cosines, features.tape()->constant(std::move(margin))), t);
  return cross_entropy(logits, labels);
}

Var quadruplet_loss(const QuadrupletVars& q, double mu) {
  if (!(mu >= 0.0)) throw Error(ErrorCode::kArgument, "quadruplet margin must be non-negative");
  const std::size_t rows = q.anchor.rows();
  for (Var v : {q.positive, q.negative_shape, q.negative_sketch}) {
    if (v.rows() != rows || v.cols() != q.anchor.cols()) throw Error(ErrorCode::kDimension, "quadruplet shape mismatch");
  }
  Var a = row_l2_normalize(q.anchor);
  auto distance = [&a](Var other) { return row_sum(square(sub(a, row_l2_normalize(other)))); };
  Var d_pos = distance(q.positive);
  Var hinge_shape = relu(add_scalar(sub(d_pos, distance(q.negative_shape)), mu));
  Var hinge_sketch = relu(add_scalar(sub(d_pos, distance(q.negative_sketch)), mu));
  return mean(add(hinge_shape, hinge_sketch));
}

Objective stage1_objective(Var shape_embeddings, Var shape_projected, std::span<const std::size_t> labels,
                           Var classifier, const PrototypeBank& bank, const LossSettings& s) {
  s.validate();
  ObjectiveBuilder b(*shape_embeddings.tape());
  b.add("cls_shape", s.w_cls, [&] { return am_softmax_loss(shape_embeddings, labels, classifier, s.scale, s.margin); });
  b.add("sem_shape", s.w_sem_shape, [&] { return semantic_loss(shape_projected, bank, labels, s.tau); });
  return b.finish();
}

Objective stage2_objective(const QuadrupletVars& quads, Var sketch_embeddings, Var sketch_projected,
                           std::span<const std::size_t> sketch_labels, Var frozen_classifier,
                           const PrototypeBank& bank, const LossSettings& s) {
  s.validate();
  ObjectiveBuilder b(*sketch_embeddings.tape());
  b.add("quad", s.w_quad, [&] { return quadruplet_loss(quads, s.mu); });
  b.add("cls_sketch", s.w_cls,
        [&] { return am_softmax_loss(sketch_embeddings, sketch_labels, frozen_classifier, s.scale, s.margin); });
  b.add("sem_sketch", s.w_sem_sketch, [&] { return semantic_loss(sketch_projected, bank, sketch_labels, s.tau); });
  return b.finish();
}

Objective zeroshot_objective(const QuadrupletVars& quads, Var shape_projected,
                             std::span<const std::size_t> shape_labels, Var sketch_projected,
                             std::span<const std::size_t> sketch_labels, const PrototypeBank& bank,
                             const LossSettings& s) {
  s.validate();
  ObjectiveBuilder b(*shape_projected.tape());
  b.add("quad", s.w_quad, [&] { return quadruplet_loss(quads, s.mu); });
  b.add("sem_shape", s.w_sem_shape, [&] { return semantic_loss(shape_projected, bank, shape_labels, s.tau); });
  b.add("sem_sketch", s.w_sem_sketch, [&] { return semantic_loss(sketch_projected, bank, sketch_labels, s.tau); });
  return b.finish();
}

}  // namespace mvhgnn
