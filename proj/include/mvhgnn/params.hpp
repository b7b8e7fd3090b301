#pragma once

#include <functional>
#include <map>
#include <random>
#include <string>

#include "mvhgnn/autodiff.hpp"

namespace mvhgnn {

/// Named parameter tensors. Ordered by name so that iteration (and therefore
/// checkpoint layout and optimizer updates) is deterministic.
using ParamSet = std::map<std::string, Matrix>;

/// Binds named parameters onto a tape on first use. Trainable parameters
/// become tape variables; everything else is bound as a constant.
class ParamBinder {
 public:
  using Predicate = std::function<bool(const std::string&)>;

  ParamBinder(Tape& tape, const ParamSet& params, Predicate trainable = nullptr)
      : tape_(tape), params_(params), trainable_(std::move(trainable)) {}

  Var operator()(const std::string& name);
  // Uses an existing tape node for `name` instead of binding from the set.
  void inject(const std::string& name, Var value);
  Tape& tape() noexcept { return tape_; }
  const ParamSet& params() const noexcept { return params_; }

  // Gradients of every trainable parameter bound so far; zeros when unused.
  ParamSet gradients() const;

 private:
  Tape& tape_;
  const ParamSet& params_;
  Predicate trainable_;
  std::map<std::string, Var> bound_;
};

ParamSet merge(const ParamSet& a, const ParamSet& b);
ParamSet with_prefix(const ParamSet& params, const std::string& prefix);

Matrix glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

// Order-sensitive FNV-1a digest over names, shapes, and raw bytes.
std::uint64_t param_digest(const ParamSet& params);

}  // namespace mvhgnn
