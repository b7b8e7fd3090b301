#include "mvhgnn/params.hpp"

#include <cmath>
#include <cstring>

namespace mvhgnn {

Var ParamBinder::operator()(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorCode::kConfig, "missing parameter '" + name + "'");
  const bool train = trainable_ ? trainable_(name) : true;
  Var v = train ? tape_.variable(it->second) : tape_.constant(it->second);
  bound_.emplace(name, v);
  return v;
}

void ParamBinder::inject(const std::string& name, Var value) {
  if (value.tape() != &tape_) throw Error(ErrorCode::kArgument, "injected parameter lives on another tape");
  bound_[name] = value;
}

ParamSet ParamBinder::gradients() const {
  ParamSet out;
  for (const auto& [name, var] : bound_) {
    if (tape_.requires_grad(var.id())) out.emplace(name, var.grad());
  }
  return out;
}

ParamSet merge(const ParamSet& a, const ParamSet& b) {
  ParamSet out = a;
  for (const auto& [name, m] : b) {
    if (!out.emplace(name, m).second) throw Error(ErrorCode::kConfig, "duplicate parameter '" + name + "'");
  }
  return out;
}

ParamSet with_prefix(const ParamSet& params, const std::string& prefix) {
  ParamSet out;
  for (const auto& [name, m] : params)
    if (name.starts_with(prefix)) out.emplace(name, m);
  return out;
}

Matrix glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(rows + cols)));
  Matrix m(rows, cols);
  for (double& v : m.data()) v = normal(rng);
  return m;
}

std::uint64_t param_digest(const ParamSet& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, m] : params) {
    feed(name.data(), name.size());
    const std::uint64_t shape[2] = {m.rows(), m.cols()};
    feed(shape, sizeof shape);
    feed(m.data().data(), m.size() * sizeof(double));
  }
  return h;
}

}  // namespace mvhgnn
