#include "mvhgnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mvhgnn/encoder.hpp"
#include "mvhgnn/losses.hpp"

namespace mvhgnn {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = u(rng);
  return m;
}

std::vector<Matrix> analytic_gradients(const ScalarFunction& f, const std::vector<Matrix>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const Matrix& m : inputs) vars.push_back(tape.variable(m));
  Var out = f(tape, vars);
  tape.backward(out);
  std::vector<Matrix> grads;
  for (Var v : vars) grads.push_back(v.grad());
  return grads;
}

namespace {

double evaluate(const ScalarFunction& f, const std::vector<Matrix>& inputs) {
  Tape tape(false);
  std::vector<Var> vars;
  for (const Matrix& m : inputs) vars.push_back(tape.constant(m));
  return f(tape, vars).scalar();
}

}  // namespace

std::vector<Matrix> numeric_gradients(const ScalarFunction& f, const std::vector<Matrix>& inputs, double h) {
  std::vector<Matrix> work = inputs;
  std::vector<Matrix> grads;
  for (std::size_t k = 0; k < work.size(); ++k) {
    Matrix g(work[k].rows(), work[k].cols());
    for (std::size_t i = 0; i < work[k].size(); ++i) {
      const double x = work[k].data()[i];
      work[k].data()[i] = x + h;
      const double up = evaluate(f, work);
      work[k].data()[i] = x - h;
      const double down = evaluate(f, work);
      work[k].data()[i] = x;
      g.data()[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double gradient_error(const ScalarFunction& f, const std::vector<Matrix>& inputs, double h) {
  const auto analytic = analytic_gradients(f, inputs);
  const auto numeric = numeric_gradients(f, inputs, h);
  // A tensor whose gradient is structurally ~0 (e.g. a bias that only shifts
  // every softmax logit equally) would otherwise be judged on pure
  // finite-difference roundoff, so the denominator is floored at a small
  // fraction of the largest gradient anywhere in the function.
  double global = 0.0;
  for (const Matrix& n : numeric)
    for (double v : n.data()) global = std::max(global, std::abs(v));
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    double scale = 0.0;
    for (double v : numeric[k].data()) scale = std::max(scale, std::abs(v));
    const double denom = std::max({scale, 1e-3 * global, 1e-8});
    worst = std::max(worst, max_abs_diff(analytic[k], numeric[k]) / denom);
  }
  return worst;
}

namespace {

struct Case {
  std::string name;
  // Draws inputs and the function for one seed.
  std::function<std::pair<ScalarFunction, std::vector<Matrix>>(std::mt19937_64&)> make;
};

// Projects a matrix-valued op onto a scalar with fixed random weights so the
// full Jacobian is exercised, not just its column sums.
ScalarFunction weighted(std::function<Var(Tape&, std::span<const Var>)> op, Matrix weights) {
  return [op = std::move(op), weights = std::move(weights)](Tape& t, std::span<const Var> in) {
    Var y = op(t, in);
    return sum(mul(y, t.constant(weights)));
  };
}

template <typename Op>
Case unary_case(std::string name, std::size_t r, std::size_t c, Op op, double lo = -2.0, double hi = 2.0,
                double min_abs = 0.0) {
  return {name, [=](std::mt19937_64& rng) {
            Matrix x = random_matrix(r, c, rng, lo, hi);
            for (double& v : x.data())
              if (std::abs(v) < min_abs) v = v < 0.0 ? -min_abs : min_abs;
            Tape probe(false);
            const Matrix out = op(probe, std::vector<Var>{probe.constant(x)}[0]).value();
            Matrix w = random_matrix(out.rows(), out.cols(), rng, -1.0, 1.0);
            return std::make_pair(weighted([op](Tape&, std::span<const Var> in) { return op(*in[0].tape(), in[0]); }, w),
                                  std::vector<Matrix>{x});
          }};
}

template <typename Op>
Case binary_case(std::string name, std::size_t ar, std::size_t ac, std::size_t br, std::size_t bc, Op op) {
  return {name, [=](std::mt19937_64& rng) {
            Matrix a = random_matrix(ar, ac, rng);
            Matrix b = random_matrix(br, bc, rng);
            Tape probe(false);
            const Matrix out = op(probe.constant(a), probe.constant(b)).value();
            Matrix w = random_matrix(out.rows(), out.cols(), rng, -1.0, 1.0);
            return std::make_pair(weighted([op](Tape&, std::span<const Var> in) { return op(in[0], in[1]); }, w),
                                  std::vector<Matrix>{a, b});
          }};
}

std::vector<Case> core_cases() {
  std::vector<Case> cases;
  cases.push_back(binary_case("matmul", 4, 3, 3, 2, [](Var a, Var b) { return matmul(a, b); }));
  cases.push_back(binary_case("add", 3, 4, 3, 4, [](Var a, Var b) { return add(a, b); }));
  cases.push_back(binary_case("add_row_broadcast", 3, 4, 1, 4, [](Var a, Var b) { return add(a, b); }));
  cases.push_back(binary_case("add_col_broadcast", 3, 4, 3, 1, [](Var a, Var b) { return add(a, b); }));
  cases.push_back(binary_case("sub_scalar_broadcast", 3, 4, 1, 1, [](Var a, Var b) { return sub(a, b); }));
  cases.push_back(binary_case("mul", 3, 4, 3, 4, [](Var a, Var b) { return mul(a, b); }));
  cases.push_back(binary_case("mul_row_broadcast", 3, 4, 1, 4, [](Var a, Var b) { return mul(a, b); }));
  cases.push_back(unary_case("scale", 3, 4, [](Tape&, Var x) { return scale(x, -1.7); }));
  cases.push_back(unary_case("add_scalar", 3, 4, [](Tape&, Var x) { return add_scalar(x, 0.3); }));
  cases.push_back(unary_case("transpose", 3, 4, [](Tape&, Var x) { return transpose(x); }));
  cases.push_back(unary_case("exp", 3, 4, [](Tape&, Var x) { return exp(x); }));
  cases.push_back(unary_case("log", 3, 4, [](Tape&, Var x) { return log(x); }, 0.5, 2.0));
  cases.push_back(unary_case("square", 3, 4, [](Tape&, Var x) { return square(x); }));
  cases.push_back(unary_case("sum", 3, 4, [](Tape&, Var x) { return sum(x); }));
  cases.push_back(unary_case("mean", 3, 4, [](Tape&, Var x) { return mean(x); }));
  cases.push_back(unary_case("row_sum", 3, 4, [](Tape&, Var x) { return row_sum(x); }));
  cases.push_back(unary_case("softmax_rows", 3, 5, [](Tape&, Var x) { return softmax_rows(x); }));
  cases.push_back(unary_case("masked_softmax_rows", 4, 4, [](Tape&, Var x) {
    return masked_softmax_rows(x, Matrix{{1, 1, 0, 0}, {0, 1, 1, 1}, {1, 0, 1, 0}, {0, 0, 0, 1}});
  }));
  cases.push_back(unary_case("log_softmax_rows", 3, 5, [](Tape&, Var x) { return log_softmax_rows(x); }));
  cases.push_back(unary_case("row_l2_normalize", 3, 4, [](Tape&, Var x) { return row_l2_normalize(x); }));
  cases.push_back(unary_case("leaky_relu", 3, 4, [](Tape&, Var x) { return leaky_relu(x, 0.2); }, -2, 2, 1e-3));
  cases.push_back(unary_case("relu", 3, 4, [](Tape&, Var x) { return relu(x); }, -2, 2, 1e-3));
  cases.push_back({"feature_norm", [](std::mt19937_64& rng) {
                     std::vector<Matrix> in{random_matrix(5, 4, rng), random_matrix(1, 4, rng),
                                            random_matrix(1, 4, rng)};
                     Matrix w = random_matrix(5, 4, rng, -1, 1);
                     return std::make_pair(
                         weighted([](Tape&, std::span<const Var> v) { return feature_norm(v[0], v[1], v[2]); }, w),
                         in);
                   }});
  cases.push_back({"max_over_rows", [](std::mt19937_64& rng) {
                     // Distinct entries per column keep the argmax away from ties.
                     Matrix x = random_matrix(4, 3, rng);
                     for (std::size_t c = 0; c < 3; ++c)
                       for (std::size_t r = 0; r < 4; ++r) x(r, c) += 0.5 * static_cast<double>((r * 7 + c * 3) % 4);
                     Matrix w = random_matrix(1, 3, rng, -1, 1);
                     return std::make_pair(
                         weighted([](Tape&, std::span<const Var> v) { return max_over_rows(v[0]); }, w),
                         std::vector<Matrix>{x});
                   }});
  cases.push_back(unary_case("mean_over_rows", 4, 3, [](Tape&, Var x) { return mean_over_rows(x); }));
  cases.push_back(binary_case("concat_cols", 3, 2, 3, 4, [](Var a, Var b) {
    const Var parts[] = {a, b, a};
    return concat_cols(parts);
  }));
  cases.push_back(binary_case("concat_rows", 2, 3, 4, 3, [](Var a, Var b) {
    const Var parts[] = {b, a};
    return concat_rows(parts);
  }));
  cases.push_back(unary_case("gather_rows", 4, 3, [](Tape&, Var x) {
    const std::size_t idx[] = {2, 0, 2, 3};
    return gather_rows(x, idx);
  }));
  cases.push_back(unary_case("pick", 3, 4, [](Tape&, Var x) {
    const std::size_t idx[] = {1, 3, 0};
    return pick(x, idx);
  }));
  // One node feeding two consumers must accumulate both contributions.
  cases.push_back(unary_case("shared_consumer_dag", 3, 3, [](Tape&, Var x) {
    return add(matmul(x, transpose(x)), exp(x));
  }));
  return cases;
}

constexpr std::size_t kToyDim = 8;
constexpr std::size_t kToyViews = 6;

EncoderConfig toy_encoder_config() {
  EncoderConfig c;
  c.feature_dim = kToyDim;
  c.out_dim = kToyDim;
  c.schedule = {kToyViews, 3};
  c.k0 = 4;
  return c;
}

// Runs `body` with every parameter in `names` injected from the inputs that
// follow the leading `lead` non-parameter inputs.
ScalarFunction with_params(std::vector<std::string> names, std::size_t lead,
                           std::function<Var(std::span<const Var>, ParamBinder&)> body) {
  return [names = std::move(names), lead, body = std::move(body)](Tape& t, std::span<const Var> in) {
    ParamSet empty;
    ParamBinder binder(t, empty);
    for (std::size_t i = 0; i < names.size(); ++i) binder.inject(names[i], in[lead + i]);
    return body(in.subspan(0, lead), binder);
  };
}

Case encoder_case(std::string name, std::vector<std::string> param_filter,
                  std::function<Var(Var features, ParamBinder&, const CameraRig&)> body) {
  return {name, [param_filter, body](std::mt19937_64& rng) {
            const EncoderConfig config = toy_encoder_config();
            ParamSet params = init_shape_encoder(config, rng);
            for (auto& [n, m] : params)
              if (n.find("norm.") != std::string::npos) m = random_matrix(m.rows(), m.cols(), rng, 0.5, 1.5);
            std::vector<std::string> names;
            std::vector<Matrix> inputs{random_matrix(kToyViews, kToyDim, rng, -1.0, 1.0)};
            for (const auto& [n, m] : params) {
              const bool keep = param_filter.empty() || std::any_of(param_filter.begin(), param_filter.end(),
                                                                    [&](const std::string& f) { return n.find(f) != std::string::npos; });
              if (!keep) continue;
              names.push_back(n);
              inputs.push_back(m);
            }
            const CameraRig rig = build_camera_rig(kToyViews);
            Tape probe(false);
            ParamBinder pb(probe, params, [](const std::string&) { return false; });
            const Matrix out = body(probe.constant(inputs[0]), pb, rig).value();
            Matrix w = random_matrix(out.rows(), out.cols(), rng, -1, 1);
            // Parameters not under test stay fixed at their drawn values.
            auto fn = [names, params, body, rig, w](Tape& t, std::span<const Var> in) {
              ParamBinder binder(t, params, [](const std::string&) { return false; });
              for (std::size_t i = 0; i < names.size(); ++i) binder.inject(names[i], in[1 + i]);
              return sum(mul(body(in[0], binder, rig), t.constant(w)));
            };
            return std::make_pair(ScalarFunction(fn), inputs);
          }};
}

std::vector<Case> encoder_cases() {
  const EncoderConfig config = toy_encoder_config();
  std::vector<Case> cases;
  cases.push_back(encoder_case("local_attention_weights", {"__none__"}, [](Var f, ParamBinder&, const CameraRig& rig) {
    return local_attention_weights(f, knn_edges(rig, 2));
  }));
  cases.push_back(encoder_case("local_gcn", {"level0.gcn", "level0.norm"}, [config](Var f, ParamBinder& p, const CameraRig& rig) {
    return local_gcn(f, knn_edges(rig, 2), p, 0, config);
  }));
  EncoderConfig node = config;
  node.norm = NormMode::kNode;
  cases.push_back(encoder_case("local_gcn_node_norm", {"level0.gcn", "level0.norm"}, [node](Var f, ParamBinder& p, const CameraRig& rig) {
    return local_gcn(f, knn_edges(rig, 2), p, 0, node);
  }));
  cases.push_back(encoder_case("global_attention", {"level0.attn"}, [](Var f, ParamBinder& p, const CameraRig&) {
    return global_attention(f, p, 0);
  }));
  cases.push_back(encoder_case("view_selector", {"level0.select"}, [config](Var f, ParamBinder& p, const CameraRig& rig) {
    return view_selector(f, rig, p, 0, 3, config).prototypes;
  }));
  cases.push_back(encoder_case("encode_shape", {}, [config](Var f, ParamBinder& p, const CameraRig& rig) {
    return encode_shape(f, rig, p, config);
  }));
  cases.push_back(encoder_case("encode_shape_node_norm", {}, [node](Var f, ParamBinder& p, const CameraRig& rig) {
    return encode_shape(f, rig, p, node);
  }));
  cases.push_back({"sketch_adapter", [](std::mt19937_64& rng) {
                     ParamSet params = init_sketch_adapter(6, kToyDim, rng);
                     for (auto& [n, m] : params) m = random_matrix(m.rows(), m.cols(), rng, -1, 1);
                     std::vector<std::string> names;
                     std::vector<Matrix> inputs{random_matrix(3, 6, rng)};
                     for (const auto& [n, m] : params) {
                       names.push_back(n);
                       inputs.push_back(m);
                     }
                     Matrix w = random_matrix(3, kToyDim, rng, -1, 1);
                     auto fn = with_params(names, 1, [w](std::span<const Var> lead, ParamBinder& p) {
                       return sum(mul(sketch_adapter(lead[0], p), p.tape().constant(w)));
                     });
                     return std::make_pair(fn, inputs);
                   }});
  return cases;
}

PrototypeBank random_bank(std::size_t classes, std::size_t dim, std::mt19937_64& rng) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < classes; ++i) labels.push_back("c" + std::to_string(i));
  return PrototypeBank(labels, random_matrix(classes, dim, rng, -1, 1));
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> u(0, classes - 1);
  std::vector<std::size_t> out(n);
  for (auto& y : out) y = u(rng);
  return out;
}

// Hinge arguments of the quadruplet loss for each row, from forward values.
std::vector<double> hinge_arguments(const std::vector<Matrix>& in, double mu) {
  Tape t(false);
  auto norm = [&t](const Matrix& m) { return row_l2_normalize(t.constant(m)); };
  Var a = norm(in[0]);
  auto dist = [&](const Matrix& m) { return row_sum(square(sub(a, norm(m)))).value(); };
  const Matrix dp = dist(in[1]), dn = dist(in[2]), ds = dist(in[3]);
  std::vector<double> out;
  for (std::size_t r = 0; r < dp.rows(); ++r) {
    out.push_back(mu + dp(r, 0) - dn(r, 0));
    out.push_back(mu + dp(r, 0) - ds(r, 0));
  }
  return out;
}

std::vector<Case> loss_cases() {
  std::vector<Case> cases;
  cases.push_back({"semantic_loss", [](std::mt19937_64& rng) {
                     auto bank = random_bank(5, 6, rng);
                     auto labels = random_labels(4, 5, rng);
                     ScalarFunction fn = [bank, labels](Tape&, std::span<const Var> in) {
                       return semantic_loss(in[0], bank, labels, 0.07);
                     };
                     return std::make_pair(fn, std::vector<Matrix>{random_matrix(4, 6, rng)});
                   }});
  cases.push_back({"am_softmax_loss", [](std::mt19937_64& rng) {
                     auto labels = random_labels(4, 3, rng);
                     ScalarFunction fn = [labels](Tape&, std::span<const Var> in) {
                       return am_softmax_loss(in[0], labels, in[1], 15.0, 0.3);
                     };
                     return std::make_pair(fn, std::vector<Matrix>{random_matrix(4, 6, rng), random_matrix(3, 6, rng)});
                   }});
  cases.push_back({"quadruplet_loss", [](std::mt19937_64& rng) {
                     std::vector<Matrix> in;
                     // Redraw until every hinge argument is clear of its kink.
                     do {
                       in = {random_matrix(4, 6, rng), random_matrix(4, 6, rng), random_matrix(4, 6, rng),
                             random_matrix(4, 6, rng)};
                     } while (std::ranges::any_of(hinge_arguments(in, 1.0), [](double h) { return std::abs(h) < 1e-3; }));
                     ScalarFunction fn = [](Tape&, std::span<const Var> in) {
                       return quadruplet_loss({in[0], in[1], in[2], in[3]}, 1.0);
                     };
                     return std::make_pair(fn, in);
                   }});
  cases.push_back({"stage1_objective", [](std::mt19937_64& rng) {
                     auto bank = random_bank(3, 5, rng);
                     auto labels = random_labels(4, 3, rng);
                     ScalarFunction fn = [bank, labels](Tape&, std::span<const Var> in) {
                       return stage1_objective(in[0], matmul(in[0], in[2]), labels, in[1], bank, LossSettings{}).total;
                     };
                     return std::make_pair(fn, std::vector<Matrix>{random_matrix(4, 6, rng), random_matrix(3, 6, rng),
                                                                    random_matrix(6, 5, rng)});
                   }});
  auto quad_inputs = [](std::mt19937_64& rng) {
    std::vector<Matrix> in;
    do {
      in = {random_matrix(4, 6, rng), random_matrix(4, 6, rng), random_matrix(4, 6, rng), random_matrix(4, 6, rng)};
    } while (std::ranges::any_of(hinge_arguments(in, 1.0), [](double h) { return std::abs(h) < 1e-3; }));
    return in;
  };
  cases.push_back({"stage2_objective", [quad_inputs](std::mt19937_64& rng) {
                     auto bank = random_bank(3, 5, rng);
                     auto labels = random_labels(4, 3, rng);
                     std::vector<Matrix> in = quad_inputs(rng);
                     in.push_back(random_matrix(3, 6, rng));  // frozen classifier
                     in.push_back(random_matrix(6, 5, rng));  // projection
                     ScalarFunction fn = [bank, labels](Tape&, std::span<const Var> v) {
                       return stage2_objective({v[0], v[1], v[2], v[3]}, v[0], matmul(v[0], v[5]), labels, v[4], bank,
                                               LossSettings{})
                           .total;
                     };
                     return std::make_pair(fn, in);
                   }});
  cases.push_back({"zeroshot_objective", [quad_inputs](std::mt19937_64& rng) {
                     auto bank = random_bank(3, 5, rng);
                     auto labels = random_labels(4, 3, rng);
                     std::vector<Matrix> in = quad_inputs(rng);
                     in.push_back(random_matrix(6, 5, rng));
                     ScalarFunction fn = [bank, labels](Tape&, std::span<const Var> v) {
                       return zeroshot_objective({v[0], v[1], v[2], v[3]}, matmul(v[1], v[4]), labels,
                                                 matmul(v[0], v[4]), labels, bank, LossSettings{})
                           .total;
                     };
                     return std::make_pair(fn, in);
                   }});
  return cases;
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(const std::string& module, int seeds, double tolerance) {
  std::vector<Case> cases;
  auto append = [&cases](std::vector<Case> more) { cases.insert(cases.end(), more.begin(), more.end()); };
  if (module == "all" || module == "core") append(core_cases());
  if (module == "all" || module == "encoder") append(encoder_cases());
  if (module == "all" || module == "losses") append(loss_cases());
  if (cases.empty()) throw Error(ErrorCode::kArgument, "unknown gradcheck module '" + module + "'");

  std::vector<GradCheckCase> out;
  for (const Case& c : cases) {
    GradCheckCase result{c.name, 0.0, seeds, true};
    for (int s = 0; s < seeds; ++s) {
      std::mt19937_64 rng(0x9e3779b97f4a7c15ull ^ (static_cast<std::uint64_t>(s) * 7919 + std::hash<std::string>{}(c.name)));
      auto [fn, inputs] = c.make(rng);
      result.worst_error = std::max(result.worst_error, gradient_error(fn, inputs));
    }
    result.passed = result.worst_error < tolerance;
    out.push_back(result);
  }
  return out;
}

}  // namespace mvhgnn
