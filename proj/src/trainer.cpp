#include "mvhgnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "mvhgnn/archive.hpp"

namespace mvhgnn {

using json = nlohmann::ordered_json;

double cosine_lr(std::size_t epoch, std::size_t total, double lr_start, double lr_end) {
  if (total == 0) throw Error(ErrorCode::kArgument, "cosine schedule over zero epochs");
  const double t = static_cast<double>(epoch) / static_cast<double>(total);
  return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(std::numbers::pi * t));
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& s, double lr) {
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw Error(ErrorCode::kArgument, "gradient for unknown parameter '" + name + "'");
    Matrix& p = it->second;
    if (!p.same_shape(g)) throw Error(ErrorCode::kDimension, "gradient shape differs for '" + name + "'");
    require_finite(g, name.c_str());
    auto [mi, fresh_m] = s.m.try_emplace(name, p.rows(), p.cols());
    auto [vi, fresh_v] = s.v.try_emplace(name, p.rows(), p.cols());
    auto& m = mi->second.data();
    auto& v = vi->second.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g.data()[i];
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * gi;
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * gi * gi;
      p.data()[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + s.eps);
    }
  }
}

std::vector<Quadruplet> sample_quadruplets(const Dataset& data, std::span<const std::size_t> sketch_pool,
                                           std::span<const std::size_t> shape_pool, std::size_t count,
                                           std::mt19937_64& rng) {
  std::map<std::size_t, std::vector<std::size_t>> shapes_of;
  for (std::size_t i : shape_pool) shapes_of[data.shapes.at(i).label].push_back(i);
  auto has_other = [](std::span<const std::size_t> pool, auto label_of, std::size_t c) {
    return std::any_of(pool.begin(), pool.end(), [&](std::size_t i) { return label_of(i) != c; });
  };
  auto shape_label = [&](std::size_t i) { return data.shapes[i].label; };
  auto sketch_label = [&](std::size_t i) { return data.sketches.at(i).label; };

  std::vector<std::size_t> anchors;
  for (std::size_t i : sketch_pool) {
    const std::size_t c = sketch_label(i);
    if (shapes_of.contains(c) && has_other(shape_pool, shape_label, c) && has_other(sketch_pool, sketch_label, c)) {
      anchors.push_back(i);
    }
  }
  if (anchors.empty()) throw Error(ErrorCode::kArgument, "no quadruplet possible: pools need two classes with shapes and sketches");

  auto uniform = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  std::vector<Quadruplet> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Quadruplet q;
    q.anchor = anchors[uniform(anchors.size())];
    const std::size_t c = sketch_label(q.anchor);
    const auto& pos = shapes_of[c];
    q.positive = pos[uniform(pos.size())];
    do q.negative_shape = shape_pool[uniform(shape_pool.size())];
    while (shape_label(q.negative_shape) == c);
    do q.negative_sketch = sketch_pool[uniform(sketch_pool.size())];
    while (sketch_label(q.negative_sketch) == c);
    out.push_back(q);
  }
  return out;
}

std::vector<Quadruplet> sample_quadruplets(const Dataset& data, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> sketches(data.sketches.size()), shapes(data.shapes.size());
  std::iota(sketches.begin(), sketches.end(), std::size_t{0});
  std::iota(shapes.begin(), shapes.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  return sample_quadruplets(data, sketches, shapes, count, rng);
}

bool TrainConfig::two_stage() const {
  if (strategy == Strategy::kDefault) return mode == SplitMode::kCategory;
  return strategy == Strategy::kTwoStage;
}

void TrainConfig::validate() const {
  if (!(lr_start >= lr_end && lr_end > 0.0)) throw Error(ErrorCode::kConfig, "need lr_start >= lr_end > 0");
  if (epochs < 1) throw Error(ErrorCode::kConfig, "epochs must be at least 1");
  if (batch_size < 1) throw Error(ErrorCode::kConfig, "batch size must be at least 1");
  if (stage < 0 || stage > 2) throw Error(ErrorCode::kConfig, "stage must be 1 or 2");
  if (stage != 0 && !two_stage()) throw Error(ErrorCode::kConfig, "stages only exist in the two-stage strategy");
  if (losses.w_quad > 0.0 && quadruplets < 1) throw Error(ErrorCode::kConfig, "quadruplets per batch must be positive");
  losses.validate();
  encoder.validate();
  if (views != 0 && views != encoder.schedule[0]) {
    throw Error(ErrorCode::kConfig, "view count " + std::to_string(views) + " differs from the first schedule entry " +
                                        std::to_string(encoder.schedule[0]));
  }
}

TrainConfig desk_config() {
  TrainConfig c;
  c.epochs = 40;
  c.lr_start = 1e-2;
  c.lr_end = 1e-5;
  c.batch_size = 32;
  c.quadruplets = 64;
  c.encoder.feature_dim = 64;
  c.encoder.out_dim = 64;
  c.encoder.schedule = {12, 6, 3};
  c.encoder.norm = NormMode::kNode;
  return c;
}

std::size_t Model::sketch_dim() const { return params.at("sketch.skip").rows(); }
std::size_t Model::proto_dim() const { return params.at("proj.weight").cols(); }

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (salt * 0x9e3779b97f4a7c15ull);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::vector<std::size_t> class_rows(const Dataset& data) {
  std::vector<std::size_t> out = data.seen_classes();
  if (out.size() < 2) throw Error(ErrorCode::kConfig, "training needs at least two seen classes");
  return out;
}

// Maps dataset class ids onto the rows of a restricted bank/classifier.
struct LabelMap {
  std::vector<std::size_t> row_of;  // per dataset class, npos if absent
  PrototypeBank bank;

  LabelMap(const Dataset& data, const std::vector<std::size_t>& classes) {
    row_of.assign(data.classes.size(), static_cast<std::size_t>(-1));
    std::vector<std::string> names;
    for (std::size_t r = 0; r < classes.size(); ++r) {
      row_of[classes[r]] = r;
      names.push_back(data.classes[classes[r]]);
    }
    bank = data.prototypes.subset(names);
  }
  std::size_t operator()(std::size_t dataset_class) const {
    const std::size_t r = row_of.at(dataset_class);
    if (r == static_cast<std::size_t>(-1)) throw Error(ErrorCode::kProtocol, "training touched a class outside the training set");
    return r;
  }
};

Dataset view_subset(const Dataset& data, const EncoderConfig& encoder) {
  if (encoder.schedule[0] == data.rig.size()) return data;
  if (encoder.schedule[0] > data.rig.size()) {
    throw Error(ErrorCode::kConfig, "encoder wants " + std::to_string(encoder.schedule[0]) + " views, data has " +
                                        std::to_string(data.rig.size()));
  }
  return data.with_views(encoder.schedule[0]);
}

Matrix stack_sketches(const Dataset& data, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), data.sketch_dim());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto src = data.sketches.at(idx[r]).embedding.row(0);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Var encode_batch(Tape& tape, ParamBinder& binder, const Dataset& data, std::span<const std::size_t> idx,
                 const EncoderConfig& enc) {
  std::vector<Var> rows;
  rows.reserve(idx.size());
  for (std::size_t i : idx) rows.push_back(encode_shape(tape.constant(data.shapes.at(i).views), data.rig, binder, enc));
  return concat_rows(rows);
}

class EpochLog {
 public:
  EpochLog(StageReport& report, std::ostream* out) : report_(report), out_(out) {}

  void add(const Objective& o, std::size_t batch) {
    total_ += o.total.scalar() * static_cast<double>(batch);
    for (const auto& [name, v] : o.terms) {
      auto it = std::find_if(terms_.begin(), terms_.end(), [&](const auto& p) { return p.first == name; });
      if (it == terms_.end()) {
        terms_.emplace_back(name, 0.0);
        it = terms_.end() - 1;
      }
      it->second += v * static_cast<double>(batch);
    }
    count_ += batch;
  }

  void close(std::size_t epoch, double lr) {
    const double n = static_cast<double>(std::max<std::size_t>(count_, 1));
    for (auto& [name, v] : terms_) v /= n;
    report_.epoch_loss.push_back(total_ / n);
    report_.epoch_lr.push_back(lr);
    report_.epoch_terms.push_back(terms_);
    if (out_) {
      json j;
      j["stage"] = report_.stage;
      j["epoch"] = epoch;
      j["lr"] = lr;
      j["loss"] = total_ / n;
      for (const auto& [name, v] : terms_) j["terms"][name] = v;
      *out_ << j.dump() << "\n";
    }
    total_ = 0.0;
    count_ = 0;
    terms_.clear();
  }

 private:
  StageReport& report_;
  std::ostream* out_;
  double total_ = 0.0;
  std::size_t count_ = 0;
  std::vector<std::pair<std::string, double>> terms_;
};

std::vector<std::vector<std::size_t>> batches_of(std::vector<std::size_t> items, std::size_t size, std::mt19937_64& rng) {
  std::shuffle(items.begin(), items.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < items.size(); i += size) {
    out.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i),
                     items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), i + size)));
  }
  return out;
}

std::vector<std::size_t> train_items(const std::vector<std::size_t>& idx, const char* what) {
  if (idx.empty()) throw Error(ErrorCode::kConfig, std::string("empty training split of ") + what);
  return idx;
}

// Quadruplet term inputs; anchors and negative sketches go through the adapter.
QuadrupletVars quad_vars(const std::vector<Quadruplet>& quads, Var sketch_out, const std::vector<std::size_t>& sketch_batch,
                         Var shape_out, const std::vector<std::size_t>& shape_batch) {
  auto pos_in = [](const std::vector<std::size_t>& batch, std::size_t item) {
    return static_cast<std::size_t>(std::find(batch.begin(), batch.end(), item) - batch.begin());
  };
  std::vector<std::size_t> a, p, ns, nk;
  for (const auto& q : quads) {
    a.push_back(pos_in(sketch_batch, q.anchor));
    p.push_back(pos_in(shape_batch, q.positive));
    ns.push_back(pos_in(shape_batch, q.negative_shape));
    nk.push_back(pos_in(sketch_batch, q.negative_sketch));
  }
  return {gather_rows(sketch_out, a), gather_rows(shape_out, p), gather_rows(shape_out, ns), gather_rows(sketch_out, nk)};
}

}  // namespace

bool is_stage1_param(const std::string& name) {
  return name.starts_with("shape.") || name == "proj.weight" || name == "classifier.weight";
}

Model init_model(const Dataset& data, const TrainConfig& config) {
  config.validate();
  if (config.encoder.feature_dim != data.feature_dim()) {
    throw Error(ErrorCode::kConfig, "encoder feature width " + std::to_string(config.encoder.feature_dim) +
                                        " differs from the data's " + std::to_string(data.feature_dim()));
  }
  Model m;
  m.encoder = config.encoder;
  if (config.out_dim != 0) m.encoder.out_dim = config.out_dim;
  m.classes = data.classes;
  for (std::size_t c : class_rows(data)) m.classifier_classes.push_back(data.classes[c]);
  std::mt19937_64 rng(mix(config.seed, 1));
  m.params = merge(init_shape_encoder(m.encoder, rng), init_sketch_adapter(data.sketch_dim(), m.encoder.out_dim, rng));
  m.params["proj.weight"] = glorot(m.encoder.out_dim, data.prototypes.dim(), rng);
  m.params["classifier.weight"] = glorot(m.classifier_classes.size(), m.encoder.out_dim, rng);
  return m;
}

StageReport train_stage1(Model& model, const Dataset& full, const TrainConfig& config, std::ostream* log) {
  const Dataset data = view_subset(full, model.encoder);
  const LabelMap labels(data, class_rows(data));
  const auto shapes = train_items(data.shape_indices(Split::kTrain), "shapes");
  std::mt19937_64 rng(mix(config.seed, 11));
  AdamState adam;
  StageReport report;
  report.stage = "stage1";
  EpochLog epoch_log(report, log);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, config.epochs, config.lr_start, config.lr_end);
    for (const auto& batch : batches_of(shapes, config.batch_size, rng)) {
      Tape tape;
      ParamBinder binder(tape, model.params, is_stage1_param);
      Var emb = encode_batch(tape, binder, data, batch, model.encoder);
      std::vector<std::size_t> y;
      for (std::size_t i : batch) y.push_back(labels(data.shapes[i].label));
      const Objective o = stage1_objective(emb, matmul(emb, binder("proj.weight")), y, binder("classifier.weight"),
                                           labels.bank, config.losses);
      tape.backward(o.total);
      adam_step(model.params, binder.gradients(), adam, lr);
      epoch_log.add(o, batch.size());
    }
    epoch_log.close(epoch, lr);
  }
  return report;
}

StageReport train_stage2(Model& model, const Dataset& full, const TrainConfig& config, std::ostream* log) {
  const Dataset data = view_subset(full, model.encoder);
  const LabelMap labels(data, class_rows(data));
  const auto sketches = train_items(data.sketch_indices(Split::kTrain), "sketches");
  const auto shapes = train_items(data.shape_indices(Split::kTrain), "shapes");

  ParamSet frozen;
  for (const auto& [n, m] : model.params)
    if (is_stage1_param(n)) frozen.emplace(n, m);
  StageReport report;
  report.stage = "stage2";
  report.frozen_digest_before = param_digest(frozen);

  // The 3D side is frozen, so gallery embeddings are computed once.
  const Matrix shape_emb = embed_shapes(model, data, shapes);
  std::mt19937_64 rng(mix(config.seed, 12));
  AdamState adam;
  EpochLog epoch_log(report, log);
  auto trainable = [](const std::string& n) { return n.starts_with("sketch."); };
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, config.epochs, config.lr_start, config.lr_end);
    for (const auto& batch : batches_of(sketches, config.batch_size, rng)) {
      Tape tape;
      ParamBinder binder(tape, model.params, trainable);
      Var sk = sketch_adapter(tape.constant(stack_sketches(data, batch)), binder, model.encoder.leaky_slope);
      std::vector<std::size_t> y;
      for (std::size_t i : batch) y.push_back(labels(data.sketches[i].label));
      QuadrupletVars quads;
      LossSettings s = config.losses;
      if (s.w_quad > 0.0) {
        try {
          const auto q = sample_quadruplets(data, batch, shapes, config.quadruplets, rng);
          quads = quad_vars(q, sk, batch, tape.constant(shape_emb), shapes);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kArgument) throw;
          s.w_quad = 0.0;  // single-class batch: no negative sketch
        }
      }
      const Objective o = stage2_objective(quads, sk, matmul(sk, binder("proj.weight")), y, binder("classifier.weight"),
                                           labels.bank, s);
      tape.backward(o.total);
      adam_step(model.params, binder.gradients(), adam, lr);
      epoch_log.add(o, batch.size());
    }
    epoch_log.close(epoch, lr);
  }

  ParamSet after;
  for (const auto& [n, m] : model.params)
    if (is_stage1_param(n)) after.emplace(n, m);
  report.frozen_digest_after = param_digest(after);
  if (report.frozen_digest_after != report.frozen_digest_before) {
    throw Error(ErrorCode::kProtocol, "stage 2 modified frozen 3D parameters");
  }
  return report;
}

StageReport train_joint(Model& model, const Dataset& full, const TrainConfig& config, std::ostream* log) {
  const Dataset data = view_subset(full, model.encoder);
  const LabelMap labels(data, class_rows(data));
  const auto sketches = train_items(data.sketch_indices(Split::kTrain), "sketches");
  const auto shapes = train_items(data.shape_indices(Split::kTrain), "shapes");
  std::mt19937_64 rng(mix(config.seed, 13));
  AdamState adam;
  StageReport report;
  report.stage = "joint";
  EpochLog epoch_log(report, log);
  auto trainable = [](const std::string& n) { return n != "classifier.weight"; };
  // Shapes are drawn batch by batch from a reshuffled cycle so that every
  // step sees a fresh, uniformly chosen subset.
  std::vector<std::vector<std::size_t>> shape_batches;
  std::size_t next_shape_batch = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, config.epochs, config.lr_start, config.lr_end);
    for (const auto& batch : batches_of(sketches, config.batch_size, rng)) {
      if (next_shape_batch == shape_batches.size()) {
        shape_batches = batches_of(shapes, config.batch_size, rng);
        next_shape_batch = 0;
      }
      const auto& shape_batch = shape_batches[next_shape_batch++];
      Tape tape;
      ParamBinder binder(tape, model.params, trainable);
      Var sk = sketch_adapter(tape.constant(stack_sketches(data, batch)), binder, model.encoder.leaky_slope);
      Var sh = encode_batch(tape, binder, data, shape_batch, model.encoder);
      std::vector<std::size_t> ys, yg;
      for (std::size_t i : batch) ys.push_back(labels(data.sketches[i].label));
      for (std::size_t i : shape_batch) yg.push_back(labels(data.shapes[i].label));
      LossSettings s = config.losses;
      QuadrupletVars quads;
      if (s.w_quad > 0.0) {
        try {
          quads = quad_vars(sample_quadruplets(data, batch, shape_batch, config.quadruplets, rng), sk, batch, sh, shape_batch);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kArgument) throw;
          s.w_quad = 0.0;  // a tiny tail batch can lack negatives
        }
      }
      Var proj = binder("proj.weight");
      const Objective o = zeroshot_objective(quads, matmul(sh, proj), yg, matmul(sk, proj), ys, labels.bank, s);
      tape.backward(o.total);
      adam_step(model.params, binder.gradients(), adam, lr);
      epoch_log.add(o, batch.size());
    }
    epoch_log.close(epoch, lr);
  }
  return report;
}

Model train(const Dataset& data, const TrainConfig& config, std::ostream* log, std::vector<StageReport>* reports) {
  config.validate();
  if (!data.has_splits() || data.mode != config.mode) throw Error(ErrorCode::kConfig, "dataset splits do not match the training mode");
  const Dataset view_data = config.views == 0 ? data : view_subset(data, config.encoder);
  Model model = init_model(view_data, config);
  auto keep = [reports](StageReport r) {
    if (reports) reports->push_back(std::move(r));
  };
  if (config.two_stage()) {
    if (config.stage != 2) keep(train_stage1(model, view_data, config, log));
    if (config.stage != 1) keep(train_stage2(model, view_data, config, log));
  } else {
    keep(train_joint(model, view_data, config, log));
  }
  return model;
}

Matrix embed_shapes(const Model& model, const Dataset& full, std::span<const std::size_t> indices) {
  const Dataset data = view_subset(full, model.encoder);
  Matrix out(indices.size(), model.encoder.out_dim);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const ShapeEmbedding e = encode_shape(ViewSet{data.shapes.at(indices[r]).views, data.rig}, model.params, model.encoder);
    std::copy(e.vector.data().begin(), e.vector.data().end(), out.row(r).begin());
  }
  return out;
}

Matrix embed_sketches(const Model& model, const Matrix& sketches) {
  return sketch_adapter(sketches, model.params, model.encoder.leaky_slope);
}

Matrix embed_sketches(const Model& model, const Dataset& data, std::span<const std::size_t> indices) {
  return embed_sketches(model, stack_sketches(data, indices));
}

RetrievalRun retrieval_run(const Model& model, const Dataset& data) {
  if (!data.has_splits()) throw Error(ErrorCode::kProtocol, "dataset has no splits");
  std::vector<std::size_t> queries = data.sketch_indices(Split::kTest);
  std::vector<std::size_t> gallery;
  if (data.mode == SplitMode::kCategory) {
    gallery = data.shape_indices(Split::kTest);
  } else {
    gallery.resize(data.shapes.size());
    std::iota(gallery.begin(), gallery.end(), std::size_t{0});
  }
  RetrievalRun run;
  run.queries = embed_sketches(model, data, queries);
  run.gallery = embed_shapes(model, data, gallery);
  for (std::size_t i : queries) run.query_labels.push_back(data.sketches[i].label);
  for (std::size_t i : gallery) run.gallery_labels.push_back(data.shapes[i].label);
  return run;
}

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  return checkpoint.string() + ".manifest.json";
}

namespace {

json encoder_json(const EncoderConfig& e) {
  json j;
  j["feature_dim"] = e.feature_dim;
  j["out_dim"] = e.out_dim;
  j["schedule"] = e.schedule;
  j["k0"] = e.k0;
  j["leaky_slope"] = e.leaky_slope;
  j["norm_eps"] = e.norm_eps;
  j["pooling"] = e.pooling == Pooling::kMax ? "max" : "mean";
  j["local_gcn"] = e.local_gcn;
  j["global_attention"] = e.global_attention;
  j["gcn_activation"] = e.gcn_activation == GcnActivation::kIdentity ? "identity" : "norm_act";
  j["norm"] = e.norm == NormMode::kNode ? "node" : "shape";
  return j;
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig e;
  e.feature_dim = j.at("feature_dim").get<std::size_t>();
  e.out_dim = j.at("out_dim").get<std::size_t>();
  e.schedule = j.at("schedule").get<std::vector<std::size_t>>();
  e.k0 = j.at("k0").get<std::size_t>();
  e.leaky_slope = j.at("leaky_slope").get<double>();
  e.norm_eps = j.at("norm_eps").get<double>();
  const auto pooling = j.at("pooling").get<std::string>();
  if (pooling != "max" && pooling != "mean") throw Error(ErrorCode::kShapeMismatch, "unknown pooling '" + pooling + "'");
  e.pooling = pooling == "max" ? Pooling::kMax : Pooling::kMean;
  e.local_gcn = j.at("local_gcn").get<bool>();
  e.global_attention = j.at("global_attention").get<bool>();
  const auto act = j.at("gcn_activation").get<std::string>();
  if (act != "identity" && act != "norm_act") throw Error(ErrorCode::kShapeMismatch, "unknown gcn activation '" + act + "'");
  e.gcn_activation = act == "identity" ? GcnActivation::kIdentity : GcnActivation::kNormActivation;
  const auto norm = j.at("norm").get<std::string>();
  if (norm != "node" && norm != "shape") throw Error(ErrorCode::kShapeMismatch, "unknown norm mode '" + norm + "'");
  e.norm = norm == "node" ? NormMode::kNode : NormMode::kShape;
  e.validate();
  return e;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  FeatureArchive a;
  json tensors = json::object();
  for (const auto& [name, m] : model.params) {
    a.add(name, m);
    tensors[name] = {m.rows(), m.cols()};
  }
  write_archive(path, a);
  json j;
  j["format"] = "mvhgnn-checkpoint";
  j["version"] = 1;
  j["encoder"] = encoder_json(model.encoder);
  j["classes"] = model.classes;
  j["classifier_classes"] = model.classifier_classes;
  j["tensors"] = tensors;
  std::ofstream out(manifest_path(path), std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + manifest_path(path).string());
  out << j.dump(1) << "\n";
}

Model load_checkpoint(const std::filesystem::path& path) {
  const FeatureArchive a = read_archive(path);
  std::ifstream in(manifest_path(path));
  if (!in) throw Error(ErrorCode::kIo, "missing checkpoint manifest " + manifest_path(path).string());
  Model m;
  try {
    json j;
    in >> j;
    if (j.at("format") != "mvhgnn-checkpoint" || j.at("version") != 1) {
      throw Error(ErrorCode::kBadMagic, "not an mvhgnn checkpoint manifest");
    }
    m.encoder = encoder_from_json(j.at("encoder"));
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.classifier_classes = j.at("classifier_classes").get<std::vector<std::string>>();
    const json& tensors = j.at("tensors");
    if (tensors.size() != a.tensors.size()) throw Error(ErrorCode::kShapeMismatch, "manifest and checkpoint tensor counts differ");
    for (const auto& [name, t] : a.tensors) {
      if (!tensors.contains(name)) throw Error(ErrorCode::kShapeMismatch, "tensor '" + name + "' missing from manifest");
      const auto dims = tensors.at(name).get<std::vector<std::uint32_t>>();
      if (dims != t.dims) throw Error(ErrorCode::kShapeMismatch, "tensor '" + name + "' shape differs from manifest");
      m.params.emplace(name, t.as_matrix());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, manifest_path(path).string() + ": " + e.what());
  }
  for (const char* required : {"proj.weight", "classifier.weight", "sketch.skip", "shape.head.w2"}) {
    if (!m.params.contains(required)) throw Error(ErrorCode::kShapeMismatch, std::string("checkpoint lacks '") + required + "'");
  }
  return m;
}

}  // namespace mvhgnn
