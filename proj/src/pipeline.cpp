#include "mvhgnn/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace mvhgnn {

using json = nlohmann::ordered_json;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

std::vector<std::string> default_unseen(const Dataset& d) {
  if (d.classes.size() < 4) throw Error(ErrorCode::kConfig, "zero-shot mode needs at least four classes");
  return {d.classes[d.classes.size() - 2], d.classes.back()};
}

std::vector<std::size_t> as_rows(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) throw Error(ErrorCode::kShapeMismatch, std::string("splits file lacks '") + key + "'");
  return j.at(key).get<std::vector<std::size_t>>();
}

}  // namespace

std::string splits_json(const Dataset& data) {
  if (!data.has_splits()) throw Error(ErrorCode::kProtocol, "dataset has no splits");
  json j;
  j["mode"] = data.mode == SplitMode::kCategory ? "category" : "zeroshot";
  std::vector<std::string> unseen;
  for (std::size_t c = 0; c < data.classes.size(); ++c)
    if (!data.seen[c]) unseen.push_back(data.classes[c]);
  j["unseen"] = unseen;
  j["query"] = data.sketch_indices(Split::kTest);
  std::vector<std::size_t> gallery;
  if (data.mode == SplitMode::kCategory) {
    gallery = data.shape_indices(Split::kTest);
  } else {
    gallery.resize(data.shapes.size());
    for (std::size_t i = 0; i < gallery.size(); ++i) gallery[i] = i;
  }
  j["gallery"] = gallery;
  j["train_shapes"] = data.shape_indices(Split::kTrain);
  j["train_sketches"] = data.sketch_indices(Split::kTrain);
  return j.dump(1) + "\n";
}

SplitRoles read_splits(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kShapeMismatch, "malformed splits file: " + std::string(e.what()));
  }
  return {as_rows(j, "query"), as_rows(j, "gallery")};
}

Model run_training(const RunConfig& cfg) {
  cfg.validate();
  Dataset data = load_dataset(cfg.data);
  std::vector<std::string> unseen = cfg.unseen;
  if (cfg.train.mode == SplitMode::kZeroShot && unseen.empty()) unseen = default_unseen(data);
  data = make_splits(std::move(data), cfg.train.mode, cfg.train.seed, unseen);

  TrainConfig t = cfg.train;
  t.encoder.feature_dim = data.feature_dim();
  t.validate();

  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + cfg.out.string() + ": " + ec.message());
  // Stage 2 continues the stage-1 log.
  std::ofstream log(cfg.out / "train_log.jsonl", t.stage == 2 ? std::ios::app : std::ios::trunc);
  if (!log) throw Error(ErrorCode::kIo, "cannot write " + (cfg.out / "train_log.jsonl").string());

  Model model;
  if (t.stage == 2) {
    model = load_checkpoint(cfg.init);
    if (model.encoder.feature_dim != data.feature_dim()) {
      throw Error(ErrorCode::kConfig, "checkpoint feature width differs from the data");
    }
    if (model.classes != data.classes) throw Error(ErrorCode::kConfig, "checkpoint classes differ from the data");
    train_stage2(model, data, t, &log);
  } else {
    model = train(data, t, &log);
  }
  save_checkpoint(cfg.out / "model.mvhf", model);
  write_text(cfg.out / "splits.json", splits_json(data));
  write_text(cfg.out / "config.txt", cfg.to_text());
  return model;
}

FeatureArchive encode_items(const Model& model, const FeatureArchive& in,
                            const std::optional<std::vector<std::size_t>>& rows) {
  FeatureArchive out;
  std::vector<std::string> labels;
  auto pick = [&rows](std::size_t n) {
    std::vector<std::size_t> idx;
    if (rows) {
      for (std::size_t r : *rows)
        if (r >= n) throw Error(ErrorCode::kShapeMismatch, "split row " + std::to_string(r) + " outside the archive");
      return *rows;
    }
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  };

  if (in.has("views")) {
    const Tensor& views = in.tensor("views");
    if (views.dims.size() != 3) throw Error(ErrorCode::kShapeMismatch, "'views' must be N x V x d");
    if (!in.has("rig")) throw Error(ErrorCode::kShapeMismatch, "shape archive lacks 'rig'");
    const Matrix rig_m = in.tensor("rig").as_matrix();
    const std::size_t v = model.encoder.schedule.front();
    if (rig_m.rows() != views.dims[1] || rig_m.cols() != 3) throw Error(ErrorCode::kShapeMismatch, "'rig' must be V x 3");
    if (views.dims[1] < v) throw Error(ErrorCode::kConfig, "model expects " + std::to_string(v) + " views");
    if (views.dims[2] != model.encoder.feature_dim) throw Error(ErrorCode::kConfig, "view feature width differs from the model");
    std::vector<Vec3> positions;
    for (std::size_t r = 0; r < v; ++r) positions.push_back({rig_m(r, 0), rig_m(r, 1), rig_m(r, 2)});
    const CameraRig rig = CameraRig::normalized(positions);
    const auto all_labels = in.item_labels("views");
    const std::size_t per = static_cast<std::size_t>(views.dims[1]) * views.dims[2];
    const auto idx = pick(views.dims[0]);
    Matrix emb(idx.size(), model.encoder.out_dim);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      Matrix m(v, views.dims[2]);
      std::copy_n(views.values.begin() + static_cast<std::ptrdiff_t>(idx[k] * per), v * views.dims[2], m.data().begin());
      const ShapeEmbedding e = encode_shape(ViewSet{m, rig}, model.params, model.encoder);
      std::copy(e.vector.data().begin(), e.vector.data().end(), emb.row(k).begin());
      labels.push_back(all_labels[idx[k]]);
    }
    out.add("embeddings", emb);
  } else if (in.has("embeddings")) {
    const Matrix src = in.tensor("embeddings").as_matrix();
    if (src.cols() != model.sketch_dim()) throw Error(ErrorCode::kConfig, "sketch width differs from the model");
    const auto all_labels = in.item_labels("embeddings");
    const auto idx = pick(src.rows());
    out.add("embeddings", embed_sketches(model, gather_rows(src, idx)));
    for (std::size_t i : idx) labels.push_back(all_labels[i]);
  } else {
    throw Error(ErrorCode::kShapeMismatch, "archive has neither 'views' nor 'embeddings'");
  }
  out.set_item_labels(labels);
  return out;
}

LabeledRun load_retrieval_run(const FeatureArchive& queries, const FeatureArchive& gallery) {
  const auto ql = queries.item_labels("embeddings");
  const auto gl = gallery.item_labels("embeddings");
  std::set<std::string> names(ql.begin(), ql.end());
  names.insert(gl.begin(), gl.end());
  LabeledRun out;
  out.class_names.assign(names.begin(), names.end());
  std::map<std::string, std::size_t> id;
  for (std::size_t i = 0; i < out.class_names.size(); ++i) id[out.class_names[i]] = i;
  out.run.queries = queries.tensor("embeddings").as_matrix();
  out.run.gallery = gallery.tensor("embeddings").as_matrix();
  for (const auto& l : ql) out.run.query_labels.push_back(id[l]);
  for (const auto& l : gl) out.run.gallery_labels.push_back(id[l]);
  out.run.validate();
  return out;
}

std::string ranked_lists_json(const LabeledRun& lr, std::size_t top) {
  const RetrievalRun& run = lr.run;
  const auto ranks = rank_gallery(run);
  const Matrix q = row_normalized(run.queries);
  const Matrix g = row_normalized(run.gallery);
  json out = json::array();
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    json item;
    item["query"] = i;
    item["label"] = lr.class_names[run.query_labels[i]];
    json results = json::array();
    for (std::size_t k = 0; k < std::min(top, ranks[i].size()); ++k) {
      const std::size_t j = ranks[i][k];
      results.push_back({{"index", j}, {"label", lr.class_names[run.gallery_labels[j]]}, {"score", dot(q.row(i), g.row(j))}});
    }
    item["results"] = results;
    out.push_back(item);
  }
  return out.dump(1) + "\n";
}

}  // namespace mvhgnn
