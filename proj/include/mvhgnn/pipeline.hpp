#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mvhgnn/archive.hpp"
#include "mvhgnn/metrics.hpp"
#include "mvhgnn/run_config.hpp"
#include "mvhgnn/trainer.hpp"

// File-level glue shared by the command-line tool and the Python module.
namespace mvhgnn {

// Runs a whole training job: loads cfg.data, splits, trains, and writes
// model.mvhf (+ manifest), train_log.jsonl, splits.json and config.txt to cfg.out.
Model run_training(const RunConfig& cfg);

// Query / gallery rows recorded by run_training, indexing sketches.mvhf and
// shapes.mvhf respectively.
struct SplitRoles {
  std::vector<std::size_t> query;
  std::vector<std::size_t> gallery;
};
std::string splits_json(const Dataset& data);
SplitRoles read_splits(const std::filesystem::path& path);

// Embeds an archive holding either shapes ("views" N x V x d with "rig" V x 3)
// or sketches ("embeddings" N x d_in). Output has "embeddings" and labels.
// `rows` restricts and orders the items.
FeatureArchive encode_items(const Model& model, const FeatureArchive& in,
                            const std::optional<std::vector<std::size_t>>& rows = std::nullopt);

// Pairs two embedding archives. Class ids follow the sorted union of names.
struct LabeledRun {
  RetrievalRun run;
  std::vector<std::string> class_names;
};
LabeledRun load_retrieval_run(const FeatureArchive& queries, const FeatureArchive& gallery);

// JSON ranked lists: [{"query", "label", "results": [{"index", "label", "score"}]}].
std::string ranked_lists_json(const LabeledRun& run, std::size_t top);

}  // namespace mvhgnn
