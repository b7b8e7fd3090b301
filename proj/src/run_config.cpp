#include "mvhgnn/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace mvhgnn {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* want) {
  throw Error(ErrorCode::kConfig, "key '" + key + "': '" + value + "' is not " + want);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "a number");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "a non-negative integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad(key, v, "true or false");
}

std::vector<std::string> to_list(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') bad(key, v, "a [list]");
  std::vector<std::string> out;
  std::stringstream ss(v.substr(1, v.size() - 2));
  for (std::string item; std::getline(ss, item, ',');) {
    item = unquote(trim(item));
    if (item.empty()) bad(key, v, "a list without empty items");
    out.push_back(item);
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs, bool quote) {
  std::ostringstream o;
  o << "[";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) o << ", ";
    if (quote) o << '"' << xs[i] << '"';
    else o << xs[i];
  }
  o << "]";
  return o.str();
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MVHGNN_DOUBLE(name, expr)                                                             \
  Field { name, [](RunConfig& c, const std::string& v) { c.expr = to_double(name, v); },      \
          [](const RunConfig& c) { return num(c.expr); } }
#define MVHGNN_SIZE(name, expr)                                                               \
  Field { name, [](RunConfig& c, const std::string& v) { c.expr = to_size(name, v); },        \
          [](const RunConfig& c) { return std::to_string(c.expr); } }
#define MVHGNN_BOOL(name, expr)                                                               \
  Field { name, [](RunConfig& c, const std::string& v) { c.expr = to_bool(name, v); },        \
          [](const RunConfig& c) { return std::string(c.expr ? "true" : "false"); } }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"data", [](RunConfig& c, const std::string& v) { c.data = v; },
       [](const RunConfig& c) { return "\"" + c.data.string() + "\""; }},
      {"out", [](RunConfig& c, const std::string& v) { c.out = v; },
       [](const RunConfig& c) { return "\"" + c.out.string() + "\""; }},
      {"init", [](RunConfig& c, const std::string& v) { c.init = v; },
       [](const RunConfig& c) { return "\"" + c.init.string() + "\""; }},
      {"mode",
       [](RunConfig& c, const std::string& v) {
         if (v == "category") c.train.mode = SplitMode::kCategory;
         else if (v == "zeroshot") c.train.mode = SplitMode::kZeroShot;
         else bad("mode", v, "category or zeroshot");
       },
       [](const RunConfig& c) {
         return std::string(c.train.mode == SplitMode::kCategory ? "\"category\"" : "\"zeroshot\"");
       }},
      {"stage",
       [](RunConfig& c, const std::string& v) {
         const std::size_t s = to_size("stage", v);
         if (s > 2) bad("stage", v, "0, 1 or 2");
         c.train.stage = static_cast<int>(s);
       },
       [](const RunConfig& c) { return std::to_string(c.train.stage); }},
      {"strategy",
       [](RunConfig& c, const std::string& v) {
         if (v == "default") c.train.strategy = Strategy::kDefault;
         else if (v == "one_stage") c.train.strategy = Strategy::kOneStage;
         else if (v == "two_stage") c.train.strategy = Strategy::kTwoStage;
         else bad("strategy", v, "default, one_stage or two_stage");
       },
       [](const RunConfig& c) {
         switch (c.train.strategy) {
           case Strategy::kOneStage: return std::string("\"one_stage\"");
           case Strategy::kTwoStage: return std::string("\"two_stage\"");
           default: return std::string("\"default\"");
         }
       }},
      {"unseen", [](RunConfig& c, const std::string& v) { c.unseen = to_list("unseen", v); },
       [](const RunConfig& c) { return join(c.unseen, true); }},
      MVHGNN_SIZE("seed", train.seed),
      MVHGNN_SIZE("epochs", train.epochs),
      MVHGNN_DOUBLE("lr_start", train.lr_start),
      MVHGNN_DOUBLE("lr_end", train.lr_end),
      MVHGNN_SIZE("batch_size", train.batch_size),
      MVHGNN_SIZE("quadruplets", train.quadruplets),
      MVHGNN_SIZE("views", train.views),
      MVHGNN_SIZE("out_dim", train.encoder.out_dim),
      {"schedule",
       [](RunConfig& c, const std::string& v) {
         std::vector<std::size_t> s;
         for (const auto& item : to_list("schedule", v)) s.push_back(to_size("schedule", item));
         c.train.encoder.schedule = s;
       },
       [](const RunConfig& c) { return join(c.train.encoder.schedule, false); }},
      MVHGNN_SIZE("k0", train.encoder.k0),
      {"pooling",
       [](RunConfig& c, const std::string& v) {
         if (v == "max") c.train.encoder.pooling = Pooling::kMax;
         else if (v == "mean") c.train.encoder.pooling = Pooling::kMean;
         else bad("pooling", v, "max or mean");
       },
       [](const RunConfig& c) {
         return std::string(c.train.encoder.pooling == Pooling::kMax ? "\"max\"" : "\"mean\"");
       }},
      {"norm",
       [](RunConfig& c, const std::string& v) {
         if (v == "node") c.train.encoder.norm = NormMode::kNode;
         else if (v == "shape") c.train.encoder.norm = NormMode::kShape;
         else bad("norm", v, "node or shape");
       },
       [](const RunConfig& c) {
         return std::string(c.train.encoder.norm == NormMode::kNode ? "\"node\"" : "\"shape\"");
       }},
      MVHGNN_BOOL("local_gcn", train.encoder.local_gcn),
      MVHGNN_BOOL("global_attention", train.encoder.global_attention),
      MVHGNN_DOUBLE("tau", train.losses.tau),
      MVHGNN_DOUBLE("am_scale", train.losses.scale),
      MVHGNN_DOUBLE("am_margin", train.losses.margin),
      MVHGNN_DOUBLE("mu", train.losses.mu),
      MVHGNN_DOUBLE("w_cls", train.losses.w_cls),
      MVHGNN_DOUBLE("w_sem_shape", train.losses.w_sem_shape),
      MVHGNN_DOUBLE("w_sem_sketch", train.losses.w_sem_sketch),
      MVHGNN_DOUBLE("w_quad", train.losses.w_quad),
  };
  return table;
}

#undef MVHGNN_DOUBLE
#undef MVHGNN_SIZE
#undef MVHGNN_BOOL

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, unquote(trim(value)));
      return;
    }
  }
  throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  train.validate();
  if (train.views != 0 && train.encoder.schedule.front() != train.views) {
    throw Error(ErrorCode::kConfig, "views = " + std::to_string(train.views) + " but the schedule starts at " +
                                        std::to_string(train.encoder.schedule.front()));
  }
  if (train.stage == 2 && init.empty()) throw Error(ErrorCode::kConfig, "stage 2 needs init = <stage-1 checkpoint>");
  if (train.mode == SplitMode::kCategory && !unseen.empty()) {
    throw Error(ErrorCode::kConfig, "unseen classes only apply to zeroshot mode");
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream o;
  for (const auto& f : fields()) o << f.key << " = " << f.get(*this) << "\n";
  return o.str();
}

void apply_run_config(RunConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    // A '#' inside quotes is kept.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  apply_run_config(c, text);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

}  // namespace mvhgnn
