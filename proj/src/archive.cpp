#include "mvhgnn/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace mvhgnn {

namespace {

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  template <typename T>
  T get(const char* what) {
    if (remaining() < sizeof(T)) throw Error(ErrorCode::kTruncated, std::string("file ends inside ") + what);
    unsigned char b[sizeof(T)];
    std::memcpy(b, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    if (remaining() < n) throw Error(ErrorCode::kTruncated, std::string("file ends inside ") + what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

Matrix Tensor::as_matrix() const {
  if (dims.size() != 1 && dims.size() != 2) {
    throw Error(ErrorCode::kShapeMismatch, "expected a rank 1 or 2 tensor, got rank " + std::to_string(dims.size()));
  }
  const std::size_t rows = dims.size() == 2 ? dims[0] : 1;
  const std::size_t cols = dims.back();
  return Matrix(rows, cols, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::from_matrix(const Matrix& m) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.values.assign(m.data().begin(), m.data().end());
  return t;
}

bool FeatureArchive::has(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(), [&](const auto& p) { return p.first == name; });
}

const Tensor& FeatureArchive::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw Error(ErrorCode::kShapeMismatch, "archive has no tensor '" + name + "'");
}

void FeatureArchive::add(std::string name, Tensor t) {
  if (has(name)) throw Error(ErrorCode::kArgument, "duplicate tensor '" + name + "'");
  if (t.values.size() != t.element_count()) throw Error(ErrorCode::kShapeMismatch, "payload does not match dims of '" + name + "'");
  tensors.emplace_back(std::move(name), std::move(t));
}

std::vector<std::string> FeatureArchive::item_labels(const std::string& item_tensor) const {
  const Tensor& t = tensor(item_tensor);
  const std::size_t n = t.dims.empty() ? 1 : t.dims[0];
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = labels.find(std::to_string(i));
    if (it == labels.end()) throw Error(ErrorCode::kUnlabeled, "item " + std::to_string(i) + " has no label");
    out.push_back(it->second);
  }
  return out;
}

void FeatureArchive::set_item_labels(const std::vector<std::string>& classes) {
  labels.clear();
  for (std::size_t i = 0; i < classes.size(); ++i) labels[std::to_string(i)] = classes[i];
}

std::filesystem::path labels_path(const std::filesystem::path& archive) {
  return archive.string() + ".labels.json";
}

std::string encode_archive(const FeatureArchive& archive) {
  std::string out = "MVHF";
  put<std::uint16_t>(out, kArchiveVersion);
  for (const auto& [name, t] : archive.tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw Error(ErrorCode::kArgument, "tensor name too long");
    if (t.dims.size() > 255) throw Error(ErrorCode::kArgument, "tensor rank above 255");
    if (t.values.size() != t.element_count()) throw Error(ErrorCode::kShapeMismatch, "payload does not match dims of '" + name + "'");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) put<std::uint32_t>(out, d);
    for (float v : t.values) put<float>(out, v);
  }
  return out;
}

FeatureArchive decode_archive(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "MVHF") != 0) throw Error(ErrorCode::kBadMagic, "not an MVHF archive");
  Reader in(bytes);
  in.take(4, "magic");
  const auto version = in.get<std::uint16_t>("version");
  if (version != kArchiveVersion) throw Error(ErrorCode::kBadMagic, "unsupported MVHF version " + std::to_string(version));
  FeatureArchive archive;
  while (!in.at_end()) {
    const auto len = in.get<std::uint16_t>("tensor name length");
    std::string name = in.take(len, "tensor name");
    const auto rank = in.get<std::uint8_t>("tensor rank");
    Tensor t;
    std::uint64_t count = 1;
    for (std::uint8_t i = 0; i < rank; ++i) {
      t.dims.push_back(in.get<std::uint32_t>("tensor dims"));
      count *= t.dims.back();
      if (count > in.remaining()) break;  // already too large; reported below
    }
    if (t.dims.size() != rank || count * sizeof(float) > in.remaining()) {
      throw Error(ErrorCode::kShapeMismatch, "dims of '" + name + "' need more payload bytes than the file holds");
    }
    t.values.resize(count);
    for (auto& v : t.values) v = in.get<float>("payload");
    archive.add(std::move(name), std::move(t));
  }
  return archive;
}

void write_archive(const std::filesystem::path& path, const FeatureArchive& archive) {
  const std::string bytes = encode_archive(archive);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
  }
  const auto sidecar = labels_path(path);
  if (archive.labels.empty()) {
    std::filesystem::remove(sidecar);
    return;
  }
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  // Numeric item order reads better than lexicographic.
  std::vector<std::pair<std::string, std::string>> items(archive.labels.begin(), archive.labels.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.first.size() != b.first.size() ? a.first.size() < b.first.size() : a.first < b.first;
  });
  for (const auto& [k, v] : items) j[k] = v;
  std::ofstream out(sidecar, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + sidecar.string());
  out << j.dump(1) << "\n";
}

FeatureArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  FeatureArchive archive = decode_archive(ss.str());

  const auto sidecar = labels_path(path);
  if (std::filesystem::exists(sidecar)) {
    std::ifstream lf(sidecar);
    nlohmann::json j;
    try {
      lf >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kIo, sidecar.string() + ": " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::kIo, sidecar.string() + ": expected a JSON object");
    for (const auto& [k, v] : j.items()) {
      if (!v.is_string()) throw Error(ErrorCode::kIo, sidecar.string() + ": label of '" + k + "' is not a string");
      archive.labels[k] = v.get<std::string>();
    }
  }
  return archive;
}

}  // namespace mvhgnn
