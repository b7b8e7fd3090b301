#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mvhgnn/matrix.hpp"

namespace mvhgnn {

// On-disk layout (little-endian):
//   "MVHF" | u16 version
//   repeated until EOF:
//     u16 name length | name bytes (UTF-8) | u8 rank | u32 dims[rank] | f32 payload, row-major
// Labels live next to the file in <path>.labels.json as {"item_id": "class"},
// where item ids are decimal row indices of the archive's item tensor.
inline constexpr std::uint16_t kArchiveVersion = 1;

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const;
  // Rank 2 as-is, rank 1 as a single row. Anything else is a shape mismatch.
  Matrix as_matrix() const;
  static Tensor from_matrix(const Matrix& m);
};

struct FeatureArchive {
  std::vector<std::pair<std::string, Tensor>> tensors;  // file order
  std::map<std::string, std::string> labels;

  bool has(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const;
  void add(std::string name, Tensor t);
  void add(std::string name, const Matrix& m) { add(std::move(name), Tensor::from_matrix(m)); }

  // Labels of rows 0..n-1 of the item tensor (its leading dimension).
  // Throws kUnlabeled when any row lacks a label.
  std::vector<std::string> item_labels(const std::string& item_tensor) const;
  void set_item_labels(const std::vector<std::string>& classes);
};

std::filesystem::path labels_path(const std::filesystem::path& archive);

// Writes the archive and, if it has labels, the sidecar.
void write_archive(const std::filesystem::path& path, const FeatureArchive& archive);
// Reads the archive and its sidecar when present.
FeatureArchive read_archive(const std::filesystem::path& path);

// Byte-level codec used by the file functions; exposed for tests.
std::string encode_archive(const FeatureArchive& archive);
FeatureArchive decode_archive(const std::string& bytes);

}  // namespace mvhgnn
