#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "seqcirc/tensor.hpp"

namespace seqcirc {

/// One tensor record from a safetensors header. Offsets are relative to the data section.
struct SafetensorsEntry {
  std::string dtype;
  std::vector<std::size_t> shape;
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
};

/// Reader for the single-file container: u64 little-endian header length, JSON header
/// mapping names to {dtype, shape, data_offsets}, then raw little-endian bytes.
///
/// The header is parsed and validated against the file size on open; tensor bytes are
/// read lazily. F32, F16 and BF16 payloads are widened to float32.
class SafetensorsFile {
 public:
  static SafetensorsFile open(const std::filesystem::path& path);

  const std::filesystem::path& path() const noexcept { return path_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }
  const std::map<std::string, SafetensorsEntry>& entries() const noexcept { return entries_; }
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Tensor read(const std::string& name) const;

 private:
  std::filesystem::path path_;
  std::uint64_t data_start_ = 0;
  std::map<std::string, std::string> metadata_;
  std::map<std::string, SafetensorsEntry> entries_;
};

/// Writes float32 tensors in name order (deterministic bytes for identical input).
void write_safetensors(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                       const std::map<std::string, std::string>& metadata = {});

}  // namespace seqcirc
