#include "seqcirc/safetensors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include "json.hpp"

#include "seqcirc/errors.hpp"

namespace seqcirc {

static_assert(std::endian::native == std::endian::little, "safetensors I/O assumes little-endian");

namespace {

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "F32") return 4;
  if (dtype == "F16" || dtype == "BF16") return 2;
  return 0;
}

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      exp = 127 - 15 + 1;
      while ((mant & 0x400u) == 0) {
        mant <<= 1;
        --exp;
      }
      mant &= 0x3FFu;
      bits = sign | (exp << 23) | (mant << 13);
    }
  } else if (exp == 0x1F) {
    bits = sign | 0x7F800000u | (mant << 13);
  } else {
    bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

}  // namespace

SafetensorsFile SafetensorsFile::open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(fmt::format("cannot open weight file '{}'", path.string()));
  std::error_code ec;
  const std::uint64_t file_size = std::filesystem::file_size(path, ec);
  if (ec) throw LoadError(fmt::format("cannot stat '{}': {}", path.string(), ec.message()));

  std::uint64_t header_len = 0;
  if (file_size < 8 || !in.read(reinterpret_cast<char*>(&header_len), 8)) {
    throw LoadError(fmt::format("'{}' is too short to hold a header", path.string()));
  }
  if (header_len > file_size - 8) {
    throw LoadError(fmt::format("'{}': header length {} exceeds file size {}", path.string(),
                                header_len, file_size));
  }
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(fmt::format("'{}': malformed header: {}", path.string(), e.what()));
  }
  if (!doc.is_object()) throw LoadError(fmt::format("'{}': header is not an object", path.string()));

  SafetensorsFile file;
  file.path_ = path;
  file.data_start_ = 8 + header_len;
  const std::uint64_t data_size = file_size - file.data_start_;

  for (const auto& [name, value] : doc.items()) {
    if (name == "__metadata__") {
      for (const auto& [k, v] : value.items()) {
        file.metadata_[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
      continue;
    }
    try {
      SafetensorsEntry e;
      e.dtype = value.at("dtype").get<std::string>();
      e.shape = value.at("shape").get<std::vector<std::size_t>>();
      const auto offsets = value.at("data_offsets").get<std::vector<std::uint64_t>>();
      if (offsets.size() != 2) throw LoadError("data_offsets must have two entries");
      e.begin = offsets[0];
      e.end = offsets[1];
      std::uint64_t numel = 1;
      for (auto d : e.shape) numel *= d;
      const std::size_t width = dtype_size(e.dtype);
      if (width != 0 && e.end - e.begin != numel * width) {
        throw LoadError(fmt::format("byte range {}..{} does not hold {} x {}", e.begin, e.end,
                                    numel, e.dtype));
      }
      if (e.end < e.begin || e.end > data_size) {
        throw LoadError(fmt::format("byte range {}..{} lies beyond the {} data bytes (truncated?)",
                                    e.begin, e.end, data_size));
      }
      file.entries_.emplace(name, std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw LoadError(fmt::format("'{}': bad record for tensor '{}': {}", path.string(), name,
                                  ex.what()));
    } catch (const LoadError& ex) {
      throw LoadError(fmt::format("'{}': tensor '{}': {}", path.string(), name, ex.what()));
    }
  }
  return file;
}

Tensor SafetensorsFile::read(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw LoadError(fmt::format("'{}': missing tensor '{}'", path_.string(), name));
  }
  const SafetensorsEntry& e = it->second;
  const std::size_t width = dtype_size(e.dtype);
  if (width == 0) {
    throw LoadError(fmt::format("'{}': tensor '{}' has unsupported dtype {}", path_.string(), name,
                                e.dtype));
  }
  std::ifstream in(path_, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(data_start_ + e.begin));
  std::vector<char> raw(e.end - e.begin);
  if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size()))) {
    throw LoadError(fmt::format("'{}': short read for tensor '{}'", path_.string(), name));
  }
  const std::size_t n = raw.size() / width;
  std::vector<float> values(n);
  if (e.dtype == "F32") {
    std::memcpy(values.data(), raw.data(), raw.size());
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint16_t h;
      std::memcpy(&h, raw.data() + 2 * i, 2);
      values[i] = e.dtype == "F16" ? half_to_float(h)
                                   : std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16);
    }
  }
  return Tensor(e.shape, std::move(values));
}

void write_safetensors(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                       const std::map<std::string, std::string>& metadata) {
  auto sorted = tensors;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  nlohmann::json header = nlohmann::json::object();
  if (!metadata.empty()) header["__metadata__"] = metadata;
  std::uint64_t offset = 0;
  for (const auto& [name, t] : sorted) {
    const std::uint64_t bytes = t->numel() * sizeof(float);
    header[name] = {{"dtype", "F32"}, {"shape", t->shape()}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string text = header.dump();
  while ((text.size() + 8) % 8 != 0) text.push_back(' ');

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError(fmt::format("cannot write '{}'", path.string()));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : sorted) {
    out.write(reinterpret_cast<const char*>(t->ptr()),
              static_cast<std::streamsize>(t->numel() * sizeof(float)));
  }
  if (!out) throw LoadError(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace seqcirc
