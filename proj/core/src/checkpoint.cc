#include "jumpy/nn/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <vector>

#include "json.hpp"
#include "jumpy/errors.h"
#include "jumpy/io.h"

namespace jumpy::nn {
namespace {

constexpr const char* kFormat = "jumpy-checkpoint-v1";


void append_f64_le(std::vector<std::uint8_t>& out, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double read_f64_le(const std::uint8_t* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string save_checkpoint(const std::filesystem::path& manifest_path,
                            const ParameterStore& params, const std::string& metadata_json) {
  if (manifest_path.extension() != ".json") {
    throw StorageError("checkpoint manifest must end in .json: " + manifest_path.string());
  }
  nlohmann::json metadata;
  try {
    metadata = nlohmann::json::parse(metadata_json);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }

  std::vector<std::uint8_t> blob;
  blob.reserve(params.scalar_count() * 8);
  nlohmann::json arrays = nlohmann::json::array();
  for (ParamId i = 0; i < params.size(); ++i) {
    const RealMatrix& m = params[i];
    arrays.push_back({{"name", params.name(i)},
                      {"rows", m.rows()},
                      {"cols", m.cols()},
                      {"offset", blob.size()}});
    for (Eigen::Index k = 0; k < m.size(); ++k) append_f64_le(blob, m.data()[k]);
  }
  const std::string blob_hash = sha256_hex(blob);

  std::filesystem::path blob_path = manifest_path;
  blob_path.replace_extension(".bin");
  nlohmann::json manifest = {{"format", kFormat},
                             {"blob", blob_path.filename().string()},
                             {"blob_bytes", blob.size()},
                             {"blob_sha256", blob_hash},
                             {"dtype", "float64-le"},
                             {"order", "column-major"},
                             {"arrays", arrays},
                             {"metadata", metadata}};
  write_file_atomic(blob_path, blob);
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
  return blob_hash;
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest_path) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw StorageError("malformed checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
  try {
    if (manifest.at("format") != kFormat) {
      throw StorageError("unsupported checkpoint format in " + manifest_path.string());
    }
    const std::filesystem::path blob_path =
        manifest_path.parent_path() / manifest.at("blob").get<std::string>();
    const std::string raw = read_file(blob_path);
    const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(raw.data()),
                                              raw.size());
    Checkpoint out;
    out.blob_sha256 = sha256_hex(bytes);
    if (out.blob_sha256 != manifest.at("blob_sha256").get<std::string>()) {
      throw StorageError("checkpoint blob hash mismatch: " + blob_path.string());
    }
    if (raw.size() != manifest.at("blob_bytes").get<std::size_t>()) {
      throw StorageError("checkpoint blob size mismatch: " + blob_path.string());
    }
    for (const auto& a : manifest.at("arrays")) {
      const auto rows = a.at("rows").get<Eigen::Index>();
      const auto cols = a.at("cols").get<Eigen::Index>();
      const auto offset = a.at("offset").get<std::size_t>();
      if (rows < 0 || cols < 0 || offset + static_cast<std::size_t>(rows * cols) * 8 > raw.size()) {
        throw StorageError("checkpoint array out of blob bounds: " + a.at("name").get<std::string>());
      }
      RealMatrix m(rows, cols);
      for (Eigen::Index k = 0; k < m.size(); ++k) {
        m.data()[k] = read_f64_le(bytes.data() + offset + static_cast<std::size_t>(k) * 8);
      }
      out.params.add(a.at("name").get<std::string>(), std::move(m));
    }
    out.metadata_json = manifest.at("metadata").dump();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw StorageError("malformed checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
}

}  // namespace jumpy::nn
