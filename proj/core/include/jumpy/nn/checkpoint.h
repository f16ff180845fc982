#ifndef JUMPY_NN_CHECKPOINT_H_
#define JUMPY_NN_CHECKPOINT_H_

#include <filesystem>
#include <string>

#include "jumpy/nn/mlp.h"

namespace jumpy::nn {

// On disk a checkpoint is two files:
//   <stem>.json  manifest: format tag, blob file name, blob SHA-256, and per
//                array {name, rows, cols, offset} (offset in bytes, data in
//                column-major order), plus a free-form "metadata" object.
//   <stem>.bin   the concatenated arrays as little-endian IEEE-754 float64.
struct Checkpoint {
  ParameterStore params;
  std::string metadata_json = "{}";
  std::string blob_sha256;
};

// Writes blob then manifest, each atomically. `manifest_path` must end in
// ".json". Returns the blob hash recorded in the manifest.
std::string save_checkpoint(const std::filesystem::path& manifest_path,
                            const ParameterStore& params, const std::string& metadata_json);

// Verifies the blob hash and every array extent before returning.
Checkpoint load_checkpoint(const std::filesystem::path& manifest_path);

}  // namespace jumpy::nn

#endif  // JUMPY_NN_CHECKPOINT_H_
