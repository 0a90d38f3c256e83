#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "quadapt/tensor.hpp"

namespace quadapt {

// Checkpoints are directories holding manifest.json + weights.bin. The blob is
// raw little-endian IEEE-754 f64, row-major, concatenated in manifest order;
// the manifest records name/shape/offset/length per tensor plus a CRC-32 of
// the blob. Base, adapter, and benchmark files all share this layout.

inline constexpr int kCheckpointFormatVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, TensorPtr>>;

std::uint32_t crc32(const std::uint8_t* data, std::size_t len);

// Packs tensors into the blob byte sequence (little-endian f64).
std::vector<std::uint8_t> pack_blob(const NamedTensors& tensors);

// Full manifest document for the given payload.
nlohmann::json build_manifest(const std::string& kind, const nlohmann::json& meta,
                              const NamedTensors& tensors);

// Serialized checkpoint as bytes (manifest text + blob) without touching disk;
// used for freeze-integrity comparisons.
std::vector<std::uint8_t> checkpoint_bytes(const std::string& kind, const nlohmann::json& meta,
                                           const NamedTensors& tensors);

void write_checkpoint(const std::string& dir, const std::string& kind, const nlohmann::json& meta,
                      const NamedTensors& tensors);

struct LoadedCheckpoint {
    std::string kind;
    nlohmann::json meta;
    nlohmann::json manifest;
    NamedTensors tensors;

    const TensorPtr& tensor(const std::string& name) const;
};

// Validates manifest structure, record layout, and blob checksum before any
// tensor is constructed; throws CheckpointError / IoError.
LoadedCheckpoint read_checkpoint(const std::string& dir);

}  // namespace quadapt
