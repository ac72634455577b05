#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

namespace facecycle {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named tensors plus a JSON metadata block.
///
/// File layout (all integers little-endian):
///   8 bytes  magic "FCYCKPT\0"
///   u32      format version
///   u64      header length H
///   H bytes  JSON header {kind, meta, tensors: [{name, dtype, shape, offset, nbytes}]}
///   ...      raw tensor payloads (IEEE-754 / two's complement, row-major)
///   32 bytes SHA-256 of everything above
struct CheckpointData {
    std::string kind;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::pair<std::string, torch::Tensor>> tensors;

    void add(std::string name, const torch::Tensor& t);
    const torch::Tensor& tensor(const std::string& name) const;
    bool has(const std::string& name) const;
};

/// Writes via a temporary file and rename, so readers never see partial files.
void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
/// Throws CheckpointError on bad magic, version mismatch, truncation or checksum failure.
CheckpointData read_checkpoint(const std::filesystem::path& path);
/// Header only (kind, meta, tensor directory); still validates the checksum.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace facecycle
