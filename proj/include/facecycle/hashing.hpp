#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

namespace facecycle {

/// Incremental SHA-256; hex digests are lowercase.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::span<const std::byte> bytes);
    void update(std::string_view text);
    /// Feeds shape, dtype and raw contiguous bytes of the tensor.
    void update(const torch::Tensor& tensor);
    std::string hex_digest();

private:
    void* ctx_;
};

std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);
/// Order-sensitive hash of a list of tensors (shapes, dtypes and values).
std::string hash_tensors(const std::vector<torch::Tensor>& tensors);

}  // namespace facecycle
