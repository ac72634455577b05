#pragma once

#include <cstdint>
#include <filesystem>

#include "facecycle/dataset.hpp"

namespace facecycle {

/// Procedural photo/sketch pairs: each identity is a distinct set of facial
/// geometry rendered twice, once as a shaded colour "photo" and once as a
/// pencil-style line "sketch" on the same pixel grid.
struct FixtureConfig {
    int train_identities = 8;
    int test_identities = 4;
    int image_size = 64;
    std::uint64_t seed = 7;
};

/// Writes `photos/`, `sketches/` and `manifest.jsonl` under `dir` and returns the
/// loaded manifest.
Manifest make_fixture(const std::filesystem::path& dir, const FixtureConfig& config = {});

}  // namespace facecycle
