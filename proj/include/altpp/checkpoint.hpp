#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "altpp/model.hpp"

namespace altpp {

inline constexpr char kCheckpointMagic[8] = {'A', 'L', 'T', 'P', 'P', 'C', 'K', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Single-file little-endian binary: magic, version, dims, variant, schedule,
// then f, g, eps_x, eps_z (spec followed by named parameter tensors in
// declaration order), then an FNV-1a 64 checksum of all preceding bytes.
std::string serialize_model(const AlternatorModel& model);
AlternatorModel deserialize_model(const std::string& bytes);

void save_model(const AlternatorModel& model, const std::filesystem::path& path);
// Throws IoError (missing/unreadable), CorruptionError (bad magic, truncation,
// checksum), IoError for an unsupported version, DimensionError when the
// header dims disagree with the stored networks.
AlternatorModel load_model(const std::filesystem::path& path);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace altpp
