#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include "amx/models/models.hpp"

namespace amx {

// Checkpoint layout (little-endian):
//   "AMXC" | u32 version (1) | u32 metadata length | metadata JSON (UTF-8)
//   | tensor values as f32, in manifest order.
// Metadata: {"arch", "K", "latent_dim", "seed", "tensors": [[name, shape], ...]}.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ClassifierModel& model, const std::filesystem::path& path);
void save_checkpoint(const AutoencoderModel& model, const std::filesystem::path& path);

using AnyModel = std::variant<ClassifierModel, AutoencoderModel>;

// Bad magic -> FormatError ("not a checkpoint"); other versions -> FormatError
// naming both versions; manifest vs payload or architecture disagreement ->
// CorruptionError.
AnyModel load_checkpoint(const std::filesystem::path& path);
ClassifierModel load_classifier(const std::filesystem::path& path);
AutoencoderModel load_autoencoder(const std::filesystem::path& path);

}  // namespace amx
