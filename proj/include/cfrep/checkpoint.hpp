#pragma once

#include <filesystem>
#include <string>

#include "cfrep/model.hpp"

namespace cfrep {

struct Checkpoint {
    ModelState model;
    /// Effective configuration the model was trained with (config.echo text).
    std::string config_echo;
};

/// Layout: magic "CFREPCKP", u32 version, u32 header length, JSON header
/// (architecture, tensor names and shapes, config echo), then every tensor
/// as little-endian float32 in header order. Round trip is bit-exact.
void save_checkpoint(const std::filesystem::path& path, const ModelState& model, const std::string& config_echo);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cfrep
