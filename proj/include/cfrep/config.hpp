#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfrep/synth.hpp"
#include "cfrep/trainer.hpp"

namespace cfrep {

struct DataConfig {
    DatasetKind kind = DatasetKind::circles;
    std::size_t n = 8000;
    std::uint64_t seed = 42;
    double labeled_fraction = 1.0;
};

enum class RangePolicy { mean_1sd, mean_3sd, explicit_range };

std::string to_string(RangePolicy policy);
RangePolicy parse_range_policy(const std::string& name);

struct VizConfig {
    std::size_t frames = 11;
    RangePolicy range = RangePolicy::mean_1sd;
    /// Used by RangePolicy::explicit_range.
    double lo = 0.0;
    double hi = 1.0;
};

/// Everything a command needs: dataset recipe, training and visualization.
struct RunConfig {
    DataConfig data;
    TrainConfig train;
    VizConfig viz;

    void validate() const;
};

/// Parses a UTF-8 `key = value` document with [data], [train] and [viz]
/// sections. '#' and ';' start comments. Unknown sections or keys and
/// malformed values raise ConfigError("<source>:<line>: ...").
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Applies `section.key=value` on top of an existing configuration.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Canonical text form; parse_config(echo_config(c)) reproduces c exactly.
std::string echo_config(const RunConfig& cfg);

}  // namespace cfrep
