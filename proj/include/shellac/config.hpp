#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shellac/dataset.hpp"
#include "shellac/denoiser.hpp"
#include "shellac/guides.hpp"
#include "shellac/sampler.hpp"
#include "shellac/trainer.hpp"

namespace shellac {

/// Where training audio comes from and how it is scaled.
struct DataConfig {
    std::string manifest;
    double fs = 22050.0;
    double rpm = 78.0;
    NormalizationSettings normalization;

    void validate() const;
};

/// Everything a config file can set. Sections absent from the file keep their defaults.
struct ConfigTree {
    NetworkConfig network;
    TrainingConfig training;
    DataConfig data;
    SamplerRun sampler;
    std::optional<GuideSpec> guide;
};

/// Parses JSON text. Unknown keys, wrong types and invalid values throw
/// UsageError naming the key; syntax errors report line and column.
/// `overrides` are "dotted.key=value" strings applied after the file; values
/// parse as JSON when possible and as strings otherwise.
ConfigTree parse_config_text(const std::string& text, const std::vector<std::string>& overrides = {},
                             const std::string& origin = "<config>");
ConfigTree parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Applies one "a.b.c=value" override to a JSON document.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Typed conversions, shared with the checkpoint format. The *_from_json
// functions start from defaults and reject unknown keys.
nlohmann::json to_json(const NetworkConfig& c);
nlohmann::json to_json(const TrainingConfig& c);
nlohmann::json to_json(const DataConfig& c);
nlohmann::json to_json(const SamplerRun& c);
nlohmann::json to_json(const GuideSpec& c);

NetworkConfig network_from_json(const nlohmann::json& j, const std::string& path = "network");
TrainingConfig training_from_json(const nlohmann::json& j, const std::string& path = "training");
DataConfig data_from_json(const nlohmann::json& j, const std::string& path = "data");
SamplerRun sampler_from_json(const nlohmann::json& j, const std::string& path = "sampler");
GuideSpec guide_from_json(const nlohmann::json& j, const std::string& path = "guide");

/// Default network frame for a sample rate: frame_length(fs, rpm) rounded down
/// to a multiple of the network's total stride.
int network_frame_length(const NetworkConfig& c, double fs, double rpm = 78.0);

}  // namespace shellac
