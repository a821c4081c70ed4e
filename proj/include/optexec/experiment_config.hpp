#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "optexec/ddpg.hpp"
#include "optexec/impact_market.hpp"

namespace optexec {

enum class ExperimentMode { Oracle, Baselines, Train, Ablation, Online, Eval };

std::string_view to_string(ExperimentMode mode);
ExperimentMode parse_experiment_mode(std::string_view name);

struct ExperimentSettings {
    ExperimentMode mode = ExperimentMode::Train;
    std::vector<std::uint64_t> seeds{0};
    std::string out_dir = "runs";
    int jobs = 1;

    bool operator==(const ExperimentSettings&) const = default;
};

/// Dynamic-market run warm-started from a convergence checkpoint.
struct OnlineSettings {
    double rho_start = 1.0;
    double rho_end = 0.5;
    std::int64_t episodes = 100000;
    double epsilon = 0.2;
    double sigma_eps = 0.14;
    std::int64_t eval_every = 1;
    std::int64_t warmup = 1000;       // episodes ignored by the tracking summary
    double gap_threshold_bps = 300.0;  // tracking summary threshold
    std::string checkpoint;

    bool operator==(const OnlineSettings&) const = default;
};

struct ExperimentConfig {
    MarketConfig market;
    TrainerConfig trainer;
    ExperimentSettings experiment;
    OnlineSettings online;

    void validate() const;
    bool operator==(const ExperimentConfig&) const = default;
};

/// Names accepted by preset_config(): exp, powerlaw, linres-005, linres-05.
const std::vector<std::string>& preset_names();

/// Convergence-experiment defaults for one of the four reference kernels.
ExperimentConfig preset_config(std::string_view name);

nlohmann::json to_json(const ExperimentConfig& config);

/// Sections and keys absent from `j` keep the exponential preset's values; unknown
/// sections or keys are rejected with ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

/// Applies one `key=value` override. Keys are either `section.key` or a bare key,
/// which is looked up in market, trainer, experiment (in that order). Online keys
/// need the `online.` prefix. Shorthands: `tau` sets tau_phi and tau_theta,
/// `seed` sets a single-element seed list, `scenario=decrease|increase` sets the
/// online rho endpoints to 1 -> 0.5 or 1 -> 1.5.
void apply_override(ExperimentConfig& config, std::string_view assignment);

}  // namespace optexec
