#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "optexec/closed_form.hpp"
#include "optexec/ddpg.hpp"
#include "optexec/experiment_config.hpp"

namespace optexec {

/// Streams MetricsRow values to `metrics.csv` (deterministic columns only) and the
/// wall-clock column to `timing.csv`. Each row is flushed as it is written, so the
/// files can be read while a run is still going.
class CsvMetricsSink final : public MetricsSink {
public:
    explicit CsvMetricsSink(const std::filesystem::path& dir);
    void on_episode(const MetricsRow& row) override;

    static const char* header();

private:
    std::ofstream metrics_;
    std::ofstream timing_;
};

/// Reads a metrics.csv written by CsvMetricsSink (wall_ms is left at 0).
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

struct OracleReport {
    std::vector<double> grid;
    Strategy optimal;
    Strategy twap;
    Strategy immediate;
    double optimal_profit = 0.0;
    double twap_profit = 0.0;
    double immediate_profit = 0.0;
};

OracleReport compute_oracle(const MarketConfig& market);

/// strategy.csv (k, t_k, xi_optimal, xi_twap) and summary.json.
OracleReport run_oracle(const ExperimentConfig& config, const std::filesystem::path& out);

/// baselines.csv (k, t_k, xi_optimal, xi_twap, xi_immediate) and summary.json with
/// each baseline's profit and its gap to the optimum in bps.
OracleReport run_baselines(const ExperimentConfig& config, const std::filesystem::path& out);

struct SeedOutcome {
    std::uint64_t seed = 0;
    double final_greedy_reward = 0.0;
    double final_gap_bps = 0.0;
    double best_greedy_reward = 0.0;
    std::int64_t best_episode = -1;
    Strategy final_strategy;
    std::filesystem::path directory;
    std::filesystem::path checkpoint;
};

struct ConvergenceResult {
    double oracle_reward = 0.0;
    double twap_reward = 0.0;
    std::vector<SeedOutcome> seeds;
    double median_final_gap_bps = 0.0;
    double median_final_greedy_reward = 0.0;
};

/// One training run per seed under `out/seed_<s>/`: metrics.csv, timing.csv,
/// strategy.csv (agent at H, agent at best greedy episode, oracle, TWAP),
/// checkpoint.txt and summary.json. A top-level summary.json aggregates medians.
ConvergenceResult run_convergence(const ExperimentConfig& config, const std::filesystem::path& out);

struct AblationResult {
    ConvergenceResult auxiliary;
    ConvergenceResult standard;
};

/// Two convergence runs differing only in q_mode, under out/auxiliary and out/standard.
AblationResult run_ablation(const ExperimentConfig& config, const std::filesystem::path& out);

struct OnlineResult {
    std::vector<MetricsRow> rows;
    double fraction_within_threshold = 0.0;  // over greedy-evaluated episodes after warmup
    double median_gap_bps = 0.0;
};

/// Warm-starts from `checkpoint` and trains for online.H episodes while rho follows the
/// configured linear schedule. Throws CheckpointError when the checkpoint was trained
/// on a different kernel family.
OnlineResult run_online(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                        const std::filesystem::path& out);

struct EvalReport {
    GreedyResult greedy;
    OracleReport oracle;
    double gap_bps = 0.0;
};

/// Greedy rollout of a checkpointed actor on the checkpoint's market (the replay
/// window stored in the checkpoint is accepted as is), written as
/// strategy.csv (k, t_k, xi_agent, xi_optimal, xi_twap) and report.json.
EvalReport run_eval(const std::filesystem::path& checkpoint, const ExperimentConfig& config,
                    const std::filesystem::path& out);

DdpgTrainer load_trainer(const std::filesystem::path& checkpoint, const TrainerConfig& config,
                         bool adopt_window = false);
void save_trainer(const DdpgTrainer& trainer, const std::filesystem::path& checkpoint);

double median(std::vector<double> values);

}  // namespace optexec
