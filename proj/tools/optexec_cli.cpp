// optexec: optimal-execution oracle, baselines and actor-critic experiments.
//
//   optexec oracle    --preset exp --out runs/oracle
//   optexec train     --preset exp --set H=10000 --set B=256 --set D=5000 --set seeds=0,1,2
//   optexec ablation  --preset exp --set H=10000 --set B=256 --set D=5000
//   optexec online    --preset exp --checkpoint runs/exp/seed_0/checkpoint.txt --set online.H=20000
//   optexec eval      --checkpoint runs/exp/seed_0/checkpoint.txt

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "optexec/experiments.hpp"

namespace {

struct CommonOptions {
    std::string config_path;
    std::string preset;
    std::vector<std::string> overrides;
    std::vector<std::uint64_t> seeds;
    std::string out;
    int jobs = 0;
    std::string checkpoint;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--preset", o.preset, "Kernel preset")
        ->check(CLI::IsMember({"exp", "powerlaw", "linres-005", "linres-05"}));
    cmd->add_option("--set", o.overrides, "Override a config key (key=value), repeatable");
    cmd->add_option("--seed", o.seeds, "Seed(s); replaces the configured seed list");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--jobs", o.jobs, "Concurrent training runs")->check(CLI::PositiveNumber);
}

optexec::ExperimentConfig resolve(const CommonOptions& o, optexec::ExperimentMode mode) {
    optexec::ExperimentConfig c =
        o.config_path.empty() ? optexec::preset_config(o.preset.empty() ? "exp" : o.preset) : optexec::load_config(o.config_path);
    if (!o.config_path.empty() && !o.preset.empty()) {
        // Preset picks the kernel and its window; the file supplies everything else.
        const optexec::ExperimentConfig p = optexec::preset_config(o.preset);
        c.market.kernel = p.market.kernel;
        c.trainer.window = p.trainer.window;
    }
    for (const auto& kv : o.overrides) optexec::apply_override(c, kv);
    if (!o.seeds.empty()) c.experiment.seeds = o.seeds;
    if (!o.out.empty()) c.experiment.out_dir = o.out;
    if (o.jobs > 0) c.experiment.jobs = o.jobs;
    c.experiment.mode = mode;
    c.validate();
    return c;
}

void print_seeds(const optexec::ConvergenceResult& r, const char* label) {
    std::cout << label << ": oracle " << r.oracle_reward << ", TWAP " << r.twap_reward << '\n';
    for (const auto& s : r.seeds) {
        std::cout << "  seed " << s.seed << ": greedy " << s.final_greedy_reward << " (gap " << s.final_gap_bps
                  << " bps)\n";
    }
    std::cout << "  median gap " << r.median_final_gap_bps << " bps\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal execution under transient impact: oracle, baselines and DDPG experiments"};
    app.require_subcommand(1);

    CommonOptions oracle_opts, baseline_opts, train_opts, ablation_opts, online_opts, eval_opts;
    auto* oracle = app.add_subcommand("oracle", "Closed-form optimal schedule");
    add_common(oracle, oracle_opts);
    auto* baselines = app.add_subcommand("baselines", "Optimal, TWAP and immediate schedules with expected profits");
    add_common(baselines, baseline_opts);
    auto* train = app.add_subcommand("train", "Convergence experiment, one run per seed");
    add_common(train, train_opts);
    auto* ablation = app.add_subcommand("ablation", "Auxiliary vs standard Q-function, matched seeds");
    add_common(ablation, ablation_opts);
    auto* online = app.add_subcommand("online", "Online adaptation while rho drifts");
    add_common(online, online_opts);
    online->add_option("--checkpoint", online_opts.checkpoint, "Checkpoint from a train run")
        ->check(CLI::ExistingFile);
    auto* eval = app.add_subcommand("eval", "Greedy rollout of a checkpointed agent vs the oracle");
    add_common(eval, eval_opts);
    eval->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint to evaluate")
        ->required()
        ->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        using optexec::ExperimentMode;
        if (oracle->parsed()) {
            const auto c = resolve(oracle_opts, ExperimentMode::Oracle);
            const auto r = optexec::run_oracle(c, c.experiment.out_dir);
            std::cout << "optimal " << r.optimal_profit << ", TWAP " << r.twap_profit << ", immediate "
                      << r.immediate_profit << "\nwrote " << c.experiment.out_dir << "/strategy.csv\n";
        } else if (baselines->parsed()) {
            const auto c = resolve(baseline_opts, ExperimentMode::Baselines);
            const auto r = optexec::run_baselines(c, c.experiment.out_dir);
            std::cout << "optimal " << r.optimal_profit << ", TWAP " << r.twap_profit << " ("
                      << optexec::gap_bps(r.optimal_profit, r.twap_profit) << " bps), immediate "
                      << r.immediate_profit << " (" << optexec::gap_bps(r.optimal_profit, r.immediate_profit)
                      << " bps)\n";
        } else if (train->parsed()) {
            const auto c = resolve(train_opts, ExperimentMode::Train);
            print_seeds(optexec::run_convergence(c, c.experiment.out_dir), "train");
        } else if (ablation->parsed()) {
            const auto c = resolve(ablation_opts, ExperimentMode::Ablation);
            const auto r = optexec::run_ablation(c, c.experiment.out_dir);
            print_seeds(r.auxiliary, "auxiliary");
            print_seeds(r.standard, "standard");
        } else if (online->parsed()) {
            auto c = resolve(online_opts, ExperimentMode::Online);
            const std::string ckpt = online_opts.checkpoint.empty() ? c.online.checkpoint : online_opts.checkpoint;
            if (ckpt.empty()) throw optexec::ConfigError("online needs --checkpoint or online.checkpoint");
            const auto r = optexec::run_online(c, ckpt, c.experiment.out_dir);
            std::cout << "online: " << r.rows.size() << " episodes, median gap " << r.median_gap_bps << " bps, "
                      << 100.0 * r.fraction_within_threshold << "% within " << c.online.gap_threshold_bps
                      << " bps after warmup\n";
        } else if (eval->parsed()) {
            const auto c = resolve(eval_opts, ExperimentMode::Eval);
            const auto r = optexec::run_eval(eval_opts.checkpoint, c, c.experiment.out_dir);
            std::cout << "greedy " << r.greedy.reward << ", oracle " << r.oracle.optimal_profit << ", gap "
                      << r.gap_bps << " bps\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "optexec: error: " << e.what() << '\n';
        return EXIT_FAILURE;
    }
    return EXIT_SUCCESS;
}
