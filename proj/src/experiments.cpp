#include "optexec/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace optexec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return os;
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

void write_oracle_summary(const fs::path& path, const MarketConfig& market, const OracleReport& r) {
    json j;
    j["kernel"] = {{"family", std::string(to_string(market.kernel.family))},
                   {"kappa", market.kernel.kappa},
                   {"rho", market.kernel.rho}};
    j["expected_profit"] = {{"optimal", r.optimal_profit}, {"twap", r.twap_profit}, {"immediate", r.immediate_profit}};
    j["gap_bps"] = {{"twap", gap_bps(r.optimal_profit, r.twap_profit)},
                    {"immediate", gap_bps(r.optimal_profit, r.immediate_profit)}};
    j["optimal_trades"] = r.optimal.trades;
    write_json(path, j);
}

}  // namespace

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

CsvMetricsSink::CsvMetricsSink(const fs::path& dir) {
    ensure_dir(dir);
    metrics_ = open_out(dir / "metrics.csv");
    timing_ = open_out(dir / "timing.csv");
    metrics_ << header() << '\n' << std::flush;
    timing_ << "episode,wall_ms\n" << std::flush;
}

const char* CsvMetricsSink::header() { return "episode,executed_reward,greedy_reward,oracle_reward,gap_bps,rho,epsilon"; }

void CsvMetricsSink::on_episode(const MetricsRow& row) {
    metrics_ << row.episode << ',' << fmt(row.executed_reward) << ',' << fmt(row.greedy_reward) << ','
             << fmt(row.oracle_reward) << ',' << fmt(row.gap_bps) << ',' << fmt(row.rho) << ',' << fmt(row.epsilon)
             << '\n'
             << std::flush;
    timing_ << row.episode << ',' << fmt(row.wall_ms) << '\n' << std::flush;
}

std::vector<MetricsRow> read_metrics_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != CsvMetricsSink::header()) throw std::runtime_error(path.string() + ": unexpected header");
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() == 6) cells.emplace_back();  // trailing empty column
        if (cells.size() != 7) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
        MetricsRow r;
        r.episode = std::stoll(cells[0]);
        r.executed_reward = std::stod(cells[1]);
        if (!cells[2].empty()) r.greedy_reward = std::stod(cells[2]);
        r.oracle_reward = std::stod(cells[3]);
        if (!cells[4].empty()) r.gap_bps = std::stod(cells[4]);
        r.rho = std::stod(cells[5]);
        r.epsilon = std::stod(cells[6]);
        rows.push_back(r);
    }
    return rows;
}

OracleReport compute_oracle(const MarketConfig& market) {
    market.validate();
    OracleReport r;
    r.grid = market.grid();
    r.optimal = optimal_strategy(market.kernel, r.grid, market.x0);
    r.twap = twap_strategy(market.x0, market.n_steps);
    r.immediate = immediate_strategy(market.x0, market.n_steps);
    r.optimal_profit = expected_profit(market.kernel, r.grid, r.optimal, market.p0);
    r.twap_profit = expected_profit(market.kernel, r.grid, r.twap, market.p0);
    r.immediate_profit = expected_profit(market.kernel, r.grid, r.immediate, market.p0);
    return r;
}

namespace {

OracleReport oracle_or_explain(const MarketConfig& market) {
    try {
        return compute_oracle(market);
    } catch (const SingularMatrixError& e) {
        std::ostringstream os;
        os << e.what() << " (kernel " << to_string(market.kernel.family) << ", kappa=" << market.kernel.kappa
           << ", rho=" << market.kernel.rho << ", N=" << market.n_steps << ", dt=" << market.dt << ")";
        throw std::runtime_error(os.str());
    }
}

}  // namespace

OracleReport run_oracle(const ExperimentConfig& config, const fs::path& out) {
    config.validate();
    const OracleReport r = oracle_or_explain(config.market);
    ensure_dir(out);
    std::ofstream csv = open_out(out / "strategy.csv");
    csv << "k,t_k,xi_optimal,xi_twap\n";
    for (std::size_t k = 0; k < r.grid.size(); ++k) {
        csv << k << ',' << fmt(r.grid[k]) << ',' << fmt(r.optimal.trades[k]) << ',' << fmt(r.twap.trades[k]) << '\n';
    }
    write_oracle_summary(out / "summary.json", config.market, r);
    return r;
}

OracleReport run_baselines(const ExperimentConfig& config, const fs::path& out) {
    config.validate();
    const OracleReport r = oracle_or_explain(config.market);
    ensure_dir(out);
    std::ofstream csv = open_out(out / "baselines.csv");
    csv << "k,t_k,xi_optimal,xi_twap,xi_immediate\n";
    for (std::size_t k = 0; k < r.grid.size(); ++k) {
        csv << k << ',' << fmt(r.grid[k]) << ',' << fmt(r.optimal.trades[k]) << ',' << fmt(r.twap.trades[k]) << ','
            << fmt(r.immediate.trades[k]) << '\n';
    }
    write_oracle_summary(out / "summary.json", config.market, r);
    return r;
}

DdpgTrainer load_trainer(const fs::path& checkpoint, const TrainerConfig& config, bool adopt_window) {
    std::ifstream in(checkpoint);
    if (!in) throw CheckpointError("cannot open checkpoint " + checkpoint.string());
    return DdpgTrainer::load(in, config, adopt_window);
}

void save_trainer(const DdpgTrainer& trainer, const fs::path& checkpoint) {
    std::ofstream os = open_out(checkpoint);
    trainer.save(os);
    if (!os) throw std::runtime_error("failed writing checkpoint " + checkpoint.string());
}

ConvergenceResult run_convergence(const ExperimentConfig& config, const fs::path& out) {
    config.validate();
    ensure_dir(out);
    save_config(config, out / "config.json");
    const OracleReport oracle = oracle_or_explain(config.market);

    ConvergenceResult result;
    result.oracle_reward = oracle.optimal_profit;
    result.twap_reward = oracle.twap_profit;
    result.seeds.resize(config.experiment.seeds.size());

    parallel_for(config.experiment.seeds.size(), config.experiment.jobs, [&](std::size_t i) {
        const std::uint64_t seed = config.experiment.seeds[i];
        TrainerConfig tc = config.trainer;
        tc.seed = seed;
        const fs::path dir = out / ("seed_" + std::to_string(seed));
        DdpgTrainer trainer(config.market, tc);
        {
            CsvMetricsSink sink(dir);
            trainer.train(tc.episodes, &sink);
        }
        const GreedyResult final_greedy = trainer.greedy_rollout();
        const auto& best = trainer.best_greedy();
        const Strategy best_strategy =
            best ? greedy_rollout(best->actor, trainer.market(), trainer.scaling()).strategy : final_greedy.strategy;

        SeedOutcome& o = result.seeds[i];
        o.seed = seed;
        o.final_greedy_reward = final_greedy.reward;
        o.final_gap_bps = gap_bps(oracle.optimal_profit, final_greedy.reward);
        o.best_greedy_reward = best ? best->reward : final_greedy.reward;
        o.best_episode = best ? best->episode : -1;
        o.final_strategy = final_greedy.strategy;
        o.directory = dir;
        o.checkpoint = dir / "checkpoint.txt";
        save_trainer(trainer, o.checkpoint);

        std::ofstream csv = open_out(dir / "strategy.csv");
        csv << "k,t_k,xi_agent_final,xi_agent_best,xi_optimal,xi_twap\n";
        for (std::size_t k = 0; k < oracle.grid.size(); ++k) {
            csv << k << ',' << fmt(oracle.grid[k]) << ',' << fmt(final_greedy.strategy.trades[k]) << ','
                << fmt(best_strategy.trades[k]) << ',' << fmt(oracle.optimal.trades[k]) << ','
                << fmt(oracle.twap.trades[k]) << '\n';
        }
        json s;
        s["seed"] = seed;
        s["q_mode"] = std::string(to_string(tc.q_mode));
        s["episodes"] = tc.episodes;
        s["updates"] = trainer.updates_done();
        s["final_greedy_reward"] = o.final_greedy_reward;
        s["final_gap_bps"] = o.final_gap_bps;
        s["best_greedy_reward"] = o.best_greedy_reward;
        s["best_gap_bps"] = gap_bps(oracle.optimal_profit, o.best_greedy_reward);
        s["best_episode"] = o.best_episode;
        s["oracle_reward"] = oracle.optimal_profit;
        s["twap_reward"] = oracle.twap_profit;
        s["beats_twap"] = o.final_greedy_reward > oracle.twap_profit;
        write_json(dir / "summary.json", s);
    });

    std::vector<double> gaps, rewards;
    for (const auto& o : result.seeds) {
        gaps.push_back(o.final_gap_bps);
        rewards.push_back(o.final_greedy_reward);
    }
    result.median_final_gap_bps = median(gaps);
    result.median_final_greedy_reward = median(rewards);

    json s;
    s["seeds"] = config.experiment.seeds;
    s["q_mode"] = std::string(to_string(config.trainer.q_mode));
    s["oracle_reward"] = result.oracle_reward;
    s["twap_reward"] = result.twap_reward;
    s["final_gap_bps"] = gaps;
    s["median_final_gap_bps"] = result.median_final_gap_bps;
    s["median_final_greedy_reward"] = result.median_final_greedy_reward;
    write_json(out / "summary.json", s);
    return result;
}

AblationResult run_ablation(const ExperimentConfig& config, const fs::path& out) {
    ExperimentConfig aux = config;
    aux.trainer.q_mode = QMode::Auxiliary;
    ExperimentConfig standard = config;
    standard.trainer.q_mode = QMode::Standard;

    AblationResult r;
    r.auxiliary = run_convergence(aux, out / "auxiliary");
    r.standard = run_convergence(standard, out / "standard");

    json s;
    s["seeds"] = config.experiment.seeds;
    s["median_final_gap_bps"] = {{"auxiliary", r.auxiliary.median_final_gap_bps},
                                 {"standard", r.standard.median_final_gap_bps}};
    s["auxiliary_not_worse"] = r.auxiliary.median_final_gap_bps <= r.standard.median_final_gap_bps;
    write_json(out / "summary.json", s);
    return r;
}

OnlineResult run_online(const ExperimentConfig& config, const fs::path& checkpoint, const fs::path& out) {
    config.validate();
    TrainerConfig tc = config.trainer;
    tc.epsilon = config.online.epsilon;
    tc.ou_sigma = config.online.sigma_eps;
    DdpgTrainer trainer = load_trainer(checkpoint, tc);
    if (trainer.market().kernel.family != config.market.kernel.family) {
        throw CheckpointError("checkpoint was trained on a " + std::string(to_string(trainer.market().kernel.family)) +
                              " kernel but the online run uses " +
                              std::string(to_string(config.market.kernel.family)));
    }
    trainer.set_exploration(config.online.epsilon, config.online.sigma_eps);

    ensure_dir(out);
    save_config(config, out / "config.json");
    const RhoSchedule schedule{config.online.rho_start, config.online.rho_end};
    OnlineResult result;
    {
        struct Tee final : MetricsSink {
            CsvMetricsSink csv;
            std::vector<MetricsRow>* rows;
            Tee(const fs::path& dir, std::vector<MetricsRow>* r) : csv(dir), rows(r) {}
            void on_episode(const MetricsRow& row) override {
                csv.on_episode(row);
                rows->push_back(row);
            }
        } sink(out, &result.rows);
        trainer.online_train(schedule, config.online.episodes, config.online.eval_every, &sink);
    }
    save_trainer(trainer, out / "checkpoint.txt");

    std::vector<double> gaps;
    std::size_t within = 0;
    for (const auto& row : result.rows) {
        if (row.episode < config.online.warmup || !row.gap_bps) continue;
        gaps.push_back(*row.gap_bps);
        if (*row.gap_bps <= config.online.gap_threshold_bps) ++within;
    }
    result.fraction_within_threshold = gaps.empty() ? 0.0 : static_cast<double>(within) / gaps.size();
    result.median_gap_bps = median(gaps);

    json s;
    s["rho_start"] = schedule.rho_start;
    s["rho_end"] = schedule.rho_end;
    s["episodes"] = config.online.episodes;
    s["warmup"] = config.online.warmup;
    s["gap_threshold_bps"] = config.online.gap_threshold_bps;
    s["fraction_within_threshold"] = result.fraction_within_threshold;
    s["median_gap_bps"] = result.median_gap_bps;
    write_json(out / "summary.json", s);
    return result;
}

EvalReport run_eval(const fs::path& checkpoint, const ExperimentConfig& config, const fs::path& out) {
    const DdpgTrainer trainer = load_trainer(checkpoint, config.trainer, /*adopt_window=*/true);
    EvalReport r;
    r.greedy = trainer.greedy_rollout();
    r.oracle = oracle_or_explain(trainer.market());
    r.gap_bps = gap_bps(r.oracle.optimal_profit, r.greedy.reward);

    ensure_dir(out);
    std::ofstream csv = open_out(out / "strategy.csv");
    csv << "k,t_k,xi_agent,xi_optimal,xi_twap\n";
    for (std::size_t k = 0; k < r.oracle.grid.size(); ++k) {
        csv << k << ',' << fmt(r.oracle.grid[k]) << ',' << fmt(r.greedy.strategy.trades[k]) << ','
            << fmt(r.oracle.optimal.trades[k]) << ',' << fmt(r.oracle.twap.trades[k]) << '\n';
    }
    json j;
    j["greedy_reward"] = r.greedy.reward;
    j["oracle_reward"] = r.oracle.optimal_profit;
    j["twap_reward"] = r.oracle.twap_profit;
    j["gap_bps"] = r.gap_bps;
    j["agent_trades"] = r.greedy.strategy.trades;
    write_json(out / "report.json", j);
    return r;
}

}  // namespace optexec
