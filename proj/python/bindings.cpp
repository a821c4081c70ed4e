#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "optexec/experiments.hpp"

namespace py = pybind11;
using namespace optexec;

namespace {

// Configs cross the boundary as JSON text; the Python side turns them into dicts.
ExperimentConfig parse(const std::string& text) {
    ExperimentConfig c = config_from_json(nlohmann::json::parse(text));
    c.validate();
    return c;
}

py::dict oracle_dict(const OracleReport& r) {
    py::dict d;
    d["grid"] = r.grid;
    d["optimal"] = r.optimal.trades;
    d["twap"] = r.twap.trades;
    d["immediate"] = r.immediate.trades;
    d["optimal_profit"] = r.optimal_profit;
    d["twap_profit"] = r.twap_profit;
    d["immediate_profit"] = r.immediate_profit;
    return d;
}

py::dict convergence_dict(const ConvergenceResult& r) {
    py::list seeds;
    for (const auto& s : r.seeds) {
        py::dict d;
        d["seed"] = s.seed;
        d["final_greedy_reward"] = s.final_greedy_reward;
        d["final_gap_bps"] = s.final_gap_bps;
        d["final_strategy"] = s.final_strategy.trades;
        d["directory"] = s.directory.string();
        d["checkpoint"] = s.checkpoint.string();
        seeds.append(d);
    }
    py::dict d;
    d["oracle_reward"] = r.oracle_reward;
    d["twap_reward"] = r.twap_reward;
    d["median_final_gap_bps"] = r.median_final_gap_bps;
    d["median_final_greedy_reward"] = r.median_final_greedy_reward;
    d["seeds"] = seeds;
    return d;
}

DecayKernel kernel_of(const std::string& family, double kappa, double rho) {
    DecayKernel k{parse_kernel_family(family), kappa, rho};
    k.validate();
    return k;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Optimal execution under transient impact";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
    py::register_exception<SingularMatrixError>(m, "SingularMatrixError", PyExc_ArithmeticError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

    m.def("preset_names", &preset_names);
    m.def("preset_json", [](const std::string& name) { return to_json(preset_config(name)).dump(); });
    m.def("normalize_json", [](const std::string& text) { return to_json(parse(text)).dump(); });
    m.def("apply_overrides_json", [](const std::string& text, const std::vector<std::string>& overrides) {
        ExperimentConfig c = config_from_json(nlohmann::json::parse(text));
        for (const auto& o : overrides) apply_override(c, o);
        c.validate();
        return to_json(c).dump();
    });

    m.def("kernel_value", [](const std::string& family, double kappa, double rho, double t) {
        return kernel_value(kernel_of(family, kappa, rho), t);
    }, py::arg("family"), py::arg("kappa"), py::arg("rho"), py::arg("t"));
    m.def("optimal_strategy", [](const std::string& family, double kappa, double rho, std::vector<double> grid, double x0) {
        return optimal_strategy(kernel_of(family, kappa, rho), grid, x0).trades;
    }, py::arg("family"), py::arg("kappa"), py::arg("rho"), py::arg("grid"), py::arg("x0"));
    m.def("expected_profit", [](const std::string& family, double kappa, double rho, std::vector<double> grid,
                                std::vector<double> trades, double p0) {
        return expected_profit(kernel_of(family, kappa, rho), grid, Strategy{std::move(trades)}, p0);
    }, py::arg("family"), py::arg("kappa"), py::arg("rho"), py::arg("grid"), py::arg("trades"), py::arg("p0"));

    m.def("simulate", [](const std::string& config, const std::vector<double>& trades, std::uint64_t seed) {
        const MarketConfig market = parse(config).market;
        if (trades.size() != static_cast<std::size_t>(market.n_trades()))
            throw DomainError("expected " + std::to_string(market.n_trades()) + " trades");
        Rng rng(seed);
        MarketState s = reset(market);
        std::vector<double> rewards;
        for (double a : trades) {
            StepResult r = step(s, a, market, rng);
            rewards.push_back(r.reward);
            s = r.next_state;
        }
        return rewards;
    }, py::arg("config"), py::arg("trades"), py::arg("seed") = 0,
       "Per-trade rewards of a fixed schedule in the simulated market.");

    m.def("run_oracle", [](const std::string& config, const std::filesystem::path& out) {
        return oracle_dict(run_oracle(parse(config), out));
    });
    m.def("run_baselines", [](const std::string& config, const std::filesystem::path& out) {
        return oracle_dict(run_baselines(parse(config), out));
    });
    m.def("run_convergence", [](const std::string& config, const std::filesystem::path& out) {
        const ExperimentConfig c = parse(config);
        ConvergenceResult r;
        {
            py::gil_scoped_release release;
            r = run_convergence(c, out);
        }
        return convergence_dict(r);
    });
    m.def("run_online", [](const std::string& config, const std::filesystem::path& checkpoint,
                           const std::filesystem::path& out) {
        const ExperimentConfig c = parse(config);
        OnlineResult r;
        {
            py::gil_scoped_release release;
            r = run_online(c, checkpoint, out);
        }
        py::dict d;
        d["episodes"] = r.rows.size();
        d["fraction_within_threshold"] = r.fraction_within_threshold;
        d["median_gap_bps"] = r.median_gap_bps;
        return d;
    });
    m.def("run_eval", [](const std::filesystem::path& checkpoint, const std::string& config,
                         const std::filesystem::path& out) {
        const EvalReport r = run_eval(checkpoint, parse(config), out);
        py::dict d;
        d["strategy"] = r.greedy.strategy.trades;
        d["greedy_reward"] = r.greedy.reward;
        d["gap_bps"] = r.gap_bps;
        d["oracle"] = oracle_dict(r.oracle);
        return d;
    });
}
