#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "optexec/common.hpp"

namespace optexec {

enum class KernelFamily { Exponential, PowerLaw, LinearResilience };

std::string_view to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

/// Residual impact G(t) of a unit trade, t time units after execution.
///
///   Exponential       G(t) = kappa * exp(-rho t)
///   PowerLaw          G(t) = kappa * (1 + t)^(-rho)
///   LinearResilience  G(t) = kappa * max(1 - rho t, 0)
struct DecayKernel {
    KernelFamily family = KernelFamily::Exponential;
    double kappa = 1.0;
    double rho = 1.0;

    /// Throws DomainError unless kappa > 0 and rho > 0.
    void validate() const;

    double operator()(double t) const;
    double at_zero() const { return kappa; }

    bool operator==(const DecayKernel&) const = default;
};

/// G(t) for t >= 0; throws DomainError on negative (or NaN) t.
double kernel_value(const DecayKernel& kernel, double t);

struct MarketConfig {
    double p0 = 50.0;
    double sigma_w = 1e-4;  // per unit time; increments are sigma_w * sqrt(dt) * Z
    double x0 = 10.0;
    int n_steps = 9;        // N; trades happen at t_0..t_N
    double dt = 1.0;
    DecayKernel kernel{};

    void validate() const;

    int n_trades() const { return n_steps + 1; }
    double horizon() const { return n_steps * dt; }
    double time_at(int k) const { return k * dt; }
    std::vector<double> grid() const;

    bool operator==(const MarketConfig&) const = default;
};

struct MarketState {
    int step_index = 0;
    double inventory = 0.0;
    std::vector<double> past_trades;
    double exec_price = 0.0;
    double unaffected_price = 0.0;

    bool operator==(const MarketState&) const = default;
};

/// Price-free view of a state: (t, X_t, xi_{0:t-1}) with the history zero-padded to N+1.
struct ProjectedState {
    int step_index = 0;
    double inventory = 0.0;
    std::vector<double> past_trades_padded;

    bool operator==(const ProjectedState&) const = default;
};

struct TransitionRecord {
    MarketState state;
    double action = 0.0;
    double reward = 0.0;
    MarketState next_state;
    bool done = false;

    bool operator==(const TransitionRecord&) const = default;
};

struct StepResult {
    MarketState next_state;
    double reward = 0.0;
    bool done = false;
};

/// Absolute slack tolerated on trade bounds before a trade is rejected.
double action_slack(const MarketConfig& config);

/// Initial state: k = 0, X = x0, no history, P = P^0 = p0.
MarketState reset(const MarketConfig& config);

/// Execution profit of selling |action| at the current execution price with a
/// block-shaped book of depth 1/G(0): -((P+)^2 - P^2) / (2 G(0)), P+ = P + action G(0).
double reward(const MarketState& state, double action, const DecayKernel& kernel);

/// Impact-weighted sum of past trades at the state's time, recomputed from the full history.
double impact_offset(const MarketConfig& config, int step_index, std::span<const double> past_trades);

/// Executes `action` at `state`, returns the reward and the next state. At k = N the action
/// must liquidate the remaining inventory. Actions within action_slack() of the bounds
/// are clamped; anything further out throws DomainError.
StepResult step(const MarketState& state, double action, const MarketConfig& config, Rng& rng);

ProjectedState project(const MarketState& state, const MarketConfig& config);

/// Convenience wrapper that owns a config, a generator and the current state.
class MarketEnv {
public:
    explicit MarketEnv(MarketConfig config);

    const MarketState& reset(std::uint64_t seed);
    StepResult step(double action);

    const MarketState& state() const { return state_; }
    const MarketConfig& config() const { return config_; }
    bool terminal() const { return state_.step_index > config_.n_steps; }

    void set_kernel(const DecayKernel& kernel);

private:
    MarketConfig config_;
    Rng rng_;
    MarketState state_;
};

}  // namespace optexec
