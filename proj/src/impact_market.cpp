#include "optexec/impact_market.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace optexec {

std::string_view to_string(KernelFamily family) {
    switch (family) {
        case KernelFamily::Exponential: return "exponential";
        case KernelFamily::PowerLaw: return "power_law";
        case KernelFamily::LinearResilience: return "linear_resilience";
    }
    return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
    if (name == "exponential" || name == "exp") return KernelFamily::Exponential;
    if (name == "power_law" || name == "powerlaw") return KernelFamily::PowerLaw;
    if (name == "linear_resilience" || name == "linres") return KernelFamily::LinearResilience;
    throw DomainError("unknown kernel family '" + std::string(name) + "'");
}

void DecayKernel::validate() const {
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("kernel kappa must be > 0");
    if (!(rho > 0.0) || !std::isfinite(rho)) throw DomainError("kernel rho must be > 0");
}

double DecayKernel::operator()(double t) const {
    switch (family) {
        case KernelFamily::Exponential: return kappa * std::exp(-rho * t);
        case KernelFamily::PowerLaw: return kappa * std::pow(1.0 + t, -rho);
        case KernelFamily::LinearResilience: return kappa * std::max(1.0 - rho * t, 0.0);
    }
    return 0.0;
}

double kernel_value(const DecayKernel& kernel, double t) {
    if (!(t >= 0.0)) throw DomainError("kernel evaluated at negative time");
    return kernel(t);
}

void MarketConfig::validate() const {
    if (!(x0 > 0.0)) throw DomainError("x0 must be > 0");
    if (n_steps < 1) throw DomainError("n_steps must be >= 1");
    if (!(dt > 0.0)) throw DomainError("dt must be > 0");
    if (!(p0 > 0.0)) throw DomainError("p0 must be > 0");
    if (!(sigma_w >= 0.0)) throw DomainError("sigma_w must be >= 0");
    kernel.validate();
}

std::vector<double> MarketConfig::grid() const {
    std::vector<double> times(static_cast<std::size_t>(n_trades()));
    for (int k = 0; k < n_trades(); ++k) times[static_cast<std::size_t>(k)] = time_at(k);
    return times;
}

double action_slack(const MarketConfig& config) { return 1e-12 * std::max(1.0, config.x0); }

MarketState reset(const MarketConfig& config) {
    config.validate();
    MarketState s;
    s.step_index = 0;
    s.inventory = config.x0;
    s.exec_price = config.p0;
    s.unaffected_price = config.p0;
    return s;
}

double reward(const MarketState& state, double action, const DecayKernel& kernel) {
    constexpr double slack = 1e-12;
    const double lo = -state.inventory - slack * std::max(1.0, state.inventory);
    if (!(action >= lo && action <= slack)) {
        throw DomainError("trade outside [-inventory, 0]");
    }
    // Expanded form of -((P + a G0)^2 - P^2) / (2 G0); avoids cancellation at large P.
    return -action * state.exec_price - 0.5 * action * action * kernel.at_zero();
}

double impact_offset(const MarketConfig& config, int step_index, std::span<const double> past_trades) {
    const double now = config.time_at(step_index);
    double offset = 0.0;
    for (std::size_t j = 0; j < past_trades.size(); ++j) {
        offset += config.kernel(now - config.time_at(static_cast<int>(j))) * past_trades[j];
    }
    return offset;
}

StepResult step(const MarketState& state, double action, const MarketConfig& config, Rng& rng) {
    const int n = config.n_steps;
    if (state.step_index < 0 || state.step_index > n) {
        throw DomainError("cannot step a terminal state");
    }
    const double slack = action_slack(config);
    if (action > slack || action < -state.inventory - slack) {
        std::ostringstream os;
        os << "trade " << action << " outside [" << -state.inventory << ", 0] at step " << state.step_index;
        throw DomainError(os.str());
    }
    double trade = std::clamp(action, -state.inventory, 0.0);
    if (state.step_index == n) {
        if (std::abs(trade + state.inventory) > slack) {
            throw DomainError("final trade must liquidate the remaining inventory");
        }
        trade = -state.inventory;
    }

    StepResult out;
    out.reward = reward(state, trade, config.kernel);

    MarketState& next = out.next_state;
    next.step_index = state.step_index + 1;
    next.past_trades = state.past_trades;
    next.past_trades.push_back(trade);
    next.inventory = state.inventory + trade;

    std::normal_distribution<double> normal(0.0, 1.0);
    next.unaffected_price = state.unaffected_price + config.sigma_w * std::sqrt(config.dt) * normal(rng);
    next.exec_price = next.unaffected_price + impact_offset(config, next.step_index, next.past_trades);
    out.done = next.step_index == n + 1;
    return out;
}

ProjectedState project(const MarketState& state, const MarketConfig& config) {
    ProjectedState p;
    p.step_index = state.step_index;
    p.inventory = state.inventory;
    p.past_trades_padded.assign(static_cast<std::size_t>(config.n_trades()), 0.0);
    const std::size_t filled = std::min(state.past_trades.size(), p.past_trades_padded.size());
    std::copy_n(state.past_trades.begin(), filled, p.past_trades_padded.begin());
    return p;
}

MarketEnv::MarketEnv(MarketConfig config) : config_(std::move(config)) {
    config_.validate();
    state_ = optexec::reset(config_);
}

const MarketState& MarketEnv::reset(std::uint64_t seed) {
    rng_.seed(seed);
    state_ = optexec::reset(config_);
    return state_;
}

StepResult MarketEnv::step(double action) {
    StepResult r = optexec::step(state_, action, config_, rng_);
    state_ = r.next_state;
    return r;
}

void MarketEnv::set_kernel(const DecayKernel& kernel) {
    kernel.validate();
    config_.kernel = kernel;
}

}  // namespace optexec
