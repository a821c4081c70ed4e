#pragma once

// Property checks shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "optexec/ddpg.hpp"
#include "oracles.hpp"

namespace checks {

using namespace optexec;

struct Outcome {
    bool ok = true;
    double worst = 0.0;  // largest violation seen (relative for gradients, absolute otherwise)
    int cases = 0;
};

// |analytic - fd| relative to the larger magnitude; entries smaller than `floor` are
// measured against the floor instead, so near-zero gradients do not blow up.
inline double rel_violation(double analytic, double fd, double floor) {
    const double scale = std::max({std::abs(analytic), std::abs(fd), floor});
    return std::abs(analytic - fd) / scale;
}

inline double min_abs_pre(const Mlp& net, const Eigen::MatrixXd& x) {
    Mlp::Cache cache;
    net.forward(x, cache);
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : cache.pre) m = std::min(m, p.cwiseAbs().minCoeff());
    return m;
}

inline Mlp random_small_net(std::vector<int> sizes, std::mt19937_64& gen) {
    Rng rng(gen());
    Mlp net = xavier_init(sizes, rng);
    std::normal_distribution<double> n01(0.0, 0.3);
    for (std::size_t l = 0; l < net.num_layers(); ++l)
        for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) net.bias(l)(i) = n01(gen);
    return net;
}

inline MarketConfig small_market(int n_steps = 3) {
    MarketConfig m;
    m.n_steps = n_steps;
    return m;
}

// Transitions from episodes with random fractional sells.
inline std::vector<TransitionRecord> random_records(const MarketConfig& market, int episodes, std::mt19937_64& gen) {
    std::vector<TransitionRecord> out;
    std::uniform_real_distribution<double> frac(0.05, 0.95);
    Rng rng(gen());
    for (int e = 0; e < episodes; ++e) {
        MarketState s = reset(market);
        while (s.step_index <= market.n_steps) {
            const double a = s.step_index == market.n_steps ? -s.inventory : -frac(gen) * s.inventory;
            StepResult r = step(s, a, market, rng);
            out.push_back(TransitionRecord{s, a, r.reward, r.next_state, r.done});
            s = r.next_state;
        }
    }
    return out;
}

inline std::vector<const TransitionRecord*> pointers(const std::vector<TransitionRecord>& records) {
    std::vector<const TransitionRecord*> p;
    for (const auto& r : records) p.push_back(&r);
    return p;
}

// Central differences (h = 1e-5) against backprop: plain nets, the critic loss and the
// actor objective chained through the critic's action input. Probe points where a
// hidden pre-activation sits within 1e-3 of a ReLU kink are redrawn.
inline Outcome gradient_suite(int n_nets, std::uint64_t seed) {
    Outcome out;
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n01;
    constexpr double kRel = 1e-4, kAbs = 1e-3, kKink = 1e-3;

    int done = 0;
    while (done < n_nets) {
        std::uniform_int_distribution<int> depth(0, 3), width(1, 8), io(1, 4);
        std::vector<int> sizes{io(gen)};
        const int d = depth(gen);
        for (int i = 0; i < d; ++i) sizes.push_back(width(gen));
        sizes.push_back(io(gen));
        Mlp net = random_small_net(sizes, gen);
        Eigen::MatrixXd x(net.input_dim(), 2);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n01(gen);
        if (min_abs_pre(net, x) < kKink) continue;
        Eigen::MatrixXd w(net.output_dim(), 2);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n01(gen);

        auto f = [&] { return (net.forward(x).array() * w.array()).sum(); };
        Mlp::Cache cache;
        net.forward(x, cache);
        const auto g = net.backward(cache, w);
        for (Eigen::Index p = 0; p < net.num_params(); ++p) {
            double& v = net.params()(p);
            const double saved = v;
            const double fd = oracle::central_difference([&](double t) { v = t; return f(); }, saved);
            v = saved;
            out.worst = std::max(out.worst, rel_violation(g.params(p), fd, kAbs));
        }
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            double& v = x.data()[i];
            const double saved = v;
            const double fd = oracle::central_difference([&](double t) { v = t; return f(); }, saved);
            v = saved;
            out.worst = std::max(out.worst, rel_violation(g.input.data()[i], fd, kAbs));
        }
        ++done;
    }

    // Critic loss and actor objective on a small market.
    const MarketConfig market = small_market(3);
    const FeatureScaling scaling = FeatureScaling::from(market);
    int composite = 0;
    while (composite < n_nets) {
        const auto records = random_records(market, 2, gen);
        const auto batch = pointers(records);
        Mlp actor = random_small_net({scaling.actor_input_dim(), 5, 4, 1}, gen);
        Mlp critic = random_small_net({scaling.critic_input_dim(), 6, 5, 1}, gen);
        Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = n01(gen);

        // Kink guard on every network input the losses will see.
        Eigen::MatrixXd xa(scaling.actor_input_dim(), static_cast<Eigen::Index>(batch.size()));
        Eigen::MatrixXd xc_stored(scaling.critic_input_dim(), xa.cols()), xc_policy(scaling.critic_input_dim(), xa.cols());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const ProjectedState p = project(batch[i]->state, market);
            xa.col(static_cast<Eigen::Index>(i)) = actor_features(p, scaling);
            xc_stored.col(static_cast<Eigen::Index>(i)) = critic_features(p, batch[i]->action, scaling);
            const double a = squash_action(actor_raw(actor, p, scaling), p.inventory);
            xc_policy.col(static_cast<Eigen::Index>(i)) = critic_features(p, a, scaling);
        }
        if (min_abs_pre(actor, xa) < kKink || min_abs_pre(critic, xc_stored) < kKink ||
            min_abs_pre(critic, xc_policy) < kKink) {
            continue;
        }

        const auto cl = critic_loss(critic, batch, y, scaling);
        for (Eigen::Index p = 0; p < critic.num_params(); ++p) {
            double& v = critic.params()(p);
            const double saved = v;
            const double fd = oracle::central_difference(
                [&](double t) { v = t; return critic_loss(critic, batch, y, scaling).loss; }, saved);
            v = saved;
            out.worst = std::max(out.worst, rel_violation(cl.gradient(p), fd, kAbs));
        }
        const auto al = actor_loss(actor, critic, batch, scaling);
        for (Eigen::Index p = 0; p < actor.num_params(); ++p) {
            double& v = actor.params()(p);
            const double saved = v;
            const double fd = oracle::central_difference(
                [&](double t) { v = t; return actor_loss(actor, critic, batch, scaling).loss; }, saved);
            v = saved;
            out.worst = std::max(out.worst, rel_violation(al.gradient(p), fd, kAbs));
        }
        ++composite;
    }
    out.cases = done + composite;
    out.ok = out.worst <= kRel;
    return out;
}

// Zero-noise episode: take `prefix` actions, then follow `actor` to the end.
struct Rollout {
    std::vector<MarketState> states;  // state before each trade
    std::vector<double> actions;
    std::vector<double> rewards;
};

inline Rollout rollout(const Mlp& actor, const MarketConfig& quiet, const FeatureScaling& scaling,
                       const std::vector<double>& prefix) {
    Rollout r;
    Rng unused(0);
    MarketState s = reset(quiet);
    while (s.step_index <= quiet.n_steps) {
        const auto k = static_cast<std::size_t>(s.step_index);
        double a;
        if (s.step_index == quiet.n_steps) a = -s.inventory;
        else if (k < prefix.size()) a = prefix[k];
        else a = squash_action(actor_raw(actor, project(s, quiet), scaling), s.inventory);
        StepResult st = step(s, a, quiet, unused);
        r.states.push_back(s);
        r.actions.push_back(st.next_state.past_trades.back());
        r.rewards.push_back(st.reward);
        s = st.next_state;
    }
    return r;
}

// Auxiliary Q by rollout: return-to-go of (s_k, a) under the policy, minus X_k p0.
inline double aux_q(const Mlp& actor, const MarketConfig& quiet, const FeatureScaling& scaling,
                    std::vector<double> prefix, double a) {
    const std::size_t k = prefix.size();
    prefix.push_back(a);
    const Rollout r = rollout(actor, quiet, scaling, prefix);
    double g = 0.0;
    for (std::size_t j = k; j < r.rewards.size(); ++j) g += r.rewards[j];
    return g - r.states[k].inventory * quiet.p0;
}

// For each policy and each step k: Q(s_k, a) = r + a p0 + Q(s_{k+1}, pi(s_{k+1})) for the
// on-policy action and one random off-policy action, plus the identity
// standard return-to-go - X_k p0 = sum_{j>=k} (r_j + a_j p0).
inline Outcome auxiliary_bellman(int n_policies, std::uint64_t seed, const MarketConfig& base = MarketConfig{}) {
    Outcome out;
    std::mt19937_64 gen(seed);
    MarketConfig quiet = base;
    quiet.sigma_w = 0.0;
    const FeatureScaling scaling = FeatureScaling::from(quiet);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int p = 0; p < n_policies; ++p) {
        Mlp actor = random_small_net({scaling.actor_input_dim(), 16, 16, 1}, gen);
        const Rollout on = rollout(actor, quiet, scaling, {});
        std::vector<double> prefix;
        for (int k = 0; k <= quiet.n_steps; ++k) {
            const double x = on.states[k].inventory;
            const double a_on = on.actions[k];
            const double alt = k == quiet.n_steps ? -x : -u(gen) * x;
            for (double a : {a_on, alt}) {
                const double lhs = aux_q(actor, quiet, scaling, prefix, a);
                // One step with action a, then the policy's action at s'.
                std::vector<double> with_a = prefix;
                with_a.push_back(a);
                const Rollout after = rollout(actor, quiet, scaling, with_a);
                const double r = after.rewards[k];
                double rhs = r + a * quiet.p0;
                if (k < quiet.n_steps) rhs += aux_q(actor, quiet, scaling, with_a, after.actions[k + 1]);
                out.worst = std::max(out.worst, std::abs(lhs - rhs));
                ++out.cases;
            }
            // Standard vs auxiliary return-to-go along the on-policy path.
            double standard = 0.0, auxiliary = 0.0;
            for (std::size_t j = static_cast<std::size_t>(k); j < on.rewards.size(); ++j) {
                standard += on.rewards[j];
                auxiliary += on.rewards[j] + on.actions[j] * quiet.p0;
            }
            out.worst = std::max(out.worst, std::abs((standard - x * quiet.p0) - auxiliary));
            prefix.push_back(a_on);
        }
    }
    out.ok = out.worst <= 1e-9;
    return out;
}

}  // namespace checks
