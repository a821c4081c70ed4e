#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "optexec/closed_form.hpp"
#include "optexec/impact_market.hpp"
#include "optexec/neural.hpp"
#include "optexec/rl_components.hpp"

namespace optexec {

/// Which Bellman form the critic is trained on.
///   Auxiliary: Q(pi(s), a) - x p0, target y = r + a p0 + (1 - d) Q'(pi(s'), a')
///   Standard:  plain Q,              target y = r + (1 - d) Q'(pi(s'), a')
enum class QMode { Auxiliary, Standard };

std::string_view to_string(QMode mode);
QMode parse_q_mode(std::string_view name);
std::string_view to_string(PolyakConvention convention);
PolyakConvention parse_polyak_convention(std::string_view name);

/// Linear decay-rate schedule rho(h) = start + (end - start) * h / (H - 1).
struct RhoSchedule {
    double rho_start = 1.0;
    double rho_end = 1.0;

    double at(std::int64_t episode, std::int64_t total) const;
};

struct TrainerConfig {
    std::int64_t episodes = 30000;  // H
    std::size_t batch = 1000;       // B
    std::size_t window = 15000;     // D
    double epsilon = 1.0;
    double ou_theta = 0.15;
    double ou_sigma = 0.2;
    double lr_critic = 5e-4;
    int critic_depth = 14;
    int critic_width = 64;
    double lr_actor = 5e-5;
    int actor_depth = 10;
    int actor_width = 54;
    double tau_critic = 0.005;  // tau_phi
    double tau_actor = 0.005;   // tau_theta
    PolyakConvention polyak = PolyakConvention::AsPaper;
    QMode q_mode = QMode::Auxiliary;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    std::int64_t eval_every = 100;  // greedy-rollout cadence, in episodes

    void validate() const;
    bool operator==(const TrainerConfig&) const = default;
};

/// Normalisation constants, frozen when a trainer is built.
struct FeatureScaling {
    double horizon = 1.0;  // T
    double x0 = 1.0;
    double p0 = 1.0;
    int n_steps = 1;

    static FeatureScaling from(const MarketConfig& market);
    int actor_input_dim() const { return n_steps + 3; }
    int critic_input_dim() const { return n_steps + 4; }
    bool operator==(const FeatureScaling&) const = default;
};

/// Actor input [t/T, X/X0, xi_{0:t-1}/X0 padded to N+1]. Writes into `out` (length N+3).
void encode_state(const ProjectedState& state, const FeatureScaling& scaling, std::span<double> out);
Eigen::VectorXd actor_features(const ProjectedState& state, const FeatureScaling& scaling);
/// Critic input: actor input followed by a/X0.
Eigen::VectorXd critic_features(const ProjectedState& state, double action, const FeatureScaling& scaling);

double sigmoid(double u);
/// Trade from raw actor output: -X * sigmoid(u), always inside [-X, 0].
inline double squash_action(double raw, double inventory) { return -inventory * sigmoid(raw); }

double actor_raw(const Mlp& actor, const ProjectedState& state, const FeatureScaling& scaling);

/// Behaviour policy. Step N liquidates; otherwise one uniform coin decides between the
/// noisy branch (-X sigmoid(raw + OU), advancing the noise) and the plain branch.
double select_action(const Mlp& actor, const ProjectedState& state, const FeatureScaling& scaling, OuNoise& noise,
                     Rng& rng, double epsilon);

/// Scratch buffers for one network update. Reusing a workspace keeps the training
/// loop free of per-update heap allocation; results do not depend on its contents.
struct UpdateWorkspace {
    Eigen::MatrixXd features;
    Eigen::MatrixXd actor_input;
    Eigen::MatrixXd output_grad;
    Eigen::MatrixXd action_grad;
    Eigen::MatrixXd input_grad;
    Eigen::VectorXd gradient;
    Eigen::VectorXd targets;
    Mlp::Cache actor_cache;
    Mlp::Cache critic_cache;
};

/// Bootstrapped critic targets for a batch. The target actor's proposal at a
/// next state with step index N is replaced by the forced liquidation -X'.
Eigen::VectorXd critic_targets(std::span<const TransitionRecord* const> batch, const Mlp& target_actor,
                               const Mlp& target_critic, const FeatureScaling& scaling, QMode mode);
const Eigen::VectorXd& critic_targets(std::span<const TransitionRecord* const> batch, const Mlp& target_actor,
                                      const Mlp& target_critic, const FeatureScaling& scaling, QMode mode,
                                      UpdateWorkspace& ws);
double critic_target(const TransitionRecord& record, const Mlp& target_actor, const Mlp& target_critic,
                     const FeatureScaling& scaling, QMode mode);

struct LossAndGradient {
    double loss = 0.0;
    Eigen::VectorXd gradient;
};

/// (1/B) sum (Q(pi(s), a) - y)^2 and its gradient with respect to the critic parameters.
LossAndGradient critic_loss(const Mlp& critic, std::span<const TransitionRecord* const> batch,
                            const Eigen::VectorXd& targets, const FeatureScaling& scaling);

/// -(1/B) sum Q(pi(s), -X sigmoid(actor(pi(s)))) and its gradient with respect to the
/// actor parameters, chained through the critic's action input. Critic is held fixed.
LossAndGradient actor_loss(const Mlp& actor, const Mlp& critic, std::span<const TransitionRecord* const> batch,
                           const FeatureScaling& scaling);

// Workspace variants leave the gradient in ws.gradient and return the loss.
double critic_loss(const Mlp& critic, std::span<const TransitionRecord* const> batch, const Eigen::VectorXd& targets,
                   const FeatureScaling& scaling, UpdateWorkspace& ws);
double actor_loss(const Mlp& actor, const Mlp& critic, std::span<const TransitionRecord* const> batch,
                  const FeatureScaling& scaling, UpdateWorkspace& ws);

/// One Adam step on the corresponding loss; returns the loss before the step.
double critic_update(Mlp& critic, std::span<const TransitionRecord* const> batch, const Eigen::VectorXd& targets,
                     AdamState& adam, const FeatureScaling& scaling);
double actor_update(Mlp& actor, const Mlp& critic, std::span<const TransitionRecord* const> batch, AdamState& adam,
                    const FeatureScaling& scaling);
double critic_update(Mlp& critic, std::span<const TransitionRecord* const> batch, const Eigen::VectorXd& targets,
                     AdamState& adam, const FeatureScaling& scaling, UpdateWorkspace& ws);
double actor_update(Mlp& actor, const Mlp& critic, std::span<const TransitionRecord* const> batch, AdamState& adam,
                    const FeatureScaling& scaling, UpdateWorkspace& ws);

struct GreedyResult {
    Strategy strategy;
    double reward = 0.0;
};

/// Noise-free episode of the deterministic policy (sigma_w forced to 0).
GreedyResult greedy_rollout(const Mlp& actor, const MarketConfig& market, const FeatureScaling& scaling);

struct EpisodeMetrics {
    double executed_reward = 0.0;
    Strategy executed;
    std::size_t staged = 0;
    std::size_t committed = 0;
    std::size_t updates = 0;
    bool early_liquidation = false;
};

struct MetricsRow {
    std::int64_t episode = 0;
    double executed_reward = 0.0;
    std::optional<double> greedy_reward;
    double oracle_reward = 0.0;
    std::optional<double> gap_bps;
    double rho = 0.0;
    double epsilon = 0.0;
    double wall_ms = 0.0;  // not deterministic; kept out of the metrics CSV
};

/// Relative shortfall of `agent` against `oracle` in basis points; positive when the
/// agent does worse.
double gap_bps(double oracle, double agent);

class MetricsSink {
public:
    virtual ~MetricsSink() = default;
    virtual void on_episode(const MetricsRow& row) = 0;
};

/// Sink that keeps every row in memory.
class VectorSink final : public MetricsSink {
public:
    void on_episode(const MetricsRow& row) override { rows.push_back(row); }
    std::vector<MetricsRow> rows;
};

struct GreedySnapshot {
    std::int64_t episode = -1;
    double reward = 0.0;
    Mlp actor;
};

/// Actor-critic trainer for the execution problem. Owns main and target networks,
/// optimiser states, the replay memory, the exploration noise and four independent
/// random streams (init, environment, exploration, replay) derived from the seed.
class DdpgTrainer {
public:
    DdpgTrainer(MarketConfig market, TrainerConfig config);

    EpisodeMetrics run_episode();

    /// Runs `episodes` episodes on the current kernel.
    void train(std::int64_t episodes, MetricsSink* sink);

    /// Runs `episodes` episodes, moving rho along `schedule` before each one.
    void online_train(const RhoSchedule& schedule, std::int64_t episodes, std::int64_t eval_every, MetricsSink* sink);

    GreedyResult greedy_rollout() const;
    double oracle_reward() const;

    void set_kernel(const DecayKernel& kernel);
    void set_exploration(double epsilon, double ou_sigma);

    const MarketConfig& market() const { return market_; }
    const TrainerConfig& config() const { return config_; }
    const FeatureScaling& scaling() const { return scaling_; }
    const Mlp& actor() const { return actor_; }
    const Mlp& critic() const { return critic_; }
    const Mlp& target_actor() const { return target_actor_; }
    const Mlp& target_critic() const { return target_critic_; }
    Mlp& mutable_actor() { return actor_; }
    Mlp& mutable_critic() { return critic_; }
    const ReplayMemory& memory() const { return memory_; }
    const OuNoise& noise() const { return noise_; }
    std::int64_t episodes_done() const { return episodes_done_; }
    std::int64_t updates_done() const { return updates_done_; }
    const std::optional<GreedySnapshot>& best_greedy() const { return best_greedy_; }

    /// Everything needed to resume: networks, optimiser moments, replay memory,
    /// noise and generator states, counters and the market it was trained on.
    void save(std::ostream& os) const;
    /// Restores a trainer written by save(). Hyperparameters come from `config`;
    /// network layouts must match it, and so must the replay window unless
    /// `adopt_window` is set, in which case the stored one is kept.
    static DdpgTrainer load(std::istream& is, TrainerConfig config, bool adopt_window = false);

private:
    void run_loop(std::int64_t episodes, const std::optional<RhoSchedule>& schedule, std::int64_t eval_every,
                  MetricsSink* sink);
    void update_networks();

    MarketConfig market_;
    TrainerConfig config_;
    FeatureScaling scaling_;
    Mlp actor_;
    Mlp critic_;
    Mlp target_actor_;
    Mlp target_critic_;
    AdamState actor_adam_;
    AdamState critic_adam_;
    ReplayMemory memory_;
    OuNoise noise_;
    Rng env_rng_;
    Rng explore_rng_;
    Rng replay_rng_;
    std::int64_t episodes_done_ = 0;
    std::int64_t updates_done_ = 0;
    std::optional<GreedySnapshot> best_greedy_;
    UpdateWorkspace workspace_;
};

}  // namespace optexec
