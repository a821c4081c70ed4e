#include "optexec/ddpg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>

#include "textio.hpp"

namespace optexec {

std::string_view to_string(QMode mode) { return mode == QMode::Auxiliary ? "auxiliary" : "standard"; }

QMode parse_q_mode(std::string_view name) {
    if (name == "auxiliary") return QMode::Auxiliary;
    if (name == "standard") return QMode::Standard;
    throw DomainError("unknown q_mode '" + std::string(name) + "' (expected auxiliary|standard)");
}

std::string_view to_string(PolyakConvention convention) {
    return convention == PolyakConvention::AsPaper ? "as_paper" : "standard";
}

PolyakConvention parse_polyak_convention(std::string_view name) {
    if (name == "as_paper") return PolyakConvention::AsPaper;
    if (name == "standard") return PolyakConvention::Standard;
    throw DomainError("unknown polyak_convention '" + std::string(name) + "' (expected as_paper|standard)");
}

double RhoSchedule::at(std::int64_t episode, std::int64_t total) const {
    if (total <= 1) return rho_start;
    return rho_start + (rho_end - rho_start) * static_cast<double>(episode) / static_cast<double>(total - 1);
}

void TrainerConfig::validate() const {
    if (episodes < 0) throw DomainError("H must be >= 0");
    if (batch < 1) throw DomainError("B must be >= 1");
    if (window < 1) throw DomainError("D must be >= 1");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("epsilon must lie in [0, 1]");
    if (!(ou_theta >= 0.0) || !(ou_sigma >= 0.0)) throw DomainError("OU parameters must be >= 0");
    if (!(lr_critic > 0.0) || !(lr_actor > 0.0)) throw DomainError("learning rates must be > 0");
    if (critic_depth < 0 || actor_depth < 0 || critic_width < 1 || actor_width < 1) {
        throw DomainError("network depth must be >= 0 and width >= 1");
    }
    if (!(tau_critic >= 0.0 && tau_critic <= 1.0) || !(tau_actor >= 0.0 && tau_actor <= 1.0)) {
        throw DomainError("tau must lie in [0, 1]");
    }
    if (eval_every < 0) throw DomainError("eval_every must be >= 0");
}

FeatureScaling FeatureScaling::from(const MarketConfig& market) {
    return FeatureScaling{market.horizon(), market.x0, market.p0, market.n_steps};
}

namespace {

// Same layout as encode_state, straight from a full state.
void encode_market_state(const MarketState& s, const FeatureScaling& scaling, double* out) {
    out[0] = static_cast<double>(s.step_index) / scaling.n_steps;
    out[1] = s.inventory / scaling.x0;
    const std::size_t slots = static_cast<std::size_t>(scaling.n_steps) + 1;
    const std::size_t filled = std::min(s.past_trades.size(), slots);
    for (std::size_t j = 0; j < filled; ++j) out[2 + j] = s.past_trades[j] / scaling.x0;
    for (std::size_t j = filled; j < slots; ++j) out[2 + j] = 0.0;
}

enum class Side { Current, Next };

void batch_features(std::span<const TransitionRecord* const> batch, const FeatureScaling& scaling, Side side,
                    int rows, Eigen::MatrixXd& x) {
    x.resize(rows, static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const MarketState& s = side == Side::Current ? batch[i]->state : batch[i]->next_state;
        encode_market_state(s, scaling, x.col(static_cast<Eigen::Index>(i)).data());
    }
}

}  // namespace

void encode_state(const ProjectedState& state, const FeatureScaling& scaling, std::span<double> out) {
    if (out.size() < static_cast<std::size_t>(scaling.actor_input_dim())) {
        throw DomainError("encode_state: output buffer too small");
    }
    if (state.past_trades_padded.size() != static_cast<std::size_t>(scaling.n_steps) + 1) {
        throw DomainError("encode_state: padded history has the wrong length");
    }
    out[0] = static_cast<double>(state.step_index) / scaling.n_steps;
    out[1] = state.inventory / scaling.x0;
    for (std::size_t j = 0; j < state.past_trades_padded.size(); ++j) {
        out[2 + j] = state.past_trades_padded[j] / scaling.x0;
    }
}

Eigen::VectorXd actor_features(const ProjectedState& state, const FeatureScaling& scaling) {
    Eigen::VectorXd x(scaling.actor_input_dim());
    encode_state(state, scaling, {x.data(), static_cast<std::size_t>(x.size())});
    return x;
}

Eigen::VectorXd critic_features(const ProjectedState& state, double action, const FeatureScaling& scaling) {
    Eigen::VectorXd x(scaling.critic_input_dim());
    encode_state(state, scaling, {x.data(), static_cast<std::size_t>(x.size())});
    x(x.size() - 1) = action / scaling.x0;
    return x;
}

double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

double actor_raw(const Mlp& actor, const ProjectedState& state, const FeatureScaling& scaling) {
    return actor.forward(actor_features(state, scaling))(0);
}

double select_action(const Mlp& actor, const ProjectedState& state, const FeatureScaling& scaling, OuNoise& noise,
                     Rng& rng, double epsilon) {
    if (state.step_index >= scaling.n_steps) return -state.inventory;
    const double raw = actor_raw(actor, state, scaling);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) <= epsilon) return squash_action(raw + noise.sample(rng), state.inventory);
    return squash_action(raw, state.inventory);
}

const Eigen::VectorXd& critic_targets(std::span<const TransitionRecord* const> batch, const Mlp& target_actor,
                                      const Mlp& target_critic, const FeatureScaling& scaling, QMode mode,
                                      UpdateWorkspace& ws) {
    const int state_rows = scaling.actor_input_dim();
    Eigen::MatrixXd& x = ws.features;
    batch_features(batch, scaling, Side::Next, scaling.critic_input_dim(), x);
    ws.actor_input = x.topRows(state_rows);
    const Eigen::MatrixXd& raw = target_actor.forward(ws.actor_input, ws.actor_cache);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const MarketState& next = batch[i]->next_state;
        const auto col = static_cast<Eigen::Index>(i);
        const double a = next.step_index >= scaling.n_steps ? -next.inventory
                                                            : squash_action(raw(0, col), next.inventory);
        x(state_rows, col) = a / scaling.x0;
    }
    const Eigen::MatrixXd& q_next = target_critic.forward(x, ws.critic_cache);

    Eigen::VectorXd& y = ws.targets;
    y.resize(static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const TransitionRecord& r = *batch[i];
        const auto col = static_cast<Eigen::Index>(i);
        double target = r.reward;
        if (mode == QMode::Auxiliary) target += r.action * scaling.p0;
        if (!r.done) target += q_next(0, col);
        y(col) = target;
    }
    return y;
}

Eigen::VectorXd critic_targets(std::span<const TransitionRecord* const> batch, const Mlp& target_actor,
                               const Mlp& target_critic, const FeatureScaling& scaling, QMode mode) {
    UpdateWorkspace ws;
    return critic_targets(batch, target_actor, target_critic, scaling, mode, ws);
}

double critic_target(const TransitionRecord& record, const Mlp& target_actor, const Mlp& target_critic,
                     const FeatureScaling& scaling, QMode mode) {
    const TransitionRecord* one[] = {&record};
    return critic_targets(one, target_actor, target_critic, scaling, mode)(0);
}

double critic_loss(const Mlp& critic, std::span<const TransitionRecord* const> batch, const Eigen::VectorXd& targets,
                   const FeatureScaling& scaling, UpdateWorkspace& ws) {
    if (batch.empty()) throw DomainError("critic_loss: empty batch");
    if (targets.size() != static_cast<Eigen::Index>(batch.size())) throw DomainError("critic_loss: target count");
    const int state_rows = scaling.actor_input_dim();
    Eigen::MatrixXd& x = ws.features;
    batch_features(batch, scaling, Side::Current, scaling.critic_input_dim(), x);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        x(state_rows, static_cast<Eigen::Index>(i)) = batch[i]->action / scaling.x0;
    }
    const Eigen::MatrixXd& q = critic.forward(x, ws.critic_cache);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    ws.output_grad = q.row(0) - targets.transpose();
    const double loss = ws.output_grad.squaredNorm() * inv_b;
    ws.output_grad *= 2.0 * inv_b;
    critic.backward(ws.critic_cache, ws.output_grad, &ws.gradient, nullptr);
    return loss;
}

LossAndGradient critic_loss(const Mlp& critic, std::span<const TransitionRecord* const> batch,
                            const Eigen::VectorXd& targets, const FeatureScaling& scaling) {
    UpdateWorkspace ws;
    LossAndGradient out;
    out.loss = critic_loss(critic, batch, targets, scaling, ws);
    out.gradient = std::move(ws.gradient);
    return out;
}

double actor_loss(const Mlp& actor, const Mlp& critic, std::span<const TransitionRecord* const> batch,
                  const FeatureScaling& scaling, UpdateWorkspace& ws) {
    if (batch.empty()) throw DomainError("actor_loss: empty batch");
    const int state_rows = scaling.actor_input_dim();
    const auto b = static_cast<Eigen::Index>(batch.size());

    Eigen::MatrixXd& x = ws.features;
    batch_features(batch, scaling, Side::Current, scaling.critic_input_dim(), x);
    ws.actor_input = x.topRows(state_rows);
    const Eigen::MatrixXd& raw = actor.forward(ws.actor_input, ws.actor_cache);

    Eigen::MatrixXd& da_du = ws.action_grad;
    da_du.resize(1, b);
    for (Eigen::Index i = 0; i < b; ++i) {
        const double inventory = batch[static_cast<std::size_t>(i)]->state.inventory;
        const double s = sigmoid(raw(0, i));
        x(state_rows, i) = -inventory * s / scaling.x0;
        da_du(0, i) = -inventory * s * (1.0 - s);
    }

    const Eigen::MatrixXd& q = critic.forward(x, ws.critic_cache);
    const double inv_b = 1.0 / static_cast<double>(b);
    const double loss = -q.sum() * inv_b;
    ws.output_grad.setConstant(1, b, -inv_b);
    critic.backward(ws.critic_cache, ws.output_grad, nullptr, &ws.input_grad);

    // d loss / d raw = (d loss / d feature_a) * (1 / X0) * (d a / d raw)
    ws.output_grad = (ws.input_grad.row(state_rows).array() / scaling.x0 * da_du.array()).matrix();
    actor.backward(ws.actor_cache, ws.output_grad, &ws.gradient, nullptr);
    return loss;
}

LossAndGradient actor_loss(const Mlp& actor, const Mlp& critic, std::span<const TransitionRecord* const> batch,
                           const FeatureScaling& scaling) {
    UpdateWorkspace ws;
    LossAndGradient out;
    out.loss = actor_loss(actor, critic, batch, scaling, ws);
    out.gradient = std::move(ws.gradient);
    return out;
}

double critic_update(Mlp& critic, std::span<const TransitionRecord* const> batch, const Eigen::VectorXd& targets,
                     AdamState& adam, const FeatureScaling& scaling, UpdateWorkspace& ws) {
    const double loss = critic_loss(critic, batch, targets, scaling, ws);
    adam_step(critic.params(), ws.gradient, adam);
    return loss;
}

double critic_update(Mlp& critic, std::span<const TransitionRecord* const> batch, const Eigen::VectorXd& targets,
                     AdamState& adam, const FeatureScaling& scaling) {
    UpdateWorkspace ws;
    return critic_update(critic, batch, targets, adam, scaling, ws);
}

double actor_update(Mlp& actor, const Mlp& critic, std::span<const TransitionRecord* const> batch, AdamState& adam,
                    const FeatureScaling& scaling, UpdateWorkspace& ws) {
    const double loss = actor_loss(actor, critic, batch, scaling, ws);
    adam_step(actor.params(), ws.gradient, adam);
    return loss;
}

double actor_update(Mlp& actor, const Mlp& critic, std::span<const TransitionRecord* const> batch, AdamState& adam,
                    const FeatureScaling& scaling) {
    UpdateWorkspace ws;
    return actor_update(actor, critic, batch, adam, scaling, ws);
}

GreedyResult greedy_rollout(const Mlp& actor, const MarketConfig& market, const FeatureScaling& scaling) {
    MarketConfig quiet = market;
    quiet.sigma_w = 0.0;
    Rng unused(0);
    MarketState s = reset(quiet);
    GreedyResult out;
    out.strategy.trades.reserve(static_cast<std::size_t>(quiet.n_trades()));
    while (s.step_index <= quiet.n_steps) {
        const ProjectedState p = project(s, quiet);
        const double a = s.step_index == quiet.n_steps ? -s.inventory
                                                       : squash_action(actor_raw(actor, p, scaling), s.inventory);
        StepResult r = step(s, a, quiet, unused);
        out.reward += r.reward;
        out.strategy.trades.push_back(r.next_state.past_trades.back());
        s = std::move(r.next_state);
    }
    return out;
}

double gap_bps(double oracle, double agent) { return (oracle - agent) / std::abs(oracle) * 1e4; }

namespace {

Rng stream(std::uint64_t seed, std::uint32_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
    return Rng(seq);
}

}  // namespace

DdpgTrainer::DdpgTrainer(MarketConfig market, TrainerConfig config)
    : market_(std::move(market)),
      config_(config),
      scaling_(FeatureScaling::from(market_)),
      memory_(config.window, config.batch),
      env_rng_(stream(config.seed, 1)),
      explore_rng_(stream(config.seed, 2)),
      replay_rng_(stream(config.seed, 3)) {
    market_.validate();
    config_.validate();
    Rng init = stream(config_.seed, 0);
    actor_ = xavier_init(dense_layout(scaling_.actor_input_dim(), config_.actor_depth, config_.actor_width, 1), init);
    critic_ =
        xavier_init(dense_layout(scaling_.critic_input_dim(), config_.critic_depth, config_.critic_width, 1), init);
    target_actor_ = actor_;
    target_critic_ = critic_;
    actor_adam_ = AdamState(actor_.num_params(), config_.lr_actor, config_.adam_beta1, config_.adam_beta2,
                            config_.adam_epsilon);
    critic_adam_ = AdamState(critic_.num_params(), config_.lr_critic, config_.adam_beta1, config_.adam_beta2,
                             config_.adam_epsilon);
    noise_.theta = config_.ou_theta;
    noise_.sigma = config_.ou_sigma;
}

void DdpgTrainer::set_kernel(const DecayKernel& kernel) {
    kernel.validate();
    market_.kernel = kernel;
}

void DdpgTrainer::set_exploration(double epsilon, double ou_sigma) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("epsilon must lie in [0, 1]");
    if (!(ou_sigma >= 0.0)) throw DomainError("OU sigma must be >= 0");
    config_.epsilon = epsilon;
    config_.ou_sigma = ou_sigma;
    noise_.sigma = ou_sigma;
}

void DdpgTrainer::update_networks() {
    const std::vector<const TransitionRecord*> batch = memory_.sample_batch(replay_rng_);
    // critic_targets writes workspace_.targets; the update reuses the other buffers.
    critic_targets(batch, target_actor_, target_critic_, scaling_, config_.q_mode, workspace_);
    critic_update(critic_, batch, workspace_.targets, critic_adam_, scaling_, workspace_);
    actor_update(actor_, critic_, batch, actor_adam_, scaling_, workspace_);
    polyak_update(target_critic_.params(), critic_.params(), config_.tau_critic, config_.polyak);
    polyak_update(target_actor_.params(), actor_.params(), config_.tau_actor, config_.polyak);
    ++updates_done_;
}

EpisodeMetrics DdpgTrainer::run_episode() {
    EpisodeMetrics m;
    std::vector<TransitionRecord> staged;
    staged.reserve(static_cast<std::size_t>(market_.n_trades()));
    noise_.reset();
    MarketState s = reset(market_);
    while (s.step_index <= market_.n_steps) {
        const ProjectedState p = project(s, market_);
        const double a = select_action(actor_, p, scaling_, noise_, explore_rng_, config_.epsilon);
        StepResult r = step(s, a, market_, env_rng_);
        m.executed_reward += r.reward;
        m.executed.trades.push_back(r.next_state.past_trades.back());
        staged.push_back(TransitionRecord{std::move(s), a, r.reward, r.next_state, r.done});
        if (memory_.ready()) {
            update_networks();
            ++m.updates;
        }
        s = std::move(r.next_state);
    }
    m.staged = staged.size();
    m.early_liquidation = liquidated_early(staged, market_.n_steps, market_.x0);
    m.committed = memory_.commit_episode(staged, m.early_liquidation);
    ++episodes_done_;
    return m;
}

GreedyResult DdpgTrainer::greedy_rollout() const { return optexec::greedy_rollout(actor_, market_, scaling_); }

double DdpgTrainer::oracle_reward() const {
    const std::vector<double> grid = market_.grid();
    return expected_profit(market_.kernel, grid, optimal_strategy(market_.kernel, grid, market_.x0), market_.p0);
}

void DdpgTrainer::train(std::int64_t episodes, MetricsSink* sink) {
    run_loop(episodes, std::nullopt, config_.eval_every, sink);
}

void DdpgTrainer::online_train(const RhoSchedule& schedule, std::int64_t episodes, std::int64_t eval_every,
                               MetricsSink* sink) {
    run_loop(episodes, schedule, eval_every, sink);
}

void DdpgTrainer::run_loop(std::int64_t episodes, const std::optional<RhoSchedule>& schedule,
                           std::int64_t eval_every, MetricsSink* sink) {
    double oracle = 0.0;
    std::optional<DecayKernel> oracle_kernel;
    for (std::int64_t h = 0; h < episodes; ++h) {
        const auto started = std::chrono::steady_clock::now();
        if (schedule) {
            DecayKernel k = market_.kernel;
            k.rho = schedule->at(h, episodes);
            set_kernel(k);
        }
        if (!oracle_kernel || !(*oracle_kernel == market_.kernel)) {
            oracle = oracle_reward();
            oracle_kernel = market_.kernel;
        }

        const EpisodeMetrics ep = run_episode();

        MetricsRow row;
        row.episode = h;
        row.executed_reward = ep.executed_reward;
        row.oracle_reward = oracle;
        row.rho = market_.kernel.rho;
        row.epsilon = config_.epsilon;
        const bool evaluate = eval_every > 0 && ((h + 1) % eval_every == 0 || h + 1 == episodes);
        if (evaluate) {
            const GreedyResult g = greedy_rollout();
            row.greedy_reward = g.reward;
            row.gap_bps = gap_bps(oracle, g.reward);
            if (!best_greedy_ || g.reward > best_greedy_->reward) {
                best_greedy_ = GreedySnapshot{episodes_done_ - 1, g.reward, actor_};
            }
        }
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
        if (sink) sink->on_episode(row);
    }
}

void DdpgTrainer::save(std::ostream& os) const {
    os << "ddpg-checkpoint v1\n"
       << "market " << to_string(market_.kernel.family) << ' ' << textio::hex(market_.kernel.kappa) << ' '
       << textio::hex(market_.kernel.rho) << ' ' << textio::hex(market_.p0) << ' ' << textio::hex(market_.sigma_w)
       << ' ' << textio::hex(market_.x0) << ' ' << market_.n_steps << ' ' << textio::hex(market_.dt) << '\n'
       << "scaling " << textio::hex(scaling_.horizon) << ' ' << textio::hex(scaling_.x0) << ' '
       << textio::hex(scaling_.p0) << ' ' << scaling_.n_steps << '\n'
       << "counters " << episodes_done_ << ' ' << updates_done_ << '\n'
       << "rng_env " << env_rng_ << '\n'
       << "rng_explore " << explore_rng_ << '\n'
       << "rng_replay " << replay_rng_ << '\n';
    os << "actor\n";
    write_mlp(os, actor_);
    os << "critic\n";
    write_mlp(os, critic_);
    os << "target_actor\n";
    write_mlp(os, target_actor_);
    os << "target_critic\n";
    write_mlp(os, target_critic_);
    os << "actor_adam\n";
    write_adam(os, actor_adam_);
    os << "critic_adam\n";
    write_adam(os, critic_adam_);
    write_ou(os, noise_);
    write_replay(os, memory_);
    os << "end\n";
}

DdpgTrainer DdpgTrainer::load(std::istream& is, TrainerConfig config, bool adopt_window) {
    textio::expect(is, "ddpg-checkpoint");
    textio::expect(is, "v1");
    textio::expect(is, "market");
    MarketConfig market;
    try {
        market.kernel.family = parse_kernel_family(textio::next_token(is));
    } catch (const DomainError& e) {
        throw CheckpointError(e.what());
    }
    market.kernel.kappa = textio::read_double(is);
    market.kernel.rho = textio::read_double(is);
    market.p0 = textio::read_double(is);
    market.sigma_w = textio::read_double(is);
    market.x0 = textio::read_double(is);
    market.n_steps = static_cast<int>(textio::read_int(is));
    market.dt = textio::read_double(is);

    textio::expect(is, "scaling");
    FeatureScaling scaling;
    scaling.horizon = textio::read_double(is);
    scaling.x0 = textio::read_double(is);
    scaling.p0 = textio::read_double(is);
    scaling.n_steps = static_cast<int>(textio::read_int(is));

    DdpgTrainer t(market, config);
    t.scaling_ = scaling;
    textio::expect(is, "counters");
    t.episodes_done_ = textio::read_int(is);
    t.updates_done_ = textio::read_int(is);
    textio::expect(is, "rng_env");
    is >> t.env_rng_;
    textio::expect(is, "rng_explore");
    is >> t.explore_rng_;
    textio::expect(is, "rng_replay");
    is >> t.replay_rng_;
    if (!is) throw CheckpointError("malformed generator state");

    auto read_net = [&](const char* tag, const Mlp& expected_shape) {
        textio::expect(is, tag);
        Mlp net = read_mlp(is);
        if (net.layer_sizes() != expected_shape.layer_sizes()) {
            throw CheckpointError(std::string(tag) + " layout does not match the configured network");
        }
        return net;
    };
    t.actor_ = read_net("actor", t.actor_);
    t.critic_ = read_net("critic", t.critic_);
    t.target_actor_ = read_net("target_actor", t.actor_);
    t.target_critic_ = read_net("target_critic", t.critic_);

    textio::expect(is, "actor_adam");
    t.actor_adam_ = read_adam(is);
    textio::expect(is, "critic_adam");
    t.critic_adam_ = read_adam(is);
    if (t.actor_adam_.first_moment.size() != t.actor_.num_params() ||
        t.critic_adam_.first_moment.size() != t.critic_.num_params()) {
        throw CheckpointError("optimiser state does not match network size");
    }
    t.actor_adam_.learning_rate = config.lr_actor;
    t.critic_adam_.learning_rate = config.lr_critic;

    t.noise_ = read_ou(is);
    t.noise_.theta = config.ou_theta;
    t.noise_.sigma = config.ou_sigma;

    ReplayMemory memory = read_replay(is);
    if (adopt_window) t.config_.window = memory.window();
    if (memory.window() != t.config_.window) {
        throw CheckpointError("checkpoint replay window D=" + std::to_string(memory.window()) +
                              " does not match configured D=" + std::to_string(t.config_.window));
    }
    memory.set_batch_size(config.batch);
    t.memory_ = std::move(memory);
    textio::expect(is, "end");
    return t;
}

}  // namespace optexec
