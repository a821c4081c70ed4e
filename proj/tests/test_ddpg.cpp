#include <cmath>
#include <functional>
#include <sstream>

#include "checks.hpp"
#include "doctest.h"
#include "optexec/ddpg.hpp"

using namespace optexec;

namespace {

TrainerConfig tiny_trainer(std::uint64_t seed = 0) {
    TrainerConfig t;
    t.episodes = 30;
    t.batch = 16;
    t.window = 60;
    t.critic_depth = 2;
    t.critic_width = 12;
    t.actor_depth = 2;
    t.actor_width = 10;
    t.seed = seed;
    t.eval_every = 5;
    return t;
}

Mlp constant_actor(const FeatureScaling& s, double raw) {
    Mlp a({s.actor_input_dim(), 1});
    a.bias(0)(0) = raw;
    return a;
}

// Critic that reads only its action input: Q = w * (a / X0) + b.
Mlp action_critic(const FeatureScaling& s, double w, double b) {
    Mlp c({s.critic_input_dim(), 1});
    c.weights(0)(0, s.critic_input_dim() - 1) = w;
    c.bias(0)(0) = b;
    return c;
}

TransitionRecord record_at(const MarketConfig& m, int step_index, double inventory, double action, double reward) {
    TransitionRecord r;
    r.state.step_index = step_index;
    r.state.inventory = inventory;
    r.state.past_trades.assign(static_cast<std::size_t>(step_index), 0.0);
    if (step_index > 0) r.state.past_trades[0] = -(m.x0 - inventory);
    r.action = action;
    r.reward = reward;
    r.next_state = r.state;
    r.next_state.step_index = step_index + 1;
    r.next_state.inventory = inventory + action;
    r.next_state.past_trades.push_back(action);
    r.done = r.next_state.step_index == m.n_steps + 1;
    return r;
}

std::size_t param_hash(const DdpgTrainer& t) {
    std::size_t h = 0;
    for (const Mlp* net : {&t.actor(), &t.critic(), &t.target_actor(), &t.target_critic()}) {
        for (Eigen::Index i = 0; i < net->num_params(); ++i) h = h * 1000003u ^ std::hash<double>{}(net->params()(i));
    }
    return h;
}

}  // namespace

TEST_CASE("feature layout") {
    const MarketConfig m;
    const auto s = FeatureScaling::from(m);
    CHECK(s.actor_input_dim() == 12);
    CHECK(s.critic_input_dim() == 13);
    MarketState st = reset(m);
    Rng rng(0);
    st = step(st, -4.0, m, rng).next_state;
    st = step(st, -2.0, m, rng).next_state;
    const ProjectedState p = project(st, m);
    const Eigen::VectorXd xa = actor_features(p, s);
    CHECK(xa(0) == doctest::Approx(2.0 / 9.0));
    CHECK(xa(1) == doctest::Approx(0.4));
    CHECK(xa(2) == doctest::Approx(-0.4));
    CHECK(xa(3) == doctest::Approx(-0.2));
    for (int j = 4; j < 12; ++j) CHECK(xa(j) == 0.0);
    const Eigen::VectorXd xc = critic_features(p, -1.5, s);
    CHECK(xc.head(12) == xa);
    CHECK(xc(12) == doctest::Approx(-0.15));

    ProjectedState bad = p;
    bad.past_trades_padded.pop_back();
    CHECK_THROWS_AS(actor_features(bad, s), DomainError);
}

TEST_CASE("sigmoid and squash") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(sigmoid(-800.0) == doctest::Approx(0.0));
    CHECK(std::isfinite(sigmoid(-800.0)));
    CHECK(squash_action(0.0, 3.0) == -1.5);
    CHECK(squash_action(40.0, 3.0) == doctest::Approx(-3.0));
    CHECK(squash_action(-40.0, 3.0) == doctest::Approx(0.0).epsilon(1e-15));
    for (double u : {-5.0, -0.3, 0.0, 2.0, 9.0}) {
        const double a = squash_action(u, 2.0);
        CHECK(a < 0.0);
        CHECK(a > -2.0);
    }
}

TEST_CASE("select_action") {
    const MarketConfig m;
    const auto s = FeatureScaling::from(m);
    const Mlp actor = constant_actor(s, 0.7);
    Rng rng(1);

    ProjectedState terminal;
    terminal.step_index = 9;
    terminal.inventory = 3.2;
    terminal.past_trades_padded.assign(10, 0.0);
    OuNoise noise;
    CHECK(select_action(actor, terminal, s, noise, rng, 1.0) == -3.2);
    CHECK(noise.count == 0);

    ProjectedState mid = terminal;
    mid.step_index = 4;
    for (int i = 0; i < 20; ++i) CHECK(select_action(actor, mid, s, noise, rng, 0.0) == squash_action(0.7, 3.2));
    CHECK(noise.count == 0);

    for (int i = 0; i < 20; ++i) select_action(actor, mid, s, noise, rng, 1.0);
    CHECK(noise.count == 20);

    // Coin per step: roughly half the calls take the noisy branch at epsilon 0.5.
    OuNoise half;
    for (int i = 0; i < 4000; ++i) select_action(actor, mid, s, half, rng, 0.5);
    CHECK(std::abs(half.count - 2000) < 200);

    CHECK(select_action(constant_actor(s, 60.0), mid, s, noise, rng, 0.0) == doctest::Approx(-3.2));
    CHECK(select_action(constant_actor(s, -60.0), mid, s, noise, rng, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("critic target examples") {
    const MarketConfig m;
    const auto s = FeatureScaling::from(m);
    const Mlp zero_actor(dense_layout(s.actor_input_dim(), 1, 4, 1));
    const Mlp zero_critic(dense_layout(s.critic_input_dim(), 1, 4, 1));
    const Mlp busy_critic = action_critic(s, 3.0, 7.0);

    // Terminal record: the target network is ignored.
    const auto last = record_at(m, 9, 2.0, -2.0, 95.0);
    REQUIRE(last.done);
    CHECK(critic_target(last, zero_actor, busy_critic, s, QMode::Auxiliary) == doctest::Approx(95.0 - 100.0));

    // One-shot liquidation at t=0 with d=1 (N=0 would be invalid, so mark it done by hand).
    auto dump = record_at(m, 0, 10.0, -10.0, 450.0);
    dump.done = true;
    CHECK(critic_target(dump, zero_actor, busy_critic, s, QMode::Auxiliary) == doctest::Approx(-50.0));

    // Zero-output target networks, d = 0.
    const auto mid = record_at(m, 3, 6.0, -1.0, 48.0);
    CHECK(critic_target(mid, zero_actor, zero_critic, s, QMode::Auxiliary) == doctest::Approx(48.0 - 50.0));
    CHECK(critic_target(mid, zero_actor, zero_critic, s, QMode::Standard) == doctest::Approx(48.0));

    // Bootstrap with a critic reading the action: a' = -X' sigmoid(0) = -2.5.
    CHECK(critic_target(mid, zero_actor, busy_critic, s, QMode::Auxiliary) ==
          doctest::Approx(48.0 - 50.0 + 3.0 * (-2.5 / 10.0) + 7.0));
    CHECK(critic_target(mid, zero_actor, busy_critic, s, QMode::Standard) ==
          doctest::Approx(48.0 + 3.0 * (-2.5 / 10.0) + 7.0));
}

TEST_CASE("target actor is overridden by the forced liquidation at step N") {
    const MarketConfig m;
    const auto s = FeatureScaling::from(m);
    const Mlp actor = constant_actor(s, -3.0);  // would propose a small sell
    const Mlp critic = action_critic(s, 1.0, 0.0);
    const auto penultimate = record_at(m, 8, 4.0, -1.0, 40.0);
    REQUIRE(penultimate.next_state.step_index == 9);
    REQUIRE_FALSE(penultimate.done);
    const double y = critic_target(penultimate, actor, critic, s, QMode::Auxiliary);
    CHECK(y == doctest::Approx(40.0 - 50.0 + (-3.0 / 10.0)));

    // Batched and single versions agree.
    const auto a = record_at(m, 2, 7.0, -0.5, 30.0);
    const TransitionRecord* batch[] = {&penultimate, &a};
    const Eigen::VectorXd ys = critic_targets(batch, actor, critic, s, QMode::Auxiliary);
    CHECK(ys(0) == y);
    CHECK(ys(1) == doctest::Approx(critic_target(a, actor, critic, s, QMode::Auxiliary)).epsilon(1e-14));
}

TEST_CASE("critic loss and update") {
    const MarketConfig m = checks::small_market(3);
    const auto s = FeatureScaling::from(m);
    std::mt19937_64 gen(4);
    const auto records = checks::random_records(m, 3, gen);
    const auto batch = checks::pointers(records);

    SUBCASE("exact fit gives zero gradient and no movement") {
        Mlp critic({s.critic_input_dim(), 1});
        critic.bias(0)(0) = 2.5;
        const Eigen::VectorXd y = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(batch.size()), 2.5);
        const auto lg = critic_loss(critic, batch, y, s);
        CHECK(lg.loss == 0.0);
        CHECK(lg.gradient.isZero(0.0));
        AdamState adam(critic.num_params(), 1e-3);
        const Eigen::VectorXd before = critic.params();
        CHECK(critic_update(critic, batch, y, adam, s) == 0.0);
        CHECK(critic.params() == before);
    }
    SUBCASE("single record, linear critic: 2 (q - y) grad q") {
        Mlp critic({s.critic_input_dim(), 1});
        for (int i = 0; i < s.critic_input_dim(); ++i) critic.weights(0)(0, i) = 0.1 * (i + 1);
        critic.bias(0)(0) = -0.4;
        const TransitionRecord* one[] = {batch[5]};
        const Eigen::VectorXd x = critic_features(project(one[0]->state, m), one[0]->action, s);
        const double q = critic.forward(x)(0);
        const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 1.7);
        const auto lg = critic_loss(critic, one, y, s);
        CHECK(lg.loss == doctest::Approx((q - 1.7) * (q - 1.7)));
        for (int i = 0; i < s.critic_input_dim(); ++i) CHECK(lg.gradient(i) == doctest::Approx(2 * (q - 1.7) * x(i)));
        CHECK(lg.gradient(s.critic_input_dim()) == doctest::Approx(2 * (q - 1.7)));
    }
    SUBCASE("loss is nonnegative and an update lowers it") {
        Mlp critic = checks::random_small_net({s.critic_input_dim(), 8, 8, 1}, gen);
        Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = std::sin(static_cast<double>(i));
        AdamState adam(critic.num_params(), 1e-3);
        double last = critic_update(critic, batch, y, adam, s);
        CHECK(last >= 0.0);
        for (int it = 0; it < 200; ++it) critic_update(critic, batch, y, adam, s);
        CHECK(critic_loss(critic, batch, y, s).loss < last);
    }
    Eigen::VectorXd wrong = Eigen::VectorXd::Zero(2);
    CHECK_THROWS_AS(critic_loss(Mlp({s.critic_input_dim(), 1}), batch, wrong, s), DomainError);
}

TEST_CASE("actor loss") {
    const MarketConfig m = checks::small_market(3);
    const auto s = FeatureScaling::from(m);
    std::mt19937_64 gen(8);
    const auto records = checks::random_records(m, 2, gen);
    const auto batch = checks::pointers(records);
    Mlp actor = checks::random_small_net({s.actor_input_dim(), 6, 1}, gen);

    SUBCASE("critic blind to the action gives zero actor gradient") {
        Mlp critic = checks::random_small_net({s.critic_input_dim(), 5, 1}, gen);
        critic.weights(0).col(s.critic_input_dim() - 1).setZero();
        const auto lg = actor_loss(actor, critic, batch, s);
        CHECK(lg.gradient.isZero(0.0));
    }
    SUBCASE("identical states average to the single-state gradient") {
        const Mlp critic = checks::random_small_net({s.critic_input_dim(), 5, 1}, gen);
        const TransitionRecord* one[] = {batch[2]};
        const TransitionRecord* many[] = {batch[2], batch[2], batch[2], batch[2]};
        const auto a = actor_loss(actor, critic, one, s);
        const auto b = actor_loss(actor, critic, many, s);
        CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));
        CHECK((a.gradient - b.gradient).cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + a.gradient.cwiseAbs().maxCoeff()));
    }
    SUBCASE("ascending the critic raises Q") {
        const Mlp critic = action_critic(s, -4.0, 0.0);  // pays for larger sells
        AdamState adam(actor.num_params(), 1e-2);
        const double before = actor_loss(actor, critic, batch, s).loss;
        for (int it = 0; it < 50; ++it) actor_update(actor, critic, batch, adam, s);
        CHECK(actor_loss(actor, critic, batch, s).loss < before);
    }
}

TEST_CASE("gradient suite") {
    const auto r = checks::gradient_suite(20, 31);
    INFO("worst relative error " << r.worst);
    CHECK(r.ok);
    CHECK(r.cases == 40);
}

TEST_CASE("auxiliary Bellman consistency by rollout") {
    const auto r = checks::auxiliary_bellman(10, 5);
    INFO("worst violation " << r.worst);
    CHECK(r.ok);
    MarketConfig pw;
    pw.kernel = {KernelFamily::PowerLaw, 1.0, 1.0};
    CHECK(checks::auxiliary_bellman(3, 6, pw).ok);
}

TEST_CASE("greedy rollout") {
    const MarketConfig m;
    const auto s = FeatureScaling::from(m);
    const Mlp zero(dense_layout(s.actor_input_dim(), 2, 8, 1));
    const auto g = greedy_rollout(zero, m, s);
    double x = 10.0;
    for (int k = 0; k < 9; ++k) {
        CHECK(g.strategy.trades[k] == doctest::Approx(-x / 2).epsilon(1e-15));
        x /= 2;
    }
    CHECK(g.strategy.trades[9] == doctest::Approx(-10.0 / 512.0));
    CHECK(g.strategy.total() == doctest::Approx(-10.0).epsilon(1e-15));
    CHECK(g.reward == doctest::Approx(475.8197196926).epsilon(1e-12));
    CHECK(g.reward == doctest::Approx(expected_profit(m.kernel, m.grid(), g.strategy, m.p0)).epsilon(1e-12));

    std::mt19937_64 gen(2);
    for (int i = 0; i < 5; ++i) {
        const Mlp a = checks::random_small_net({s.actor_input_dim(), 8, 1}, gen);
        const auto r = greedy_rollout(a, m, s);
        CHECK(r.strategy.total() == doctest::Approx(-10.0).epsilon(1e-12));
        CHECK(r.reward == doctest::Approx(expected_profit(m.kernel, m.grid(), r.strategy, m.p0)).epsilon(1e-12));
    }
}

TEST_CASE("gap in bps") {
    CHECK(gap_bps(500.0, 495.0) == doctest::Approx(100.0));
    CHECK(gap_bps(500.0, 500.0) == 0.0);
    CHECK(gap_bps(500.0, 501.0) < 0.0);
    CHECK(gap_bps(-200.0, -202.0) == doctest::Approx(100.0));
}

TEST_CASE("rho schedule") {
    const RhoSchedule down{1.0, 0.5};
    CHECK(down.at(0, 100) == 1.0);
    CHECK(down.at(99, 100) == 0.5);
    CHECK(down.at(33, 67) == doctest::Approx(0.75));
    const RhoSchedule up{1.0, 1.5};
    CHECK(up.at(19999, 20000) == 1.5);
    CHECK(down.at(0, 1) == 1.0);
}

TEST_CASE("trainer construction") {
    const MarketConfig m;
    DdpgTrainer t(m, tiny_trainer());
    CHECK(t.actor().layer_sizes() == std::vector<int>{12, 10, 10, 1});
    CHECK(t.critic().layer_sizes() == std::vector<int>{13, 12, 12, 1});
    CHECK(t.target_actor() == t.actor());
    CHECK(t.target_critic() == t.critic());
    CHECK(t.memory().size() == 0);

    TrainerConfig bad = tiny_trainer();
    bad.epsilon = 1.5;
    CHECK_THROWS_AS(DdpgTrainer(m, bad), DomainError);
    bad = tiny_trainer();
    bad.batch = 0;
    CHECK_THROWS_AS(DdpgTrainer(m, bad), DomainError);
}

TEST_CASE("episodes: warmup, commit counts, admissibility") {
    const MarketConfig m;
    DdpgTrainer t(m, tiny_trainer());
    const std::size_t h0 = param_hash(t);
    for (int e = 0; e < 6; ++e) {
        const auto ep = t.run_episode();
        CHECK(ep.updates == 0);
        CHECK(ep.committed == 10);
        CHECK(ep.executed.total() == doctest::Approx(-10.0).epsilon(1e-12));
        for (double a : ep.executed.trades) CHECK(a <= 0.0);
    }
    CHECK(param_hash(t) == h0);
    CHECK(t.memory().ready());
    const auto ep = t.run_episode();
    CHECK(ep.updates == 10);
    CHECK(t.updates_done() == 10);
    CHECK(param_hash(t) != h0);
}

TEST_CASE("every stored record comes from an episode that kept inventory") {
    const MarketConfig m;
    TrainerConfig c = tiny_trainer(3);
    c.window = 2000;
    DdpgTrainer t(m, c);
    for (int e = 0; e < 40; ++e) t.run_episode();
    for (const auto& r : t.memory().sampleable()) {
        if (r.next_state.step_index >= 1 && r.next_state.step_index <= m.n_steps) {
            CHECK(r.next_state.inventory >= early_liquidation_threshold(m.x0));
        }
        CHECK(r.action >= -r.state.inventory);
        CHECK(r.action <= 0.0);
    }
}

TEST_CASE("train: H = 0, row counts, determinism") {
    const MarketConfig m;
    DdpgTrainer idle(m, tiny_trainer());
    const Mlp before = idle.actor();
    VectorSink none;
    idle.train(0, &none);
    CHECK(none.rows.empty());
    CHECK(idle.actor() == before);

    DdpgTrainer a(m, tiny_trainer(11)), b(m, tiny_trainer(11));
    VectorSink ra, rb;
    a.train(30, &ra);
    b.train(30, &rb);
    REQUIRE(ra.rows.size() == 30);
    int evaluated = 0;
    for (std::size_t i = 0; i < ra.rows.size(); ++i) {
        CHECK(ra.rows[i].episode == static_cast<std::int64_t>(i));
        CHECK(ra.rows[i].executed_reward == rb.rows[i].executed_reward);
        CHECK(ra.rows[i].greedy_reward == rb.rows[i].greedy_reward);
        if (ra.rows[i].greedy_reward) {
            ++evaluated;
            CHECK(*ra.rows[i].gap_bps == doctest::Approx(gap_bps(ra.rows[i].oracle_reward, *ra.rows[i].greedy_reward)));
        }
    }
    CHECK(evaluated == 6);
    CHECK(a.actor() == b.actor());
    CHECK(a.critic() == b.critic());
    CHECK(a.best_greedy().has_value());

    DdpgTrainer c(m, tiny_trainer(12));
    VectorSink rc;
    c.train(30, &rc);
    CHECK_FALSE(c.actor() == a.actor());
}

TEST_CASE("standard Polyak leaves 0.995 of the gap with a frozen main net") {
    std::mt19937_64 gen(1);
    const Mlp main = checks::random_small_net({5, 6, 1}, gen);
    Eigen::VectorXd target = checks::random_small_net({5, 6, 1}, gen).params();
    const double before = (target - main.params()).lpNorm<Eigen::Infinity>();
    polyak_update(target, main.params(), 0.005, PolyakConvention::Standard);
    const double after = (target - main.params()).lpNorm<Eigen::Infinity>();
    CHECK(after / before == doctest::Approx(0.995).epsilon(1e-12));
}

TEST_CASE("online training") {
    const MarketConfig m;
    SUBCASE("constant schedule matches train") {
        DdpgTrainer a(m, tiny_trainer(4)), b(m, tiny_trainer(4));
        VectorSink ra, rb;
        a.train(20, &ra);
        b.online_train(RhoSchedule{1.0, 1.0}, 20, tiny_trainer().eval_every, &rb);
        REQUIRE(ra.rows.size() == rb.rows.size());
        for (std::size_t i = 0; i < ra.rows.size(); ++i) {
            CHECK(ra.rows[i].executed_reward == rb.rows[i].executed_reward);
            CHECK(ra.rows[i].greedy_reward == rb.rows[i].greedy_reward);
            CHECK(ra.rows[i].rho == rb.rows[i].rho);
        }
        CHECK(a.actor() == b.actor());
    }
    SUBCASE("schedule endpoints and per-episode oracle") {
        DdpgTrainer t(m, tiny_trainer(5));
        VectorSink rows;
        t.online_train(RhoSchedule{1.0, 0.5}, 12, 1, &rows);
        REQUIRE(rows.rows.size() == 12);
        CHECK(rows.rows.front().rho == 1.0);
        CHECK(rows.rows.back().rho == 0.5);
        for (const auto& r : rows.rows) {
            DecayKernel k = m.kernel;
            k.rho = r.rho;
            const auto g = m.grid();
            CHECK(r.oracle_reward == doctest::Approx(expected_profit(k, g, optimal_strategy(k, g, m.x0), m.p0)).epsilon(1e-14));
            CHECK(r.greedy_reward.has_value());
        }
        CHECK(rows.rows.front().oracle_reward != rows.rows.back().oracle_reward);
        CHECK(t.market().kernel.rho == 0.5);
    }
    SUBCASE("feature scaling is frozen") {
        DdpgTrainer t(m, tiny_trainer(5));
        const FeatureScaling before = t.scaling();
        t.online_train(RhoSchedule{1.0, 1.5}, 3, 0, nullptr);
        CHECK(t.scaling() == before);
    }
}

TEST_CASE("checkpoint round trip resumes exactly") {
    const MarketConfig m;
    const TrainerConfig c = tiny_trainer(9);
    DdpgTrainer a(m, c);
    VectorSink first;
    a.train(12, &first);
    std::stringstream ss;
    a.save(ss);
    DdpgTrainer b = DdpgTrainer::load(ss, c);
    CHECK(b.actor() == a.actor());
    CHECK(b.critic() == a.critic());
    CHECK(b.memory() == a.memory());
    CHECK(b.episodes_done() == a.episodes_done());

    VectorSink ra, rb;
    a.train(10, &ra);
    b.train(10, &rb);
    for (std::size_t i = 0; i < ra.rows.size(); ++i) CHECK(ra.rows[i].executed_reward == rb.rows[i].executed_reward);
    CHECK(a.actor() == b.actor());
    CHECK(a.target_critic() == b.target_critic());

    std::stringstream again;
    a.save(again);
    TrainerConfig other = c;
    other.critic_width = 13;
    CHECK_THROWS_AS(DdpgTrainer::load(again, other), CheckpointError);
    std::stringstream garbage("ddpg-checkpoint v1 market nonsense");
    CHECK_THROWS_AS(DdpgTrainer::load(garbage, c), CheckpointError);
}
