#include "optexec/rl_components.hpp"

#include <istream>
#include <ostream>

#include "textio.hpp"

namespace optexec {

double OuNoise::sample(Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    value += theta * (0.0 - value) + sigma * normal(rng);
    ++count;
    return value;
}

ReplayMemory::ReplayMemory(std::size_t window, std::size_t batch_size) : window_(window), batch_(batch_size) {
    if (window_ == 0) throw DomainError("replay window must be >= 1");
    if (batch_ == 0) throw DomainError("replay batch size must be >= 1");
}

void ReplayMemory::set_batch_size(std::size_t batch) {
    if (batch == 0) throw DomainError("replay batch size must be >= 1");
    batch_ = batch;
}

std::size_t ReplayMemory::commit_episode(std::span<const TransitionRecord> staged, bool early_liquidation) {
    if (early_liquidation) return 0;
    for (const auto& r : staged) {
        records_.push_back(r);
        if (records_.size() > window_) records_.pop_front();
    }
    total_ += staged.size();
    return staged.size();
}

std::vector<const TransitionRecord*> ReplayMemory::sample_batch(Rng& rng) const {
    if (!ready()) throw DomainError("replay memory holds fewer records than the sampling window");
    std::uniform_int_distribution<std::size_t> pick(0, records_.size() - 1);
    std::vector<const TransitionRecord*> batch(batch_);
    for (auto& slot : batch) slot = &records_[pick(rng)];
    return batch;
}

bool liquidated_early(std::span<const TransitionRecord> episode, int n_steps, double x0) {
    const double threshold = early_liquidation_threshold(x0);
    for (const auto& r : episode) {
        const MarketState& s = r.next_state;
        if (s.step_index >= 1 && s.step_index <= n_steps && s.inventory < threshold) return true;
    }
    return false;
}

namespace {

void write_state(std::ostream& os, const MarketState& s) {
    os << s.step_index << ' ' << textio::hex(s.inventory) << ' ' << textio::hex(s.exec_price) << ' '
       << textio::hex(s.unaffected_price) << ' ';
    textio::write_values(os, s.past_trades);
}

MarketState read_state(std::istream& is) {
    MarketState s;
    s.step_index = static_cast<int>(textio::read_int(is));
    s.inventory = textio::read_double(is);
    s.exec_price = textio::read_double(is);
    s.unaffected_price = textio::read_double(is);
    textio::read_values(is, s.past_trades);
    return s;
}

}  // namespace

void write_replay(std::ostream& os, const ReplayMemory& memory) {
    os << "replay v1\n"
       << "window " << memory.window_ << " batch " << memory.batch_ << " total " << memory.total_ << " stored "
       << memory.records_.size() << '\n';
    for (const auto& r : memory.records_) {
        os << "r ";
        write_state(os, r.state);
        os << textio::hex(r.action) << ' ' << textio::hex(r.reward) << ' ' << (r.done ? 1 : 0) << ' ';
        write_state(os, r.next_state);
    }
}

ReplayMemory read_replay(std::istream& is) {
    textio::expect(is, "replay");
    textio::expect(is, "v1");
    textio::expect(is, "window");
    const auto window = static_cast<std::size_t>(textio::read_int(is));
    textio::expect(is, "batch");
    const auto batch = static_cast<std::size_t>(textio::read_int(is));
    ReplayMemory memory(window, batch);
    textio::expect(is, "total");
    memory.total_ = static_cast<std::uint64_t>(textio::read_int(is));
    textio::expect(is, "stored");
    const long long stored = textio::read_int(is);
    if (stored < 0 || static_cast<std::size_t>(stored) > window || static_cast<std::uint64_t>(stored) > memory.total_) {
        throw CheckpointError("replay record count is inconsistent with its window");
    }
    for (long long i = 0; i < stored; ++i) {
        textio::expect(is, "r");
        TransitionRecord r;
        r.state = read_state(is);
        r.action = textio::read_double(is);
        r.reward = textio::read_double(is);
        r.done = textio::read_int(is) != 0;
        r.next_state = read_state(is);
        memory.records_.push_back(std::move(r));
    }
    return memory;
}

void write_ou(std::ostream& os, const OuNoise& noise) {
    os << "ou v1 " << textio::hex(noise.theta) << ' ' << textio::hex(noise.sigma) << ' ' << textio::hex(noise.value)
       << ' ' << noise.count << '\n';
}

OuNoise read_ou(std::istream& is) {
    textio::expect(is, "ou");
    textio::expect(is, "v1");
    OuNoise n;
    n.theta = textio::read_double(is);
    n.sigma = textio::read_double(is);
    n.value = textio::read_double(is);
    n.count = textio::read_int(is);
    return n;
}

}  // namespace optexec
