#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <span>
#include <vector>

#include "optexec/impact_market.hpp"

namespace optexec {

/// Ornstein-Uhlenbeck exploration noise, Euler-discretised with unit step and mean 0:
///   value <- value + theta * (0 - value) + sigma * Z.
struct OuNoise {
    double theta = 0.15;
    double sigma = 0.2;
    double value = 0.0;
    std::int64_t count = 0;  // samples drawn since the last reset

    void reset() {
        value = 0.0;
        count = 0;
    }

    double sample(Rng& rng);

    bool operator==(const OuNoise&) const = default;
};

inline double ou_sample(OuNoise& noise, Rng& rng) { return noise.sample(rng); }

/// Experience memory. Every committed transition counts towards size(); only the
/// most recent `window` of them remain stored, since nothing older can be sampled.
class ReplayMemory {
public:
    ReplayMemory(std::size_t window, std::size_t batch_size);

    /// Appends a whole episode, or drops it entirely when `early_liquidation` is set.
    /// Returns the number of records appended.
    std::size_t commit_episode(std::span<const TransitionRecord> staged, bool early_liquidation);

    /// Uniform draw with replacement of batch_size() records from the window.
    /// Throws DomainError while size() < window().
    std::vector<const TransitionRecord*> sample_batch(Rng& rng) const;

    bool ready() const { return total_ >= window_; }
    std::uint64_t size() const { return total_; }
    std::size_t window() const { return window_; }
    std::size_t batch_size() const { return batch_; }
    void set_batch_size(std::size_t batch);

    /// Records currently eligible for sampling, oldest first.
    const std::deque<TransitionRecord>& sampleable() const { return records_; }

    bool operator==(const ReplayMemory&) const = default;

private:
    std::size_t window_;
    std::size_t batch_;
    std::uint64_t total_ = 0;
    std::deque<TransitionRecord> records_;

    friend void write_replay(std::ostream&, const ReplayMemory&);
    friend ReplayMemory read_replay(std::istream&);
};

/// Inventory below which a pre-terminal state counts as already liquidated.
inline double early_liquidation_threshold(double x0) { return 1e-8 * x0; }

/// True if any state with step index in 1..N (i.e. before the forced final trade)
/// holds less than the threshold.
bool liquidated_early(std::span<const TransitionRecord> episode, int n_steps, double x0);

void write_replay(std::ostream& os, const ReplayMemory& memory);
ReplayMemory read_replay(std::istream& is);

void write_ou(std::ostream& os, const OuNoise& noise);
OuNoise read_ou(std::istream& is);

}  // namespace optexec
