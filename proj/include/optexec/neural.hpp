#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "optexec/common.hpp"

namespace optexec {

/// Dense feed-forward network: ReLU on hidden layers, identity on the output layer.
///
/// All weights and biases live in one flat parameter vector so that optimiser
/// updates, Polyak averaging and checkpointing act on a single buffer. Layer l
/// occupies [W_l (fan_out x fan_in, column-major) | b_l (fan_out)].
///
/// Batched inputs are column-major matrices of shape (input_dim x batch).
class Mlp {
public:
    struct LayerView {
        Eigen::Map<const Eigen::MatrixXd> weights;
        Eigen::Map<const Eigen::VectorXd> bias;
    };

    /// Activations retained by forward() and consumed by backward(). Reusing one cache
    /// across calls with the same batch size avoids reallocating any buffer.
    struct Cache {
        std::vector<Eigen::MatrixXd> inputs;  // inputs[l] feeds layer l (post-ReLU for l > 0)
        std::vector<Eigen::MatrixXd> pre;     // pre-activations of each hidden layer
        Eigen::MatrixXd output;
        Eigen::MatrixXd delta[2];             // backward scratch
    };

    struct Gradients {
        Eigen::VectorXd params;  // empty when parameter gradients were not requested
        Eigen::MatrixXd input;   // (input_dim x batch)
    };

    Mlp() = default;

    /// Zero-initialised network. Every size must be >= 1 and there must be at least two.
    explicit Mlp(std::vector<int> layer_sizes);

    const std::vector<int>& layer_sizes() const { return sizes_; }
    int input_dim() const { return sizes_.front(); }
    int output_dim() const { return sizes_.back(); }
    std::size_t num_layers() const { return sizes_.size() - 1; }
    Eigen::Index num_params() const { return params_.size(); }

    const Eigen::VectorXd& params() const { return params_; }
    Eigen::VectorXd& params() { return params_; }

    LayerView layer(std::size_t l) const;
    Eigen::Map<Eigen::MatrixXd> weights(std::size_t l);
    Eigen::Map<Eigen::VectorXd> bias(std::size_t l);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;
    Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
    /// Batched forward pass recording activations in `cache`; returns cache.output.
    const Eigen::MatrixXd& forward(const Eigen::MatrixXd& input, Cache& cache) const;

    /// Reverse-mode gradients of sum(output .* output_grad) with respect to the
    /// parameters (summed over the batch) and to each input column. ReLU has slope 0 at 0.
    /// Either destination may be null, in which case that gradient is not computed.
    void backward(Cache& cache, const Eigen::MatrixXd& output_grad, Eigen::VectorXd* param_grad,
                  Eigen::MatrixXd* input_grad) const;
    Gradients backward(Cache& cache, const Eigen::MatrixXd& output_grad, bool want_params = true) const;

    bool operator==(const Mlp& other) const { return sizes_ == other.sizes_ && params_ == other.params_; }

private:
    std::vector<int> sizes_;
    std::vector<Eigen::Index> offsets_;  // start of W_l in params_
    Eigen::VectorXd params_;
};

/// Number of parameters of a dense net with the given layer sizes.
Eigen::Index parameter_count(const std::vector<int>& layer_sizes);

/// Layer sizes for `depth` hidden layers of `width` units.
std::vector<int> dense_layout(int input_dim, int depth, int width, int output_dim);

/// Weights ~ U(-b, b) with b = sqrt(6 / (fan_in + fan_out)); biases 0.
Mlp xavier_init(const std::vector<int>& layer_sizes, Rng& rng);

struct AdamState {
    Eigen::VectorXd first_moment;
    Eigen::VectorXd second_moment;
    std::int64_t step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamState() = default;
    AdamState(Eigen::Index n_params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam step in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state);

enum class PolyakConvention {
    AsPaper,   // target <- tau * target + (1 - tau) * main
    Standard,  // target <- (1 - tau) * target + tau * main
};

void polyak_update(Eigen::VectorXd& target, const Eigen::VectorXd& main, double tau,
                   PolyakConvention convention = PolyakConvention::AsPaper);

// Text serialisation with hex-float payloads (bit-exact round trip).
void write_mlp(std::ostream& os, const Mlp& net);
Mlp read_mlp(std::istream& is);
void write_adam(std::ostream& os, const AdamState& state);
AdamState read_adam(std::istream& is);

}  // namespace optexec
