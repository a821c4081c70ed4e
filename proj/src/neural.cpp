#include "optexec/neural.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "textio.hpp"

namespace optexec {

Eigen::Index parameter_count(const std::vector<int>& layer_sizes) {
    Eigen::Index total = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        total += static_cast<Eigen::Index>(layer_sizes[l]) * layer_sizes[l + 1] + layer_sizes[l + 1];
    }
    return total;
}

std::vector<int> dense_layout(int input_dim, int depth, int width, int output_dim) {
    std::vector<int> sizes{input_dim};
    for (int i = 0; i < depth; ++i) sizes.push_back(width);
    sizes.push_back(output_dim);
    return sizes;
}

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw DomainError("an Mlp needs at least an input and an output layer");
    for (int s : sizes_) {
        if (s < 1) throw DomainError("layer sizes must be >= 1");
    }
    Eigen::Index offset = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        offsets_.push_back(offset);
        offset += static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
    }
    params_ = Eigen::VectorXd::Zero(offset);
}

Mlp::LayerView Mlp::layer(std::size_t l) const {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const double* base = params_.data() + offsets_[l];
    return {Eigen::Map<const Eigen::MatrixXd>(base, out, in),
            Eigen::Map<const Eigen::VectorXd>(base + static_cast<Eigen::Index>(out) * in, out)};
}

Eigen::Map<Eigen::MatrixXd> Mlp::weights(std::size_t l) {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}

Eigen::Map<Eigen::VectorXd> Mlp::bias(std::size_t l) {
    return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l], sizes_[l + 1]};
}

const Eigen::MatrixXd& Mlp::forward(const Eigen::MatrixXd& input, Cache& cache) const {
    if (input.rows() != input_dim()) throw DomainError("Mlp::forward: input dimension mismatch");
    const std::size_t n_layers = num_layers();
    cache.inputs.resize(n_layers);
    cache.pre.resize(n_layers - 1);
    cache.inputs[0] = input;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const LayerView layer_l = layer(l);
        Eigen::MatrixXd& z = (l + 1 == n_layers) ? cache.output : cache.pre[l];
        z.resize(layer_l.weights.rows(), input.cols());
        z.noalias() = layer_l.weights * cache.inputs[l];
        z.colwise() += layer_l.bias;
        if (l + 1 < n_layers) cache.inputs[l + 1] = z.cwiseMax(0.0);
    }
    return cache.output;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input) const {
    Cache cache;
    return forward(input, cache);
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& input) const {
    return forward(Eigen::MatrixXd(input)).col(0);
}

void Mlp::backward(Cache& cache, const Eigen::MatrixXd& output_grad, Eigen::VectorXd* param_grad,
                   Eigen::MatrixXd* input_grad) const {
    const std::size_t n_layers = num_layers();
    if (cache.inputs.size() != n_layers) throw DomainError("Mlp::backward: cache does not match network");
    if (output_grad.rows() != output_dim() || output_grad.cols() != cache.inputs.front().cols()) {
        throw DomainError("Mlp::backward: output gradient shape mismatch");
    }
    if (param_grad && param_grad->size() != params_.size()) param_grad->resize(params_.size());

    int cur = 0;
    cache.delta[cur] = output_grad;
    for (std::size_t l = n_layers; l-- > 0;) {
        const LayerView layer_l = layer(l);
        const Eigen::MatrixXd& delta = cache.delta[cur];
        if (param_grad) {
            const int in = sizes_[l];
            const int out = sizes_[l + 1];
            double* base = param_grad->data() + offsets_[l];
            Eigen::Map<Eigen::MatrixXd> dw(base, out, in);
            Eigen::Map<Eigen::VectorXd> db(base + static_cast<Eigen::Index>(out) * in, out);
            dw.noalias() = delta * cache.inputs[l].transpose();
            db = delta.rowwise().sum();
        }
        if (l == 0 && !input_grad) return;
        Eigen::MatrixXd& upstream = cache.delta[1 - cur];
        upstream.resize(layer_l.weights.cols(), delta.cols());
        upstream.noalias() = layer_l.weights.transpose() * delta;
        if (l > 0) upstream.array() *= (cache.pre[l - 1].array() > 0.0).cast<double>();
        cur = 1 - cur;
    }
    if (input_grad) *input_grad = cache.delta[cur];
}

Mlp::Gradients Mlp::backward(Cache& cache, const Eigen::MatrixXd& output_grad, bool want_params) const {
    Gradients g;
    backward(cache, output_grad, want_params ? &g.params : nullptr, &g.input);
    return g;
}

Mlp xavier_init(const std::vector<int>& layer_sizes, Rng& rng) {
    Mlp net(layer_sizes);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const double bound = std::sqrt(6.0 / (layer_sizes[l] + layer_sizes[l + 1]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        auto w = net.weights(l);
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
        }
    }
    return net;
}

AdamState::AdamState(Eigen::Index n_params, double lr, double b1, double b2, double eps)
    : first_moment(Eigen::VectorXd::Zero(n_params)),
      second_moment(Eigen::VectorXd::Zero(n_params)),
      learning_rate(lr),
      beta1(b1),
      beta2(b2),
      epsilon(eps) {}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state) {
    if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size()) {
        throw DomainError("adam_step: shape mismatch");
    }
    ++state.step;
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                      ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

void polyak_update(Eigen::VectorXd& target, const Eigen::VectorXd& main, double tau, PolyakConvention convention) {
    if (target.size() != main.size()) throw DomainError("polyak_update: shape mismatch");
    if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("polyak_update: tau must lie in [0, 1]");
    const double keep = convention == PolyakConvention::AsPaper ? tau : 1.0 - tau;
    target = keep * target + (1.0 - keep) * main;
}

void write_mlp(std::ostream& os, const Mlp& net) {
    os << "mlp v1\nlayers ";
    textio::write_values(os, std::vector<double>(net.layer_sizes().begin(), net.layer_sizes().end()));
    os << "params ";
    textio::write_values(os, net.params());
}

Mlp read_mlp(std::istream& is) {
    textio::expect(is, "mlp");
    textio::expect(is, "v1");
    textio::expect(is, "layers");
    std::vector<double> raw;
    textio::read_values(is, raw);
    std::vector<int> sizes(raw.begin(), raw.end());
    Mlp net(sizes);
    textio::expect(is, "params");
    Eigen::VectorXd p;
    textio::read_values(is, p);
    if (p.size() != net.num_params()) throw CheckpointError("mlp parameter count does not match layer sizes");
    net.params() = std::move(p);
    return net;
}

void write_adam(std::ostream& os, const AdamState& state) {
    os << "adam v1\n"
       << "step " << state.step << '\n'
       << "hyper " << textio::hex(state.learning_rate) << ' ' << textio::hex(state.beta1) << ' '
       << textio::hex(state.beta2) << ' ' << textio::hex(state.epsilon) << '\n'
       << "m ";
    textio::write_values(os, state.first_moment);
    os << "v ";
    textio::write_values(os, state.second_moment);
}

AdamState read_adam(std::istream& is) {
    textio::expect(is, "adam");
    textio::expect(is, "v1");
    AdamState s;
    textio::expect(is, "step");
    s.step = textio::read_int(is);
    textio::expect(is, "hyper");
    s.learning_rate = textio::read_double(is);
    s.beta1 = textio::read_double(is);
    s.beta2 = textio::read_double(is);
    s.epsilon = textio::read_double(is);
    textio::expect(is, "m");
    textio::read_values(is, s.first_moment);
    textio::expect(is, "v");
    textio::read_values(is, s.second_moment);
    if (s.first_moment.size() != s.second_moment.size()) throw CheckpointError("adam moment sizes differ");
    return s;
}

}  // namespace optexec
