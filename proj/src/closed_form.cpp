#include "optexec/closed_form.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace optexec {

double Strategy::total() const { return std::accumulate(trades.begin(), trades.end(), 0.0); }

ImpactMatrix impact_matrix(const DecayKernel& kernel, std::span<const double> grid) {
    if (grid.empty()) throw DomainError("empty trading grid");
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] > grid[i - 1])) throw DomainError("trading grid must be strictly increasing");
    }
    const auto n = static_cast<Eigen::Index>(grid.size());
    ImpactMatrix m{Eigen::MatrixXd(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        m.entries(i, i) = kernel(0.0);
        for (Eigen::Index j = 0; j < i; ++j) {
            const double g = kernel(grid[static_cast<std::size_t>(i)] - grid[static_cast<std::size_t>(j)]);
            m.entries(i, j) = g;
            m.entries(j, i) = g;
        }
    }
    return m;
}

namespace {

// Fixed summation order: vectorised reductions depend on buffer alignment, which
// would make reruns differ in the last bit.
double quadratic_form(const Eigen::MatrixXd& m, const std::vector<double>& xi) {
    double q = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < m.cols(); ++j) row += m(i, j) * xi[static_cast<std::size_t>(j)];
        q += xi[static_cast<std::size_t>(i)] * row;
    }
    return q;
}

}  // namespace

Eigen::VectorXd solve_linear(const Eigen::MatrixXd& matrix, const Eigen::VectorXd& rhs) {
    const Eigen::Index n = matrix.rows();
    if (matrix.cols() != n) throw DomainError("solve_linear: matrix is not square");
    if (rhs.size() != n) throw DomainError("solve_linear: rhs length does not match matrix");
    if (n == 0) return {};

    Eigen::MatrixXd a = matrix;
    Eigen::VectorXd b = rhs;
    const double threshold = 1e-12 * a.cwiseAbs().maxCoeff();

    for (Eigen::Index col = 0; col < n; ++col) {
        Eigen::Index pivot = col;
        for (Eigen::Index r = col + 1; r < n; ++r) {
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        }
        if (!(std::abs(a(pivot, col)) > threshold)) {
            throw SingularMatrixError(static_cast<std::size_t>(col), std::abs(a(pivot, col)));
        }
        if (pivot != col) {
            a.row(col).swap(a.row(pivot));
            std::swap(b(col), b(pivot));
        }
        for (Eigen::Index r = col + 1; r < n; ++r) {
            const double f = a(r, col) / a(col, col);
            if (f == 0.0) continue;
            a.row(r).tail(n - col) -= f * a.row(col).tail(n - col);
            b(r) -= f * b(col);
        }
    }

    Eigen::VectorXd x(n);
    for (Eigen::Index r = n - 1; r >= 0; --r) {
        double partial = 0.0;
        for (Eigen::Index c = r + 1; c < n; ++c) partial += a(r, c) * x(c);
        x(r) = (b(r) - partial) / a(r, r);
    }
    return x;
}

Strategy optimal_strategy(const DecayKernel& kernel, std::span<const double> grid, double x0) {
    if (!(x0 > 0.0)) throw DomainError("x0 must be > 0");
    const ImpactMatrix m = impact_matrix(kernel, grid);
    const Eigen::VectorXd y = solve_linear(m.entries, Eigen::VectorXd::Ones(m.n()));
    double total = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) total += y(i);
    const double scale = -x0 / total;
    Strategy s;
    s.trades.resize(static_cast<std::size_t>(m.n()));
    for (Eigen::Index i = 0; i < m.n(); ++i) s.trades[static_cast<std::size_t>(i)] = scale * y(i);
    return s;
}

double expected_profit(const DecayKernel& kernel, std::span<const double> grid, const Strategy& strategy,
                       double p0) {
    if (strategy.size() != grid.size()) throw DomainError("strategy length does not match grid");
    const ImpactMatrix m = impact_matrix(kernel, grid);
    double x0 = 0.0;
    for (double v : strategy.trades) x0 -= v;
    return p0 * x0 - 0.5 * quadratic_form(m.entries, strategy.trades);
}

Strategy brute_force_optimal(const DecayKernel& kernel, std::span<const double> grid, double x0,
                             double resolution) {
    if (grid.size() < 2 || grid.size() > 4) throw DomainError("brute_force_optimal supports 1 <= N <= 3 only");
    if (!(x0 > 0.0)) throw DomainError("x0 must be > 0");
    if (!(resolution > 0.0)) throw DomainError("resolution must be > 0");

    const ImpactMatrix m = impact_matrix(kernel, grid);
    const std::size_t n_trades = grid.size();
    const std::size_t free_dims = n_trades - 1;
    constexpr int points = 41;  // odd, so the centre is always on the grid
    constexpr int keep = 5;     // half-width of the refined box, in old grid steps

    std::vector<double> center(free_dims, -x0 / static_cast<double>(n_trades));
    double half_width = 1.5 * x0;

    auto cost = [&](const std::vector<double>& free) {
        std::vector<double> xi(free);
        double last = -x0;
        for (double v : free) last -= v;
        xi.push_back(last);
        return 0.5 * quadratic_form(m.entries, xi);
    };

    std::vector<int> idx(free_dims);
    std::vector<double> probe(free_dims);
    for (;;) {
        const double spacing = 2.0 * half_width / (points - 1);
        double best = std::numeric_limits<double>::infinity();
        std::vector<int> best_idx(free_dims, 0);
        std::fill(idx.begin(), idx.end(), 0);
        for (;;) {
            for (std::size_t d = 0; d < free_dims; ++d) probe[d] = center[d] - half_width + idx[d] * spacing;
            const double c = cost(probe);
            if (c < best) {
                best = c;
                best_idx = idx;
            }
            std::size_t d = 0;
            while (d < free_dims && ++idx[d] == points) idx[d++] = 0;
            if (d == free_dims) break;
        }

        bool on_edge = false;
        for (std::size_t d = 0; d < free_dims; ++d) {
            center[d] = center[d] - half_width + best_idx[d] * spacing;
            on_edge = on_edge || best_idx[d] == 0 || best_idx[d] == points - 1;
        }
        if (on_edge) continue;  // slide the box without shrinking
        if (spacing <= resolution) break;
        half_width = keep * spacing;
    }

    Strategy s;
    s.trades.assign(center.begin(), center.end());
    s.trades.push_back(-x0 - std::accumulate(center.begin(), center.end(), 0.0));
    return s;
}

Strategy twap_strategy(double x0, int n_steps) {
    if (!(x0 > 0.0)) throw DomainError("x0 must be > 0");
    if (n_steps < 0) throw DomainError("n_steps must be >= 0");
    return Strategy{std::vector<double>(static_cast<std::size_t>(n_steps + 1), -x0 / (n_steps + 1))};
}

Strategy immediate_strategy(double x0, int n_steps) {
    if (!(x0 > 0.0)) throw DomainError("x0 must be > 0");
    if (n_steps < 0) throw DomainError("n_steps must be >= 0");
    Strategy s{std::vector<double>(static_cast<std::size_t>(n_steps + 1), 0.0)};
    s.trades.front() = -x0;
    return s;
}

}  // namespace optexec
