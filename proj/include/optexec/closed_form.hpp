#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "optexec/impact_market.hpp"

namespace optexec {

/// Gram matrix of the decay kernel on a trading grid, M_ij = G(|t_i - t_j|).
struct ImpactMatrix {
    Eigen::MatrixXd entries;

    Eigen::Index n() const { return entries.rows(); }
};

/// A deterministic trade schedule xi_0..xi_N (shares, sells negative).
struct Strategy {
    std::vector<double> trades;

    double total() const;
    std::size_t size() const { return trades.size(); }
};

/// Throws DomainError if the grid is empty or not strictly increasing.
ImpactMatrix impact_matrix(const DecayKernel& kernel, std::span<const double> grid);

/// Gaussian elimination with row pivoting. Throws SingularMatrixError when the best
/// available pivot falls below 1e-12 times the largest entry of the matrix.
Eigen::VectorXd solve_linear(const Eigen::MatrixXd& matrix, const Eigen::VectorXd& rhs);

/// xi* = -x0 / (1' M^-1 1) * M^-1 1.
Strategy optimal_strategy(const DecayKernel& kernel, std::span<const double> grid, double x0);

/// p0 * x0 - 0.5 * xi' M xi, with x0 = -sum(xi). This is the expected profit of a
/// deterministic schedule; the Brownian terms have zero mean.
double expected_profit(const DecayKernel& kernel, std::span<const double> grid, const Strategy& strategy,
                       double p0);

/// Minimises 0.5 xi' M xi over sum(xi) = -x0 by grid search on the free coordinates
/// xi_0..xi_{N-1}, refining the box around the incumbent until the grid spacing is
/// below `resolution`. Only practical for N <= 3; throws DomainError otherwise.
Strategy brute_force_optimal(const DecayKernel& kernel, std::span<const double> grid, double x0,
                             double resolution);

Strategy twap_strategy(double x0, int n_steps);
Strategy immediate_strategy(double x0, int n_steps);

}  // namespace optexec
