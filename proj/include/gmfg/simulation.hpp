#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "gmfg/ode.hpp"
#include "gmfg/solver.hpp"

namespace gmfg {

// Population attached to an N-node coupling graph: |C_q| agents per node,
// Gaussian initial spread around the node mean, Euler-Maruyama time step.
struct PopulationConfig {
    int pop_per_node = 4;
    double dt = 1e-3;
    double initial_std = 1.0;
    std::uint64_t seed = 0;
};

// Control law + reference mean field per node, Hermite-interpolated in time.
// For spectral solutions node q reads the limit solution at
// theta_q = (q - 1/2)/N; finite solutions use their own node paths.
class NodeLawSet {
public:
    NodeLawSet(const MeanFieldSolution& sol, int N);

    int nodes() const { return static_cast<int>(s_.size()); }
    Eigen::MatrixXd pi_at(double t) const { return pi_(t); }
    Eigen::VectorXd s_at(int q, double t) const { return s_[q](t); }
    Eigen::VectorXd zref_at(int q, double t) const { return zref_[q](t); }

private:
    MatrixInterpolant pi_;
    std::vector<PchipInterpolant> s_, zref_;
};

struct SimulationResult {
    TimeGrid grid;                     // simulation grid
    std::vector<VectorPath> z_emp;     // per-node network averages (1/N) sum_l w_ql xbar_l
    std::vector<VectorPath> xbar;      // per-node cluster means
    double rel_error = 0.0;            // vs the law's reference mean field
};

// Closed-loop Euler-Maruyama simulation of the agent population on coupling
// matrix W under the best-response law. Agents at node q start at
// mu_q + initial_std * xi, use u = -R^-1 B'(Pi_t x + s_q(t)), and are driven
// by the empirical network average z_q = (1/N) sum_l w_ql xbar_l.
SimulationResult simulate(const GmfgParams& p, const Eigen::MatrixXd& W,
                          const InitialMeans& means, const NodeLawSet& law,
                          const PopulationConfig& cfg);

// Network empirical averages from per-node cluster means: column q of the
// result is (1/N) sum_l w_ql xbar_l.
Eigen::MatrixXd empirical_average(const Eigen::MatrixXd& xbar, const Eigen::MatrixXd& W);

// sup_t || z_emp(t) - z_ref(t) ||_N / sup_t || z_emp(t) ||_N with the
// (1/N)-weighted spatial l2 norm ||v||_N^2 = (1/N) sum_q |v_q|^2.
double relative_error(const std::vector<VectorPath>& z_emp,
                      const std::vector<VectorPath>& z_ref);
double relative_error(const SimulationResult& sim, const NodeLawSet& law);

} // namespace gmfg
