#pragma once

#include <Eigen/Dense>
#include <limits>
#include <memory>
#include <vector>

#include "gmfg/graphon.hpp"
#include "gmfg/ode.hpp"

namespace gmfg {

// Problem data for the linear-quadratic tracking game
//   dx = (A x + B u + D z) dt + Sigma dw,
//   cost weights Q, R, QT around the target H(z + eta).
// B may be n x m; everything else is n x n.
struct GmfgParams {
    Eigen::MatrixXd A, B, D, Q, R, QT, H, Sigma;
    Eigen::VectorXd eta;
    double T = 1.0;
    double dt = 1e-3;

    int n() const { return static_cast<int>(A.rows()); }
    int m() const { return static_cast<int>(B.cols()); }
    TimeGrid grid() const { return TimeGrid::from_dt(T, dt); }

    void validate() const;

    // Reference configuration used by the bundled experiments: n = 2,
    // A = [[0,10],[-10,0]], Q = 0.5 I, Sigma = 0.1 I, B = D = R = QT = H = I,
    // eta = (2,2), T = 1.
    static GmfgParams reference();
};

// Per-node initial means: column q is the mean of cluster q.
struct InitialMeans {
    Eigen::MatrixXd mu; // n x N

    int nodes() const { return static_cast<int>(mu.cols()); }
};

enum class SolveMode { Finite, Spectral, Idempotent };
enum class SolveMethod { FixedPoint, Riccati };

struct FixedPointOptions {
    double tol = 1e-8;
    int max_iter = 200;
    double damping = 1.0;       // 0.5 fallback kicks in automatically
    int fallback_after = 50;    // iterations of non-monotone gap before damping
};

// Mean-field solution. Paths live on the solve grid. Spectral solutions carry
// one (z^l, s^l) pair per eigendirection plus the complement offset s_breve;
// finite/idempotent solutions carry per-node paths.
struct MeanFieldSolution {
    SolveMode mode = SolveMode::Finite;
    SolveMethod method = SolveMethod::Riccati;
    GmfgParams params;
    TimeGrid grid;

    MatrixPath pi; // symmetric Riccati solution at grid nodes

    // Spectral payload.
    SpectralDecomposition decomp;
    std::vector<VectorPath> z_ell, s_ell;
    VectorPath s_breve;

    // Finite / idempotent payload (index = node).
    std::vector<VectorPath> z_node, s_node;
    int N = 0;

    bool converged = true;
    int iterations = 0;
    std::vector<double> gap_history; // fixed-point iterate gaps, sup-t sense
    double residual = 0.0;           // final gap (0 for Riccati routes)
    double L0 = std::numeric_limits<double>::quiet_NaN();
};

// Hermite-interpolated access to a solution; build once, evaluate anywhere.
class SolutionEvaluator {
public:
    explicit SolutionEvaluator(const MeanFieldSolution& sol);

    // Spectral mode: z(theta,t) = sum_l f_l(theta) z^l(t),
    // s(theta,t) = sum_l f_l(theta) (s^l(t) - s_breve(t)) + s_breve(t).
    Eigen::VectorXd z_at(double theta, double t) const;
    Eigen::VectorXd s_at(double theta, double t) const;

    // Finite / idempotent mode.
    Eigen::VectorXd z_node_at(int q, double t) const;
    Eigen::VectorXd s_node_at(int q, double t) const;

    Eigen::MatrixXd pi_at(double t) const;
    const MeanFieldSolution& solution() const { return *sol_; }

private:
    const MeanFieldSolution* sol_;
    MatrixInterpolant pi_;
    std::vector<PchipInterpolant> z_, s_;
    PchipInterpolant breve_;
};

// Convenience single-point reconstruction (builds no persistent state).
std::pair<Eigen::VectorXd, Eigen::VectorXd> reconstruct(const MeanFieldSolution& sol,
                                                        double theta, double t);

// Backward Riccati pass for the tracking problem:
//   -dPi/dt = A'Pi + Pi A - Pi B R^-1 B' Pi + Q, Pi(T) = QT.
MatrixPath solve_pi(const GmfgParams& p);

// Finite-network solvers on an N-node coupling matrix W (the mean-field
// coupling is M_f = W/N throughout). Means give x_bar(0); z(0) = (M_f ⊗ I) mu.
MeanFieldSolution solve_finite_fixedpoint(const GmfgParams& p, const Eigen::MatrixXd& W,
                                          const InitialMeans& means,
                                          const FixedPointOptions& opts = {});
MeanFieldSolution solve_finite_riccati(const GmfgParams& p, const Eigen::MatrixXd& W,
                                       const InitialMeans& means);

// One application of the fixed-point forward map: integrate the z dynamics
//   dz/dt = (I ⊗ A_c(t) + M_f ⊗ D) z - (M_f ⊗ B R^-1 B') s(t)
// given the offset path s (per node, at grid nodes). Returns z per node.
std::vector<VectorPath> ltv_graphon_evolve(const GmfgParams& p, const Eigen::MatrixXd& W,
                                           const InitialMeans& means,
                                           const std::vector<VectorPath>& s_node);

// Initial spectral coefficients <f_l, x_bar(0)> for step means (exact cell
// integrals of the eigenfunctions). Returns n x d.
Eigen::MatrixXd spectral_coefficients(const SpectralDecomposition& decomp,
                                      const InitialMeans& means);

// Spectral solver over the eigendirections of `decomp`. `coeffs` holds
// <f_l, x_bar(0)> per direction (n x d). Directions with equal eigenvalues
// (within 1e-10) share backward machinery.
MeanFieldSolution solve_spectral(const GmfgParams& p, const SpectralDecomposition& decomp,
                                 const Eigen::MatrixXd& coeffs,
                                 SolveMethod method = SolveMethod::Riccati,
                                 const FixedPointOptions& opts = {});

// Precomputed backward machinery (Pi, s_breve, per-eigenvalue Riccati pairs)
// reusable across solves that differ only in initial coefficients.
struct SpectralBackward;
std::shared_ptr<const SpectralBackward> prepare_spectral(const GmfgParams& p,
                                                         const std::vector<double>& lambdas);
MeanFieldSolution solve_spectral_prepared(const SpectralBackward& prep,
                                          const SpectralDecomposition& decomp,
                                          const Eigen::MatrixXd& coeffs,
                                          SolveMethod method = SolveMethod::Riccati,
                                          const FixedPointOptions& opts = {});

// Closed-form route for idempotent couplings: requires (W/N)^2 = W/N and
// eta = 0; nodes decouple given their aggregate initial condition.
MeanFieldSolution solve_idempotent(const GmfgParams& p, const Eigen::MatrixXd& W,
                                   const InitialMeans& means, double idem_tol = 1e-8);

// Contraction diagnostic L0 for the fixed-point map, evaluated over the given
// eigenvalues (the kernel/complement block contributes nothing). Time
// integrals use the trapezoid rule on a uniformly decimated subgrid of the
// solve grid with at most max_grid_nodes nodes; the sup over t is a grid max.
// L0 < 1 guarantees contraction; it is a sufficient bound only.
double compute_L0(const GmfgParams& p, const std::vector<double>& lambdas,
                  int max_grid_nodes = 201);

// Best-response control u(t,x) = -R^-1 B'(Pi_t x + s(t)) for the agent at
// theta (spectral) or node q (finite).
struct BestResponseLaw {
    Eigen::MatrixXd RinvBT;
    MatrixInterpolant pi;
    PchipInterpolant s;

    Eigen::VectorXd control(double t, const Eigen::VectorXd& x) const {
        return -(RinvBT * (pi(t) * x + s(t)));
    }
};

BestResponseLaw best_response(const MeanFieldSolution& sol, double theta);
BestResponseLaw best_response_node(const MeanFieldSolution& sol, int q);

} // namespace gmfg
