#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gmfg {

// Midpoint quadrature on [0,1]: nodes (i + 1/2)/n, uniform weight 1/n.
struct Quadrature {
    int n = 1024;

    double node(int i) const { return (i + 0.5) / n; }
    double weight() const { return 1.0 / n; }
};

// L^2[0,1] function given in one of two finite representations:
//  - Cos:  coeffs[0] * 1 + sum_m coeffs[m] * sqrt(2) cos(m pi x / 2), m = 1..M
//  - Step: constant coeffs[q] on the uniform cell P_q, q = 0..N-1
// Means and cell integrals have closed forms in both bases, which the solver
// uses for exact eta-source projections and initial coefficients.
class Eigenfunction {
public:
    enum class Basis { Cos, Step };

    Eigenfunction() = default;
    Eigenfunction(Basis basis, Eigen::VectorXd coeffs);

    static Eigenfunction cos_mode(int k);             // sqrt(2) cos(k pi x / 2)
    static Eigenfunction step(const Eigen::VectorXd& cell_values);

    double operator()(double x) const;
    Basis basis() const { return basis_; }
    const Eigen::VectorXd& coeffs() const { return coeffs_; }

    double mean() const;                              // <f, 1>
    double integral(double a, double b) const;        // int_a^b f
    Eigen::VectorXd cell_integrals(int N) const;      // int_{P_q} f, q = 0..N-1

private:
    Basis basis_ = Basis::Step;
    Eigen::VectorXd coeffs_;
};

// Finite spectral data of a graphon operator: eigenvalues with nonzero
// modulus, sorted by descending |lambda| (ties: descending lambda, then
// insertion order), with L^2-orthonormal eigenfunctions.
struct SpectralDecomposition {
    std::vector<double> lambdas;
    std::vector<Eigenfunction> funcs;

    int size() const { return static_cast<int>(lambdas.size()); }
    SpectralDecomposition truncated(int k) const;
};

enum class GraphonKind { Analytic, Step, Spectral };

// Bounded symmetric kernel W: [0,1]^2 -> [-c, c], acting on L^2[0,1] as
// (Wf)(x) = int W(x,y) f(y) dy. Three representations are supported; `kind`
// selects which fields are meaningful.
struct Graphon {
    GraphonKind kind = GraphonKind::Step;
    double bound = 1.0; // c

    // Analytic: named kernel from the registry (see Graphon::analytic).
    std::string name;
    std::function<double(double, double)> fn;

    // Step: symmetric N x N matrix on the uniform N-cell partition.
    Eigen::MatrixXd W;

    // Spectral: finite-rank kernel sum_l lambda_l f_l(x) f_l(y).
    SpectralDecomposition spec;

    double operator()(double x, double y) const;
    int cells() const { return static_cast<int>(W.rows()); }

    static Graphon analytic(const std::string& name); // "uniform_attachment", "min", "product"
    static Graphon uniform_attachment();              // W(x,y) = 1 - max(x,y)
    static Graphon constant(double value);
    static Graphon spectral(SpectralDecomposition d, double bound = 1.0);
};

// Step graphon from a symmetric matrix; validates symmetry and |w_ij| <= c.
Graphon step_from_matrix(const Eigen::MatrixXd& W, double c = 1.0);

// Kernel evaluated at all quadrature node pairs, K_ij = W(x_i, x_j).
Eigen::MatrixXd kernel_on_grid(const Graphon& g, const Quadrature& q);

// (Wf)(x_i) by midpoint quadrature, for f given on the grid or as a callable.
Eigen::VectorXd apply_graphon(const Graphon& g, const Eigen::VectorXd& f_on_grid,
                              const Quadrature& q = {});
Eigen::VectorXd apply_graphon(const Graphon& g, const std::function<double(double)>& f,
                              const Quadrature& q = {});

// Spectral decomposition of a step graphon: eigenvalues lambda_i(W)/N with
// step eigenfunctions sqrt(N) * v_i. Eigenvalues with |lambda_i(W)| below
// 1e-12 * N are dropped; max_rank < 0 keeps all remaining.
SpectralDecomposition spectral_of_step(const Graphon& g, int max_rank = -1);

// Leading eigenpairs of the uniform-attachment limit: lambda_k = 4/(k pi)^2
// with eigenfunction sqrt(2) cos(k pi x / 2), over odd k in decreasing order.
SpectralDecomposition ua_eigenpairs(int count);

// Operator (spectral) norm. Step graphons are exact via dense symmetric
// eigendecomposition of W/N; other kinds use power iteration on the
// quadrature discretization.
double operator_norm(const Graphon& g, const Quadrature& q = {});

// Hilbert-Schmidt (L^2 kernel) norm; exact for step graphons.
double l2_norm(const Graphon& g, const Quadrature& q = {});

// Operator norm of the difference kernel g1 - g2 on the quadrature grid.
double op_distance(const Graphon& g1, const Graphon& g2, const Quadrature& q = {});

struct CutNormOptions {
    int exact_limit = 14; // exhaustive subset search up to this many cells
    int starts = 32;      // random restarts of the alternating heuristic
    std::uint64_t seed = 12345;
};

// Cut norm of the step graphon with matrix W:
//   max over cell subsets S, T of |sum_{S x T} w_ij| / N^2.
// Exact for N <= exact_limit (the optimum of the bilinear relaxation sits at
// subset vertices); otherwise a greedy alternating maximization lower bound.
double cut_norm_step(const Eigen::MatrixXd& W, const CutNormOptions& opts = {});

struct SampledGraph {
    Eigen::MatrixXd W;       // symmetric, zero diagonal
    Eigen::VectorXd latents; // ascending; empty for generated graphs
    std::uint64_t seed = 0;
};

// N latent points x_i ~ U[0,1] sorted ascending; edge {i,j} with probability
// g(x_i, x_j). Requires kernel values in [0,1].
SampledGraph sample_simple_graph(const Graphon& g, int N, std::uint64_t seed);

// Same latents, but edge weight g(x_i, x_j) instead of a Bernoulli draw.
SampledGraph sample_weighted_graph(const Graphon& g, int N, std::uint64_t seed);

// Uniform attachment growth: at stage k = 2..N every unconnected pair among
// nodes {1..k} gains an edge with probability 1/k. Nodes are relabeled by
// descending degree so that the step embedding aligns with the limit kernel
// 1 - max(x,y).
SampledGraph generate_uniform_attachment(int N, std::uint64_t seed);

enum class FitBasis { Cos, Piecewise };

// Spectral fit from a dense grid evaluation: eigendecompose the gridN x gridN
// midpoint kernel matrix / gridN, keep the k leading pairs, and represent the
// eigenfunctions either by least squares in the cosine basis
// {1, sqrt(2) cos(m pi x/2), m = 1..M} or as raw step functions on the grid.
Graphon fit_spectral_from_grid(const Graphon& g, int gridN, int k,
                               FitBasis basis = FitBasis::Cos, int M = 16);

} // namespace gmfg
