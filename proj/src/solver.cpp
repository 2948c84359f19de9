#include "gmfg/solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gmfg {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd kron(const MatrixXd& A, const MatrixXd& B) {
    MatrixXd out(A.rows() * B.rows(), A.cols() * B.cols());
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j)
            out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return out;
}

void check_symmetric(const MatrixXd& M, const char* what) {
    if (M.rows() != M.cols())
        throw std::invalid_argument(std::string(what) + " must be square");
    const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw std::invalid_argument(std::string(what) + " must be symmetric");
}

// Backward quantities are integrated with step dt/4 (Pi) and dt/2 (everything
// that consumes Pi), and stored on the matching lattices. Forward RK4 with
// step dt then reads stage values at exact stored nodes -- no interpolation of
// backward data ever happens, which keeps the finite and spectral routes
// numerically interchangeable.
struct Workspace {
    GmfgParams p;
    TimeGrid base, half, quarter;
    MatrixXd Btil, QH, QTH;
    std::vector<MatrixXd> pi4; // quarter-lattice nodes
    bool pi_diverged = false;

    int n() const { return p.n(); }
    int q4(double t) const { return quarter.index_of(t); }
    const MatrixXd& Pi(int r4) const { return pi4[r4]; }
    MatrixXd Ac(int r4) const { return p.A - Btil * pi4[r4]; }
    MatrixXd Gz(int r4) const { return QH - pi4[r4] * p.D; }
};

Workspace make_workspace(const GmfgParams& p) {
    p.validate();
    Workspace w;
    w.p = p;
    w.base = p.grid();
    w.half = w.base.refined();
    w.quarter = w.half.refined();
    w.Btil = p.B * p.R.partialPivLu().solve(p.B.transpose());
    w.QH = p.Q * p.H;
    w.QTH = p.QT * p.H;

    auto f = [&](double, const MatrixXd& P) -> MatrixXd {
        return -(p.A.transpose() * P + P * p.A - P * w.Btil * P + p.Q);
    };
    w.pi4.assign(w.quarter.nodes(), MatrixXd());
    w.pi4[w.quarter.steps] = p.QT;
    const double h = -w.quarter.dt();
    for (int r = w.quarter.steps; r > 0; --r) {
        MatrixXd next = rk4_step(f, w.quarter.t(r), h, w.pi4[r]);
        next = 0.5 * (next + next.transpose()).eval();
        if (!state_finite(next)) {
            w.pi_diverged = true;
            for (int j = r - 1; j >= 0; --j) w.pi4[j] = w.pi4[r];
            break;
        }
        w.pi4[r - 1] = next;
    }
    return w;
}

MatrixPath base_pi_path(const Workspace& w) {
    MatrixPath out;
    out.grid = w.base;
    out.m.resize(w.base.nodes());
    for (int k = 0; k <= w.base.steps; ++k) out.m[k] = w.pi4[4 * k];
    return out;
}

// Joint backward pass for one eigendirection: the offset Riccati factor o and
// the unit-source bias e1 share RK4 stages (state [o | e1], step dt/2).
//   -do/dt = Ac' o + o (Ac + lam D) - o (lam Btil) o - Gz,      o(T) = QT H
//   de1/dt = (-Ac' + lam o Btil) e1 + Q H eta,                  e1(T) = QT H eta
struct DirectionBackward {
    std::vector<MatrixXd> o;  // half lattice
    std::vector<VectorXd> e1; // half lattice
    bool diverged = false;
};

DirectionBackward backward_direction(const Workspace& w, double lam) {
    const int n = w.n();
    const TimeGrid& hg = w.half;
    DirectionBackward out;
    out.o.assign(hg.nodes(), MatrixXd());
    out.e1.assign(hg.nodes(), VectorXd());

    auto f = [&](double t, const MatrixXd& Y) -> MatrixXd {
        const int r = w.q4(t);
        const MatrixXd Ac = w.Ac(r);
        const auto o = Y.leftCols(n);
        const auto e = Y.col(n);
        MatrixXd d(n, n + 1);
        d.leftCols(n) =
            -(Ac.transpose() * o + o * (Ac + lam * w.p.D) - o * (lam * w.Btil) * o - w.Gz(r));
        d.col(n) = -Ac.transpose() * e + lam * (o * (w.Btil * e)) + w.QH * w.p.eta;
        return d;
    };

    MatrixXd Y(n, n + 1);
    Y.leftCols(n) = w.QTH;
    Y.col(n) = w.QTH * w.p.eta;
    out.o[hg.steps] = Y.leftCols(n);
    out.e1[hg.steps] = Y.col(n);
    const double h = -hg.dt();
    for (int r = hg.steps; r > 0; --r) {
        MatrixXd next = rk4_step(f, hg.t(r), h, Y);
        if (!state_finite(next)) {
            out.diverged = true;
            for (int j = r - 1; j >= 0; --j) {
                out.o[j] = out.o[r];
                out.e1[j] = out.e1[r];
            }
            return out;
        }
        Y = next;
        out.o[r - 1] = Y.leftCols(n);
        out.e1[r - 1] = Y.col(n);
    }
    return out;
}

// Space-constant bias: ds/dt = -Ac' s + Q H eta, s(T) = QT H eta (half lattice).
std::vector<VectorXd> backward_breve(const Workspace& w) {
    const TimeGrid& hg = w.half;
    std::vector<VectorXd> out(hg.nodes());
    auto f = [&](double t, const VectorXd& s) -> VectorXd {
        const int r = w.q4(t);
        return -w.Ac(r).transpose() * s + w.QH * w.p.eta;
    };
    out[hg.steps] = w.QTH * w.p.eta;
    VectorXd y = out[hg.steps];
    const double h = -hg.dt();
    for (int r = hg.steps; r > 0; --r) {
        y = rk4_step(f, hg.t(r), h, y);
        out[r - 1] = y;
    }
    return out;
}

// Forward pass for one eigendirection given its backward data. The offset fed
// back is sigma = o zeta + c e1; outputs are stored at base-grid nodes with
// the storage convention s^l = sigma + (1 - c) s_breve.
struct DirectionForward {
    VectorPath z, s;
    bool diverged = false;
};

DirectionForward forward_direction(const Workspace& w, const DirectionBackward& bk,
                                   const std::vector<VectorXd>* sbreve, double lam, double c,
                                   const VectorXd& a) {
    const TimeGrid& g = w.base;
    DirectionForward out;
    out.z.grid = g;
    out.s.grid = g;
    out.z.v.resize(g.nodes());
    out.s.v.resize(g.nodes());

    auto f = [&](double t, const VectorXd& z) -> VectorXd {
        const int r = w.half.index_of(t);
        const VectorXd sigma = bk.o[r] * z + c * bk.e1[r];
        return w.Ac(2 * r) * z + lam * (w.p.D * z) - lam * (w.Btil * sigma);
    };

    auto emit = [&](int k, const VectorXd& z) {
        out.z.v[k] = z;
        VectorXd s = bk.o[2 * k] * z + c * bk.e1[2 * k];
        if (sbreve) s += (1.0 - c) * (*sbreve)[2 * k];
        out.s.v[k] = s;
    };

    VectorXd z = lam * a;
    emit(0, z);
    const double h = g.dt();
    for (int k = 0; k < g.steps; ++k) {
        VectorXd next = rk4_step(f, g.t(k), h, z);
        if (!state_finite(next)) {
            out.diverged = true;
            for (int j = k + 1; j <= g.steps; ++j) emit(j, z);
            return out;
        }
        z = next;
        emit(k + 1, z);
    }
    return out;
}

// ------------------------------------------------------- fixed-point engine
//
// One engine covers both couplings:
//   finite:   columns = nodes,      M = W/N,        source vector = 1_N
//   spectral: columns = directions, M = diag(lam),  source vector = <f_l, 1>
// Iterates alternate a backward offset pass (given the aggregate path Z) and
// a forward aggregate pass (given the offset path S):
//   dZ/dt = Ac Z + D Z M - Btil S M,            Z(0) given
//   dS/dt = -Ac' S + Gz Z + (Q H eta) src',     S(T) = QT H (Z(T) + eta src')
// Successive-iterate gaps are sup-t Frobenius norms scaled by norm_weight.

struct FixedPointSpec {
    MatrixXd M;
    VectorXd src;
    MatrixXd Z0;
    double norm_weight = 1.0;
};

struct FixedPointResult {
    std::vector<MatrixXd> Z, S; // base-grid nodes
    bool converged = false;
    int iterations = 0;
    std::vector<double> gaps;
    double residual = 0.0;
};

std::vector<MatrixXd> fp_forward(const Workspace& w, const FixedPointSpec& spec,
                                 const MatrixInterpolant* S, bool* diverged) {
    const TimeGrid& g = w.base;
    std::vector<MatrixXd> Z(g.nodes());
    auto f = [&](double t, const MatrixXd& z) -> MatrixXd {
        const int r = w.q4(t);
        MatrixXd rhs = w.Ac(r) * z + w.p.D * z * spec.M;
        if (S) rhs -= w.Btil * (*S)(t)*spec.M;
        return rhs;
    };
    if (diverged) *diverged = false;
    MatrixXd z = spec.Z0;
    Z[0] = z;
    const double h = g.dt();
    for (int k = 0; k < g.steps; ++k) {
        MatrixXd next = rk4_step(f, g.t(k), h, z);
        if (!state_finite(next)) {
            if (diverged) *diverged = true;
            for (int j = k + 1; j <= g.steps; ++j) Z[j] = z;
            return Z;
        }
        z = next;
        Z[k + 1] = z;
    }
    return Z;
}

std::vector<MatrixXd> fp_backward(const Workspace& w, const FixedPointSpec& spec,
                                  const MatrixInterpolant& Zint, const MatrixXd& ZT,
                                  bool* diverged) {
    const TimeGrid& g = w.base;
    std::vector<MatrixXd> S(g.nodes());
    const MatrixXd src_term = (w.QH * w.p.eta) * spec.src.transpose();
    auto f = [&](double t, const MatrixXd& s) -> MatrixXd {
        const int r = w.q4(t);
        return -w.Ac(r).transpose() * s + w.Gz(r) * Zint(t) + src_term;
    };
    if (diverged) *diverged = false;
    MatrixXd s = w.QTH * (ZT + w.p.eta * spec.src.transpose());
    S[g.steps] = s;
    const double h = -g.dt();
    for (int k = g.steps; k > 0; --k) {
        MatrixXd next = rk4_step(f, g.t(k), h, s);
        if (!state_finite(next)) {
            if (diverged) *diverged = true;
            for (int j = k - 1; j >= 0; --j) S[j] = s;
            return S;
        }
        s = next;
        S[k - 1] = s;
    }
    return S;
}

MatrixInterpolant interpolate_path(const TimeGrid& g, const std::vector<MatrixXd>& m) {
    MatrixPath p;
    p.grid = g;
    p.m = m;
    return MatrixInterpolant(p);
}

FixedPointResult run_fixedpoint(const Workspace& w, const FixedPointSpec& spec,
                                const FixedPointOptions& opts) {
    const TimeGrid& g = w.base;
    FixedPointResult out;
    bool div = false;

    std::vector<MatrixXd> Z = fp_forward(w, spec, nullptr, &div);
    double gamma = opts.damping;
    bool damped = false;
    int bad = 0;
    double prev_gap = std::numeric_limits<double>::infinity();

    for (int it = 1; it <= opts.max_iter && !div; ++it) {
        out.iterations = it;
        std::vector<MatrixXd> S = fp_backward(w, spec, interpolate_path(g, Z), Z[g.steps], &div);
        if (div) break;
        MatrixInterpolant Sint = interpolate_path(g, S);
        std::vector<MatrixXd> Znew = fp_forward(w, spec, &Sint, &div);
        if (div) break;

        double gap = 0.0;
        for (int k = 0; k <= g.steps; ++k)
            gap = std::max(gap, (Znew[k] - Z[k]).norm() * spec.norm_weight);
        out.gaps.push_back(gap);
        out.residual = gap;
        if (!std::isfinite(gap) || gap > kDivergenceThreshold) {
            div = true;
            break;
        }

        if (gamma == 1.0) {
            Z = std::move(Znew);
        } else {
            for (int k = 0; k <= g.steps; ++k) Z[k] = (1.0 - gamma) * Z[k] + gamma * Znew[k];
        }
        if (gap < opts.tol) {
            out.converged = true;
            break;
        }
        if (gap > prev_gap) {
            if (++bad >= opts.fallback_after && !damped) {
                gamma *= 0.5;
                damped = true;
            }
        }
        prev_gap = gap;
    }

    out.Z = Z;
    out.S = fp_backward(w, spec, interpolate_path(g, Z), Z[g.steps], &div);
    if (div) out.converged = false;
    return out;
}

// --------------------------------------------------------- finite helpers

void check_finite_inputs(const GmfgParams& p, const MatrixXd& W, const InitialMeans& means) {
    check_symmetric(W, "coupling matrix W");
    if (means.mu.rows() != p.n() || means.mu.cols() != W.rows())
        throw std::invalid_argument("initial means must be n x N");
}

// (I_N (x) G) * X without forming the Kronecker product.
MatrixXd block_left(const MatrixXd& G, const MatrixXd& X, int n, int N) {
    MatrixXd out(n * N, X.cols());
    for (int q = 0; q < N; ++q) out.middleRows(q * n, n) = G * X.middleRows(q * n, n);
    return out;
}

MatrixXd block_right(const MatrixXd& X, const MatrixXd& G, int n, int N) {
    MatrixXd out(X.rows(), n * N);
    for (int q = 0; q < N; ++q) out.middleCols(q * n, n) = X.middleCols(q * n, n) * G;
    return out;
}

MeanFieldSolution finite_solution_shell(const Workspace& w, int N, SolveMethod method) {
    MeanFieldSolution sol;
    sol.mode = SolveMode::Finite;
    sol.method = method;
    sol.params = w.p;
    sol.grid = w.base;
    sol.pi = base_pi_path(w);
    sol.N = N;
    sol.converged = !w.pi_diverged;
    return sol;
}

void fill_node_paths(MeanFieldSolution& sol, const std::vector<MatrixXd>& Z,
                     const std::vector<MatrixXd>& S) {
    const int N = sol.N;
    const int nodes = sol.grid.nodes();
    sol.z_node.assign(N, VectorPath{sol.grid, {}});
    sol.s_node.assign(N, VectorPath{sol.grid, {}});
    for (int q = 0; q < N; ++q) {
        sol.z_node[q].v.resize(nodes);
        sol.s_node[q].v.resize(nodes);
        for (int k = 0; k < nodes; ++k) {
            sol.z_node[q].v[k] = Z[k].col(q);
            sol.s_node[q].v[k] = S[k].col(q);
        }
    }
}

} // namespace

// ----------------------------------------------------------------- params

void GmfgParams::validate() const {
    const int nn = n();
    if (nn < 1) throw std::invalid_argument("state dimension must be >= 1");
    if (A.cols() != nn) throw std::invalid_argument("A must be square");
    if (B.rows() != nn || B.cols() < 1) throw std::invalid_argument("B must be n x m");
    for (const auto* mp : {&D, &Q, &QT, &H, &Sigma}) {
        if (mp->rows() != nn || mp->cols() != nn)
            throw std::invalid_argument("D, Q, QT, H, Sigma must be n x n");
    }
    check_symmetric(Q, "Q");
    check_symmetric(QT, "QT");
    check_symmetric(R, "R");
    if (R.rows() != m()) throw std::invalid_argument("R must be m x m");
    if (!Eigen::FullPivLU<MatrixXd>(R).isInvertible())
        throw std::invalid_argument("R must be invertible");
    if (eta.size() != nn) throw std::invalid_argument("eta must have dimension n");
    if (!(T > 0.0) || !(dt > 0.0) || dt > T)
        throw std::invalid_argument("need 0 < dt <= T");
}

GmfgParams GmfgParams::reference() {
    GmfgParams p;
    p.A = (MatrixXd(2, 2) << 0.0, 10.0, -10.0, 0.0).finished();
    p.B = MatrixXd::Identity(2, 2);
    p.D = MatrixXd::Identity(2, 2);
    p.Q = 0.5 * MatrixXd::Identity(2, 2);
    p.R = MatrixXd::Identity(2, 2);
    p.QT = MatrixXd::Identity(2, 2);
    p.H = MatrixXd::Identity(2, 2);
    p.Sigma = 0.1 * MatrixXd::Identity(2, 2);
    p.eta = (VectorXd(2) << 2.0, 2.0).finished();
    p.T = 1.0;
    p.dt = 1e-3;
    return p;
}

MatrixPath solve_pi(const GmfgParams& p) { return base_pi_path(make_workspace(p)); }

// ------------------------------------------------------------ spectral API

struct SpectralBackward {
    Workspace w;
    std::vector<double> lambdas;   // as supplied at preparation time
    std::vector<int> group_of;     // index into distinct-lambda storage
    std::vector<DirectionBackward> groups;
    std::vector<VectorXd> sbreve;  // half lattice
    bool diverged = false;
};

std::shared_ptr<const SpectralBackward> prepare_spectral(const GmfgParams& p,
                                                         const std::vector<double>& lambdas) {
    auto prep = std::make_shared<SpectralBackward>();
    prep->w = make_workspace(p);
    prep->lambdas = lambdas;
    prep->diverged = prep->w.pi_diverged;
    prep->sbreve = backward_breve(prep->w);

    std::vector<double> reps;
    for (double lam : lambdas) {
        int g = -1;
        for (size_t i = 0; i < reps.size(); ++i)
            if (std::abs(reps[i] - lam) <= 1e-10) {
                g = static_cast<int>(i);
                break;
            }
        if (g < 0) {
            reps.push_back(lam);
            prep->groups.push_back(backward_direction(prep->w, lam));
            if (prep->groups.back().diverged) prep->diverged = true;
            g = static_cast<int>(reps.size()) - 1;
        }
        prep->group_of.push_back(g);
    }
    return prep;
}

MeanFieldSolution solve_spectral_prepared(const SpectralBackward& prep,
                                          const SpectralDecomposition& decomp,
                                          const Eigen::MatrixXd& coeffs, SolveMethod method,
                                          const FixedPointOptions& opts) {
    const Workspace& w = prep.w;
    const int d = decomp.size();
    if (static_cast<int>(prep.lambdas.size()) != d || coeffs.cols() != d ||
        coeffs.rows() != w.n())
        throw std::invalid_argument("solve_spectral: decomposition/coefficients mismatch");
    for (int l = 0; l < d; ++l)
        if (std::abs(decomp.lambdas[l] - prep.lambdas[l]) > 1e-12)
            throw std::invalid_argument("solve_spectral: eigenvalues differ from prepared set");

    MeanFieldSolution sol;
    sol.mode = SolveMode::Spectral;
    sol.method = method;
    sol.params = w.p;
    sol.grid = w.base;
    sol.pi = base_pi_path(w);
    sol.decomp = decomp;
    sol.converged = !prep.diverged;

    VectorXd cmeans(d);
    for (int l = 0; l < d; ++l) cmeans[l] = decomp.funcs[l].mean();

    sol.s_breve.grid = w.base;
    sol.s_breve.v.resize(w.base.nodes());
    for (int k = 0; k <= w.base.steps; ++k) sol.s_breve.v[k] = prep.sbreve[2 * k];

    if (method == SolveMethod::Riccati) {
        for (int l = 0; l < d; ++l) {
            DirectionForward fw =
                forward_direction(w, prep.groups[prep.group_of[l]], &prep.sbreve,
                                  decomp.lambdas[l], cmeans[l], coeffs.col(l));
            if (fw.diverged) sol.converged = false;
            sol.z_ell.push_back(std::move(fw.z));
            sol.s_ell.push_back(std::move(fw.s));
        }
        return sol;
    }

    FixedPointSpec spec;
    spec.M = MatrixXd::Zero(d, d);
    for (int l = 0; l < d; ++l) spec.M(l, l) = decomp.lambdas[l];
    spec.src = cmeans;
    spec.Z0 = coeffs * spec.M;
    spec.norm_weight = 1.0;
    FixedPointResult fp = run_fixedpoint(w, spec, opts);
    sol.converged = sol.converged && fp.converged;
    sol.iterations = fp.iterations;
    sol.gap_history = fp.gaps;
    sol.residual = fp.residual;
    const int nodes = w.base.nodes();
    for (int l = 0; l < d; ++l) {
        VectorPath zp{w.base, std::vector<VectorXd>(nodes)};
        VectorPath sp{w.base, std::vector<VectorXd>(nodes)};
        for (int k = 0; k < nodes; ++k) {
            zp.v[k] = fp.Z[k].col(l);
            sp.v[k] = fp.S[k].col(l) + (1.0 - cmeans[l]) * prep.sbreve[2 * k];
        }
        sol.z_ell.push_back(std::move(zp));
        sol.s_ell.push_back(std::move(sp));
    }
    return sol;
}

MeanFieldSolution solve_spectral(const GmfgParams& p, const SpectralDecomposition& decomp,
                                 const Eigen::MatrixXd& coeffs, SolveMethod method,
                                 const FixedPointOptions& opts) {
    auto prep = prepare_spectral(p, decomp.lambdas);
    return solve_spectral_prepared(*prep, decomp, coeffs, method, opts);
}

Eigen::MatrixXd spectral_coefficients(const SpectralDecomposition& decomp,
                                      const InitialMeans& means) {
    const int N = means.nodes();
    MatrixXd out(means.mu.rows(), decomp.size());
    for (int l = 0; l < decomp.size(); ++l)
        out.col(l) = means.mu * decomp.funcs[l].cell_integrals(N);
    return out;
}

// -------------------------------------------------------------- finite API

MeanFieldSolution solve_finite_fixedpoint(const GmfgParams& p, const Eigen::MatrixXd& W,
                                          const InitialMeans& means,
                                          const FixedPointOptions& opts) {
    check_finite_inputs(p, W, means);
    Workspace w = make_workspace(p);
    const int N = static_cast<int>(W.rows());

    FixedPointSpec spec;
    spec.M = W / N;
    spec.src = VectorXd::Ones(N);
    spec.Z0 = means.mu * spec.M;
    spec.norm_weight = 1.0 / std::sqrt(static_cast<double>(N));
    FixedPointResult fp = run_fixedpoint(w, spec, opts);

    MeanFieldSolution sol = finite_solution_shell(w, N, SolveMethod::FixedPoint);
    sol.converged = sol.converged && fp.converged;
    sol.iterations = fp.iterations;
    sol.gap_history = fp.gaps;
    sol.residual = fp.residual;
    fill_node_paths(sol, fp.Z, fp.S);
    return sol;
}

std::vector<VectorPath> ltv_graphon_evolve(const GmfgParams& p, const Eigen::MatrixXd& W,
                                           const InitialMeans& means,
                                           const std::vector<VectorPath>& s_node) {
    check_finite_inputs(p, W, means);
    Workspace w = make_workspace(p);
    const int N = static_cast<int>(W.rows());
    if (static_cast<int>(s_node.size()) != N)
        throw std::invalid_argument("ltv_graphon_evolve: need one offset path per node");

    FixedPointSpec spec;
    spec.M = W / N;
    spec.src = VectorXd::Ones(N);
    spec.Z0 = means.mu * spec.M;

    for (int q = 0; q < N; ++q)
        if (s_node[q].grid.steps != w.base.steps || s_node[q].nodes() != w.base.nodes())
            throw std::invalid_argument("ltv_graphon_evolve: offset grid mismatch");
    std::vector<MatrixXd> S(w.base.nodes(), MatrixXd(p.n(), N));
    for (int k = 0; k < w.base.nodes(); ++k)
        for (int q = 0; q < N; ++q) S[k].col(q) = s_node[q].v[k];
    MatrixInterpolant Sint = interpolate_path(w.base, S);
    bool div = false;
    std::vector<MatrixXd> Z = fp_forward(w, spec, &Sint, &div);

    std::vector<VectorPath> out(N, VectorPath{w.base, {}});
    for (int q = 0; q < N; ++q) {
        out[q].v.resize(w.base.nodes());
        for (int k = 0; k < w.base.nodes(); ++k) out[q].v[k] = Z[k].col(q);
    }
    return out;
}

MeanFieldSolution solve_finite_riccati(const GmfgParams& p, const Eigen::MatrixXd& W,
                                       const InitialMeans& means) {
    check_finite_inputs(p, W, means);
    Workspace w = make_workspace(p);
    const int n = p.n();
    const int N = static_cast<int>(W.rows());
    const int nN = n * N;
    const MatrixXd Mf = W / N;
    const MatrixXd MB = kron(Mf, w.Btil);
    const MatrixXd MD = kron(Mf, p.D);
    VectorXd ones_eta(nN);
    const VectorXd qeta = w.QH * p.eta;
    for (int q = 0; q < N; ++q) ones_eta.segment(q * n, n) = qeta;

    // Joint backward state [P | e] on the half lattice:
    //   -dP/dt = (I (x) Ac') P + P (I (x) Ac + Mf (x) D) - P (Mf (x) Btil) P - I (x) Gz
    //    de/dt = (-(I (x) Ac') + P (Mf (x) Btil)) e + 1 (x) Q H eta
    const TimeGrid& hg = w.half;
    std::vector<MatrixXd> P(hg.nodes());
    std::vector<VectorXd> ebar(hg.nodes());
    auto f = [&](double t, const MatrixXd& Y) -> MatrixXd {
        const int r = w.q4(t);
        const MatrixXd Ac = w.Ac(r);
        const MatrixXd Gz = w.Gz(r);
        const auto Pc = Y.leftCols(nN);
        const auto e = Y.col(nN);
        MatrixXd dP = block_left(Ac.transpose(), Pc, n, N) + block_right(Pc, Ac, n, N) +
                      Pc * MD - Pc * (MB * Pc);
        for (int q = 0; q < N; ++q) dP.block(q * n, q * n, n, n) -= Gz;
        MatrixXd d(nN, nN + 1);
        d.leftCols(nN) = -dP;
        d.col(nN) = -block_left(Ac.transpose(), e, n, N) + Pc * (MB * e) + ones_eta;
        return d;
    };

    MatrixXd Y = MatrixXd::Zero(nN, nN + 1);
    for (int q = 0; q < N; ++q) Y.block(q * n, q * n, n, n) = w.QTH;
    const VectorXd qteta = w.QTH * p.eta;
    for (int q = 0; q < N; ++q) Y.col(nN).segment(q * n, n) = qteta;
    P[hg.steps] = Y.leftCols(nN);
    ebar[hg.steps] = Y.col(nN);
    bool diverged = w.pi_diverged;
    const double h = -hg.dt();
    for (int r = hg.steps; r > 0; --r) {
        MatrixXd next = rk4_step(f, hg.t(r), h, Y);
        if (!state_finite(next)) {
            diverged = true;
            for (int j = r - 1; j >= 0; --j) {
                P[j] = P[r];
                ebar[j] = ebar[r];
            }
            break;
        }
        Y = next;
        P[r - 1] = Y.leftCols(nN);
        ebar[r - 1] = Y.col(nN);
    }

    // Forward aggregate with the Riccati feedback s = P z + e.
    const TimeGrid& g = w.base;
    std::vector<VectorXd> zbar(g.nodes());
    auto fz = [&](double t, const VectorXd& z) -> VectorXd {
        const int r = w.half.index_of(t);
        const VectorXd s = P[r] * z + ebar[r];
        return block_left(w.Ac(2 * r), z, n, N) + MD * z - MB * s;
    };
    VectorXd z(nN);
    {
        const MatrixXd Z0 = means.mu * Mf;
        for (int q = 0; q < N; ++q) z.segment(q * n, n) = Z0.col(q);
    }
    zbar[0] = z;
    for (int k = 0; k < g.steps; ++k) {
        VectorXd next = rk4_step(fz, g.t(k), g.dt(), z);
        if (!state_finite(next)) {
            diverged = true;
            for (int j = k + 1; j <= g.steps; ++j) zbar[j] = z;
            break;
        }
        z = next;
        zbar[k + 1] = z;
    }

    MeanFieldSolution sol = finite_solution_shell(w, N, SolveMethod::Riccati);
    sol.converged = !diverged;
    std::vector<MatrixXd> Zn(g.nodes()), Sn(g.nodes());
    for (int k = 0; k <= g.steps; ++k) {
        const VectorXd s = P[2 * k] * zbar[k] + ebar[2 * k];
        Zn[k] = Eigen::Map<const MatrixXd>(zbar[k].data(), n, N);
        Sn[k] = Eigen::Map<const MatrixXd>(s.data(), n, N);
    }
    fill_node_paths(sol, Zn, Sn);
    return sol;
}

MeanFieldSolution solve_idempotent(const GmfgParams& p, const Eigen::MatrixXd& W,
                                   const InitialMeans& means, double idem_tol) {
    check_finite_inputs(p, W, means);
    const int N = static_cast<int>(W.rows());
    const MatrixXd Mf = W / N;
    if ((Mf * Mf - Mf).cwiseAbs().maxCoeff() > idem_tol)
        throw std::invalid_argument("solve_idempotent: W/N is not idempotent");
    if (p.eta.cwiseAbs().maxCoeff() > idem_tol)
        throw std::invalid_argument("solve_idempotent: requires eta = 0");

    Workspace w = make_workspace(p);
    DirectionBackward bk = backward_direction(w, 1.0);

    MeanFieldSolution sol = finite_solution_shell(w, N, SolveMethod::Riccati);
    sol.mode = SolveMode::Idempotent;
    sol.converged = sol.converged && !bk.diverged;

    // Every node's aggregate runs the lam = 1 direction from its own start.
    const MatrixXd Z0 = means.mu * Mf;
    const int nodes = w.base.nodes();
    std::vector<MatrixXd> Zn(nodes, MatrixXd(p.n(), N)), Sn(nodes, MatrixXd(p.n(), N));
    for (int q = 0; q < N; ++q) {
        DirectionForward fw = forward_direction(w, bk, nullptr, 1.0, 0.0, Z0.col(q));
        if (fw.diverged) sol.converged = false;
        for (int k = 0; k < nodes; ++k) {
            Zn[k].col(q) = fw.z.v[k];
            Sn[k].col(q) = fw.s.v[k];
        }
    }
    fill_node_paths(sol, Zn, Sn);
    return sol;
}

// -------------------------------------------------------------- L0 diagnostic

namespace {

double spec_norm(const MatrixXd& M) {
    if (M.rows() == 2 && M.cols() == 2) {
        const double fro2 = M.squaredNorm();
        const double det = M(0, 0) * M(1, 1) - M(0, 1) * M(1, 0);
        const double disc = std::sqrt(std::max(fro2 * fro2 - 4.0 * det * det, 0.0));
        return std::sqrt(0.5 * (fro2 + disc));
    }
    return M.jacobiSvd().singularValues()(0);
}

} // namespace

double compute_L0(const GmfgParams& p, const std::vector<double>& lambdas, int max_grid_nodes) {
    if (lambdas.empty()) return 0.0;
    Workspace w = make_workspace(p);
    if (w.pi_diverged) return std::numeric_limits<double>::infinity();
    const int n = p.n();
    const TimeGrid& g = w.base;

    // distinct eigenvalues only; duplicates add nothing to the max
    std::vector<double> lams;
    for (double l : lambdas) {
        bool seen = false;
        for (double x : lams) seen = seen || std::abs(x - l) <= 1e-10;
        if (!seen) lams.push_back(l);
    }

    // decimated node indices (uniform within rounding)
    const int M = std::min(max_grid_nodes, g.steps + 1);
    std::vector<int> idx(M);
    for (int i = 0; i < M; ++i)
        idx[i] = static_cast<int>(std::llround(static_cast<double>(i) * g.steps / (M - 1)));
    std::vector<double> ts(M);
    for (int i = 0; i < M; ++i) ts[i] = g.t(idx[i]);

    // propagators on the full grid, stored at decimated nodes
    auto propagate = [&](auto rhs) {
        std::vector<MatrixXd> out(M);
        MatrixXd U = MatrixXd::Identity(n, n);
        int next = 0;
        for (int k = 0; k <= g.steps; ++k) {
            if (next < M && idx[next] == k) out[next++] = U;
            if (k < g.steps) U = rk4_step(rhs, g.t(k), g.dt(), U);
        }
        return out;
    };
    std::vector<std::vector<MatrixXd>> Ulam;
    for (double lam : lams)
        Ulam.push_back(propagate([&, lam](double t, const MatrixXd& U) -> MatrixXd {
            return (w.Ac(w.q4(t)) + lam * p.D) * U;
        }));
    std::vector<MatrixXd> V = propagate([&](double t, const MatrixXd& U) -> MatrixXd {
        return -w.Ac(w.q4(t)).transpose() * U;
    });

    const int L = static_cast<int>(lams.size());
    std::vector<std::vector<MatrixXd>> left(L, std::vector<MatrixXd>(M));
    std::vector<MatrixXd> right(M);
    for (int j = 0; j < M; ++j) {
        const MatrixXd Vinv = V[j].partialPivLu().inverse();
        right[j] = Vinv * w.Gz(4 * idx[j]);
        for (int l = 0; l < L; ++l)
            left[l][j] = Ulam[l][j].partialPivLu().inverse() * (lams[l] * w.Btil) * V[j];
    }
    const MatrixXd rightT = V[M - 1].partialPivLu().inverse() * w.QTH;

    auto trap_weight = [&](const std::vector<double>& t, int a, int b, int q) {
        // weight of node q for trapezoid integration over [t_a, t_b]
        if (a == b) return 0.0;
        const double lo = (q == a) ? t[a] : t[q - 1];
        const double hi = (q == b) ? t[b] : t[q + 1];
        return 0.5 * (hi - lo);
    };

    double term1 = 0.0, term2 = 0.0;
    std::vector<MatrixXd> Pl(L);
    for (int i = 0; i < M; ++i) {
        double acc1 = 0.0, acc2 = 0.0;
        for (int j = 0; j <= i; ++j) {
            for (int l = 0; l < L; ++l) Pl[l] = Ulam[l][i] * left[l][j];
            double inner = 0.0;
            for (int q = j; q < M; ++q) {
                double blk = 0.0;
                for (int l = 0; l < L; ++l) blk = std::max(blk, spec_norm(Pl[l] * right[q]));
                inner += trap_weight(ts, j, M - 1, q) * blk;
            }
            double blkT = 0.0;
            for (int l = 0; l < L; ++l) blkT = std::max(blkT, spec_norm(Pl[l] * rightT));
            const double wt = trap_weight(ts, 0, i, j);
            acc1 += wt * inner;
            acc2 += wt * blkT;
        }
        term1 = std::max(term1, acc1);
        term2 = std::max(term2, acc2);
    }
    return term1 + term2;
}

// ----------------------------------------------------- evaluation utilities

namespace {

bool has_spectral_payload(const MeanFieldSolution& sol) { return !sol.z_ell.empty(); }

int node_of_theta(double theta, int N) {
    int q = static_cast<int>(std::floor(theta * N));
    return std::min(std::max(q, 0), N - 1);
}

} // namespace

SolutionEvaluator::SolutionEvaluator(const MeanFieldSolution& sol) : sol_(&sol) {
    pi_ = MatrixInterpolant(sol.pi);
    if (has_spectral_payload(sol)) {
        for (const auto& zp : sol.z_ell) z_.emplace_back(zp);
        for (const auto& sp : sol.s_ell) s_.emplace_back(sp);
        breve_ = PchipInterpolant(sol.s_breve);
    } else {
        for (const auto& zp : sol.z_node) z_.emplace_back(zp);
        for (const auto& sp : sol.s_node) s_.emplace_back(sp);
    }
}

Eigen::VectorXd SolutionEvaluator::z_at(double theta, double t) const {
    if (has_spectral_payload(*sol_)) {
        VectorXd out = VectorXd::Zero(sol_->params.n());
        for (size_t l = 0; l < z_.size(); ++l) out += sol_->decomp.funcs[l](theta) * z_[l](t);
        return out;
    }
    return z_node_at(node_of_theta(theta, sol_->N), t);
}

Eigen::VectorXd SolutionEvaluator::s_at(double theta, double t) const {
    if (has_spectral_payload(*sol_)) {
        VectorXd breve = breve_(t);
        VectorXd out = breve;
        for (size_t l = 0; l < s_.size(); ++l)
            out += sol_->decomp.funcs[l](theta) * (s_[l](t) - breve);
        return out;
    }
    return s_node_at(node_of_theta(theta, sol_->N), t);
}

Eigen::VectorXd SolutionEvaluator::z_node_at(int q, double t) const {
    if (has_spectral_payload(*sol_))
        throw std::logic_error("node access requires a finite-mode solution");
    if (q < 0 || q >= sol_->N) throw std::out_of_range("node index");
    return z_[q](t);
}

Eigen::VectorXd SolutionEvaluator::s_node_at(int q, double t) const {
    if (has_spectral_payload(*sol_))
        throw std::logic_error("node access requires a finite-mode solution");
    if (q < 0 || q >= sol_->N) throw std::out_of_range("node index");
    return s_[q](t);
}

Eigen::MatrixXd SolutionEvaluator::pi_at(double t) const { return pi_(t); }

std::pair<Eigen::VectorXd, Eigen::VectorXd> reconstruct(const MeanFieldSolution& sol,
                                                        double theta, double t) {
    SolutionEvaluator ev(sol);
    return {ev.z_at(theta, t), ev.s_at(theta, t)};
}

namespace {

BestResponseLaw make_law(const MeanFieldSolution& sol, const VectorPath& s) {
    BestResponseLaw law;
    law.RinvBT = sol.params.R.partialPivLu().solve(sol.params.B.transpose());
    law.pi = MatrixInterpolant(sol.pi);
    law.s = PchipInterpolant(s);
    return law;
}

} // namespace

BestResponseLaw best_response(const MeanFieldSolution& sol, double theta) {
    if (!has_spectral_payload(sol)) return make_law(sol, sol.s_node[node_of_theta(theta, sol.N)]);
    VectorPath s{sol.grid, std::vector<VectorXd>(sol.grid.nodes())};
    for (int k = 0; k < sol.grid.nodes(); ++k) {
        VectorXd breve = sol.s_breve.v[k];
        VectorXd acc = breve;
        for (int l = 0; l < sol.decomp.size(); ++l)
            acc += sol.decomp.funcs[l](theta) * (sol.s_ell[l].v[k] - breve);
        s.v[k] = acc;
    }
    return make_law(sol, s);
}

BestResponseLaw best_response_node(const MeanFieldSolution& sol, int q) {
    if (has_spectral_payload(sol))
        throw std::logic_error("best_response_node requires a finite-mode solution");
    if (q < 0 || q >= sol.N) throw std::out_of_range("node index");
    return make_law(sol, sol.s_node[q]);
}

} // namespace gmfg
