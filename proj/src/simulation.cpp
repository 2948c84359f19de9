#include "gmfg/simulation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "gmfg/rng.hpp"

namespace gmfg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

NodeLawSet::NodeLawSet(const MeanFieldSolution& sol, int N) {
    if (N < 1) throw std::invalid_argument("NodeLawSet: need N >= 1");
    pi_ = MatrixInterpolant(sol.pi);
    const TimeGrid& g = sol.grid;

    if (!sol.z_ell.empty()) {
        const int d = sol.decomp.size();
        const int n = sol.params.n();
        for (int q = 0; q < N; ++q) {
            const double theta = (q + 0.5) / N;
            VectorXd f(d);
            for (int l = 0; l < d; ++l) f(l) = sol.decomp.funcs[l](theta);
            std::vector<VectorXd> s(g.nodes()), z(g.nodes());
            for (int k = 0; k < g.nodes(); ++k) {
                const VectorXd& breve = sol.s_breve.v[k];
                VectorXd sv = breve;
                VectorXd zv = VectorXd::Zero(n);
                for (int l = 0; l < d; ++l) {
                    zv += f(l) * sol.z_ell[l].v[k];
                    sv += f(l) * (sol.s_ell[l].v[k] - breve);
                }
                s[k] = std::move(sv);
                z[k] = std::move(zv);
            }
            s_.emplace_back(g, s);
            zref_.emplace_back(g, z);
        }
        return;
    }

    if (sol.N != N)
        throw std::invalid_argument("NodeLawSet: node count differs from the finite solution");
    for (int q = 0; q < N; ++q) {
        s_.emplace_back(sol.s_node[q]);
        zref_.emplace_back(sol.z_node[q]);
    }
}

Eigen::MatrixXd empirical_average(const Eigen::MatrixXd& xbar, const Eigen::MatrixXd& W) {
    if (W.rows() != W.cols() || xbar.cols() != W.rows())
        throw std::invalid_argument("empirical_average: shape mismatch");
    return xbar * W.transpose() / static_cast<double>(W.rows());
}

SimulationResult simulate(const GmfgParams& p, const Eigen::MatrixXd& W,
                          const InitialMeans& means, const NodeLawSet& law,
                          const PopulationConfig& cfg) {
    p.validate();
    const int n = p.n();
    const int N = static_cast<int>(W.rows());
    if (W.cols() != N) throw std::invalid_argument("simulate: W must be square");
    if (law.nodes() != N) throw std::invalid_argument("simulate: law covers a different node count");
    if (means.mu.rows() != n || means.mu.cols() != N)
        throw std::invalid_argument("simulate: initial means must be n x N");
    if (cfg.pop_per_node < 1 || !(cfg.dt > 0.0))
        throw std::invalid_argument("simulate: need pop_per_node >= 1 and dt > 0");

    const TimeGrid g = TimeGrid::from_dt(p.T, cfg.dt);
    const double dt = g.dt();
    const double sdt = std::sqrt(dt);
    const MatrixXd RinvBT = p.R.partialPivLu().solve(p.B.transpose());
    const int P = cfg.pop_per_node;

    CounterRng root(cfg.seed);
    CounterRng init = root.substream(1);
    CounterRng noise = root.substream(2);

    MatrixXd X(n, N * P);
    for (int q = 0; q < N; ++q)
        for (int j = 0; j < P; ++j)
            for (int c = 0; c < n; ++c)
                X(c, q * P + j) = means.mu(c, q) + cfg.initial_std * init.next_normal();

    SimulationResult out;
    out.grid = g;
    out.z_emp.assign(N, VectorPath{g, std::vector<VectorXd>(g.nodes())});
    out.xbar.assign(N, VectorPath{g, std::vector<VectorXd>(g.nodes())});

    MatrixXd xbar(n, N), zemp(n, N);
    auto record = [&](int k) {
        for (int q = 0; q < N; ++q) xbar.col(q) = X.middleCols(q * P, P).rowwise().mean();
        zemp = empirical_average(xbar, W);
        for (int q = 0; q < N; ++q) {
            out.xbar[q].v[k] = xbar.col(q);
            out.z_emp[q].v[k] = zemp.col(q);
        }
    };

    VectorXd xi(n);
    for (int k = 0; k < g.steps; ++k) {
        record(k);
        const double t = g.t(k);
        const MatrixXd gain = RinvBT * law.pi_at(t); // u = -(gain x + RinvBT s)
        for (int q = 0; q < N; ++q) {
            const VectorXd us = RinvBT * law.s_at(q, t);
            const VectorXd coupling = p.D * zemp.col(q);
            for (int j = 0; j < P; ++j) {
                auto x = X.col(q * P + j);
                const VectorXd u = -(gain * x + us);
                for (int c = 0; c < n; ++c) xi(c) = noise.next_normal();
                x += dt * (p.A * x + p.B * u + coupling) + sdt * (p.Sigma * xi);
            }
        }
    }
    record(g.steps);
    out.rel_error = relative_error(out, law);
    return out;
}

double relative_error(const std::vector<VectorPath>& z_emp,
                      const std::vector<VectorPath>& z_ref) {
    const size_t N = z_emp.size();
    if (N == 0 || z_ref.size() != N)
        throw std::invalid_argument("relative_error: node count mismatch");
    const int K = z_emp[0].nodes();
    for (const auto& path : z_ref)
        if (path.nodes() != K) throw std::invalid_argument("relative_error: grid mismatch");

    double num = 0.0, den = 0.0;
    for (int k = 0; k < K; ++k) {
        double d2 = 0.0, e2 = 0.0;
        for (size_t q = 0; q < N; ++q) {
            d2 += (z_emp[q].v[k] - z_ref[q].v[k]).squaredNorm();
            e2 += z_emp[q].v[k].squaredNorm();
        }
        num = std::max(num, d2 / N);
        den = std::max(den, e2 / N);
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(num) / std::sqrt(den);
}

double relative_error(const SimulationResult& sim, const NodeLawSet& law) {
    const int N = static_cast<int>(sim.z_emp.size());
    std::vector<VectorPath> ref(N, VectorPath{sim.grid, std::vector<VectorXd>(sim.grid.nodes())});
    for (int q = 0; q < N; ++q)
        for (int k = 0; k < sim.grid.nodes(); ++k) ref[q].v[k] = law.zref_at(q, sim.grid.t(k));
    return relative_error(sim.z_emp, ref);
}

} // namespace gmfg
