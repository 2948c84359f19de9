#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gmfg/graphon.hpp"
#include "gmfg/simulation.hpp"
#include "gmfg/solver.hpp"
#include "test_util.hpp"

using namespace gmfg;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

GmfgParams params_from(const nlohmann::json& j) {
    GmfgParams p;
    p.A = mat_from(j.at("A"));
    p.B = mat_from(j.at("B"));
    p.D = mat_from(j.at("D"));
    p.Q = mat_from(j.at("Q"));
    p.R = mat_from(j.at("R"));
    p.QT = mat_from(j.at("QT"));
    p.H = mat_from(j.at("H"));
    p.Sigma = mat_from(j.at("Sigma"));
    p.eta = vec_from(j.at("eta"));
    p.T = j.at("T").get<double>();
    p.dt = 1e-3;
    return p;
}

GmfgParams mild_params() {
    return params_from(load_test_json("l0_reference.json").at("mild_params"));
}

} // namespace

TEST_CASE("empirical network average") {
    MatrixXd xbar(2, 2);
    xbar << 1.0, 2.0, 3.0, 4.0;
    MatrixXd W(2, 2);
    W << 0.0, 1.0, 1.0, 0.0;
    MatrixXd Z = empirical_average(xbar, W);
    CHECK(Z(0, 0) == 1.0); // (1/2) * x_1
    CHECK(Z(1, 0) == 2.0);
    CHECK(Z(0, 1) == 0.5); // (1/2) * x_0
    CHECK(Z(1, 1) == 1.5);
    CHECK_THROWS(empirical_average(xbar, MatrixXd::Ones(3, 3)));
}

TEST_CASE("relative error uses the weighted sup norm") {
    TimeGrid g(1.0, 2);
    VectorXd a(1), b(1), zero(1);
    a << 1.0;
    b << 0.9;
    zero << 0.0;
    // node 0 carries the signal; node 1 is silent
    std::vector<VectorPath> emp{VectorPath{g, {a, a, a}}, VectorPath{g, {zero, zero, zero}}};
    std::vector<VectorPath> ref{VectorPath{g, {b, b, b}}, VectorPath{g, {zero, zero, zero}}};
    // sup_t sqrt((1/2)(0.1^2)) / sup_t sqrt((1/2)(1^2)) = 0.1
    CHECK(relative_error(emp, ref) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(relative_error(emp, emp) == 0.0);
    CHECK_THROWS(relative_error(emp, std::vector<VectorPath>{ref[0]}));
}

TEST_CASE("cluster mean follows the exact euler recursion when noise is off") {
    GmfgParams p = mild_params();
    p.Sigma = MatrixXd::Zero(2, 2);
    const MatrixXd W = MatrixXd::Ones(1, 1);
    InitialMeans means{(MatrixXd(2, 1) << 0.4, -0.2).finished()};

    MeanFieldSolution sol = solve_finite_riccati(p, W, means);
    NodeLawSet law(sol, 1);
    PopulationConfig cfg;
    cfg.pop_per_node = 16;
    cfg.dt = 1e-3;
    cfg.initial_std = 1.0; // random starts; the mean recursion is still linear
    cfg.seed = 7;
    SimulationResult sim = simulate(p, W, means, law, cfg);

    // xbar_{k+1} = xbar_k + dt [(A - Btil Pi_k + D) xbar_k - Btil s_k], Btil = I
    const double dt = sim.grid.dt();
    VectorXd m = sim.xbar[0].v[0];
    double worst = 0.0;
    for (int k = 0; k < sim.grid.steps; ++k) {
        m += dt * ((p.A - sol.pi.m[k] + p.D) * m - sol.s_node[0].v[k]);
        worst = std::max(worst, (sim.xbar[0].v[k + 1] - m).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-11);
    // with W = [[1]] the network average equals the cluster mean
    for (int k : {0, 400, 1000})
        CHECK((sim.z_emp[0].v[k] - sim.xbar[0].v[k]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("noise-free closed loop tracks the solved mean field") {
    GmfgParams p = mild_params();
    p.Sigma = MatrixXd::Zero(2, 2);
    const auto j = load_test_json("finite_solver_reference.json");
    const MatrixXd W = mat_from(j.at("W"));
    InitialMeans means{mat_from(j.at("mu")).transpose()};

    MeanFieldSolution sol = solve_finite_riccati(p, W, means);
    NodeLawSet law(sol, sol.N);
    PopulationConfig cfg;
    cfg.pop_per_node = 1;
    cfg.initial_std = 0.0;
    cfg.dt = 2.5e-4;
    SimulationResult fine = simulate(p, W, means, law, cfg);
    CHECK(fine.rel_error < 1e-3);
    CHECK(fine.rel_error > 1e-8); // a genuine discretization, not a self-comparison

    // First-order Euler error: halving dt roughly halves the error.
    cfg.dt = 1e-3;
    SimulationResult coarse = simulate(p, W, means, law, cfg);
    cfg.dt = 5e-4;
    SimulationResult half = simulate(p, W, means, law, cfg);
    const double ratio = coarse.rel_error / half.rel_error;
    CAPTURE(coarse.rel_error);
    CAPTURE(half.rel_error);
    CHECK(ratio > 1.5);
    CHECK(ratio < 2.7);
}

TEST_CASE("runs are reproducible by seed") {
    GmfgParams p = mild_params();
    const auto j = load_test_json("finite_solver_reference.json");
    const MatrixXd W = mat_from(j.at("W"));
    InitialMeans means{mat_from(j.at("mu")).transpose()};
    MeanFieldSolution sol = solve_finite_riccati(p, W, means);
    NodeLawSet law(sol, sol.N);

    PopulationConfig cfg;
    cfg.pop_per_node = 3;
    cfg.seed = 2024;
    SimulationResult one = simulate(p, W, means, law, cfg);
    SimulationResult two = simulate(p, W, means, law, cfg);
    CHECK(one.rel_error == two.rel_error);
    for (int k : {0, 250, 1000})
        CHECK((one.xbar[5].v[k] - two.xbar[5].v[k]).cwiseAbs().maxCoeff() == 0.0);

    cfg.seed = 2025;
    SimulationResult three = simulate(p, W, means, law, cfg);
    CHECK((one.xbar[5].v[1000] - three.xbar[5].v[1000]).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("spectral laws are read at cell midpoints") {
    const auto j = load_test_json("spectral_limit_reference.json");
    const GmfgParams p = params_from(j.at("params"));
    SpectralDecomposition decomp = ua_eigenpairs(5);
    InitialMeans means{mat_from(j.at("mu")).transpose()};
    MeanFieldSolution sol = solve_spectral(p, decomp, spectral_coefficients(decomp, means));

    const int N = 4;
    NodeLawSet law(sol, N);
    CHECK(law.nodes() == N);
    const int k = 613;
    const double t = sol.grid.t(k);
    for (int q = 0; q < N; ++q) {
        const double theta = (q + 0.5) / N;
        VectorXd z = VectorXd::Zero(2), s = sol.s_breve.v[k];
        for (int l = 0; l < decomp.size(); ++l) {
            z += decomp.funcs[l](theta) * sol.z_ell[l].v[k];
            s += decomp.funcs[l](theta) * (sol.s_ell[l].v[k] - sol.s_breve.v[k]);
        }
        CHECK((law.zref_at(q, t) - z).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((law.s_at(q, t) - s).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("simulation under a spectral law on a sampled graph") {
    const auto j = load_test_json("spectral_limit_reference.json");
    GmfgParams p = params_from(j.at("params"));
    SpectralDecomposition decomp = ua_eigenpairs(5);
    InitialMeans cells{mat_from(j.at("mu")).transpose()};
    MeanFieldSolution sol = solve_spectral(p, decomp, spectral_coefficients(decomp, cells));

    const int N = 10;
    SampledGraph graph = generate_uniform_attachment(N, 99);
    NodeLawSet law(sol, N);
    // cluster means sampled from the limit profile at cell midpoints
    MatrixXd mu(2, N);
    SolutionEvaluator ev(sol);
    for (int q = 0; q < N; ++q) mu.col(q) = ev.z_at((q + 0.5) / N, 0.0);
    PopulationConfig cfg;
    cfg.pop_per_node = 2;
    cfg.seed = 5;
    SimulationResult sim = simulate(p, graph.W, InitialMeans{mu}, law, cfg);
    CHECK(sim.grid.steps == 1000);
    CHECK(static_cast<int>(sim.z_emp.size()) == N);
    CHECK(std::isfinite(sim.rel_error));
    CHECK(sim.rel_error < 2.0);
    CHECK(sim.rel_error > 0.0);
}

TEST_CASE("law and input validation") {
    GmfgParams p = mild_params();
    const MatrixXd W = MatrixXd::Ones(2, 2);
    InitialMeans means{MatrixXd::Zero(2, 2)};
    MeanFieldSolution sol = solve_finite_riccati(p, W, means);
    CHECK_THROWS(NodeLawSet(sol, 3)); // finite solution pinned to its own N

    NodeLawSet law(sol, 2);
    PopulationConfig cfg;
    CHECK_THROWS(simulate(p, MatrixXd::Ones(3, 3), InitialMeans{MatrixXd::Zero(2, 3)}, law, cfg));
    CHECK_THROWS(simulate(p, W, InitialMeans{MatrixXd::Zero(2, 3)}, law, cfg));
    cfg.pop_per_node = 0;
    CHECK_THROWS(simulate(p, W, means, law, cfg));
    cfg.pop_per_node = 1;
    cfg.dt = -1.0;
    CHECK_THROWS(simulate(p, W, means, law, cfg));
}
