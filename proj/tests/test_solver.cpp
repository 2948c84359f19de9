#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gmfg/graphon.hpp"
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

// Node paths at grid index k, stacked as an n x N matrix.
MatrixXd node_state(const std::vector<VectorPath>& paths, int k) {
    MatrixXd out(paths.at(0).v.at(k).size(), paths.size());
    for (size_t q = 0; q < paths.size(); ++q) out.col(q) = paths[q].v[k];
    return out;
}

double max_abs(const MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

} // namespace

TEST_CASE("parameter validation") {
    GmfgParams p = GmfgParams::reference();
    CHECK(p.n() == 2);
    CHECK(p.m() == 2);
    CHECK_NOTHROW(p.validate());

    GmfgParams bad = p;
    bad.Q(0, 1) = 0.3; // asymmetric
    CHECK_THROWS(bad.validate());
    bad = p;
    bad.R = MatrixXd::Zero(2, 2);
    CHECK_THROWS(bad.validate());
    bad = p;
    bad.eta = VectorXd::Zero(3);
    CHECK_THROWS(bad.validate());
    bad = p;
    bad.dt = 2.0; // dt > T
    CHECK_THROWS(bad.validate());
    bad = p;
    bad.D = MatrixXd::Identity(3, 3);
    CHECK_THROWS(bad.validate());
}

TEST_CASE("riccati pass reproduces the reference trajectory") {
    const auto j = load_test_json("riccati_reference.json");
    const GmfgParams p = params_from(j.at("params"));
    MatrixPath pi = solve_pi(p);
    CHECK(pi.grid.steps == 1000);
    CHECK(max_abs(pi.m[0] - mat_from(j.at("pi_t0"))) < 1e-9);
    CHECK(max_abs(pi.m[500] - mat_from(j.at("pi_half"))) < 1e-9);
    CHECK(max_abs(pi.m[1000] - p.QT) == 0.0);
    for (int k : {0, 123, 500, 1000})
        CHECK(max_abs(pi.m[k] - pi.m[k].transpose()) == 0.0); // exactly symmetrized
}

TEST_CASE("finite riccati solve matches the boundary-value oracle") {
    const auto j = load_test_json("finite_solver_reference.json");
    const GmfgParams p = params_from(j.at("params"));
    const MatrixXd W = mat_from(j.at("W"));
    InitialMeans means{mat_from(j.at("mu")).transpose()};
    const int n = p.n(), N = static_cast<int>(W.rows());

    MeanFieldSolution sol = solve_finite_riccati(p, W, means);
    CHECK(sol.mode == SolveMode::Finite);
    CHECK(sol.method == SolveMethod::Riccati);
    CHECK(sol.converged);
    CHECK(sol.N == N);

    for (const auto& st : j.at("states")) {
        const int k = sol.grid.index_of(st.at("t").get<double>());
        const MatrixXd zref = Eigen::Map<const MatrixXd>(vec_from(st.at("z")).data(), n, N);
        const MatrixXd sref = Eigen::Map<const MatrixXd>(vec_from(st.at("s")).data(), n, N);
        CAPTURE(k);
        CHECK(max_abs(node_state(sol.z_node, k) - zref) < 1e-7);
        CHECK(max_abs(node_state(sol.s_node, k) - sref) < 1e-7);
    }
}

TEST_CASE("finite fixed point converges to the same trajectories") {
    const auto j = load_test_json("finite_solver_reference.json");
    const GmfgParams p = params_from(j.at("params"));
    const MatrixXd W = mat_from(j.at("W"));
    InitialMeans means{mat_from(j.at("mu")).transpose()};
    const int n = p.n(), N = static_cast<int>(W.rows());

    MeanFieldSolution sol = solve_finite_fixedpoint(p, W, means);
    CHECK(sol.converged);
    CHECK(sol.iterations >= 2);
    REQUIRE(!sol.gap_history.empty());
    CHECK(sol.gap_history.back() < 1e-8);
    CHECK(sol.residual == sol.gap_history.back());

    for (const auto& st : j.at("states")) {
        const int k = sol.grid.index_of(st.at("t").get<double>());
        const MatrixXd zref = Eigen::Map<const MatrixXd>(vec_from(st.at("z")).data(), n, N);
        const MatrixXd sref = Eigen::Map<const MatrixXd>(vec_from(st.at("s")).data(), n, N);
        CAPTURE(k);
        CHECK(max_abs(node_state(sol.z_node, k) - zref) < 1e-4);
        CHECK(max_abs(node_state(sol.s_node, k) - sref) < 1e-4);
    }

    // Route agreement on the whole grid, not just sampled states.
    MeanFieldSolution ric = solve_finite_riccati(p, W, means);
    double worst = 0.0;
    for (int k = 0; k <= sol.grid.steps; k += 20) {
        worst = std::max(worst, max_abs(node_state(sol.z_node, k) - node_state(ric.z_node, k)));
        worst = std::max(worst, max_abs(node_state(sol.s_node, k) - node_state(ric.s_node, k)));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("idempotent route matches the all-ones oracle and the general solver") {
    const auto j = load_test_json("finite_solver_reference.json");
    const auto ji = j.at("idempotent");
    GmfgParams p = params_from(j.at("params"));
    p.eta = VectorXd::Zero(2);
    const int N = ji.at("N").get<int>();
    const MatrixXd W = MatrixXd::Ones(N, N);
    InitialMeans means{mat_from(ji.at("mu")).transpose()};

    MeanFieldSolution sol = solve_idempotent(p, W, means);
    CHECK(sol.mode == SolveMode::Idempotent);
    CHECK(sol.converged);
    for (const auto& st : ji.at("states")) {
        const int k = sol.grid.index_of(st.at("t").get<double>());
        const MatrixXd zref = Eigen::Map<const MatrixXd>(vec_from(st.at("z")).data(), 2, N);
        const MatrixXd sref = Eigen::Map<const MatrixXd>(vec_from(st.at("s")).data(), 2, N);
        CAPTURE(k);
        CHECK(max_abs(node_state(sol.z_node, k) - zref) < 1e-7);
        CHECK(max_abs(node_state(sol.s_node, k) - sref) < 1e-7);
    }

    // Same instance through the general finite Riccati machinery.
    MeanFieldSolution gen = solve_finite_riccati(p, W, means);
    double worst = 0.0;
    for (int k = 0; k <= sol.grid.steps; k += 50) {
        worst = std::max(worst, max_abs(node_state(sol.z_node, k) - node_state(gen.z_node, k)));
        worst = std::max(worst, max_abs(node_state(sol.s_node, k) - node_state(gen.s_node, k)));
    }
    CHECK(worst < 1e-8);

    // Guards: non-idempotent coupling, nonzero eta.
    CHECK_THROWS(solve_idempotent(p, mat_from(j.at("W")), means));
    GmfgParams bad = p;
    bad.eta = (VectorXd(2) << 1.0, 0.0).finished();
    CHECK_THROWS(solve_idempotent(bad, W, means));
}

TEST_CASE("spectral directions match the projected oracle") {
    const auto j = load_test_json("spectral_limit_reference.json");
    const GmfgParams p = params_from(j.at("params"));
    const int d = static_cast<int>(j.at("ks").size());
    SpectralDecomposition decomp = ua_eigenpairs(d);

    for (int l = 0; l < d; ++l) {
        CHECK(decomp.lambdas[l] ==
              doctest::Approx(j.at("lambdas").at(l).get<double>()).epsilon(1e-12));
        CHECK(decomp.funcs[l].mean() ==
              doctest::Approx(j.at("cmeans").at(l).get<double>()).epsilon(1e-12));
    }

    InitialMeans means{mat_from(j.at("mu")).transpose()};
    const MatrixXd coeffs = spectral_coefficients(decomp, means);
    CHECK(max_abs(coeffs - mat_from(j.at("coeffs")).transpose()) < 1e-12);

    MeanFieldSolution sol = solve_spectral(p, decomp, coeffs, SolveMethod::Riccati);
    CHECK(sol.mode == SolveMode::Spectral);
    CHECK(sol.converged);
    REQUIRE(static_cast<int>(sol.z_ell.size()) == d);

    for (int l = 0; l < d; ++l) {
        const auto& dir = j.at("directions").at(l);
        CHECK(VectorXd(coeffs.col(l) - vec_from(dir.at("a"))).cwiseAbs().maxCoeff() < 1e-12);
        for (const auto& st : dir.at("states")) {
            const int k = sol.grid.index_of(st.at("t").get<double>());
            CAPTURE(l);
            CAPTURE(k);
            CHECK((sol.z_ell[l].v[k] - vec_from(st.at("z"))).cwiseAbs().maxCoeff() < 1e-7);
            CHECK((sol.s_ell[l].v[k] - vec_from(st.at("s"))).cwiseAbs().maxCoeff() < 1e-7);
        }
    }
    for (const auto& st : j.at("s_breve")) {
        const int k = sol.grid.index_of(st.at("t").get<double>());
        CHECK((sol.s_breve.v[k] - vec_from(st.at("s"))).cwiseAbs().maxCoeff() < 1e-7);
    }
}

TEST_CASE("spectral fixed point agrees with the direction-wise riccati route") {
    const auto j = load_test_json("spectral_limit_reference.json");
    const GmfgParams p = params_from(j.at("params"));
    SpectralDecomposition decomp = ua_eigenpairs(5);
    InitialMeans means{mat_from(j.at("mu")).transpose()};
    const MatrixXd coeffs = spectral_coefficients(decomp, means);

    MeanFieldSolution ric = solve_spectral(p, decomp, coeffs, SolveMethod::Riccati);
    MeanFieldSolution fp = solve_spectral(p, decomp, coeffs, SolveMethod::FixedPoint);
    CHECK(fp.converged);
    CHECK(fp.residual < 1e-8);
    double worst = 0.0;
    for (int l = 0; l < decomp.size(); ++l)
        for (int k = 0; k <= fp.grid.steps; k += 20) {
            worst = std::max(worst, (fp.z_ell[l].v[k] - ric.z_ell[l].v[k]).cwiseAbs().maxCoeff());
            worst = std::max(worst, (fp.s_ell[l].v[k] - ric.s_ell[l].v[k]).cwiseAbs().maxCoeff());
        }
    CHECK(worst < 1e-4);
}

TEST_CASE("prepared spectral machinery is reusable across coefficient sets") {
    const auto j = load_test_json("spectral_limit_reference.json");
    const GmfgParams p = params_from(j.at("params"));
    SpectralDecomposition decomp = ua_eigenpairs(5);
    InitialMeans means{mat_from(j.at("mu")).transpose()};
    const MatrixXd coeffs = spectral_coefficients(decomp, means);

    auto prep = prepare_spectral(p, decomp.lambdas);
    MeanFieldSolution a = solve_spectral_prepared(*prep, decomp, coeffs);
    MeanFieldSolution b = solve_spectral(p, decomp, coeffs);
    for (int l = 0; l < decomp.size(); ++l)
        for (int k = 0; k <= a.grid.steps; k += 100) {
            CHECK((a.z_ell[l].v[k] - b.z_ell[l].v[k]).cwiseAbs().maxCoeff() == 0.0);
            CHECK((a.s_ell[l].v[k] - b.s_ell[l].v[k]).cwiseAbs().maxCoeff() == 0.0);
        }

    // Second solve with scaled coefficients reuses the same backward pass.
    MeanFieldSolution c = solve_spectral_prepared(*prep, decomp, 2.0 * coeffs);
    CHECK(c.converged);
    CHECK((c.z_ell[0].v[0] - 2.0 * a.z_ell[0].v[0]).cwiseAbs().maxCoeff() < 1e-14);

    // Mismatched eigenvalue set is rejected.
    SpectralDecomposition other = ua_eigenpairs(4);
    CHECK_THROWS(solve_spectral_prepared(*prep, other, coeffs.leftCols(4)));
}

TEST_CASE("spectral and finite solutions coincide for a full-rank step coupling") {
    const auto j = load_test_json("finite_solver_reference.json");
    const GmfgParams p = params_from(j.at("params")); // eta = (2,2): stresses the offset terms
    const MatrixXd W = mat_from(j.at("W"));
    const int N = static_cast<int>(W.rows());
    InitialMeans means{mat_from(j.at("mu")).transpose()};

    Graphon g = step_from_matrix(W);
    SpectralDecomposition decomp = spectral_of_step(g);
    REQUIRE(decomp.size() == N); // full rank: no dropped directions
    const MatrixXd coeffs = spectral_coefficients(decomp, means);

    MeanFieldSolution spec = solve_spectral(p, decomp, coeffs, SolveMethod::Riccati);
    MeanFieldSolution fin = solve_finite_riccati(p, W, means);

    // Eigenfunction values at cell midpoints, and the completeness identity
    // sum_l f_l(theta_q) <f_l, 1> = 1 that makes the offset stitching exact.
    MatrixXd F(N, decomp.size());
    VectorXd cm(decomp.size());
    for (int l = 0; l < decomp.size(); ++l) {
        cm(l) = decomp.funcs[l].mean();
        for (int q = 0; q < N; ++q) F(q, l) = decomp.funcs[l]((q + 0.5) / N);
    }
    CHECK(((F * cm).array() - 1.0).abs().maxCoeff() < 1e-10);

    double worst = 0.0;
    for (int k = 0; k <= spec.grid.steps; k += 25) {
        for (int q = 0; q < N; ++q) {
            VectorXd z = VectorXd::Zero(2);
            VectorXd s = spec.s_breve.v[k];
            for (int l = 0; l < decomp.size(); ++l) {
                z += F(q, l) * spec.z_ell[l].v[k];
                s += F(q, l) * (spec.s_ell[l].v[k] - spec.s_breve.v[k]);
            }
            worst = std::max(worst, (z - fin.z_node[q].v[k]).cwiseAbs().maxCoeff());
            worst = std::max(worst, (s - fin.s_node[q].v[k]).cwiseAbs().maxCoeff());
        }
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("forward evolution map reproduces the equilibrium aggregate") {
    const auto j = load_test_json("finite_solver_reference.json");
    const GmfgParams p = params_from(j.at("params"));
    const MatrixXd W = mat_from(j.at("W"));
    InitialMeans means{mat_from(j.at("mu")).transpose()};

    MeanFieldSolution sol = solve_finite_riccati(p, W, means);
    std::vector<VectorPath> z = ltv_graphon_evolve(p, W, means, sol.s_node);
    double worst = 0.0;
    for (int q = 0; q < sol.N; ++q)
        for (int k = 0; k <= sol.grid.steps; k += 25)
            worst = std::max(worst, (z[q].v[k] - sol.z_node[q].v[k]).cwiseAbs().maxCoeff());
    CHECK(worst < 1e-3); // forward map interpolates s between nodes

    std::vector<VectorPath> trunc(sol.s_node.begin(), sol.s_node.end() - 1);
    CHECK_THROWS(ltv_graphon_evolve(p, W, means, trunc));
}

TEST_CASE("contraction diagnostic matches the reference values") {
    const auto j = load_test_json("l0_reference.json");
    const GmfgParams ref = GmfgParams::reference();
    const GmfgParams mild = params_from(j.at("mild_params"));

    const std::vector<double> ua5 = ua_eigenpairs(5).lambdas;
    MatrixXd sbm(3, 3);
    sbm << 0.25, 0.5, 0.2, 0.5, 0.35, 0.7, 0.2, 0.7, 0.4;
    const std::vector<double> sbm_lams = spectral_of_step(step_from_matrix(sbm)).lambdas;
    const std::vector<double> allones{1.0};

    CHECK(compute_L0(ref, ua5) ==
          doctest::Approx(j.at("reference_ua5").get<double>()).epsilon(1e-6));
    CHECK(compute_L0(ref, sbm_lams) ==
          doctest::Approx(j.at("reference_sbm").get<double>()).epsilon(1e-6));
    CHECK(compute_L0(mild, allones) ==
          doctest::Approx(j.at("mild_allones").get<double>()).epsilon(1e-6));
    CHECK(compute_L0(mild, ua5) ==
          doctest::Approx(j.at("mild_ua5").get<double>()).epsilon(1e-6));
    CHECK(compute_L0(mild, sbm_lams) ==
          doctest::Approx(j.at("mild_sbm").get<double>()).epsilon(1e-6));

    // Degenerate inputs.
    CHECK(compute_L0(ref, {}) == 0.0);
    const double single = compute_L0(ref, {ua5[0]});
    CHECK(compute_L0(ref, {ua5[0], ua5[0]}) == single);
}

TEST_CASE("fixed point flags divergence instead of looping") {
    GmfgParams p = GmfgParams::reference();
    p.A = 30.0 * MatrixXd::Identity(2, 2);
    p.D = 100.0 * MatrixXd::Identity(2, 2);
    const MatrixXd W = MatrixXd::Ones(2, 2);
    InitialMeans means{MatrixXd::Ones(2, 2)};
    MeanFieldSolution sol = solve_finite_fixedpoint(p, W, means);
    CHECK_FALSE(sol.converged);
}

TEST_CASE("evaluator and best-response laws expose the solution") {
    const auto jf = load_test_json("finite_solver_reference.json");
    const GmfgParams p = params_from(jf.at("params"));
    const MatrixXd W = mat_from(jf.at("W"));
    InitialMeans means{mat_from(jf.at("mu")).transpose()};
    MeanFieldSolution fin = solve_finite_riccati(p, W, means);

    SolutionEvaluator ev(fin);
    const double t = fin.grid.t(317);
    CHECK((ev.pi_at(t) - fin.pi.m[317]).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((ev.z_node_at(3, t) - fin.z_node[3].v[317]).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((ev.s_node_at(3, t) - fin.s_node[3].v[317]).cwiseAbs().maxCoeff() < 1e-14);
    // theta-based access maps onto the node partition
    CHECK((ev.z_at(3.5 / 8.0, t) - ev.z_node_at(3, t)).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS(ev.z_node_at(99, t));

    VectorXd x(2);
    x << 0.3, -1.1;
    BestResponseLaw law = best_response_node(fin, 3);
    VectorXd expect = -(p.R.partialPivLu().solve(p.B.transpose())) *
                      (fin.pi.m[317] * x + fin.s_node[3].v[317]);
    CHECK((law.control(t, x) - expect).cwiseAbs().maxCoeff() < 1e-13);
    CHECK_THROWS(best_response_node(fin, -1));

    // Spectral evaluator against a manual reconstruction.
    const auto js = load_test_json("spectral_limit_reference.json");
    SpectralDecomposition decomp = ua_eigenpairs(5);
    InitialMeans sm{mat_from(js.at("mu")).transpose()};
    MeanFieldSolution spec =
        solve_spectral(params_from(js.at("params")), decomp, spectral_coefficients(decomp, sm));
    SolutionEvaluator evs(spec);
    const double theta = 0.37;
    VectorXd z = VectorXd::Zero(2), s = spec.s_breve.v[317];
    for (int l = 0; l < decomp.size(); ++l) {
        z += decomp.funcs[l](theta) * spec.z_ell[l].v[317];
        s += decomp.funcs[l](theta) * (spec.s_ell[l].v[317] - spec.s_breve.v[317]);
    }
    CHECK((evs.z_at(theta, t) - z).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((evs.s_at(theta, t) - s).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS(evs.z_node_at(0, t));
    CHECK_THROWS(best_response_node(spec, 0));

    auto pair = reconstruct(spec, theta, t);
    CHECK((pair.first - z).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((pair.second - s).cwiseAbs().maxCoeff() < 1e-12);

    BestResponseLaw slaw = best_response(spec, theta);
    VectorXd sexpect = -(p.R.partialPivLu().solve(p.B.transpose())) * (spec.pi.m[317] * x + s);
    CHECK((slaw.control(t, x) - sexpect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("input shape errors are rejected") {
    const GmfgParams p = GmfgParams::reference();
    const MatrixXd W = MatrixXd::Ones(4, 4);
    InitialMeans good{MatrixXd::Zero(2, 4)};
    CHECK_THROWS(solve_finite_riccati(p, MatrixXd::Ones(4, 3), good));
    MatrixXd asym = W;
    asym(0, 1) = 0.9;
    CHECK_THROWS(solve_finite_riccati(p, asym, good));
    CHECK_THROWS(solve_finite_riccati(p, W, InitialMeans{MatrixXd::Zero(2, 5)}));
    CHECK_THROWS(solve_finite_riccati(p, W, InitialMeans{MatrixXd::Zero(3, 4)}));

    SpectralDecomposition decomp = ua_eigenpairs(3);
    CHECK_THROWS(solve_spectral(p, decomp, MatrixXd::Zero(2, 2))); // wrong direction count
}
