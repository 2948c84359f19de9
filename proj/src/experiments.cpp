#include "gmfg/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <stdexcept>
#include <thread>

#include "gmfg/rng.hpp"

namespace gmfg {

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kProfileCells = 30; // cells of the random initial-mean profile

MatrixXd sbm_block_matrix() {
    MatrixXd W(3, 3);
    W << 0.25, 0.5, 0.2, 0.5, 0.35, 0.7, 0.2, 0.7, 0.4;
    return W;
}

const json& need(const json& j, const char* section, const char* key) {
    if (!j.contains(key))
        throw std::runtime_error(std::string("config: ") + section + "." + key + " is missing");
    return j.at(key);
}

GmfgParams params_from_config(const json& problem) {
    GmfgParams p;
    p.A = matrix_from_json(need(problem, "problem", "A"));
    p.B = matrix_from_json(need(problem, "problem", "B"));
    p.D = matrix_from_json(need(problem, "problem", "D"));
    p.Q = matrix_from_json(need(problem, "problem", "Q"));
    p.R = matrix_from_json(need(problem, "problem", "R"));
    p.QT = matrix_from_json(need(problem, "problem", "QT"));
    p.H = matrix_from_json(need(problem, "problem", "H"));
    p.Sigma = matrix_from_json(need(problem, "problem", "Sigma"));
    p.eta = vector_from_json(need(problem, "problem", "eta"));
    p.T = problem.value("T", 1.0);
    p.dt = problem.value("dt", 1e-3);
    p.validate();
    return p;
}

// Initial-mean profile of the experiment: either the configured values or a
// per-cell uniform draw, fixed by the root seed (independent of run seeds).
MatrixXd family_profile(const ExperimentConfig& cfg) {
    if (!cfg.means_random) {
        if (cfg.mean_values.rows() != cfg.params.n() || cfg.mean_values.cols() < 1)
            throw std::runtime_error("config: means.values must be n x N");
        return cfg.mean_values;
    }
    CounterRng rng = CounterRng(cfg.seed).substream(3);
    MatrixXd prof(cfg.params.n(), kProfileCells);
    for (int q = 0; q < prof.cols(); ++q)
        for (int c = 0; c < prof.rows(); ++c)
            prof(c, q) = rng.next_uniform(cfg.mean_lo, cfg.mean_hi);
    return prof;
}

// Node means read off the profile at cell midpoints theta_q = (q + 1/2)/N.
MatrixXd node_means_from_profile(const MatrixXd& prof, int N) {
    const int K = static_cast<int>(prof.cols());
    MatrixXd mu(prof.rows(), N);
    for (int q = 0; q < N; ++q) {
        const int cell = std::min(static_cast<int>((q + 0.5) / N * K), K - 1);
        mu.col(q) = prof.col(cell);
    }
    return mu;
}

SampledGraph build_graph(const ExperimentConfig& cfg, int N, std::uint64_t seed) {
    using Source = ExperimentConfig::GraphSource;
    switch (cfg.graph_source) {
        case Source::File:
            if (cfg.graph_file.empty()) throw std::runtime_error("config: graph.file is missing");
            return read_graph_csv(cfg.graph_file);
        case Source::GenerateUa:
            if (N < 2) throw std::runtime_error("config: graph.n must be >= 2");
            return generate_uniform_attachment(N, seed);
        case Source::SampleSimple:
        case Source::SampleWeighted: {
            if (N < 1) throw std::runtime_error("config: graph.n must be >= 1");
            if (!cfg.has_graphon)
                throw std::runtime_error("config: graphon section required to sample a graph");
            return cfg.graph_source == Source::SampleSimple
                       ? sample_simple_graph(cfg.graphon, N, seed)
                       : sample_weighted_graph(cfg.graphon, N, seed);
        }
        case Source::None: {
            if (N < 1)
                throw std::runtime_error(
                    "config: graph section (or graph.n) required for this command");
            SampledGraph g; // documented fallback: the all-ones coupling
            g.W = MatrixXd::Ones(N, N);
            g.seed = seed;
            return g;
        }
    }
    throw std::logic_error("unreachable graph source");
}

Graphon step_of_graph(const SampledGraph& g) {
    const double c = std::max(1.0, g.W.cwiseAbs().maxCoeff());
    return step_from_matrix(g.W, c);
}

// Limit decomposition for the configured graphon: closed-form for the
// uniform-attachment kernel, exact for step/spectral kinds, grid fit for
// other analytic kernels.
SpectralDecomposition limit_decomposition(const ExperimentConfig& cfg) {
    if (!cfg.has_graphon) throw std::runtime_error("config: graphon section is missing");
    const Graphon& g = cfg.graphon;
    if (g.kind == GraphonKind::Analytic) {
        if (g.name == "uniform_attachment") return ua_eigenpairs(cfg.rank > 0 ? cfg.rank : 5);
        const int rank = cfg.rank > 0 ? cfg.rank : 8;
        const int grid = std::min(cfg.quadrature, 512);
        return fit_spectral_from_grid(g, grid, rank, FitBasis::Piecewise).spec;
    }
    if (g.kind == GraphonKind::Step) return spectral_of_step(g, cfg.rank);
    return cfg.rank > 0 ? g.spec.truncated(cfg.rank) : g.spec;
}

std::string mode_name(SolveMode m) {
    switch (m) {
        case SolveMode::Finite: return "finite";
        case SolveMode::Spectral: return "spectral";
        case SolveMode::Idempotent: return "idempotent";
    }
    return "?";
}

std::string method_name(SolveMethod m) {
    return m == SolveMethod::FixedPoint ? "fixedpoint" : "riccati";
}

struct SolveArtifacts {
    MeanFieldSolution sol;
    SpectralDecomposition decomp; // spectral modes
    SampledGraph graph;           // finite modes
    bool has_graph = false;
    MatrixXd profile;
};

SolveArtifacts run_solve(const ExperimentConfig& cfg) {
    SolveArtifacts art;
    art.profile = family_profile(cfg);

    if (cfg.mode == SolveMode::Spectral) {
        art.decomp = limit_decomposition(cfg);
        auto prep = prepare_spectral(cfg.params, art.decomp.lambdas);
        const MatrixXd coeffs = spectral_coefficients(art.decomp, InitialMeans{art.profile});
        art.sol = solve_spectral_prepared(*prep, art.decomp, coeffs, cfg.method, cfg.fp);
    } else {
        art.graph = build_graph(cfg, cfg.N, cfg.seed);
        art.has_graph = true;
        const int N = static_cast<int>(art.graph.W.rows());
        InitialMeans means{node_means_from_profile(art.profile, N)};
        if (cfg.mode == SolveMode::Idempotent) {
            art.sol = solve_idempotent(cfg.params, art.graph.W, means);
        } else if (cfg.method == SolveMethod::FixedPoint) {
            art.sol = solve_finite_fixedpoint(cfg.params, art.graph.W, means, cfg.fp);
        } else {
            art.sol = solve_finite_riccati(cfg.params, art.graph.W, means);
        }
        art.decomp = spectral_of_step(step_of_graph(art.graph));
    }
    if (cfg.compute_l0) art.sol.L0 = compute_L0(cfg.params, art.decomp.lambdas);
    return art;
}

json manifest_of(const ExperimentConfig& cfg, const SolveArtifacts& art) {
    const MeanFieldSolution& sol = art.sol;
    json m;
    m["version"] = kVersion;
    m["mode"] = mode_name(sol.mode);
    m["method"] = method_name(sol.method);
    m["rank"] = art.decomp.size();
    m["N"] = sol.N;
    m["eigenvalues"] = art.decomp.lambdas;
    m["residuals"] = {{"fixed_point_gap", sol.residual}, {"gap_history", sol.gap_history}};
    m["L0"] = sol.L0;
    m["converged"] = sol.converged;
    m["iterations"] = sol.iterations;
    m["seed"] = cfg.seed;
    m["dt"] = cfg.params.dt;
    m["T"] = cfg.params.T;
    m["family"] = cfg.family;
    // stacking/terminal conventions, pinned so outputs are comparable across
    // implementations of the same equations
    m["conventions"] = "node-major stacking; terminal offset s(T) = QT*H*(z(T) + eta)";
    return m;
}

void write_solution_dir(const std::string& out_dir, const ExperimentConfig& cfg,
                        const SolveArtifacts& art) {
    fs::create_directories(out_dir);
    const MeanFieldSolution& sol = art.sol;
    write_json_file(out_dir + "/manifest.json", manifest_of(cfg, art));
    write_matrix_path_csv(out_dir + "/pi.csv", sol.pi, "pi");
    if (!sol.z_ell.empty()) {
        write_vector_path_csv(out_dir + "/breve_s.csv", sol.s_breve, "s");
        for (size_t l = 0; l < sol.z_ell.size(); ++l) {
            write_vector_path_csv(out_dir + "/z_ell_" + std::to_string(l) + ".csv", sol.z_ell[l],
                                  "z");
            write_vector_path_csv(out_dir + "/s_ell_" + std::to_string(l) + ".csv", sol.s_ell[l],
                                  "s");
        }
    } else {
        for (int q = 0; q < sol.N; ++q) {
            write_vector_path_csv(out_dir + "/z_node_" + std::to_string(q) + ".csv",
                                  sol.z_node[q], "z");
            write_vector_path_csv(out_dir + "/s_node_" + std::to_string(q) + ".csv",
                                  sol.s_node[q], "s");
        }
    }
    if (art.has_graph) write_graph_csv(out_dir + "/graph.csv", art.graph);
}

} // namespace

// ----------------------------------------------------------------- config

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    if (!j.is_object() || !j.contains("problem"))
        throw std::runtime_error("config: missing 'problem' section");
    ExperimentConfig cfg;
    cfg.raw = j;
    cfg.params = params_from_config(j.at("problem"));

    cfg.family = j.value("family", std::string("custom"));
    if (cfg.family != "ua" && cfg.family != "sbm" && cfg.family != "custom")
        throw std::runtime_error("config: family must be ua, sbm, or custom");

    if (j.contains("graphon")) {
        cfg.graphon = graphon_from_json(j.at("graphon"));
        cfg.has_graphon = true;
    } else if (cfg.family == "ua") {
        cfg.graphon = Graphon::analytic("uniform_attachment");
        cfg.has_graphon = true;
    } else if (cfg.family == "sbm") {
        cfg.graphon = step_from_matrix(sbm_block_matrix());
        cfg.has_graphon = true;
    }

    if (j.contains("graph")) {
        const json& gj = j.at("graph");
        const std::string src = gj.value("source", std::string("none"));
        if (src == "none")
            cfg.graph_source = GraphSource::None;
        else if (src == "file")
            cfg.graph_source = GraphSource::File;
        else if (src == "generate_ua")
            cfg.graph_source = GraphSource::GenerateUa;
        else if (src == "sample_simple")
            cfg.graph_source = GraphSource::SampleSimple;
        else if (src == "sample_weighted")
            cfg.graph_source = GraphSource::SampleWeighted;
        else
            throw std::runtime_error("config: unknown graph.source '" + src + "'");
        cfg.graph_file = gj.value("file", std::string());
        cfg.N = gj.value("n", 0);
    } else if (cfg.family == "ua") {
        cfg.graph_source = GraphSource::GenerateUa;
    } else if (cfg.family == "sbm") {
        cfg.graph_source = GraphSource::SampleSimple;
    }

    if (j.contains("solver")) {
        const json& sj = j.at("solver");
        const std::string route = sj.value("route", std::string("spectral_riccati"));
        if (route == "finite_fp") {
            cfg.mode = SolveMode::Finite;
            cfg.method = SolveMethod::FixedPoint;
        } else if (route == "finite_riccati") {
            cfg.mode = SolveMode::Finite;
            cfg.method = SolveMethod::Riccati;
        } else if (route == "spectral_fp") {
            cfg.mode = SolveMode::Spectral;
            cfg.method = SolveMethod::FixedPoint;
        } else if (route == "spectral_riccati") {
            cfg.mode = SolveMode::Spectral;
            cfg.method = SolveMethod::Riccati;
        } else if (route == "idempotent") {
            cfg.mode = SolveMode::Idempotent;
            cfg.method = SolveMethod::Riccati;
        } else {
            throw std::runtime_error("config: unknown solver.route '" + route + "'");
        }
        cfg.rank = sj.value("rank", -1);
        cfg.fp.tol = sj.value("tol", cfg.fp.tol);
        cfg.fp.max_iter = sj.value("max_iter", cfg.fp.max_iter);
        cfg.fp.damping = sj.value("damping", cfg.fp.damping);
        cfg.fp.fallback_after = sj.value("fallback_after", cfg.fp.fallback_after);
        cfg.compute_l0 = sj.value("compute_l0", true);
    }

    if (j.contains("means")) {
        const json& mj = j.at("means");
        if (mj.contains("values")) {
            cfg.means_random = false;
            cfg.mean_values = matrix_from_json(mj.at("values"));
        } else {
            cfg.means_random = mj.value("random", true);
            cfg.mean_lo = mj.value("lo", cfg.mean_lo);
            cfg.mean_hi = mj.value("hi", cfg.mean_hi);
            if (!(cfg.mean_lo <= cfg.mean_hi))
                throw std::runtime_error("config: means.lo must be <= means.hi");
        }
    }

    if (j.contains("population")) {
        const json& pj = j.at("population");
        cfg.population.pop_per_node = pj.value("pop_per_node", cfg.population.pop_per_node);
        cfg.population.dt = pj.value("dt", cfg.params.dt);
        cfg.population.initial_std = pj.value("initial_std", cfg.population.initial_std);
    } else {
        cfg.population.dt = cfg.params.dt;
    }
    cfg.sim_runs = j.value("sim_runs", cfg.sim_runs);

    if (j.contains("sweep")) {
        const json& wj = j.at("sweep");
        if (wj.contains("sizes")) cfg.sweep_sizes = wj.at("sizes").get<std::vector<int>>();
        cfg.runs_per_size = wj.value("runs_per_size", cfg.runs_per_size);
        if (cfg.sweep_sizes.empty() || cfg.runs_per_size < 1)
            throw std::runtime_error("config: sweep needs sizes and runs_per_size >= 1");
    }

    cfg.quadrature = j.value("quadrature", cfg.quadrature);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = std::max(1, j.value("threads", cfg.threads));
    return cfg;
}

// ----------------------------------------------------------- family context

FamilyContext::FamilyContext(const ExperimentConfig& cfg) : cfg_(cfg) {
    if (cfg_.mode != SolveMode::Spectral)
        throw std::runtime_error("family experiments use a spectral solver route");
    decomp_ = limit_decomposition(cfg_);
    prep_ = prepare_spectral(cfg_.params, decomp_.lambdas);
    profile_ = family_profile(cfg_);
    const MatrixXd coeffs = spectral_coefficients(decomp_, InitialMeans{profile_});
    sol_ = solve_spectral_prepared(*prep_, decomp_, coeffs, cfg_.method, cfg_.fp);
    if (cfg_.compute_l0) L0_ = compute_L0(cfg_.params, decomp_.lambdas);
    sol_.L0 = L0_;
}

ExperimentRun FamilyContext::run_once(int N, std::uint64_t run_seed) const {
    ExperimentRun row;
    row.N = N;
    row.seed = run_seed;

    SampledGraph graph = build_graph(cfg_, N, run_seed);
    const int gn = static_cast<int>(graph.W.rows());
    row.op_distance = op_distance(step_of_graph(graph), cfg_.graphon, Quadrature{cfg_.quadrature});

    NodeLawSet law(sol_, gn);
    InitialMeans means{node_means_from_profile(profile_, gn)};
    PopulationConfig pop = cfg_.population;
    pop.seed = run_seed;
    SimulationResult sim = simulate(cfg_.params, graph.W, means, law, pop);
    row.rel_error = sim.rel_error;
    row.converged = sol_.converged && std::isfinite(sim.rel_error);
    return row;
}

// ------------------------------------------------------------------- sweep

SweepResult size_sweep(const ExperimentConfig& cfg) {
    FamilyContext ctx(cfg);
    SweepResult out;
    out.family = cfg.family;
    out.sizes = cfg.sweep_sizes;
    out.L0 = ctx.L0();
    out.rank = ctx.decomp().size();

    CounterRng seq = CounterRng(cfg.seed).substream(11);
    std::vector<std::pair<int, std::uint64_t>> jobs;
    for (int N : cfg.sweep_sizes)
        for (int r = 0; r < cfg.runs_per_size; ++r) jobs.emplace_back(N, seq.next_u64());
    out.rows.resize(jobs.size());

    const int threads = std::max(1, std::min<int>(cfg.threads, static_cast<int>(jobs.size())));
    if (threads == 1) {
        for (size_t i = 0; i < jobs.size(); ++i)
            out.rows[i] = ctx.run_once(jobs[i].first, jobs[i].second);
    } else {
        std::atomic<size_t> next{0};
        auto worker = [&]() {
            for (size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1))
                out.rows[i] = ctx.run_once(jobs[i].first, jobs[i].second);
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    const int R = cfg.runs_per_size;
    for (size_t s = 0; s < cfg.sweep_sizes.size(); ++s) {
        double rel = 0.0, opd = 0.0;
        for (int r = 0; r < R; ++r) {
            rel += out.rows[s * R + r].rel_error;
            opd += out.rows[s * R + r].op_distance;
        }
        out.mean_rel_error.push_back(rel / R);
        out.mean_op_distance.push_back(opd / R);
    }
    auto strictly_decreasing = [](const std::vector<double>& v) {
        for (size_t i = 1; i < v.size(); ++i)
            if (!(v[i] < v[i - 1])) return false;
        return true;
    };
    out.rel_error_decreasing = strictly_decreasing(out.mean_rel_error);
    out.op_distance_decreasing = strictly_decreasing(out.mean_op_distance);
    return out;
}

// ------------------------------------------------------------ CLI commands

int cmd_solve(const ExperimentConfig& cfg, const std::string& out_dir) {
    SolveArtifacts art = run_solve(cfg);
    write_solution_dir(out_dir, cfg, art);
    std::cout << "solution written to " << out_dir << " (converged="
              << (art.sol.converged ? "yes" : "no") << ", rank=" << art.decomp.size() << ")\n";
    return art.sol.converged ? 0 : 2;
}

int cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir) {
    SolveArtifacts art = run_solve(cfg);
    if (!art.has_graph) {
        art.graph = build_graph(cfg, cfg.N, cfg.seed);
        art.has_graph = true;
    }
    const int N = static_cast<int>(art.graph.W.rows());
    NodeLawSet law(art.sol, N);
    InitialMeans means{node_means_from_profile(art.profile, N)};
    PopulationConfig pop = cfg.population;
    pop.seed = cfg.seed;
    SimulationResult sim = simulate(cfg.params, art.graph.W, means, law, pop);

    write_solution_dir(out_dir, cfg, art);
    json summary;
    summary["version"] = kVersion;
    summary["N"] = N;
    summary["seed"] = cfg.seed;
    summary["pop_per_node"] = pop.pop_per_node;
    summary["dt"] = cfg.params.dt;
    summary["sim_dt"] = pop.dt;
    summary["rank"] = art.decomp.size();
    summary["rel_error"] = sim.rel_error;
    if (cfg.has_graphon)
        summary["op_distance"] =
            op_distance(step_of_graph(art.graph), cfg.graphon, Quadrature{cfg.quadrature});
    summary["L0"] = art.sol.L0;
    summary["converged"] = art.sol.converged;
    write_json_file(out_dir + "/summary.json", summary);
    for (int q = 0; q < N; ++q)
        write_vector_path_csv(out_dir + "/z_emp_" + std::to_string(q) + ".csv", sim.z_emp[q], "z");
    std::cout << "simulation written to " << out_dir << " (rel_error=" << sim.rel_error << ")\n";
    return art.sol.converged ? 0 : 2;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir) {
    SweepResult res = size_sweep(cfg);
    fs::create_directories(out_dir);

    std::ofstream csv(out_dir + "/sweep.csv");
    if (!csv) throw std::runtime_error("cannot write " + out_dir + "/sweep.csv");
    csv << std::setprecision(17) << "family,N,seed,rel_error,op_distance,converged,L0\n";
    bool all_ok = true;
    for (const auto& row : res.rows) {
        csv << res.family << "," << row.N << "," << row.seed << "," << row.rel_error << ","
            << row.op_distance << "," << (row.converged ? 1 : 0) << "," << res.L0 << "\n";
        all_ok = all_ok && row.converged;
    }
    csv.close();

    json trend;
    trend["version"] = kVersion;
    trend["family"] = res.family;
    trend["seed"] = cfg.seed;
    trend["sizes"] = res.sizes;
    trend["runs_per_size"] = cfg.runs_per_size;
    trend["mean_rel_error"] = res.mean_rel_error;
    trend["mean_op_distance"] = res.mean_op_distance;
    trend["rel_error_decreasing"] = res.rel_error_decreasing;
    trend["op_distance_decreasing"] = res.op_distance_decreasing;
    trend["L0"] = res.L0;
    trend["dt"] = cfg.params.dt;
    trend["rank"] = res.rank;
    write_json_file(out_dir + "/trend.json", trend);

    std::cout << "sweep written to " << out_dir << " (rel_error means:";
    for (double m : res.mean_rel_error) std::cout << " " << m;
    std::cout << ")\n";
    return all_ok ? 0 : 2;
}

int cmd_spectrum(const ExperimentConfig& cfg, const std::string& out_dir) {
    SpectralDecomposition decomp = limit_decomposition(cfg);
    const Quadrature q{cfg.quadrature};

    std::vector<double> residuals;
    double sumsq = 0.0;
    for (int l = 0; l < decomp.size(); ++l) {
        VectorXd f(q.n);
        for (int i = 0; i < q.n; ++i) f(i) = decomp.funcs[l](q.node(i));
        const VectorXd r = apply_graphon(cfg.graphon, f, q) - decomp.lambdas[l] * f;
        residuals.push_back(std::sqrt(r.squaredNorm() * q.weight()));
        sumsq += decomp.lambdas[l] * decomp.lambdas[l];
    }
    const double l2 = l2_norm(cfg.graphon, q);
    const double l2sq = l2 * l2;

    json report;
    report["version"] = kVersion;
    report["seed"] = cfg.seed;
    report["rank"] = decomp.size();
    report["eigenvalues"] = decomp.lambdas;
    report["residuals"] = residuals;
    report["sum_lambda_sq"] = sumsq;
    report["l2_norm_sq"] = l2sq;
    report["gap"] = l2sq - sumsq;
    report["operator_norm"] = operator_norm(cfg.graphon, q);
    report["grid"] = q.n;

    fs::create_directories(out_dir);
    write_json_file(out_dir + "/spectrum.json", report);
    std::cout << "eigenvalues:";
    for (double l : decomp.lambdas) std::cout << " " << l;
    std::cout << "\nresiduals:";
    for (double r : residuals) std::cout << " " << r;
    std::cout << "\nsum_lambda_sq=" << sumsq << " l2_norm_sq=" << l2sq << " gap=" << l2sq - sumsq
              << "\n";
    return 0;
}

int cmd_sample_graph(const ExperimentConfig& cfg, const std::string& out_dir) {
    ExperimentConfig local = cfg;
    if (local.graph_source == ExperimentConfig::GraphSource::None) {
        local.graph_source = local.has_graphon ? ExperimentConfig::GraphSource::SampleSimple
                                               : ExperimentConfig::GraphSource::GenerateUa;
    }
    SampledGraph g = build_graph(local, local.N, local.seed);
    fs::create_directories(out_dir);
    write_graph_csv(out_dir + "/graph.csv", g);
    const int N = static_cast<int>(g.W.rows());
    int edges = 0;
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j)
            if (g.W(i, j) != 0.0) ++edges;
    std::cout << "graph written to " << out_dir << "/graph.csv (n=" << N << ", edges=" << edges
              << ", density=" << (N > 1 ? 2.0 * edges / (N * (N - 1.0)) : 0.0) << ")\n";
    return 0;
}

int cmd_fit(const ExperimentConfig& cfg, const std::string& out_dir) {
    if (!cfg.has_graphon) throw std::runtime_error("config: graphon section is missing");
    const json fj = cfg.raw.value("fit", json::object());
    const int grid = fj.value("grid", 300);
    const int rank = fj.value("rank", 5);
    const int M = fj.value("M", 16);
    const std::string basis_name = fj.value("basis", std::string("cos"));
    FitBasis basis;
    if (basis_name == "cos")
        basis = FitBasis::Cos;
    else if (basis_name == "piecewise")
        basis = FitBasis::Piecewise;
    else
        throw std::runtime_error("config: fit.basis must be cos or piecewise");

    Graphon fitted = fit_spectral_from_grid(cfg.graphon, grid, rank, basis, M);
    fs::create_directories(out_dir);
    write_json_file(out_dir + "/fitted_graphon.json", graphon_to_json(fitted));
    json report;
    report["version"] = kVersion;
    report["seed"] = cfg.seed;
    report["grid"] = grid;
    report["rank"] = fitted.spec.size();
    report["basis"] = basis_name;
    report["eigenvalues"] = fitted.spec.lambdas;
    write_json_file(out_dir + "/fit_report.json", report);
    std::cout << "fitted eigenvalues:";
    for (double l : fitted.spec.lambdas) std::cout << " " << l;
    std::cout << "\n";
    return 0;
}

} // namespace gmfg
