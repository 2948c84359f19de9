// Python bindings for the gmfg core library. Exposes parameters, graphon
// utilities, the limit/finite solvers, and the population simulator with
// numpy-friendly signatures.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <string>

#include "gmfg/experiments.hpp"

namespace py = pybind11;
using namespace gmfg;

namespace {

Eigen::VectorXd grid_times(const TimeGrid& g) {
    Eigen::VectorXd t(g.nodes());
    for (int k = 0; k < g.nodes(); ++k) t(k) = g.t(k);
    return t;
}

// Path as a (nodes x dim) array, row k = value at time grid.t(k).
Eigen::MatrixXd stack_path(const VectorPath& p) {
    if (p.v.empty()) return Eigen::MatrixXd();
    Eigen::MatrixXd out(p.nodes(), p.v[0].size());
    for (int k = 0; k < p.nodes(); ++k) out.row(k) = p.v[k].transpose();
    return out;
}

std::string mode_str(SolveMode m) {
    switch (m) {
        case SolveMode::Finite: return "finite";
        case SolveMode::Spectral: return "spectral";
        case SolveMode::Idempotent: return "idempotent";
    }
    return "?";
}

SolveMethod method_from(const std::string& s) {
    if (s == "riccati") return SolveMethod::Riccati;
    if (s == "fixedpoint" || s == "fp") return SolveMethod::FixedPoint;
    throw std::invalid_argument("method must be 'riccati' or 'fixedpoint'");
}

FitBasis basis_from(const std::string& s) {
    if (s == "cos") return FitBasis::Cos;
    if (s == "piecewise") return FitBasis::Piecewise;
    throw std::invalid_argument("basis must be 'cos' or 'piecewise'");
}

FixedPointOptions fp_options(double tol, int max_iter) {
    FixedPointOptions o;
    o.tol = tol;
    o.max_iter = max_iter;
    return o;
}

} // namespace

PYBIND11_MODULE(_gmfg, m) {
    m.doc() = "solvers and population simulation for LQG games coupled through graph limits";
    m.attr("__version__") = "0.1.0";

    py::class_<GmfgParams>(m, "Params")
        .def(py::init<>())
        .def_static("reference", &GmfgParams::reference)
        .def_readwrite("A", &GmfgParams::A)
        .def_readwrite("B", &GmfgParams::B)
        .def_readwrite("D", &GmfgParams::D)
        .def_readwrite("Q", &GmfgParams::Q)
        .def_readwrite("R", &GmfgParams::R)
        .def_readwrite("QT", &GmfgParams::QT)
        .def_readwrite("H", &GmfgParams::H)
        .def_readwrite("Sigma", &GmfgParams::Sigma)
        .def_readwrite("eta", &GmfgParams::eta)
        .def_readwrite("T", &GmfgParams::T)
        .def_readwrite("dt", &GmfgParams::dt)
        .def_property_readonly("n", &GmfgParams::n)
        .def("validate", &GmfgParams::validate);

    py::class_<SpectralDecomposition>(m, "SpectralDecomposition")
        .def_readonly("lambdas", &SpectralDecomposition::lambdas)
        .def("__len__", &SpectralDecomposition::size)
        .def("truncated", &SpectralDecomposition::truncated, py::arg("k"))
        .def(
            "evaluate",
            [](const SpectralDecomposition& d, int l, double x) {
                if (l < 0 || l >= d.size()) throw std::out_of_range("direction index");
                return d.funcs[static_cast<size_t>(l)](x);
            },
            py::arg("l"), py::arg("x"), "value of eigenfunction l at x");

    py::class_<Graphon>(m, "Graphon")
        .def_static("analytic", &Graphon::analytic, py::arg("name"),
                    "'uniform_attachment', 'min', or 'product'")
        .def_static("constant", &Graphon::constant, py::arg("value"))
        .def_static("step", &step_from_matrix, py::arg("W"), py::arg("c") = 1.0)
        .def("__call__", &Graphon::operator(), py::arg("x"), py::arg("y"))
        .def_readonly("bound", &Graphon::bound)
        .def_readonly("name", &Graphon::name);

    py::class_<SampledGraph>(m, "SampledGraph")
        .def_readonly("W", &SampledGraph::W)
        .def_readonly("latents", &SampledGraph::latents)
        .def_readonly("seed", &SampledGraph::seed);

    py::class_<MeanFieldSolution>(m, "Solution")
        .def_property_readonly("mode", [](const MeanFieldSolution& s) { return mode_str(s.mode); })
        .def_property_readonly("method",
                               [](const MeanFieldSolution& s) {
                                   return s.method == SolveMethod::FixedPoint ? "fixedpoint"
                                                                              : "riccati";
                               })
        .def_readonly("converged", &MeanFieldSolution::converged)
        .def_readonly("iterations", &MeanFieldSolution::iterations)
        .def_readonly("gap_history", &MeanFieldSolution::gap_history)
        .def_readonly("residual", &MeanFieldSolution::residual)
        .def_readonly("L0", &MeanFieldSolution::L0)
        .def_readonly("N", &MeanFieldSolution::N)
        .def_property_readonly("rank",
                               [](const MeanFieldSolution& s) { return s.decomp.size(); })
        .def_property_readonly("eigenvalues",
                               [](const MeanFieldSolution& s) { return s.decomp.lambdas; })
        .def("times", [](const MeanFieldSolution& s) { return grid_times(s.grid); })
        .def(
            "pi", [](const MeanFieldSolution& s, int k) { return s.pi.m.at(k); }, py::arg("k"),
            "Riccati matrix at grid node k")
        .def(
            "z_ell",
            [](const MeanFieldSolution& s, int l) { return stack_path(s.z_ell.at(l)); },
            py::arg("l"))
        .def(
            "s_ell",
            [](const MeanFieldSolution& s, int l) { return stack_path(s.s_ell.at(l)); },
            py::arg("l"))
        .def("s_breve", [](const MeanFieldSolution& s) { return stack_path(s.s_breve); })
        .def(
            "z_node",
            [](const MeanFieldSolution& s, int q) { return stack_path(s.z_node.at(q)); },
            py::arg("q"))
        .def(
            "s_node",
            [](const MeanFieldSolution& s, int q) { return stack_path(s.s_node.at(q)); },
            py::arg("q"));

    py::class_<SolutionEvaluator>(m, "Evaluator")
        .def(py::init<const MeanFieldSolution&>(), py::arg("solution"), py::keep_alive<1, 2>())
        .def("z", &SolutionEvaluator::z_at, py::arg("theta"), py::arg("t"))
        .def("s", &SolutionEvaluator::s_at, py::arg("theta"), py::arg("t"))
        .def("z_node", &SolutionEvaluator::z_node_at, py::arg("q"), py::arg("t"))
        .def("s_node", &SolutionEvaluator::s_node_at, py::arg("q"), py::arg("t"))
        .def("pi", &SolutionEvaluator::pi_at, py::arg("t"));

    py::class_<SimulationResult>(m, "SimulationResult")
        .def_readonly("rel_error", &SimulationResult::rel_error)
        .def("times", [](const SimulationResult& r) { return grid_times(r.grid); })
        .def(
            "z_emp", [](const SimulationResult& r, int q) { return stack_path(r.z_emp.at(q)); },
            py::arg("q"))
        .def(
            "xbar", [](const SimulationResult& r, int q) { return stack_path(r.xbar.at(q)); },
            py::arg("q"));

    // ------------------------------------------------------ graphon helpers
    m.def(
        "apply_graphon",
        [](const Graphon& g, const Eigen::VectorXd& f, int grid) {
            return apply_graphon(g, f, Quadrature{grid});
        },
        py::arg("graphon"), py::arg("f_on_grid"), py::arg("grid") = 1024);
    m.def(
        "operator_norm",
        [](const Graphon& g, int grid) { return operator_norm(g, Quadrature{grid}); },
        py::arg("graphon"), py::arg("grid") = 1024);
    m.def(
        "l2_norm", [](const Graphon& g, int grid) { return l2_norm(g, Quadrature{grid}); },
        py::arg("graphon"), py::arg("grid") = 1024);
    m.def(
        "op_distance",
        [](const Graphon& a, const Graphon& b, int grid) {
            return op_distance(a, b, Quadrature{grid});
        },
        py::arg("g1"), py::arg("g2"), py::arg("grid") = 1024);
    m.def("ua_eigenpairs", &ua_eigenpairs, py::arg("count"));
    m.def("spectral_of_step", &spectral_of_step, py::arg("graphon"), py::arg("max_rank") = -1);
    m.def(
        "fit_spectral_from_grid",
        [](const Graphon& g, int grid, int rank, const std::string& basis, int M) {
            return fit_spectral_from_grid(g, grid, rank, basis_from(basis), M);
        },
        py::arg("graphon"), py::arg("grid"), py::arg("rank"), py::arg("basis") = "cos",
        py::arg("M") = 16);
    m.def(
        "eigenvalues_of",
        [](const Graphon& g) {
            if (g.kind == GraphonKind::Step) return spectral_of_step(g).lambdas;
            return g.spec.lambdas;
        },
        py::arg("graphon"), "eigenvalues of a step or spectral graphon");
    m.def("sample_simple_graph", &sample_simple_graph, py::arg("graphon"), py::arg("N"),
          py::arg("seed"));
    m.def("sample_weighted_graph", &sample_weighted_graph, py::arg("graphon"), py::arg("N"),
          py::arg("seed"));
    m.def("generate_uniform_attachment", &generate_uniform_attachment, py::arg("N"),
          py::arg("seed"));
    m.def(
        "graphon_from_json",
        [](const std::string& text) { return graphon_from_json(json::parse(text)); },
        py::arg("text"));
    m.def(
        "graphon_to_json", [](const Graphon& g) { return graphon_to_json(g).dump(2); },
        py::arg("graphon"));

    // -------------------------------------------------------------- solvers
    m.def(
        "solve_pi", [](const GmfgParams& p) { return solve_pi(p).m; }, py::arg("params"),
        "backward Riccati pass; list of matrices at grid nodes");
    m.def(
        "solve_finite",
        [](const GmfgParams& p, const Eigen::MatrixXd& W, const Eigen::MatrixXd& mu,
           const std::string& method, double tol, int max_iter) {
            if (method_from(method) == SolveMethod::Riccati)
                return solve_finite_riccati(p, W, InitialMeans{mu});
            return solve_finite_fixedpoint(p, W, InitialMeans{mu}, fp_options(tol, max_iter));
        },
        py::arg("params"), py::arg("W"), py::arg("mu"), py::arg("method") = "riccati",
        py::arg("tol") = 1e-8, py::arg("max_iter") = 200);
    m.def(
        "solve_spectral",
        [](const GmfgParams& p, const SpectralDecomposition& d, const Eigen::MatrixXd& mu_cells,
           const std::string& method, double tol, int max_iter) {
            const Eigen::MatrixXd coeffs = spectral_coefficients(d, InitialMeans{mu_cells});
            return solve_spectral(p, d, coeffs, method_from(method), fp_options(tol, max_iter));
        },
        py::arg("params"), py::arg("decomp"), py::arg("mu_cells"), py::arg("method") = "riccati",
        py::arg("tol") = 1e-8, py::arg("max_iter") = 200,
        "mu_cells: n x N initial means on the uniform N-partition");
    m.def(
        "solve_idempotent",
        [](const GmfgParams& p, const Eigen::MatrixXd& W, const Eigen::MatrixXd& mu,
           double idem_tol) { return solve_idempotent(p, W, InitialMeans{mu}, idem_tol); },
        py::arg("params"), py::arg("W"), py::arg("mu"), py::arg("idem_tol") = 1e-8);
    m.def("compute_l0", &compute_L0, py::arg("params"), py::arg("lambdas"),
          py::arg("max_grid_nodes") = 201);

    // ------------------------------------------------------------ simulation
    m.def(
        "simulate",
        [](const GmfgParams& p, const Eigen::MatrixXd& W, const Eigen::MatrixXd& mu,
           const MeanFieldSolution& sol, int pop_per_node, double dt, double initial_std,
           std::uint64_t seed) {
            NodeLawSet law(sol, static_cast<int>(W.rows()));
            PopulationConfig cfg;
            cfg.pop_per_node = pop_per_node;
            cfg.dt = dt > 0 ? dt : p.dt;
            cfg.initial_std = initial_std;
            cfg.seed = seed;
            return simulate(p, W, InitialMeans{mu}, law, cfg);
        },
        py::arg("params"), py::arg("W"), py::arg("mu"), py::arg("solution"),
        py::arg("pop_per_node") = 4, py::arg("dt") = -1.0, py::arg("initial_std") = 1.0,
        py::arg("seed") = 0,
        "Euler-Maruyama population simulation under the solution's node laws");
}
