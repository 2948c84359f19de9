#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmfg/io.hpp"
#include "gmfg/simulation.hpp"
#include "gmfg/solver.hpp"

namespace gmfg {

// Parsed experiment description. See configs/ua30.json and configs/sbm30.json
// for the JSON schema; any field can be overridden on the command line with
// --set dotted.path=value.
struct ExperimentConfig {
    json raw;

    std::string family = "custom"; // "ua" | "sbm" | "custom"
    Graphon graphon;               // limit kernel (when given or implied by family)
    bool has_graphon = false;

    // Coupling graph source for finite solves / simulation.
    enum class GraphSource { None, File, GenerateUa, SampleSimple, SampleWeighted };
    GraphSource graph_source = GraphSource::None;
    std::string graph_file;
    int N = 0;

    GmfgParams params;

    // solver
    SolveMode mode = SolveMode::Spectral;
    SolveMethod method = SolveMethod::Riccati;
    int rank = -1;
    FixedPointOptions fp;
    bool compute_l0 = true;

    // means: explicit per-node values or U[lo,hi] draws per node
    bool means_random = true;
    double mean_lo = -3.0, mean_hi = 3.0;
    Eigen::MatrixXd mean_values; // n x N when given

    PopulationConfig population;
    int sim_runs = 12;

    std::vector<int> sweep_sizes = {10, 30, 100};
    int runs_per_size = 12;

    int quadrature = 1024;
    std::uint64_t seed = 1;
    int threads = 1;

    static ExperimentConfig from_json(const json& j);
};

// One family run at size N: build the coupling graph, measure the operator
// distance to the limit kernel, and simulate the population under the
// family's limit law.
struct ExperimentRun {
    int N = 0;
    std::uint64_t seed = 0;
    double rel_error = 0.0;
    double op_distance = 0.0;
    bool converged = true;
};

struct SweepResult {
    std::vector<ExperimentRun> rows;
    std::vector<int> sizes;
    std::vector<double> mean_rel_error;  // per size
    std::vector<double> mean_op_distance;
    bool rel_error_decreasing = false;
    bool op_distance_decreasing = false;
    double L0 = std::numeric_limits<double>::quiet_NaN();
    int rank = 0;
    std::string family;
};

// Shared machinery for a family: a fixed initial-mean profile, the limit
// decomposition, and the limit solution (solved once via the prepared
// backward passes), reused across all runs and sizes.
class FamilyContext {
public:
    FamilyContext(const ExperimentConfig& cfg);

    ExperimentRun run_once(int N, std::uint64_t run_seed) const;
    const SpectralDecomposition& decomp() const { return decomp_; }
    const MeanFieldSolution& solution() const { return sol_; }
    const Eigen::MatrixXd& profile() const { return profile_; }
    double L0() const { return L0_; }

private:
    ExperimentConfig cfg_;
    SpectralDecomposition decomp_;
    std::shared_ptr<const SpectralBackward> prep_;
    Eigen::MatrixXd profile_; // initial-mean profile, n x cells
    MeanFieldSolution sol_;   // limit solution under the profile
    double L0_ = std::numeric_limits<double>::quiet_NaN();
};

SweepResult size_sweep(const ExperimentConfig& cfg);

// CLI entry points; each writes its artifacts under out_dir and returns the
// process exit code: 0 ok, 2 flagged non-convergence (config and runtime
// errors are thrown and become exit 1 in the driver).
int cmd_solve(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_spectrum(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_sample_graph(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_fit(const ExperimentConfig& cfg, const std::string& out_dir);

} // namespace gmfg
