#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace gmfg {

// Uniform time grid on [0, T]. Nodes are t_k = k*T/steps; dt is derived from
// (T, steps) so that t(steps) == T exactly and accumulated rounding stays out
// of the node values.
struct TimeGrid {
    double T = 1.0;
    int steps = 1000;

    TimeGrid() = default;
    TimeGrid(double horizon, int nsteps) : T(horizon), steps(nsteps) {
        if (!(horizon > 0.0) || nsteps < 1)
            throw std::invalid_argument("TimeGrid: need T > 0 and steps >= 1");
    }

    static TimeGrid from_dt(double T, double dt) {
        if (!(T > 0.0) || !(dt > 0.0)) throw std::invalid_argument("TimeGrid: need T, dt > 0");
        int steps = std::max(1, static_cast<int>(std::llround(T / dt)));
        return TimeGrid(T, steps);
    }

    double dt() const { return T / steps; }
    int nodes() const { return steps + 1; }
    double t(int k) const { return (static_cast<double>(k) * T) / steps; }

    // Grid with the same horizon and half the step, used internally so that
    // RK4 mid-stage values of backward quantities are stored, not interpolated.
    TimeGrid refined() const { return TimeGrid(T, 2 * steps); }

    // Nearest node index for a time that is expected to lie on the grid.
    int index_of(double time) const {
        int k = static_cast<int>(std::llround(time / T * steps));
        return std::min(std::max(k, 0), steps);
    }

    bool operator==(const TimeGrid& o) const { return T == o.T && steps == o.steps; }
};

// Trajectories sampled at grid nodes (index k <-> time grid.t(k)).
struct VectorPath {
    TimeGrid grid;
    std::vector<Eigen::VectorXd> v;

    Eigen::VectorXd& operator[](int k) { return v[k]; }
    const Eigen::VectorXd& operator[](int k) const { return v[k]; }
    int nodes() const { return static_cast<int>(v.size()); }
};

struct MatrixPath {
    TimeGrid grid;
    std::vector<Eigen::MatrixXd> m;

    Eigen::MatrixXd& operator[](int k) { return m[k]; }
    const Eigen::MatrixXd& operator[](int k) const { return m[k]; }
    int nodes() const { return static_cast<int>(m.size()); }
};

// States larger than this are treated as divergence by the integrators.
inline constexpr double kDivergenceThreshold = 1e12;

template <class State>
bool state_finite(const State& y) {
    return y.allFinite() && y.cwiseAbs().maxCoeff() < kDivergenceThreshold;
}

// One classical RK4 step from (t, y) with signed step h.
template <class State, class F>
State rk4_step(F&& f, double t, double h, const State& y) {
    State k1 = f(t, y);
    State k2 = f(t + 0.5 * h, State(y + 0.5 * h * k1));
    State k3 = f(t + 0.5 * h, State(y + 0.5 * h * k2));
    State k4 = f(t + h, State(y + h * k3));
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Integrate y' = f(t, y) from y(0) = y0 across the grid; returns the state at
// every node. If the state blows up, the remaining nodes hold the last finite
// value and *diverged is set.
template <class State, class F>
std::vector<State> rk4_forward(const TimeGrid& g, const State& y0, F&& f, bool* diverged = nullptr) {
    std::vector<State> path(g.nodes());
    path[0] = y0;
    if (diverged) *diverged = false;
    double h = g.dt();
    for (int k = 0; k < g.steps; ++k) {
        path[k + 1] = rk4_step(f, g.t(k), h, path[k]);
        if (!state_finite(path[k + 1])) {
            if (diverged) *diverged = true;
            for (int j = k + 1; j <= g.steps; ++j) path[j] = path[k];
            break;
        }
    }
    return path;
}

// Integrate y' = f(t, y) backward from y(T) = yT; path is still indexed by
// ascending node time.
template <class State, class F>
std::vector<State> rk4_backward(const TimeGrid& g, const State& yT, F&& f, bool* diverged = nullptr) {
    std::vector<State> path(g.nodes());
    path[g.steps] = yT;
    if (diverged) *diverged = false;
    double h = -g.dt();
    for (int k = g.steps; k > 0; --k) {
        path[k - 1] = rk4_step(f, g.t(k), h, path[k]);
        if (!state_finite(path[k - 1])) {
            if (diverged) *diverged = true;
            for (int j = k - 1; j >= 0; --j) path[j] = path[k];
            break;
        }
    }
    return path;
}

// Shape-preserving cubic Hermite interpolant (PCHIP) of a vector-valued path.
// Interior slopes are the weighted harmonic mean of adjacent secants, zeroed
// at local extrema; end slopes use the one-sided three-point rule with the
// usual monotonicity clips. Evaluation clamps to [0, T].
class PchipInterpolant {
public:
    PchipInterpolant() = default;
    explicit PchipInterpolant(const VectorPath& path);
    PchipInterpolant(const TimeGrid& grid, const std::vector<Eigen::VectorXd>& values);

    Eigen::VectorXd operator()(double t) const;
    const TimeGrid& grid() const { return grid_; }
    int dim() const { return values_.empty() ? 0 : static_cast<int>(values_[0].size()); }

private:
    TimeGrid grid_;
    std::vector<Eigen::VectorXd> values_;
    std::vector<Eigen::VectorXd> slopes_;
};

// Matrix-valued view over a PchipInterpolant (column-major flattening).
class MatrixInterpolant {
public:
    MatrixInterpolant() = default;
    explicit MatrixInterpolant(const MatrixPath& path);

    Eigen::MatrixXd operator()(double t) const;

private:
    int rows_ = 0, cols_ = 0;
    PchipInterpolant flat_;
};

// Backward solve of the symmetric matrix Riccati equation
//   -dPi/dt = A' Pi + Pi A - Pi B R^-1 B' Pi + Q,   Pi(T) = QT,
// with (Pi + Pi')/2 symmetrization after every step.
MatrixPath solve_symmetric_riccati(const TimeGrid& grid, const Eigen::MatrixXd& A,
                                   const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                                   const Eigen::MatrixXd& R, const Eigen::MatrixXd& QT,
                                   bool* diverged = nullptr);

// Backward solve of the non-symmetric matrix Riccati equation
//   -dX/dt = A1(t)' X + X A2(t) - X S X - C(t),   X(T) = XT.
// A1, A2, C may be time varying (evaluated at the RK4 stage times).
MatrixPath solve_nonsymmetric_riccati(const TimeGrid& grid,
                                      const std::function<Eigen::MatrixXd(double)>& A1,
                                      const std::function<Eigen::MatrixXd(double)>& A2,
                                      const Eigen::MatrixXd& S,
                                      const std::function<Eigen::MatrixXd(double)>& C,
                                      const Eigen::MatrixXd& XT, bool* diverged = nullptr);

} // namespace gmfg
