#include "gmfg/ode.hpp"

#include <algorithm>

namespace gmfg {

namespace {

// Componentwise PCHIP slopes on a uniform grid (Fritsch-Carlson weighting).
// With equal spacing the interior weights coincide, so the slope at an
// interior node is the plain harmonic mean of the adjacent secants whenever
// they share a sign, and zero otherwise (local extremum).
std::vector<Eigen::VectorXd> pchip_slopes(const TimeGrid& g,
                                          const std::vector<Eigen::VectorXd>& y) {
    const int m = static_cast<int>(y.size());
    const int dim = static_cast<int>(y[0].size());
    const double h = g.dt();
    std::vector<Eigen::VectorXd> d(m, Eigen::VectorXd::Zero(dim));
    if (m == 1) return d;
    if (m == 2) {
        d[0] = d[1] = (y[1] - y[0]) / h;
        return d;
    }
    for (int c = 0; c < dim; ++c) {
        auto secant = [&](int k) { return (y[k + 1][c] - y[k][c]) / h; };
        for (int k = 1; k + 1 < m; ++k) {
            double m0 = secant(k - 1), m1 = secant(k);
            if (m0 == 0.0 || m1 == 0.0 || (m0 > 0.0) != (m1 > 0.0)) {
                d[k][c] = 0.0;
            } else {
                d[k][c] = 2.0 * m0 * m1 / (m0 + m1);
            }
        }
        // One-sided three-point ends with the standard monotonicity clips.
        auto sgn = [](double x) { return (x > 0.0) - (x < 0.0); };
        auto edge = [&](double m0, double m1) {
            double dd = 1.5 * m0 - 0.5 * m1;  // ((2h+h)m0 - h m1) / (2h)
            if (sgn(dd) != sgn(m0)) {
                dd = 0.0;
            } else if (sgn(m0) != sgn(m1) && std::abs(dd) > 3.0 * std::abs(m0)) {
                dd = 3.0 * m0;
            }
            return dd;
        };
        d[0][c] = edge(secant(0), secant(1));
        d[m - 1][c] = edge(secant(m - 2), secant(m - 3));
    }
    return d;
}

} // namespace

PchipInterpolant::PchipInterpolant(const VectorPath& path)
    : PchipInterpolant(path.grid, path.v) {}

PchipInterpolant::PchipInterpolant(const TimeGrid& grid,
                                   const std::vector<Eigen::VectorXd>& values)
    : grid_(grid), values_(values) {
    if (static_cast<int>(values_.size()) != grid_.nodes())
        throw std::invalid_argument("PchipInterpolant: values do not match grid");
    slopes_ = pchip_slopes(grid_, values_);
}

Eigen::VectorXd PchipInterpolant::operator()(double t) const {
    const double h = grid_.dt();
    t = std::min(std::max(t, 0.0), grid_.T);
    int k = std::min(static_cast<int>(t / h), grid_.steps - 1);
    if (t < grid_.t(k)) --k;           // guard against floating-point edges
    k = std::min(std::max(k, 0), grid_.steps - 1);
    const double s = (t - grid_.t(k)) / h;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    const double h10 = s3 - 2.0 * s2 + s;
    const double h01 = -2.0 * s3 + 3.0 * s2;
    const double h11 = s3 - s2;
    return h00 * values_[k] + (h10 * h) * slopes_[k] + h01 * values_[k + 1] +
           (h11 * h) * slopes_[k + 1];
}

MatrixInterpolant::MatrixInterpolant(const MatrixPath& path) {
    if (path.m.empty()) return;
    rows_ = static_cast<int>(path.m[0].rows());
    cols_ = static_cast<int>(path.m[0].cols());
    std::vector<Eigen::VectorXd> flat(path.m.size());
    for (size_t k = 0; k < path.m.size(); ++k)
        flat[k] = Eigen::Map<const Eigen::VectorXd>(path.m[k].data(), rows_ * cols_);
    flat_ = PchipInterpolant(path.grid, flat);
}

Eigen::MatrixXd MatrixInterpolant::operator()(double t) const {
    Eigen::VectorXd v = flat_(t);
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows_, cols_);
}

MatrixPath solve_symmetric_riccati(const TimeGrid& grid, const Eigen::MatrixXd& A,
                                   const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                                   const Eigen::MatrixXd& R, const Eigen::MatrixXd& QT,
                                   bool* diverged) {
    const Eigen::MatrixXd Btil = B * R.partialPivLu().solve(B.transpose());
    auto f = [&](double, const Eigen::MatrixXd& P) -> Eigen::MatrixXd {
        return -(A.transpose() * P + P * A - P * Btil * P + Q);
    };
    MatrixPath out;
    out.grid = grid;
    out.m.assign(grid.nodes(), Eigen::MatrixXd());
    out.m[grid.steps] = QT;
    if (diverged) *diverged = false;
    const double h = -grid.dt();
    for (int k = grid.steps; k > 0; --k) {
        Eigen::MatrixXd next = rk4_step(f, grid.t(k), h, out.m[k]);
        next = 0.5 * (next + next.transpose()).eval();
        if (!state_finite(next)) {
            if (diverged) *diverged = true;
            for (int j = k - 1; j >= 0; --j) out.m[j] = out.m[k];
            break;
        }
        out.m[k - 1] = next;
    }
    return out;
}

MatrixPath solve_nonsymmetric_riccati(const TimeGrid& grid,
                                      const std::function<Eigen::MatrixXd(double)>& A1,
                                      const std::function<Eigen::MatrixXd(double)>& A2,
                                      const Eigen::MatrixXd& S,
                                      const std::function<Eigen::MatrixXd(double)>& C,
                                      const Eigen::MatrixXd& XT, bool* diverged) {
    auto f = [&](double t, const Eigen::MatrixXd& X) -> Eigen::MatrixXd {
        return -(A1(t).transpose() * X + X * A2(t) - X * S * X - C(t));
    };
    MatrixPath out;
    out.grid = grid;
    bool div = false;
    out.m = rk4_backward(grid, XT, f, &div);
    if (diverged) *diverged = div;
    return out;
}

} // namespace gmfg
