#include "gmfg/graphon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gmfg/rng.hpp"

namespace gmfg {

namespace {

constexpr double kPi = 3.14159265358979323846;

int cell_of(double x, int N) {
    int q = static_cast<int>(std::floor(x * N));
    return std::min(std::max(q, 0), N - 1);
}

// Deterministic sign convention for eigenvectors: positive mean, falling back
// to a positive largest-magnitude component when the mean is ~0.
void fix_sign(Eigen::VectorXd& v) {
    double s = v.sum();
    if (std::abs(s) > 1e-10 * v.size()) {
        if (s < 0.0) v = -v;
        return;
    }
    int imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;
}

// Order: descending |lambda|, ties by descending signed value, then insertion.
std::vector<int> spectral_order(const Eigen::VectorXd& lam) {
    std::vector<int> idx(lam.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        double aa = std::abs(lam[a]), ab = std::abs(lam[b]);
        if (aa != ab) return aa > ab;
        return lam[a] > lam[b];
    });
    return idx;
}

} // namespace

// ------------------------------------------------------------ Eigenfunction

Eigenfunction::Eigenfunction(Basis basis, Eigen::VectorXd coeffs)
    : basis_(basis), coeffs_(std::move(coeffs)) {
    if (coeffs_.size() == 0) throw std::invalid_argument("Eigenfunction: empty coefficients");
}

Eigenfunction Eigenfunction::cos_mode(int k) {
    if (k < 1) throw std::invalid_argument("Eigenfunction::cos_mode: k >= 1");
    Eigen::VectorXd c = Eigen::VectorXd::Zero(k + 1);
    c[k] = 1.0;
    return Eigenfunction(Basis::Cos, c);
}

Eigenfunction Eigenfunction::step(const Eigen::VectorXd& cell_values) {
    return Eigenfunction(Basis::Step, cell_values);
}

double Eigenfunction::operator()(double x) const {
    if (basis_ == Basis::Step) {
        return coeffs_[cell_of(x, static_cast<int>(coeffs_.size()))];
    }
    double y = coeffs_[0];
    for (int m = 1; m < coeffs_.size(); ++m)
        if (coeffs_[m] != 0.0) y += coeffs_[m] * std::sqrt(2.0) * std::cos(m * kPi * x / 2.0);
    return y;
}

double Eigenfunction::integral(double a, double b) const {
    if (basis_ == Basis::Step) {
        const int N = static_cast<int>(coeffs_.size());
        double acc = 0.0;
        for (int q = 0; q < N; ++q) {
            double lo = std::max(a, static_cast<double>(q) / N);
            double hi = std::min(b, static_cast<double>(q + 1) / N);
            if (hi > lo) acc += coeffs_[q] * (hi - lo);
        }
        return acc;
    }
    double acc = coeffs_[0] * (b - a);
    for (int m = 1; m < coeffs_.size(); ++m) {
        if (coeffs_[m] == 0.0) continue;
        const double w = m * kPi / 2.0;
        acc += coeffs_[m] * std::sqrt(2.0) * (std::sin(w * b) - std::sin(w * a)) / w;
    }
    return acc;
}

double Eigenfunction::mean() const { return integral(0.0, 1.0); }

Eigen::VectorXd Eigenfunction::cell_integrals(int N) const {
    Eigen::VectorXd out(N);
    for (int q = 0; q < N; ++q)
        out[q] = integral(static_cast<double>(q) / N, static_cast<double>(q + 1) / N);
    return out;
}

// ------------------------------------------------- SpectralDecomposition

SpectralDecomposition SpectralDecomposition::truncated(int k) const {
    SpectralDecomposition out;
    const int keep = std::min<int>(k, size());
    out.lambdas.assign(lambdas.begin(), lambdas.begin() + keep);
    out.funcs.assign(funcs.begin(), funcs.begin() + keep);
    return out;
}

// ------------------------------------------------------------------ Graphon

double Graphon::operator()(double x, double y) const {
    switch (kind) {
        case GraphonKind::Analytic:
            return fn(x, y);
        case GraphonKind::Step:
            return W(cell_of(x, cells()), cell_of(y, cells()));
        case GraphonKind::Spectral: {
            double acc = 0.0;
            for (int l = 0; l < spec.size(); ++l)
                acc += spec.lambdas[l] * spec.funcs[l](x) * spec.funcs[l](y);
            return acc;
        }
    }
    return 0.0;
}

Graphon Graphon::analytic(const std::string& name) {
    Graphon g;
    g.kind = GraphonKind::Analytic;
    g.name = name;
    g.bound = 1.0;
    if (name == "uniform_attachment") {
        g.fn = [](double x, double y) { return 1.0 - std::max(x, y); };
    } else if (name == "min") {
        g.fn = [](double x, double y) { return std::min(x, y); };
    } else if (name == "product") {
        g.fn = [](double x, double y) { return x * y; };
    } else {
        throw std::invalid_argument("Graphon::analytic: unknown kernel '" + name + "'");
    }
    return g;
}

Graphon Graphon::uniform_attachment() { return analytic("uniform_attachment"); }

Graphon Graphon::constant(double value) {
    Eigen::MatrixXd w(1, 1);
    w(0, 0) = value;
    return step_from_matrix(w, std::max(1.0, std::abs(value)));
}

Graphon Graphon::spectral(SpectralDecomposition d, double bound) {
    Graphon g;
    g.kind = GraphonKind::Spectral;
    g.spec = std::move(d);
    g.bound = bound;
    return g;
}

Graphon step_from_matrix(const Eigen::MatrixXd& W, double c) {
    if (W.rows() != W.cols() || W.rows() == 0)
        throw std::invalid_argument("step_from_matrix: need a nonempty square matrix");
    const double scale = std::max(1.0, W.cwiseAbs().maxCoeff());
    if ((W - W.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw std::invalid_argument("step_from_matrix: matrix must be symmetric");
    if (W.cwiseAbs().maxCoeff() > c + 1e-12)
        throw std::invalid_argument("step_from_matrix: entries exceed the bound");
    Graphon g;
    g.kind = GraphonKind::Step;
    g.W = W;
    g.bound = c;
    return g;
}

Eigen::MatrixXd kernel_on_grid(const Graphon& g, const Quadrature& q) {
    Eigen::MatrixXd K(q.n, q.n);
    for (int i = 0; i < q.n; ++i) {
        const double x = q.node(i);
        for (int j = i; j < q.n; ++j) {
            K(i, j) = g(x, q.node(j));
            K(j, i) = K(i, j);
        }
    }
    return K;
}

Eigen::VectorXd apply_graphon(const Graphon& g, const Eigen::VectorXd& f_on_grid,
                              const Quadrature& q) {
    if (f_on_grid.size() != q.n)
        throw std::invalid_argument("apply_graphon: grid size mismatch");
    return kernel_on_grid(g, q) * f_on_grid * q.weight();
}

Eigen::VectorXd apply_graphon(const Graphon& g, const std::function<double(double)>& f,
                              const Quadrature& q) {
    Eigen::VectorXd v(q.n);
    for (int i = 0; i < q.n; ++i) v[i] = f(q.node(i));
    return apply_graphon(g, v, q);
}

SpectralDecomposition spectral_of_step(const Graphon& g, int max_rank) {
    if (g.kind != GraphonKind::Step)
        throw std::invalid_argument("spectral_of_step: not a step graphon");
    const int N = g.cells();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g.W / N);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("spectral_of_step: eigensolver failed");
    const Eigen::VectorXd lam = eig.eigenvalues();
    std::vector<int> order = spectral_order(lam);

    SpectralDecomposition out;
    for (int idx : order) {
        if (std::abs(lam[idx]) <= 1e-12) continue;  // |lambda_i(W)| <= 1e-12 N
        Eigen::VectorXd v = eig.eigenvectors().col(idx);
        fix_sign(v);
        out.lambdas.push_back(lam[idx]);
        out.funcs.push_back(Eigenfunction::step(std::sqrt(static_cast<double>(N)) * v));
        if (max_rank >= 0 && out.size() == max_rank) break;
    }
    return out;
}

SpectralDecomposition ua_eigenpairs(int count) {
    SpectralDecomposition out;
    for (int i = 0; i < count; ++i) {
        const int k = 2 * i + 1;
        out.lambdas.push_back(4.0 / (k * k * kPi * kPi));
        out.funcs.push_back(Eigenfunction::cos_mode(k));
    }
    return out;
}

namespace {

// Largest singular value of the symmetric grid operator K/n via power
// iteration on (K/n)^2, which is insensitive to a +/- lambda tie.
double grid_operator_norm(const Eigen::MatrixXd& K, int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = 1.0 + static_cast<double>(i) / n;
    v.normalize();
    double rho = 0.0;
    for (int it = 0; it < 500; ++it) {
        Eigen::VectorXd w = K * v / n;
        w = K * w / n;
        const double nw = w.norm();
        if (nw == 0.0) return 0.0;
        v = w / nw;
        const double next = std::sqrt(nw);
        if (it > 2 && std::abs(next - rho) <= 1e-14 * std::max(1.0, next)) return next;
        rho = next;
    }
    return rho;
}

double step_operator_norm(const Eigen::MatrixXd& W) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(W / W.rows());
    return eig.eigenvalues().cwiseAbs().maxCoeff();
}

// Smallest n' >= n that is a multiple of every step graphon's cell count, so
// midpoint cells align exactly with the partition.
int aligned_grid(int n, const Graphon& g1, const Graphon* g2 = nullptr) {
    long long mult = 1;
    auto fold = [&](const Graphon& g) {
        if (g.kind == GraphonKind::Step) mult = std::lcm(mult, static_cast<long long>(g.cells()));
    };
    fold(g1);
    if (g2) fold(*g2);
    if (mult > n) return static_cast<int>(mult);
    return static_cast<int>(((n + mult - 1) / mult) * mult);
}

} // namespace

double operator_norm(const Graphon& g, const Quadrature& q) {
    switch (g.kind) {
        case GraphonKind::Step:
            return step_operator_norm(g.W);
        case GraphonKind::Spectral: {
            double m = 0.0;
            for (double l : g.spec.lambdas) m = std::max(m, std::abs(l));
            return m;
        }
        case GraphonKind::Analytic: {
            Quadrature qa{aligned_grid(q.n, g)};
            return grid_operator_norm(kernel_on_grid(g, qa), qa.n);
        }
    }
    return 0.0;
}

double l2_norm(const Graphon& g, const Quadrature& q) {
    if (g.kind == GraphonKind::Step) {
        const int N = g.cells();
        return std::sqrt(g.W.squaredNorm() / (static_cast<double>(N) * N));
    }
    if (g.kind == GraphonKind::Spectral) {
        double acc = 0.0;
        for (double l : g.spec.lambdas) acc += l * l;
        return std::sqrt(acc);
    }
    const Eigen::MatrixXd K = kernel_on_grid(g, q);
    return std::sqrt(K.squaredNorm() / (static_cast<double>(q.n) * q.n));
}

double op_distance(const Graphon& g1, const Graphon& g2, const Quadrature& q) {
    if (g1.kind == GraphonKind::Step && g2.kind == GraphonKind::Step) {
        // Exact: refine both partitions to the common multiple and compare.
        const int n1 = g1.cells(), n2 = g2.cells();
        const int N = static_cast<int>(std::lcm(n1, n2));
        Eigen::MatrixXd Dm(N, N);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j)
                Dm(i, j) = g1.W(i / (N / n1), j / (N / n1)) - g2.W(i / (N / n2), j / (N / n2));
        return step_operator_norm(Dm);
    }
    Quadrature qa{aligned_grid(q.n, g1, &g2)};
    const Eigen::MatrixXd D = kernel_on_grid(g1, qa) - kernel_on_grid(g2, qa);
    return grid_operator_norm(D, qa.n);
}

// --------------------------------------------------------------- cut norm

namespace {

double cut_norm_exact(const Eigen::MatrixXd& W) {
    const int N = static_cast<int>(W.rows());
    double best = 0.0;
    std::vector<double> colsum(N);
    for (std::uint32_t mask = 1; mask < (1u << N); ++mask) {
        std::fill(colsum.begin(), colsum.end(), 0.0);
        for (int i = 0; i < N; ++i)
            if (mask >> i & 1)
                for (int j = 0; j < N; ++j) colsum[j] += W(i, j);
        double pos = 0.0, neg = 0.0;
        for (double c : colsum) (c > 0.0 ? pos : neg) += std::abs(c);
        best = std::max({best, pos, neg});
    }
    return best / (static_cast<double>(N) * N);
}

double cut_norm_greedy(const Eigen::MatrixXd& W, const CutNormOptions& opts) {
    const int N = static_cast<int>(W.rows());
    double best = 0.0;
    CounterRng rng(opts.seed);
    std::vector<char> S(N);
    for (int start = 0; start < opts.starts; ++start) {
        for (int sign : {+1, -1}) {
            for (int i = 0; i < N; ++i) S[i] = rng.next_double() < 0.5;
            double value = -1.0;
            for (int rounds = 0; rounds < 200; ++rounds) {
                // best T for fixed S, then best S for fixed T
                Eigen::VectorXd colsum = Eigen::VectorXd::Zero(N);
                for (int i = 0; i < N; ++i)
                    if (S[i]) colsum += W.row(i).transpose();
                Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(N);
                double v = 0.0;
                for (int j = 0; j < N; ++j)
                    if (sign * colsum[j] > 0.0) {
                        v += sign * colsum[j];
                        rowsum += W.col(j);
                    }
                bool changed = false;
                for (int i = 0; i < N; ++i) {
                    const char want = sign * rowsum[i] > 0.0;
                    if (want != S[i]) {
                        S[i] = want;
                        changed = true;
                    }
                }
                if (v <= value && !changed) break;
                value = std::max(value, v);
                if (!changed) break;
            }
            best = std::max(best, value);
        }
    }
    return best / (static_cast<double>(N) * N);
}

} // namespace

double cut_norm_step(const Eigen::MatrixXd& W, const CutNormOptions& opts) {
    if (W.rows() != W.cols() || W.rows() == 0)
        throw std::invalid_argument("cut_norm_step: need a nonempty square matrix");
    if (W.rows() <= std::min(opts.exact_limit, 25)) return cut_norm_exact(W);
    return cut_norm_greedy(W, opts);
}

// ---------------------------------------------------------------- sampling

namespace {

Eigen::VectorXd sorted_latents(CounterRng& rng, int N) {
    Eigen::VectorXd x(N);
    for (int i = 0; i < N; ++i) x[i] = rng.next_double();
    std::sort(x.data(), x.data() + N);
    return x;
}

double probability_at(const Graphon& g, double x, double y) {
    const double p = g(x, y);
    if (p < -1e-12 || p > 1.0 + 1e-12)
        throw std::domain_error("sample_simple_graph: kernel value outside [0, 1]");
    return std::min(std::max(p, 0.0), 1.0);
}

} // namespace

SampledGraph sample_simple_graph(const Graphon& g, int N, std::uint64_t seed) {
    if (N < 1) throw std::invalid_argument("sample_simple_graph: N >= 1");
    CounterRng rng(seed);
    SampledGraph out;
    out.seed = seed;
    out.latents = sorted_latents(rng, N);
    out.W = Eigen::MatrixXd::Zero(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) {
            const double p = probability_at(g, out.latents[i], out.latents[j]);
            const double w = rng.next_double() < p ? 1.0 : 0.0;
            out.W(i, j) = out.W(j, i) = w;
        }
    return out;
}

SampledGraph sample_weighted_graph(const Graphon& g, int N, std::uint64_t seed) {
    if (N < 1) throw std::invalid_argument("sample_weighted_graph: N >= 1");
    CounterRng rng(seed);
    SampledGraph out;
    out.seed = seed;
    out.latents = sorted_latents(rng, N);
    out.W = Eigen::MatrixXd::Zero(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) out.W(i, j) = out.W(j, i) = g(out.latents[i], out.latents[j]);
    return out;
}

SampledGraph generate_uniform_attachment(int N, std::uint64_t seed) {
    if (N < 1) throw std::invalid_argument("generate_uniform_attachment: N >= 1");
    CounterRng rng(seed);
    Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(N, N);
    for (int k = 2; k <= N; ++k)
        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j)
                if (adj(i, j) == 0.0 && rng.next_double() < 1.0 / k) adj(i, j) = adj(j, i) = 1.0;

    // Relabel by descending degree (stable on ties) to match the limit shape.
    std::vector<int> idx(N);
    std::iota(idx.begin(), idx.end(), 0);
    Eigen::VectorXd deg = adj.rowwise().sum();
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return deg[a] > deg[b]; });
    SampledGraph out;
    out.seed = seed;
    out.W = Eigen::MatrixXd(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) out.W(i, j) = adj(idx[i], idx[j]);
    return out;
}

// --------------------------------------------------------------------- fit

Graphon fit_spectral_from_grid(const Graphon& g, int gridN, int k, FitBasis basis, int M) {
    if (gridN < 2 || k < 1) throw std::invalid_argument("fit_spectral_from_grid: bad sizes");
    Quadrature q{gridN};
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(kernel_on_grid(g, q) / gridN);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("fit_spectral_from_grid: eigensolver failed");
    const Eigen::VectorXd lam = eig.eigenvalues();
    std::vector<int> order = spectral_order(lam);

    Eigen::MatrixXd design;  // cosine design matrix, built on demand
    if (basis == FitBasis::Cos) {
        design.resize(gridN, M + 1);
        for (int i = 0; i < gridN; ++i) {
            design(i, 0) = 1.0;
            for (int m = 1; m <= M; ++m)
                design(i, m) = std::sqrt(2.0) * std::cos(m * kPi * q.node(i) / 2.0);
        }
    }

    SpectralDecomposition d;
    for (int idx : order) {
        if (d.size() == k) break;
        if (std::abs(lam[idx]) <= 1e-12) continue;
        Eigen::VectorXd v = eig.eigenvectors().col(idx);
        fix_sign(v);
        Eigen::VectorXd f = std::sqrt(static_cast<double>(gridN)) * v;  // L2-normalized step
        d.lambdas.push_back(lam[idx]);
        if (basis == FitBasis::Piecewise) {
            d.funcs.push_back(Eigenfunction::step(f));
        } else {
            Eigen::VectorXd c = design.colPivHouseholderQr().solve(f);
            d.funcs.push_back(Eigenfunction(Eigenfunction::Basis::Cos, c));
        }
    }
    return Graphon::spectral(std::move(d), g.bound);
}

} // namespace gmfg
