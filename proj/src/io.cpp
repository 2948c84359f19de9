#include "gmfg/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace gmfg {

namespace {

std::ofstream open_out(const std::string& file) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file);
    out << std::setprecision(17);
    return out;
}

std::ifstream open_in(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot read " + file);
    return in;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

double to_double(const std::string& s) {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::runtime_error("bad numeric field: '" + s + "'");
    return v;
}

} // namespace

// ------------------------------------------------------------------ graphons

json graphon_to_json(const Graphon& g) {
    json j;
    switch (g.kind) {
        case GraphonKind::Step:
            j["type"] = "step";
            j["matrix"] = matrix_to_json(g.W);
            j["c"] = g.bound;
            break;
        case GraphonKind::Analytic:
            j["type"] = "analytic";
            j["name"] = g.name;
            break;
        case GraphonKind::Spectral: {
            j["type"] = "spectral";
            json pairs = json::array();
            for (int l = 0; l < g.spec.size(); ++l) {
                const auto& f = g.spec.funcs[l];
                pairs.push_back({{"lambda", g.spec.lambdas[l]},
                                 {"basis", f.basis() == Eigenfunction::Basis::Cos ? "cos" : "step"},
                                 {"coeffs", vector_to_json(f.coeffs())}});
            }
            j["pairs"] = std::move(pairs);
            j["c"] = g.bound;
            break;
        }
    }
    return j;
}

Graphon graphon_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "step")
        return step_from_matrix(matrix_from_json(j.at("matrix")), j.value("c", 1.0));
    if (type == "analytic") return Graphon::analytic(j.at("name").get<std::string>());
    if (type == "spectral") {
        SpectralDecomposition d;
        for (const auto& pj : j.at("pairs")) {
            const std::string basis = pj.at("basis").get<std::string>();
            if (basis != "cos" && basis != "step")
                throw std::invalid_argument("graphon_from_json: unknown basis '" + basis + "'");
            d.lambdas.push_back(pj.at("lambda").get<double>());
            d.funcs.emplace_back(
                basis == "cos" ? Eigenfunction::Basis::Cos : Eigenfunction::Basis::Step,
                vector_from_json(pj.at("coeffs")));
        }
        return Graphon::spectral(std::move(d), j.value("c", 1.0));
    }
    throw std::invalid_argument("graphon_from_json: unknown type '" + type + "'");
}

// --------------------------------------------------------------------- paths

void write_vector_path_csv(const std::string& file, const VectorPath& path,
                           const std::string& name) {
    if (path.v.empty()) throw std::invalid_argument("write_vector_path_csv: empty path");
    std::ofstream out = open_out(file);
    const int dim = static_cast<int>(path.v[0].size());
    out << "t";
    for (int c = 0; c < dim; ++c) out << "," << name << c;
    out << "\n";
    for (int k = 0; k < path.nodes(); ++k) {
        out << path.grid.t(k);
        for (int c = 0; c < dim; ++c) out << "," << path.v[k](c);
        out << "\n";
    }
}

void write_matrix_path_csv(const std::string& file, const MatrixPath& path,
                           const std::string& name) {
    if (path.m.empty()) throw std::invalid_argument("write_matrix_path_csv: empty path");
    std::ofstream out = open_out(file);
    const auto rows = path.m[0].rows(), cols = path.m[0].cols();
    out << "t";
    for (int c = 0; c < rows * cols; ++c) out << "," << name << c;
    out << "\n";
    for (int k = 0; k < path.nodes(); ++k) {
        out << path.grid.t(k);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) out << "," << path.m[k](r, c);
        out << "\n";
    }
}

VectorPath read_vector_path_csv(const std::string& file) {
    std::ifstream in = open_in(file);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty csv: " + file);
    const int dim = static_cast<int>(split(line, ',').size()) - 1;
    if (dim < 1) throw std::runtime_error("csv has no value columns: " + file);

    std::vector<Eigen::VectorXd> values;
    double last_t = 0.0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        if (static_cast<int>(fields.size()) != dim + 1)
            throw std::runtime_error("ragged csv row in " + file);
        last_t = to_double(fields[0]);
        Eigen::VectorXd v(dim);
        for (int c = 0; c < dim; ++c) v(c) = to_double(fields[c + 1]);
        values.push_back(std::move(v));
    }
    if (values.size() < 2) throw std::runtime_error("csv needs at least two rows: " + file);

    VectorPath path;
    path.grid = TimeGrid(last_t, static_cast<int>(values.size()) - 1);
    path.v = std::move(values);
    return path;
}

// -------------------------------------------------------------------- graphs

void write_graph_csv(const std::string& file, const SampledGraph& g) {
    std::ofstream out = open_out(file);
    const int N = static_cast<int>(g.W.rows());
    out << "i,j,weight\n";
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j)
            if (g.W(i, j) != 0.0) out << i << "," << j << "," << g.W(i, j) << "\n";

    json side;
    side["n"] = N;
    side["seed"] = g.seed;
    side["latents"] = vector_to_json(g.latents);
    write_json_file(file + ".json", side);
}

SampledGraph read_graph_csv(const std::string& file) {
    const json side = read_json_file(file + ".json");
    SampledGraph g;
    g.seed = side.at("seed").get<std::uint64_t>();
    g.latents = vector_from_json(side.at("latents"));
    const int N = side.at("n").get<int>();
    g.W = Eigen::MatrixXd::Zero(N, N);

    std::ifstream in = open_in(file);
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != 3) throw std::runtime_error("ragged edge row in " + file);
        const int i = std::stoi(fields[0]);
        const int j = std::stoi(fields[1]);
        if (i < 0 || j < 0 || i >= N || j >= N)
            throw std::runtime_error("edge endpoint out of range in " + file);
        g.W(i, j) = g.W(j, i) = to_double(fields[2]);
    }
    return g;
}

// ----------------------------------------------------------------------- misc

Eigen::MatrixXd matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty() || !j.at(0).is_array())
        throw std::invalid_argument("matrix_from_json: expected an array of rows");
    const auto rows = j.size();
    const auto cols = j.at(0).size();
    Eigen::MatrixXd m(rows, cols);
    for (size_t r = 0; r < rows; ++r) {
        if (j.at(r).size() != cols) throw std::invalid_argument("matrix_from_json: ragged rows");
        for (size_t c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
    }
    return m;
}

Eigen::VectorXd vector_from_json(const json& j) {
    if (!j.is_array()) throw std::invalid_argument("vector_from_json: expected an array");
    Eigen::VectorXd v(j.size());
    for (size_t i = 0; i < j.size(); ++i) v(i) = j.at(i).get<double>();
    return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

json read_json_file(const std::string& file) {
    std::ifstream in = open_in(file);
    json j;
    in >> j;
    return j;
}

void write_json_file(const std::string& file, const json& j) {
    std::ofstream out = open_out(file);
    out << j.dump(2) << "\n";
}

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("override must look like path.to.key=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json* node = &config;
    for (const auto& key : split(path, '.')) {
        if (key.empty()) throw std::invalid_argument("empty key in override: " + assignment);
        node = &(*node)[key];
    }
    try {
        *node = json::parse(raw);
    } catch (const json::parse_error&) {
        *node = raw; // plain string value
    }
}

} // namespace gmfg
