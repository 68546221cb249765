#include "cpcrib/io.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

namespace cpcrib {

namespace {

double round4(double v) { return std::round(v * 1e4) / 1e4; }

json finite_or_null(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

}  // namespace

json model_to_json(const KruskalModel& m) {
    m.validate();
    json j;
    j["dims"] = m.dims();
    j["rank"] = m.rank();
    json factors = json::array();
    for (const auto& A : m.factors) {
        json rows = json::array();
        for (Index i = 0; i < A.rows(); ++i) {
            json row = json::array();
            for (Index c = 0; c < A.cols(); ++c) row.push_back(A(i, c));
            rows.push_back(std::move(row));
        }
        factors.push_back(std::move(rows));
    }
    j["factors"] = std::move(factors);
    return j;
}

KruskalModel model_from_json(const json& j) {
    // Accept documents that wrap the model under a "model" key (e.g. the
    // output of `gen`), so generated files feed other subcommands directly.
    if (j.is_object() && j.contains("model")) return model_from_json(j.at("model"));
    if (!j.contains("dims") || !j.contains("rank") || !j.contains("factors"))
        throw std::invalid_argument("model JSON needs dims, rank, factors");
    std::vector<Index> dims = j.at("dims").get<std::vector<Index>>();
    Index rank = j.at("rank").get<Index>();
    const json& fs = j.at("factors");
    if (fs.size() != dims.size()) throw std::invalid_argument("factor count must match dims");
    std::vector<MatrixXd> factors;
    for (size_t n = 0; n < dims.size(); ++n) {
        const json& rows = fs[n];
        if (static_cast<Index>(rows.size()) != dims[n])
            throw std::invalid_argument("factor row count must match dims");
        MatrixXd A(dims[n], rank);
        for (Index i = 0; i < dims[n]; ++i) {
            const json& row = rows[i];
            if (static_cast<Index>(row.size()) != rank)
                throw std::invalid_argument("factor column count must match rank");
            for (Index c = 0; c < rank; ++c) A(i, c) = row[c].get<double>();
        }
        factors.push_back(std::move(A));
    }
    return KruskalModel(std::move(factors));
}

json tensor_to_json(const DenseTensor& t) {
    json j;
    j["dims"] = t.dims;
    j["values"] = std::vector<double>(t.values.data(), t.values.data() + t.values.size());
    return j;
}

DenseTensor tensor_from_json(const json& j) {
    if (!j.contains("dims") || !j.contains("values"))
        throw std::invalid_argument("tensor JSON needs dims and values");
    std::vector<Index> dims = j.at("dims").get<std::vector<Index>>();
    std::vector<double> vals = j.at("values").get<std::vector<double>>();
    return DenseTensor(dims, Eigen::Map<const VectorXd>(vals.data(), vals.size()));
}

json report_to_json(const CribReport& r) {
    json j;
    j["crib"] = finite_or_null(r.crib);
    j["crib_db"] = std::isfinite(r.crib_db) ? json(round4(r.crib_db)) : json(nullptr);
    j["angle_deg"] = std::isfinite(r.angle_deg) ? json(round4(r.angle_deg)) : json(nullptr);
    j["finite"] = r.finite;
    j["method"] = to_string(r.method);
    j["epsilon_applied"] = r.epsilon_applied;
    if (!r.note.empty()) j["note"] = r.note;
    return j;
}

json fit_to_json(const FitResult& f) {
    json j;
    j["model"] = model_to_json(f.model);
    j["residual_norm"] = f.residual_norm;
    j["rel_residual"] = f.rel_residual;
    j["iterations"] = f.iterations;
    j["converged"] = f.converged;
    j["sigma2_est"] = f.sigma2_est;
    return j;
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open file: " + path);
    return json::parse(in);
}

void save_json(const json& j, const std::string& path) {
    if (path.empty()) {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write file: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace cpcrib
