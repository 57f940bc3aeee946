// JSON serialization of instances and generator specs, CSV trajectory
// output.  Complex entries travel as [re, im] pairs in row-major order;
// every float in the CSV is written in full precision scientific notation
// so that replays are bit-identical.
#pragma once

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "core.hpp"
#include "instances.hpp"

namespace kreinflow {

using json = nlohmann::ordered_json;

struct ParseError : Error {
    using Error::Error;
};

inline std::string format_full(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17e", x);
    return buf;
}

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            rows.push_back(json::array({m(r, c).real(), m(r, c).imag()}));
    return rows;
}

inline Matrix matrix_from_json(const json& j, int n) {
    if (!j.is_array() || static_cast<int>(j.size()) != n * n)
        throw ParseError("matrix_from_json: expected " + std::to_string(n * n) +
                         " row-major [re, im] pairs");
    Matrix m(n, n);
    int k = 0;
    for (const auto& e : j) {
        if (!e.is_array() || e.size() != 2)
            throw ParseError("matrix_from_json: entries must be [re, im] pairs");
        m(k / n, k % n) = Complex(e[0].get<double>(), e[1].get<double>());
        ++k;
    }
    return m;
}

inline json spec_to_json(const InstanceSpec& spec) {
    json j;
    j["n"] = spec.n;
    j["plus"] = spec.n_plus;
    j["seed"] = spec.seed;
    j["spread"] = spec.basis_spread;
    json a = json::array(), c = json::array();
    for (const auto& e : spec.a_entries) a.push_back(json::array({e.value, e.sign}));
    for (const auto& e : spec.c_entries) c.push_back(json::array({e.value, e.sign}));
    j["a"] = a;
    j["c"] = c;
    return j;
}

inline InstanceSpec spec_from_json(const json& j) {
    InstanceSpec spec;
    spec.n = j.at("n").get<int>();
    spec.n_plus = j.at("plus").get<int>();
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.basis_spread = j.value("spread", 0.0);
    const auto read_entries = [&](const json& arr) {
        std::vector<EigenEntry> out;
        for (const auto& e : arr) {
            if (!e.is_array() || e.size() != 2)
                throw ParseError("spec_from_json: entries must be [value, sign] pairs");
            out.push_back({e[0].get<double>(), e[1].get<int>()});
        }
        return out;
    };
    spec.a_entries = read_entries(j.at("a"));
    spec.c_entries = read_entries(j.at("c"));
    return spec;
}

inline json instance_to_json(const Instance& inst) {
    json j;
    j["signature"] = inst.space.signature();
    j["A"] = matrix_to_json(inst.a.mat());
    j["C"] = matrix_to_json(inst.c.mat());
    j["meta"] = json{{"seed", inst.spec.seed}, {"name", inst.name},
                     {"spec", spec_to_json(inst.spec)}};
    return j;
}

inline Instance instance_from_json(const json& j) {
    if (!j.contains("signature") || !j.contains("A") || !j.contains("C"))
        throw ParseError("instance_from_json: need signature, A and C");
    std::vector<int> sig = j.at("signature").get<std::vector<int>>();
    const KreinSpace space{sig};
    const int n = space.dim();
    DenseOperator a(matrix_from_json(j.at("A"), n), space);
    DenseOperator c(matrix_from_json(j.at("C"), n), space);

    InstanceSpec spec;
    spec.n = n;
    spec.n_plus = space.plus_count();
    std::string name = "instance";
    if (j.contains("meta")) {
        const json& meta = j.at("meta");
        name = meta.value("name", name);
        if (meta.contains("spec")) {
            try {
                spec = spec_from_json(meta.at("spec"));
            } catch (const json::exception&) {
                throw ParseError("instance_from_json: malformed meta.spec");
            }
        }
        spec.seed = meta.value("seed", spec.seed);
    }
    return Instance{name, space, a, c, spec};
}

// Generator spec: either a full deterministic spec (with "a" and "c" entry
// lists) or a random-draw request keyed by dimension counts and seed.
inline Instance instance_from_generator_spec(const json& j) {
    if (j.contains("a") && j.contains("c")) return instance_from_spec(spec_from_json(j), "spec");
    RandomConfig cfg;
    cfg.n = j.at("n").get<int>();
    cfg.n_plus = j.value("plus", cfg.n);
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.c_rank = j.value("rank", -1);
    cfg.basis_spread = j.value("spread", cfg.basis_spread);
    if (j.contains("eig_range")) {
        cfg.eig_min = j.at("eig_range")[0].get<double>();
        cfg.eig_max = j.at("eig_range")[1].get<double>();
    }
    if (j.contains("gamma_range")) {
        cfg.gamma_min = j.at("gamma_range")[0].get<double>();
        cfg.gamma_max = j.at("gamma_range")[1].get<double>();
    }
    return random_instance(cfg);
}

struct TrajectoryRow {
    double t = 0.0;
    int branch_id = -1;
    double lambda = 0.0;
    int multiplicity = 1;
    double gram_min = 0.0;
};

inline void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRow>& rows) {
    os << "t,branch_id,lambda,multiplicity,gram_min\n";
    for (const auto& r : rows)
        os << format_full(r.t) << ',' << r.branch_id << ',' << format_full(r.lambda) << ','
           << r.multiplicity << ',' << format_full(r.gram_min) << '\n';
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_file: cannot open '" + path + "'");
    out << content;
    if (!out) throw Error("write_file: failed writing '" + path + "'");
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_json_file: cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("load_json_file: '" + path + "': " + e.what());
    }
}

}  // namespace kreinflow
