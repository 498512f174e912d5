#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "jexit/model.hpp"

namespace jexit {

inline constexpr const char* kToolVersion = "0.1.0";

using nlohmann::json;

// Shortest decimal that round-trips to the same double.
inline std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double out = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw InvalidInputError("parse_double: bad number '" + std::string(s) + "'");
    return out;
}

// FNV-1a over the canonical dump (nlohmann orders object keys), so the hash
// is stable under key reordering in the source file.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string config_hash(const json& config) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config.dump())));
    return std::string(buf);
}

// Batch-run controls carried alongside the problem definition.
struct RunControls {
    long trials = 1000;
    int workers = 0;  // 0 = hardware concurrency
    std::uint64_t seed = 1;
    std::string out_dir = "out";
};

namespace detail {

inline void reject_unknown_keys(const json& obj, std::vector<std::string> allowed,
                                const std::string& where, std::vector<std::string>& errors) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const auto& k : allowed)
            if (item.key() == k) {
                known = true;
                break;
            }
        if (!known) errors.push_back(where + ": unknown key '" + item.key() + "'");
    }
}

inline Mat parse_matrix(const json& j, const std::string& where,
                        std::vector<std::string>& errors) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        errors.push_back(where + ": expected an array of rows");
        return Mat();
    }
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    Mat m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols) {
            errors.push_back(where + ": ragged rows");
            return Mat();
        }
        for (std::size_t k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
    }
    return m;
}

inline Vec parse_vector(const json& j, const std::string& where,
                        std::vector<std::string>& errors) {
    if (!j.is_array()) {
        errors.push_back(where + ": expected an array");
        return Vec();
    }
    Vec v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

}  // namespace detail

struct ParsedConfig {
    ProblemSpec spec;
    RunControls run;
    std::vector<std::string> errors;
    std::string hash;

    bool ok() const { return errors.empty(); }
};

// Strict parse: unknown keys are rejected, then the semantic validator runs.
inline ParsedConfig parse_config(const json& j) {
    ParsedConfig out;
    auto& errors = out.errors;
    out.hash = config_hash(j);

    if (!j.is_object()) {
        errors.push_back("config: expected a JSON object");
        return out;
    }
    detail::reject_unknown_keys(j,
                                {"dim", "lambda", "diffusion", "nonlinearity", "box_radius",
                                 "outer_domain", "init_law", "epsilon_grid", "alpha", "run"},
                                "config", errors);

    ProblemSpec& s = out.spec;
    try {
        if (!j.contains("dim")) errors.push_back("dim: required");
        else s.dim = j["dim"].get<int>();
        if (!j.contains("lambda")) errors.push_back("lambda: required");
        else s.lambda = j["lambda"].get<double>();
        if (!j.contains("box_radius")) errors.push_back("box_radius: required");
        else s.box_radius = j["box_radius"].get<double>();
        if (j.contains("alpha")) s.alpha = j["alpha"].get<double>();

        if (j.contains("nonlinearity")) {
            const std::string n = j["nonlinearity"].get<std::string>();
            if (n == "none") s.nonlinearity = NonlinearityKind::none;
            else if (n == "cubic") s.nonlinearity = NonlinearityKind::cubic;
            else if (n == "quad2") s.nonlinearity = NonlinearityKind::quad2;
            else errors.push_back("nonlinearity: unknown builtin '" + n + "'");
        }

        if (j.contains("diffusion")) {
            const json& dj = j["diffusion"];
            detail::reject_unknown_keys(dj, {"type", "matrix"}, "diffusion", errors);
            const std::string t = dj.value("type", "identity");
            if (t == "identity") s.diffusion.kind = DiffusionKind::identity;
            else if (t == "radial") s.diffusion.kind = DiffusionKind::radial;
            else if (t == "constant") {
                s.diffusion.kind = DiffusionKind::constant;
                if (!dj.contains("matrix")) errors.push_back("diffusion.matrix: required for constant");
                else s.diffusion.matrix = detail::parse_matrix(dj["matrix"], "diffusion.matrix", errors);
            } else errors.push_back("diffusion.type: unknown '" + t + "'");
            if (t != "constant" && dj.contains("matrix"))
                errors.push_back("diffusion.matrix: only valid for type constant");
        }

        if (j.contains("outer_domain")) {
            const json& oj = j["outer_domain"];
            detail::reject_unknown_keys(oj, {"type", "half_width"}, "outer_domain", errors);
            const std::string t = oj.value("type", "none");
            if (t == "none") s.outer_domain = OuterDomainSpec::none();
            else if (t == "box") {
                if (!oj.contains("half_width")) errors.push_back("outer_domain.half_width: required");
                else s.outer_domain = OuterDomainSpec::box(oj["half_width"].get<double>());
            } else errors.push_back("outer_domain.type: unknown '" + t + "'");
        }

        if (j.contains("init_law")) {
            const json& ij = j["init_law"];
            detail::reject_unknown_keys(ij, {"type", "point", "mean", "cov"}, "init_law", errors);
            const std::string t = ij.value("type", "point");
            if (t == "point") {
                s.init_law.kind = InitKind::point;
                if (ij.contains("point"))
                    s.init_law.mean = detail::parse_vector(ij["point"], "init_law.point", errors);
            } else if (t == "gaussian") {
                s.init_law.kind = InitKind::gaussian;
                if (ij.contains("mean"))
                    s.init_law.mean = detail::parse_vector(ij["mean"], "init_law.mean", errors);
                if (!ij.contains("cov")) errors.push_back("init_law.cov: required for gaussian");
                else s.init_law.cov = detail::parse_matrix(ij["cov"], "init_law.cov", errors);
            } else errors.push_back("init_law.type: unknown '" + t + "'");
        }

        if (!j.contains("epsilon_grid")) errors.push_back("epsilon_grid: required");
        else {
            for (const auto& e : j["epsilon_grid"]) s.epsilon_grid.push_back(e.get<double>());
        }

        if (j.contains("run")) {
            const json& rj = j["run"];
            detail::reject_unknown_keys(rj, {"trials", "workers", "seed", "out_dir"}, "run", errors);
            out.run.trials = rj.value("trials", out.run.trials);
            out.run.workers = rj.value("workers", out.run.workers);
            out.run.seed = rj.value("seed", out.run.seed);
            out.run.out_dir = rj.value("out_dir", out.run.out_dir);
        }
    } catch (const json::exception& e) {
        errors.push_back(std::string("config: ") + e.what());
        return out;
    }

    if (errors.empty()) {
        ValidationResult v = validate(s);
        out.spec = std::move(v.spec);
        for (auto& e : v.errors) errors.push_back(std::move(e));
    }
    return out;
}

inline ParsedConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        ParsedConfig bad;
        bad.errors.push_back("config: cannot open '" + path + "'");
        return bad;
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        ParsedConfig bad;
        bad.errors.push_back(std::string("config: parse error: ") + e.what());
        return bad;
    }
    return parse_config(j);
}

// --- trial CSV -------------------------------------------------------------

inline std::string csv_header(int dim) {
    std::string h = "trial_id,epsilon,exit_time,exit_face,exit_sign";
    for (int i = 1; i <= dim; ++i) h += ",exit_x" + std::to_string(i);
    h += ",inner_exit_time,max_transverse_dist,steps,seed";
    return h;
}

inline std::string csv_row(const TrialRecord& r) {
    std::string line = std::to_string(r.trial_id);
    line += ',';
    line += format_double(r.epsilon);
    line += ',';
    line += format_double(r.exit_time);
    line += ',';
    line += std::to_string(r.exit_face);
    line += ',';
    line += std::to_string(r.exit_sign);
    for (int i = 0; i < r.exit_point.size(); ++i) {
        line += ',';
        line += format_double(r.exit_point[i]);
    }
    line += ',';
    if (r.inner_exit_time.has_value()) line += format_double(*r.inner_exit_time);
    line += ',';
    line += format_double(r.max_transverse_dist);
    line += ',';
    line += std::to_string(r.steps);
    line += ',';
    line += std::to_string(r.seed);
    return line;
}

inline std::string records_to_csv(const std::vector<TrialRecord>& records, int dim) {
    std::string out = csv_header(dim);
    out += '\n';
    for (const auto& r : records) {
        out += csv_row(r);
        out += '\n';
    }
    return out;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else
            cur += c;
    }
    fields.push_back(cur);
    return fields;
}

inline std::vector<TrialRecord> read_records_csv(const std::string& path, int expected_dim) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open records file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw InvalidInputError("records file empty: " + path);
    if (line != csv_header(expected_dim))
        throw InvalidInputError("records header does not match dimension " +
                                std::to_string(expected_dim) + ": " + path);
    std::vector<TrialRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        const std::size_t expected_fields = 9 + static_cast<std::size_t>(expected_dim);
        if (f.size() != expected_fields)
            throw InvalidInputError("records row has wrong field count: " + path);
        TrialRecord r;
        std::size_t k = 0;
        r.trial_id = std::stol(f[k++]);
        r.epsilon = parse_double(f[k++]);
        r.exit_time = parse_double(f[k++]);
        r.exit_face = std::stoi(f[k++]);
        r.exit_sign = std::stoi(f[k++]);
        r.exit_point = Vec(expected_dim);
        for (int i = 0; i < expected_dim; ++i) r.exit_point[i] = parse_double(f[k++]);
        if (!f[k].empty()) r.inner_exit_time = parse_double(f[k]);
        ++k;
        r.max_transverse_dist = parse_double(f[k++]);
        r.steps = std::stol(f[k++]);
        r.seed = std::stoull(f[k++]);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace jexit
