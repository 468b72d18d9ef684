#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>

#include "linear_series.hpp"

/// picard-lod command line: problem files in, JSON reports and CSV tables out.
namespace picard_lod::cli {

using nlohmann::json;
using funcspace::SepFunc;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

enum Exit { ok = 0, failure = 1, diverging = 2, inconclusive = 3 };

inline int exit_for(Verdict v) {
    switch (v) {
        case Verdict::converged: return ok;
        case Verdict::diverging: return diverging;
        case Verdict::inconclusive: return inconclusive;
    }
    return failure;
}

class schema_error : public error {
public:
    using error::error;
};

// ---------------------------------------------------------------- source positions

/// Line and column (1-based) of every value and key in a JSON text, by JSON pointer.
class Locator {
public:
    explicit Locator(const std::string& text) : s_(text) {
        try {
            skip();
            value("");
        } catch (...) {
        }
    }

    std::pair<int, int> at(const std::string& pointer) const {
        auto it = pos_.find(pointer);
        if (it != pos_.end()) return line_col(it->second);
        return {1, 1};
    }

    std::pair<int, int> line_col(std::size_t offset) const {
        int line = 1, col = 1;
        for (std::size_t i = 0; i < offset && i < s_.size(); ++i) {
            if (s_[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        return {line, col};
    }

private:
    void skip() {
        while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
    }
    std::string string() {
        std::string out;
        ++i_;
        while (i_ < s_.size() && s_[i_] != '"') {
            if (s_[i_] == '\\') ++i_;
            if (i_ < s_.size()) out += s_[i_++];
        }
        ++i_;
        return out;
    }
    static std::string escape(const std::string& k) {
        std::string r;
        for (char c : k) {
            if (c == '~') r += "~0";
            else if (c == '/') r += "~1";
            else r += c;
        }
        return r;
    }
    void value(const std::string& path) {
        pos_.emplace(path, i_);
        if (i_ >= s_.size()) throw 0;
        char c = s_[i_];
        if (c == '{') {
            ++i_;
            skip();
            while (i_ < s_.size() && s_[i_] != '}') {
                std::size_t kpos = i_;
                if (s_[i_] != '"') throw 0;
                std::string key = path + "/" + escape(string());
                keys_.emplace(key, kpos);
                skip();
                ++i_;
                skip();
                value(key);
                skip();
                if (i_ < s_.size() && s_[i_] == ',') ++i_;
                skip();
            }
            ++i_;
        } else if (c == '[') {
            ++i_;
            skip();
            int n = 0;
            while (i_ < s_.size() && s_[i_] != ']') {
                value(path + "/" + std::to_string(n++));
                skip();
                if (i_ < s_.size() && s_[i_] == ',') ++i_;
                skip();
            }
            ++i_;
        } else if (c == '"') {
            string();
        } else {
            std::size_t start = i_;
            while (i_ < s_.size() && !std::strchr(",]} \t\r\n", s_[i_])) ++i_;
            if (i_ == start) throw 0;
        }
    }

public:
    /// Position of the key itself (falls back to the value).
    std::pair<int, int> key_at(const std::string& pointer) const {
        auto it = keys_.find(pointer);
        if (it != keys_.end()) return line_col(it->second);
        return at(pointer);
    }

private:
    const std::string& s_;
    std::size_t i_ = 0;
    std::map<std::string, std::size_t> pos_, keys_;
};

// ---------------------------------------------------------------- problem files

struct GrowthSpec {
    std::vector<linear_series::GrowthClass> classes;
};

struct CertifySpec {
    std::string method = "weissinger";
    std::vector<int> k_list;
    int n_max = 40;
    picard_pde::LambdaMode mode = picard_pde::LambdaMode::conservative;
};

struct SolverSpec {
    double tol = 1e-12;
    int n_max = 40;
    std::vector<int> k_check{0};
    int degrees = 16;
    std::uint64_t seed = 20240611;
    int k_cap = 12;
    double residual_tol = 1e-7;
    int terms = 20;
};

struct ProblemFile {
    std::string name;
    picard_pde::CauchyProblem pb;
    std::optional<std::vector<linear_series::GrowthClass>> growth;
    funcspace::Radii R = funcspace::Radii::infinite();
    bool radii_finite = false;
    std::optional<double> Q;
    CertifySpec certify;
    SolverSpec solver;
    std::optional<expr::Expr> reference;
};

namespace detail {

class Checker {
public:
    Checker(const std::string& file, const Locator& loc) : file_(file), loc_(loc) {}

    [[noreturn]] void fail(const std::string& pointer, const std::string& msg, bool key = false) const {
        auto [l, c] = key ? loc_.key_at(pointer) : loc_.at(pointer);
        throw schema_error(file_ + ":" + std::to_string(l) + ":" + std::to_string(c) + ": " + msg);
    }

    void keys(const json& j, const std::string& ptr, const std::set<std::string>& allowed,
              const std::set<std::string>& required) const {
        if (!j.is_object()) fail(ptr, "'" + label(ptr) + "' must be an object");
        for (auto& [k, v] : j.items())
            if (!allowed.count(k)) fail(ptr + "/" + k, "unknown key '" + k + "' in " + label(ptr), true);
        for (auto& k : required)
            if (!j.contains(k)) fail(ptr, "missing required key '" + k + "' in " + label(ptr));
    }

    double number(const json& j, const std::string& ptr) const {
        if (!j.is_number()) fail(ptr, "'" + label(ptr) + "' must be a number");
        return j.get<double>();
    }
    int integer(const json& j, const std::string& ptr, int lo = std::numeric_limits<int>::min()) const {
        if (!j.is_number_integer()) fail(ptr, "'" + label(ptr) + "' must be an integer");
        long long v = j.get<long long>();
        if (v < lo || v > std::numeric_limits<int>::max()) fail(ptr, "'" + label(ptr) + "' is out of range");
        return static_cast<int>(v);
    }
    std::string string(const json& j, const std::string& ptr) const {
        if (!j.is_string()) fail(ptr, "'" + label(ptr) + "' must be a string");
        return j.get<std::string>();
    }
    std::vector<int> int_list(const json& j, const std::string& ptr, int lo) const {
        if (!j.is_array() || j.empty()) fail(ptr, "'" + label(ptr) + "' must be a non-empty array of integers");
        std::vector<int> out;
        for (std::size_t i = 0; i < j.size(); ++i) out.push_back(integer(j[i], ptr + "/" + std::to_string(i), lo));
        return out;
    }
    expr::Expr expression(const json& j, const std::string& ptr, const expr::Arity& a) const {
        std::string text = string(j, ptr);
        try {
            return expr::parse(text, a);
        } catch (const expr::parse_error& e) {
            fail(ptr, "in '" + label(ptr) + "': " + e.what());
        } catch (const error& e) {
            fail(ptr, "in '" + label(ptr) + "': " + e.what());
        }
    }

    static std::string label(const std::string& ptr) {
        if (ptr.empty()) return "problem";
        return ptr.substr(1);
    }

private:
    std::string file_;
    const Locator& loc_;
};

}  // namespace detail

inline ProblemFile parse_problem(const std::string& text, const std::string& name = "problem") {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        Locator loc(text);
        auto [l, c] = loc.line_col(e.byte > 0 ? e.byte - 1 : 0);
        std::string msg = e.what();
        auto cut = msg.find("parse error");
        throw schema_error(name + ":" + std::to_string(l) + ":" + std::to_string(c) + ": invalid JSON (" +
                           (cut == std::string::npos ? msg : msg.substr(cut)) + ")");
    }
    Locator loc(text);
    detail::Checker ck(name, loc);
    ck.keys(j, "",
            {"schema_version", "domain", "order", "rhs", "initial", "params", "growth", "radii", "Q", "certify", "solver",
             "reference"},
            {"schema_version", "domain", "order", "rhs", "initial"});
    if (ck.integer(j["schema_version"], "/schema_version") != kSchemaVersion)
        ck.fail("/schema_version", "unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");

    ProblemFile pf;
    pf.name = name;
    auto& pb = pf.pb;
    const json& dj = j["domain"];
    ck.keys(dj, "/domain", {"t0", "a", "b", "S"}, {"a", "b", "S"});
    if (dj.contains("t0")) pb.dom.t0 = ck.number(dj["t0"], "/domain/t0");
    pb.dom.a = ck.number(dj["a"], "/domain/a");
    pb.dom.b = ck.number(dj["b"], "/domain/b");
    if (!dj["S"].is_array()) ck.fail("/domain/S", "'domain/S' must be an array of [lo, hi] pairs");
    for (std::size_t i = 0; i < dj["S"].size(); ++i) {
        std::string p = "/domain/S/" + std::to_string(i);
        const json& iv = dj["S"][i];
        if (!iv.is_array() || iv.size() != 2) ck.fail(p, "each S entry must be a [lo, hi] pair");
        pb.dom.S.push_back({ck.number(iv[0], p + "/0"), ck.number(iv[1], p + "/1")});
    }
    try {
        pb.dom.validate();
    } catch (const error& e) {
        ck.fail("/domain", e.what());
    }

    const json& oj = j["order"];
    ck.keys(oj, "/order", {"d", "p", "L", "m"}, {"d", "L"});
    pb.d = ck.integer(oj["d"], "/order/d", 1);
    pb.L = ck.integer(oj["L"], "/order/L", 0);
    if (oj.contains("p")) pb.p = ck.integer(oj["p"], "/order/p", 0);
    if (oj.contains("m")) pb.m = ck.integer(oj["m"], "/order/m", 1);
    if (pb.p >= pb.d) ck.fail("/order/p", "'order/p' must be below d");

    expr::Arity arity;
    arity.s = static_cast<int>(pb.dom.s());
    arity.m = pb.m;
    arity.L = pb.L;
    arity.p = pb.p;
    if (j.contains("params")) {
        if (!j["params"].is_object()) ck.fail("/params", "'params' must be an object of named constants");
        for (auto& [k, v] : j["params"].items()) arity.params[k] = ck.number(v, "/params/" + k);
    }
    const json& rj = j["rhs"];
    if (rj.is_string()) {
        if (pb.m != 1) ck.fail("/rhs", "'rhs' must list m expressions");
        pb.F.push_back(ck.expression(rj, "/rhs", arity));
    } else if (rj.is_array() && rj.size() == static_cast<std::size_t>(pb.m)) {
        for (std::size_t h = 0; h < rj.size(); ++h) pb.F.push_back(ck.expression(rj[h], "/rhs/" + std::to_string(h), arity));
    } else {
        ck.fail("/rhs", "'rhs' must be an expression string or a list of m strings");
    }

    expr::Arity xa = arity;
    xa.L = 0;
    xa.p = 0;
    const json& ij = j["initial"];
    if (!ij.is_array() || ij.size() != static_cast<std::size_t>(pb.d))
        ck.fail("/initial", "'initial' must list d = " + std::to_string(pb.d) + " initial conditions");
    for (std::size_t jj = 0; jj < ij.size(); ++jj) {
        std::string p = "/initial/" + std::to_string(jj);
        std::vector<expr::Expr> row;
        if (ij[jj].is_string()) {
            if (pb.m != 1) ck.fail(p, "each initial condition must list m expressions");
            row.push_back(ck.expression(ij[jj], p, xa));
        } else if (ij[jj].is_array() && ij[jj].size() == static_cast<std::size_t>(pb.m)) {
            for (std::size_t h = 0; h < ij[jj].size(); ++h)
                row.push_back(ck.expression(ij[jj][h], p + "/" + std::to_string(h), xa));
        } else {
            ck.fail(p, "initial condition must be a string or a list of m strings");
        }
        pb.y0.push_back(row);
    }
    try {
        pb.validate();
    } catch (const error& e) {
        ck.fail("", e.what());
    }

    if (j.contains("growth")) {
        const json& gj = j["growth"];
        if (!gj.is_array() || gj.size() != static_cast<std::size_t>(pb.d))
            ck.fail("/growth", "'growth' must list one class per initial condition");
        std::vector<linear_series::GrowthClass> gs;
        for (std::size_t i = 0; i < gj.size(); ++i) {
            std::string p = "/growth/" + std::to_string(i);
            ck.keys(gj[i], p, {"class", "C", "sigma"}, {"class"});
            std::string cls = ck.string(gj[i]["class"], p + "/class");
            double C = gj[i].contains("C") ? ck.number(gj[i]["C"], p + "/C") : 1.0;
            double sg = gj[i].contains("sigma") ? ck.number(gj[i]["sigma"], p + "/sigma") : 1.0;
            try {
                if (cls == "free") gs.push_back(linear_series::GrowthClass::make_free());
                else if (cls == "exponential") gs.push_back(linear_series::GrowthClass::exponential(C));
                else if (cls == "analytic") gs.push_back(linear_series::GrowthClass::analytic(C));
                else if (cls == "sigma") gs.push_back(linear_series::GrowthClass::sigma_class(sg, C));
                else ck.fail(p + "/class", "unknown growth class '" + cls + "'");
            } catch (const schema_error&) {
                throw;
            } catch (const error& e) {
                ck.fail(p, e.what());
            }
        }
        pf.growth = gs;
    }

    if (j.contains("radii")) {
        const json& rr = j["radii"];
        if (rr.is_string()) {
            if (rr.get<std::string>() != "infinite") ck.fail("/radii", "'radii' string must be \"infinite\"");
        } else if (rr.is_array()) {
            std::vector<double> v;
            for (std::size_t i = 0; i < rr.size(); ++i) {
                double r = ck.number(rr[i], "/radii/" + std::to_string(i));
                if (!(r > 0.0)) ck.fail("/radii/" + std::to_string(i), "radii must be positive");
                v.push_back(r);
            }
            if (v.empty()) ck.fail("/radii", "'radii' list must not be empty");
            pf.R = funcspace::Radii::from_rule([v](int k) { return v[static_cast<std::size_t>(std::min<int>(k, static_cast<int>(v.size()) - 1))]; });
            pf.radii_finite = true;
        } else if (rr.is_object()) {
            ck.keys(rr, "/radii", {"constant"}, {"constant"});
            double r = ck.number(rr["constant"], "/radii/constant");
            if (!(r > 0.0)) ck.fail("/radii/constant", "radii must be positive");
            pf.R = funcspace::Radii::constant(r);
            pf.radii_finite = true;
        } else {
            ck.fail("/radii", "'radii' must be \"infinite\", a list or {\"constant\": r}");
        }
    }
    if (j.contains("Q")) {
        double q = ck.number(j["Q"], "/Q");
        if (q < 0.0) ck.fail("/Q", "'Q' must be non-negative");
        pf.Q = q;
    }

    if (j.contains("solver")) {
        const json& sj = j["solver"];
        ck.keys(sj, "/solver", {"tol", "n_max", "k_check", "degrees", "seed", "k_cap", "residual_tol", "terms"}, {});
        auto& s = pf.solver;
        if (sj.contains("tol")) s.tol = ck.number(sj["tol"], "/solver/tol");
        if (sj.contains("n_max")) s.n_max = ck.integer(sj["n_max"], "/solver/n_max", 1);
        if (sj.contains("k_check")) s.k_check = ck.int_list(sj["k_check"], "/solver/k_check", 0);
        if (sj.contains("degrees")) s.degrees = ck.integer(sj["degrees"], "/solver/degrees", 1);
        if (sj.contains("seed")) s.seed = static_cast<std::uint64_t>(ck.integer(sj["seed"], "/solver/seed", 0));
        if (sj.contains("k_cap")) s.k_cap = ck.integer(sj["k_cap"], "/solver/k_cap", 0);
        if (sj.contains("residual_tol")) s.residual_tol = ck.number(sj["residual_tol"], "/solver/residual_tol");
        if (sj.contains("terms")) s.terms = ck.integer(sj["terms"], "/solver/terms", 0);
    }
    pf.certify.k_list = pf.solver.k_check;
    if (j.contains("certify")) {
        const json& cj = j["certify"];
        ck.keys(cj, "/certify", {"method", "k_list", "n_max", "mode"}, {});
        auto& c = pf.certify;
        if (cj.contains("method")) {
            c.method = ck.string(cj["method"], "/certify/method");
            if (c.method != "weissinger" && c.method != "burgers")
                ck.fail("/certify/method", "unknown certify method '" + c.method + "'");
        }
        if (cj.contains("k_list")) c.k_list = ck.int_list(cj["k_list"], "/certify/k_list", 0);
        if (cj.contains("n_max")) c.n_max = ck.integer(cj["n_max"], "/certify/n_max", 1);
        if (cj.contains("mode")) {
            std::string m = ck.string(cj["mode"], "/certify/mode");
            if (m == "conservative") c.mode = picard_pde::LambdaMode::conservative;
            else if (m == "quadrature") c.mode = picard_pde::LambdaMode::quadrature;
            else if (m == "paper") c.mode = picard_pde::LambdaMode::paper;
            else ck.fail("/certify/mode", "unknown mode '" + m + "'");
        }
    }
    if (j.contains("reference")) {
        expr::Arity ra = xa;
        pf.reference = ck.expression(j["reference"], "/reference", ra);
        auto u = expr::usage(*pf.reference);
        if (!u.placeholders.empty()) ck.fail("/reference", "'reference' may depend on (t, x) only");
    }
    return pf;
}

inline ProblemFile load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error("cannot open problem file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_problem(ss.str(), path);
}

// ---------------------------------------------------------------- reports

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json list(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(number_or_null(x));
    return a;
}

inline json row_json(const graded_core::SeriesRow& r) {
    return {{"k", r.k},
            {"verdict", to_string(r.verdict)},
            {"reason", r.reason},
            {"ratio_limsup", number_or_null(r.ratio_limsup)},
            {"terms", list(r.terms)},
            {"log_terms", list(r.log_terms)},
            {"partial_sums", list(r.partial_sums)}};
}

inline json certificate_json(const graded_core::LodCertificate& c) {
    json rows = json::array();
    for (auto& r : c.rows) rows.push_back(row_json(r));
    return {{"overall", to_string(c.overall)}, {"rows", rows}, {"notes", c.notes}};
}

inline json certificate_json(const picard_pde::PdeCertificate& pc) {
    json j = certificate_json(pc.cert);
    j["lambda_method"] = pc.lambda_method;
    j["mode"] = picard_pde::to_string(pc.mode);
    j["factors_certified"] = pc.factors_certified;
    for (std::size_t i = 0; i < pc.log_lambda.size() && i < j["rows"].size(); ++i) {
        j["rows"][i]["log_lambda"] = list(pc.log_lambda[i]);
        j["rows"][i]["log_increment"] = list(pc.log_increment[i]);
    }
    return j;
}

inline std::string csv_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline std::string certificate_csv(const graded_core::LodCertificate& c, const std::vector<std::vector<double>>& ll = {},
                                   const std::vector<std::vector<double>>& li = {}) {
    std::ostringstream os;
    os << "k,n,log_lambda,log_increment,log_term,term,partial_sum\n";
    for (std::size_t i = 0; i < c.rows.size(); ++i) {
        auto& r = c.rows[i];
        for (std::size_t n = 0; n < r.terms.size(); ++n) {
            double a = i < ll.size() && n < ll[i].size() ? ll[i][n] : std::nan("");
            double b = i < li.size() && n < li[i].size() ? li[i][n] : std::nan("");
            os << r.k << ',' << n << ',' << csv_number(a) << ',' << csv_number(b) << ',' << csv_number(r.log_terms[n])
               << ',' << csv_number(r.terms[n]) << ',' << csv_number(r.partial_sums[n]) << '\n';
        }
    }
    return os.str();
}

// ---------------------------------------------------------------- commands

struct Options {
    std::string out_dir = ".";
    std::optional<picard_pde::LambdaMode> mode;
    std::optional<int> n_max;
    std::optional<int> terms;
    std::string against = "generic";
    std::optional<double> tol;
    bool certify_first = false;
    double a = 1.0;
};

struct Outcome {
    int code = ok;
    std::string summary;
};

namespace detail {

inline void write_file(const fs::path& p, const std::string& content) {
    if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw error("cannot write '" + p.string() + "'");
    out << content;
}

inline std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

inline void write_report(const Options& o, const std::string& base, const std::string& cmd, const json& report,
                         const std::string& csv, Outcome& out) {
    fs::path dir(o.out_dir);
    fs::path jp = dir / (base + "." + cmd + ".json");
    write_file(jp, report.dump(2) + "\n");
    std::string where = jp.string();
    if (!csv.empty()) {
        fs::path cp = dir / (base + "." + cmd + ".csv");
        write_file(cp, csv);
        where += ", " + cp.string();
    }
    out.summary += " (report: " + where + ")";
}

inline std::optional<picard_pde::LipschitzFactors> factors_for(const picard_pde::PicardOperator& op, const ProblemFile& pf) {
    if (picard_pde::linear_coefficients(op.problem())) return picard_pde::estimate_lipschitz_linear(op.problem());
    if (!pf.radii_finite) return std::nullopt;
    picard_pde::SamplingConfig sc;
    sc.seed = pf.solver.seed;
    return picard_pde::estimate_lipschitz_sampled(op, pf.R, sc);
}

inline std::optional<linear_series::LinearProblem> linear_of(const ProblemFile& pf) {
    auto lp = linear_series::from_cauchy(pf.pb);
    if (lp) lp->Q = pf.Q;
    return lp;
}

inline std::function<double(int)> growth_model(const ProblemFile& pf) {
    if (!pf.growth) return {};
    auto lp = linear_of(pf);
    if (!lp) return {};
    return linear_series::increment_log_model(*lp, *pf.growth);
}

inline picard_pde::Discretization disc_of(const ProblemFile& pf) {
    picard_pde::Discretization d;
    d.x_start = pf.solver.degrees;
    return d;
}

inline json header(const std::string& cmd, const std::string& input) {
    return {{"command", cmd}, {"schema_version", kSchemaVersion}, {"input", input}};
}

}  // namespace detail

inline Outcome cmd_certify(const ProblemFile& pf, const Options& o) {
    Outcome out;
    json rep = detail::header("certify", pf.name);
    int n_max = o.n_max.value_or(pf.certify.n_max);
    auto mode = o.mode.value_or(pf.certify.mode);
    std::string csv;
    Verdict overall;
    if (pf.certify.method == "burgers") {
        if (!pf.radii_finite) throw error("burgers certificate needs finite radii");
        auto g = pf.growth ? (*pf.growth)[0] : linear_series::GrowthClass::sigma_class(1.0);
        auto cert = linear_series::burgers_demo(pf.pb, pf.R, pf.certify.k_list, n_max, g);
        rep["method"] = "burgers";
        rep["growth"] = g.name();
        rep["certificate"] = certificate_json(cert);
        csv = certificate_csv(cert);
        overall = cert.overall;
    } else {
        picard_pde::PicardOperator op(pf.pb, detail::disc_of(pf));
        auto lf = detail::factors_for(op, pf);
        if (!lf) throw error("certify needs a right-hand side affine in the placeholders or finite radii");
        auto model = detail::growth_model(pf);
        picard_pde::CertifyOptions opt;
        opt.k_list = pf.certify.k_list;
        opt.n_max = n_max;
        opt.mode = mode;
        opt.truncate_to_available = !model;
        auto pc = picard_pde::certify(op, *lf, pf.solver.k_cap, model, opt);
        rep["method"] = "weissinger";
        rep["lipschitz"] = {{"method", lf->method}, {"certified", lf->certified}, {"meta", lf->meta}};
        rep["growth_model"] = static_cast<bool>(model);
        rep["certificate"] = certificate_json(pc);
        csv = certificate_csv(pc.cert, pc.log_lambda, pc.log_increment);
        overall = pc.cert.overall;
    }
    out.code = exit_for(overall);
    out.summary = std::string("certify: ") + to_string(overall);
    detail::write_report(o, detail::stem(pf.name), "certify", rep, csv, out);
    return out;
}

inline Outcome cmd_solve(const ProblemFile& pf, const Options& o) {
    Outcome out;
    json rep = detail::header("solve", pf.name);
    picard_pde::SolveConfig cfg;
    cfg.R = pf.R;
    cfg.k_check = pf.solver.k_check;
    cfg.tol = pf.solver.tol;
    cfg.n_max = o.n_max.value_or(pf.solver.n_max);
    cfg.certify = true;
    cfg.certify_first = o.certify_first;
    cfg.cert.mode = o.mode.value_or(pf.certify.mode);
    cfg.cert.n_max = pf.certify.n_max;
    cfg.k_cap = pf.solver.k_cap;
    cfg.log_growth_model = detail::growth_model(pf);
    cfg.residual_tol = pf.solver.residual_tol;
    cfg.keep_iterates = false;
    cfg.disc = detail::disc_of(pf);
    {
        picard_pde::PicardOperator op(pf.pb, cfg.disc);
        cfg.factors = detail::factors_for(op, pf);
    }
    picard_pde::SolveReport sr;
    try {
        sr = picard_pde::solve(pf.pb, cfg);
    } catch (const picard_pde::certificate_rejected& e) {
        rep["status"] = "rejected";
        rep["message"] = e.what();
        rep["certificate"] = certificate_json(e.certificate());
        out.code = diverging;
        out.summary = "solve: certificate diverging, iteration not started";
        detail::write_report(o, detail::stem(pf.name), "solve", rep,
                             certificate_csv(e.certificate().cert, e.certificate().log_lambda,
                                             e.certificate().log_increment),
                             out);
        return out;
    }
    rep["status"] = to_string(sr.status);
    rep["steps"] = sr.steps;
    rep["k_check"] = sr.k_check;
    json inc = json::array();
    for (auto& row : sr.increments) inc.push_back(list(row));
    rep["increments"] = inc;
    rep["lipschitz_method"] = sr.lipschitz_method;
    if (sr.certificate) rep["certificate"] = certificate_json(*sr.certificate);
    json ap = json::array();
    for (auto& row : sr.a_posteriori) ap.push_back(list(row));
    rep["a_posteriori"] = ap;
    rep["a_posteriori_estimate"] = sr.a_posteriori_estimate;
    rep["residual"] = {{"pde", number_or_null(sr.residual.pde)}, {"ic", list(sr.residual.ic)}};
    rep["truncation"] = sr.truncation;
    if (!sr.ball_log.empty() && !sr.ball_log.back().all_inside)
        rep["ball_violation"] = {{"k", sr.ball_log.back().first_violation},
                                 {"distance", list(sr.ball_log.back().distance)},
                                 {"radius", list(sr.ball_log.back().radius)}};
    rep["solution"] = funcspace::to_json(sr.solution);
    std::ostringstream csv;
    csv << "n";
    for (int k : sr.k_check) csv << ",increment_k" << k;
    for (std::size_t i = 0; i < sr.a_posteriori.size(); ++i) csv << ",a_posteriori_k" << sr.k_check[i];
    csv << '\n';
    for (std::size_t n = 0; n < sr.increments.size(); ++n) {
        csv << n;
        for (double v : sr.increments[n]) csv << ',' << csv_number(v);
        for (auto& row : sr.a_posteriori) csv << ',' << (n < row.size() ? csv_number(row[n]) : std::string());
        csv << '\n';
    }
    out.code = exit_for(sr.status);
    out.summary = std::string("solve: ") + to_string(sr.status) + " after " + std::to_string(sr.steps) + " steps";
    if (sr.status == Verdict::converged) out.summary += ", residual " + csv_number(sr.residual.pde);
    detail::write_report(o, detail::stem(pf.name), "solve", rep, csv.str(), out);
    return out;
}

inline linear_series::LinearProblem require_linear(const ProblemFile& pf) {
    auto lp = detail::linear_of(pf);
    if (!lp)
        throw error("problem is not of the linear class d_t^d y = p(t) d_x^mu d_t^gamma y + q(t, x) "
                    "(one shared derivative placeholder with t-only coefficients and |mu| > 0)");
    return *lp;
}

inline Outcome cmd_series(const ProblemFile& pf, const Options& o) {
    Outcome out;
    auto lp = require_linear(pf);
    int N = o.terms.value_or(pf.solver.terms);
    if (N < 0) throw error("--terms must be non-negative");
    json rep = detail::header("series", pf.name);
    rep["terms"] = N;
    Verdict v = Verdict::converged;
    if (pf.growth) {
        auto c = linear_series::classify_convergence(lp, *pf.growth, lp.dom.tbar());
        rep["classification"] = {{"verdict", to_string(c.verdict)},
                                 {"admissible_tbar", number_or_null(c.admissible_tbar)},
                                 {"reason", c.reason},
                                 {"numeric", row_json(c.numeric)},
                                 {"corroborated", c.corroborated}};
        v = c.verdict;
        if (v == Verdict::diverging) {
            out.code = diverging;
            out.summary = "series: diverging under the declared growth classes";
            detail::write_report(o, detail::stem(pf.name), "series", rep, "", out);
            return out;
        }
    }
    auto cf = linear_series::closed_form_parts(lp, N, detail::disc_of(pf));
    SepFunc y = cf.sum();
    std::ostringstream csv;
    csv << "h,block_sup\n";
    json blocks = json::array();
    for (std::size_t h = 0; h < cf.blocks.size(); ++h) {
        double b = funcspace::graded_norm(cf.blocks[h], 0);
        blocks.push_back(b);
        csv << h + 1 << ',' << csv_number(b) << '\n';
    }
    rep["block_sup"] = blocks;
    rep["last_term"] = cf.blocks.empty() ? 0.0 : blocks.back().get<double>();
    rep["constant_case"] = cf.constant_case;
    rep["symbolic_derivatives"] = cf.symbolic_derivatives;
    auto res = picard_pde::residual(pf.pb, y);
    rep["residual"] = {{"pde", number_or_null(res.pde)}, {"ic", list(res.ic)}};
    rep["solution"] = funcspace::to_json(y);
    out.code = exit_for(v);
    out.summary = "series: " + std::to_string(N) + " terms, last term " +
                  csv_number(cf.blocks.empty() ? 0.0 : blocks.back().get<double>());
    detail::write_report(o, detail::stem(pf.name), "series", rep, csv.str(), out);
    return out;
}

inline double max_coef_diff(const SepFunc& a, const SepFunc& b) {
    SepFunc d = a - b;
    double w = 0.0;
    for (auto& c : d.coef)
        for (double v : c) w = std::max(w, std::abs(v));
    return w;
}

inline Outcome cmd_compare(const ProblemFile& pf, const Options& o) {
    Outcome out;
    auto lp = require_linear(pf);
    json rep = detail::header("compare", pf.name);
    rep["against"] = o.against;
    auto disc = detail::disc_of(pf);
    std::ostringstream csv;
    double worst = 0.0, tol;
    if (o.against == "generic") {
        int n = o.terms.value_or(6);
        tol = o.tol.value_or(1e-10);
        auto cf = linear_series::closed_form_parts(lp, n, disc);
        picard_pde::PicardOperator op(pf.pb, disc);
        SepFunc it = op.i0(), closed = cf.i0;
        csv << "n,max_coefficient_deviation\n";
        json dev = json::array();
        double d0 = max_coef_diff(closed, it);
        dev.push_back(d0);
        csv << 0 << ',' << csv_number(d0) << '\n';
        worst = d0;
        for (int h = 1; h <= n; ++h) {
            it = op.P(it);
            closed = closed + cf.blocks[static_cast<std::size_t>(h - 1)];
            double d = max_coef_diff(closed, it);
            dev.push_back(d);
            worst = std::max(worst, d);
            csv << h << ',' << csv_number(d) << '\n';
        }
        rep["terms"] = n;
        rep["deviation"] = dev;
    } else if (o.against == "oracle") {
        if (!pf.reference) throw error("compare --against oracle needs a 'reference' expression in the problem file");
        int N = o.terms.value_or(pf.solver.terms);
        tol = o.tol.value_or(1e-8);
        SepFunc y = linear_series::closed_form_parts(lp, N, disc).sum();
        SepFunc ref = linear_series::detail::joint({*pf.reference}, lp.dom, lp.gamma, disc);
        worst = funcspace::graded_norm(y - ref, 0);
        rep["terms"] = N;
        rep["reference"] = expr::to_string(*pf.reference, static_cast<int>(lp.s()));
        rep["max_coefficient_deviation"] = max_coef_diff(y, ref);
        csv << "terms,sup_distance\n" << N << ',' << csv_number(worst) << '\n';
    } else {
        throw error("--against must be 'oracle' or 'generic'");
    }
    rep["max_deviation"] = worst;
    rep["tolerance"] = tol;
    rep["within_tolerance"] = worst <= tol;
    out.code = worst <= tol ? ok : inconclusive;
    out.summary = "compare (" + o.against + "): max deviation " + csv_number(worst);
    detail::write_report(o, detail::stem(pf.name), "compare", rep, csv.str(), out);
    return out;
}

inline Outcome cmd_demo(const std::string& name, const Options& o) {
    Outcome out;
    auto c = linear_series::example_catalog(name, o.a);
    int N = o.terms.value_or(20);
    json rep = detail::header("demo", name);
    rep["a"] = o.a;
    rep["oracle_source"] = c.oracle_source;
    rep["reference"] = expr::to_string(c.reference, 1);
    auto cls = linear_series::classify_convergence(c.problem, c.growth, c.problem.dom.tbar());
    rep["classification"] = {{"verdict", to_string(cls.verdict)}, {"reason", cls.reason}};
    auto s = linear_series::series_solution(c.problem, N, &c.growth);
    SepFunc oracle = c.oracle();
    double dist = funcspace::graded_norm(s.y - oracle, 0);
    auto pb = c.problem.to_cauchy();
    picard_pde::SolveConfig cfg;
    cfg.certify = false;
    cfg.keep_iterates = false;
    auto sr = picard_pde::solve(pb, cfg);
    double gdist = funcspace::graded_norm(sr.solution - oracle, 0);
    auto res = picard_pde::residual(pb, s.y);
    rep["terms"] = N;
    rep["series_oracle_distance"] = dist;
    rep["series_residual"] = number_or_null(res.pde);
    rep["generic_status"] = to_string(sr.status);
    rep["generic_steps"] = sr.steps;
    rep["generic_oracle_distance"] = gdist;
    std::ostringstream csv;
    csv << "path,oracle_distance\nseries," << csv_number(dist) << "\ngeneric," << csv_number(gdist) << '\n';
    bool good = dist <= 1e-8 && gdist <= 1e-8;
    out.code = good ? ok : inconclusive;
    out.summary = "demo " + name + ": oracle distance " + csv_number(dist) + " (series), " + csv_number(gdist) +
                  " (generic)";
    detail::write_report(o, name, "demo", rep, csv.str(), out);
    return out;
}

// ---------------------------------------------------------------- entry point

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Picard iteration with loss of derivatives: solve, certify, series, compare, demo"};
    app.require_subcommand(1);
    Options o;
    std::string file, mode, case_name;
    bool paper_mode = false, timing = false;
    auto common = [&](CLI::App* sc, bool with_file) {
        if (with_file) sc->add_option("file", file, "problem file (JSON)")->required();
        sc->add_option("--out-dir", o.out_dir, "directory for reports")->capture_default_str();
        sc->add_flag("--timing", timing, "print wall-clock time to stderr");
    };
    auto* solve = app.add_subcommand("solve", "run the Picard iteration");
    common(solve, true);
    solve->add_flag("--certify-first", o.certify_first, "refuse to iterate when the certificate diverges");
    auto* certify = app.add_subcommand("certify", "Weissinger certificate");
    common(certify, true);
    auto* series = app.add_subcommand("series", "series solution of a linear problem");
    common(series, true);
    auto* compare = app.add_subcommand("compare", "closed form against generic iteration or oracle");
    common(compare, true);
    compare->add_option("--against", o.against, "oracle|generic")->capture_default_str();
    auto* demo = app.add_subcommand("demo", "catalog case end to end");
    common(demo, false);
    demo->add_option("case", case_name, "heat|wave|transport|mixed_dt_dx|dt2_dx")->required();
    demo->add_option("--a", o.a, "coefficient a")->capture_default_str();
    for (auto* sc : {solve, certify}) {
        sc->add_option("--mode", mode, "conservative|quadrature|paper");
        sc->add_flag("--paper-mode", paper_mode, "closed-form Lambda bar (same as --mode paper)");
        sc->add_option("--nmax", o.n_max, "series length / iteration cap");
    }
    for (auto* sc : {series, compare, demo}) sc->add_option("--terms", o.terms, "number of series terms");
    compare->add_option("--tol", o.tol, "acceptance tolerance");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? ok : failure;
    }
    auto t0 = std::chrono::steady_clock::now();
    try {
        if (!mode.empty()) {
            if (mode == "conservative") o.mode = picard_pde::LambdaMode::conservative;
            else if (mode == "quadrature") o.mode = picard_pde::LambdaMode::quadrature;
            else if (mode == "paper") o.mode = picard_pde::LambdaMode::paper;
            else throw error("unknown --mode '" + mode + "'");
        }
        if (paper_mode) o.mode = picard_pde::LambdaMode::paper;
        Outcome res;
        if (*demo) res = cmd_demo(case_name, o);
        else {
            ProblemFile pf = load_problem(file);
            if (*solve) res = cmd_solve(pf, o);
            else if (*certify) res = cmd_certify(pf, o);
            else if (*series) res = cmd_series(pf, o);
            else res = cmd_compare(pf, o);
        }
        out << res.summary << '\n';
        if (timing)
            err << "elapsed " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
        return res.code;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return failure;
    }
}

}  // namespace picard_lod::cli
