#include "basisrisk/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace basisrisk {

using json = nlohmann::json;

namespace {

struct BuiltinParameter {
    const char* name;
    std::optional<double> fallback;  // empty: must be given
};

const std::map<std::string, std::vector<BuiltinParameter>>& builtin_table() {
    static const std::map<std::string, std::vector<BuiltinParameter>> table{
        {"complete-market-bs",
         {{"mu", 0.05}, {"sigma", 0.2}, {"r0", 100.0}, {"strike", 100.0}, {"horizon", 1.0}, {"eta", 1.0}}},
        // The seasonal drift and volatility of the cHDD index have no
        // defensible default; they must come from the config.
        {"weather-chdd",
         {{"alpha1", std::nullopt},
          {"alpha2", std::nullopt},
          {"beta1", 0.2},
          {"beta2", 0.1},
          {"asset_drift", 0.05},
          {"r0", 100.0},
          {"strike", 100.0},
          {"horizon", 1.0},
          {"eta", 0.05}}},
        {"crack-spread",
         {{"b1", 0.03},
          {"b2", 0.02},
          {"b3", 0.025},
          {"gamma1", 0.3},
          {"gamma2", 0.25},
          {"gamma3", 0.15},
          {"gamma4", 0.1},
          {"beta1", 0.2},
          {"beta2", 0.25},
          {"crude0", 70.0},
          {"kerosene0", 80.0},
          {"strike", 10.0},
          {"horizon", 1.0},
          {"eta", 0.05}}},
    };
    return table;
}

class Problems {
public:
    void add(std::string msg) { list_.push_back(std::move(msg)); }
    bool empty() const { return list_.empty(); }
    std::vector<std::string>& list() { return list_; }

private:
    std::vector<std::string> list_;
};

void reject_unknown(const json& obj, const std::string& where, const std::set<std::string>& allowed, Problems& problems) {
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) problems.add(where + ": unknown key '" + key + "'");
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where, Problems& problems) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        problems.add(where + "." + key + ": wrong type");
    }
}

Matrix to_matrix(const json& j, const std::string& where, Problems& problems) {
    if (j.is_array() && !j.empty() && j.front().is_number()) {
        Matrix out(j.size(), 1);
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (!j[i].is_number()) {
                problems.add(where + ": expected numbers");
                return {};
            }
            out(static_cast<Eigen::Index>(i), 0) = j[i].get<double>();
        }
        return out;
    }
    if (j.is_array() && !j.empty() && j.front().is_array()) {
        const std::size_t cols = j.front().size();
        Matrix out(j.size(), cols);
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (!j[i].is_array() || j[i].size() != cols) {
                problems.add(where + ": rows of unequal length");
                return {};
            }
            for (std::size_t c = 0; c < cols; ++c) {
                if (!j[i][c].is_number()) {
                    problems.add(where + ": expected numbers");
                    return {};
                }
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
            }
        }
        return out;
    }
    problems.add(where + ": expected a non-empty number array");
    return {};
}

CoefficientSpec parse_coefficient(const json& j, const std::string& where, Problems& problems) {
    CoefficientSpec c;
    if (!j.is_object()) {
        problems.add(where + ": expected an object");
        return c;
    }
    reject_unknown(j, where, {"kind", "value", "intercept", "slopes"}, problems);
    const std::string kind = j.value("kind", "");
    if (kind == "constant" || kind == "geometric") {
        c.kind = kind == "constant" ? CoefficientKind::Constant : CoefficientKind::Geometric;
        if (!j.contains("value"))
            problems.add(where + ": '" + kind + "' needs 'value'");
        else
            c.value = to_matrix(j["value"], where + ".value", problems);
    } else if (kind == "linear") {
        c.kind = CoefficientKind::Linear;
        if (!j.contains("intercept") || !j.contains("slopes")) {
            problems.add(where + ": 'linear' needs 'intercept' and 'slopes'");
        } else {
            c.intercept = to_matrix(j["intercept"], where + ".intercept", problems);
            if (!j["slopes"].is_array())
                problems.add(where + ".slopes: expected one entry per index coordinate");
            else
                for (std::size_t i = 0; i < j["slopes"].size(); ++i)
                    c.slopes.push_back(to_matrix(j["slopes"][i], where + ".slopes[" + std::to_string(i) + "]", problems));
        }
    } else {
        problems.add(where + ": kind must be constant, linear or geometric");
    }
    return c;
}

void check_shape(const CoefficientSpec& c, Eigen::Index rows, Eigen::Index cols, int m, const std::string& where,
                 Problems& problems) {
    auto shape = [&](const Matrix& x, const std::string& what) {
        if (x.size() == 0) return;  // already reported
        if (x.rows() != rows || x.cols() != cols) {
            std::ostringstream os;
            os << where << what << ": expected " << rows << " x " << cols << ", got " << x.rows() << " x " << x.cols();
            problems.add(os.str());
        }
    };
    switch (c.kind) {
        case CoefficientKind::Constant: shape(c.value, ".value"); break;
        case CoefficientKind::Geometric:
            shape(c.value, ".value");
            if (rows != m) problems.add(where + ": geometric coefficients need one row per index coordinate");
            break;
        case CoefficientKind::Linear:
            shape(c.intercept, ".intercept");
            if (static_cast<int>(c.slopes.size()) != m)
                problems.add(where + ".slopes: expected " + std::to_string(m) + " entries");
            for (const auto& s : c.slopes) shape(s, ".slopes[]");
            break;
    }
}

std::optional<PayoffConfig> parse_payoff(const json& j, int m, Problems& problems) {
    if (!j.is_object()) {
        problems.add("payoff: expected an object");
        return std::nullopt;
    }
    reject_unknown(j, "payoff",
                   {"type", "coordinate", "long", "short", "strike", "cap", "value", "terms", "coordinates"}, problems);
    PayoffConfig p;
    read(j, "type", p.type, "payoff", problems);
    read(j, "coordinate", p.coordinate, "payoff", problems);
    read(j, "long", p.long_coordinate, "payoff", problems);
    read(j, "short", p.short_coordinate, "payoff", problems);
    read(j, "strike", p.strike, "payoff", problems);
    read(j, "value", p.value, "payoff", problems);
    if (j.contains("cap")) {
        double cap = 0.0;
        read(j, "cap", cap, "payoff", problems);
        p.cap = cap;
        if (!(cap > 0.0)) problems.add("payoff.cap: must be positive");
    }
    const std::string coords = j.value("coordinates", "level");
    if (coords == "level")
        p.coordinates = PayoffCoordinates::Level;
    else if (coords == "exponential")
        p.coordinates = PayoffCoordinates::Exponential;
    else
        problems.add("payoff.coordinates: must be level or exponential");

    static const std::set<std::string> types{"call", "put", "spread-call", "digital", "constant", "polynomial"};
    if (!types.count(p.type)) problems.add("payoff.type: unknown type '" + p.type + "'");
    auto in_range = [&](int c, const char* key) {
        if (c < 0 || c >= m) problems.add(std::string("payoff.") + key + ": index coordinate out of range");
    };
    if (p.type == "call" || p.type == "put" || p.type == "digital") in_range(p.coordinate, "coordinate");
    if (p.type == "spread-call") {
        in_range(p.long_coordinate, "long");
        in_range(p.short_coordinate, "short");
    }
    if (p.type == "polynomial") {
        if (!j.contains("terms") || !j["terms"].is_array() || j["terms"].empty()) {
            problems.add("payoff.terms: polynomial payoffs need a non-empty list of terms");
        } else {
            for (const auto& t : j["terms"]) {
                if (!t.is_object()) {
                    problems.add("payoff.terms: each term must be an object");
                    continue;
                }
                reject_unknown(t, "payoff.terms[]", {"coefficient", "exponents"}, problems);
                Monomial mono;
                read(t, "coefficient", mono.coefficient, "payoff.terms[]", problems);
                read(t, "exponents", mono.exponents, "payoff.terms[]", problems);
                if (static_cast<int>(mono.exponents.size()) != m)
                    problems.add("payoff.terms[]: exponents need one entry per index coordinate");
                for (int e : mono.exponents)
                    if (e < 0) problems.add("payoff.terms[]: exponents must be non-negative");
                p.terms.push_back(mono);
            }
        }
    }
    return p;
}

std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
    int line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    const std::size_t idx = std::min(v.size() - 1, static_cast<std::size_t>(std::ceil(q * v.size())) - 1);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
    return v[idx];
}

CoefficientSpec constant(Matrix value) {
    CoefficientSpec c;
    c.kind = CoefficientKind::Constant;
    c.value = std::move(value);
    return c;
}

CoefficientSpec geometric(Matrix value) {
    CoefficientSpec c;
    c.kind = CoefficientKind::Geometric;
    c.value = std::move(value);
    return c;
}

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix out(rows.size(), rows.begin()->size());
    Eigen::Index i = 0;
    for (const auto& row : rows) {
        Eigen::Index j = 0;
        for (double x : row) out(i, j++) = x;
        ++i;
    }
    return out;
}

Matrix col(std::initializer_list<double> values) {
    Matrix out(values.size(), 1);
    Eigen::Index i = 0;
    for (double x : values) out(i++, 0) = x;
    return out;
}

MarketSpec market_from(const CoefficientSpec& b, const CoefficientSpec& rho, const CoefficientSpec& alpha,
                       const CoefficientSpec& beta, int m, int k, int d, double eta, double horizon) {
    MarketSpec spec;
    spec.m = m;
    spec.k = k;
    spec.d = d;
    spec.eta = eta;
    spec.horizon = horizon;
    spec.time_homogeneous = true;
    spec.index_drift = [b](double, const Vector& r) { return Vector(b.evaluate(r).col(0)); };
    spec.index_vol = [rho](double, const Vector& r) { return rho.evaluate(r); };
    spec.asset_drift = [alpha](double, const Vector& r) { return Vector(alpha.evaluate(r).col(0)); };
    spec.asset_vol = [beta](double, const Vector& r) { return beta.evaluate(r); };
    spec.index_drift_jacobian = [b, m](double, const Vector& r) {
        const auto slices = b.jacobian(r);
        Matrix out(slices.front().rows(), m);
        for (int j = 0; j < m; ++j) out.col(j) = slices[j].col(0);
        return out;
    };
    spec.index_vol_jacobian = [rho](double, const Vector& r) { return rho.jacobian(r); };
    spec.asset_drift_jacobian = [alpha, m](double, const Vector& r) {
        const auto slices = alpha.jacobian(r);
        Matrix out(slices.front().rows(), m);
        for (int j = 0; j < m; ++j) out.col(j) = slices[j].col(0);
        return out;
    };
    spec.asset_vol_jacobian = [beta](double, const Vector& r) { return beta.jacobian(r); };
    return spec;
}

std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

}  // namespace

ConfigValidationError::ConfigValidationError(std::vector<std::string> list)
    : std::runtime_error([&] {
          std::string msg = "invalid configuration:";
          for (const auto& p : list) msg += "\n  - " + p;
          return msg;
      }()),
      problems(std::move(list)) {}

Matrix CoefficientSpec::evaluate(const Vector& r) const {
    switch (kind) {
        case CoefficientKind::Constant: return value;
        case CoefficientKind::Geometric: return r.asDiagonal() * value;
        case CoefficientKind::Linear: {
            Matrix out = intercept;
            for (Eigen::Index j = 0; j < r.size(); ++j) out += r(j) * slopes[j];
            return out;
        }
    }
    return value;
}

std::vector<Matrix> CoefficientSpec::jacobian(const Vector& r) const {
    std::vector<Matrix> out;
    const Matrix& shape = kind == CoefficientKind::Linear ? intercept : value;
    for (Eigen::Index j = 0; j < r.size(); ++j) {
        switch (kind) {
            case CoefficientKind::Constant: out.push_back(Matrix::Zero(shape.rows(), shape.cols())); break;
            case CoefficientKind::Linear: out.push_back(slopes[j]); break;
            case CoefficientKind::Geometric: {
                Matrix slice = Matrix::Zero(shape.rows(), shape.cols());
                slice.row(j) = value.row(j);
                out.push_back(slice);
                break;
            }
        }
    }
    return out;
}

std::string ScenarioConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : source) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return hex64(h);
}

std::vector<std::string> builtin_scenarios() {
    std::vector<std::string> ids;
    for (const auto& [id, _] : builtin_table()) ids.push_back(id);
    return ids;
}

ScenarioConfig parse_config(const std::string& text, const ConfigOverrides& overrides) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, column] = line_column(text, e.byte);
        std::ostringstream os;
        os << "config parse error at line " << line << ", column " << column << ": " << e.what();
        throw ConfigParseError(os.str(), line, column);
    }
    if (!doc.is_object()) throw ConfigParseError("config parse error: top level must be an object", 1, 1);

    if (overrides.seed) doc["solver"]["seed"] = *overrides.seed;
    if (overrides.n_paths) doc["solver"]["n_paths"] = *overrides.n_paths;
    if (overrides.n_steps) doc["solver"]["n_steps"] = *overrides.n_steps;
    if (overrides.out_dir) doc["output"]["dir"] = *overrides.out_dir;
    if (overrides.oracles) {
        doc["oracles"]["pde"] = *overrides.oracles;
        doc["oracles"]["gradient"] = *overrides.oracles;
        doc["oracles"]["mup"] = *overrides.oracles;
    }

    Problems problems;
    ScenarioConfig cfg;
    reject_unknown(doc, "config", {"scenario", "parameters", "market", "payoff", "solver", "oracles", "output"},
                   problems);
    read(doc, "scenario", cfg.scenario, "config", problems);

    const auto& table = builtin_table();
    const bool builtin = table.count(cfg.scenario) > 0;
    if (!builtin && cfg.scenario != "custom")
        problems.add("scenario: unknown id '" + cfg.scenario + "' (built-ins: complete-market-bs, weather-chdd, "
                     "crack-spread; or 'custom' with a market object)");

    if (doc.contains("parameters")) {
        if (!builtin) problems.add("parameters: only built-in scenarios take parameters");
        else if (!doc["parameters"].is_object()) problems.add("parameters: expected an object");
        else
            for (const auto& [key, value] : doc["parameters"].items()) {
                const auto& known = table.at(cfg.scenario);
                const bool ok = std::any_of(known.begin(), known.end(), [&](const auto& p) { return key == p.name; });
                if (!ok) problems.add("parameters: unknown key '" + key + "' for " + cfg.scenario);
                else if (!value.is_number()) problems.add("parameters." + key + ": expected a number");
                else cfg.parameters[key] = value.get<double>();
            }
    }
    if (builtin)
        for (const auto& p : table.at(cfg.scenario)) {
            if (cfg.parameters.count(p.name)) continue;
            if (p.fallback)
                cfg.parameters[p.name] = *p.fallback;
            else
                problems.add("parameters." + std::string(p.name) + ": required for " + cfg.scenario +
                             " (no calibrated default exists)");
        }

    if (builtin && doc.contains("market")) problems.add("market: built-in scenarios are configured via parameters");
    if (!builtin && cfg.scenario == "custom") {
        if (!doc.contains("market") || !doc["market"].is_object()) {
            problems.add("market: a custom scenario needs a market object");
        } else {
            const json& mk = doc["market"];
            reject_unknown(mk, "market",
                           {"m", "k", "d", "t0", "horizon", "eta", "r0", "index_drift", "index_vol", "asset_drift",
                            "asset_vol"},
                           problems);
            for (const char* key : {"m", "k", "d", "r0", "index_drift", "index_vol", "asset_drift", "asset_vol"})
                if (!mk.contains(key)) problems.add(std::string("market.") + key + ": required");
            read(mk, "m", cfg.m, "market", problems);
            read(mk, "k", cfg.k, "market", problems);
            read(mk, "d", cfg.d, "market", problems);
            read(mk, "t0", cfg.t0, "market", problems);
            read(mk, "horizon", cfg.horizon, "market", problems);
            read(mk, "eta", cfg.eta, "market", problems);
            if (mk.contains("r0")) {
                const Matrix r0 = to_matrix(mk["r0"], "market.r0", problems);
                if (r0.cols() == 1) cfg.r0 = r0.col(0);
                else if (r0.size() > 0) problems.add("market.r0: expected a vector");
            }
            if (cfg.m < 1) problems.add("market.m: must be positive");
            if (cfg.k < 1) problems.add("market.k: must be positive");
            if (cfg.d < cfg.k) problems.add("market.d: must be at least k");
            if (!(cfg.eta > 0.0)) problems.add("market.eta: must be positive");
            if (!(cfg.horizon > cfg.t0)) problems.add("market.horizon: must exceed t0");
            if (cfg.r0.size() > 0 && cfg.r0.size() != cfg.m) problems.add("market.r0: expected m entries");
            if (cfg.m >= 1 && cfg.k >= 1 && cfg.d >= 1) {
                if (mk.contains("index_drift")) {
                    cfg.index_drift = parse_coefficient(mk["index_drift"], "market.index_drift", problems);
                    check_shape(cfg.index_drift, cfg.m, 1, cfg.m, "market.index_drift", problems);
                }
                if (mk.contains("index_vol")) {
                    cfg.index_vol = parse_coefficient(mk["index_vol"], "market.index_vol", problems);
                    check_shape(cfg.index_vol, cfg.m, cfg.d, cfg.m, "market.index_vol", problems);
                }
                if (mk.contains("asset_drift")) {
                    cfg.asset_drift = parse_coefficient(mk["asset_drift"], "market.asset_drift", problems);
                    check_shape(cfg.asset_drift, cfg.k, 1, cfg.m, "market.asset_drift", problems);
                }
                if (mk.contains("asset_vol")) {
                    cfg.asset_vol = parse_coefficient(mk["asset_vol"], "market.asset_vol", problems);
                    check_shape(cfg.asset_vol, cfg.k, cfg.d, cfg.m, "market.asset_vol", problems);
                }
            }
        }
    }

    int m = cfg.m;
    if (cfg.scenario == "crack-spread") m = 2;
    else if (builtin) m = 1;
    if (doc.contains("payoff")) cfg.payoff = parse_payoff(doc["payoff"], m, problems);
    else if (!builtin) problems.add("payoff: required for a custom scenario");

    if (doc.contains("solver")) {
        const json& s = doc["solver"];
        if (!s.is_object()) problems.add("solver: expected an object");
        else {
            reject_unknown(s, "solver", {"n_paths", "n_steps", "degree", "seed", "antithetic"}, problems);
            read(s, "n_paths", cfg.solver.n_paths, "solver", problems);
            read(s, "n_steps", cfg.solver.n_steps, "solver", problems);
            read(s, "degree", cfg.solver.degree, "solver", problems);
            read(s, "seed", cfg.solver.seed, "solver", problems);
            read(s, "antithetic", cfg.solver.antithetic, "solver", problems);
        }
    }
    if (cfg.solver.n_paths < 2) problems.add("solver.n_paths: must be at least 2");
    if (cfg.solver.n_steps < 1) problems.add("solver.n_steps: must be at least 1");
    if (cfg.solver.degree < 0 || cfg.solver.degree > 7) problems.add("solver.degree: must lie in 0..7");
    if (cfg.solver.antithetic && cfg.solver.n_paths % 2 != 0)
        problems.add("solver.n_paths: must be even with antithetic sampling");

    if (doc.contains("oracles")) {
        const json& o = doc["oracles"];
        if (!o.is_object()) problems.add("oracles: expected an object");
        else {
            reject_unknown(o, "oracles", {"pde", "pde_nodes", "gradient", "mup", "q_step", "batches"}, problems);
            read(o, "pde", cfg.oracles.pde, "oracles", problems);
            read(o, "pde_nodes", cfg.oracles.pde_nodes, "oracles", problems);
            read(o, "gradient", cfg.oracles.gradient, "oracles", problems);
            read(o, "mup", cfg.oracles.mup, "oracles", problems);
            read(o, "q_step", cfg.oracles.q_step, "oracles", problems);
            read(o, "batches", cfg.oracles.batches, "oracles", problems);
        }
    }
    if (!(cfg.oracles.q_step > 0.0 && cfg.oracles.q_step <= 0.5)) problems.add("oracles.q_step: must lie in (0, 0.5]");
    if (cfg.oracles.batches < 2) problems.add("oracles.batches: must be at least 2");
    if (cfg.oracles.pde_nodes != 0 && cfg.oracles.pde_nodes < 5) problems.add("oracles.pde_nodes: must be 0 or >= 5");

    if (doc.contains("output")) {
        const json& o = doc["output"];
        if (!o.is_object()) problems.add("output: expected an object");
        else {
            reject_unknown(o, "output", {"dir", "max_paths"}, problems);
            read(o, "dir", cfg.output.dir, "output", problems);
            read(o, "max_paths", cfg.output.max_paths, "output", problems);
        }
    }
    if (cfg.output.max_paths < 0) problems.add("output.max_paths: must be non-negative");

    if (builtin) {
        const auto& p = cfg.parameters;
        auto positive = [&](const char* key) {
            if (p.count(key) && !(p.at(key) > 0.0)) problems.add(std::string("parameters.") + key + ": must be positive");
        };
        auto nonzero = [&](const char* key) {
            if (p.count(key) && p.at(key) == 0.0) problems.add(std::string("parameters.") + key + ": must be non-zero");
        };
        positive("horizon");
        positive("eta");
        if (cfg.scenario == "complete-market-bs") {
            positive("sigma");
            positive("r0");
        } else if (cfg.scenario == "weather-chdd") {
            nonzero("alpha2");
            positive("r0");
            if (p.count("beta1") && p.count("beta2") && p.at("beta1") == 0.0 && p.at("beta2") == 0.0)
                problems.add("parameters.beta1/beta2: the traded asset needs non-zero volatility");
        } else if (cfg.scenario == "crack-spread") {
            nonzero("gamma1");
            nonzero("beta2");
            positive("crude0");
            positive("kerosene0");
        }
    }

    if (!problems.empty()) throw ConfigValidationError(std::move(problems.list()));

    json hashed = doc;
    hashed.erase("output");
    cfg.source = hashed.dump();
    return cfg;
}

ScenarioConfig load_config(const std::string& path, const ConfigOverrides& overrides) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), overrides);
}

Payoff build_payoff(const PayoffConfig& pc, const MarketSpec& spec, double t0, const Vector& r0, std::uint64_t seed,
                    std::vector<std::string>& notes) {
    if (pc.type == "constant") return constant_payoff(spec.m, pc.value);
    if (pc.type == "digital") return digital_payoff(pc.coordinate, pc.strike, pc.coordinates);

    double cap = 0.0;
    if (pc.cap) {
        cap = *pc.cap;
    } else {
        // Default cap: ten times the 99.9% quantile of the relevant terminal scale.
        MarketSpec pilot_spec = spec;
        pilot_spec.payoff = zero_payoff(spec.m);
        const PathEnsemble pilot = simulate_paths(pilot_spec, t0, r0, 20000, 50, seed ^ 0x9e3779b97f4a7c15ULL);
        const Matrix& last = pilot.states.back();
        auto level = [&](int path, int coord) {
            const double x = last(coord, path);
            return pc.coordinates == PayoffCoordinates::Exponential ? std::exp(x) : x;
        };
        std::vector<double> scale(pilot.n_paths);
        for (int i = 0; i < pilot.n_paths; ++i) {
            if (pc.type == "spread-call")
                scale[i] = std::abs(level(i, pc.long_coordinate) - level(i, pc.short_coordinate));
            else if (pc.type == "polynomial")
                scale[i] = std::abs(polynomial_payoff(pc.terms, std::numeric_limits<double>::max(), pc.coordinates)(
                    last.col(i)));
            else
                scale[i] = std::abs(level(i, pc.coordinate));
        }
        cap = 10.0 * quantile(scale, 0.999);
        if (!(cap > 0.0)) cap = 1.0;
        std::ostringstream os;
        os << "payoff capped at " << cap << " (10 x the 99.9% quantile of the terminal scale)";
        notes.push_back(os.str());
    }
    if (pc.type == "call") return call_payoff(pc.coordinate, pc.strike, cap, pc.coordinates);
    if (pc.type == "put") return put_payoff(pc.coordinate, pc.strike, cap, pc.coordinates);
    if (pc.type == "spread-call")
        return spread_call_payoff(pc.long_coordinate, pc.short_coordinate, pc.strike, cap, pc.coordinates);
    return polynomial_payoff(pc.terms, cap, pc.coordinates);
}

Scenario build_scenario(const ScenarioConfig& cfg) {
    Scenario sc;
    sc.id = cfg.scenario;
    sc.parameters = cfg.parameters;
    const auto& p = cfg.parameters;
    PayoffConfig default_payoff;

    if (cfg.scenario == "complete-market-bs") {
        const double mu = p.at("mu"), sigma = p.at("sigma");
        // The index is the traded asset itself: R = S.
        sc.spec = market_from(geometric(col({mu})), geometric(mat({{sigma}})), constant(col({mu})),
                              constant(mat({{sigma}})), 1, 1, 1, p.at("eta"), p.at("horizon"));
        sc.r0 = Vector::Constant(1, p.at("r0"));
        default_payoff.type = "call";
        default_payoff.strike = p.at("strike");
    } else if (cfg.scenario == "weather-chdd") {
        sc.spec = market_from(geometric(col({p.at("alpha1")})), geometric(mat({{p.at("alpha2"), 0.0}})),
                              constant(col({p.at("asset_drift")})), constant(mat({{p.at("beta1"), p.at("beta2")}})), 1,
                              1, 2, p.at("eta"), p.at("horizon"));
        sc.r0 = Vector::Constant(1, p.at("r0"));
        default_payoff.type = "call";
        default_payoff.strike = p.at("strike");
    } else if (cfg.scenario == "crack-spread") {
        // Index coordinates are log-prices (r_1 crude oil, r_2 kerosene), so rho is constant.
        const double g1 = p.at("gamma1"), g2 = p.at("gamma2"), g3 = p.at("gamma3"), g4 = p.at("gamma4");
        const double b1 = p.at("beta1"), b2 = p.at("beta2");
        const Matrix drift = col({p.at("b2") - 0.5 * g1 * g1, p.at("b1") - 0.5 * (g2 * g2 + g3 * g3 + g4 * g4)});
        sc.spec = market_from(constant(drift), constant(mat({{g1, 0.0, 0.0}, {g2, g3, g4}})),
                              constant(col({p.at("b2"), p.at("b3")})), constant(mat({{g1, 0.0, 0.0}, {b1, b2, 0.0}})),
                              2, 2, 3, p.at("eta"), p.at("horizon"));
        sc.r0 = Vector(2);
        sc.r0 << std::log(p.at("crude0")), std::log(p.at("kerosene0"));
        default_payoff.type = "spread-call";
        default_payoff.long_coordinate = 1;
        default_payoff.short_coordinate = 0;
        default_payoff.strike = p.at("strike");
        default_payoff.coordinates = PayoffCoordinates::Exponential;
    } else {
        sc.spec = market_from(cfg.index_drift, cfg.index_vol, cfg.asset_drift, cfg.asset_vol, cfg.m, cfg.k, cfg.d,
                              cfg.eta, cfg.horizon);
        sc.r0 = cfg.r0;
        sc.t0 = cfg.t0;
    }
    sc.spec.payoff = build_payoff(cfg.payoff.value_or(default_payoff), sc.spec, sc.t0, sc.r0, cfg.solver.seed, sc.notes);
    sc.spec.validate();
    return sc;
}

}  // namespace basisrisk
