#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pathbsde/functional.hpp"
#include "pathbsde/rng.hpp"

namespace pathbsde {

/// Configuration (schema) error: carries file/section/key context.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Finite atomic jump measure F = sum_k F_k delta_{y_k}; atoms never sit at 0.
struct AtomicJumpMeasure {
    std::vector<std::vector<double>> atoms;  // y_k in R^d, y_k != 0
    std::vector<double> weights;             // F_k > 0  (1/time)

    std::size_t size() const { return atoms.size(); }
    double total_mass() const {
        double m = 0.0;
        for (double w : weights) m += w;
        return m;
    }

    void validate(int dim) const {
        if (atoms.size() != weights.size())
            throw ConfigError("jump measure: atom/weight count mismatch");
        for (const auto& y : atoms) {
            if (static_cast<int>(y.size()) != dim)
                throw ConfigError("jump atom dimension mismatch");
            double norm = 0.0;
            for (double v : y) norm += v * v;
            if (!(norm > 0.0)) throw ConfigError("jump measure must not charge 0");
        }
        for (double w : weights)
            if (!(w > 0.0) || !std::isfinite(w))
                throw ConfigError("jump weights must be positive and finite");
    }
};

enum class DriverKind { Zero, AffineY, AffineZ, Saturating, PolyY };

/// Driver f(t, omega, y, z). AffineY/AffineZ/Saturating are Lipschitz by
/// construction; PolyY exists so that the validator has something honest to
/// reject when the declared Lipschitz constant cannot hold.
struct DriverSpec {
    DriverKind kind = DriverKind::Zero;
    std::vector<double> params;
    double lipschitz = 0.0;

    static DriverSpec zero() { return {DriverKind::Zero, {}, 0.0}; }
    static DriverSpec affine_y(double a, double b) {
        return {DriverKind::AffineY, {a, b}, std::abs(b)};
    }
    static DriverSpec affine_z(double a, std::vector<double> c) {
        double k2 = 0.0;
        for (double v : c) k2 += v * v;
        std::vector<double> p{a};
        p.insert(p.end(), c.begin(), c.end());
        return {DriverKind::AffineZ, std::move(p), std::sqrt(k2)};
    }
    static DriverSpec saturating(double a, double b, double c, double e) {
        return {DriverKind::Saturating, {a, b, c, e}, std::abs(a * b) + std::abs(c * e)};
    }
    static DriverSpec poly_y(std::vector<double> coeffs, double declared_K) {
        return {DriverKind::PolyY, std::move(coeffs), declared_K};
    }

    bool is_zero() const { return kind == DriverKind::Zero; }

    double operator()(double /*t*/, double y, const double* z, int dim) const {
        switch (kind) {
            case DriverKind::Zero:
                return 0.0;
            case DriverKind::AffineY:
                return params[0] + params[1] * y;
            case DriverKind::AffineZ: {
                double acc = params[0];
                for (int i = 0; i < dim; ++i) acc += params[1 + i] * z[i];
                return acc;
            }
            case DriverKind::Saturating: {
                double zn = 0.0;
                for (int i = 0; i < dim; ++i) zn += z[i] * z[i];
                return params[0] * std::tanh(params[1] * y) +
                       params[2] * std::tanh(params[3] * std::sqrt(zn));
            }
            case DriverKind::PolyY:
                return detail::poly_eval(params.data(), params.size(), y);
        }
        throw std::logic_error("unreachable driver kind");
    }
};

/// Non-decreasing continuous clock V given by a piecewise-linear table;
/// identity when the table is empty.
struct ClockTable {
    std::vector<double> t;
    std::vector<double> v;

    bool is_identity() const { return t.empty(); }

    void validate(double horizon) const {
        if (t.empty()) return;
        if (t.size() != v.size() || t.size() < 2)
            throw ConfigError("clock table needs at least two (t, V) pairs");
        if (t.front() != 0.0 || t.back() < horizon)
            throw ConfigError("clock table must cover [0, horizon]");
        for (std::size_t k = 1; k < t.size(); ++k) {
            if (!(t[k] > t[k - 1])) throw ConfigError("clock times must increase");
            if (v[k] < v[k - 1]) throw ConfigError("clock must be non-decreasing");
        }
    }

    double operator()(double time) const {
        if (is_identity()) return time;
        if (time <= t.front()) return v.front();
        if (time >= t.back()) return v.back();
        const auto it = std::upper_bound(t.begin(), t.end(), time);
        const std::size_t k = static_cast<std::size_t>(it - t.begin());
        const double w = (time - t[k - 1]) / (t[k] - t[k - 1]);
        return v[k - 1] + w * (v[k] - v[k - 1]);
    }
};

/// Default numerical budgets, overridable from the CLI.
struct NumericsDefaults {
    int steps = 100;
    int paths = 10000;
    std::uint64_t seed = 1;
    int picard_kmax = 12;
    double picard_tol = 1e-4;
};

/// A full problem instance: coefficients, jump measure, driver, terminal
/// condition, clock and default budgets.
struct ScenarioSpec {
    int schema_version = 1;
    int dim = 1;
    double horizon = 1.0;
    std::vector<FunctionalSpec> beta;                // d entries
    std::vector<FunctionalSpec> sigma;               // d*d entries, row-major
    AtomicJumpMeasure jumps;
    std::vector<std::vector<FunctionalSpec>> gamma;  // per atom: d entries
    DriverSpec driver;
    FunctionalSpec xi = FunctionalSpec::constant(0.0);
    ClockTable clock;
    NumericsDefaults numerics;
    std::vector<FunctionalSpec> z_oracle;            // optional closed-form Z (verification)
    std::optional<FunctionalSpec> y_oracle;          // optional closed-form Y (verification)

    void check_shapes() const {
        if (dim < 1) throw ConfigError("dimension must be >= 1");
        if (!(horizon > 0.0)) throw ConfigError("horizon must be > 0");
        if (static_cast<int>(beta.size()) != dim) throw ConfigError("beta needs d entries");
        if (static_cast<int>(sigma.size()) != dim * dim)
            throw ConfigError("sigma needs d*d entries");
        jumps.validate(dim);
        if (gamma.size() != jumps.size())
            throw ConfigError("gamma needs one entry per jump atom");
        for (const auto& g : gamma)
            if (static_cast<int>(g.size()) != dim)
                throw ConfigError("each gamma entry needs d components");
        for (const auto& f : beta) check_dimensions(f, dim);
        for (const auto& f : sigma) check_dimensions(f, dim);
        for (const auto& g : gamma)
            for (const auto& f : g) check_dimensions(f, dim);
        check_dimensions(xi, dim);
        for (const auto& f : z_oracle) check_dimensions(f, dim);
        if (y_oracle) check_dimensions(*y_oracle, dim);
        clock.validate(horizon);
    }
};

/// Bundle of coefficient sweeps advanced in lockstep along one path; reset
/// per path and pushed node by node (left-point evaluation).
struct CoefficientSweeps {
    std::vector<FunctionalSweep> beta, sigma;         // d and d*d sweeps
    std::vector<std::vector<FunctionalSweep>> gamma;  // per atom, d sweeps

    explicit CoefficientSweeps(const ScenarioSpec& spec) {
        for (const auto& f : spec.beta) beta.emplace_back(f, spec.dim);
        for (const auto& f : spec.sigma) sigma.emplace_back(f, spec.dim);
        for (const auto& g : spec.gamma) {
            auto& row = gamma.emplace_back();
            for (const auto& f : g) row.emplace_back(f, spec.dim);
        }
    }

    void reset() {
        for (auto& s : beta) s.reset();
        for (auto& s : sigma) s.reset();
        for (auto& row : gamma)
            for (auto& s : row) s.reset();
    }

    void push(double t, const double* x) {
        for (auto& s : beta) s.push(t, x);
        for (auto& s : sigma) s.push(t, x);
        for (auto& row : gamma)
            for (auto& s : row) s.push(t, x);
    }
};

// ---------------------------------------------------------------------------
// Scenario file format (schema_version 1): INI-style sections [model],
// [driver], [terminal], [numerics], [verify]; '#' comments; repeatable keys
// "atom" and "gamma" (one per jump atom, in order); all other keys unique.
// Multi-component coefficients are ';'-separated functional expressions.
// ---------------------------------------------------------------------------

namespace detail {

struct IniDoc {
    // section -> list of (key, value, line)
    struct Entry {
        std::string key, value;
        int line;
    };
    std::map<std::string, std::vector<Entry>> sections;
    std::vector<std::string> section_order;

    static IniDoc parse(std::istream& is) {
        IniDoc doc;
        std::string line, section = "";
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t\r");
                const auto b = s.find_last_not_of(" \t\r");
                return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
            };
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
                section = trim(line.substr(1, line.size() - 2));
                if (!doc.sections.count(section)) doc.section_order.push_back(section);
                doc.sections[section];
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(line.substr(0, eq));
            std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": empty key");
            doc.sections[section].push_back({std::move(key), std::move(value), lineno});
        }
        return doc;
    }
};

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::vector<double> parse_numbers(const std::string& s, const std::string& where) {
    std::vector<double> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) {
        try {
            out.push_back(parse_double(tok));
        } catch (const std::exception&) {
            throw ConfigError(where + ": bad number '" + tok + "'");
        }
    }
    return out;
}

/// One pass over a section enforcing known keys and uniqueness (except the
/// listed repeatable keys). Returns key -> entries.
class SectionReader {
public:
    SectionReader(const IniDoc& doc, const std::string& name,
                  std::vector<std::string> known_keys, std::vector<std::string> repeatable = {})
        : name_(name) {
        const auto it = doc.sections.find(name);
        if (it == doc.sections.end()) return;
        present_ = true;
        for (const auto& e : it->second) {
            if (std::find(known_keys.begin(), known_keys.end(), e.key) == known_keys.end())
                throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + e.key +
                                  "' in section [" + name + "]");
            const bool rep =
                std::find(repeatable.begin(), repeatable.end(), e.key) != repeatable.end();
            if (!rep && entries_.count(e.key))
                throw ConfigError("line " + std::to_string(e.line) + ": duplicate key '" +
                                  e.key + "' in section [" + name + "]");
            entries_[e.key].push_back(e);
            seen_.push_back(e.key);
        }
    }

    bool present() const { return present_; }
    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    std::string get(const std::string& key) const {
        const auto it = entries_.find(key);
        if (it == entries_.end())
            throw ConfigError("section [" + name_ + "]: missing key '" + key + "'");
        return it->second.front().value;
    }
    std::string get_or(const std::string& key, const std::string& dflt) const {
        return has(key) ? get(key) : dflt;
    }
    std::vector<std::string> all(const std::string& key) const {
        std::vector<std::string> out;
        const auto it = entries_.find(key);
        if (it != entries_.end())
            for (const auto& e : it->second) out.push_back(e.value);
        return out;
    }

private:
    std::string name_;
    bool present_ = false;
    std::map<std::string, std::vector<IniDoc::Entry>> entries_;
    std::vector<std::string> seen_;
};

inline std::vector<FunctionalSpec> parse_coefficient(const std::string& text, int expected,
                                                     const std::string& where) {
    std::vector<FunctionalSpec> out;
    for (auto& piece : split(text, ';')) {
        try {
            out.push_back(parse_functional(piece));
        } catch (const std::exception& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    if (expected > 0 && static_cast<int>(out.size()) != expected)
        throw ConfigError(where + ": expected " + std::to_string(expected) +
                          " ';'-separated entries, got " + std::to_string(out.size()));
    return out;
}

}  // namespace detail

inline ScenarioSpec load_scenario(std::istream& is) {
    const auto doc = detail::IniDoc::parse(is);

    for (const auto& name : doc.section_order)
        if (name != "" && name != "model" && name != "driver" && name != "terminal" &&
            name != "numerics" && name != "verify")
            throw ConfigError("unknown section [" + name + "]");

    detail::SectionReader top(doc, "", {"schema_version"});
    detail::SectionReader model(doc, "model",
                                {"dimension", "horizon", "beta", "sigma", "atom", "gamma",
                                 "clock"},
                                {"atom", "gamma"});
    detail::SectionReader driver(doc, "driver", {"kind", "params", "lipschitz"});
    detail::SectionReader terminal(doc, "terminal", {"xi"});
    detail::SectionReader numerics(doc, "numerics",
                                   {"steps", "paths", "seed", "picard_kmax", "picard_tol"});
    detail::SectionReader verify(doc, "verify", {"z_oracle", "y_oracle"});

    ScenarioSpec spec;
    if (top.present() && top.has("schema_version")) {
        spec.schema_version = static_cast<int>(parse_double(top.get("schema_version")));
        if (spec.schema_version != 1)
            throw ConfigError("unsupported schema_version " +
                              std::to_string(spec.schema_version));
    }
    if (!model.present()) throw ConfigError("missing section [model]");
    if (!terminal.present()) throw ConfigError("missing section [terminal]");

    spec.dim = static_cast<int>(parse_double(model.get("dimension")));
    spec.horizon = parse_double(model.get("horizon"));
    spec.beta = detail::parse_coefficient(model.get("beta"), spec.dim, "[model] beta");
    spec.sigma = detail::parse_coefficient(model.get("sigma"), spec.dim * spec.dim,
                                           "[model] sigma");

    for (const auto& row : model.all("atom")) {
        const auto nums = detail::parse_numbers(row, "[model] atom");
        if (static_cast<int>(nums.size()) != spec.dim + 1)
            throw ConfigError("[model] atom: expected d values and a weight");
        spec.jumps.atoms.emplace_back(nums.begin(), nums.end() - 1);
        spec.jumps.weights.push_back(nums.back());
    }
    for (const auto& row : model.all("gamma"))
        spec.gamma.push_back(detail::parse_coefficient(row, spec.dim, "[model] gamma"));

    if (model.has("clock")) {
        for (auto& pair : detail::split(model.get("clock"), ',')) {
            const auto nums = detail::parse_numbers(
                [&] {
                    auto p = detail::split(pair, ':');
                    if (p.size() != 2) throw ConfigError("[model] clock: expected t:V pairs");
                    return p[0] + " " + p[1];
                }(),
                "[model] clock");
            spec.clock.t.push_back(nums[0]);
            spec.clock.v.push_back(nums[1]);
        }
    }

    if (driver.present()) {
        const std::string kind = driver.get_or("kind", "zero");
        const auto params = detail::parse_numbers(driver.get_or("params", ""), "[driver] params");
        auto need = [&](std::size_t n) {
            if (params.size() != n)
                throw ConfigError("[driver] params: kind '" + kind + "' needs " +
                                  std::to_string(n) + " parameters");
        };
        if (kind == "zero") {
            need(0);
            spec.driver = DriverSpec::zero();
        } else if (kind == "affine_y") {
            need(2);
            spec.driver = DriverSpec::affine_y(params[0], params[1]);
        } else if (kind == "affine_z") {
            if (static_cast<int>(params.size()) != 1 + spec.dim)
                throw ConfigError("[driver] params: affine_z needs 1+d parameters");
            spec.driver = DriverSpec::affine_z(params[0], {params.begin() + 1, params.end()});
        } else if (kind == "saturating") {
            need(4);
            spec.driver = DriverSpec::saturating(params[0], params[1], params[2], params[3]);
        } else if (kind == "poly_y") {
            if (params.empty()) throw ConfigError("[driver] params: poly_y needs coefficients");
            if (!driver.has("lipschitz"))
                throw ConfigError("[driver] lipschitz: required for kind poly_y");
            spec.driver = DriverSpec::poly_y(params, parse_double(driver.get("lipschitz")));
        } else {
            throw ConfigError("[driver] kind: unknown driver kind '" + kind + "'");
        }
        if (driver.has("lipschitz") && kind != "poly_y")
            spec.driver.lipschitz = parse_double(driver.get("lipschitz"));
    }

    try {
        spec.xi = parse_functional(terminal.get("xi"));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("[terminal] xi: ") + e.what());
    }

    if (numerics.present()) {
        if (numerics.has("steps"))
            spec.numerics.steps = static_cast<int>(parse_double(numerics.get("steps")));
        if (numerics.has("paths"))
            spec.numerics.paths = static_cast<int>(parse_double(numerics.get("paths")));
        if (numerics.has("seed"))
            spec.numerics.seed = static_cast<std::uint64_t>(parse_double(numerics.get("seed")));
        if (numerics.has("picard_kmax"))
            spec.numerics.picard_kmax =
                static_cast<int>(parse_double(numerics.get("picard_kmax")));
        if (numerics.has("picard_tol"))
            spec.numerics.picard_tol = parse_double(numerics.get("picard_tol"));
    }

    if (verify.present()) {
        if (verify.has("z_oracle"))
            spec.z_oracle =
                detail::parse_coefficient(verify.get("z_oracle"), spec.dim, "[verify] z_oracle");
        if (verify.has("y_oracle"))
            spec.y_oracle = detail::parse_coefficient(verify.get("y_oracle"), 1,
                                                      "[verify] y_oracle")[0];
    }

    spec.check_shapes();
    return spec;
}

inline ScenarioSpec load_scenario(const std::string& text) {
    std::istringstream is(text);
    return load_scenario(is);
}

inline std::string save_scenario(const ScenarioSpec& spec) {
    std::ostringstream os;
    os << "schema_version = " << spec.schema_version << "\n\n[model]\n";
    os << "dimension = " << spec.dim << "\n";
    os << "horizon = " << format_double(spec.horizon) << "\n";
    auto coeff = [&](const std::vector<FunctionalSpec>& fs) {
        std::string s;
        for (std::size_t k = 0; k < fs.size(); ++k) {
            if (k) s += " ; ";
            s += format_functional(fs[k]);
        }
        return s;
    };
    os << "beta = " << coeff(spec.beta) << "\n";
    os << "sigma = " << coeff(spec.sigma) << "\n";
    for (std::size_t a = 0; a < spec.jumps.size(); ++a) {
        os << "atom =";
        for (double y : spec.jumps.atoms[a]) os << ' ' << format_double(y);
        os << ' ' << format_double(spec.jumps.weights[a]) << "\n";
    }
    for (const auto& g : spec.gamma) os << "gamma = " << coeff(g) << "\n";
    if (!spec.clock.is_identity()) {
        os << "clock = ";
        for (std::size_t k = 0; k < spec.clock.t.size(); ++k) {
            if (k) os << ", ";
            os << format_double(spec.clock.t[k]) << ':' << format_double(spec.clock.v[k]);
        }
        os << "\n";
    }
    os << "\n[driver]\n";
    switch (spec.driver.kind) {
        case DriverKind::Zero:
            os << "kind = zero\n";
            break;
        case DriverKind::AffineY:
            os << "kind = affine_y\n";
            break;
        case DriverKind::AffineZ:
            os << "kind = affine_z\n";
            break;
        case DriverKind::Saturating:
            os << "kind = saturating\n";
            break;
        case DriverKind::PolyY:
            os << "kind = poly_y\n";
            break;
    }
    if (!spec.driver.params.empty()) {
        os << "params =";
        for (double p : spec.driver.params) os << ' ' << format_double(p);
        os << "\n";
    }
    os << "lipschitz = " << format_double(spec.driver.lipschitz) << "\n";
    os << "\n[terminal]\nxi = " << format_functional(spec.xi) << "\n";
    os << "\n[numerics]\n";
    os << "steps = " << spec.numerics.steps << "\n";
    os << "paths = " << spec.numerics.paths << "\n";
    os << "seed = " << spec.numerics.seed << "\n";
    os << "picard_kmax = " << spec.numerics.picard_kmax << "\n";
    os << "picard_tol = " << format_double(spec.numerics.picard_tol) << "\n";
    if (!spec.z_oracle.empty() || spec.y_oracle) {
        os << "\n[verify]\n";
        if (!spec.z_oracle.empty()) os << "z_oracle = " << coeff(spec.z_oracle) << "\n";
        if (spec.y_oracle) os << "y_oracle = " << format_functional(*spec.y_oracle) << "\n";
    }
    return os.str();
}

}  // namespace pathbsde
