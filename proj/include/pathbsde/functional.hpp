#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pathbsde/path.hpp"

namespace pathbsde {

/// Closed catalog of path functionals. Scenario files stay declarative:
/// coefficients, terminal conditions and regression features are all drawn
/// from this catalog, so every run is reproducible from its config alone.
enum class FunctionalKind {
    Constant,         // const(c)
    Coordinate,       // coord(i)                       omega_i(t)
    CurrentPoly,      // poly(i, c0..cp)                sum_k c_k omega_i(t)^k
    RunningIntegral,  // runint(i)                      int_0^t omega_i(r) dr
    RunningMax,       // runmax(i[, cap])               min(cap, max_{r<=t} |omega_i(r)|)
    Product,          // prod(u, v)
    Sum,              // sum(u1, .., un)
    ScalarMultiple,   // scale(a, u)
    TimeWeighted,     // tpoly(u, w0..wq)               (w0 + w1 t + ..) * u
};

struct FunctionalSpec {
    FunctionalKind kind = FunctionalKind::Constant;
    std::vector<double> params;
    std::vector<FunctionalSpec> children;

    static FunctionalSpec constant(double c) { return {FunctionalKind::Constant, {c}, {}}; }
    static FunctionalSpec coordinate(int i) {
        return {FunctionalKind::Coordinate, {static_cast<double>(i)}, {}};
    }
    static FunctionalSpec current_poly(int i, std::vector<double> coeffs) {
        std::vector<double> p{static_cast<double>(i)};
        p.insert(p.end(), coeffs.begin(), coeffs.end());
        return {FunctionalKind::CurrentPoly, std::move(p), {}};
    }
    static FunctionalSpec running_integral(int i) {
        return {FunctionalKind::RunningIntegral, {static_cast<double>(i)}, {}};
    }
    static FunctionalSpec running_max(int i) {
        return {FunctionalKind::RunningMax, {static_cast<double>(i)}, {}};
    }
    static FunctionalSpec running_max(int i, double cap) {
        return {FunctionalKind::RunningMax, {static_cast<double>(i), cap}, {}};
    }
    static FunctionalSpec product(FunctionalSpec u, FunctionalSpec v) {
        return {FunctionalKind::Product, {}, {std::move(u), std::move(v)}};
    }
    static FunctionalSpec sum(std::vector<FunctionalSpec> terms) {
        return {FunctionalKind::Sum, {}, std::move(terms)};
    }
    static FunctionalSpec scale(double a, FunctionalSpec u) {
        return {FunctionalKind::ScalarMultiple, {a}, {std::move(u)}};
    }
    static FunctionalSpec time_weighted(FunctionalSpec u, std::vector<double> tcoeffs) {
        return {FunctionalKind::TimeWeighted, std::move(tcoeffs), {std::move(u)}};
    }

    int coord_index() const { return static_cast<int>(params.at(0)); }
};

namespace detail {

inline double poly_eval(const double* c, std::size_t n, double x) {
    double v = 0.0;
    for (std::size_t k = n; k-- > 0;) v = v * x + c[k];
    return v;
}
inline double poly_eval_d1(const double* c, std::size_t n, double x) {
    double v = 0.0;
    for (std::size_t k = n; k-- > 1;) v = v * x + k * c[k];
    return v;
}
inline double poly_eval_d2(const double* c, std::size_t n, double x) {
    double v = 0.0;
    for (std::size_t k = n; k-- > 2;) v = v * x + k * (k - 1) * c[k];
    return v;
}

}  // namespace detail

/// Whether the functional (including all children) carries closed-form
/// Dupire derivatives. Running maxima do not (kinks).
inline bool has_closed_form(const FunctionalSpec& f) {
    if (f.kind == FunctionalKind::RunningMax) return false;
    for (const auto& c : f.children)
        if (!has_closed_form(c)) return false;
    return true;
}

/// Polynomial-growth declaration |Phi_t| <= C (1 + sup_{r<=t} |omega(r)|^p).
struct GrowthDecl {
    double C = 0.0;
    int p = 1;
};

inline GrowthDecl growth(const FunctionalSpec& f, double horizon) {
    switch (f.kind) {
        case FunctionalKind::Constant:
            return {std::max(std::abs(f.params[0]), 1e-300), 1};
        case FunctionalKind::Coordinate:
            return {1.0, 1};
        case FunctionalKind::CurrentPoly: {
            double c = 0.0;
            for (std::size_t k = 1; k < f.params.size(); ++k) c += std::abs(f.params[k]);
            const int deg = std::max<int>(1, static_cast<int>(f.params.size()) - 2);
            return {std::max(c, 1e-300), deg};
        }
        case FunctionalKind::RunningIntegral:
            return {std::max(horizon, 1.0), 1};
        case FunctionalKind::RunningMax:
            return {f.params.size() > 1 ? std::max(f.params[1], 1e-300) : 1.0, 1};
        case FunctionalKind::Product: {
            const auto u = growth(f.children[0], horizon);
            const auto v = growth(f.children[1], horizon);
            return {3.0 * u.C * v.C, u.p + v.p};
        }
        case FunctionalKind::Sum: {
            double c = 0.0;
            int p = 1;
            for (const auto& t : f.children) {
                const auto g = growth(t, horizon);
                c += g.C;
                p = std::max(p, g.p);
            }
            return {2.0 * std::max(c, 1e-300), p};
        }
        case FunctionalKind::ScalarMultiple: {
            const auto g = growth(f.children[0], horizon);
            return {std::max(std::abs(f.params[0]) * g.C, 1e-300), g.p};
        }
        case FunctionalKind::TimeWeighted: {
            const auto g = growth(f.children[0], horizon);
            double wmax = 0.0;
            for (int k = 0; k <= 256; ++k) {
                const double t = horizon * k / 256.0;
                wmax = std::max(wmax, std::abs(detail::poly_eval(f.params.data(),
                                                                 f.params.size(), t)));
            }
            return {std::max(wmax * g.C, 1e-300), g.p};
        }
    }
    throw std::logic_error("unreachable functional kind");
}

/// Uniform bound over all paths, when one is declared by the structure
/// (constants, capped running maxima, and their closed combinations).
inline std::optional<double> uniform_bound(const FunctionalSpec& f, double horizon) {
    switch (f.kind) {
        case FunctionalKind::Constant:
            return std::abs(f.params[0]);
        case FunctionalKind::Coordinate:
        case FunctionalKind::RunningIntegral:
            return std::nullopt;
        case FunctionalKind::CurrentPoly:
            if (f.params.size() <= 2) return std::abs(f.params.size() == 2 ? f.params[1] : 0.0);
            return std::nullopt;
        case FunctionalKind::RunningMax:
            if (f.params.size() > 1) return f.params[1];
            return std::nullopt;
        case FunctionalKind::Product: {
            const auto u = uniform_bound(f.children[0], horizon);
            const auto v = uniform_bound(f.children[1], horizon);
            if (u && v) return *u * *v;
            return std::nullopt;
        }
        case FunctionalKind::Sum: {
            double b = 0.0;
            for (const auto& t : f.children) {
                const auto c = uniform_bound(t, horizon);
                if (!c) return std::nullopt;
                b += *c;
            }
            return b;
        }
        case FunctionalKind::ScalarMultiple: {
            const auto u = uniform_bound(f.children[0], horizon);
            if (u) return std::abs(f.params[0]) * *u;
            return std::nullopt;
        }
        case FunctionalKind::TimeWeighted: {
            const auto u = uniform_bound(f.children[0], horizon);
            if (!u) return std::nullopt;
            double wmax = 0.0;
            for (int k = 0; k <= 256; ++k) {
                const double t = horizon * k / 256.0;
                wmax = std::max(wmax, std::abs(detail::poly_eval(f.params.data(),
                                                                 f.params.size(), t)));
            }
            return wmax * *u;
        }
    }
    throw std::logic_error("unreachable functional kind");
}

/// Rejects coordinate indices outside [0, dim) anywhere in the tree.
inline void check_dimensions(const FunctionalSpec& f, int dim) {
    switch (f.kind) {
        case FunctionalKind::Coordinate:
        case FunctionalKind::CurrentPoly:
        case FunctionalKind::RunningIntegral:
        case FunctionalKind::RunningMax: {
            const int i = f.coord_index();
            if (i < 0 || i >= dim)
                throw std::invalid_argument("coordinate index " + std::to_string(i) +
                                            " out of range for dimension " + std::to_string(dim));
            break;
        }
        default:
            break;
    }
    for (const auto& c : f.children) check_dimensions(c, dim);
}

// ---------------------------------------------------------------------------
// Point evaluation at (t, path). All kinds read the path only on [0, t], so
// the result matches evaluation on the stopped path; functionals are frozen
// after the horizon (t is clamped to it).
// ---------------------------------------------------------------------------

inline double evaluate_functional(const FunctionalSpec& f, double t, const CadlagPath& path) {
    t = std::min(t, path.horizon());
    switch (f.kind) {
        case FunctionalKind::Constant:
            return f.params[0];
        case FunctionalKind::Coordinate:
            return path.evaluate(t, f.coord_index());
        case FunctionalKind::CurrentPoly:
            return detail::poly_eval(f.params.data() + 1, f.params.size() - 1,
                                     path.evaluate(t, f.coord_index()));
        case FunctionalKind::RunningIntegral: {
            const int i = f.coord_index();
            const std::size_t last = path.node_index(t);
            double acc = 0.0;
            for (std::size_t k = 0; k < last; ++k)
                acc += path.value(k)[i] * (path.time(k + 1) - path.time(k));
            acc += path.value(last)[i] * (t - path.time(last));
            return acc;
        }
        case FunctionalKind::RunningMax: {
            const int i = f.coord_index();
            const std::size_t last = path.node_index(t);
            double m = 0.0;
            for (std::size_t k = 0; k <= last; ++k) m = std::max(m, std::abs(path.value(k)[i]));
            if (f.params.size() > 1) m = std::min(m, f.params[1]);
            return m;
        }
        case FunctionalKind::Product:
            return evaluate_functional(f.children[0], t, path) *
                   evaluate_functional(f.children[1], t, path);
        case FunctionalKind::Sum: {
            double acc = 0.0;
            for (const auto& c : f.children) acc += evaluate_functional(c, t, path);
            return acc;
        }
        case FunctionalKind::ScalarMultiple:
            return f.params[0] * evaluate_functional(f.children[0], t, path);
        case FunctionalKind::TimeWeighted:
            return detail::poly_eval(f.params.data(), f.params.size(), t) *
                   evaluate_functional(f.children[0], t, path);
    }
    throw std::logic_error("unreachable functional kind");
}

// ---------------------------------------------------------------------------
// Incremental sweep: pushes grid nodes (t_k, x_k) in order and exposes, at the
// current node, the value, an O(1) evaluation under a vertical bump of the
// current value, and closed-form Dupire derivatives where declared.
// ---------------------------------------------------------------------------

class FunctionalSweep {
public:
    FunctionalSweep(const FunctionalSpec& spec, int dim)
        : spec_(&spec), dim_(dim), closed_(pathbsde::has_closed_form(spec)) {
        check_dimensions(spec, dim);
        root_ = build(spec);
        reset();
    }

    void reset() {
        reset_node(*root_);
        have_prev_ = false;
    }

    /// Advance to the node (t, x); nodes must arrive in strictly increasing
    /// time order starting from the path's first node.
    void push(double t, const double* x) {
        push_node(*root_, t, x);
        prev_t_ = t;
        have_prev_ = true;
    }

    double value() const { return node_value(*root_); }

    /// Phi at the current node with the current value replaced by xnew,
    /// i.e. under the vertical bump (xnew - x) applied at the current time.
    double value_replaced(const double* xnew) const { return node_replaced(*root_, xnew); }

    bool closed_form() const { return closed_; }

    /// Vertical gradient at the current node (closed form). out has size dim.
    void gradient(double* out) const {
        require_closed();
        std::fill(out, out + dim_, 0.0);
        node_gradient(*root_, out, 1.0);
    }

    /// Vertical Hessian, row-major dim x dim (closed form).
    void hessian(double* out) const {
        require_closed();
        std::fill(out, out + dim_ * dim_, 0.0);
        node_hessian(*root_, out, 1.0);
    }

    /// Horizontal (right time) derivative at the current node (closed form).
    double horizontal() const {
        require_closed();
        return node_horizontal(*root_);
    }

private:
    struct Node {
        FunctionalKind kind;
        int coord = 0;
        const double* params = nullptr;  // borrowed from the spec
        std::size_t n_params = 0;
        double cap = std::numeric_limits<double>::infinity();
        std::vector<std::unique_ptr<Node>> children;
        // state
        double cur_t = 0.0;
        double cur_x = 0.0;      // current coordinate value (leaf kinds)
        double accum = 0.0;      // running integral
        double max_before = 0.0; // running max over r < t
        double max_incl = 0.0;   // running max over r <= t
        double val = 0.0;
    };

    std::unique_ptr<Node> build(const FunctionalSpec& f) {
        auto n = std::make_unique<Node>();
        n->kind = f.kind;
        n->params = f.params.data();
        n->n_params = f.params.size();
        switch (f.kind) {
            case FunctionalKind::Coordinate:
            case FunctionalKind::CurrentPoly:
            case FunctionalKind::RunningIntegral:
            case FunctionalKind::RunningMax:
                n->coord = f.coord_index();
                if (f.kind == FunctionalKind::RunningMax && f.params.size() > 1)
                    n->cap = f.params[1];
                break;
            default:
                break;
        }
        for (const auto& c : f.children) n->children.push_back(build(c));
        return n;
    }

    static void reset_node(Node& n) {
        n.accum = 0.0;
        n.max_before = 0.0;
        n.max_incl = 0.0;
        n.cur_t = 0.0;
        n.cur_x = 0.0;
        n.val = 0.0;
        for (auto& c : n.children) reset_node(*c);
    }

    void push_node(Node& n, double t, const double* x) const {
        switch (n.kind) {
            case FunctionalKind::Constant:
                n.val = n.params[0];
                break;
            case FunctionalKind::Coordinate:
                n.cur_x = x[n.coord];
                n.val = n.cur_x;
                break;
            case FunctionalKind::CurrentPoly:
                n.cur_x = x[n.coord];
                n.val = detail::poly_eval(n.params + 1, n.n_params - 1, n.cur_x);
                break;
            case FunctionalKind::RunningIntegral:
                if (have_prev_) n.accum += n.cur_x * (t - prev_t_);
                n.cur_x = x[n.coord];
                n.val = n.accum;
                break;
            case FunctionalKind::RunningMax:
                n.max_before = n.max_incl;
                n.cur_x = x[n.coord];
                n.max_incl = std::max(n.max_incl, std::abs(n.cur_x));
                n.val = std::min(n.cap, n.max_incl);
                break;
            case FunctionalKind::Product:
                push_node(*n.children[0], t, x);
                push_node(*n.children[1], t, x);
                n.val = n.children[0]->val * n.children[1]->val;
                break;
            case FunctionalKind::Sum: {
                double acc = 0.0;
                for (auto& c : n.children) {
                    push_node(*c, t, x);
                    acc += c->val;
                }
                n.val = acc;
                break;
            }
            case FunctionalKind::ScalarMultiple:
                push_node(*n.children[0], t, x);
                n.val = n.params[0] * n.children[0]->val;
                break;
            case FunctionalKind::TimeWeighted:
                push_node(*n.children[0], t, x);
                n.val = detail::poly_eval(n.params, n.n_params, t) * n.children[0]->val;
                break;
        }
        n.cur_t = t;
    }

    static double node_value(const Node& n) { return n.val; }

    static double node_replaced(const Node& n, const double* xnew) {
        switch (n.kind) {
            case FunctionalKind::Constant:
                return n.params[0];
            case FunctionalKind::Coordinate:
                return xnew[n.coord];
            case FunctionalKind::CurrentPoly:
                return detail::poly_eval(n.params + 1, n.n_params - 1, xnew[n.coord]);
            case FunctionalKind::RunningIntegral:
                return n.accum;
            case FunctionalKind::RunningMax:
                return std::min(n.cap, std::max(n.max_before, std::abs(xnew[n.coord])));
            case FunctionalKind::Product:
                return node_replaced(*n.children[0], xnew) * node_replaced(*n.children[1], xnew);
            case FunctionalKind::Sum: {
                double acc = 0.0;
                for (const auto& c : n.children) acc += node_replaced(*c, xnew);
                return acc;
            }
            case FunctionalKind::ScalarMultiple:
                return n.params[0] * node_replaced(*n.children[0], xnew);
            case FunctionalKind::TimeWeighted:
                return detail::poly_eval(n.params, n.n_params, n.cur_t) *
                       node_replaced(*n.children[0], xnew);
        }
        throw std::logic_error("unreachable functional kind");
    }

    // gradient accumulates scale * grad(node) into out
    void node_gradient(const Node& n, double* out, double scale) const {
        switch (n.kind) {
            case FunctionalKind::Constant:
            case FunctionalKind::RunningIntegral:
                return;
            case FunctionalKind::Coordinate:
                out[n.coord] += scale;
                return;
            case FunctionalKind::CurrentPoly:
                out[n.coord] += scale * detail::poly_eval_d1(n.params + 1, n.n_params - 1, n.cur_x);
                return;
            case FunctionalKind::Product:
                node_gradient(*n.children[0], out, scale * n.children[1]->val);
                node_gradient(*n.children[1], out, scale * n.children[0]->val);
                return;
            case FunctionalKind::Sum:
                for (const auto& c : n.children) node_gradient(*c, out, scale);
                return;
            case FunctionalKind::ScalarMultiple:
                node_gradient(*n.children[0], out, scale * n.params[0]);
                return;
            case FunctionalKind::TimeWeighted:
                node_gradient(*n.children[0], out,
                              scale * detail::poly_eval(n.params, n.n_params, n.cur_t));
                return;
            case FunctionalKind::RunningMax:
                throw std::logic_error("no closed-form gradient for running max");
        }
    }

    void node_hessian(const Node& n, double* out, double scale) const {
        switch (n.kind) {
            case FunctionalKind::Constant:
            case FunctionalKind::Coordinate:
            case FunctionalKind::RunningIntegral:
                return;
            case FunctionalKind::CurrentPoly:
                out[n.coord * dim_ + n.coord] +=
                    scale * detail::poly_eval_d2(n.params + 1, n.n_params - 1, n.cur_x);
                return;
            case FunctionalKind::Product: {
                const Node& u = *n.children[0];
                const Node& v = *n.children[1];
                node_hessian(u, out, scale * v.val);
                node_hessian(v, out, scale * u.val);
                std::vector<double> gu(dim_, 0.0), gv(dim_, 0.0);
                node_gradient(u, gu.data(), 1.0);
                node_gradient(v, gv.data(), 1.0);
                for (int i = 0; i < dim_; ++i)
                    for (int j = 0; j < dim_; ++j)
                        out[i * dim_ + j] += scale * (gu[i] * gv[j] + gv[i] * gu[j]);
                return;
            }
            case FunctionalKind::Sum:
                for (const auto& c : n.children) node_hessian(*c, out, scale);
                return;
            case FunctionalKind::ScalarMultiple:
                node_hessian(*n.children[0], out, scale * n.params[0]);
                return;
            case FunctionalKind::TimeWeighted:
                node_hessian(*n.children[0], out,
                             scale * detail::poly_eval(n.params, n.n_params, n.cur_t));
                return;
            case FunctionalKind::RunningMax:
                throw std::logic_error("no closed-form hessian for running max");
        }
    }

    double node_horizontal(const Node& n) const {
        switch (n.kind) {
            case FunctionalKind::Constant:
            case FunctionalKind::Coordinate:
            case FunctionalKind::CurrentPoly:
                return 0.0;
            case FunctionalKind::RunningIntegral:
                return n.cur_x;  // extending the frozen path accrues at the held value
            case FunctionalKind::Product:
                return node_horizontal(*n.children[0]) * n.children[1]->val +
                       n.children[0]->val * node_horizontal(*n.children[1]);
            case FunctionalKind::Sum: {
                double acc = 0.0;
                for (const auto& c : n.children) acc += node_horizontal(*c);
                return acc;
            }
            case FunctionalKind::ScalarMultiple:
                return n.params[0] * node_horizontal(*n.children[0]);
            case FunctionalKind::TimeWeighted:
                return detail::poly_eval_d1(n.params, n.n_params, n.cur_t) * n.children[0]->val +
                       detail::poly_eval(n.params, n.n_params, n.cur_t) *
                           node_horizontal(*n.children[0]);
            case FunctionalKind::RunningMax:
                throw std::logic_error("no closed-form horizontal derivative for running max");
        }
        throw std::logic_error("unreachable functional kind");
    }

    void require_closed() const {
        if (!closed_)
            throw std::logic_error("functional does not declare closed-form derivatives");
    }

    const FunctionalSpec* spec_;
    int dim_;
    bool closed_;
    std::unique_ptr<Node> root_;
    double prev_t_ = 0.0;
    bool have_prev_ = false;
};

/// Pushes every node of a path up to (and including) index `last` into the
/// sweep; convenience for whole-path evaluations.
inline void sweep_path(FunctionalSweep& sweep, const CadlagPath& p, std::size_t last) {
    sweep.reset();
    for (std::size_t k = 0; k <= last; ++k) sweep.push(p.time(k), p.value(k).data());
}

// ---------------------------------------------------------------------------
// Expression grammar:  name(arg, arg, ...) with numeric or nested arguments.
// ---------------------------------------------------------------------------

namespace detail {

struct ExprParser {
    std::string_view text;
    std::size_t pos = 0;

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }
    [[noreturn]] void fail(const std::string& what) {
        throw std::invalid_argument("functional expression error at offset " +
                                    std::to_string(pos) + ": " + what);
    }
    bool eat(char c) {
        skip_ws();
        if (pos < text.size() && text[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    std::string ident() {
        skip_ws();
        std::size_t start = pos;
        while (pos < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
            ++pos;
        if (start == pos) fail("expected identifier");
        return std::string(text.substr(start, pos - start));
    }
    double number() {
        skip_ws();
        std::size_t start = pos;
        while (pos < text.size() && (std::isdigit(static_cast<unsigned char>(text[pos])) ||
                                     text[pos] == '+' || text[pos] == '-' || text[pos] == '.' ||
                                     text[pos] == 'e' || text[pos] == 'E' ||
                                     text[pos] == 'i' || text[pos] == 'n' || text[pos] == 'f'))
            ++pos;
        if (start == pos) fail("expected number");
        const auto tok = text.substr(start, pos - start);
        if (tok == "inf") return std::numeric_limits<double>::infinity();
        try {
            return parse_double(tok);
        } catch (const std::exception& e) {
            fail(e.what());
        }
    }

    FunctionalSpec expr() {
        const std::string name = ident();
        if (!eat('(')) fail("expected '(' after '" + name + "'");
        std::vector<FunctionalSpec> children;
        std::vector<double> numbers;
        skip_ws();
        if (!eat(')')) {
            do {
                skip_ws();
                if (pos < text.size() && std::isalpha(static_cast<unsigned char>(text[pos])) &&
                    text.substr(pos, 3) != "inf")
                    children.push_back(expr());
                else
                    numbers.push_back(number());
            } while (eat(','));
            if (!eat(')')) fail("expected ')'");
        }
        return assemble(name, std::move(children), std::move(numbers));
    }

    FunctionalSpec assemble(const std::string& name, std::vector<FunctionalSpec> children,
                            std::vector<double> numbers) {
        auto want = [&](bool ok, const char* sig) {
            if (!ok) fail("bad arguments for '" + name + "' (expected " + sig + ")");
        };
        if (name == "const") {
            want(children.empty() && numbers.size() == 1, "const(c)");
            return FunctionalSpec::constant(numbers[0]);
        }
        if (name == "coord") {
            want(children.empty() && numbers.size() == 1, "coord(i)");
            return FunctionalSpec::coordinate(static_cast<int>(numbers[0]));
        }
        if (name == "poly") {
            want(children.empty() && numbers.size() >= 2, "poly(i, c0, ...)");
            const int i = static_cast<int>(numbers[0]);
            return FunctionalSpec::current_poly(i, {numbers.begin() + 1, numbers.end()});
        }
        if (name == "runint") {
            want(children.empty() && numbers.size() == 1, "runint(i)");
            return FunctionalSpec::running_integral(static_cast<int>(numbers[0]));
        }
        if (name == "runmax") {
            want(children.empty() && (numbers.size() == 1 || numbers.size() == 2),
                 "runmax(i[, cap])");
            if (numbers.size() == 2 && std::isfinite(numbers[1]))
                return FunctionalSpec::running_max(static_cast<int>(numbers[0]), numbers[1]);
            return FunctionalSpec::running_max(static_cast<int>(numbers[0]));
        }
        if (name == "prod") {
            want(numbers.empty() && children.size() == 2, "prod(u, v)");
            return FunctionalSpec::product(std::move(children[0]), std::move(children[1]));
        }
        if (name == "sum") {
            want(numbers.empty() && children.size() >= 1, "sum(u, ...)");
            return FunctionalSpec::sum(std::move(children));
        }
        if (name == "scale") {
            want(children.size() == 1 && numbers.size() == 1, "scale(a, u)");
            return FunctionalSpec::scale(numbers[0], std::move(children[0]));
        }
        if (name == "tpoly") {
            want(children.size() == 1 && numbers.size() >= 1, "tpoly(u, w0, ...)");
            return FunctionalSpec::time_weighted(std::move(children[0]), std::move(numbers));
        }
        fail("unknown functional kind '" + name + "'");
    }
};

}  // namespace detail

inline FunctionalSpec parse_functional(std::string_view text) {
    detail::ExprParser p{text};
    FunctionalSpec f = p.expr();
    p.skip_ws();
    if (p.pos != text.size()) p.fail("trailing characters");
    return f;
}

inline std::string format_functional(const FunctionalSpec& f) {
    auto num = [](double v) {
        if (v == static_cast<long long>(v) && std::abs(v) < 1e15)
            return std::to_string(static_cast<long long>(v));
        return format_double(v);
    };
    switch (f.kind) {
        case FunctionalKind::Constant:
            return "const(" + format_double(f.params[0]) + ")";
        case FunctionalKind::Coordinate:
            return "coord(" + num(f.params[0]) + ")";
        case FunctionalKind::CurrentPoly: {
            std::string s = "poly(" + num(f.params[0]);
            for (std::size_t k = 1; k < f.params.size(); ++k)
                s += ", " + format_double(f.params[k]);
            return s + ")";
        }
        case FunctionalKind::RunningIntegral:
            return "runint(" + num(f.params[0]) + ")";
        case FunctionalKind::RunningMax:
            if (f.params.size() > 1)
                return "runmax(" + num(f.params[0]) + ", " + format_double(f.params[1]) + ")";
            return "runmax(" + num(f.params[0]) + ")";
        case FunctionalKind::Product:
            return "prod(" + format_functional(f.children[0]) + ", " +
                   format_functional(f.children[1]) + ")";
        case FunctionalKind::Sum: {
            std::string s = "sum(";
            for (std::size_t k = 0; k < f.children.size(); ++k) {
                if (k) s += ", ";
                s += format_functional(f.children[k]);
            }
            return s + ")";
        }
        case FunctionalKind::ScalarMultiple:
            return "scale(" + format_double(f.params[0]) + ", " +
                   format_functional(f.children[0]) + ")";
        case FunctionalKind::TimeWeighted: {
            std::string s = "tpoly(" + format_functional(f.children[0]);
            for (double w : f.params) s += ", " + format_double(w);
            return s + ")";
        }
    }
    throw std::logic_error("unreachable functional kind");
}

}  // namespace pathbsde
