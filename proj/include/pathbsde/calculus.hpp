#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pathbsde/functional.hpp"
#include "pathbsde/scenario.hpp"
#include "pathbsde/simulate.hpp"

namespace pathbsde {

/// Finite-difference controls for the Dupire derivatives. eps_vertical is a
/// relative scale: the bump applied at (t, omega) is
/// eps_vertical * (1 + max_i |omega_i(t)|).
struct DerivativeParams {
    double eps_vertical = 1e-4;
    double eps_horizontal = 1e-5;  // time units
    enum class Scheme { Central, Forward } scheme = Scheme::Central;

    double vertical_step(const CadlagPath& path, double t) const {
        if (!(eps_vertical > 0.0) || !(eps_horizontal > 0.0))
            throw std::invalid_argument("derivative steps must be positive");
        double m = 0.0;
        for (double v : path.evaluate(t)) m = std::max(m, std::abs(v));
        return eps_vertical * (1.0 + m);
    }
};

namespace detail {

inline double eval_bumped(const FunctionalSpec& phi, double t, const CadlagPath& path,
                          int coord, double amount) {
    std::vector<double> x(path.dim(), 0.0);
    x[coord] = amount;
    const double v = evaluate_functional(phi, t, vertical_bump(path, t, x));
    if (!std::isfinite(v)) throw NumericalError("non-finite functional value under bump");
    return v;
}

}  // namespace detail

/// Dupire vertical gradient. Closed form when the functional declares one
/// (the finite-difference value is exposed either way for cross-checks).
struct VerticalDerivative {
    Eigen::VectorXd value;  // the reported derivative
    Eigen::VectorXd fd;     // finite-difference estimate
    bool closed_form = false;
};

inline VerticalDerivative vertical_derivative(const FunctionalSpec& phi, double t,
                                              const CadlagPath& path,
                                              const DerivativeParams& params = {}) {
    const int d = path.dim();
    VerticalDerivative out;
    out.fd.resize(d);
    const double eps = params.vertical_step(path, t);
    for (int i = 0; i < d; ++i) {
        const double up = detail::eval_bumped(phi, t, path, i, eps);
        if (params.scheme == DerivativeParams::Scheme::Central) {
            const double dn = detail::eval_bumped(phi, t, path, i, -eps);
            out.fd(i) = (up - dn) / (2.0 * eps);
        } else {
            out.fd(i) = (up - evaluate_functional(phi, t, path)) / eps;
        }
    }
    out.closed_form = has_closed_form(phi);
    if (out.closed_form) {
        FunctionalSweep sweep(phi, d);
        sweep_path(sweep, path, path.node_index(t));
        out.value.resize(d);
        sweep.gradient(out.value.data());
    } else {
        out.value = out.fd;
    }
    return out;
}

struct VerticalHessian {
    Eigen::MatrixXd value;
    Eigen::MatrixXd fd;
    bool closed_form = false;
};

inline VerticalHessian vertical_hessian(const FunctionalSpec& phi, double t,
                                        const CadlagPath& path,
                                        const DerivativeParams& params = {}) {
    const int d = path.dim();
    VerticalHessian out;
    out.fd.resize(d, d);
    const double eps = params.vertical_step(path, t);
    const double center = evaluate_functional(phi, t, path);
    for (int i = 0; i < d; ++i) {
        const double up = detail::eval_bumped(phi, t, path, i, eps);
        const double dn = detail::eval_bumped(phi, t, path, i, -eps);
        out.fd(i, i) = (up - 2.0 * center + dn) / (eps * eps);
        for (int j = i + 1; j < d; ++j) {
            auto eval2 = [&](double ei, double ej) {
                std::vector<double> x(d, 0.0);
                x[i] = ei;
                x[j] = ej;
                return evaluate_functional(phi, t, vertical_bump(path, t, x));
            };
            const double v = (eval2(eps, eps) - eval2(eps, -eps) - eval2(-eps, eps) +
                              eval2(-eps, -eps)) /
                             (4.0 * eps * eps);
            out.fd(i, j) = v;
            out.fd(j, i) = v;
        }
    }
    out.closed_form = has_closed_form(phi);
    if (out.closed_form) {
        FunctionalSweep sweep(phi, d);
        sweep_path(sweep, path, path.node_index(t));
        out.value.resize(d, d);
        sweep.hessian(out.value.data());
        out.value = 0.5 * (out.value + out.value.transpose()).eval();
    } else {
        out.value = out.fd;
    }
    return out;
}

/// Horizontal (right time) derivative: forward difference of t -> Phi_t on
/// the path stopped at t. Near the horizon the evaluation point is pulled
/// back so the one-sided stencil stays inside [0, T] (the limit convention
/// for D Phi_T).
inline double horizontal_derivative(const FunctionalSpec& phi, double t, const CadlagPath& path,
                                    const DerivativeParams& params = {}) {
    const double T = path.horizon();
    const double h = params.eps_horizontal;
    if (!(h > 0.0)) throw std::invalid_argument("eps_horizontal must be positive");
    double t0 = t;
    if (t0 + h > T) t0 = T - 2.0 * h;
    if (t0 < 0.0) throw std::invalid_argument("horizon too short for the horizontal stencil");
    const auto stopped = stop(path, t0);
    const double v0 = evaluate_functional(phi, t0, stopped);
    const double v1 = evaluate_functional(phi, t0 + h, stopped);
    if (!std::isfinite(v0) || !std::isfinite(v1))
        throw NumericalError("non-finite functional value in horizontal stencil");
    return (v1 - v0) / h;
}

/// Value of the path-dependent integro-differential generator split into its
/// four constituents; total is their sum by construction.
struct OperatorValue {
    double total = 0.0;
    double horizontal = 0.0;
    double drift = 0.0;
    double diffusion = 0.0;
    double nonlocal = 0.0;
};

/// A Phi = D Phi + beta . grad Phi + (1/2) Tr(sigma sigma^T hess Phi)
///       + sum_k F_k [Phi(omega + gamma_k 1_{[t,oo)}) - Phi - gamma_k . grad Phi].
/// Closed-form derivatives are used when declared; finite differences
/// otherwise. The nonlocal term is an exact finite sum over the atoms.
inline OperatorValue apply_A(const FunctionalSpec& phi, const ScenarioSpec& spec, double t,
                             const CadlagPath& path, const DerivativeParams& params = {}) {
    const int d = spec.dim;
    if (path.dim() != d) throw std::invalid_argument("apply_A: path dimension mismatch");

    const bool closed = has_closed_form(phi);
    Eigen::VectorXd grad(d);
    Eigen::MatrixXd hess(d, d);
    double horiz;
    if (closed) {
        FunctionalSweep sweep(phi, d);
        sweep_path(sweep, path, path.node_index(t));
        sweep.gradient(grad.data());
        hess.resize(d, d);
        sweep.hessian(hess.data());
        horiz = sweep.horizontal();
    } else {
        grad = vertical_derivative(phi, t, path, params).value;
        hess = vertical_hessian(phi, t, path, params).value;
        horiz = horizontal_derivative(phi, t, path, params);
    }

    Eigen::VectorXd beta(d);
    Eigen::MatrixXd sigma(d, d);
    for (int i = 0; i < d; ++i) {
        beta(i) = evaluate_functional(spec.beta[i], t, path);
        for (int j = 0; j < d; ++j)
            sigma(i, j) = evaluate_functional(spec.sigma[i * d + j], t, path);
    }

    OperatorValue out;
    out.horizontal = horiz;
    out.drift = beta.dot(grad);
    out.diffusion = 0.5 * (sigma * sigma.transpose() * hess).trace();

    const double base = evaluate_functional(phi, t, path);
    for (std::size_t a = 0; a < spec.jumps.size(); ++a) {
        std::vector<double> g(d);
        double gdot = 0.0;
        for (int i = 0; i < d; ++i) {
            g[i] = evaluate_functional(spec.gamma[a][i], t, path);
            gdot += g[i] * grad(i);
        }
        const double bumped = evaluate_functional(phi, t, vertical_bump(path, t, g));
        out.nonlocal += spec.jumps.weights[a] * (bumped - base - gdot);
    }
    out.total = out.horizontal + out.drift + out.diffusion + out.nonlocal;
    if (!std::isfinite(out.total)) throw NumericalError("apply_A produced a non-finite value");
    return out;
}

/// Carre du champ through the product rule: Gamma(Phi, Psi) =
/// A(Phi Psi) - Phi A(Psi) - Psi A(Phi), evaluated at (t, path).
inline double gamma_product_rule(const FunctionalSpec& phi, const FunctionalSpec& psi,
                                 const ScenarioSpec& spec, double t, const CadlagPath& path,
                                 const DerivativeParams& params = {}) {
    const auto product = FunctionalSpec::product(phi, psi);
    const double a_prod = apply_A(product, spec, t, path, params).total;
    const double a_phi = apply_A(phi, spec, t, path, params).total;
    const double a_psi = apply_A(psi, spec, t, path, params).total;
    const double u = evaluate_functional(phi, t, path);
    const double v = evaluate_functional(psi, t, path);
    return a_prod - u * a_psi - v * a_phi;
}

/// Gamma(X, Phi) in closed form: sigma sigma^T grad Phi plus the atom sum of
/// gamma-weighted bump differences. No product functional required.
inline Eigen::VectorXd gamma_with_X(const FunctionalSpec& phi, const ScenarioSpec& spec,
                                    double t, const CadlagPath& path,
                                    const DerivativeParams& params = {}) {
    const int d = spec.dim;
    Eigen::VectorXd grad(d);
    if (has_closed_form(phi)) {
        FunctionalSweep sweep(phi, d);
        sweep_path(sweep, path, path.node_index(t));
        sweep.gradient(grad.data());
    } else {
        grad = vertical_derivative(phi, t, path, params).value;
    }
    Eigen::MatrixXd sigma(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            sigma(i, j) = evaluate_functional(spec.sigma[i * d + j], t, path);

    Eigen::VectorXd out = sigma * sigma.transpose() * grad;
    const double base = evaluate_functional(phi, t, path);
    for (std::size_t a = 0; a < spec.jumps.size(); ++a) {
        std::vector<double> g(d);
        for (int i = 0; i < d; ++i) g[i] = evaluate_functional(spec.gamma[a][i], t, path);
        const double diff = evaluate_functional(phi, t, vertical_bump(path, t, g)) - base;
        for (int i = 0; i < d; ++i) out(i) += spec.jumps.weights[a] * g[i] * diff;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Streaming generator evaluation along a grid path. Requires closed-form
// derivatives; the jump bump is O(1) through the sweep's replaced-value hook.
// Used by the bracket and residual checks over whole ensembles.
// ---------------------------------------------------------------------------

class OperatorSweep {
public:
    OperatorSweep(const FunctionalSpec& phi, const ScenarioSpec& spec)
        : spec_(&spec), phi_sweep_(phi, spec.dim), coeffs_(spec), d_(spec.dim),
          grad_(d_), hess_(d_ * d_), x_(d_), xb_(d_) {
        if (!phi_sweep_.closed_form())
            throw std::invalid_argument(
                "OperatorSweep needs a functional with closed-form derivatives");
    }

    void reset() {
        phi_sweep_.reset();
        coeffs_.reset();
    }

    void push(double t, const double* x) {
        phi_sweep_.push(t, x);
        coeffs_.push(t, x);
        std::copy(x, x + d_, x_.begin());
    }

    double phi_value() const { return phi_sweep_.value(); }

    OperatorValue value() {
        OperatorValue out;
        phi_sweep_.gradient(grad_.data());
        phi_sweep_.hessian(hess_.data());
        out.horizontal = phi_sweep_.horizontal();
        for (int i = 0; i < d_; ++i) out.drift += coeffs_.beta[i].value() * grad_[i];
        // (1/2) Tr(sigma sigma^T H) = (1/2) sum_{i,j} (sigma sigma^T)_{ij} H_{ji}
        for (int i = 0; i < d_; ++i)
            for (int j = 0; j < d_; ++j) {
                double a = 0.0;
                for (int k = 0; k < d_; ++k)
                    a += coeffs_.sigma[i * d_ + k].value() * coeffs_.sigma[j * d_ + k].value();
                out.diffusion += 0.5 * a * hess_[j * d_ + i];
            }
        const double base = phi_sweep_.value();
        for (std::size_t at = 0; at < spec_->jumps.size(); ++at) {
            double gdot = 0.0;
            for (int i = 0; i < d_; ++i) {
                const double g = coeffs_.gamma[at][i].value();
                xb_[i] = x_[i] + g;
                gdot += g * grad_[i];
            }
            out.nonlocal +=
                spec_->jumps.weights[at] * (phi_sweep_.value_replaced(xb_.data()) - base - gdot);
        }
        out.total = out.horizontal + out.drift + out.diffusion + out.nonlocal;
        return out;
    }

private:
    const ScenarioSpec* spec_;
    FunctionalSweep phi_sweep_;
    CoefficientSweeps coeffs_;
    int d_;
    std::vector<double> grad_, hess_, x_, xb_;
};

// ---------------------------------------------------------------------------
// Functional Ito residual on a simulated path.
// ---------------------------------------------------------------------------

/// Phi_T minus the discretized right-hand side of the path-dependent Ito
/// formula: left-point D Phi dr, grad Phi . dX (with dX = dM_X + beta dt),
/// (1/2) Tr(hess Phi sigma sigma^T) dt, and the recorded-jump corrections
/// Phi_r(omega) - Phi_r(pre-jump) - grad Phi(pre-jump) . jump.
inline double ito_residual(const FunctionalSpec& phi, const ScenarioSpec& spec,
                           const Ensemble& ens, std::size_t p,
                           const DerivativeParams& params = {}) {
    if (!has_closed_form(phi))
        throw std::invalid_argument("ito_residual requires closed-form derivatives");
    if (!spec.jumps.atoms.empty() && ens.djump.empty())
        throw std::invalid_argument("ensemble lacks jump bookkeeping");

    const int d = ens.dim;
    const int n = ens.grid.steps;
    const CadlagPath path = ens.path(p);

    FunctionalSweep sweep(phi, d);
    CoefficientSweeps coeffs(spec);
    sweep.reset();
    coeffs.reset();

    // advance through the prefix (nodes before the grid start)
    std::size_t idx = 0;
    while (idx < path.size() && path.time(idx) < ens.grid.start) {
        sweep.push(path.time(idx), path.value(idx).data());
        coeffs.push(path.time(idx), path.value(idx).data());
        ++idx;
    }

    std::vector<double> grad(d), hess(d * d);
    double rhs = 0.0;
    double phi_s = 0.0;
    for (int k = 0; k <= n; ++k) {
        const std::size_t node = idx + k;
        sweep.push(path.time(node), path.value(node).data());
        coeffs.push(path.time(node), path.value(node).data());
        if (k == 0) phi_s = sweep.value();
        if (k == n) break;

        const double dt = ens.grid.dt(k);
        sweep.gradient(grad.data());
        sweep.hessian(hess.data());
        rhs += sweep.horizontal() * dt;
        const double* dm = ens.dm(p, k);
        for (int i = 0; i < d; ++i) {
            const double beta_i = coeffs.beta[i].value();
            rhs += grad[i] * (dm[i] + beta_i * dt);
        }
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                double a = 0.0;
                for (int m = 0; m < d; ++m)
                    a += coeffs.sigma[i * d + m].value() * coeffs.sigma[j * d + m].value();
                rhs += 0.5 * a * hess[j * d + i] * dt;
            }
    }

    // jump corrections at their landing nodes, via pre-jump path surgery
    for (int k = 0; k < n; ++k) {
        if (!ens.jump_in_step(p, k)) continue;
        const double* dj = ens.dj(p, k);
        const double t_land = ens.grid.nodes[k + 1];
        std::vector<double> minus(dj, dj + d);
        for (double& v : minus) v = -v;
        const CadlagPath pre = vertical_bump(path, t_land, minus);
        const double phi_post = evaluate_functional(phi, t_land, path);
        const double phi_pre = evaluate_functional(phi, t_land, pre);
        const auto grad_pre = vertical_derivative(phi, t_land, pre, params).value;
        double corr = phi_post - phi_pre;
        for (int i = 0; i < d; ++i) corr -= grad_pre(i) * dj[i];
        rhs += corr;
    }

    const double phi_T = evaluate_functional(phi, ens.grid.horizon, path);
    return phi_T - phi_s - rhs;
}

}  // namespace pathbsde
