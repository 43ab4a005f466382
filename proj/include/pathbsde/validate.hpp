#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "pathbsde/path.hpp"
#include "pathbsde/rng.hpp"
#include "pathbsde/scenario.hpp"

namespace pathbsde {

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ConditionReport {
    std::string name;
    bool passed = false;
    double statistic = 0.0;  // estimated constant / quotient / bound
    std::string note;
};

struct ValidationReport {
    bool passed = false;
    std::vector<ConditionReport> conditions;

    std::string summary() const {
        std::ostringstream os;
        for (const auto& c : conditions)
            os << (c.passed ? "[ ok ] " : "[FAIL] ") << c.name << "  stat=" << c.statistic
               << (c.note.empty() ? "" : "  (" + c.note + ")") << "\n";
        os << (passed ? "scenario valid\n" : "scenario INVALID\n");
        return os.str();
    }
};

namespace detail {

/// Random piecewise-constant path with a handful of nodes, values in a box.
inline CadlagPath random_path(int dim, double horizon, SubstreamRng& rng, double box = 3.0) {
    const int n_nodes = 4 + static_cast<int>(rng.next_uniform() * 8);
    std::vector<double> times{0.0};
    for (int k = 1; k < n_nodes; ++k) times.push_back(rng.next_uniform() * horizon);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    std::vector<double> values;
    for (std::size_t k = 0; k < times.size(); ++k)
        for (int i = 0; i < dim; ++i) values.push_back((2.0 * rng.next_uniform() - 1.0) * box);
    return CadlagPath(std::move(times), std::move(values), dim, horizon);
}

/// Perturbs every node value by at most delta (sup-norm distance <= delta).
inline CadlagPath perturb_path(const CadlagPath& p, SubstreamRng& rng, double delta) {
    std::vector<double> values = p.raw_values();
    for (double& v : values) v += (2.0 * rng.next_uniform() - 1.0) * delta;
    return CadlagPath(p.times(), std::move(values), p.dim(), p.horizon(), p.jump_flags());
}

inline double sup_distance(const CadlagPath& a, const CadlagPath& b) {
    return d_infinity(PointedPath(a.horizon(), a), PointedPath(b.horizon(), b));
}

}  // namespace detail

/// Empirical well-posedness checks: local Lipschitz quotients of sigma and
/// gamma in sup-norm (reported for exponents 1 and 2, since either reading of
/// the local condition may be intended), Lipschitz beta or uniform
/// ellipticity, boundedness of the coefficients and of Gamma(X^i), and the
/// driver's declared Lipschitz constant.
inline ValidationReport validate_scenario(const ScenarioSpec& spec, int n_samples = 64,
                                          std::uint64_t seed = 0x5eed0a11ull) {
    spec.check_shapes();
    ValidationReport report;
    const int d = spec.dim;
    const double T = spec.horizon;
    constexpr double kQuotientCeiling = 100.0;

    // Boundedness comes from the catalog declarations; sampling merely
    // confirms the declared bound is honored.
    auto bound_condition = [&](const char* name, const std::vector<FunctionalSpec>& fs) {
        ConditionReport c;
        c.name = name;
        double declared = 0.0;
        bool ok = true;
        for (const auto& f : fs) {
            const auto b = uniform_bound(f, T);
            if (!b) {
                ok = false;
                c.note = "component '" + format_functional(f) + "' declares no uniform bound";
                break;
            }
            declared = std::max(declared, *b);
        }
        c.statistic = declared;
        c.passed = ok;
        report.conditions.push_back(c);
        return ok;
    };

    bool bounded = true;
    bounded &= bound_condition("beta bounded", spec.beta);
    bounded &= bound_condition("sigma bounded", spec.sigma);
    for (std::size_t a = 0; a < spec.gamma.size(); ++a)
        bounded &= bound_condition(("gamma bounded (atom " + std::to_string(a) + ")").c_str(),
                                   spec.gamma[a]);

    // Sampled quotients over random path pairs at three perturbation scales.
    double q_sigma_e1 = 0.0, q_sigma_e2 = 0.0;
    double q_gamma_e1 = 0.0, q_gamma_e2 = 0.0;
    double q_beta = 0.0;
    double min_eig = std::numeric_limits<double>::infinity();
    double max_beta = 0.0, max_sigma = 0.0, max_gamma = 0.0, max_gamma_xi = 0.0;

    const double deltas[] = {1e-3, 1e-1, 1.0};
    for (int s = 0; s < n_samples; ++s) {
        SubstreamRng rng(seed, static_cast<std::uint64_t>(s), 0);
        const CadlagPath omega = detail::random_path(d, T, rng);
        const CadlagPath omega2 = detail::perturb_path(omega, rng, deltas[s % 3]);
        const double t = rng.next_uniform() * T;
        const double dist = detail::sup_distance(omega, omega2);
        if (!(dist > 0.0)) continue;

        Eigen::MatrixXd sig(d, d), sig2(d, d);
        Eigen::VectorXd bet(d), bet2(d);
        for (int i = 0; i < d; ++i) {
            bet(i) = evaluate_functional(spec.beta[i], t, omega);
            bet2(i) = evaluate_functional(spec.beta[i], t, omega2);
            for (int j = 0; j < d; ++j) {
                sig(i, j) = evaluate_functional(spec.sigma[i * d + j], t, omega);
                sig2(i, j) = evaluate_functional(spec.sigma[i * d + j], t, omega2);
            }
        }
        q_sigma_e1 = std::max(q_sigma_e1, (sig - sig2).norm() / dist);
        q_sigma_e2 = std::max(q_sigma_e2, (sig - sig2).norm() / (dist * dist));
        q_beta = std::max(q_beta, (bet - bet2).norm() / dist);
        max_beta = std::max(max_beta, bet.norm());
        max_sigma = std::max(max_sigma, sig.norm());

        const Eigen::MatrixXd a = sig * sig.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
        min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());

        double gamma_sq_sum = 0.0;
        for (std::size_t k = 0; k < spec.gamma.size(); ++k) {
            Eigen::VectorXd g(d), g2(d);
            for (int i = 0; i < d; ++i) {
                g(i) = evaluate_functional(spec.gamma[k][i], t, omega);
                g2(i) = evaluate_functional(spec.gamma[k][i], t, omega2);
            }
            q_gamma_e1 = std::max(q_gamma_e1, (g - g2).norm() / dist);
            q_gamma_e2 = std::max(q_gamma_e2, (g - g2).norm() / (dist * dist));
            max_gamma = std::max(max_gamma, g.norm());
            gamma_sq_sum += spec.jumps.weights[k] * g.squaredNorm();
        }
        // Gamma(X^i) = (sigma sigma^T)^{ii} + sum_k F_k (gamma^i_k)^2
        max_gamma_xi = std::max(max_gamma_xi, a.diagonal().maxCoeff() + gamma_sq_sum);
    }

    report.conditions.push_back({"sigma local Lipschitz (exponent 1)",
                                 q_sigma_e1 < kQuotientCeiling, q_sigma_e1, "sampled quotient"});
    report.conditions.push_back({"sigma local Lipschitz (exponent 2)", true, q_sigma_e2,
                                 "reported only; exponent ambiguity"});
    if (!spec.gamma.empty()) {
        report.conditions.push_back({"gamma local Lipschitz (exponent 1)",
                                     q_gamma_e1 < kQuotientCeiling, q_gamma_e1,
                                     "sampled quotient"});
        report.conditions.push_back({"gamma local Lipschitz (exponent 2)", true, q_gamma_e2,
                                     "reported only; exponent ambiguity"});
    }

    const bool beta_lip = q_beta < kQuotientCeiling;
    const bool elliptic = min_eig > 1e-10;
    report.conditions.push_back({"beta Lipschitz or uniform ellipticity", beta_lip || elliptic,
                                 beta_lip ? q_beta : min_eig,
                                 beta_lip ? "beta quotient bounded"
                                          : (elliptic ? "sigma sigma^T uniformly elliptic"
                                                      : "neither branch holds")});

    report.conditions.push_back(
        {"Gamma(X^i) bounded", bounded, max_gamma_xi, "sampled sup of the carre du champ of X"});

    // Driver Lipschitz in (y, z) against the declared constant.
    {
        double q = 0.0;
        SubstreamRng rng(seed, 0, 1);
        std::vector<double> z(d), z2(d);
        for (int s = 0; s < 4 * n_samples; ++s) {
            const double y = (2.0 * rng.next_uniform() - 1.0) * 5.0;
            const double y2 = (2.0 * rng.next_uniform() - 1.0) * 5.0;
            double dz = 0.0;
            for (int i = 0; i < d; ++i) {
                z[i] = (2.0 * rng.next_uniform() - 1.0) * 5.0;
                z2[i] = (2.0 * rng.next_uniform() - 1.0) * 5.0;
                dz += (z[i] - z2[i]) * (z[i] - z2[i]);
            }
            const double denom = std::abs(y - y2) + std::sqrt(dz);
            if (denom < 1e-12) continue;
            q = std::max(q, std::abs(spec.driver(0.0, y, z.data(), d) -
                                     spec.driver(0.0, y2, z2.data(), d)) /
                                denom);
        }
        const bool ok = q <= spec.driver.lipschitz * 1.0001 + 1e-12;
        report.conditions.push_back({"driver Lipschitz within declared K", ok, q,
                                     "declared K = " + format_double(spec.driver.lipschitz)});
    }

    report.passed = true;
    for (const auto& c : report.conditions) report.passed &= c.passed;
    return report;
}

/// Throws when the scenario fails validation (used as a precondition by the
/// simulation and solver entry points).
inline void require_valid(const ScenarioSpec& spec) {
    const auto report = validate_scenario(spec, 32);
    if (!report.passed) throw ValidationError("scenario failed validation:\n" + report.summary());
}

}  // namespace pathbsde
