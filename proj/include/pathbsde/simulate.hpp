#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathbsde/grid.hpp"
#include "pathbsde/parallel.hpp"
#include "pathbsde/path.hpp"
#include "pathbsde/rng.hpp"
#include "pathbsde/scenario.hpp"

namespace pathbsde {

/// Runtime/numerical failure (non-finite states, divergent iterations).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A batch of simulated paths from one start condition (s, eta), with the
/// per-step martingale-part increments dM_X = dX - beta dt of the driving
/// noise recorded alongside. Immutable once built.
struct Ensemble {
    int dim = 1;
    TimeGrid grid;
    CadlagPath prefix = CadlagPath::constant(0.0, 1.0);  // stop(eta, s)
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    std::size_t n_atoms = 0;

    // Flat row-major arrays, path-major.
    std::vector<double> states;        // n_paths x (steps+1) x d
    std::vector<double> dmart;         // n_paths x steps x d
    std::vector<double> djump;         // n_paths x steps x d (empty when no atoms)
    std::vector<std::uint8_t> flags;   // n_paths x steps (arrival in (t_k, t_{k+1}])
    std::vector<std::uint32_t> atom_counts;  // n_paths x n_atoms

    double start_time() const { return grid.start; }
    int steps() const { return grid.steps; }

    const double* state(std::size_t p, int k) const {
        return states.data() + (p * (grid.steps + 1) + k) * dim;
    }
    const double* dm(std::size_t p, int k) const {
        return dmart.data() + (p * grid.steps + k) * dim;
    }
    const double* dj(std::size_t p, int k) const {
        return djump.empty() ? nullptr : djump.data() + (p * grid.steps + k) * dim;
    }
    bool jump_in_step(std::size_t p, int k) const { return flags[p * grid.steps + k] != 0; }

    /// Materializes path p as a CadlagPath (prefix nodes before s, then the
    /// simulated nodes).
    CadlagPath path(std::size_t p) const {
        std::vector<double> times;
        std::vector<double> values;
        std::vector<std::uint8_t> jf;
        std::uint8_t flag_at_s = 0;
        for (std::size_t k = 0; k < prefix.size(); ++k) {
            if (prefix.time(k) < grid.start) {
                times.push_back(prefix.time(k));
                const auto v = prefix.value(k);
                values.insert(values.end(), v.begin(), v.end());
                jf.push_back(prefix.jump_at(k) ? 1 : 0);
            } else {
                flag_at_s = prefix.jump_at(k) ? 1 : 0;
            }
        }
        for (int k = 0; k <= grid.steps; ++k) {
            times.push_back(grid.nodes[k]);
            const double* v = state(p, k);
            values.insert(values.end(), v, v + dim);
            jf.push_back(k == 0 ? flag_at_s : (jump_in_step(p, k - 1) ? 1 : 0));
        }
        return CadlagPath(std::move(times), std::move(values), dim, prefix.horizon(),
                          std::move(jf));
    }

    PointedPath initial() const { return PointedPath(grid.start, prefix); }

    bool operator==(const Ensemble& o) const {
        return dim == o.dim && grid == o.grid && prefix == o.prefix && n_paths == o.n_paths &&
               seed == o.seed && n_atoms == o.n_atoms && states == o.states &&
               dmart == o.dmart && djump == o.djump && flags == o.flags &&
               atom_counts == o.atom_counts;
    }
};

/// Euler scheme for the path-dependent SDE with jumps: left-point functional
/// coefficients, exact compound-Poisson arrivals from the atomic measure,
/// compensated with the left-point gamma. Deterministic given (seed, path
/// index), independent of the worker count.
inline Ensemble simulate(const ScenarioSpec& spec, const PointedPath& start,
                         const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed) {
    spec.check_shapes();
    if (grid.steps < 1) throw std::invalid_argument("simulate: grid needs at least one step");
    if (std::abs(start.start_time() - grid.start) > 1e-12)
        throw std::invalid_argument("simulate: start time must match the grid start");
    if (start.path().dim() != spec.dim)
        throw std::invalid_argument("simulate: start path dimension mismatch");

    const int d = spec.dim;
    const int n = grid.steps;
    const std::size_t n_atoms = spec.jumps.size();
    const double mass = spec.jumps.total_mass();

    Ensemble ens;
    ens.dim = d;
    ens.grid = grid;
    ens.prefix = start.path();
    ens.n_paths = n_paths;
    ens.seed = seed;
    ens.n_atoms = n_atoms;
    ens.states.resize(n_paths * (n + 1) * d);
    ens.dmart.resize(n_paths * n * d);
    ens.flags.assign(n_paths * n, 0);
    if (n_atoms) {
        ens.djump.assign(n_paths * n * d, 0.0);
        ens.atom_counts.assign(n_paths * n_atoms, 0);
    }

    // Prefix nodes strictly before s; the simulation pushes (s, X_s) itself.
    std::vector<double> pre_times;
    std::vector<const double*> pre_values;
    for (std::size_t k = 0; k < ens.prefix.size(); ++k)
        if (ens.prefix.time(k) < grid.start) {
            pre_times.push_back(ens.prefix.time(k));
            pre_values.push_back(ens.prefix.value(k).data());
        }
    const auto x0 = start.start_value();

    parallel_blocks(n_paths, [&](std::size_t, std::size_t begin, std::size_t end) {
        CoefficientSweeps coeffs(spec);
        std::vector<double> x(d), beta_v(d), sig_v(d * d), comp(d), jsum(d), xi(d);
        for (std::size_t p = begin; p < end; ++p) {
            coeffs.reset();
            for (std::size_t k = 0; k < pre_times.size(); ++k)
                coeffs.push(pre_times[k], pre_values[k]);
            std::copy(x0.begin(), x0.end(), x.begin());
            double* row = ens.states.data() + p * (n + 1) * d;
            std::copy(x.begin(), x.end(), row);

            for (int k = 0; k < n; ++k) {
                const double t = grid.nodes[k];
                const double dt = grid.dt(k);
                coeffs.push(t, x.data());
                for (int i = 0; i < d; ++i) beta_v[i] = coeffs.beta[i].value();
                for (int i = 0; i < d * d; ++i) sig_v[i] = coeffs.sigma[i].value();

                SubstreamRng rng(seed, p, static_cast<std::uint64_t>(k));
                // Draw order: d normals, Poisson count, atom picks.
                std::fill(jsum.begin(), jsum.end(), 0.0);
                std::fill(comp.begin(), comp.end(), 0.0);
                const double sqdt = std::sqrt(dt);
                for (int i = 0; i < d; ++i) xi[i] = rng.next_normal();

                std::uint32_t arrivals = 0;
                if (n_atoms) {
                    arrivals = rng.next_poisson(mass * dt);
                    for (std::uint32_t j = 0; j < arrivals; ++j) {
                        const std::uint32_t a = rng.next_weighted(
                            spec.jumps.weights.data(), static_cast<std::uint32_t>(n_atoms),
                            mass);
                        for (int i = 0; i < d; ++i)
                            jsum[i] += coeffs.gamma[a][i].value();
                        ++ens.atom_counts[p * n_atoms + a];
                    }
                    for (std::size_t a = 0; a < n_atoms; ++a)
                        for (int i = 0; i < d; ++i)
                            comp[i] += spec.jumps.weights[a] * coeffs.gamma[a][i].value();
                }

                double* dm = ens.dmart.data() + (p * n + k) * d;
                for (int i = 0; i < d; ++i) {
                    double diff = 0.0;
                    for (int j = 0; j < d; ++j) diff += sig_v[i * d + j] * xi[j];
                    const double dx = beta_v[i] * dt + sqdt * diff + jsum[i] - comp[i] * dt;
                    x[i] += dx;
                    dm[i] = dx - beta_v[i] * dt;
                    if (!std::isfinite(x[i]))
                        throw NumericalError("non-finite state at path " + std::to_string(p) +
                                             ", step " + std::to_string(k));
                }
                if (n_atoms) {
                    double* dj = ens.djump.data() + (p * n + k) * d;
                    std::copy(jsum.begin(), jsum.end(), dj);
                    ens.flags[p * n + k] = arrivals > 0 ? 1 : 0;
                }
                std::copy(x.begin(), x.end(), row + (k + 1) * d);
            }
        }
    });
    return ens;
}

/// Restarts the dynamics from (t, stop(path, t)); realizes the conditioning
/// identity of the underlying canonical class for nested Monte Carlo.
inline Ensemble resimulate_from(const ScenarioSpec& spec, const CadlagPath& outer_path,
                                double t, const TimeGrid& grid_tail, std::size_t n_inner,
                                std::uint64_t seed) {
    bool is_node = false;
    for (std::size_t k = 0; k < outer_path.size(); ++k)
        if (outer_path.time(k) == t) is_node = true;
    if (!is_node) throw std::invalid_argument("resimulate_from: t is not a grid node");
    return simulate(spec, PointedPath(t, outer_path), grid_tail, n_inner, seed);
}

// ---------------------------------------------------------------------------
// Empirical characteristics: drift, continuous quadratic variation and jump
// statistics against the model triplet.
// ---------------------------------------------------------------------------

struct CharacteristicsReport {
    std::vector<double> drift_realized, drift_model, drift_z;   // per coordinate
    std::vector<double> qv_realized, qv_model, qv_z;            // per coordinate
    std::vector<double> jump_count_mean, jump_count_expected, jump_count_z;  // per atom
    double mean_jump_count = 0.0;

    nlohmann::json to_json() const {
        return {{"drift", {{"realized", drift_realized}, {"model", drift_model}, {"z", drift_z}}},
                {"quadratic_variation",
                 {{"realized", qv_realized}, {"model", qv_model}, {"z", qv_z}}},
                {"jumps",
                 {{"count_mean", jump_count_mean},
                  {"count_expected", jump_count_expected},
                  {"z", jump_count_z},
                  {"mean_count", mean_jump_count}}}};
    }
};

inline CharacteristicsReport empirical_characteristics(const Ensemble& ens,
                                                       const ScenarioSpec& spec) {
    const int d = ens.dim;
    const int n = ens.grid.steps;
    const std::size_t np = ens.n_paths;

    struct Acc {
        std::vector<double> drift_diff_sum, drift_diff_sq;  // realized - model, per coord
        std::vector<double> drift_real_sum, drift_model_sum;
        std::vector<double> qv_diff_sum, qv_diff_sq;
        std::vector<double> qv_real_sum, qv_model_sum;
        std::vector<double> count_sum, count_sq;
        Acc(int d, std::size_t atoms)
            : drift_diff_sum(d), drift_diff_sq(d), drift_real_sum(d), drift_model_sum(d),
              qv_diff_sum(d), qv_diff_sq(d), qv_real_sum(d), qv_model_sum(d),
              count_sum(atoms), count_sq(atoms) {}
    };

    const std::size_t n_atoms = ens.n_atoms;
    auto acc = parallel_reduce(
        np, Acc(d, n_atoms),
        [&](std::size_t begin, std::size_t end) {
            Acc a(d, n_atoms);
            CoefficientSweeps coeffs(spec);
            std::vector<double> pre_t;
            std::vector<std::vector<double>> pre_x;
            for (std::size_t k = 0; k < ens.prefix.size(); ++k)
                if (ens.prefix.time(k) < ens.grid.start) {
                    pre_t.push_back(ens.prefix.time(k));
                    const auto v = ens.prefix.value(k);
                    pre_x.emplace_back(v.begin(), v.end());
                }
            for (std::size_t p = begin; p < end; ++p) {
                coeffs.reset();
                for (std::size_t k = 0; k < pre_t.size(); ++k)
                    coeffs.push(pre_t[k], pre_x[k].data());
                std::vector<double> drift_model(d, 0.0), qv_real(d, 0.0), qv_model(d, 0.0);
                for (int k = 0; k < n; ++k) {
                    coeffs.push(ens.grid.nodes[k], ens.state(p, k));
                    const double dt = ens.grid.dt(k);
                    const double* dm = ens.dm(p, k);
                    const double* dj = ens.dj(p, k);
                    for (int i = 0; i < d; ++i) {
                        drift_model[i] += coeffs.beta[i].value() * dt;
                        double comp = 0.0;
                        for (std::size_t a = 0; a < n_atoms; ++a)
                            comp += spec.jumps.weights[a] * coeffs.gamma[a][i].value();
                        // continuous-martingale increment: strip jumps, undo compensator
                        const double dw = dm[i] - (dj ? dj[i] : 0.0) + comp * dt;
                        qv_real[i] += dw * dw;
                        double a2 = 0.0;
                        for (int j = 0; j < d; ++j) {
                            const double s = coeffs.sigma[i * d + j].value();
                            a2 += s * s;
                        }
                        qv_model[i] += a2 * dt;
                    }
                }
                for (int i = 0; i < d; ++i) {
                    const double realized = ens.state(p, n)[i] - ens.state(p, 0)[i];
                    const double diff = realized - drift_model[i];
                    a.drift_diff_sum[i] += diff;
                    a.drift_diff_sq[i] += diff * diff;
                    a.drift_real_sum[i] += realized;
                    a.drift_model_sum[i] += drift_model[i];
                    const double qd = qv_real[i] - qv_model[i];
                    a.qv_diff_sum[i] += qd;
                    a.qv_diff_sq[i] += qd * qd;
                    a.qv_real_sum[i] += qv_real[i];
                    a.qv_model_sum[i] += qv_model[i];
                }
                for (std::size_t at = 0; at < n_atoms; ++at) {
                    const double c = ens.atom_counts[p * n_atoms + at];
                    a.count_sum[at] += c;
                    a.count_sq[at] += c * c;
                }
            }
            return a;
        },
        [d, n_atoms](Acc x, const Acc& y) {
            for (int i = 0; i < d; ++i) {
                x.drift_diff_sum[i] += y.drift_diff_sum[i];
                x.drift_diff_sq[i] += y.drift_diff_sq[i];
                x.drift_real_sum[i] += y.drift_real_sum[i];
                x.drift_model_sum[i] += y.drift_model_sum[i];
                x.qv_diff_sum[i] += y.qv_diff_sum[i];
                x.qv_diff_sq[i] += y.qv_diff_sq[i];
                x.qv_real_sum[i] += y.qv_real_sum[i];
                x.qv_model_sum[i] += y.qv_model_sum[i];
            }
            for (std::size_t a = 0; a < n_atoms; ++a) {
                x.count_sum[a] += y.count_sum[a];
                x.count_sq[a] += y.count_sq[a];
            }
            return x;
        });

    auto zscore = [np](double sum, double sq) {
        const double mean = sum / np;
        const double var = std::max(0.0, sq / np - mean * mean);
        const double se = std::sqrt(var / np);
        return se > 0.0 ? mean / se : 0.0;
    };

    CharacteristicsReport rep;
    for (int i = 0; i < d; ++i) {
        rep.drift_realized.push_back(acc.drift_real_sum[i] / np);
        rep.drift_model.push_back(acc.drift_model_sum[i] / np);
        rep.drift_z.push_back(zscore(acc.drift_diff_sum[i], acc.drift_diff_sq[i]));
        rep.qv_realized.push_back(acc.qv_real_sum[i] / np);
        rep.qv_model.push_back(acc.qv_model_sum[i] / np);
        rep.qv_z.push_back(zscore(acc.qv_diff_sum[i], acc.qv_diff_sq[i]));
    }
    const double span = ens.grid.horizon - ens.grid.start;
    for (std::size_t a = 0; a < n_atoms; ++a) {
        const double mean = acc.count_sum[a] / np;
        const double expected = spec.jumps.weights[a] * span;
        const double var = std::max(0.0, acc.count_sq[a] / np - mean * mean);
        const double se = std::sqrt(var / np);
        rep.jump_count_mean.push_back(mean);
        rep.jump_count_expected.push_back(expected);
        rep.jump_count_z.push_back(se > 0.0 ? (mean - expected) / se : 0.0);
        rep.mean_jump_count += mean;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Ensemble I/O: CSV (one row per path per node, metadata in a comment line)
// and a compact binary block. Both reproduce the ensemble exactly.
// ---------------------------------------------------------------------------

inline void write_ensemble_csv(std::ostream& os, const Ensemble& e) {
    nlohmann::json meta{{"dim", e.dim},
                        {"steps", e.grid.steps},
                        {"n_paths", e.n_paths},
                        {"seed", e.seed},
                        {"start", e.grid.start},
                        {"horizon", e.grid.horizon},
                        {"n_atoms", e.n_atoms},
                        {"prefix", path_to_json(e.prefix)}};
    if (!e.atom_counts.empty()) meta["atom_counts"] = e.atom_counts;
    os << "# pathbsde-ensemble v1\n# meta: " << meta.dump() << "\n";
    os << "path,k,t";
    for (int i = 1; i <= e.dim; ++i) os << ",x_" << i;
    os << ",jump_flag";
    for (int i = 1; i <= e.dim; ++i) os << ",dm_" << i;
    for (int i = 1; i <= e.dim; ++i) os << ",dj_" << i;
    os << "\n";
    for (std::size_t p = 0; p < e.n_paths; ++p) {
        for (int k = 0; k <= e.grid.steps; ++k) {
            os << p << ',' << k << ',' << format_double(e.grid.nodes[k]);
            const double* x = e.state(p, k);
            for (int i = 0; i < e.dim; ++i) os << ',' << format_double(x[i]);
            os << ',' << (k > 0 && e.jump_in_step(p, k - 1) ? 1 : 0);
            for (int i = 0; i < e.dim; ++i)
                os << ',' << (k > 0 ? format_double(e.dm(p, k - 1)[i]) : std::string{});
            for (int i = 0; i < e.dim; ++i)
                os << ','
                   << (k > 0 && e.dj(p, k - 1) ? format_double(e.dj(p, k - 1)[i])
                                               : std::string{});
            os << '\n';
        }
    }
}

inline Ensemble read_ensemble_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("# pathbsde-ensemble", 0) != 0)
        throw std::invalid_argument("not an ensemble CSV");
    if (!std::getline(is, line) || line.rfind("# meta: ", 0) != 0)
        throw std::invalid_argument("ensemble CSV missing metadata line");
    const auto meta = nlohmann::json::parse(line.substr(8));

    Ensemble e;
    e.dim = meta.at("dim").get<int>();
    e.n_paths = meta.at("n_paths").get<std::size_t>();
    e.seed = meta.at("seed").get<std::uint64_t>();
    e.n_atoms = meta.at("n_atoms").get<std::size_t>();
    e.prefix = path_from_json(meta.at("prefix"));
    e.grid = TimeGrid::uniform(meta.at("start").get<double>(), meta.at("horizon").get<double>(),
                               meta.at("steps").get<int>());
    if (meta.contains("atom_counts"))
        e.atom_counts = meta.at("atom_counts").get<std::vector<std::uint32_t>>();

    const int n = e.grid.steps, d = e.dim;
    e.states.assign(e.n_paths * (n + 1) * d, 0.0);
    e.dmart.assign(e.n_paths * n * d, 0.0);
    e.flags.assign(e.n_paths * n, 0);
    if (e.n_atoms) e.djump.assign(e.n_paths * n * d, 0.0);

    std::getline(is, line);  // header
    std::vector<double> node_times(n + 1, 0.0);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        cells.resize(3 + d + 1 + 2 * d);  // trailing empties may be dropped by getline
        const std::size_t p = static_cast<std::size_t>(parse_double(cells[0]));
        const int k = static_cast<int>(parse_double(cells[1]));
        node_times[k] = parse_double(cells[2]);
        for (int i = 0; i < d; ++i)
            e.states[(p * (n + 1) + k) * d + i] = parse_double(cells[3 + i]);
        if (k > 0) {
            e.flags[p * n + (k - 1)] = cells[3 + d] == "1" ? 1 : 0;
            for (int i = 0; i < d; ++i)
                e.dmart[(p * n + k - 1) * d + i] = parse_double(cells[4 + d + i]);
            if (e.n_atoms)
                for (int i = 0; i < d; ++i)
                    e.djump[(p * n + k - 1) * d + i] = parse_double(cells[4 + 2 * d + i]);
        }
    }
    e.grid.nodes = node_times;  // exact node times as serialized
    if (!e.n_atoms) e.flags.assign(e.n_paths * n, 0);
    return e;
}

namespace detail {

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::invalid_argument("truncated binary block");
    return v;
}
template <class T>
void put_vec(std::ostream& os, const std::vector<T>& v) {
    put<std::uint64_t>(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
}
template <class T>
std::vector<T> get_vec(std::istream& is) {
    const auto n = get<std::uint64_t>(is);
    std::vector<T> v(n);
    is.read(reinterpret_cast<char*>(v.data()), n * sizeof(T));
    if (!is) throw std::invalid_argument("truncated binary block");
    return v;
}

}  // namespace detail

/// Binary block: magic, header (d, n, n_paths, seed), grid and prefix, then
/// the little-endian double arrays.
inline void write_ensemble_binary(std::ostream& os, const Ensemble& e) {
    os.write("PBEN1\n", 6);
    detail::put<std::int32_t>(os, e.dim);
    detail::put<std::int32_t>(os, e.grid.steps);
    detail::put<std::uint64_t>(os, e.n_paths);
    detail::put<std::uint64_t>(os, e.seed);
    detail::put<double>(os, e.grid.start);
    detail::put<double>(os, e.grid.horizon);
    detail::put<double>(os, e.prefix.horizon());
    detail::put<std::uint64_t>(os, e.n_atoms);
    detail::put_vec(os, e.grid.nodes);
    detail::put_vec(os, e.prefix.times());
    detail::put_vec(os, e.prefix.raw_values());
    detail::put_vec(os, e.prefix.jump_flags());
    detail::put_vec(os, e.states);
    detail::put_vec(os, e.dmart);
    detail::put_vec(os, e.djump);
    detail::put_vec(os, e.flags);
    detail::put_vec(os, e.atom_counts);
}

inline Ensemble read_ensemble_binary(std::istream& is) {
    char magic[6];
    is.read(magic, 6);
    if (!is || std::string(magic, 6) != "PBEN1\n")
        throw std::invalid_argument("not an ensemble binary block");
    Ensemble e;
    e.dim = detail::get<std::int32_t>(is);
    const int steps = detail::get<std::int32_t>(is);
    e.n_paths = detail::get<std::uint64_t>(is);
    e.seed = detail::get<std::uint64_t>(is);
    const double start = detail::get<double>(is);
    const double horizon = detail::get<double>(is);
    const double prefix_horizon = detail::get<double>(is);
    e.n_atoms = detail::get<std::uint64_t>(is);
    e.grid = TimeGrid::uniform(start, horizon, steps);
    e.grid.nodes = detail::get_vec<double>(is);
    auto pt = detail::get_vec<double>(is);
    auto pv = detail::get_vec<double>(is);
    auto pf = detail::get_vec<std::uint8_t>(is);
    e.prefix = CadlagPath(std::move(pt), std::move(pv), e.dim, prefix_horizon, std::move(pf));
    e.states = detail::get_vec<double>(is);
    e.dmart = detail::get_vec<double>(is);
    e.djump = detail::get_vec<double>(is);
    e.flags = detail::get_vec<std::uint8_t>(is);
    e.atom_counts = detail::get_vec<std::uint32_t>(is);
    return e;
}

}  // namespace pathbsde
