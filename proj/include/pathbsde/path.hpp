#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace pathbsde {

/// Right-continuous piecewise-constant path on a finite time grid, with
/// constant extrapolation after its last node. Values are stored row-major
/// (one R^d point per grid time). Immutable after construction.
///
/// A jump flag per node records whether a driving Poisson arrival produced
/// the node's value; surgeries and serialization carry the flags along.
class CadlagPath {
public:
    CadlagPath(std::vector<double> times, std::vector<double> values, int dim, double horizon,
               std::vector<std::uint8_t> jump_flags = {})
        : times_(std::move(times)),
          values_(std::move(values)),
          jumps_(std::move(jump_flags)),
          horizon_(horizon),
          dim_(dim) {
        if (dim_ < 1) throw std::invalid_argument("path dimension must be >= 1");
        if (!(horizon_ > 0.0)) throw std::invalid_argument("path horizon must be > 0");
        if (times_.empty()) throw std::invalid_argument("path needs at least one grid time");
        if (times_.front() != 0.0) throw std::invalid_argument("grid must start at time 0");
        if (values_.size() != times_.size() * static_cast<std::size_t>(dim_))
            throw std::invalid_argument("value count does not match grid times x dimension");
        for (std::size_t k = 1; k < times_.size(); ++k)
            if (!(times_[k] > times_[k - 1]))
                throw std::invalid_argument("grid times must be strictly increasing");
        if (times_.back() > horizon_ + 1e-12 * std::max(1.0, horizon_))
            throw std::invalid_argument("last grid time exceeds horizon");
        for (double v : values_)
            if (!std::isfinite(v)) throw std::invalid_argument("path values must be finite");
        if (jumps_.empty())
            jumps_.assign(times_.size(), 0);
        else if (jumps_.size() != times_.size())
            throw std::invalid_argument("jump flag count does not match grid times");
    }

    /// Constant path at a given point of R^d.
    static CadlagPath constant(std::span<const double> x, double horizon) {
        return CadlagPath({0.0}, {x.begin(), x.end()}, static_cast<int>(x.size()), horizon);
    }
    static CadlagPath constant(double x, double horizon) {
        return CadlagPath({0.0}, {x}, 1, horizon);
    }

    int dim() const { return dim_; }
    double horizon() const { return horizon_; }
    std::size_t size() const { return times_.size(); }
    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& raw_values() const { return values_; }
    const std::vector<std::uint8_t>& jump_flags() const { return jumps_; }

    double time(std::size_t k) const { return times_[k]; }
    bool jump_at(std::size_t k) const { return jumps_[k] != 0; }
    std::span<const double> value(std::size_t k) const {
        return {values_.data() + k * dim_, static_cast<std::size_t>(dim_)};
    }

    /// Index of the last grid time <= t (right-continuity). t < 0 is a domain
    /// error; t past the last node returns the last index.
    std::size_t node_index(double t) const {
        if (t < 0.0) throw std::invalid_argument("evaluation time must be >= 0");
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        return static_cast<std::size_t>(it - times_.begin()) - 1;
    }

    std::span<const double> evaluate(double t) const { return value(node_index(t)); }
    double evaluate(double t, int coord) const { return evaluate(t)[coord]; }

    /// Left limit at t > 0: the value held just before t.
    std::span<const double> left_limit(double t) const {
        if (!(t > 0.0)) throw std::invalid_argument("left limit requires t > 0");
        const auto it = std::lower_bound(times_.begin(), times_.end(), t);
        const std::size_t k = static_cast<std::size_t>(it - times_.begin());
        return value(k == 0 ? 0 : k - 1);
    }

    bool operator==(const CadlagPath& o) const {
        return dim_ == o.dim_ && horizon_ == o.horizon_ && times_ == o.times_ &&
               values_ == o.values_ && jumps_ == o.jumps_;
    }

private:
    std::vector<double> times_;
    std::vector<double> values_;
    std::vector<std::uint8_t> jumps_;
    double horizon_;
    int dim_;
};

/// The path stopped at t: equal on [0,t], constant afterwards.
inline CadlagPath stop(const CadlagPath& p, double t) {
    if (t < 0.0) throw std::invalid_argument("stop time must be >= 0");
    const std::size_t keep = p.node_index(t) + 1;
    std::vector<double> times(p.times().begin(), p.times().begin() + keep);
    std::vector<double> values(p.raw_values().begin(),
                               p.raw_values().begin() + keep * p.dim());
    std::vector<std::uint8_t> flags(p.jump_flags().begin(), p.jump_flags().begin() + keep);
    return CadlagPath(std::move(times), std::move(values), p.dim(), p.horizon(),
                      std::move(flags));
}

/// The path frozen at its left limit from t on: equals p on [0,t), equals
/// p(t-) on [t,infinity). Removes any jump occurring exactly at t.
inline CadlagPath pre_stop(const CadlagPath& p, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("pre_stop requires t > 0 (left limit undefined)");
    const auto& ts = p.times();
    const auto it = std::lower_bound(ts.begin(), ts.end(), t);
    std::size_t keep = static_cast<std::size_t>(it - ts.begin());  // nodes with time < t
    if (keep == 0) keep = 1;  // t below first positive node: left limit is the initial value
    std::vector<double> times(ts.begin(), ts.begin() + keep);
    std::vector<double> values(p.raw_values().begin(),
                               p.raw_values().begin() + keep * p.dim());
    std::vector<std::uint8_t> flags(p.jump_flags().begin(), p.jump_flags().begin() + keep);
    return CadlagPath(std::move(times), std::move(values), p.dim(), p.horizon(),
                      std::move(flags));
}

/// Adds x to the path from time t on (Dupire's vertical bump); a grid node is
/// inserted at t when absent.
inline CadlagPath vertical_bump(const CadlagPath& p, double t, std::span<const double> x) {
    if (t < 0.0 || t > p.horizon())
        throw std::invalid_argument("bump time must lie in [0, horizon]");
    if (static_cast<int>(x.size()) != p.dim())
        throw std::invalid_argument("bump dimension mismatch");
    std::vector<double> times = p.times();
    std::vector<double> values = p.raw_values();
    std::vector<std::uint8_t> flags = p.jump_flags();
    const int d = p.dim();

    auto it = std::lower_bound(times.begin(), times.end(), t);
    std::size_t first;  // first node index at time >= t, node at t guaranteed
    if (it != times.end() && *it == t) {
        first = static_cast<std::size_t>(it - times.begin());
    } else {
        first = static_cast<std::size_t>(it - times.begin());
        const std::size_t base = (first - 1) * d;
        times.insert(times.begin() + first, t);
        values.insert(values.begin() + first * d, values.begin() + base,
                      values.begin() + base + d);
        flags.insert(flags.begin() + first, 0);
    }
    for (std::size_t k = first; k < times.size(); ++k)
        for (int i = 0; i < d; ++i) values[k * d + i] += x[i];
    return CadlagPath(std::move(times), std::move(values), d, p.horizon(), std::move(flags));
}

inline CadlagPath vertical_bump(const CadlagPath& p, double t, double x) {
    return vertical_bump(p, t, std::span<const double>{&x, 1});
}

/// A start condition (s, eta) with eta constant after s. The constructor
/// stops the supplied path at s, which enforces the invariant.
class PointedPath {
public:
    PointedPath(double s, const CadlagPath& eta) : s_(s), eta_(stop(eta, s)) {
        if (s < 0.0 || s > eta.horizon())
            throw std::invalid_argument("start time must lie in [0, horizon]");
    }

    double start_time() const { return s_; }
    const CadlagPath& path() const { return eta_; }
    std::span<const double> start_value() const { return eta_.evaluate(s_); }

    bool operator==(const PointedPath& o) const { return s_ == o.s_ && eta_ == o.eta_; }

private:
    double s_;
    CadlagPath eta_;
};

/// Dupire distance sup_t |eta2(t)-eta1(t)|_inf + |s2-s1| over the merged grid.
inline double d_infinity(const PointedPath& a, const PointedPath& b) {
    const CadlagPath& p = a.path();
    const CadlagPath& q = b.path();
    if (p.horizon() != q.horizon()) throw std::invalid_argument("horizon mismatch");
    if (p.dim() != q.dim()) throw std::invalid_argument("dimension mismatch");
    double sup = 0.0;
    std::size_t i = 0, j = 0;
    const int d = p.dim();
    while (i < p.size() || j < q.size()) {
        double t;
        if (j >= q.size() || (i < p.size() && p.time(i) <= q.time(j)))
            t = p.time(i++);
        else
            t = q.time(j++);
        const auto u = p.evaluate(t);
        const auto v = q.evaluate(t);
        for (int k = 0; k < d; ++k) sup = std::max(sup, std::abs(u[k] - v[k]));
    }
    return sup + std::abs(a.start_time() - b.start_time());
}

// ---------------------------------------------------------------------------
// Serialization. Doubles are printed with the shortest round-trip decimal
// representation (std::to_chars), so text formats are bit-exact.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw std::invalid_argument("bad floating point literal: '" + std::string(s) + "'");
    return v;
}

/// CSV form: header "t,x_1,...,x_d,jump_flag", one row per grid node.
inline void write_path_csv(std::ostream& os, const CadlagPath& p) {
    os << "t";
    for (int i = 1; i <= p.dim(); ++i) os << ",x_" << i;
    os << ",jump_flag\n";
    for (std::size_t k = 0; k < p.size(); ++k) {
        os << format_double(p.time(k));
        for (double v : p.value(k)) os << ',' << format_double(v);
        os << ',' << (p.jump_at(k) ? 1 : 0) << '\n';
    }
}

/// JSON array form: {"horizon": T, "dim": d, "nodes": [[t, x_1..x_d, flag], ...]}.
inline nlohmann::json path_to_json(const CadlagPath& p) {
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t k = 0; k < p.size(); ++k) {
        nlohmann::json row = nlohmann::json::array();
        row.push_back(p.time(k));
        for (double v : p.value(k)) row.push_back(v);
        row.push_back(p.jump_at(k) ? 1 : 0);
        nodes.push_back(std::move(row));
    }
    return nlohmann::json{{"horizon", p.horizon()}, {"dim", p.dim()}, {"nodes", std::move(nodes)}};
}

inline CadlagPath path_from_json(const nlohmann::json& j) {
    const int d = j.at("dim").get<int>();
    const double horizon = j.at("horizon").get<double>();
    std::vector<double> times, values;
    std::vector<std::uint8_t> flags;
    for (const auto& row : j.at("nodes")) {
        if (static_cast<int>(row.size()) != d + 2)
            throw std::invalid_argument("path JSON node has wrong arity");
        times.push_back(row[0].get<double>());
        for (int i = 0; i < d; ++i) values.push_back(row[1 + i].get<double>());
        flags.push_back(row[d + 1].get<int>() ? 1 : 0);
    }
    return CadlagPath(std::move(times), std::move(values), d, horizon, std::move(flags));
}

inline CadlagPath read_path_csv(std::istream& is, double horizon) {
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("empty path CSV");
    int d = -1;
    {
        int cols = 1;
        for (char c : line) cols += (c == ',');
        d = cols - 2;
        if (d < 1) throw std::invalid_argument("path CSV header needs t,x_1,..,jump_flag");
    }
    std::vector<double> times, values;
    std::vector<std::uint8_t> flags;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (static_cast<int>(cells.size()) != d + 2)
            throw std::invalid_argument("path CSV row has wrong arity");
        times.push_back(parse_double(cells[0]));
        for (int i = 0; i < d; ++i) values.push_back(parse_double(cells[1 + i]));
        flags.push_back(cells.back() == "1" ? 1 : 0);
    }
    return CadlagPath(std::move(times), std::move(values), d, horizon, std::move(flags));
}

}  // namespace pathbsde
