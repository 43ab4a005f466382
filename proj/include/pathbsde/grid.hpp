#pragma once

#include <stdexcept>
#include <vector>

namespace pathbsde {

/// Discretization of [start, horizon]; uniform by default.
struct TimeGrid {
    double start = 0.0;
    double horizon = 1.0;
    int steps = 0;
    std::vector<double> nodes;  // steps + 1 entries, nodes.front() == start

    static TimeGrid uniform(double start, double horizon, int steps) {
        if (steps < 1) throw std::invalid_argument("time grid needs at least one step");
        if (!(horizon > start)) throw std::invalid_argument("horizon must exceed start");
        TimeGrid g;
        g.start = start;
        g.horizon = horizon;
        g.steps = steps;
        g.nodes.resize(steps + 1);
        for (int k = 0; k <= steps; ++k)
            g.nodes[k] = start + (horizon - start) * static_cast<double>(k) / steps;
        g.nodes[0] = start;
        g.nodes[steps] = horizon;
        return g;
    }

    double dt(int k) const { return nodes[k + 1] - nodes[k]; }

    double max_step() const {
        double m = 0.0;
        for (int k = 0; k < steps; ++k) m = std::max(m, dt(k));
        return m;
    }

    /// Node index of time t, or -1 when t is not a node.
    int node_of(double t, double tol = 1e-12) const {
        for (int k = 0; k <= steps; ++k)
            if (std::abs(nodes[k] - t) <= tol * std::max(1.0, std::abs(t))) return k;
        return -1;
    }

    bool operator==(const TimeGrid& o) const {
        return start == o.start && horizon == o.horizon && steps == o.steps && nodes == o.nodes;
    }
};

}  // namespace pathbsde
