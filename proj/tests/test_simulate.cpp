#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "pathbsde/parallel.hpp"
#include "pathbsde/simulate.hpp"

using namespace pathbsde;

namespace {

ScenarioSpec make_spec(double beta, double sigma, double gamma = 0.0, double weight = 0.0,
                       double T = 1.0) {
    ScenarioSpec s;
    s.dim = 1;
    s.horizon = T;
    s.beta = {FunctionalSpec::constant(beta)};
    s.sigma = {FunctionalSpec::constant(sigma)};
    if (weight > 0.0) {
        s.jumps.atoms = {{1.0}};
        s.jumps.weights = {weight};
        s.gamma = {{FunctionalSpec::constant(gamma)}};
    }
    s.driver = DriverSpec::zero();
    s.xi = FunctionalSpec::coordinate(0);
    return s;
}

PointedPath flat_start(double s, double level, double T) {
    return PointedPath(s, CadlagPath::constant(level, T));
}

}  // namespace

TEST_CASE("all increments vanish when coefficients are zero") {
    const auto spec = make_spec(0.0, 0.0);
    const auto ens = simulate(spec, flat_start(0.0, 1.5, 1.0), TimeGrid::uniform(0, 1, 20),
                              100, 42);
    for (std::size_t p = 0; p < ens.n_paths; ++p)
        for (int k = 0; k <= 20; ++k) CHECK(ens.state(p, k)[0] == 1.5);
}

TEST_CASE("constant drift integrates exactly") {
    const auto spec = make_spec(1.0, 0.0);
    const auto ens =
        simulate(spec, flat_start(0.0, 0.0, 1.0), TimeGrid::uniform(0, 1, 50), 32, 1);
    for (std::size_t p = 0; p < ens.n_paths; ++p)
        CHECK(ens.state(p, 50)[0] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("Brownian moments at the horizon") {
    const auto spec = make_spec(0.0, 1.0);
    const std::size_t n = 100000;
    const auto ens =
        simulate(spec, flat_start(0.0, 0.0, 1.0), TimeGrid::uniform(0, 1, 64), n, 7);
    double sum = 0.0, sq = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const double x = ens.state(p, 64)[0];
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));  // 4 stderr of N(0,1)
    CHECK(var == Catch::Approx(1.0).epsilon(0.05));
}

TEST_CASE("initial segment is pinned to the stopped start path") {
    // start path with history: ramp up to s = 0.5
    const CadlagPath eta({0.0, 0.2, 0.4}, {1.0, 1.2, 1.4}, 1, 1.0);
    const PointedPath start(0.5, eta);
    const auto spec = make_spec(0.0, 1.0);
    const auto ens = simulate(spec, start, TimeGrid::uniform(0.5, 1.0, 10), 50, 3);
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        const auto path = ens.path(p);
        for (double r : {0.0, 0.1, 0.2, 0.3, 0.45})
            CHECK(path.evaluate(r, 0) == eta.evaluate(r, 0));
        CHECK(path.evaluate(0.5, 0) == eta.evaluate(0.5, 0));
    }
}

TEST_CASE("martingale part increments are centered") {
    const auto spec = make_spec(0.7, 1.0, 1.0, 2.0);
    const std::size_t n = 20000;
    const auto ens =
        simulate(spec, flat_start(0.0, 0.0, 1.0), TimeGrid::uniform(0, 1, 25), n, 11);
    for (int k = 0; k < 25; ++k) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            const double v = ens.dm(p, k)[0];
            sum += v;
            sq += v * v;
        }
        const double mean = sum / n;
        const double se = std::sqrt((sq / n - mean * mean) / n);
        CHECK(std::abs(mean) <= 4.0 * se);
    }
}

TEST_CASE("determinism across worker counts") {
    const auto spec = make_spec(0.1, 0.8, 0.5, 1.0);
    const auto start = flat_start(0.0, 0.3, 1.0);
    const auto grid = TimeGrid::uniform(0, 1, 30);
    set_thread_count(1);
    const auto a = simulate(spec, start, grid, 5000, 99);
    set_thread_count(4);
    const auto b = simulate(spec, start, grid, 5000, 99);
    set_thread_count(8);
    const auto c = simulate(spec, start, grid, 5000, 99);
    set_thread_count(1);
    CHECK(a == b);
    CHECK(a == c);
}

TEST_CASE("resimulate_from") {
    const auto spec = make_spec(0.0, 0.0);
    const auto outer =
        simulate(spec, flat_start(0.0, 2.0, 1.0), TimeGrid::uniform(0, 1, 10), 4, 5);
    SECTION("zero-coefficient inner paths stay at the restart value") {
        const auto inner = resimulate_from(spec, outer.path(0), 0.5,
                                           TimeGrid::uniform(0.5, 1.0, 5), 20, 6);
        for (std::size_t p = 0; p < inner.n_paths; ++p)
            CHECK(inner.state(p, 5)[0] == 2.0);
    }
    SECTION("restart off the grid is rejected") {
        CHECK_THROWS_AS(resimulate_from(spec, outer.path(0), 0.123,
                                        TimeGrid::uniform(0.123, 1.0, 5), 20, 6),
                        std::invalid_argument);
    }
    SECTION("compensated pure-jump restart is centered") {
        const auto jump_spec = make_spec(0.0, 0.0, 1.0, 2.0);
        const auto out2 = simulate(jump_spec, flat_start(0.0, 0.0, 1.0),
                                   TimeGrid::uniform(0, 1, 40), 4, 21);
        const auto inner = resimulate_from(jump_spec, out2.path(1), 0.5,
                                           TimeGrid::uniform(0.5, 1.0, 20), 20000, 22);
        const double x_t = out2.path(1).evaluate(0.5, 0);
        double sum = 0.0, sq = 0.0;
        for (std::size_t p = 0; p < inner.n_paths; ++p) {
            const double inc = inner.state(p, 20)[0] - x_t;
            sum += inc;
            sq += inc * inc;
        }
        const double mean = sum / inner.n_paths;
        const double se = std::sqrt((sq / inner.n_paths - mean * mean) / inner.n_paths);
        CHECK(std::abs(mean) <= 4.0 * se);
    }
}

TEST_CASE("empirical characteristics") {
    SECTION("drift-only: estimate is exact") {
        const auto spec = make_spec(0.5, 0.0);
        const auto ens = simulate(spec, flat_start(0.0, 0.0, 1.0),
                                  TimeGrid::uniform(0, 1, 40), 2000, 17);
        const auto rep = empirical_characteristics(ens, spec);
        CHECK(rep.drift_realized[0] == Catch::Approx(0.5).margin(1e-12));
        CHECK(rep.drift_model[0] == Catch::Approx(0.5).margin(1e-12));
    }
    SECTION("Brownian realized quadratic variation") {
        const auto spec = make_spec(0.0, 1.0);
        const auto ens = simulate(spec, flat_start(0.0, 0.0, 1.0),
                                  TimeGrid::uniform(0, 1, 1000), 10000, 29);
        const auto rep = empirical_characteristics(ens, spec);
        CHECK(rep.qv_realized[0] == Catch::Approx(1.0).epsilon(0.05));
        CHECK(std::abs(rep.qv_z[0]) <= 4.0);
    }
    SECTION("Poisson jump counts") {
        const auto spec = make_spec(0.0, 0.0, 1.0, 2.0);
        const auto ens = simulate(spec, flat_start(0.0, 0.0, 1.0),
                                  TimeGrid::uniform(0, 1, 100), 20000, 31);
        const auto rep = empirical_characteristics(ens, spec);
        CHECK(std::abs(rep.jump_count_z[0]) <= 4.0);
        CHECK(rep.jump_count_mean[0] == Catch::Approx(2.0).epsilon(0.05));
    }
}

TEST_CASE("refining the grid does not degrade a weak estimate") {
    // E[X_1^2] = 1 for standard Brownian motion; with constant coefficients
    // the scheme is exact in law at the nodes, so the error stays at the
    // Monte Carlo noise level across refinements.
    const auto spec = make_spec(0.0, 1.0);
    std::vector<double> errs;
    for (int steps : {25, 50, 100}) {
        const auto ens = simulate(spec, flat_start(0.0, 0.0, 1.0),
                                  TimeGrid::uniform(0, 1, steps), 40000, 101);
        double sq = 0.0;
        for (std::size_t p = 0; p < ens.n_paths; ++p) {
            const double x = ens.state(p, steps)[0];
            sq += x * x;
        }
        errs.push_back(std::abs(sq / ens.n_paths - 1.0));
    }
    const double stderr_bound = 4.0 * std::sqrt(2.0 / 40000.0);
    for (double e : errs) CHECK(e <= stderr_bound);
}

TEST_CASE("simulation failure reports path and step") {
    auto spec = make_spec(0.0, 0.0);
    spec.beta = {FunctionalSpec::current_poly(0, {0.0, 0.0, 0.0, 1.0})};  // x^3 drift explodes
    try {
        simulate(spec, flat_start(0.0, 10.0, 1.0), TimeGrid::uniform(0, 1, 12), 1, 0);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("path 0") != std::string::npos);
        CHECK(msg.find("step") != std::string::npos);
    }
}

TEST_CASE("zero-step grids are rejected") {
    CHECK_THROWS_AS(TimeGrid::uniform(0, 1, 0), std::invalid_argument);
}

TEST_CASE("ensemble csv and binary round-trips") {
    const auto spec = make_spec(0.2, 0.5, 1.0, 1.5);
    const CadlagPath eta({0.0, 0.1}, {0.0, 0.5}, 1, 1.0, {0, 1});
    const auto ens =
        simulate(spec, PointedPath(0.25, eta), TimeGrid::uniform(0.25, 1.0, 12), 40, 77);

    std::stringstream csv;
    write_ensemble_csv(csv, ens);
    const auto back = read_ensemble_csv(csv);
    CHECK(back == ens);

    std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
    write_ensemble_binary(bin, ens);
    const auto back2 = read_ensemble_binary(bin);
    CHECK(back2 == ens);
}
