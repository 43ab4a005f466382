#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pathbsde/functional.hpp"
#include "pathbsde/rng.hpp"

using namespace pathbsde;

namespace {

CadlagPath random_grid_path(std::uint64_t seed, int dim, double horizon, int nodes,
                            double box = 2.0) {
    SubstreamRng rng(seed, 0, 0);
    std::vector<double> times{0.0};
    while (static_cast<int>(times.size()) < nodes)
        times.push_back(rng.next_uniform() * horizon);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    std::vector<double> values;
    for (std::size_t k = 0; k < times.size() * dim; ++k)
        values.push_back((2.0 * rng.next_uniform() - 1.0) * box);
    return CadlagPath(std::move(times), std::move(values), dim, horizon);
}

}  // namespace

TEST_CASE("basic catalog evaluations") {
    const auto p = random_grid_path(1, 2, 1.0, 8);
    const double t = 0.62;
    CHECK(evaluate_functional(FunctionalSpec::coordinate(1), t, p) == p.evaluate(t, 1));
    CHECK(evaluate_functional(FunctionalSpec::constant(3.5), t, p) == 3.5);

    const auto sq = FunctionalSpec::product(FunctionalSpec::coordinate(0),
                                            FunctionalSpec::coordinate(0));
    CHECK(evaluate_functional(sq, t, p) == Catch::Approx(p.evaluate(t, 0) * p.evaluate(t, 0)));

    const auto c = CadlagPath::constant(1.7, 1.0);
    CHECK(evaluate_functional(FunctionalSpec::running_integral(0), 0.4, c) ==
          Catch::Approx(1.7 * 0.4));
}

TEST_CASE("running integral is exact on grids and frozen after the horizon") {
    const auto p = CadlagPath({0.0, 0.25, 0.5}, {1.0, 2.0, 4.0}, 1, 1.0);
    const auto ri = FunctionalSpec::running_integral(0);
    CHECK(evaluate_functional(ri, 0.25, p) == Catch::Approx(0.25));
    CHECK(evaluate_functional(ri, 0.5, p) == Catch::Approx(0.25 + 0.5));
    CHECK(evaluate_functional(ri, 1.0, p) == Catch::Approx(0.75 + 4.0 * 0.5));
    CHECK(evaluate_functional(ri, 3.0, p) == evaluate_functional(ri, 1.0, p));
}

TEST_CASE("running max tracks |value| and honors its cap") {
    const auto p = CadlagPath({0.0, 0.3, 0.6}, {1.0, -5.0, 2.0}, 1, 1.0);
    CHECK(evaluate_functional(FunctionalSpec::running_max(0), 0.1, p) == 1.0);
    CHECK(evaluate_functional(FunctionalSpec::running_max(0), 0.5, p) == 5.0);
    CHECK(evaluate_functional(FunctionalSpec::running_max(0, 3.0), 0.5, p) == 3.0);
}

TEST_CASE("non-anticipativity: bumps strictly after t do not change the value") {
    const auto specs = std::vector<FunctionalSpec>{
        FunctionalSpec::coordinate(0),
        FunctionalSpec::current_poly(0, {0.0, 0.0, 1.0}),
        FunctionalSpec::running_integral(0),
        FunctionalSpec::running_max(0),
        FunctionalSpec::sum({FunctionalSpec::running_integral(0),
                             FunctionalSpec::time_weighted(FunctionalSpec::coordinate(0),
                                                           {1.0, -1.0})}),
    };
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto p = random_grid_path(40 + s, 1, 1.0, 9);
        const double t = 0.45;
        const auto bumped = vertical_bump(p, 0.7, 2.5);
        for (const auto& f : specs)
            CHECK(evaluate_functional(f, t, p) ==
                  Catch::Approx(evaluate_functional(f, t, bumped)).margin(1e-14));
    }
}

TEST_CASE("polynomial growth declarations hold on random paths") {
    const double T = 1.0;
    const auto specs = std::vector<FunctionalSpec>{
        FunctionalSpec::constant(2.0),
        FunctionalSpec::coordinate(0),
        FunctionalSpec::current_poly(0, {1.0, -2.0, 0.5}),
        FunctionalSpec::running_integral(0),
        FunctionalSpec::running_max(0, 2.5),
        FunctionalSpec::product(FunctionalSpec::coordinate(0),
                                FunctionalSpec::running_integral(0)),
        FunctionalSpec::scale(-3.0, FunctionalSpec::coordinate(0)),
        FunctionalSpec::time_weighted(FunctionalSpec::running_integral(0), {1.0, 2.0}),
    };
    for (const auto& f : specs) {
        const auto g = growth(f, T);
        for (std::uint64_t s = 0; s < 20; ++s) {
            const auto p = random_grid_path(90 + s, 1, T, 7, 4.0);
            const double t = 0.083 * (s + 1);
            double sup = 0.0;
            for (std::size_t k = 0; k <= p.node_index(t); ++k)
                sup = std::max(sup, std::abs(p.value(k)[0]));
            const double bound = g.C * (1.0 + std::pow(sup, g.p));
            CHECK(std::abs(evaluate_functional(f, t, p)) <= bound + 1e-12);
        }
    }
}

TEST_CASE("sweep agrees with point evaluation at every node") {
    const auto specs = std::vector<FunctionalSpec>{
        FunctionalSpec::running_integral(0),
        FunctionalSpec::running_max(1),
        FunctionalSpec::product(FunctionalSpec::coordinate(0), FunctionalSpec::coordinate(1)),
        FunctionalSpec::time_weighted(
            FunctionalSpec::sum({FunctionalSpec::running_integral(1),
                                 FunctionalSpec::current_poly(0, {0.0, 1.0, 1.0})}),
            {0.5, 1.0, -0.25}),
    };
    const auto p = random_grid_path(7, 2, 1.0, 11);
    for (const auto& f : specs) {
        FunctionalSweep sweep(f, 2);
        sweep.reset();
        for (std::size_t k = 0; k < p.size(); ++k) {
            sweep.push(p.time(k), p.value(k).data());
            CHECK(sweep.value() ==
                  Catch::Approx(evaluate_functional(f, p.time(k), p)).margin(1e-13));
        }
    }
}

TEST_CASE("sweep bump evaluation equals path surgery") {
    const auto specs = std::vector<FunctionalSpec>{
        FunctionalSpec::current_poly(0, {0.0, 0.0, 1.0}),
        FunctionalSpec::running_integral(0),
        FunctionalSpec::running_max(0),
        FunctionalSpec::product(FunctionalSpec::coordinate(0),
                                FunctionalSpec::running_integral(0)),
    };
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto p = random_grid_path(123 + s, 1, 1.0, 9);
        const std::size_t node = 4;
        const double t = p.time(node);
        const double bump = (s % 2 ? -0.8 : 1.3);
        const auto surged = vertical_bump(p, t, bump);
        for (const auto& f : specs) {
            FunctionalSweep sweep(f, 1);
            sweep_path(sweep, p, node);
            const double xb = p.value(node)[0] + bump;
            CHECK(sweep.value_replaced(&xb) ==
                  Catch::Approx(evaluate_functional(f, t, surged)).margin(1e-13));
        }
    }
}

TEST_CASE("closed-form derivatives on catalog members") {
    const auto p = CadlagPath({0.0, 0.2, 0.5}, {1.0, 3.0, -2.0}, 1, 1.0);
    const double T = 1.0;

    SECTION("coordinate: gradient e_i, flat hessian, zero horizontal") {
        FunctionalSweep sweep(FunctionalSpec::coordinate(0), 1);
        sweep_path(sweep, p, 1);
        double g, h;
        sweep.gradient(&g);
        sweep.hessian(&h);
        CHECK(g == 1.0);
        CHECK(h == 0.0);
        CHECK(sweep.horizontal() == 0.0);
    }
    SECTION("square of the value: gradient 2x, hessian 2") {
        FunctionalSweep sweep(FunctionalSpec::current_poly(0, {0.0, 0.0, 1.0}), 1);
        sweep_path(sweep, p, 1);  // value 3
        double g, h;
        sweep.gradient(&g);
        sweep.hessian(&h);
        CHECK(g == Catch::Approx(6.0));
        CHECK(h == Catch::Approx(2.0));
    }
    SECTION("running integral: horizontal is the current value") {
        FunctionalSweep sweep(FunctionalSpec::running_integral(0), 1);
        sweep_path(sweep, p, 2);  // value -2 at the node
        double g;
        sweep.gradient(&g);
        CHECK(g == 0.0);
        CHECK(sweep.horizontal() == Catch::Approx(-2.0));
    }
    SECTION("time-weighted horizontal uses the product rule") {
        // Phi_t = (T - t) * x(t): D Phi = -x(t)
        FunctionalSweep sweep(
            FunctionalSpec::time_weighted(FunctionalSpec::coordinate(0), {T, -1.0}), 1);
        sweep_path(sweep, p, 1);
        CHECK(sweep.horizontal() == Catch::Approx(-3.0));
    }
    SECTION("running max declares no closed form") {
        CHECK_FALSE(has_closed_form(FunctionalSpec::running_max(0)));
        FunctionalSweep sweep(FunctionalSpec::running_max(0), 1);
        sweep_path(sweep, p, 1);
        double g;
        CHECK_THROWS_AS(sweep.gradient(&g), std::logic_error);
    }
}

TEST_CASE("expression parse and canonical format round-trip") {
    const std::vector<std::string> exprs{
        "const(1.5)",
        "coord(0)",
        "poly(1, 0, 0, 1)",
        "runint(0)",
        "runmax(0, 2.5)",
        "prod(coord(0), runint(0))",
        "sum(runint(0), tpoly(coord(0), 1, -1))",
        "scale(-2, coord(1))",
    };
    for (const auto& e : exprs) {
        const auto f = parse_functional(e);
        const auto canon = format_functional(f);
        const auto g = parse_functional(canon);
        CHECK(format_functional(g) == canon);
    }
}

TEST_CASE("parse errors are rejected") {
    CHECK_THROWS_AS(parse_functional("frobnicate(1)"), std::invalid_argument);
    CHECK_THROWS_AS(parse_functional("coord(0) trailing"), std::invalid_argument);
    CHECK_THROWS_AS(parse_functional("prod(coord(0))"), std::invalid_argument);
    CHECK_THROWS_AS(parse_functional("const()"), std::invalid_argument);
    CHECK_THROWS_AS(parse_functional("poly(0)"), std::invalid_argument);
}

TEST_CASE("dimension checking") {
    CHECK_THROWS_AS(check_dimensions(FunctionalSpec::coordinate(2), 2), std::invalid_argument);
    CHECK_NOTHROW(check_dimensions(FunctionalSpec::coordinate(1), 2));
    CHECK_THROWS_AS(FunctionalSweep(FunctionalSpec::coordinate(1), 1), std::invalid_argument);
}
