#include <catch2/catch_amalgamated.hpp>

#include "pathbsde/scenario.hpp"
#include "pathbsde/validate.hpp"

using namespace pathbsde;

namespace {

const char* kBrownian = R"(
schema_version = 1

[model]
dimension = 1
horizon = 1.0
beta = const(0)
sigma = const(1)

[driver]
kind = zero

[terminal]
xi = coord(0)

[numerics]
steps = 100
paths = 10000
seed = 7
)";

const char* kJumpy = R"(
schema_version = 1

[model]
dimension = 1
horizon = 1.0
beta = const(0)
sigma = const(0)
atom = 1.0 2.0
gamma = const(1)

[driver]
kind = zero

[terminal]
xi = poly(0, 0, 0, 1)
)";

}  // namespace

TEST_CASE("minimal Brownian scenario parses") {
    const auto spec = load_scenario(std::string(kBrownian));
    CHECK(spec.dim == 1);
    CHECK(spec.horizon == 1.0);
    CHECK(spec.jumps.size() == 0);
    CHECK(spec.driver.is_zero());
    CHECK(spec.numerics.steps == 100);
    CHECK(spec.numerics.paths == 10000);
    CHECK(spec.numerics.seed == 7);
    CHECK(spec.clock.is_identity());
}

TEST_CASE("jump scenario parses atoms and gamma rows") {
    const auto spec = load_scenario(std::string(kJumpy));
    REQUIRE(spec.jumps.size() == 1);
    CHECK(spec.jumps.atoms[0][0] == 1.0);
    CHECK(spec.jumps.weights[0] == 2.0);
    REQUIRE(spec.gamma.size() == 1);
}

TEST_CASE("duplicate key is a parse error") {
    std::string text(kBrownian);
    text += "\n[numerics]\nsteps = 50\n";  // [numerics] appears twice -> duplicate 'steps'
    CHECK_THROWS_AS(load_scenario(text), ConfigError);
}

TEST_CASE("unknown key carries its line and section") {
    std::string text(kBrownian);
    text += "\n[model]\nwibble = 3\n";
    try {
        load_scenario(text);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("wibble") != std::string::npos);
        CHECK(msg.find("model") != std::string::npos);
        CHECK(msg.find("line") != std::string::npos);
    }
}

TEST_CASE("atom at zero violates the jump-measure invariant") {
    std::string text(kJumpy);
    const auto pos = text.find("atom = 1.0 2.0");
    text.replace(pos, 14, "atom = 0.0 2.0");
    CHECK_THROWS_AS(load_scenario(text), ConfigError);
}

TEST_CASE("unknown section and unknown driver kind are rejected") {
    std::string bad_section(kBrownian);
    bad_section += "\n[plotting]\ncolor = red\n";
    CHECK_THROWS_AS(load_scenario(bad_section), ConfigError);

    std::string bad_kind(kBrownian);
    const auto pos = bad_kind.find("kind = zero");
    bad_kind.replace(pos, 11, "kind = quadratic");
    try {
        load_scenario(bad_kind);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("kind") != std::string::npos);
    }
}

TEST_CASE("save then load is the identity on the canonical form") {
    for (const char* text : {kBrownian, kJumpy}) {
        const auto spec = load_scenario(std::string(text));
        const auto canon = save_scenario(spec);
        const auto reloaded = load_scenario(canon);
        CHECK(save_scenario(reloaded) == canon);
    }
}

TEST_CASE("clock table parses and interpolates") {
    std::string text(kBrownian);
    const auto pos = text.find("sigma = const(1)");
    text.insert(pos + 16, "\nclock = 0:0, 0.5:0.25, 1:1");
    const auto spec = load_scenario(text);
    CHECK_FALSE(spec.clock.is_identity());
    CHECK(spec.clock(0.25) == Catch::Approx(0.125));
    CHECK(spec.clock(0.75) == Catch::Approx(0.625));
    CHECK(spec.clock(2.0) == 1.0);
}

TEST_CASE("validator passes constant coefficients") {
    const auto spec = load_scenario(std::string(kBrownian));
    const auto report = validate_scenario(spec);
    CHECK(report.passed);
}

TEST_CASE("validator estimates a unit Lipschitz constant for a capped running max") {
    std::string text(kBrownian);
    const auto pos = text.find("sigma = const(1)");
    std::string t2 = text;
    t2.replace(pos, 16, "sigma = runmax(0, 5.0)");
    const auto spec = load_scenario(t2);
    const auto report = validate_scenario(spec, 128);
    CHECK(report.passed);
    bool found = false;
    for (const auto& c : report.conditions)
        if (c.name == "sigma local Lipschitz (exponent 1)") {
            found = true;
            CHECK(c.statistic <= 1.0 + 1e-9);
            CHECK(c.statistic > 0.5);  // quotient attains ~1 on perturbed pairs
        }
    CHECK(found);
}

TEST_CASE("validator rejects a quadratic driver against any declared K") {
    std::string text(kBrownian);
    const auto pos = text.find("kind = zero");
    text.replace(pos, 11, "kind = poly_y\nparams = 0 0 1\nlipschitz = 1.0");
    const auto spec = load_scenario(text);
    const auto report = validate_scenario(spec);
    CHECK_FALSE(report.passed);
    bool found = false;
    for (const auto& c : report.conditions)
        if (c.name == "driver Lipschitz within declared K") {
            found = true;
            CHECK_FALSE(c.passed);
        }
    CHECK(found);
}

TEST_CASE("validator hard-fails an unbounded coefficient") {
    std::string text(kBrownian);
    const auto pos = text.find("sigma = const(1)");
    text.replace(pos, 16, "sigma = coord(0)");
    const auto spec = load_scenario(text);
    const auto report = validate_scenario(spec);
    CHECK_FALSE(report.passed);
    CHECK_THROWS_AS(require_valid(spec), ValidationError);
}

TEST_CASE("evaluate_functional non-anticipativity holds for stopped arguments") {
    // evaluating at (t, path) equals evaluating at (t, stop(path, t))
    const auto spec = load_scenario(std::string(kJumpy));
    const auto p = CadlagPath({0.0, 0.3, 0.7}, {1.0, 2.0, -1.0}, 1, 1.0);
    const double t = 0.5;
    CHECK(evaluate_functional(spec.xi, t, p) ==
          evaluate_functional(spec.xi, t, stop(p, t)));
}
