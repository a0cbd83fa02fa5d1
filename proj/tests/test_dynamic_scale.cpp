#include "natsr/dynamic_scale.hpp"
#include "natsr/error.hpp"
#include "natsr/linalg.hpp"

#include <doctest.h>

#include <cmath>

using namespace natsr;

TEST_CASE("fixed point at e^2 = s^2") {
    ScaleState s;
    s.s2 = 2.25;
    const Vector e{1.5, -1.5, 1.5};
    CHECK(scale_step(s, e, 50.0).s2 == 2.25);
    CHECK(scale_increment(2.25, 1.5, 7.0) == 0.0);
}

TEST_CASE("one step reference value") {
    ScaleState s;
    s.s2 = 1.0;
    s.alpha_s = 0.1;
    const double next = scale_step(s, Vector{std::sqrt(2.0)}, 50.0).s2;
    CHECK(next == doctest::Approx(1.0 + 0.1 * 50.0 / 52.0).epsilon(1e-14));
    CHECK(next == doctest::Approx(1.096154).epsilon(1e-6));
}

TEST_CASE("converges monotonically to a constant squared error") {
    ScaleState s;
    s.s2 = 1.0;
    double prev = s.s2;
    for (int i = 0; i < 500; ++i) {
        s = scale_step(s, Vector{2.0}, 50.0);
        CHECK(s.s2 >= prev);
        CHECK(s.s2 <= 4.0);
        prev = s.s2;
    }
    CHECK(std::abs(s.s2 - 4.0) <= 1e-3);
}

TEST_CASE("mean increment over the errors and the floor") {
    ScaleState s;
    s.s2 = 1.0;
    const Vector e{0.0, 3.0};
    const double expect = 1.0 + 0.1 * 0.5 * (scale_increment(1.0, 0.0, 10.0) + scale_increment(1.0, 3.0, 10.0));
    CHECK(scale_step(s, e, 10.0).s2 == doctest::Approx(expect));

    s.s2 = 2e-4;
    s.alpha_s = 1.0;
    CHECK(scale_step(s, Vector{0.0}, 50.0).s2 == s.scale_floor);
    CHECK_THROWS_AS(scale_step(s, Vector{}, 50.0), InputError);
    CHECK_THROWS_AS(scale_step(s, Vector{NAN}, 50.0), NumericError);
}

TEST_CASE("an outlier moves the scale by a bounded amount") {
    for (double nu : {2.0, 50.0, 500.0}) {
        for (double s2 : {1e-3, 1.0, 1e3}) {
            for (double e : {1e-3, 1.0, 1e3, 1e9}) {
                CHECK(std::abs(scale_increment(s2, e, nu)) <= s2 * nu * (1.0 + 1e-12));
            }
        }
    }
}

TEST_CASE("tau from scale") {
    ScaleState s;
    s.s2 = 1.0;
    CHECK(tau_from_scale(s) == doctest::Approx(0.55).epsilon(1e-14));

    s.s2 = 1e8;
    CHECK(s.s2 * tau_from_scale(s) == doctest::Approx(1.0).epsilon(1e-6));
    s.s2 = 1e-4;
    CHECK(s.s2 * tau_from_scale(s) == doctest::Approx(0.1 + 0.9 * 1e-4 / (1.0 + 1e-4)).epsilon(1e-12));

    s.beta = 2.0;
    for (double lg = -4.0; lg <= 8.0; lg += 0.25) {
        s.s2 = std::pow(10.0, lg);
        const double eff = s.s2 * tau_from_scale(s);
        CHECK(eff >= 0.1 * s.beta);
        CHECK(eff <= s.beta);
    }

    ScaleState alt;
    alt.tau_variant = TauVariant::inverse_sum;
    alt.s2 = 3.0;
    CHECK(tau_from_scale(alt) == doctest::Approx(0.25));
    CHECK(parse_tau_variant("inverse_sum") == TauVariant::inverse_sum);
    CHECK(to_string(TauVariant::smooth) == "smooth");
    CHECK_THROWS_AS(parse_tau_variant("bogus"), ConfigError);
}
