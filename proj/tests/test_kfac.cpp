#include "natsr/error.hpp"
#include "natsr/kfac.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace natsr;

namespace {

NetworkSpec spec_of(std::size_t in, std::vector<std::size_t> hidden, std::size_t out) {
    NetworkSpec s;
    s.input_dim = in;
    s.hidden_dims = std::move(hidden);
    s.output_dim = out;
    s.activation = Activation::tanh;
    return s;
}

Vector random_vector(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    Vector v(n);
    for (double& x : v) {
        x = d(rng);
    }
    return v;
}

Matrix random_spd(std::size_t n, std::mt19937_64& rng) {
    Matrix b(n, n);
    for (double& v : b.data()) {
        v = std::normal_distribution<double>(0.0, 1.0)(rng);
    }
    Matrix s = matmul(b, b.transposed());
    for (std::size_t i = 0; i < n; ++i) {
        s(i, i) += 0.1;
    }
    return s;
}

/// Block-diagonal (A⊗G + τI) assembled explicitly in the flat parameter order.
Matrix explicit_kfac_matrix(const Network& net, const std::vector<KronFactors>& f, double tau) {
    const std::size_t P = net.param_count();
    Matrix m(P, P);
    for (std::size_t l = 0; l < f.size(); ++l) {
        const Matrix k = oracle::kron(f[l].a, f[l].g);
        const std::size_t out = net.layers()[l].out;
        const std::size_t cols = net.layers()[l].in + 1;
        // vec-cols index of block entry (r, c) is c·out + r; map it to the flat slot.
        std::vector<std::size_t> flat_of(out * cols);
        for (std::size_t c = 0; c < cols; ++c) {
            for (std::size_t r = 0; r < out; ++r) {
                Matrix block(out, cols);
                block(r, c) = 1.0;
                Vector flat(P, 0.0);
                net.scatter_block(block, l, flat);
                flat_of[c * out + r] =
                    static_cast<std::size_t>(std::find(flat.begin(), flat.end(), 1.0) - flat.begin());
            }
        }
        for (std::size_t i = 0; i < k.rows(); ++i) {
            for (std::size_t j = 0; j < k.cols(); ++j) {
                m(flat_of[i], flat_of[j]) = k(i, j);
            }
        }
    }
    for (std::size_t i = 0; i < P; ++i) {
        m(i, i) += tau;
    }
    return m;
}

double frob_rel(const Matrix& a, const Matrix& b) {
    Matrix d = a;
    d -= b;
    return d.frobenius_norm() / b.frobenius_norm();
}

} // namespace

TEST_CASE("mode names") {
    CHECK(parse_fisher_mode(to_string(FisherMode::kfac_mc)) == FisherMode::kfac_mc);
    CHECK(parse_fisher_mode("dense") == FisherMode::dense);
    CHECK(parse_kfac_damping("factored") == KfacDamping::factored);
    CHECK_THROWS_AS(parse_fisher_mode("full"), ConfigError);
    CHECK_THROWS_AS(parse_kfac_damping("none"), ConfigError);
}

TEST_CASE("analytic factors of one linear layer and one sample") {
    const Network net(spec_of(3, {}, 2), 1);
    const std::vector<Vector> x{{0.5, -1.0, 2.0}};
    const StudentTSpec spec{50.0, 1.5};
    const auto f = analytic_fisher_factors(net, {x, {}, 0.0}, spec);
    REQUIRE(f.size() == 1);
    const Vector abar{0.5, -1.0, 2.0, 1.0};
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(f[0].a(i, j) == doctest::Approx(abar[i] * abar[j]));
        }
    }
    const double kappa = t_output_fisher_kappa(spec);
    CHECK(f[0].g(0, 0) == doctest::Approx(kappa));
    CHECK(f[0].g(1, 1) == doctest::Approx(kappa));
    CHECK(f[0].g(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("Monte-Carlo factors approach the exact Fisher for one layer and one sample") {
    const Network net(spec_of(3, {}, 2), 2);
    const std::vector<Vector> x{{0.3, 1.1, -0.7}};
    const StudentTSpec spec{50.0, 1.0};
    std::mt19937_64 rng(3);
    const auto f = mc_fisher_factors(net, {x, {}, 0.0}, spec, 10000, rng);
    const Matrix kfac = explicit_kfac_matrix(net, f, 0.0);
    const Matrix exact = oracle::fd_weighted_gauss_newton(net, x, {1.0}, t_output_fisher_kappa(spec));
    CHECK(frob_rel(kfac, exact) <= 0.05);
}

TEST_CASE("G scales like 1/s2 as the scale shrinks") {
    // With s² → 0 the predictive draws collapse onto the forecast but the
    // score grows as 1/s, so s²·G stays near (ν+1)/(ν+3).
    const Network net(spec_of(2, {}, 1), 4);
    const std::vector<Vector> x{{0.2, -0.4}};
    const StudentTSpec spec{50.0, 1e-12};
    std::mt19937_64 rng(5);
    const auto f = mc_fisher_factors(net, {x, {}, 0.0}, spec, 20000, rng);
    CHECK(f[0].g(0, 0) * spec.s2 == doctest::Approx(51.0 / 53.0).epsilon(0.05));
}

TEST_CASE("replay weighting") {
    const Network net(spec_of(3, {4}, 2), 6);
    std::mt19937_64 rng(7);
    const std::vector<Vector> fresh{random_vector(3, rng)};
    const std::vector<Vector> replay{random_vector(3, rng), random_vector(3, rng)};
    const StudentTSpec spec{10.0, 0.8};

    SUBCASE("lambda zero ignores the replay samples") {
        const auto solo = analytic_fisher_factors(net, {fresh, {}, 0.0}, spec);
        const auto zero = analytic_fisher_factors(net, {fresh, replay, 0.0}, spec);
        for (std::size_t l = 0; l < solo.size(); ++l) {
            CHECK(frob_rel(zero[l].a, solo[l].a) <= 1e-14);
            CHECK(frob_rel(zero[l].g, solo[l].g) <= 1e-14);
        }
        std::mt19937_64 r1(8);
        std::mt19937_64 r2(8);
        const auto mc_solo = mc_fisher_factors(net, {fresh, {}, 0.0}, spec, 20, r1);
        const auto mc_zero = mc_fisher_factors(net, {fresh, replay, 0.0}, spec, 20, r2);
        for (std::size_t l = 0; l < solo.size(); ++l) {
            CHECK(frob_rel(mc_zero[l].g, mc_solo[l].g) <= 1e-14);
        }
    }
    SUBCASE("G is linear in lambda") {
        const auto g0 = analytic_fisher_factors(net, {fresh, replay, 0.0}, spec);
        const auto g1 = analytic_fisher_factors(net, {fresh, replay, 1.0}, spec);
        const auto gh = analytic_fisher_factors(net, {fresh, replay, 0.5}, spec);
        for (std::size_t l = 0; l < g0.size(); ++l) {
            Matrix mid = g0[l].g;
            mid += g1[l].g;
            mid *= 0.5;
            CHECK(frob_rel(gh[l].g, mid) <= 1e-12);
        }
    }
    SUBCASE("dense Fisher equals the weighted Gauss-Newton sum") {
        const double lambda = 0.5;
        const Matrix dense = dense_fisher(net, {fresh, replay, lambda}, spec);
        const Matrix ref = oracle::fd_weighted_gauss_newton(net, {fresh[0], replay[0], replay[1]},
                                                            {1.0, lambda / 2.0, lambda / 2.0},
                                                            t_output_fisher_kappa(spec));
        CHECK(frob_rel(dense, ref) <= 1e-7);
    }
    CHECK_THROWS_AS(analytic_fisher_factors(net, {{}, replay, 1.0}, spec), InputError);
}

TEST_CASE("factor EMAs") {
    std::mt19937_64 rng(9);
    const std::vector<KronFactors> first{{random_spd(3, rng), random_spd(2, rng)}};
    const std::vector<KronFactors> second{{random_spd(3, rng), random_spd(2, rng)}};
    std::vector<KfacLayerState> layers;
    update_factor_emas(layers, first, 0.5);
    CHECK(layers[0].a_ema == first[0].a);

    auto replaced = layers;
    update_factor_emas(replaced, second, 1.0);
    CHECK(replaced[0].a_ema == second[0].a);
    CHECK(replaced[0].g_ema == second[0].g);

    auto unchanged = layers;
    update_factor_emas(unchanged, second, 0.0);
    CHECK(unchanged[0].a_ema == first[0].a);

    // Repeated constant input: the gap shrinks by (1 − α) per update.
    auto conv = layers;
    double gap = frob_rel(conv[0].a_ema, second[0].a);
    for (int i = 0; i < 10; ++i) {
        update_factor_emas(conv, second, 0.3);
        const double next = frob_rel(conv[0].a_ema, second[0].a);
        CHECK(next == doctest::Approx(0.7 * gap).epsilon(1e-9));
        gap = next;
    }
    std::vector<KronFactors> wrong{first[0], first[0]};
    CHECK_THROWS_AS(update_factor_emas(conv, wrong, 0.5), ShapeError);
}

TEST_CASE("loss statistics and the refresh rule") {
    LossStats s;
    const std::vector<double> burn{1.0, 2.0, 4.0, 3.0, 5.0, 2.0, 1.0, 3.0, 4.0, 5.0};
    for (std::size_t i = 0; i < burn.size(); ++i) {
        CHECK(refresh_decision(100.0 * i, s, 0, 100));
        CHECK(refresh_decision(-100.0, s, 0, 100));
        s.observe(burn[i]);
    }
    double mean = 0.0;
    for (double v : burn) {
        mean += v;
    }
    mean /= burn.size();
    double var = 0.0;
    for (double v : burn) {
        var += (v - mean) * (v - mean);
    }
    var /= burn.size();
    CHECK(s.mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(s.var == doctest::Approx(var).epsilon(1e-14));

    CHECK_FALSE(refresh_decision(s.mean, s, 0, 100));
    CHECK(refresh_decision(s.mean, s, 100, 100));
    CHECK_FALSE(refresh_decision(s.mean, s, 99, 100));

    LossStats unit;
    unit.count = unit.burn_in;
    unit.mean = 1.0;
    unit.var = 1.0;
    CHECK(refresh_decision(3.4, unit, 0, 100));
    CHECK_FALSE(refresh_decision(3.3, unit, 0, 100));

    // after burn-in the EMA moves by ema_weight
    unit.observe(2.0);
    CHECK(unit.mean == doctest::Approx(1.01));
}

TEST_CASE("bound value") {
    CHECK(bound_value({50.0, 1.0}, 7, 1.0) == doctest::Approx(0.25 * std::sqrt(51.0 * 53.0 * 7.0 / 50.0)));
    CHECK(bound_value({50.0, 1.0}, 7, 1.0) == doctest::Approx(4.8631).epsilon(1e-4));
    CHECK(bound_value({50.0, 1.0}, 7, 4.0) == doctest::Approx(bound_value({50.0, 1.0}, 7, 1.0) / 2.0));
    CHECK(bound_value({50.0, 1.0}, 0, 1.0) == 0.0);
    CHECK(bound_value({50.0, 3.0}, 3, 0.5) == bound_value({50.0, 0.2}, 3, 0.5));
    double prev = 0.0;
    for (double nu = 2.0; nu <= 500.0; nu *= 1.5) {
        const double b = bound_value({nu, 1.0}, 1, 1.0);
        CHECK(b > prev);
        prev = b;
    }
    CHECK(bound_value({500.0, 1.0}, 4, 0.3) > bound_value({50.0, 1.0}, 4, 0.3));
    CHECK_THROWS_AS(bound_value({50.0, 1.0}, 1, 0.0), InputError);
}

TEST_CASE("natural direction") {
    SUBCASE("identity curvature without damping returns the gradient") {
        const Network net(spec_of(2, {3}, 2), 10);
        std::vector<KronFactors> f;
        for (const auto& l : net.layers()) {
            f.push_back({Matrix::identity(l.in + 1), Matrix::identity(l.out)});
        }
        CurvatureEngine eng(FisherMode::kfac_analytic, KfacDamping::exact, 0.5);
        eng.set_factors(f, 0.0);
        std::mt19937_64 rng(11);
        const Vector g = random_vector(net.param_count(), rng);
        CHECK(oracle::rel_diff(eng.natural_direction(net, g), g) <= 1e-14);
    }
    SUBCASE("one linear layer, one sample: equals the dense damped solve") {
        const Network net(spec_of(4, {}, 3), 12);
        std::mt19937_64 rng(13);
        const std::vector<Vector> x{random_vector(4, rng)};
        const StudentTSpec spec{50.0, 0.6};
        const double tau = 0.37;
        CurvatureEngine eng(FisherMode::kfac_analytic, KfacDamping::exact, 0.5);
        eng.refresh(net, {x, {}, 0.0}, spec, 0, tau, rng, 0);
        const Vector g = random_vector(net.param_count(), rng);
        const Vector got = eng.natural_direction(net, g);

        Matrix dense = oracle::fd_weighted_gauss_newton(net, x, {1.0}, t_output_fisher_kappa(spec));
        for (std::size_t i = 0; i < dense.rows(); ++i) {
            dense(i, i) += tau;
        }
        CHECK(oracle::rel_diff(got, oracle::gauss_solve(dense, g)) <= 1e-6);

        // linear in the gradient
        Vector g3 = g;
        for (double& v : g3) {
            v *= 3.0;
        }
        const Vector got3 = eng.natural_direction(net, g3);
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got3[i] == doctest::Approx(3.0 * got[i]).epsilon(1e-12));
        }
    }
    SUBCASE("exact damping solves the block-diagonal Kronecker system") {
        const Network net(spec_of(3, {4, 2}, 2), 14);
        std::mt19937_64 rng(15);
        std::vector<KronFactors> f;
        for (const auto& l : net.layers()) {
            f.push_back({random_spd(l.in + 1, rng), random_spd(l.out, rng)});
        }
        const double tau = 0.05;
        CurvatureEngine eng(FisherMode::kfac_mc, KfacDamping::exact, 0.5);
        eng.set_factors(f, tau);
        const Vector g = random_vector(net.param_count(), rng);
        const Vector ref = oracle::gauss_solve(explicit_kfac_matrix(net, f, tau), g);
        CHECK(oracle::rel_diff(eng.natural_direction(net, g), ref) <= 1e-9);

        // re-factoring on a τ change
        const Vector ref2 = oracle::gauss_solve(explicit_kfac_matrix(net, f, 2.0), g);
        CHECK(oracle::rel_diff(eng.natural_direction(net, g, 2.0), ref2) <= 1e-9);
        CHECK(eng.cached_tau() == 2.0);
    }
    SUBCASE("factored damping splits the square root of tau") {
        const Network net(spec_of(3, {}, 2), 16);
        std::mt19937_64 rng(17);
        const std::vector<KronFactors> f{{random_spd(4, rng), random_spd(2, rng)}};
        const double tau = 0.25;
        CurvatureEngine eng(FisherMode::kfac_mc, KfacDamping::factored, 0.5);
        eng.set_factors(f, tau);
        std::vector<KronFactors> shifted = f;
        for (std::size_t i = 0; i < 4; ++i) {
            shifted[0].a(i, i) += 0.5;
        }
        for (std::size_t i = 0; i < 2; ++i) {
            shifted[0].g(i, i) += 0.5;
        }
        const Vector g = random_vector(net.param_count(), rng);
        const Vector ref = oracle::gauss_solve(explicit_kfac_matrix(net, shifted, 0.0), g);
        CHECK(oracle::rel_diff(eng.natural_direction(net, g), ref) <= 1e-9);
    }
    SUBCASE("dense mode") {
        const Network net(spec_of(2, {2}, 1), 18);
        std::mt19937_64 rng(19);
        const Matrix F = random_spd(net.param_count(), rng);
        CurvatureEngine eng(FisherMode::dense, KfacDamping::exact, 0.5);
        eng.set_dense(F, 0.3);
        Matrix shifted = F;
        for (std::size_t i = 0; i < F.rows(); ++i) {
            shifted(i, i) += 0.3;
        }
        const Vector g = random_vector(net.param_count(), rng);
        CHECK(oracle::rel_diff(eng.natural_direction(net, g), oracle::gauss_solve(shifted, g)) <= 1e-10);
    }
    SUBCASE("failure modes") {
        const Network net(spec_of(2, {}, 1), 20);
        CurvatureEngine eng(FisherMode::kfac_mc, KfacDamping::exact, 0.5);
        CHECK_THROWS_AS(eng.natural_direction(net, Vector(3, 1.0)), StateError);
        eng.set_factors({{Matrix(3, 3), Matrix(1, 1)}}, 0.0);
        CHECK_THROWS_AS(eng.natural_direction(net, Vector(3, 1.0)), CurvatureError);
        CHECK_THROWS_AS(eng.natural_direction(net, Vector(2, 1.0)), ShapeError);
    }
}
