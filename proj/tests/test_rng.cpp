#include <doctest.h>

#include "apafa/rng.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <vector>

using apafa::Rng;
using namespace testutil;

TEST_CASE("rng/determinism: identical seeds give identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        CHECK(a.uniform() == b.uniform());
        CHECK(a.normal() == b.normal());
        CHECK(a.gamma(2.3, 1.7) == b.gamma(2.3, 1.7));
        CHECK(a.polya_gamma(0.8) == b.polya_gamma(0.8));
    }
}

TEST_CASE("rng/moments of the basic transforms") {
    Rng rng(7);
    const int N = 400000;
    std::vector<double> u(N), z(N), g(N), be(N), ig(N);
    for (int i = 0; i < N; ++i) {
        u[i] = rng.uniform();
        z[i] = rng.normal();
        g[i] = rng.gamma(3.0, 2.0);
        be[i] = rng.beta(2.0, 5.0);
        ig[i] = rng.inv_gamma(4.0, 3.0);
    }
    CHECK(mean_of(u) == doctest::Approx(0.5).epsilon(0.01));
    CHECK(var_of(u) == doctest::Approx(1.0 / 12).epsilon(0.02));
    CHECK(mean_of(z) == doctest::Approx(0.0).scale(1).epsilon(0.01));
    CHECK(var_of(z) == doctest::Approx(1.0).epsilon(0.02));
    CHECK(mean_of(g) == doctest::Approx(1.5).epsilon(0.01));        // shape/rate
    CHECK(var_of(g) == doctest::Approx(0.75).epsilon(0.03));        // shape/rate^2
    CHECK(mean_of(be) == doctest::Approx(2.0 / 7).epsilon(0.01));
    CHECK(mean_of(ig) == doctest::Approx(1.0).epsilon(0.01));       // b/(a-1)
    CHECK(var_of(ig) == doctest::Approx(0.5).epsilon(0.05));        // b^2/((a-1)^2 (a-2))
}

TEST_CASE("rng/gamma with shape below one") {
    Rng rng(11);
    const int N = 400000;
    std::vector<double> g(N);
    for (int i = 0; i < N; ++i) g[i] = rng.gamma(0.4, 1.0);
    CHECK(mean_of(g) == doctest::Approx(0.4).epsilon(0.02));
    CHECK(var_of(g) == doctest::Approx(0.4).epsilon(0.03));
}

TEST_CASE("rng/truncated normal matches the closed-form moments") {
    Rng rng(13);
    const int N = 400000;

    // X ~ N(2,1) conditioned on X > 0: mean = 2 + pdf(-2)/(1-cdf(-2))
    std::vector<double> above(N);
    for (int i = 0; i < N; ++i) above[i] = rng.trunc_normal(2.0, 1.0, 0.0, true);
    const double alpha = (0.0 - 2.0) / 1.0;
    const double expect_above = 2.0 + norm_pdf(alpha) / (1.0 - norm_cdf(alpha));
    CHECK(mean_of(above) == doctest::Approx(expect_above).epsilon(0.002));
    for (double x : above) REQUIRE(x > 0.0);

    // far tail: X ~ N(0,1) conditioned on X > 4
    std::vector<double> tail(N / 4);
    for (auto& x : tail) x = rng.trunc_normal(0.0, 1.0, 4.0, true);
    const double expect_tail = norm_pdf(4.0) / (1.0 - norm_cdf(4.0));
    CHECK(mean_of(tail) == doctest::Approx(expect_tail).epsilon(0.002));

    // below: X ~ N(1, 0.25) conditioned on X <= 0
    std::vector<double> below(N / 4);
    for (auto& x : below) x = rng.trunc_normal(1.0, 0.5, 0.0, false);
    for (double x : below) REQUIRE(x <= 0.0);
    const double a2 = (0.0 - 1.0) / 0.5;
    const double expect_below = 1.0 - 0.5 * norm_pdf(a2) / norm_cdf(a2);
    CHECK(mean_of(below) == doctest::Approx(expect_below).epsilon(0.005));
}

TEST_CASE("rng/polya-gamma mean matches the tanh identity") {
    // E[PG(1,z)] = tanh(z/2) / (2z), and 1/4 at z = 0
    Rng rng(17);
    const int N = 300000;
    for (double zval : {1e-8, 0.5, 2.0, 6.0}) {
        std::vector<double> x(N);
        for (int i = 0; i < N; ++i) x[i] = rng.polya_gamma(zval);
        const double expect = zval < 1e-6 ? 0.25 : std::tanh(zval / 2.0) / (2.0 * zval);
        CHECK(mean_of(x) == doctest::Approx(expect).epsilon(0.005));
        for (double v : x) REQUIRE(v > 0.0);
    }
}

TEST_CASE("rng/categorical from log weights") {
    Rng rng(19);
    std::vector<double> logw = {std::log(0.2), std::log(0.5), std::log(0.3)};
    std::vector<int> counts(3, 0);
    const int N = 200000;
    for (int i = 0; i < N; ++i) ++counts[rng.categorical_log(logw)];
    CHECK(counts[0] / double(N) == doctest::Approx(0.2).epsilon(0.02));
    CHECK(counts[1] / double(N) == doctest::Approx(0.5).epsilon(0.02));
    CHECK(counts[2] / double(N) == doctest::Approx(0.3).epsilon(0.02));
}
