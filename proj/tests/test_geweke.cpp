#include <doctest.h>

#include "geweke_common.hpp"

#include "apafa/model.hpp"
#include "apafa/priors.hpp"

#include <iostream>

using namespace apafa;
using namespace testutil;

TEST_CASE("factorization/prior density deltas match the closed forms") {
    // the prior sampler, the density, and the sweep must share one
    // factorization; verified by perturbing one component at a time
    Hyperparameters hyper;
    hyper.d_max = 2;
    hyper.k_max = 2;
    const Dataset data = make_dataset(Matrix::Zero(5, 3), 2);
    Rng rng(2024);
    ModelState st = sample_prior_state(hyper, data, rng);
    const double base = log_prior_density(st, hyper, &data);

    SUBCASE("lambda entry") {
        ModelState mod = st;
        mod.Lambda(1, 0) += 0.7;
        const double expect =
            log_normal(mod.Lambda(1, 0), 0.0, st.tau_eta(0) * st.zeta_lambda(0)) -
            log_normal(st.Lambda(1, 0), 0.0, st.tau_eta(0) * st.zeta_lambda(0));
        CHECK(log_prior_density(mod, hyper, &data) - base ==
              doctest::Approx(expect).epsilon(1e-10));
    }
    SUBCASE("gamma entry") {
        ModelState mod = st;
        mod.Gamma(2, 1) -= 1.1;
        const double expect = log_normal(mod.Gamma(2, 1), 0.0, st.zeta_gamma(1)) -
                              log_normal(st.Gamma(2, 1), 0.0, st.zeta_gamma(1));
        CHECK(log_prior_density(mod, hyper, &data) - base ==
              doctest::Approx(expect).epsilon(1e-10));
    }
    SUBCASE("noise variance") {
        ModelState mod = st;
        mod.sigma2(0) *= 1.9;
        const double expect = log_inv_gamma(mod.sigma2(0), hyper.a_sigma, hyper.b_sigma) -
                              log_inv_gamma(st.sigma2(0), hyper.a_sigma, hyper.b_sigma);
        CHECK(log_prior_density(mod, hyper, &data) - base ==
              doctest::Approx(expect).epsilon(1e-10));
    }
    SUBCASE("activation flip") {
        ModelState mod = st;
        const int i = 3, h = 1;
        mod.Psi(i, h) = 1.0 - mod.Psi(i, h);
        const double lin = mod.Beta.col(h).dot(data.X.row(i).transpose());
        const double g = 1.0 / (1.0 + std::exp(-lin));
        const double expect = (mod.Psi(i, h) > 0.5 ? std::log(g) : std::log1p(-g)) -
                              (st.Psi(i, h) > 0.5 ? std::log(g) : std::log1p(-g));
        CHECK(log_prior_density(mod, hyper, &data) - base ==
              doctest::Approx(expect).epsilon(1e-10));
    }
    SUBCASE("conditional likelihood delta in y") {
        Dataset d2 = data;
        d2.Y(0, 0) = 0.9;
        const Matrix mean = st.Eta * st.Lambda.transpose() + st.phi() * st.Gamma.transpose();
        const double expect = log_normal(0.9, mean(0, 0), st.sigma2(0)) -
                              log_normal(0.0, mean(0, 0), st.sigma2(0));
        CHECK(conditional_log_likelihood(d2, st) - conditional_log_likelihood(data, st) ==
              doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("geweke/joint distribution test with the augmentation kernel") {
    GewekeSetup setup;
    setup.beta_kernel = BetaUpdateKind::augmentation;
    const auto stats = run_geweke(setup);
    for (const auto& g : stats) {
        INFO(g.name, ": prior ", g.prior_mean, " chain ", g.chain_mean, " z ", g.z);
        CHECK(g.z < 4.0);
    }
}

TEST_CASE("geweke/joint distribution test with the random-walk kernel") {
    GewekeSetup setup;
    setup.beta_kernel = BetaUpdateKind::random_walk;
    setup.seed = 20240202;
    const auto stats = run_geweke(setup);
    for (const auto& g : stats) {
        INFO(g.name, ": prior ", g.prior_mean, " chain ", g.chain_mean, " z ", g.z);
        CHECK(g.z < 4.0);
    }
}

TEST_CASE("geweke/joint distribution test with gate covariates") {
    // the z_i' beta^(z) extension flows through the prior, gates and sweep
    GewekeSetup setup;
    setup.q = 1;
    setup.seed = 20240303;
    const auto stats = run_geweke(setup);
    for (const auto& g : stats) {
        INFO(g.name, ": prior ", g.prior_mean, " chain ", g.chain_mean, " z ", g.z);
        CHECK(g.z < 4.0);
    }
}
