#include <doctest.h>

#include "apafa/evaluation.hpp"
#include "apafa/identifiability.hpp"
#include "apafa/model.hpp"
#include "apafa/simulation.hpp"
#include "test_helpers.hpp"

#include <set>

using namespace apafa;
using namespace testutil;

namespace {

Matrix distinct_patterns(const Matrix& Psi) {
    std::set<std::vector<double>> seen;
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < Psi.rows(); ++i) {
        std::vector<double> r(Psi.cols());
        for (Eigen::Index h = 0; h < Psi.cols(); ++h) r[h] = Psi(i, h);
        if (seen.insert(r).second) rows.push_back(r);
    }
    Matrix out(static_cast<Eigen::Index>(rows.size()), Psi.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (Eigen::Index h = 0; h < Psi.cols(); ++h) out(i, h) = rows[i][h];
    return out;
}

}  // namespace

TEST_CASE("scenario shapes/dimension contract") {
    ScenarioConfig tall;
    tall.shape = Shape::tall;
    CHECK(tall.n() == 60);
    CHECK(tall.p() == 10);
    ScenarioConfig large;
    large.shape = Shape::large;
    CHECK(large.n() == 45);
    CHECK(large.p() == 60);
}

TEST_CASE("scenario B/homogeneous studies share one covariance") {
    ScenarioConfig cfg;
    cfg.scenario = Scenario::B;
    cfg.seed = 11;
    auto [data, truth] = generate_scenario(cfg);
    CHECK(truth.Psi_true.cols() == 0);
    CHECK(truth.Gamma_true.cols() == 0);
    REQUIRE(truth.n_groups() == 3);  // one per study, identical matrices
    CHECK((truth.Omega_by_group[0] - truth.Omega_by_group[1]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((truth.Omega_by_group[0] - truth.Omega_by_group[2]).cwiseAbs().maxCoeff() == 0.0);
    CHECK(data.X.cols() == 3);
}

TEST_CASE("scenario A/tall pattern has twenty active units per factor") {
    ScenarioConfig cfg;
    cfg.scenario = Scenario::A;
    cfg.seed = 12;
    auto [data, truth] = generate_scenario(cfg);
    REQUIRE(truth.Psi_true.cols() == 3);
    for (int h = 0; h < 3; ++h) CHECK(truth.Psi_true.col(h).sum() == 20.0);
    CHECK(truth.n_groups() == 3);

    // disjoint supports and the sparsity conditions
    const Matrix patterns = distinct_patterns(truth.Psi_true);
    CHECK(check_nrspc(patterns).holds);
    CHECK(check_rank_condition(truth.Gamma_true).holds);
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b)
            CHECK(truth.Psi_true.col(a).cwiseProduct(truth.Psi_true.col(b)).sum() == 0.0);
}

TEST_CASE("scenario A*/same outcomes, labels withheld") {
    ScenarioConfig a;
    a.scenario = Scenario::A;
    a.seed = 13;
    ScenarioConfig astar = a;
    astar.scenario = Scenario::Astar;
    auto [da, ta] = generate_scenario(a);
    auto [ds, ts] = generate_scenario(astar);
    CHECK((da.Y - ds.Y).cwiseAbs().maxCoeff() == 0.0);
    CHECK(ds.X.cols() == 1);
    CHECK((ds.X.array() == 1.0).all());
    CHECK(ts.study_labels == ta.study_labels);
}

TEST_CASE("scenario C/partially shared support") {
    ScenarioConfig cfg;
    cfg.scenario = Scenario::C;
    cfg.seed = 14;
    auto [data, truth] = generate_scenario(cfg);
    REQUIRE(truth.Psi_true.cols() == 3);
    CHECK(truth.n_groups() == 3);
    // factor 3 is active exactly for studies 2 and 3
    for (int i = 0; i < 60; ++i) {
        const int s = truth.study_labels[i];
        CHECK(truth.Psi_true(i, 2) == (s >= 1 ? 1.0 : 0.0));
        CHECK(truth.Psi_true(i, 0) == (s == 0 ? 1.0 : 0.0));
        CHECK(truth.Psi_true(i, 1) == (s == 1 ? 1.0 : 0.0));
    }
    CHECK(check_nrspc(distinct_patterns(truth.Psi_true)).holds);
}

TEST_CASE("scenario D/half of each study loads its factor") {
    ScenarioConfig cfg;
    cfg.scenario = Scenario::D;
    cfg.seed = 15;
    auto [data, truth] = generate_scenario(cfg);
    REQUIRE(truth.Psi_true.cols() == 3);
    for (int h = 0; h < 3; ++h) CHECK(truth.Psi_true.col(h).sum() == 10.0);
    CHECK(truth.n_groups() == 6);  // (study, pattern) combinations
    CHECK(check_nrspc(distinct_patterns(truth.Psi_true)).holds);

    // contiguous halves: the first 10 units of each 20-unit study block
    for (int s = 0; s < 3; ++s)
        for (int i = 0; i < 20; ++i)
            CHECK(truth.Psi_true(20 * s + i, s) == (i < 10 ? 1.0 : 0.0));
}

TEST_CASE("generate_scenario/deterministic given the seed") {
    ScenarioConfig cfg;
    cfg.scenario = Scenario::C;
    cfg.seed = 16;
    auto [d1, t1] = generate_scenario(cfg);
    auto [d2, t2] = generate_scenario(cfg);
    CHECK((d1.Y - d2.Y).cwiseAbs().maxCoeff() == 0.0);
    CHECK((t1.Gamma_true - t2.Gamma_true).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generate_scenario/truth covariance identity holds exactly") {
    ScenarioConfig cfg;
    cfg.scenario = Scenario::D;
    cfg.seed = 17;
    auto [data, truth] = generate_scenario(cfg);
    for (int i = 0; i < cfg.n(); ++i) {
        const Matrix om = apafa::assemble_marginal_covariance(
            truth.Lambda_true, truth.Gamma_true, truth.Psi_true.row(i).transpose(),
            truth.sigma2_true);
        const Matrix& stored = truth.Omega_by_group[truth.group_labels[i]];
        REQUIRE((om - stored).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("generate_scenario/empirical covariance matches the truth on a large draw") {
    // 10^5 units with a fixed truth: entrywise agreement within 0.02
    ScenarioConfig cfg;
    cfg.scenario = Scenario::A;
    cfg.seed = 18;
    cfg.loading_scale = 0.4;
    cfg.group_sizes = {100000, 100000, 100000};
    auto [data, truth] = generate_scenario(cfg);

    const int p = cfg.p();
    for (int g = 0; g < 3; ++g) {
        Matrix sum = Matrix::Zero(p, p);
        double count = 0.0;
        for (int i = 0; i < cfg.n(); ++i) {
            if (truth.group_labels[i] != g) continue;
            sum += data.Y.row(i).transpose() * data.Y.row(i);
            count += 1.0;
        }
        const Matrix emp = sum / count;
        CHECK((emp - truth.Omega_by_group[g]).cwiseAbs().maxCoeff() < 0.02);
    }
}

TEST_CASE("replicate_study/report shape and determinism") {
    Hyperparameters hyper = Hyperparameters::defaults_for(10);
    hyper.d_max = 6;
    hyper.k_max = 6;
    ChainConfig cfg;
    cfg.iterations = 120;
    cfg.burn_in = 60;
    cfg.seed = 3;
    cfg.init_active = 6;
    const std::vector<Scenario> scenarios = {Scenario::B, Scenario::C};
    const std::vector<Shape> shapes = {Shape::tall};
    const StudyReport r1 = replicate_study(scenarios, shapes, 2, hyper, cfg);
    CHECK(r1.replicates.size() == 4);
    CHECK(r1.aggregates.size() == 2);
    for (const auto& m : r1.replicates) {
        CHECK(m.runtime_seconds > 0.0);
        CHECK(!m.rv_omega.empty());
    }
    // scenario B has no positive class: AUC must carry the marker
    for (const auto& m : r1.replicates)
        if (m.scenario == Scenario::B) CHECK(m.auc == -1.0);

    const StudyReport r2 = replicate_study(scenarios, shapes, 2, hyper, cfg);
    for (std::size_t i = 0; i < r1.replicates.size(); ++i) {
        CHECK(r1.replicates[i].d_mean == r2.replicates[i].d_mean);
        CHECK(r1.replicates[i].k_mean == r2.replicates[i].k_mean);
    }
}

TEST_CASE("scenario A fit/no information-switching flags") {
    ScenarioConfig cfg;
    cfg.scenario = Scenario::A;
    cfg.seed = 19;
    auto [data, truth] = generate_scenario(cfg);
    Hyperparameters hyper = Hyperparameters::defaults_for(10);
    ChainConfig ccfg;
    ccfg.iterations = 2000;
    ccfg.burn_in = 1000;
    ccfg.seed = 20;
    const PosteriorDraws draws = run_chain(data, hyper, ccfg);
    CHECK(detect_information_switching(draws, 0.9).empty());
}
