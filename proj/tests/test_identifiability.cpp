#include <doctest.h>

#include "apafa/identifiability.hpp"
#include "apafa/rng.hpp"
#include "test_helpers.hpp"

#include <cmath>

using namespace apafa;
using namespace testutil;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng, double sd = 1.0) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, sd);
    return m;
}

// W_s = Gamma diag(psi_s) Gamma'
Matrix group_specific_cov(const Matrix& Gamma, const Vector& psi) {
    return Gamma * psi.asDiagonal() * Gamma.transpose();
}

}  // namespace

TEST_CASE("rank condition/examples") {
    Rng rng(501);
    SUBCASE("p=10 allows up to 54 columns") {
        const Matrix g = random_matrix(10, 54, rng);
        const RankCondition rc = check_rank_condition(g);
        CHECK(rc.bound == 55);
        CHECK(rc.rank == 54);
        CHECK(rc.holds);
    }
    SUBCASE("duplicated column breaks it") {
        Matrix g = random_matrix(6, 3, rng);
        g.col(2) = g.col(0);
        const RankCondition rc = check_rank_condition(g);
        CHECK(rc.rank < 3);
        CHECK(!rc.holds);
    }
    SUBCASE("random Gaussian with k < p always passes") {
        for (int t = 0; t < 100; ++t) {
            const Matrix g = random_matrix(7, 4, rng);
            CHECK(check_rank_condition(g).holds);
        }
    }
    SUBCASE("k at the bound fails the strict inequality") {
        const Matrix g = random_matrix(2, 3, rng);  // p(p+1)/2 = 3 = k
        CHECK(!check_rank_condition(g).holds);
    }
}

TEST_CASE("nrspc/examples") {
    SUBCASE("identity pattern holds") {
        CHECK(check_nrspc(Matrix::Identity(4, 4)).holds);
    }
    SUBCASE("two identical columns are reported") {
        Matrix psi(3, 3);
        psi << 1, 1, 0, 0, 0, 1, 1, 1, 0;
        const NrspcResult r = check_nrspc(psi);
        CHECK(!r.holds);
        REQUIRE(r.duplicate_pairs.size() == 1);
        CHECK(r.duplicate_pairs[0] == std::make_pair(0, 1));
    }
    SUBCASE("partially shared pattern holds") {
        // supports {1}, {2}, {2,3} by study
        Matrix psi(3, 3);
        psi << 1, 0, 0, 0, 1, 1, 0, 0, 1;
        CHECK(check_nrspc(psi).holds);
    }
}

TEST_CASE("switch resistance/certifies unique recovery") {
    Rng rng(502);
    SUBCASE("single factor is always unique given rank") {
        const Matrix g = random_matrix(5, 1, rng);
        Matrix psi(2, 1);
        psi << 1, 0;
        const SwitchResistance sr = verify_switch_resistance(g, psi);
        CHECK(sr.unique);
        CHECK(sr.residual < 1e-8);
    }
    SUBCASE("random instances recover the pattern entrywise") {
        for (int t = 0; t < 100; ++t) {
            const Matrix g = random_matrix(6, 3, rng);
            Matrix psi(3, 3);
            for (int s = 0; s < 3; ++s)
                for (int h = 0; h < 3; ++h) psi(s, h) = rng.bernoulli(0.5) ? 1.0 : 0.0;
            const SwitchResistance sr = verify_switch_resistance(g, psi);
            REQUIRE(sr.unique);
            REQUIRE(sr.residual < 1e-8);
        }
    }
    SUBCASE("zero column destroys uniqueness") {
        Matrix g = random_matrix(6, 3, rng);
        g.col(1).setZero();
        CHECK(!verify_switch_resistance(g, Matrix::Identity(3, 3)).unique);
    }
}

TEST_CASE("information switching detection") {
    // synthetic draws: column 1 active everywhere, column 0 sparse
    PosteriorDraws draws;
    for (int t = 0; t < 20; ++t) {
        ModelState st = make_state(6, 2, 1, 2);
        st.Psi.col(0).setZero();
        st.Psi(t % 6, 0) = 1.0;
        const auto ac = apafa::active_factor_counts(st);
        draws.states.push_back(st);
        draws.active_counts.emplace_back(ac.d_active, ac.k_active);
    }
    const auto flags = detect_information_switching(draws, 0.9);
    REQUIRE(flags.size() == 1);
    CHECK(flags[0] == 1);

    PosteriorDraws empty;
    CHECK(detect_information_switching(empty, 0.9).empty());
}

TEST_CASE("bounds/exact formulas") {
    CHECK(truncation_bound(10) == 54);
    CHECK(truncation_bound(2) == 2);
    CHECK(truncation_bound(63) == 2015);
    CHECK(switching_prior_bound(4.0, 63) == doctest::Approx(4.0 / 2016.0).epsilon(1e-15));
    CHECK(switching_prior_bound(0.0, 10) == 0.0);
    CHECK(switching_prior_bound(1e9, 10) == 1.0);
}

TEST_CASE("alignment/swapped columns recovered with full score") {
    Rng rng(503);
    const Matrix ref = random_matrix(30, 4, rng);
    Matrix est(30, 4);
    est.col(0) = ref.col(2);
    est.col(1) = ref.col(3);
    est.col(2) = ref.col(0);
    est.col(3) = ref.col(1);
    const AlignmentResult al = align_factor_columns(est, ref);
    CHECK(al.permutation == std::vector<int>{2, 3, 0, 1});
    CHECK(al.signs == std::vector<int>{1, 1, 1, 1});
    CHECK(al.score == doctest::Approx(4.0).epsilon(1e-9));
    const Matrix aligned = apply_alignment(est, al, 4);
    CHECK((aligned - ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("alignment/negated copy flips every sign") {
    Rng rng(504);
    const Matrix ref = random_matrix(25, 3, rng);
    const Matrix est = -ref;
    const AlignmentResult al = align_factor_columns(est, ref);
    CHECK(al.signs == std::vector<int>{-1, -1, -1});
    CHECK((apply_alignment(est, al, 3) - ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("alignment/self-alignment is the identity") {
    Rng rng(505);
    const Matrix ref = random_matrix(15, 5, rng);
    const AlignmentResult al = align_factor_columns(ref, ref);
    for (int j = 0; j < 5; ++j) {
        CHECK(al.permutation[j] == j);
        CHECK(al.signs[j] == 1);
    }
}

TEST_CASE("alignment/noisy permuted copies recovered in at least 95 of 100 trials") {
    Rng rng(506);
    int correct = 0;
    for (int t = 0; t < 100; ++t) {
        const Matrix ref = random_matrix(40, 3, rng);
        std::vector<int> perm = {0, 1, 2};
        for (int i = 2; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
        Matrix est(40, 3);
        for (int j = 0; j < 3; ++j)
            est.col(j) = ref.col(perm[j]) + 0.1 * random_matrix(40, 1, rng);
        const AlignmentResult al = align_factor_columns(est, ref);
        bool ok = true;
        // est.col(j) matches ref.col(perm[j]), so alignment[perm[j]] must be j
        for (int j = 0; j < 3; ++j) ok = ok && al.permutation[perm[j]] == j;
        correct += ok ? 1 : 0;
    }
    CHECK(correct >= 95);
}

TEST_CASE("alignment/zero-variance column is never preferred") {
    Rng rng(507);
    Matrix ref = random_matrix(20, 2, rng);
    Matrix est(20, 2);
    est.col(0).setConstant(3.0);  // zero variance: correlation weight 0
    est.col(1) = ref.col(0);
    const AlignmentResult al = align_factor_columns(est, ref);
    CHECK(al.permutation[0] == 1);  // the informative column wins reference 0
}

TEST_CASE("alignment/size mismatch pads with identity-ordered leftovers") {
    Rng rng(508);
    const Matrix ref = random_matrix(20, 2, rng);
    Matrix est(20, 4);
    est.col(0) = 0.5 * ref.col(1);
    est.col(1) = random_matrix(20, 1, rng);
    est.col(2) = ref.col(0);
    est.col(3) = random_matrix(20, 1, rng);
    const AlignmentResult al = align_factor_columns(est, ref);
    REQUIRE(al.permutation.size() == 4);
    CHECK(al.permutation[0] == 2);
    CHECK(al.permutation[1] == 0);
    // unmatched estimate columns fill the virtual slots in index order
    CHECK(al.permutation[2] == 1);
    CHECK(al.permutation[3] == 3);
}

TEST_CASE("theorem-2 witness/rotations break the per-group matrices, signed permutations do not") {
    Rng rng(509);
    int done = 0;
    while (done < 50) {
        const int k = 3, p = 6, Sn = 3;
        Matrix psi(Sn, k);
        for (int s = 0; s < Sn; ++s)
            for (int h = 0; h < k; ++h) psi(s, h) = rng.bernoulli(0.5) ? 1.0 : 0.0;
        // need NRSPC, no empty factor, and a pair sharing a group
        if (!check_nrspc(psi).holds) continue;
        bool ok_cols = true;
        for (int h = 0; h < k; ++h) ok_cols = ok_cols && psi.col(h).maxCoeff() > 0.5;
        if (!ok_cols) continue;
        int ha = -1, hb = -1;
        for (int s = 0; s < Sn && ha < 0; ++s)
            for (int a = 0; a < k && ha < 0; ++a)
                for (int b = a + 1; b < k && ha < 0; ++b)
                    if (psi(s, a) > 0.5 && psi(s, b) > 0.5) {
                        ha = a;
                        hb = b;
                    }
        if (ha < 0) continue;
        ++done;

        const Matrix gamma = random_matrix(p, k, rng);

        // non-permutation orthogonal mixing inside the shared support block
        Matrix P = Matrix::Identity(k, k);
        const double th = 0.7;
        P(ha, ha) = std::cos(th);
        P(hb, hb) = std::cos(th);
        P(ha, hb) = -std::sin(th);
        P(hb, ha) = std::sin(th);
        const Matrix rotated = gamma * P;
        double max_change = 0.0;
        for (int s = 0; s < Sn; ++s) {
            const Matrix w0 = group_specific_cov(gamma, psi.row(s).transpose());
            const Matrix w1 = group_specific_cov(rotated, psi.row(s).transpose());
            max_change = std::max(max_change, (w0 - w1).norm());
        }
        REQUIRE(max_change > 1e-6);

        // signed permutation applied to columns and the pattern together
        std::vector<int> perm = {0, 1, 2};
        for (int i = 2; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
        Matrix signed_perm = Matrix::Zero(k, k);
        for (int j = 0; j < k; ++j)
            signed_perm(perm[j], j) = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const Matrix permuted = gamma * signed_perm;
        double worst = 0.0;
        for (int s = 0; s < Sn; ++s) {
            Vector psi_perm(k);
            for (int j = 0; j < k; ++j) psi_perm(j) = psi(s, perm[j]);
            const Matrix w0 = group_specific_cov(gamma, psi.row(s).transpose());
            const Matrix w1 = group_specific_cov(permuted, psi_perm);
            worst = std::max(worst, (w0 - w1).cwiseAbs().maxCoeff());
        }
        REQUIRE(worst < 1e-10);
    }
}

TEST_CASE("switch resistance/implied by the rank condition for continuous loadings") {
    Rng rng(510);
    for (int t = 0; t < 100; ++t) {
        const Matrix g = random_matrix(6, 3, rng);
        REQUIRE(check_rank_condition(g).holds);
        Matrix psi(4, 3);
        for (int s = 0; s < 4; ++s)
            for (int h = 0; h < 3; ++h) psi(s, h) = rng.bernoulli(0.5) ? 1.0 : 0.0;
        REQUIRE(verify_switch_resistance(g, psi).unique);
    }
}
