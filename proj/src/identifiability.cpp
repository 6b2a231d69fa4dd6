#include "apafa/identifiability.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace apafa {

namespace {

// Hungarian assignment (shortest augmenting path with potentials) for a
// square cost matrix; returns for each row the assigned column.
std::vector<int> hungarian_min_cost(const Matrix& cost) {
    const int nn = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(nn + 1, 0.0), v(nn + 1, 0.0);
    std::vector<int> match(nn + 1, 0);  // column -> row (1-based)
    std::vector<int> way(nn + 1, 0);

    for (int i = 1; i <= nn; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(nn + 1, inf);
        std::vector<char> used(nn + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = -1;
            for (int j = 1; j <= nn; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= nn; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> row_to_col(nn, -1);
    for (int j = 1; j <= nn; ++j)
        if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

// Rows indexed by pairs (j,l) with j <= l; entries gamma_jh * gamma_lh.
// This is the coefficient matrix of the linear system in the switching
// analysis; its column rank is the operative identification condition.
Matrix switching_system_matrix(const Matrix& Gamma) {
    const Eigen::Index p = Gamma.rows(), k = Gamma.cols();
    Matrix G(p * (p + 1) / 2, k);
    Eigen::Index r = 0;
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index l = j; l < p; ++l, ++r)
            for (Eigen::Index h = 0; h < k; ++h) G(r, h) = Gamma(j, h) * Gamma(l, h);
    return G;
}

int numerical_rank(const Eigen::JacobiSVD<Matrix>& svd, Eigen::Index rows,
                   Eigen::Index cols) {
    if (svd.singularValues().size() == 0) return 0;
    const double smax = svd.singularValues()(0);
    const double tol = static_cast<double>(std::max(rows, cols)) *
                       std::numeric_limits<double>::epsilon() * smax;
    int rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > tol) ++rank;
    return rank;
}

double column_similarity(const Vector& a, const Vector& b, AlignmentWeight weight) {
    if (weight == AlignmentWeight::abs_cosine) {
        const double na = a.norm(), nb = b.norm();
        if (na == 0.0 || nb == 0.0) return 0.0;
        return a.dot(b) / (na * nb);
    }
    const double ma = a.mean(), mb = b.mean();
    const Vector ca = a.array() - ma;
    const Vector cb = b.array() - mb;
    const double na = ca.norm(), nb = cb.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    const double corr = ca.dot(cb) / (na * nb);
    if (weight == AlignmentWeight::positive_correlation) return std::max(corr, 0.0);
    return corr;
}

}  // namespace

RankCondition check_rank_condition(const Matrix& Gamma) {
    RankCondition out;
    const Eigen::Index p = Gamma.rows(), k = Gamma.cols();
    out.bound = static_cast<int>(p * (p + 1) / 2);
    if (k == 0) {
        out.rank = 0;
        out.holds = true;
        return out;
    }
    const Matrix G = switching_system_matrix(Gamma);
    Eigen::JacobiSVD<Matrix> svd(G);
    out.rank = numerical_rank(svd, G.rows(), G.cols());
    out.holds = out.rank == static_cast<int>(k) && static_cast<long>(k) < p * (p + 1) / 2;
    return out;
}

NrspcResult check_nrspc(const Matrix& Psi_star) {
    NrspcResult out;
    const Eigen::Index k = Psi_star.cols();
    out.holds = true;
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = a + 1; b < k; ++b) {
            bool same = true;
            for (Eigen::Index s = 0; s < Psi_star.rows() && same; ++s)
                same = (Psi_star(s, a) > 0.5) == (Psi_star(s, b) > 0.5);
            if (same) {
                out.holds = false;
                out.duplicate_pairs.emplace_back(static_cast<int>(a), static_cast<int>(b));
            }
        }
    return out;
}

SwitchResistance verify_switch_resistance(const Matrix& Gamma, const Matrix& Psi_star) {
    SwitchResistance out;
    const Eigen::Index p = Gamma.rows(), k = Gamma.cols();
    const Eigen::Index Sn = Psi_star.rows();
    if (Psi_star.cols() != k)
        throw std::invalid_argument("verify_switch_resistance: Psi* column count");

    const Matrix G = switching_system_matrix(Gamma);
    const Eigen::Index rows = G.rows();
    Eigen::JacobiSVD<Matrix> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const int rank = numerical_rank(svd, rows, k);
    if (rank < static_cast<int>(k)) {
        out.unique = false;
        out.residual = std::numeric_limits<double>::infinity();
        return out;
    }

    double worst = 0.0;
    for (Eigen::Index s = 0; s < Sn; ++s) {
        const Matrix W =
            Gamma * Psi_star.row(s).transpose().asDiagonal() * Gamma.transpose();
        Vector w(rows);
        Eigen::Index r = 0;
        for (Eigen::Index j = 0; j < p; ++j)
            for (Eigen::Index l = j; l < p; ++l, ++r) w(r) = W(j, l);
        const Vector x = svd.solve(w);
        worst = std::max(worst, (x - Psi_star.row(s).transpose()).cwiseAbs().maxCoeff());
    }
    out.residual = worst;
    out.unique = worst < 1e-8;
    return out;
}

std::vector<int> detect_information_switching(const PosteriorDraws& draws, double threshold) {
    std::vector<int> flagged;
    if (draws.states.empty()) return flagged;
    Eigen::Index kmax = 0, n = draws.states.front().n();
    for (const auto& st : draws.states) kmax = std::max(kmax, st.k());
    if (kmax == 0) return flagged;

    Matrix mean = Matrix::Zero(n, kmax);
    for (const auto& st : draws.states) {
        // columns a draw does not carry count as inactive
        for (Eigen::Index h = 0; h < st.k(); ++h)
            for (Eigen::Index i = 0; i < n; ++i)
                if (st.tau_phi(h) > 0.5 && st.Psi(i, h) > 0.5) mean(i, h) += 1.0;
    }
    mean /= static_cast<double>(draws.states.size());
    for (Eigen::Index h = 0; h < kmax; ++h)
        if (mean.col(h).minCoeff() > threshold) flagged.push_back(static_cast<int>(h));
    return flagged;
}

long truncation_bound(int p) { return static_cast<long>(p) * (p + 1) / 2 - 1; }

double switching_prior_bound(double alpha_phi, int p) {
    const double denom = static_cast<double>(p) * (p + 1) / 2.0;
    const double b = alpha_phi / denom;
    return std::min(std::max(b, 0.0), 1.0);
}

AlignmentResult align_factor_columns(const Matrix& estimate, const Matrix& reference,
                                     AlignmentWeight weight) {
    if (estimate.rows() != reference.rows())
        throw std::invalid_argument("align_factor_columns: row count mismatch");
    const Eigen::Index ke = estimate.cols(), kr = reference.cols();
    const Eigen::Index m = std::max(ke, kr);
    AlignmentResult out;
    if (m == 0) return out;

    // similarity of estimate column a to reference column b; virtual
    // (padding) columns have weight 0 and are never preferred
    Matrix sim = Matrix::Zero(m, m);
    for (Eigen::Index a = 0; a < ke; ++a)
        for (Eigen::Index b = 0; b < kr; ++b)
            sim(a, b) = column_similarity(estimate.col(a), reference.col(b), weight);

    Matrix cost = weight == AlignmentWeight::positive_correlation
                      ? (-sim).eval()
                      : (-sim.cwiseAbs()).eval();
    const std::vector<int> est_to_ref = hungarian_min_cost(cost);

    out.permutation.assign(m, -1);
    out.signs.assign(m, 1);
    for (Eigen::Index a = 0; a < m; ++a) out.permutation[est_to_ref[a]] = static_cast<int>(a);

    // zero-weight matches carry no information: put those back in identity
    // order among themselves
    std::vector<int> free_refs, free_ests;
    for (Eigen::Index b = 0; b < m; ++b) {
        const int a = out.permutation[b];
        const double wgt = (a < ke && b < kr) ? std::abs(sim(a, b)) : 0.0;
        if (wgt == 0.0) free_refs.push_back(static_cast<int>(b));
    }
    if (!free_refs.empty()) {
        free_ests.reserve(free_refs.size());
        for (int b : free_refs) free_ests.push_back(out.permutation[b]);
        std::sort(free_ests.begin(), free_ests.end());
        for (std::size_t t = 0; t < free_refs.size(); ++t)
            out.permutation[free_refs[t]] = free_ests[t];
    }

    out.score = 0.0;
    for (Eigen::Index b = 0; b < m; ++b) {
        const int a = out.permutation[b];
        const double s = (a < ke && b < kr) ? sim(a, b) : 0.0;
        out.signs[b] = s < 0.0 ? -1 : 1;
        out.score += std::abs(s);
    }
    return out;
}

Matrix apply_alignment(const Matrix& estimate, const AlignmentResult& alignment,
                       Eigen::Index out_cols) {
    Matrix out = Matrix::Zero(estimate.rows(), out_cols);
    for (Eigen::Index b = 0; b < out_cols; ++b) {
        if (b >= static_cast<Eigen::Index>(alignment.permutation.size())) break;
        const int a = alignment.permutation[b];
        if (a >= 0 && a < estimate.cols())
            out.col(b) = static_cast<double>(alignment.signs[b]) * estimate.col(a);
    }
    return out;
}

}  // namespace apafa
