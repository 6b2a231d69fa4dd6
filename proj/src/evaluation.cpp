#include "apafa/evaluation.hpp"

#include "apafa/identifiability.hpp"
#include "apafa/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace apafa {

double rv_coefficient(const Matrix& E, const Matrix& T) {
    if (E.rows() != T.rows() || E.cols() != T.cols() || E.rows() != E.cols())
        throw std::invalid_argument("rv_coefficient: matrices must be square and same size");
    const double ee = (E.transpose() * E).trace();
    const double tt = (T.transpose() * T).trace();
    if (ee == 0.0 || tt == 0.0)
        throw std::invalid_argument("rv_coefficient: zero matrix");
    const double et = (E.transpose() * T).trace();
    return et / std::sqrt(ee * tt);
}

double quantile_type7(std::vector<double> values, double prob) {
    if (values.empty()) throw std::invalid_argument("quantile of empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * prob;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = h - std::floor(h);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double interquartile_range(const std::vector<double>& values) {
    return quantile_type7(values, 0.75) - quantile_type7(values, 0.25);
}

CovarianceRecovery evaluate_covariance_recovery(const PosteriorDraws& draws,
                                                const SyntheticTruth& truth) {
    if (draws.states.empty())
        throw std::invalid_argument("evaluate_covariance_recovery: no draws");
    const Eigen::Index p = truth.Lambda_true.rows();
    const Eigen::Index n = static_cast<Eigen::Index>(truth.group_labels.size());
    const Eigen::Index n_groups = truth.n_groups();

    std::vector<Matrix> omega_sum(n_groups, Matrix::Zero(p, p));
    std::vector<double> group_size(n_groups, 0.0);
    for (Eigen::Index i = 0; i < n; ++i) group_size[truth.group_labels[i]] += 1.0;

    Matrix shared_sum = Matrix::Zero(p, p);
    for (const auto& st : draws.states) {
        shared_sum.noalias() += st.Lambda * st.Lambda.transpose();

        // per draw, units sharing a psi row share Omega_i
        Matrix base = st.Lambda * st.Lambda.transpose();
        base.diagonal() += st.sigma2;
        std::map<std::string, Matrix> pattern_cache;
        for (Eigen::Index i = 0; i < n; ++i) {
            std::string key(static_cast<std::size_t>(st.k()), '\0');
            for (Eigen::Index h = 0; h < st.k(); ++h)
                key[static_cast<std::size_t>(h)] = st.Psi(i, h) > 0.5 ? 1 : 0;
            auto it = pattern_cache.find(key);
            if (it == pattern_cache.end()) {
                Matrix om = base;
                if (st.k() > 0) {
                    const Matrix gated = st.Gamma * st.Psi.row(i).transpose().asDiagonal();
                    om.noalias() += gated * st.Gamma.transpose();
                }
                it = pattern_cache.emplace(std::move(key), std::move(om)).first;
            }
            omega_sum[truth.group_labels[i]] += it->second;
        }
    }

    const double n_draws = static_cast<double>(draws.states.size());
    CovarianceRecovery out;
    out.rv_omega.resize(n_groups);
    for (Eigen::Index g = 0; g < n_groups; ++g) {
        const Matrix est = omega_sum[g] / (n_draws * group_size[g]);
        out.rv_omega[g] = rv_coefficient(est, truth.Omega_by_group[g]);
    }
    const Matrix shared_est = shared_sum / n_draws;
    const Matrix shared_true = truth.Lambda_true * truth.Lambda_true.transpose();
    out.rv_shared = rv_coefficient(shared_est, shared_true);
    return out;
}

namespace {

Matrix mean_activation(const PosteriorDraws& draws) {
    Eigen::Index kmax = 0;
    const Eigen::Index n = draws.states.front().n();
    for (const auto& st : draws.states) kmax = std::max(kmax, st.k());
    Matrix mean = Matrix::Zero(n, kmax);
    for (const auto& st : draws.states)
        for (Eigen::Index h = 0; h < st.k(); ++h) {
            if (st.tau_phi(h) < 0.5) continue;
            for (Eigen::Index i = 0; i < n; ++i)
                if (st.Psi(i, h) > 0.5) mean(i, h) += 1.0;
        }
    mean /= static_cast<double>(draws.states.size());
    return mean;
}

}  // namespace

RocResult psi_recovery_roc(const PosteriorDraws& draws, const SyntheticTruth& truth,
                           bool aligned) {
    RocResult out;
    if (draws.states.empty()) throw std::invalid_argument("psi_recovery_roc: no draws");
    const Eigen::Index n = draws.states.front().n();
    const Eigen::Index k0 = truth.Psi_true.cols();

    long positives = 0;
    for (Eigen::Index h = 0; h < k0; ++h)
        for (Eigen::Index i = 0; i < n; ++i)
            if (truth.Psi_true(i, h) > 0.5) ++positives;
    if (positives == 0) {
        out.has_positive_class = false;
        out.auc = std::numeric_limits<double>::quiet_NaN();
        return out;
    }

    // cells: units crossed with the union of true and estimated columns;
    // estimated columns are aligned onto the truth's, unmatched extras count
    // against an all-zero truth column
    const Matrix prob_raw = mean_activation(draws);
    const Eigen::Index m = std::max(prob_raw.cols(), k0);
    Matrix prob = Matrix::Zero(n, m);
    if (aligned && prob_raw.cols() > 0) {
        const AlignmentResult al = align_factor_columns(prob_raw, truth.Psi_true,
                                                        AlignmentWeight::positive_correlation);
        prob = apply_alignment(prob_raw, al, m);
    } else {
        prob.leftCols(prob_raw.cols()) = prob_raw;
    }
    Matrix truth_pad = Matrix::Zero(n, m);
    truth_pad.leftCols(k0) = truth.Psi_true;

    std::vector<double> thresholds;
    thresholds.reserve(static_cast<std::size_t>(n * m) + 2);
    for (Eigen::Index h = 0; h < m; ++h)
        for (Eigen::Index i = 0; i < n; ++i) thresholds.push_back(prob(i, h));
    thresholds.push_back(0.0);
    thresholds.push_back(1.0);
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    const long negatives = static_cast<long>(n) * m - positives;
    out.points.emplace_back(0.0, 0.0);  // threshold above every score
    for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it) {
        const double t = *it;
        long tp = 0, fp = 0;
        for (Eigen::Index h = 0; h < m; ++h)
            for (Eigen::Index i = 0; i < n; ++i) {
                if (prob(i, h) >= t) {
                    if (truth_pad(i, h) > 0.5) ++tp;
                    else ++fp;
                }
            }
        const double tpr = static_cast<double>(tp) / static_cast<double>(positives);
        const double fpr =
            negatives > 0 ? static_cast<double>(fp) / static_cast<double>(negatives) : 0.0;
        out.points.emplace_back(fpr, tpr);
    }
    std::sort(out.points.begin(), out.points.end());

    double auc = 0.0;
    for (std::size_t i = 1; i < out.points.size(); ++i) {
        const auto& [x0, y0] = out.points[i - 1];
        const auto& [x1, y1] = out.points[i];
        auc += (x1 - x0) * 0.5 * (y0 + y1);
    }
    out.auc = auc;
    return out;
}

PosteriorSummary posterior_summary(const PosteriorDraws& draws) {
    PosteriorSummary out;
    if (draws.states.empty()) throw std::invalid_argument("posterior_summary: no draws");

    std::vector<double> d_vals, k_vals;
    d_vals.reserve(draws.states.size());
    k_vals.reserve(draws.states.size());
    if (draws.active_counts.size() == draws.states.size()) {
        for (const auto& [da, ka] : draws.active_counts) {
            d_vals.push_back(da);
            k_vals.push_back(ka);
        }
    } else {
        for (const auto& st : draws.states) {
            const ActiveCounts ac = active_factor_counts(st);
            d_vals.push_back(ac.d_active);
            k_vals.push_back(ac.k_active);
        }
    }
    const auto mean_of = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    out.d_mean = mean_of(d_vals);
    out.d_iqr = interquartile_range(d_vals);
    out.k_mean = mean_of(k_vals);
    out.k_iqr = interquartile_range(k_vals);

    out.psi_bar = mean_activation(draws);

    // reference draw for sign/permutation alignment: first draw with the
    // largest working sizes
    std::size_t ref_g = 0, ref_l = 0;
    for (std::size_t t = 0; t < draws.states.size(); ++t) {
        if (draws.states[t].k() > draws.states[ref_g].k()) ref_g = t;
        if (draws.states[t].d() > draws.states[ref_l].d()) ref_l = t;
    }
    const Matrix& gamma_ref = draws.states[ref_g].Gamma;
    const Matrix& lambda_ref = draws.states[ref_l].Lambda;
    Matrix gamma_sum = Matrix::Zero(gamma_ref.rows(), gamma_ref.cols());
    Matrix lambda_sum = Matrix::Zero(lambda_ref.rows(), lambda_ref.cols());
    for (const auto& st : draws.states) {
        if (gamma_ref.cols() > 0 && st.k() > 0) {
            const AlignmentResult al =
                align_factor_columns(st.Gamma, gamma_ref, AlignmentWeight::abs_cosine);
            gamma_sum += apply_alignment(st.Gamma, al, gamma_ref.cols());
        }
        if (lambda_ref.cols() > 0 && st.d() > 0) {
            const AlignmentResult al =
                align_factor_columns(st.Lambda, lambda_ref, AlignmentWeight::abs_cosine);
            lambda_sum += apply_alignment(st.Lambda, al, lambda_ref.cols());
        }
    }
    const double n_draws = static_cast<double>(draws.states.size());
    out.gamma_mean = gamma_sum / n_draws;
    out.lambda_mean = lambda_sum / n_draws;
    return out;
}

double imputation_mse(const Matrix& imputed_draws, const Vector& heldout_values) {
    if (imputed_draws.cols() != heldout_values.size())
        throw std::invalid_argument("imputation_mse: cell count mismatch");
    if (imputed_draws.rows() == 0 || imputed_draws.cols() == 0)
        throw std::invalid_argument("imputation_mse: empty input");
    const Vector mean = imputed_draws.colwise().mean();
    return (mean - heldout_values).squaredNorm() /
           static_cast<double>(heldout_values.size());
}

}  // namespace apafa
