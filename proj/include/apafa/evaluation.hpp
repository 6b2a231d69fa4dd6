#pragma once

#include "apafa/types.hpp"

#include <optional>

namespace apafa {

// Tr(E'T) / sqrt(Tr(E'E) Tr(T'T)), in [0,1] for PSD inputs.
double rv_coefficient(const Matrix& E, const Matrix& T);

struct CovarianceRecovery {
    std::vector<double> rv_omega;   // one per truth group
    double rv_shared = 0.0;         // posterior-mean Lambda Lambda^T vs truth
};

// Posterior-mean Omega per truth group (averaging Omega_i over draws and the
// group's units) compared against the exact truth matrices.
CovarianceRecovery evaluate_covariance_recovery(const PosteriorDraws& draws,
                                                const SyntheticTruth& truth);

struct RocResult {
    std::vector<std::pair<double, double>> points;   // (fpr, tpr), sorted
    double auc = 0.0;
    bool has_positive_class = true;
};

// Threshold sweep on aligned posterior activation probabilities vs the true
// pattern; truth with no active cell yields the no-positive-class marker.
RocResult psi_recovery_roc(const PosteriorDraws& draws, const SyntheticTruth& truth,
                           bool aligned = true);

struct PosteriorSummary {
    double d_mean = 0.0, d_iqr = 0.0;
    double k_mean = 0.0, k_iqr = 0.0;
    Matrix psi_bar;        // n x k_max_seen posterior activation means
    Matrix lambda_mean;    // aligned across draws
    Matrix gamma_mean;     // aligned across draws
};

PosteriorSummary posterior_summary(const PosteriorDraws& draws);

// MSE of the posterior-predictive mean against held-out truth.
double imputation_mse(const Matrix& imputed_draws, const Vector& heldout_values);

// Type-7 quantile utilities shared by the summaries.
double quantile_type7(std::vector<double> values, double prob);
double interquartile_range(const std::vector<double>& values);

}  // namespace apafa
