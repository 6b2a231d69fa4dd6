#pragma once

#include "apafa/types.hpp"

namespace apafa {

// Omega_i = Lambda Lambda^T + Gamma diag(psi_i) Gamma^T + diag(sigma2).
Matrix assemble_marginal_covariance(const Matrix& Lambda, const Matrix& Gamma,
                                    const Vector& psi_i, const Vector& sigma2);

// sum_i log N(y_i; 0, Omega_i) with eta and phi_tilde marginalized out.
// Masked cells are excluded by restricting to each unit's observed block.
double marginal_log_likelihood(const Dataset& data, const ModelState& state);

// sum over observed cells of log N(y_ij; lambda_j'eta_i + gamma_j'phi_i, sigma2_j).
double conditional_log_likelihood(const Dataset& data, const ModelState& state);

struct ActiveCounts {
    int d_active = 0;
    int k_active = 0;
};

// k_active: slab specific columns with at least one gated unit;
// d_active: shared columns in the slab regime.
ActiveCounts active_factor_counts(const ModelState& state);

}  // namespace apafa
