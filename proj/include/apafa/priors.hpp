#pragma once

#include "apafa/rng.hpp"
#include "apafa/types.hpp"

namespace apafa {

// Stick-breaking weights and their running sums rho_h = sum_{l<=h} w_l.
struct CuspWeights {
    Vector v;     // sticks in (0,1)
    Vector w;     // w_l = v_l prod_{m<l} (1 - v_m)
    Vector rho;   // nondecreasing, in [0,1]

    // Mass left beyond the truncation level: prod_l (1 - v_l).
    double tail() const { return rho.size() == 0 ? 1.0 : 1.0 - rho(rho.size() - 1); }
};

CuspWeights cusp_stick_weights(const Vector& v);

// Draw a complete state from the prior with working sizes d_max x k_max.
// Without a dataset the gates assume contiguous near-equal group blocks.
ModelState sample_prior_state(const Hyperparameters& hyper, int n, int p, int S,
                              std::uint64_t rng_seed, int q = 0);
ModelState sample_prior_state(const Hyperparameters& hyper, int n, int p, int S,
                              Rng& rng, int q = 0);
ModelState sample_prior_state(const Hyperparameters& hyper, const Dataset& data, Rng& rng);

// Log prior density/mass of every state component under the hyperparameters.
// The dataset (when given) supplies the gate covariates.
double log_prior_density(const ModelState& state, const Hyperparameters& hyper);
double log_prior_density(const ModelState& state, const Hyperparameters& hyper,
                         const Dataset* data);

// logit^{-1}(x_i' beta_h + z_i' beta_z_h).
double gate_probability(const Vector& beta_h, const Vector& x_i,
                        const Vector* beta_z = nullptr, const Vector* z_i = nullptr);

}  // namespace apafa
