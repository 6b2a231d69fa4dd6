#pragma once

#include "apafa/priors.hpp"
#include "apafa/rng.hpp"
#include "apafa/types.hpp"

namespace apafa {

enum class BetaUpdateKind { augmentation, random_walk };

// data_driven seeds the loading columns from pooled-covariance
// eigendirections, split into shared vs specific by per-study activity;
// prior is the plain prior-draw start. Either way the transition kernel is
// the same exact Gibbs sweep.
enum class InitStrategy { data_driven, prior };

struct ChainConfig {
    int iterations = 10000;
    int burn_in = 8000;
    int thinning = 1;
    std::uint64_t seed = 1;
    int adapt_start = 500;
    int adapt_end = 1 << 30;   // adapt until the end unless narrowed
    BetaUpdateKind beta_update = BetaUpdateKind::augmentation;
    double rw_step = 0.5;
    int init_active = 12;      // initial number of active columns per part
    InitStrategy init_strategy = InitStrategy::data_driven;
    // shared/specific splits are multimodal: warm up several overdispersed
    // chains and keep the one with the best integrated-likelihood score
    // before the recorded run (continuous outcomes only)
    int restarts = 4;
    int restart_warmup = 500;

    void validate() const;
};

// Log joint with the latent factors integrated out: marginal likelihood of
// the observed cells plus the priors of the retained blocks. Used to rank
// warmup chains; higher is better.
double mode_score(const ModelState& state, const Dataset& data,
                  const Hyperparameters& hyper);

// Full-conditional updates. Each leaves the joint distribution invariant.
// `response` overrides the outcome matrix (the chain passes its completed
// working copy when there are missing cells); by default the continuous
// outcome is data.Y and the binary outcome is state.ProbitZ.

void update_eta(ModelState& state, const Dataset& data, Rng& rng,
                const Matrix* response = nullptr);

void update_phi_and_psi(ModelState& state, const Dataset& data, Rng& rng,
                        const Matrix* response = nullptr);

void update_lambda(ModelState& state, const Dataset& data, Rng& rng,
                   const Matrix* response = nullptr);

void update_gamma(ModelState& state, const Dataset& data, Rng& rng,
                  const Matrix* response = nullptr);

void update_sigma(ModelState& state, const Dataset& data, const Hyperparameters& hyper,
                  Rng& rng, const Matrix* response = nullptr);

void update_zetas(ModelState& state, const Hyperparameters& hyper, Rng& rng);

void update_beta(ModelState& state, const Dataset& data, const ChainConfig& cfg,
                 const Hyperparameters& hyper, Rng& rng);

// Blocked column moves: the CUSP component label is drawn with the column
// integrated out, then the column is redrawn from its exact conditional.
void update_cusp_specific(ModelState& state, const Dataset& data,
                          const Hyperparameters& hyper, Rng& rng,
                          const Matrix* response = nullptr);

void update_cusp_shared(ModelState& state, const Dataset& data,
                        const Hyperparameters& hyper, Rng& rng,
                        const Matrix* response = nullptr);

// Resize the working truncation: drop trailing inactive columns past the
// last active one (keeping one buffer) or append a fresh prior column when
// everything is active. Fires with probability exp(-a0 - a1*iteration).
void adapt_truncation(ModelState& state, int iteration, const ChainConfig& cfg,
                      const Hyperparameters& hyper, const Dataset& data, Rng& rng);

void update_probit_latents(ModelState& state, const Dataset& data, Rng& rng);

// Posterior-predictive draws for the masked cells, in row-major mask order.
Vector impute_missing(const ModelState& state, const Dataset& data, Rng& rng);

std::vector<std::pair<int, int>> masked_cells(const Dataset& data);

// Applies the resize rule immediately (no probability gate).
void adapt_truncation_now(ModelState& state, const Hyperparameters& hyper,
                          const Dataset& data, Rng& rng);

struct SweepTimings {
    double probit = 0, eta = 0, phi_psi = 0, lambda = 0, gamma = 0, zetas = 0, sigma = 0,
           beta = 0, cusp_shared = 0, cusp_specific = 0, adapt = 0, impute = 0;
    std::vector<std::pair<std::string, double>> named() const;
};

PosteriorDraws run_chain(const Dataset& data, const Hyperparameters& hyper,
                         const ChainConfig& cfg, SweepTimings* timings = nullptr);

// One full sweep in the documented order; exposed for correctness testing
// (the Geweke successive-conditional loop drives it directly).
void gibbs_sweep(ModelState& state, const Dataset& data, const Hyperparameters& hyper,
                 const ChainConfig& cfg, Rng& rng, int iteration, Matrix& ywork,
                 SweepTimings* timings = nullptr);

// Initial chain state: init_active columns forced active, loadings from the
// prior, gates at probability 1/2.
ModelState initial_state(const Dataset& data, const Hyperparameters& hyper,
                         const ChainConfig& cfg, Rng& rng);

}  // namespace apafa
