#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace apafa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Thrown when a linear-algebra step degenerates (non-PD covariance etc.);
// carries the component name and, where known, the unit/iteration index.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

enum class OutcomeKind { continuous, binary };

// Observed data: outcomes, one-hot group dummies, optional extra covariates.
struct Dataset {
    Matrix Y;                  // n x p, entries at masked cells are ignored
    Matrix X;                  // n x S, one-hot rows
    Matrix Z;                  // n x q (q == 0 when absent)
    BoolMatrix missing_mask;   // n x p, true where Y is unobserved
    OutcomeKind outcome_kind = OutcomeKind::continuous;

    Eigen::Index n() const { return Y.rows(); }
    Eigen::Index p() const { return Y.cols(); }
    Eigen::Index S() const { return X.cols(); }
    Eigen::Index q() const { return Z.cols(); }

    int group_of(Eigen::Index i) const {
        for (Eigen::Index s = 0; s < X.cols(); ++s)
            if (X(i, s) > 0.5) return static_cast<int>(s);
        return -1;
    }
    bool has_missing() const {
        return missing_mask.size() > 0 && missing_mask.any();
    }
};

// All prior constants.
struct Hyperparameters {
    double alpha_eta = 1.0;   // CUSP concentration, shared part
    double alpha_phi = 4.0;   // CUSP concentration, specific part
    double a_lambda = 2.0, b_lambda = 2.0;
    double a_gamma = 2.0, b_gamma = 2.0;
    double a_sigma = 2.0, b_sigma = 2.0;
    double beta_prior_scale_numerator = 10.0;  // beta prior variance = c/n
    int d_max = 20;
    int k_max = 20;
    double spike_value = 1e-4;   // shared-part spike scale
    double adapt_a0 = 1.0;       // adaptation probability exp(-a0 - a1*iter)
    double adapt_a1 = 5e-4;

    // Column-count cap from the switching analysis: p(p+1)/2 - 1.
    static int truncation_cap(int p) {
        const long b = static_cast<long>(p) * (p + 1) / 2 - 1;
        return static_cast<int>(b);
    }

    // Defaults for a given data dimension: d_max = k_max = min(p, 20), capped.
    static Hyperparameters defaults_for(int p) {
        Hyperparameters h;
        h.d_max = std::min(std::min(p, 20), truncation_cap(p));
        h.k_max = h.d_max;
        return h;
    }

    void validate() const;
};

// One full configuration of latent quantities. A plain value: copyable and
// safe to move across threads.
struct ModelState {
    Matrix Lambda;     // p x d shared loadings
    Matrix Gamma;      // p x k specific loadings
    Matrix Eta;        // n x d shared factors
    Matrix PhiTilde;   // n x k unscaled specific factors (column is 0 when tau_phi=0)
    Matrix Psi;        // n x k, 0/1 local activation
    Matrix Beta;       // (S+q) x k gate coefficients
    Vector sigma2;     // p noise variances (Sigma_diag)
    Vector zeta_lambda;  // d
    Vector zeta_gamma;   // k
    Vector tau_eta;      // d, slab 1 or spike_value
    Vector tau_phi;      // k, 0/1 global specific activation
    Vector stick_v_eta;  // d, in (0,1)
    Vector stick_v_phi;  // k, in (0,1)
    IntVector cusp_indicator_eta;  // d, labels in 1..d+1 (d+1 = beyond truncation)
    IntVector cusp_indicator_phi;  // k, labels in 1..k+1
    Matrix ProbitZ;    // n x p latent responses for binary data, else 0 x 0

    Eigen::Index d() const { return Lambda.cols(); }
    Eigen::Index k() const { return Gamma.cols(); }
    Eigen::Index n() const { return Eta.rows(); }
    Eigen::Index p() const { return Lambda.rows(); }

    // Effective specific factors: psi (x) phi_tilde, derived on demand.
    Matrix phi() const { return Psi.cwiseProduct(PhiTilde); }
};

// Scenario ground truth. Groups are the distinct (study, activation pattern)
// combinations, so the per-group covariance identity holds exactly.
struct SyntheticTruth {
    Matrix Lambda_true;              // p x d0
    Matrix Gamma_true;               // p x k0
    Matrix Psi_true;                 // n x k0, 0/1
    Vector sigma2_true;              // p
    std::vector<Matrix> Omega_by_group;   // one p x p SPD matrix per group
    std::vector<int> group_labels;        // n entries in [0, Omega_by_group.size())
    std::vector<int> study_labels;        // n entries in [0, S)

    Eigen::Index n_groups() const { return static_cast<Eigen::Index>(Omega_by_group.size()); }
};

struct DrawsMeta {
    std::uint64_t seed = 0;
    int iterations = 0;
    int burn_in = 0;
    int thinning = 1;
    double runtime_seconds = 0.0;
};

// Thinned post-burn-in chain output plus derived per-draw quantities.
struct PosteriorDraws {
    std::vector<ModelState> states;
    std::vector<std::pair<int, int>> active_counts;   // (d_active, k_active) per draw
    std::vector<std::pair<int, int>> heldout_cells;   // masked (i,j) cells
    Matrix imputed;   // n_draws x heldout_cells.size(), imputations per draw
    DrawsMeta meta;

    std::size_t size() const { return states.size(); }
};

// One structural violation found by validate_state.
struct Violation {
    std::string field;
    Eigen::Index row = -1;
    Eigen::Index col = -1;
    std::string message;
};

std::vector<Violation> validate_state(const ModelState& state, const Dataset& data);
std::vector<Violation> validate_dataset(const Dataset& data);

}  // namespace apafa
