#include "apafa/types.hpp"

#include <cmath>
#include <sstream>

namespace apafa {

namespace {

bool is_binary_value(double x) { return x == 0.0 || x == 1.0; }

void add(std::vector<Violation>& out, const std::string& field, Eigen::Index r,
         Eigen::Index c, const std::string& msg) {
    out.push_back(Violation{field, r, c, msg});
}

void check_dim(std::vector<Violation>& out, const std::string& field, Eigen::Index got_r,
               Eigen::Index got_c, Eigen::Index want_r, Eigen::Index want_c) {
    if (got_r != want_r || got_c != want_c) {
        std::ostringstream ss;
        ss << field << " has shape " << got_r << "x" << got_c << ", expected " << want_r
           << "x" << want_c;
        add(out, field, -1, -1, ss.str());
    }
}

}  // namespace

void Hyperparameters::validate() const {
    auto req = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("Hyperparameters: ") + what);
    };
    req(alpha_eta > 0 && alpha_phi > 0, "CUSP concentrations must be positive");
    req(a_lambda > 0 && b_lambda > 0 && a_gamma > 0 && b_gamma > 0 && a_sigma > 0 &&
            b_sigma > 0,
        "inverse-gamma shapes/rates must be positive");
    req(beta_prior_scale_numerator > 0, "beta prior scale must be positive");
    req(d_max >= 1 && k_max >= 1, "truncation levels must be at least 1");
    req(spike_value > 0 && spike_value < 1, "spike_value must lie in (0,1)");
    req(adapt_a0 >= 0 && adapt_a1 >= 0, "adaptation schedule must be nonnegative");
}

std::vector<Violation> validate_dataset(const Dataset& data) {
    std::vector<Violation> out;
    const Eigen::Index n = data.Y.rows(), p = data.Y.cols();
    if (data.X.rows() != n) add(out, "X", -1, -1, "X row count differs from Y");
    for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
        double sum = 0.0;
        bool binary = true;
        for (Eigen::Index s = 0; s < data.X.cols(); ++s) {
            sum += data.X(i, s);
            binary = binary && is_binary_value(data.X(i, s));
        }
        if (!binary || std::abs(sum - 1.0) > 0.0)
            add(out, "X", i, -1, "row is not one-hot");
    }
    if (data.Z.size() > 0 && data.Z.rows() != n)
        add(out, "Z", -1, -1, "Z row count differs from Y");
    if (data.missing_mask.size() > 0 &&
        (data.missing_mask.rows() != n || data.missing_mask.cols() != p))
        add(out, "missing_mask", -1, -1, "mask shape differs from Y");
    if (data.outcome_kind == OutcomeKind::binary) {
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < p; ++j) {
                const bool masked = data.missing_mask.size() > 0 && data.missing_mask(i, j);
                if (!masked && !is_binary_value(data.Y(i, j)))
                    add(out, "Y", i, j, "observed binary outcome not in {0,1}");
            }
    }
    for (Eigen::Index i = 0; i < n && data.missing_mask.size() > 0; ++i)
        for (Eigen::Index j = 0; j < p; ++j)
            if (!data.missing_mask(i, j) && !std::isfinite(data.Y(i, j)))
                add(out, "Y", i, j, "non-finite observed value");
    return out;
}

std::vector<Violation> validate_state(const ModelState& state, const Dataset& data) {
    std::vector<Violation> out;
    const Eigen::Index n = data.n(), p = data.p();
    const Eigen::Index d = state.Lambda.cols(), k = state.Gamma.cols();
    const Eigen::Index m = data.S() + data.q();

    check_dim(out, "Lambda", state.Lambda.rows(), state.Lambda.cols(), p, d);
    check_dim(out, "Gamma", state.Gamma.rows(), state.Gamma.cols(), p, k);
    check_dim(out, "Eta", state.Eta.rows(), state.Eta.cols(), n, d);
    check_dim(out, "PhiTilde", state.PhiTilde.rows(), state.PhiTilde.cols(), n, k);
    check_dim(out, "Psi", state.Psi.rows(), state.Psi.cols(), n, k);
    check_dim(out, "Beta", state.Beta.rows(), state.Beta.cols(), m, k);
    check_dim(out, "Sigma_diag", state.sigma2.size(), 1, p, 1);
    check_dim(out, "zeta_lambda", state.zeta_lambda.size(), 1, d, 1);
    check_dim(out, "zeta_gamma", state.zeta_gamma.size(), 1, k, 1);
    check_dim(out, "tau_eta", state.tau_eta.size(), 1, d, 1);
    check_dim(out, "tau_phi", state.tau_phi.size(), 1, k, 1);
    check_dim(out, "stick_v_eta", state.stick_v_eta.size(), 1, d, 1);
    check_dim(out, "stick_v_phi", state.stick_v_phi.size(), 1, k, 1);
    check_dim(out, "cusp_indicator_eta", state.cusp_indicator_eta.size(), 1, d, 1);
    check_dim(out, "cusp_indicator_phi", state.cusp_indicator_phi.size(), 1, k, 1);
    if (state.ProbitZ.size() > 0)
        check_dim(out, "ProbitZ", state.ProbitZ.rows(), state.ProbitZ.cols(), n, p);
    if (!out.empty()) return out;  // value checks assume consistent shapes

    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index h = 0; h < k; ++h)
            if (!is_binary_value(state.Psi(i, h)))
                add(out, "Psi", i, h, "entry not in {0,1}");
    for (Eigen::Index h = 0; h < k; ++h)
        if (!is_binary_value(state.tau_phi(h)))
            add(out, "tau_phi", h, -1, "entry not in {0,1}");
    for (Eigen::Index j = 0; j < p; ++j)
        if (!(state.sigma2(j) > 0.0) || !std::isfinite(state.sigma2(j)))
            add(out, "Sigma_diag", j, -1, "entry not strictly positive");
    for (Eigen::Index h = 0; h < d; ++h) {
        if (!(state.zeta_lambda(h) > 0.0))
            add(out, "zeta_lambda", h, -1, "entry not strictly positive");
        if (!(state.tau_eta(h) > 0.0))
            add(out, "tau_eta", h, -1, "entry not strictly positive");
        if (!(state.stick_v_eta(h) > 0.0 && state.stick_v_eta(h) < 1.0))
            add(out, "stick_v_eta", h, -1, "entry not in (0,1)");
        if (state.cusp_indicator_eta(h) < 1 || state.cusp_indicator_eta(h) > d + 1)
            add(out, "cusp_indicator_eta", h, -1, "label out of range");
    }
    for (Eigen::Index h = 0; h < k; ++h) {
        if (!(state.zeta_gamma(h) > 0.0))
            add(out, "zeta_gamma", h, -1, "entry not strictly positive");
        if (!(state.stick_v_phi(h) > 0.0 && state.stick_v_phi(h) < 1.0))
            add(out, "stick_v_phi", h, -1, "entry not in (0,1)");
        if (state.cusp_indicator_phi(h) < 1 || state.cusp_indicator_phi(h) > k + 1)
            add(out, "cusp_indicator_phi", h, -1, "label out of range");
    }
    return out;
}

}  // namespace apafa
