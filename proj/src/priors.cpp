#include "apafa/priors.hpp"

#include <cmath>

namespace apafa {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_normal_pdf(double x, double var) {
    return -0.5 * (kLog2Pi + std::log(var) + x * x / var);
}

double log_inv_gamma_pdf(double x, double a, double b) {
    return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
}

// Beta(1, alpha)
double log_stick_pdf(double v, double alpha) {
    return std::log(alpha) + (alpha - 1.0) * std::log1p(-v);
}

// keep drawn sticks strictly inside (0,1); extreme concentrations can
// underflow the beta draw to an endpoint
double clamp_stick(double v) { return std::min(std::max(v, 1e-12), 1.0 - 1e-12); }

// Group layout used when no dataset accompanies the state: contiguous,
// near-equal blocks.
Matrix block_one_hot(int n, int S) {
    Matrix X = Matrix::Zero(n, S);
    for (int i = 0; i < n; ++i) X(i, (i * S) / n) = 1.0;
    return X;
}

}  // namespace

double gate_probability(const Vector& beta_h, const Vector& x_i, const Vector* beta_z,
                        const Vector* z_i) {
    if (beta_h.size() != x_i.size())
        throw std::invalid_argument("gate_probability: beta/x size mismatch");
    double lin = beta_h.dot(x_i);
    if (beta_z != nullptr && z_i != nullptr) {
        if (beta_z->size() != z_i->size())
            throw std::invalid_argument("gate_probability: beta_z/z size mismatch");
        lin += beta_z->dot(*z_i);
    }
    if (lin >= 0.0) return 1.0 / (1.0 + std::exp(-lin));
    const double e = std::exp(lin);
    return e / (1.0 + e);
}

CuspWeights cusp_stick_weights(const Vector& v) {
    for (Eigen::Index l = 0; l < v.size(); ++l)
        if (!(v(l) > 0.0 && v(l) < 1.0))
            throw std::invalid_argument("cusp_stick_weights: sticks must lie in (0,1)");
    CuspWeights out;
    out.v = v;
    out.w.resize(v.size());
    out.rho.resize(v.size());
    double remaining = 1.0;
    double cum = 0.0;
    for (Eigen::Index l = 0; l < v.size(); ++l) {
        out.w(l) = v(l) * remaining;
        remaining *= (1.0 - v(l));
        cum += out.w(l);
        out.rho(l) = std::min(cum, 1.0);
    }
    return out;
}

namespace {

ModelState sample_prior_state_impl(const Hyperparameters& hyper, const Matrix& X,
                                   const Matrix& Z, int p, Rng& rng);

}  // namespace

ModelState sample_prior_state(const Hyperparameters& hyper, int n, int p, int S,
                              std::uint64_t rng_seed, int q) {
    Rng rng(rng_seed);
    return sample_prior_state(hyper, n, p, S, rng, q);
}

ModelState sample_prior_state(const Hyperparameters& hyper, int n, int p, int S, Rng& rng,
                              int q) {
    if (n < 1 || p < 1 || S < 1 || q < 0)
        throw std::invalid_argument("sample_prior_state: dimensions must be positive");
    return sample_prior_state_impl(hyper, block_one_hot(n, S), Matrix::Zero(n, q), p, rng);
}

ModelState sample_prior_state(const Hyperparameters& hyper, const Dataset& data, Rng& rng) {
    return sample_prior_state_impl(hyper, data.X, data.Z, static_cast<int>(data.p()), rng);
}

namespace {

ModelState sample_prior_state_impl(const Hyperparameters& hyper, const Matrix& X,
                                   const Matrix& Z, int p, Rng& rng) {
    hyper.validate();
    const int n = static_cast<int>(X.rows());
    const int S = static_cast<int>(X.cols());
    const int q = static_cast<int>(Z.cols());
    const int d = hyper.d_max;
    const int k = hyper.k_max;
    const int m = S + q;
    const double c_over_n = hyper.beta_prior_scale_numerator / static_cast<double>(n);

    ModelState st;

    // shared part: sticks, labels, two-point scales, loadings
    st.stick_v_eta.resize(d);
    for (int h = 0; h < d; ++h) st.stick_v_eta(h) = clamp_stick(rng.beta(1.0, hyper.alpha_eta));
    const CuspWeights cw_eta = cusp_stick_weights(st.stick_v_eta);
    st.cusp_indicator_eta.resize(d);
    st.tau_eta.resize(d);
    {
        std::vector<double> logw(static_cast<std::size_t>(d) + 1);
        for (int l = 0; l < d; ++l) logw[l] = std::log(std::max(cw_eta.w(l), 1e-300));
        logw[d] = std::log(std::max(cw_eta.tail(), 1e-300));
        for (int h = 0; h < d; ++h) {
            const int z = 1 + rng.categorical_log(logw);
            st.cusp_indicator_eta(h) = z;
            st.tau_eta(h) = z > h + 1 ? 1.0 : hyper.spike_value;
        }
    }
    st.zeta_lambda.resize(d);
    for (int h = 0; h < d; ++h) st.zeta_lambda(h) = rng.inv_gamma(hyper.a_lambda, hyper.b_lambda);
    st.Lambda.resize(p, d);
    for (int h = 0; h < d; ++h) {
        const double sd = std::sqrt(st.tau_eta(h) * st.zeta_lambda(h));
        for (int j = 0; j < p; ++j) st.Lambda(j, h) = rng.normal(0.0, sd);
    }

    // specific part
    st.stick_v_phi.resize(k);
    for (int h = 0; h < k; ++h) st.stick_v_phi(h) = clamp_stick(rng.beta(1.0, hyper.alpha_phi));
    const CuspWeights cw_phi = cusp_stick_weights(st.stick_v_phi);
    st.cusp_indicator_phi.resize(k);
    st.tau_phi.resize(k);
    {
        std::vector<double> logw(static_cast<std::size_t>(k) + 1);
        for (int l = 0; l < k; ++l) logw[l] = std::log(std::max(cw_phi.w(l), 1e-300));
        logw[k] = std::log(std::max(cw_phi.tail(), 1e-300));
        for (int h = 0; h < k; ++h) {
            const int z = 1 + rng.categorical_log(logw);
            st.cusp_indicator_phi(h) = z;
            st.tau_phi(h) = z > h + 1 ? 1.0 : 0.0;
        }
    }
    st.zeta_gamma.resize(k);
    for (int h = 0; h < k; ++h) st.zeta_gamma(h) = rng.inv_gamma(hyper.a_gamma, hyper.b_gamma);
    st.Gamma.resize(p, k);
    for (int h = 0; h < k; ++h) {
        const double sd = std::sqrt(st.zeta_gamma(h));
        for (int j = 0; j < p; ++j) st.Gamma(j, h) = rng.normal(0.0, sd);
    }

    st.Beta.resize(m, k);
    const double beta_sd = std::sqrt(c_over_n);
    for (int h = 0; h < k; ++h)
        for (int s = 0; s < m; ++s) st.Beta(s, h) = rng.normal(0.0, beta_sd);

    st.Psi.resize(n, k);
    for (int i = 0; i < n; ++i) {
        for (int h = 0; h < k; ++h) {
            double g;
            if (q > 0) {
                const Vector bz = st.Beta.col(h).tail(q);
                const Vector zi = Z.row(i).transpose();
                g = gate_probability(st.Beta.col(h).head(S), X.row(i).transpose(), &bz, &zi);
            } else {
                g = gate_probability(st.Beta.col(h).head(S), X.row(i).transpose());
            }
            st.Psi(i, h) = rng.bernoulli(g) ? 1.0 : 0.0;
        }
    }

    st.Eta.resize(n, d);
    for (int i = 0; i < n; ++i)
        for (int h = 0; h < d; ++h) st.Eta(i, h) = rng.normal();
    st.PhiTilde.resize(n, k);
    for (int i = 0; i < n; ++i)
        for (int h = 0; h < k; ++h)
            st.PhiTilde(i, h) = st.tau_phi(h) > 0.5 ? rng.normal() : 0.0;

    st.sigma2.resize(p);
    for (int j = 0; j < p; ++j) st.sigma2(j) = rng.inv_gamma(hyper.a_sigma, hyper.b_sigma);

    return st;
}

}  // namespace

double log_prior_density(const ModelState& state, const Hyperparameters& hyper) {
    return log_prior_density(state, hyper, nullptr);
}

double log_prior_density(const ModelState& state, const Hyperparameters& hyper,
                         const Dataset* data) {
    hyper.validate();
    const Eigen::Index n = state.n(), p = state.p();
    const Eigen::Index d = state.d(), k = state.k();
    const Eigen::Index S = data != nullptr ? data->S() : state.Beta.rows();
    Matrix X = data != nullptr ? data->X : block_one_hot(static_cast<int>(n),
                                                         static_cast<int>(S));
    if (data != nullptr) {
        std::vector<Violation> v = validate_state(state, *data);
        if (!v.empty())
            throw std::invalid_argument("log_prior_density: invalid state: " + v[0].message);
    }

    double total = 0.0;
    const double neg_inf = -std::numeric_limits<double>::infinity();

    // CUSP shared: sticks, labels, deterministic two-point scale
    const CuspWeights cw_eta = cusp_stick_weights(state.stick_v_eta);
    for (Eigen::Index h = 0; h < d; ++h)
        total += log_stick_pdf(state.stick_v_eta(h), hyper.alpha_eta);
    for (Eigen::Index h = 0; h < d; ++h) {
        const int z = state.cusp_indicator_eta(h);
        const double wz = z <= d ? cw_eta.w(z - 1) : cw_eta.tail();
        total += std::log(std::max(wz, 0.0));
        const double expected = z > h + 1 ? 1.0 : hyper.spike_value;
        if (state.tau_eta(h) != expected) return neg_inf;
    }

    // CUSP specific
    const CuspWeights cw_phi = cusp_stick_weights(state.stick_v_phi);
    for (Eigen::Index h = 0; h < k; ++h)
        total += log_stick_pdf(state.stick_v_phi(h), hyper.alpha_phi);
    for (Eigen::Index h = 0; h < k; ++h) {
        const int z = state.cusp_indicator_phi(h);
        const double wz = z <= k ? cw_phi.w(z - 1) : cw_phi.tail();
        total += std::log(std::max(wz, 0.0));
        const double expected = z > h + 1 ? 1.0 : 0.0;
        if (state.tau_phi(h) != expected) return neg_inf;
    }

    // loadings and their column scales
    for (Eigen::Index h = 0; h < d; ++h) {
        total += log_inv_gamma_pdf(state.zeta_lambda(h), hyper.a_lambda, hyper.b_lambda);
        const double var = state.tau_eta(h) * state.zeta_lambda(h);
        for (Eigen::Index j = 0; j < p; ++j) total += log_normal_pdf(state.Lambda(j, h), var);
    }
    for (Eigen::Index h = 0; h < k; ++h) {
        total += log_inv_gamma_pdf(state.zeta_gamma(h), hyper.a_gamma, hyper.b_gamma);
        for (Eigen::Index j = 0; j < p; ++j)
            total += log_normal_pdf(state.Gamma(j, h), state.zeta_gamma(h));
    }

    // gate coefficients and activations
    const double c_over_n = hyper.beta_prior_scale_numerator / static_cast<double>(n);
    for (Eigen::Index h = 0; h < k; ++h)
        for (Eigen::Index s = 0; s < state.Beta.rows(); ++s)
            total += log_normal_pdf(state.Beta(s, h), c_over_n);
    const Eigen::Index q = state.Beta.rows() - S;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index h = 0; h < k; ++h) {
            double g;
            if (q > 0 && data != nullptr) {
                const Vector bz = state.Beta.col(h).tail(q);
                const Vector zi = data->Z.row(i).transpose();
                g = gate_probability(state.Beta.col(h).head(S), X.row(i).transpose(), &bz,
                                     &zi);
            } else {
                g = gate_probability(state.Beta.col(h).head(S), X.row(i).transpose());
            }
            total += state.Psi(i, h) > 0.5 ? std::log(g) : std::log1p(-g);
        }
    }

    // latent factors
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index h = 0; h < d; ++h) total += log_normal_pdf(state.Eta(i, h), 1.0);
    for (Eigen::Index h = 0; h < k; ++h) {
        if (state.tau_phi(h) > 0.5) {
            for (Eigen::Index i = 0; i < n; ++i)
                total += log_normal_pdf(state.PhiTilde(i, h), 1.0);
        } else {
            // spike column: point mass at zero
            for (Eigen::Index i = 0; i < n; ++i)
                if (state.PhiTilde(i, h) != 0.0) return neg_inf;
        }
    }

    // noise
    for (Eigen::Index j = 0; j < p; ++j)
        total += log_inv_gamma_pdf(state.sigma2(j), hyper.a_sigma, hyper.b_sigma);

    return total;
}

}  // namespace apafa
