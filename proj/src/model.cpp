#include "apafa/model.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <map>
#include <sstream>

namespace apafa {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

Matrix assemble_marginal_covariance(const Matrix& Lambda, const Matrix& Gamma,
                                    const Vector& psi_i, const Vector& sigma2) {
    const Eigen::Index p = Lambda.rows();
    if (Gamma.rows() != p)
        throw std::invalid_argument("assemble_marginal_covariance: Gamma row count");
    if (psi_i.size() != Gamma.cols())
        throw std::invalid_argument("assemble_marginal_covariance: psi length");
    if (sigma2.size() != p)
        throw std::invalid_argument("assemble_marginal_covariance: sigma length");

    Matrix omega = Lambda * Lambda.transpose();
    if (Gamma.cols() > 0) {
        Matrix gated = Gamma * psi_i.asDiagonal();
        omega.noalias() += gated * Gamma.transpose();
    }
    omega = 0.5 * (omega + omega.transpose()).eval();
    omega.diagonal() += sigma2;
    return omega;
}

double marginal_log_likelihood(const Dataset& data, const ModelState& state) {
    if (data.outcome_kind != OutcomeKind::continuous)
        throw std::invalid_argument("marginal_log_likelihood: continuous outcomes only");
    const Eigen::Index n = data.n(), p = data.p();
    const bool masked = data.has_missing();

    // Units sharing a (psi row, observed set) share Omega_i; factorize once each.
    struct Block {
        Eigen::LLT<Matrix> llt;
        double log_det = 0.0;
        std::vector<Eigen::Index> obs;
    };
    std::map<std::string, Block> cache;

    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::string key(static_cast<std::size_t>(state.k() + p), '\0');
        for (Eigen::Index h = 0; h < state.k(); ++h)
            key[static_cast<std::size_t>(h)] = state.Psi(i, h) > 0.5 ? 1 : 0;
        for (Eigen::Index j = 0; j < p; ++j)
            key[static_cast<std::size_t>(state.k() + j)] =
                (masked && data.missing_mask(i, j)) ? 0 : 1;

        auto it = cache.find(key);
        if (it == cache.end()) {
            Block blk;
            for (Eigen::Index j = 0; j < p; ++j)
                if (!(masked && data.missing_mask(i, j))) blk.obs.push_back(j);
            const Eigen::Index po = static_cast<Eigen::Index>(blk.obs.size());
            Matrix omega = assemble_marginal_covariance(state.Lambda, state.Gamma,
                                                        state.Psi.row(i).transpose(),
                                                        state.sigma2);
            Matrix sub(po, po);
            for (Eigen::Index a = 0; a < po; ++a)
                for (Eigen::Index b = 0; b < po; ++b) sub(a, b) = omega(blk.obs[a], blk.obs[b]);
            blk.llt.compute(sub);
            if (blk.llt.info() != Eigen::Success) {
                std::ostringstream ss;
                ss << "marginal_log_likelihood: Omega not positive definite at unit " << i;
                throw numeric_error(ss.str());
            }
            blk.log_det = 2.0 * blk.llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
            it = cache.emplace(std::move(key), std::move(blk)).first;
        }
        const Block& blk = it->second;
        const Eigen::Index po = static_cast<Eigen::Index>(blk.obs.size());
        if (po == 0) continue;
        Vector y(po);
        for (Eigen::Index a = 0; a < po; ++a) y(a) = data.Y(i, blk.obs[a]);
        const double quad = y.dot(blk.llt.solve(y));
        total += -0.5 * (static_cast<double>(po) * kLog2Pi + blk.log_det + quad);
    }
    return total;
}

double conditional_log_likelihood(const Dataset& data, const ModelState& state) {
    if (data.outcome_kind != OutcomeKind::continuous)
        throw std::invalid_argument("conditional_log_likelihood: continuous outcomes only");
    const Eigen::Index n = data.n(), p = data.p();
    const bool masked = data.has_missing();

    Matrix mean = state.Eta * state.Lambda.transpose();
    if (state.k() > 0) mean.noalias() += state.phi() * state.Gamma.transpose();

    double total = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
        const double s2 = state.sigma2(j);
        const double log_term = std::log(s2) + kLog2Pi;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (masked && data.missing_mask(i, j)) continue;
            const double e = data.Y(i, j) - mean(i, j);
            total += -0.5 * (log_term + e * e / s2);
        }
    }
    return total;
}

ActiveCounts active_factor_counts(const ModelState& state) {
    ActiveCounts out;
    for (Eigen::Index h = 0; h < state.d(); ++h)
        if (state.tau_eta(h) > 0.5) ++out.d_active;  // slab regime (tau = 1)
    for (Eigen::Index h = 0; h < state.k(); ++h) {
        if (state.tau_phi(h) < 0.5) continue;
        if (state.Psi.rows() > 0 && state.Psi.col(h).maxCoeff() > 0.5) ++out.k_active;
    }
    return out;
}

}  // namespace apafa
