#pragma once

#include "apafa/gibbs.hpp"
#include "apafa/model.hpp"
#include "apafa/priors.hpp"
#include "apafa/types.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace testutil {

using apafa::BoolMatrix;
using apafa::Dataset;
using apafa::Matrix;
using apafa::ModelState;
using apafa::Vector;

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// ---- independent density formulas for oracles (test-side only) ----

inline double log_normal(double x, double mean, double var) {
    const double e = x - mean;
    return -0.5 * (kLog2Pi + std::log(var) + e * e / var);
}

inline double log_inv_gamma(double x, double a, double b) {
    return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

// ---- grid oracle: normalized moments of exp(logf) over [lo, hi] ----

struct GridMoments {
    double mean = 0.0;
    double var = 0.0;
};

inline GridMoments grid_moments(const std::function<double(double)>& logf, double lo,
                                double hi, int npts = 20001) {
    std::vector<double> lw(npts);
    double m = -1e300;
    for (int i = 0; i < npts; ++i) {
        const double x = lo + (hi - lo) * i / (npts - 1);
        lw[i] = logf(x);
        m = std::max(m, lw[i]);
    }
    double z = 0.0, s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < npts; ++i) {
        const double x = lo + (hi - lo) * i / (npts - 1);
        const double w = std::exp(lw[i] - m);
        z += w;
        s1 += w * x;
        s2 += w * x * x;
    }
    GridMoments out;
    out.mean = s1 / z;
    out.var = s2 / z - out.mean * out.mean;
    return out;
}

// ---- sample statistics ----

inline double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

// batch-means standard error of the mean (valid for autocorrelated chains)
inline double batch_se(const std::vector<double>& v, int n_batches = 50) {
    const int len = static_cast<int>(v.size()) / n_batches;
    std::vector<double> bm(n_batches);
    for (int b = 0; b < n_batches; ++b) {
        double s = 0.0;
        for (int i = 0; i < len; ++i) s += v[b * len + i];
        bm[b] = s / len;
    }
    return std::sqrt(var_of(bm) / n_batches);
}

// ---- tiny valid states / datasets for unit tests ----

inline Dataset make_dataset(const Matrix& Y, int S = 1) {
    Dataset d;
    d.Y = Y;
    d.X = Matrix::Zero(Y.rows(), S);
    for (Eigen::Index i = 0; i < Y.rows(); ++i) d.X(i, (i * S) / std::max<Eigen::Index>(Y.rows(), 1)) = 1.0;
    d.missing_mask = BoolMatrix::Constant(Y.rows(), Y.cols(), false);
    return d;
}

// fully populated state with every column active and unit scales
inline ModelState make_state(int n, int p, int d, int k, int S = 1) {
    ModelState st;
    st.Lambda = Matrix::Zero(p, d);
    st.Gamma = Matrix::Zero(p, k);
    st.Eta = Matrix::Zero(n, d);
    st.PhiTilde = Matrix::Zero(n, k);
    st.Psi = Matrix::Ones(n, k);
    st.Beta = Matrix::Zero(S, k);
    st.sigma2 = Vector::Ones(p);
    st.zeta_lambda = Vector::Ones(d);
    st.zeta_gamma = Vector::Ones(k);
    st.tau_eta = Vector::Ones(d);
    st.tau_phi = Vector::Ones(k);
    st.stick_v_eta = Vector::Constant(d, 0.5);
    st.stick_v_phi = Vector::Constant(k, 0.5);
    st.cusp_indicator_eta.resize(d);
    for (int h = 0; h < d; ++h) st.cusp_indicator_eta(h) = d + 1;
    st.cusp_indicator_phi.resize(k);
    for (int h = 0; h < k; ++h) st.cusp_indicator_phi(h) = k + 1;
    return st;
}

}  // namespace testutil
