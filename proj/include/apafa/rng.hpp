#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace apafa {

// Random source with hand-rolled transforms so that a given seed produces
// the same stream on every platform (the std <random> distributions are
// implementation-defined; the mt19937_64 engine itself is not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t raw() { return gen_(); }

    // Uniform on the open interval (0,1); never returns 0 or 1, safe for logs.
    double uniform() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::int64_t uniform_int(std::int64_t n) {  // 0..n-1, n small
        return static_cast<std::int64_t>(uniform() * static_cast<double>(n)) % n;
    }

    // Marsaglia polar method, no cached spare.
    double normal() {
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        return u * std::sqrt(-2.0 * std::log(s) / s);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    double exponential(double rate = 1.0) { return -std::log(uniform()) / rate; }

    bool bernoulli(double p) { return uniform() < p; }

    // Marsaglia-Tsang; rate parametrization (mean = shape/rate).
    double gamma(double shape, double rate) {
        if (!(shape > 0.0) || !(rate > 0.0))
            throw std::invalid_argument("gamma: shape and rate must be positive");
        if (shape < 1.0) {
            double u = uniform();
            return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
        }
    }

    // X ~ IGa(a,b) via 1/X ~ Gamma(a, rate=b).
    double inv_gamma(double shape, double scale) { return 1.0 / gamma(shape, scale); }

    double beta(double a, double b) {
        const double x = gamma(a, 1.0);
        const double y = gamma(b, 1.0);
        return x / (x + y);
    }

    // Index draw from unnormalized log-weights.
    int categorical_log(const std::vector<double>& logw) {
        double m = logw[0];
        for (double lw : logw) m = std::max(m, lw);
        double total = 0.0;
        std::vector<double> cum(logw.size());
        for (std::size_t i = 0; i < logw.size(); ++i) {
            total += std::exp(logw[i] - m);
            cum[i] = total;
        }
        const double u = uniform() * total;
        for (std::size_t i = 0; i + 1 < cum.size(); ++i)
            if (u <= cum[i]) return static_cast<int>(i);
        return static_cast<int>(cum.size()) - 1;
    }

    // Standard normal conditioned on z >= a (Robert 1995 for far tails).
    double trunc_std_normal_lower(double a) {
        if (a <= 0.45) {
            for (;;) {
                const double z = normal();
                if (z >= a) return z;
            }
        }
        const double lambda = 0.5 * (a + std::sqrt(a * a + 4.0));
        for (;;) {
            const double z = a + exponential(lambda);
            const double diff = z - lambda;
            if (std::log(uniform()) <= -0.5 * diff * diff) return z;
        }
    }

    // N(mean, sd^2) conditioned on x > lower (lower=true) or x <= bound.
    double trunc_normal(double mean, double sd, double bound, bool above) {
        const double a = (bound - mean) / sd;
        if (above) return mean + sd * trunc_std_normal_lower(a);
        return mean - sd * trunc_std_normal_lower(-a);
    }

    // Polya-Gamma PG(1, z) via the alternating-series method
    // (Polson, Scott & Windle; Windle 2013, Algorithm 6).
    double polya_gamma(double z);

private:
    std::mt19937_64 gen_;
};

namespace detail {

inline double log_norm_cdf(double x) {
    if (x > -26.0) {
        const double c = std::erfc(-x / std::sqrt(2.0));
        if (c > 0.0) return std::log(0.5 * c);
    }
    // asymptotic tail expansion
    const double x2 = x * x;
    return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * M_PI) +
           std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

// Piecewise coefficient a_n(x|t) of the Jacobi-theta series.
inline double pg_aterm(int n, double x, double t) {
    const double log_pi = std::log(M_PI);
    double f;
    if (x <= t) {
        f = log_pi + std::log(n + 0.5) + 1.5 * (std::log(2.0 / M_PI) - std::log(x)) -
            2.0 * (n + 0.5) * (n + 0.5) / x;
    } else {
        f = log_pi + std::log(n + 0.5) - 0.5 * x * M_PI * M_PI * (n + 0.5) * (n + 0.5);
    }
    return std::exp(f);
}

}  // namespace detail

inline double pg_inv_gauss(Rng& rng, double mu) {
    const double u = rng.normal();
    const double v = u * u;
    double out = mu + 0.5 * mu * (mu * v - std::sqrt(4.0 * mu * v + mu * mu * v * v));
    if (rng.uniform() > mu / (mu + out)) out = mu * mu / out;
    return out;
}

inline double pg_trunc_gamma(Rng& rng) {
    const double c = M_PI / 2.0;
    for (;;) {
        const double x = rng.exponential(1.0) * 2.0 + c;
        const double gx = std::sqrt(M_PI / 2.0) / std::sqrt(x);
        if (rng.uniform() <= gx) return x;
    }
}

// Inverse-Gaussian(1/z) truncated to (0, t).
inline double pg_trunc_inv_gauss(Rng& rng, double z, double t) {
    const double mu = 1.0 / z;
    if (mu > t) {
        for (;;) {
            const double u = rng.uniform();
            const double x = 1.0 / pg_trunc_gamma(rng);
            if (std::log(u) < -z * z * 0.5 * x) return x;
        }
    }
    double x = t + 1.0;
    while (x >= t) x = pg_inv_gauss(rng, mu);
    return x;
}

inline double Rng::polya_gamma(double z) {
    z = std::fabs(z) * 0.5;
    if (z < 1e-12) z = 1e-12;
    const double t = 2.0 / M_PI;

    const double K = z * z / 2.0 + M_PI * M_PI / 8.0;
    const double logA = std::log(4.0) - std::log(M_PI) - z;
    const double logK = std::log(K);
    const double Kt = K * t;
    const double w = std::sqrt(M_PI / 2.0);

    const double logf1 = logA + detail::log_norm_cdf(w * (t * z - 1.0)) + logK + Kt;
    const double logf2 = logA + 2.0 * z + detail::log_norm_cdf(-w * (t * z + 1.0)) + logK + Kt;
    const double p_over_q = std::exp(logf1) + std::exp(logf2);
    const double ratio = 1.0 / (1.0 + p_over_q);

    for (;;) {
        double x;
        if (uniform() < ratio) {
            x = t + exponential(1.0) / K;
        } else {
            x = pg_trunc_inv_gauss(*this, z, t);
        }
        int i = 1;
        double sn = detail::pg_aterm(0, x, t);
        const double u = uniform() * sn;
        int sign = -1;
        bool even = false;
        for (;;) {
            sn += sign * detail::pg_aterm(i, x, t);
            if (!even && u <= sn) return 0.25 * x;
            if (even && u > sn) break;
            even = !even;
            sign = -sign;
            ++i;
        }
    }
}

}  // namespace apafa
