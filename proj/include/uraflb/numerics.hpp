#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

namespace uraflb {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kLn2 = std::numbers::ln2;

// natural log of a nonnegative quantity, -inf allowed
struct LogProb {
    double value = -kInf;
    double prob() const { return std::exp(value); }
    double clamped() const { return std::min(1.0, std::exp(value)); }
};

inline double log_gamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("log_gamma: argument must be positive");
    return boost::math::lgamma(x);
}

inline double reg_gamma_lower(double a, double x) {
    if (!(a > 0.0)) throw std::domain_error("reg_gamma_lower: shape must be positive");
    if (x <= 0.0) return 0.0;
    if (x == kInf) return 1.0;
    return boost::math::gamma_p(a, x);
}

inline double reg_gamma_upper(double a, double x) {
    if (!(a > 0.0)) throw std::domain_error("reg_gamma_upper: shape must be positive");
    if (x <= 0.0) return 1.0;
    if (x == kInf) return 0.0;
    return boost::math::gamma_q(a, x);
}

inline double chi2_cdf(int dof, double x) {
    if (dof <= 0) throw std::domain_error("chi2_cdf: dof must be positive");
    return reg_gamma_lower(0.5 * dof, 0.5 * x);
}

inline double chi2_sf(int dof, double x) {
    if (dof <= 0) throw std::domain_error("chi2_sf: dof must be positive");
    return reg_gamma_upper(0.5 * dof, 0.5 * x);
}

inline double chi2_quantile(int dof, double p) {
    if (dof <= 0) throw std::domain_error("chi2_quantile: dof must be positive");
    if (!(p >= 0.0) || p > 1.0) throw std::domain_error("chi2_quantile: p outside [0,1]");
    if (p == 0.0) return 0.0;
    if (p == 1.0) return kInf;
    return 2.0 * boost::math::gamma_p_inv(0.5 * dof, p);
}

// x with P[chi2(dof) >= x] = q; accurate for tiny q where 1 - q rounds to 1
inline double chi2_isf(int dof, double q) {
    if (dof <= 0) throw std::domain_error("chi2_isf: dof must be positive");
    if (!(q >= 0.0) || q > 1.0) throw std::domain_error("chi2_isf: q outside [0,1]");
    if (q == 1.0) return 0.0;
    if (q == 0.0) return kInf;
    return 2.0 * boost::math::gamma_q_inv(0.5 * dof, q);
}

// ln C(n, k) for ordinary integers
inline double log_binomial(double n, double k) {
    if (k < 0 || k > n) return -kInf;
    if (k == 0 || k == n) return 0.0;
    return log_gamma(n + 1.0) - log_gamma(k + 1.0) - log_gamma(n - k + 1.0);
}

// ln C(2^J - offset, k); exact product form so it stays accurate when 2^J overflows
inline double log_binomial_pow2(int J, double k, double offset = 0.0) {
    if (k < 0) return -kInf;
    if (J < 53) {
        const double M = std::ldexp(1.0, J) - offset;
        if (k > M) return -kInf;
        if (k > 100000.0) return log_binomial(M, k);
    }
    if (k == 0) return 0.0;
    const double jl = J * kLn2;
    const double inv = std::ldexp(1.0, -J);
    double s = 0.0;
    const long kk = static_cast<long>(k);
    for (long i = 0; i < kk; ++i) {
        const double frac = (offset + static_cast<double>(i)) * inv;
        if (frac != 0.0) s += std::log1p(-frac);
    }
    return k * jl + s - log_gamma(k + 1.0);
}

inline double binary_entropy(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

// ln(e^a + e^b)
inline double log_add(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

// ln of the arithmetic mean of exp(v_i), Neumaier-compensated in index order
inline double log_mean_exp(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("log_mean_exp: empty input");
    double m = -kInf;
    for (double x : v) m = std::max(m, x);
    if (m == -kInf) return -kInf;
    if (m == kInf) return kInf;
    double sum = 0.0, comp = 0.0;
    for (double x : v) {
        const double term = std::exp(x - m);
        const double t = sum + term;
        if (std::abs(sum) >= std::abs(term)) comp += (sum - t) + term;
        else comp += (term - t) + sum;
        sum = t;
    }
    return m + std::log((sum + comp) / static_cast<double>(v.size()));
}

enum class Scale { linear, logarithmic };

struct SearchDomain {
    double lower = 0.0;
    double upper = 1.0;
    Scale scale = Scale::linear;
    int budget = 40;
    int refine = 60;
};

struct ScalarMin {
    double argmin = 0.0;
    double value = kInf;
    bool feasible = false;
};

// Coarse grid, then golden section on the bracket around the best grid point.
// Logarithmic domains are searched in log(x); a zero lower bound is probed
// separately and the grid starts at upper*1e-8.
inline ScalarMin minimize_scalar(const std::function<double(double)>& f, SearchDomain d) {
    if (!(d.lower < d.upper) || d.budget < 3) throw std::invalid_argument("minimize_scalar: bad domain");
    ScalarMin best;
    auto probe = [&](double x) {
        const double y = f(x);
        if (!std::isnan(y) && y < best.value) {
            best.value = y;
            best.argmin = x;
            best.feasible = std::isfinite(y) || y == -kInf;
        }
        return std::isnan(y) ? kInf : y;
    };

    const bool logs = d.scale == Scale::logarithmic;
    double lo = d.lower, hi = d.upper;
    if (logs) {
        if (lo <= 0.0) {
            probe(0.0);
            lo = hi * 1e-8;
        }
        lo = std::log(lo);
        hi = std::log(hi);
    }
    auto to_x = [&](double z) { return logs ? std::exp(z) : z; };

    std::vector<double> zs(d.budget), ys(d.budget);
    for (int i = 0; i < d.budget; ++i) {
        zs[i] = lo + (hi - lo) * i / (d.budget - 1);
        ys[i] = probe(to_x(zs[i]));
    }
    const int ib = static_cast<int>(std::min_element(ys.begin(), ys.end()) - ys.begin());
    if (!std::isfinite(ys[ib])) return best;

    double a = zs[std::max(ib - 1, 0)], b = zs[std::min(ib + 1, d.budget - 1)];
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a), e = a + g * (b - a);
    double fc = probe(to_x(c)), fe = probe(to_x(e));
    for (int it = 0; it < d.refine; ++it) {
        if (fc <= fe) {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = probe(to_x(c));
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = probe(to_x(e));
        }
        if (std::abs(b - a) < 1e-12 * (1.0 + std::abs(a))) break;
    }
    return best;
}

// Golden section on [a, b] for a unimodal function; returns the best probed point.
inline ScalarMin golden_section(const std::function<double(double)>& f, double a, double b, int iters) {
    ScalarMin best;
    auto probe = [&](double x) {
        const double y = f(x);
        if (y < best.value) {
            best.value = y;
            best.argmin = x;
            best.feasible = true;
        }
        return y;
    };
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a), e = a + g * (b - a);
    double fc = probe(c), fe = probe(e);
    for (int it = 0; it < iters; ++it) {
        if (fc <= fe) {
            b = e; e = c; fe = fc;
            c = b - g * (b - a);
            fc = probe(c);
        } else {
            a = c; c = e; fc = fe;
            e = a + g * (b - a);
            fe = probe(e);
        }
    }
    return best;
}

}  // namespace uraflb
