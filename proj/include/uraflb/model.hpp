#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "numerics.hpp"

namespace uraflb {

enum class Ensemble { gaussian, spherical };

inline const char* to_string(Ensemble e) { return e == Ensemble::gaussian ? "gaussian" : "spherical"; }

struct KaDistribution {
    enum class Kind { fixed, binomial, explicit_pmf };
    Kind kind = Kind::fixed;
    int k0 = 0;
    int K = 0;
    double pa = 0.0;
    std::vector<double> mass;  // explicit pmf on [0:K]

    static KaDistribution fixed(int k) {
        if (k < 0) throw std::invalid_argument("fixed: negative count");
        KaDistribution d;
        d.kind = Kind::fixed;
        d.k0 = k;
        d.K = k;
        return d;
    }
    static KaDistribution binomial(int K, double pa) {
        if (K < 0 || !(pa >= 0.0 && pa <= 1.0)) throw std::invalid_argument("binomial: bad parameters");
        KaDistribution d;
        d.kind = Kind::binomial;
        d.K = K;
        d.pa = pa;
        return d;
    }
    static KaDistribution explicit_pmf(std::vector<double> m) {
        if (m.empty()) throw std::invalid_argument("pmf: empty");
        double s = 0.0;
        for (double x : m) {
            if (!(x >= 0.0)) throw std::invalid_argument("pmf: negative mass");
            s += x;
        }
        if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("pmf: mass does not sum to 1");
        for (double& x : m) x /= s;
        KaDistribution d;
        d.kind = Kind::explicit_pmf;
        d.K = static_cast<int>(m.size()) - 1;
        d.mass = std::move(m);
        return d;
    }

    double log_pmf(int k) const {
        switch (kind) {
            case Kind::fixed: return k == k0 ? 0.0 : -kInf;
            case Kind::binomial:
                if (k < 0 || k > K) return -kInf;
                if (pa == 0.0) return k == 0 ? 0.0 : -kInf;
                if (pa == 1.0) return k == K ? 0.0 : -kInf;
                return log_binomial(K, k) + k * std::log(pa) + (K - k) * std::log1p(-pa);
            case Kind::explicit_pmf:
                if (k < 0 || k > K || mass[k] <= 0.0) return -kInf;
                return std::log(mass[k]);
        }
        return -kInf;
    }
    double pmf(int k) const { return std::exp(log_pmf(k)); }
    int lo() const { return kind == Kind::fixed ? k0 : 0; }
    int hi() const { return K; }
    double mean() const {
        double m = 0.0;
        for (int k = lo(); k <= hi(); ++k) m += k * pmf(k);
        return m;
    }
    std::string describe() const {
        switch (kind) {
            case Kind::fixed: return "fixed(" + std::to_string(k0) + ")";
            case Kind::binomial: {
                char buf[64];
                std::snprintf(buf, sizeof buf, "binomial(%d,%.17g)", K, pa);
                return buf;
            }
            case Kind::explicit_pmf: return "pmf(" + std::to_string(K + 1) + " points)";
        }
        return "";
    }
};

inline double ka_pmf(const KaDistribution& d, int k) { return d.pmf(k); }

// Smallest interval grown from the mode, adding the heavier neighbour first
// (both on ties), until the mass reaches 1 - tail_mass.
inline std::pair<int, int> truncation_interval(const KaDistribution& d, double tail_mass) {
    if (!(tail_mass > 0.0 && tail_mass < 1.0)) throw std::invalid_argument("tail_mass must be in (0,1)");
    if (d.kind == KaDistribution::Kind::fixed) return {d.k0, d.k0};
    const double mu = d.mean();
    int mode = d.lo();
    double best = -1.0;
    for (int k = d.lo(); k <= d.hi(); ++k) {
        const double p = d.pmf(k);
        if (p > best * (1.0 + 1e-12) || (std::abs(p - best) <= 1e-12 * best && std::abs(k - mu) < std::abs(mode - mu))) {
            best = p;
            mode = k;
        }
    }
    int a = mode, b = mode;
    double m = d.pmf(mode);
    while (m < 1.0 - tail_mass && (a > d.lo() || b < d.hi())) {
        const double pl = a > d.lo() ? d.pmf(a - 1) : -1.0;
        const double pr = b < d.hi() ? d.pmf(b + 1) : -1.0;
        if (pl >= pr) m += d.pmf(--a);
        if (pr >= pl) m += d.pmf(++b);
    }
    return {a, b};
}

inline double energy_per_bit_db(int n, double P, int J) {
    if (!(P > 0.0)) throw std::domain_error("energy_per_bit_db: P must be positive");
    return 10.0 * std::log10(n * P / J);
}

inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin_to_db(double x) { return 10.0 * std::log10(x); }

struct Scenario {
    int n = 100;
    int L = 1;
    int J = 100;
    int K = 1;
    double P = 1.0;               // linear power per symbol
    double p_prime_ratio = 1.0;   // P' / P
    Ensemble ensemble = Ensemble::spherical;
    KaDistribution ka = KaDistribution::fixed(1);
    int k_l = -1;                 // -1: derive from tail_mass
    int k_u = -1;
    int r_prime = 0;
    double tail_mass = -1.0;      // -1: min(eps_md, eps_fa) / 10

    double log_M() const { return J * kLn2; }
    double P_prime() const { return P * p_prime_ratio; }
    // explicit codebook size, only meaningful when it fits in memory
    long long M_small() const { return J < 62 ? (1LL << J) : -1; }

    void validate() const {
        if (n < 1 || L < 1 || J < 1 || K < 1) throw std::invalid_argument("scenario: n, L, J, K must be >= 1");
        if (!(P > 0.0)) throw std::invalid_argument("scenario: P must be positive");
        if (!(p_prime_ratio > 0.0 && p_prime_ratio <= 1.0)) throw std::invalid_argument("scenario: P'/P must be in (0,1]");
        if (ensemble == Ensemble::spherical && p_prime_ratio != 1.0)
            throw std::invalid_argument("scenario: spherical ensemble requires P' = P");
        if (ka.hi() > K) throw std::invalid_argument("scenario: Ka support exceeds K");
        if (k_l >= 0 || k_u >= 0) {
            if (!(0 <= k_l && k_l <= k_u && k_u <= K)) throw std::invalid_argument("scenario: need 0 <= k_l <= k_u <= K");
        }
        if (r_prime < 0) throw std::invalid_argument("scenario: r_prime must be >= 0");
    }
};

struct ErrorTargets {
    double eps_md = 0.01;
    double eps_fa = 0.01;
};

struct McConfig {
    int samples = 2000;
    std::uint64_t seed = 1;
    bool conservative = false;
};

// Value of a bound plus whatever the optimizer wants to leave behind for inspection.
struct BoundReport {
    double value = 1.0;
    double se = 0.0;
    int samples = 0;
    std::uint64_t seed = 0;
    bool feasible = true;
    std::vector<std::pair<std::string, double>> trace;

    void note(const std::string& key, double v) { trace.emplace_back(key, v); }
    double get(const std::string& key, double fallback = std::nan("")) const {
        for (auto it = trace.rbegin(); it != trace.rend(); ++it)
            if (it->first == key) return it->second;
        return fallback;
    }
};

// [K_l, K_u], explicit if given, else the truncation interval at the default tail mass
inline std::pair<int, int> decoding_interval(const Scenario& s, const ErrorTargets& tg) {
    if (s.k_l >= 0 && s.k_u >= 0) return {s.k_l, s.k_u};
    const double tm = s.tail_mass > 0.0 ? s.tail_mass : std::min(tg.eps_md, tg.eps_fa) / 10.0;
    return truncation_interval(s.ka, tm);
}

}  // namespace uraflb
