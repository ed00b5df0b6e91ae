#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "codebook_sampler.hpp"
#include "lowrank_linalg.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "parallel.hpp"

namespace uraflb {

struct KaErrorQuery {
    int Ka = 0;
    int Ka_prime = 0;
    int cand_lo = 0;
    int cand_hi = -1;  // -1 means K
    bool collision_free = false;
};

// Probability that a Gaussian codeword of power P' violates the power limit P, times Ka.
inline double p0_ka(const Scenario& s, int Ka, double Pp) {
    if (s.ensemble == Ensemble::spherical) {
        if (Pp < s.P * (1.0 - 1e-12)) throw std::invalid_argument("spherical ensemble requires P' = P");
        return 0.0;
    }
    if (Ka <= 0) return 0.0;
    return std::min(1.0, Ka * reg_gamma_upper(s.n, s.n * s.P / Pp));
}

// Unit-power spectra of C Lambda C^H, one vector per Monte-Carlo sample.
struct KaSpectra {
    int n = 0;
    int Ka = 0;
    std::vector<RVec> mu;
};

inline RVec unit_spectrum(Ensemble e, int n, int Ka, int J, bool collision_free, std::uint64_t seed, int sample) {
    if (Ka <= 0) return RVec();
    std::vector<int> mult;
    if (collision_free) mult.assign(Ka, 1);
    else mult = sample_multiplicities(Ka, J, {seed, streams::multiplicity, static_cast<std::uint64_t>(sample)});
    const int d = static_cast<int>(mult.size());
    const CMat c = sample_columns(e, 1.0, n, d, {seed, streams::codebook, static_cast<std::uint64_t>(sample)});
    RVec sw(d);
    for (int i = 0; i < d; ++i) sw[i] = std::sqrt(static_cast<double>(mult[i]));
    CMat g(d, d);
    g.setZero();
    g.selfadjointView<Eigen::Lower>().rankUpdate(c.adjoint());
    g = g.selfadjointView<Eigen::Lower>();
    const RVec ev = herm_eigenvalues(sw.asDiagonal() * g * sw.asDiagonal());
    const int r = std::min(n, d);
    RVec out(r);
    for (int i = 0; i < r; ++i) out[i] = std::max(0.0, ev[d - 1 - i]);
    return out;
}

inline KaSpectra ka_spectra(Ensemble e, int n, int Ka, int J, bool collision_free, std::uint64_t seed, int samples) {
    KaSpectra ks;
    ks.n = n;
    ks.Ka = Ka;
    ks.mu.resize(samples);
    parallel_for(samples, [&](int i) { ks.mu[i] = unit_spectrum(e, n, Ka, J, collision_free, seed, i); });
    return ks;
}

// min over rho of  sign*rho*T - L*[ones*ln(1+sign*rho) + sum ln(1+sign*rho*a_i)],
// rho >= 0 and, for sign = -1, rho below the first pole.
inline double chernoff_rho_min(double T, double L, double ones, const RVec& a, int sign) {
    if (sign > 0) return line_min_logdet(T, L, ones, 1.0, a.data(), static_cast<int>(a.size()));
    RVec neg = -a;
    return line_min_logdet(-T, L, ones, -1.0, neg.data(), static_cast<int>(neg.size()));
}

// Per-sample log of the Chernoff term for a given threshold Kt' and branch.
inline double ka_branch_exponent(const RVec& mu, int n, int L, double Pp, double kt, int sign, bool asym) {
    if (asym) return chernoff_rho_min(n * L * kt, L, 0.0, mu, sign);
    RVec a = (1.0 + Pp * mu.array()).matrix();
    const double ones = n - static_cast<double>(mu.size());
    return chernoff_rho_min(n * L * (1.0 + kt * Pp), L, ones, a, sign);
}

struct MeanSe {
    double mean = 1.0;
    double se = 0.0;
};

inline MeanSe clamped_mean(const std::vector<double>& logs) {
    std::vector<double> v(logs.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::min(logs[i], 0.0);
    MeanSe out;
    out.mean = std::exp(log_mean_exp(v));
    double ss = 0.0;
    for (double x : v) {
        const double d = std::exp(x) - out.mean;
        ss += d * d;
    }
    const double N = static_cast<double>(v.size());
    out.se = N > 1 ? std::sqrt(ss / (N - 1) / N) : 0.0;
    return out;
}

struct KaErrorEval {
    double value = 1.0;
    double se = 0.0;
    int k_tilde = -1;
};

// p_new for one P'. The branch bounds are monotone in Kt, so only the nearest
// admissible candidate on each side of Ka' can attain the minimum.
inline KaErrorEval ka_error_from_spectra(const KaSpectra& ks, int L, double Pp, int Ka_prime, int cand_lo,
                                         int cand_hi, bool asym = false) {
    KaErrorEval best;
    const int up = std::max(Ka_prime + 1, cand_lo);
    const int dn = std::min(Ka_prime - 1, cand_hi);
    const int N = static_cast<int>(ks.mu.size());
    auto eval = [&](int kt, int sign) {
        const double ktp = 0.5 * (Ka_prime + kt);
        std::vector<double> logs(N);
        for (int i = 0; i < N; ++i) logs[i] = ka_branch_exponent(ks.mu[i], ks.n, L, Pp, ktp, sign, asym);
        const MeanSe m = clamped_mean(logs);
        if (m.mean < best.value || best.k_tilde < 0) {
            best.value = m.mean;
            best.se = m.se;
            best.k_tilde = kt;
        }
    };
    if (up <= cand_hi) eval(up, +1);
    if (dn >= cand_lo) eval(dn, -1);
    best.value = std::clamp(best.value, 0.0, 1.0);
    return best;
}

inline std::vector<double> p_prime_grid(const Scenario& s) {
    if (s.ensemble == Ensemble::spherical) return {s.P};
    std::vector<double> g;
    const double lo = std::log(0.1), hi = std::log(0.99);
    for (int i = 0; i < 8; ++i) g.push_back(s.P * std::exp(lo + (hi - lo) * i / 7.0));
    return g;
}

// Estimation-error bound for several Ka' at once, sharing one set of spectra.
inline std::vector<BoundReport> ka_error_bounds(const Scenario& s, int Ka, const std::vector<int>& primes, int cand_lo,
                                                int cand_hi, bool collision_free, const McConfig& mc) {
    const int chi = cand_hi < 0 ? s.K : cand_hi;
    const KaSpectra ks = ka_spectra(s.ensemble, s.n, Ka, s.J, collision_free, mc.seed, mc.samples);
    for (int kp : primes)
        if (kp == Ka) throw std::invalid_argument("ka_error_bound: Ka' must differ from Ka");
    std::vector<BoundReport> out(primes.size());
    parallel_for(static_cast<int>(primes.size()), [&](int j) {
        const int kp = primes[j];
        BoundReport rep;
        rep.samples = mc.samples;
        rep.seed = mc.seed;
        rep.value = kInf;
        for (double Pp : p_prime_grid(s)) {
            const KaErrorEval e = ka_error_from_spectra(ks, s.L, Pp, kp, cand_lo, chi);
            const double tot = std::min(1.0, e.value + p0_ka(s, Ka, Pp));
            if (tot < rep.value) {
                rep.value = tot;
                rep.se = e.se;
                rep.trace.clear();
                rep.note("p_prime", Pp);
                rep.note("k_tilde", e.k_tilde);
            }
        }
        if (mc.conservative) rep.value = std::min(1.0, rep.value + 2.0 * rep.se);
        out[j] = std::move(rep);
    });
    return out;
}

inline BoundReport ka_error_bound(const Scenario& s, const KaErrorQuery& q, const McConfig& mc) {
    return ka_error_bounds(s, q.Ka, {q.Ka_prime}, q.cand_lo, q.cand_hi, q.collision_free, mc).front();
}

// Large-P limit: unit-power codebook, no power-violation term.
inline std::vector<BoundReport> ka_error_bounds_asym_p(const Scenario& s, int Ka, const std::vector<int>& primes,
                                                       int cand_lo, int cand_hi, bool collision_free,
                                                       const McConfig& mc) {
    const int chi = cand_hi < 0 ? s.K : cand_hi;
    const KaSpectra ks = ka_spectra(s.ensemble, s.n, Ka, s.J, collision_free, mc.seed, mc.samples);
    for (int kp : primes)
        if (kp == Ka) throw std::invalid_argument("ka_error_bound_asym_p: Ka' must differ from Ka");
    std::vector<BoundReport> out(primes.size());
    parallel_for(static_cast<int>(primes.size()), [&](int j) {
        const int kp = primes[j];
        const KaErrorEval e = ka_error_from_spectra(ks, s.L, 1.0, kp, cand_lo, chi, true);
        BoundReport rep;
        rep.samples = mc.samples;
        rep.seed = mc.seed;
        rep.value = e.value;
        rep.se = e.se;
        rep.note("k_tilde", e.k_tilde);
        if (mc.conservative) rep.value = std::min(1.0, rep.value + 2.0 * rep.se);
        out[j] = std::move(rep);
    });
    return out;
}

inline BoundReport ka_error_bound_asym_p(const Scenario& s, const KaErrorQuery& q, const McConfig& mc) {
    return ka_error_bounds_asym_p(s, q.Ka, {q.Ka_prime}, q.cand_lo, q.cand_hi, q.collision_free, mc).front();
}

// Large-n limit, closed form.
inline double ka_error_bound_asym_n(int Ka, int Ka_prime, int cand_lo, int cand_hi, int L, int J) {
    if (Ka < 1) throw std::invalid_argument("ka_error_bound_asym_n: Ka must be >= 1");
    const double coll = std::exp(log_binomial(Ka, 2) - J * kLn2);
    double best = 1.0;
    for (int kt = cand_lo; kt <= cand_hi; ++kt) {
        if (kt == Ka_prime) continue;
        const double ktp = 0.5 * (Ka_prime + kt);
        const double x = ktp / Ka;
        bool active = Ka_prime < kt ? ktp < Ka : ktp > Ka;
        double v = 1.0;
        if (active && x > 0.0) v = std::exp(Ka * L * (1.0 - x + std::log(x)));
        else if (active && x == 0.0) v = 0.0;
        best = std::min(best, v);
    }
    return std::min(1.0, coll + best);
}

}  // namespace uraflb
