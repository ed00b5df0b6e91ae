#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include "codebook_sampler.hpp"
#include "lowrank_linalg.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "parallel.hpp"

namespace uraflb {

struct TrialOutcome {
    int true_ka = 0;
    int est_ka = 0;
    std::vector<int> decoded;
    int md_count = 0;
    int fa_count = 0;
};

// Y = sum_k x_{W_k} h_k^T + Z; `tx` holds one codeword column per active user,
// so users that picked the same message still see independent fades.
inline CMat simulate_received(const CMat& tx, int L, const RngCoords& c) {
    const int n = static_cast<int>(tx.rows());
    const int k = static_cast<int>(tx.cols());
    CMat h(k, L), z(n, L);
    for (int j = 0; j < L; ++j) {
        auto eh = make_engine({c.seed, streams::channel, c.sample}, static_cast<std::uint64_t>(j));
        if (k > 0) fill_cn(eh, h.col(j).data(), k);
        auto ez = make_engine({c.seed, streams::noise, c.sample}, static_cast<std::uint64_t>(j));
        fill_cn(ez, z.col(j).data(), n);
    }
    if (k == 0) return z;
    return tx * h + z;
}

// argmin over [0:K] of |‖Y‖² - nL(1 + k P')|, ties toward the smaller k
inline int estimate_ka(const CMat& Y, int K, double Pp) {
    const double nL = static_cast<double>(Y.rows()) * Y.cols();
    const double e = Y.squaredNorm();
    const double raw = (e / nL - 1.0) / Pp;
    int best = 0;
    double bv = kInf;
    const int c0 = static_cast<int>(std::clamp(std::floor(raw), 0.0, static_cast<double>(K)));
    for (int k = std::max(c0 - 1, 0); k <= std::min(c0 + 2, K); ++k) {
        const double v = std::abs(e - nL * (1.0 + k * Pp));
        // a larger count has to win by more than rounding noise
        if (v < bv - 1e-12 * nL * (1.0 + k * Pp)) {
            bv = v;
            best = k;
        }
    }
    return best;
}

struct KaErrorFrequencies {
    int trials = 0;
    std::map<int, double> freq;  // estimated count -> relative frequency
    double se(int k) const {
        auto it = freq.find(k);
        const double p = it == freq.end() ? 0.0 : it->second;
        return std::sqrt(std::max(p * (1.0 - p), 0.0) / trials);
    }
};

inline KaErrorFrequencies empirical_ka_error(const Scenario& s, int Ka, int trials, std::uint64_t seed) {
    const double Pp = s.P_prime();
    std::vector<int> est(trials);
    parallel_for(trials, [&](int i) {
        const RngCoords c{seed, 0, static_cast<std::uint64_t>(i)};
        const std::vector<int> mult = sample_multiplicities(Ka, s.J, {seed, streams::multiplicity, c.sample});
        const CMat cw = sample_columns(s.ensemble, Pp, s.n, static_cast<int>(mult.size()), {seed, streams::codebook, c.sample});
        CMat tx(s.n, Ka);
        int col = 0;
        for (std::size_t m = 0; m < mult.size(); ++m)
            for (int r = 0; r < mult[m]; ++r) tx.col(col++) = cw.col(m);
        est[i] = estimate_ka(simulate_received(tx, s.L, c), s.K, Pp);
    });
    KaErrorFrequencies out;
    out.trials = trials;
    for (int e : est) out.freq[e] += 1.0;
    for (auto& [k, v] : out.freq) v /= trials;
    return out;
}

// MAP list decoder over all subsets of the explicit codebook with size in [lo, hi].
// Subsets are visited by size, then lexicographically; the first minimizer wins.
inline std::vector<int> map_decode_bruteforce(const CMat& Y, const CMat& codebook, const KaDistribution& d, int lo,
                                              int hi) {
    const int M = static_cast<int>(codebook.cols());
    if (M > 65536) throw std::invalid_argument("map_decode_bruteforce: codebook larger than 2^16");
    lo = std::max(lo, 0);
    hi = std::min(hi, M);
    double count = 0.0;
    for (int k = lo; k <= hi; ++k) count += std::exp(log_binomial(M, k));
    if (count > 1e7) throw std::invalid_argument("map_decode_bruteforce: more than 1e7 candidate subsets");
    const int L = static_cast<int>(Y.cols());
    const CMat G = codebook.adjoint() * codebook;
    const CMat Z = codebook.adjoint() * Y;
    const double yy = Y.squaredNorm();
    std::vector<int> best;
    double bv = kInf;
    for (int k = lo; k <= hi; ++k) {
        const double prior = d.log_pmf(k);
        if (prior == -kInf) continue;
        const double base = yy - (prior - log_binomial(M, k));
        std::vector<int> idx(k);
        for (int i = 0; i < k; ++i) idx[i] = i;
        CMat core(k, k), z(k, L);
        for (;;) {
            double metric = base;
            if (k > 0) {
                for (int a = 0; a < k; ++a) {
                    for (int b = 0; b < k; ++b) core(a, b) = G(idx[a], idx[b]);
                    z.row(a) = Z.row(idx[a]);
                }
                core.diagonal().array() += 1.0;
                Eigen::LLT<CMat> llt(core);
                const double ld = 2.0 * llt.matrixLLT().diagonal().real().array().log().sum();
                metric += L * ld - (z.adjoint() * llt.solve(z)).trace().real();
            }
            if (metric < bv) {
                bv = metric;
                best = idx;
            }
            int i = k - 1;
            while (i >= 0 && idx[i] == M - k + i) --i;
            if (i < 0) break;
            ++idx[i];
            for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    return best;
}

struct MdFa {
    double md = 0.0, fa = 0.0;
    double md_se = 0.0, fa_se = 0.0;
    int trials = 0;
};

// One end-to-end transmission with an explicit codebook: activity, messages, channel,
// energy-based count estimate, MAP list decoding on [K'_{a,l}, K'_{a,u}].
inline TrialOutcome simulate_trial(const Scenario& s, int Kl, int Ku, std::uint64_t seed, int trial) {
    const long long M = s.M_small();
    if (M < 1 || M > 65536) throw std::invalid_argument("simulate_trial: explicit codebook needs 2^J <= 2^16");
    const double Pp = s.P_prime();
    const RngCoords c{seed, 0, static_cast<std::uint64_t>(trial)};
    auto eng = make_engine({seed, streams::activity, c.sample}, 0);
    int Ka = 0;
    {
        std::uniform_real_distribution<double> ud(0.0, 1.0);
        double u = ud(eng), acc = 0.0;
        Ka = s.ka.hi();
        for (int k = s.ka.lo(); k <= s.ka.hi(); ++k) {
            acc += s.ka.pmf(k);
            if (u < acc) {
                Ka = k;
                break;
            }
        }
    }
    auto em = make_engine({seed, streams::messages, c.sample}, 0);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(M) - 1);
    std::vector<int> msg(Ka);
    for (int& m : msg) m = pick(em);
    const CMat cb = sample_columns(s.ensemble, Pp, s.n, static_cast<int>(M), {seed, streams::codebook, c.sample});
    CMat tx(s.n, Ka);
    for (int k = 0; k < Ka; ++k) tx.col(k) = cb.col(msg[k]);
    const CMat Y = simulate_received(tx, s.L, c);

    TrialOutcome out;
    out.true_ka = Ka;
    out.est_ka = estimate_ka(Y, s.K, Pp);
    const int kp = std::clamp(out.est_ka, Kl, Ku);
    const int lo = std::max(Kl, kp - s.r_prime);
    const int hi = std::min(Ku, kp + s.r_prime);
    out.decoded = map_decode_bruteforce(Y, cb, s.ka, lo, hi);
    for (int m : msg)
        if (std::find(out.decoded.begin(), out.decoded.end(), m) == out.decoded.end()) ++out.md_count;
    for (int d : out.decoded)
        if (std::find(msg.begin(), msg.end(), d) == msg.end()) ++out.fa_count;
    return out;
}

inline MdFa empirical_md_fa(const Scenario& s, const ErrorTargets& tg, int trials, std::uint64_t seed) {
    s.validate();
    const auto iv = decoding_interval(s, tg);
    std::vector<double> md(trials), fa(trials);
    parallel_for(trials, [&](int i) {
        const TrialOutcome t = simulate_trial(s, iv.first, iv.second, seed, i);
        md[i] = t.true_ka >= 1 ? static_cast<double>(t.md_count) / t.true_ka : 0.0;
        fa[i] = t.decoded.empty() ? 0.0 : static_cast<double>(t.fa_count) / t.decoded.size();
    });
    auto stats = [&](const std::vector<double>& v, double& mean, double& se) {
        double acc = 0.0;
        for (double x : v) acc += x;
        mean = acc / trials;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        se = trials > 1 ? std::sqrt(ss / (trials - 1) / trials) : 0.0;
    };
    MdFa out;
    out.trials = trials;
    stats(md, out.md, out.md_se);
    stats(fa, out.fa, out.fa_se);
    return out;
}

}  // namespace uraflb
