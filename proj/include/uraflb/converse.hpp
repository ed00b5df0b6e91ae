#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "codebook_sampler.hpp"
#include "lowrank_linalg.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "parallel.hpp"

namespace uraflb {

struct ConverseOptions {
    double eb_floor_db = -30.0;
    double eb_ceiling_db = 40.0;
    double eb_start_db = 0.0;
    double tol_db = 0.05;
    int c_max = 8;  // decoded list sizes Ka .. Ka + c_max
};

// Smallest E_b in [floor, ceiling] at which `feasible` holds, assuming feasibility is
// monotone in power. Steps of 3 dB bracket the threshold, bisection refines it.
inline BoundReport bisect_min_eb(const Scenario& s, const std::function<bool(double)>& feasible,
                                 const ConverseOptions& opt) {
    auto P_of = [&](double eb) { return db_to_lin(eb) * s.J / s.n; };
    auto ok = [&](double eb) { return feasible(P_of(eb)); };
    BoundReport rep;
    const double step = 10.0 * std::log10(2.0);
    double lo, hi;
    if (ok(opt.eb_start_db)) {
        hi = opt.eb_start_db;
        for (;;) {
            if (hi <= opt.eb_floor_db) {
                rep.value = opt.eb_floor_db;
                rep.note("floor", 1);
                rep.note("p_star", P_of(opt.eb_floor_db));
                return rep;
            }
            const double cand = std::max(hi - step, opt.eb_floor_db);
            if (ok(cand)) {
                hi = cand;
            } else {
                lo = cand;
                break;
            }
        }
    } else {
        lo = opt.eb_start_db;
        for (;;) {
            if (lo >= opt.eb_ceiling_db) {
                rep.feasible = false;
                rep.value = kInf;
                return rep;
            }
            const double cand = std::min(lo + step, opt.eb_ceiling_db);
            if (ok(cand)) {
                hi = cand;
                break;
            }
            lo = cand;
        }
    }
    while (hi - lo > opt.tol_db) {
        const double mid = 0.5 * (lo + hi);
        if (ok(mid)) hi = mid;
        else lo = mid;
    }
    rep.value = hi;
    rep.note("p_star", P_of(hi));
    return rep;
}

// Lagrange multipliers for the false-alarm budget. The dual value never exceeds the
// best allocation, so declaring feasibility whenever the dual meets the budget can
// only lower the resulting bound.
inline std::vector<double> lagrange_grid() {
    std::vector<double> g{0.0};
    for (int i = 0; i <= 60; ++i) g.push_back(std::pow(10.0, -6.0 + 12.0 * i / 60.0));
    return g;
}

struct ListChoice {
    double weight = 0.0;           // P(Ka)
    std::vector<double> cost;      // per list size
    std::vector<double> fa;        // max{(Khat - Ka)/Khat, 0}
};

inline double dual_value(const std::vector<ListChoice>& rows, double fa_budget) {
    double best = -kInf;
    for (double lam : lagrange_grid()) {
        double acc = -lam * fa_budget;
        for (const ListChoice& r : rows) {
            double m = kInf;
            for (std::size_t c = 0; c < r.cost.size(); ++c) m = std::min(m, r.cost[c] + lam * r.fa[c]);
            acc += r.weight * m;
        }
        best = std::max(best, acc);
    }
    return best;
}

// Smallest per-Ka misdetection probability compatible with list size kh at power P.
inline double min_eps_single_user(int kh, int L, int n, int J, double P) {
    const double ln_beta = std::log(static_cast<double>(kh)) - J * kLn2;
    if (ln_beta >= 0.0) return 0.0;
    const double r = chi2_isf(2 * L, std::exp(ln_beta)) / (1.0 + (n + 1.0) * P);
    return chi2_cdf(2 * L, r);
}

inline bool single_user_feasible(const Scenario& s, const ErrorTargets& tg, double P, int c_max) {
    std::vector<ListChoice> rows;
    const KaDistribution& d = s.ka;
    for (int Ka = std::max(d.lo(), 1); Ka <= d.hi(); ++Ka) {
        const double w = d.pmf(Ka);
        if (w == 0.0) continue;
        ListChoice r;
        r.weight = w;
        for (int c = 0; c <= c_max && Ka + c <= s.K; ++c) {
            const int kh = Ka + c;
            r.cost.push_back(min_eps_single_user(kh, s.L, s.n, s.J, P));
            r.fa.push_back(static_cast<double>(c) / kh);
        }
        if (!r.cost.empty()) rows.push_back(std::move(r));
    }
    return dual_value(rows, tg.eps_fa) <= tg.eps_md;
}

inline BoundReport single_user_converse(const Scenario& s, const ErrorTargets& tg, const ConverseOptions& opt = {}) {
    s.validate();
    BoundReport rep = bisect_min_eb(s, [&](double P) { return single_user_feasible(s, tg, P, opt.c_max); }, opt);
    rep.note("theorem", 3);
    return rep;
}

inline bool binom_single_user_feasible(const Scenario& s, const ErrorTargets& tg, double P) {
    const double pa = s.ka.pa;
    const double md = std::min(1.0, tg.eps_md / pa);
    if (md >= 1.0) return true;
    const double r = chi2_quantile(2 * s.L, md);
    const double sf = chi2_sf(2 * s.L, (1.0 + (s.n + 1.0) * P) * r);
    if (sf <= 0.0) return true;
    const double num = pa < 1.0 ? std::min(1.0, tg.eps_fa / (1.0 - pa)) : 1.0;
    return s.J * kLn2 - std::log(static_cast<double>(s.K)) <= std::log(num) - std::log(sf);
}

inline BoundReport single_user_converse_binom(const Scenario& s, const ErrorTargets& tg,
                                              const ConverseOptions& opt = {}) {
    s.validate();
    if (s.ka.kind != KaDistribution::Kind::binomial)
        throw std::invalid_argument("single_user_converse_binom requires a binomial activity distribution");
    BoundReport rep = bisect_min_eb(s, [&](double P) { return binom_single_user_feasible(s, tg, P); }, opt);
    rep.note("theorem", 4);
    return rep;
}

// E[log2|I + X X^H|] for X with Ka i.i.d. CN(0, P) columns, from cached unit-power spectra.
class FanoExpectation {
public:
    FanoExpectation(int n, std::uint64_t seed, int samples) : n_(n), seed_(seed), samples_(samples) {}

    double operator()(int Ka, double P) {
        if (Ka <= 0) return 0.0;
        const std::vector<RVec>& sp = spectra(Ka);
        double acc = 0.0;
        for (const RVec& mu : sp)
            for (int i = 0; i < mu.size(); ++i) acc += std::log1p(P * mu[i]);
        const double e = acc / samples_ / kLn2;
        if (e > n_ * std::log2(1.0 + Ka * P) * (1.0 + 1e-9)) ++jensen_violations_;
        return e;
    }

    int jensen_violations() const { return jensen_violations_; }

private:
    int n_;
    std::uint64_t seed_;
    int samples_;
    int jensen_violations_ = 0;
    std::map<int, std::vector<RVec>> cache_;

    const std::vector<RVec>& spectra(int Ka) {
        auto it = cache_.find(Ka);
        if (it != cache_.end()) return it->second;
        std::vector<RVec> out(samples_);
        parallel_for(samples_, [&](int i) {
            const CMat c = sample_columns(Ensemble::gaussian, 1.0, n_, Ka, {seed_, streams::fano, static_cast<std::uint64_t>(i)});
            RVec ev = herm_eigenvalues(c.adjoint() * c);
            out[i] = ev.cwiseMax(0.0);
        });
        return cache_.emplace(Ka, std::move(out)).first->second;
    }
};

// The constraint over all subsets S is tightest for S = {Ka : per-Ka slack < 0}, which is
// what the positive part below evaluates.
inline bool fano_feasible(const Scenario& s, const ErrorTargets& tg, double P, FanoExpectation& fe, int c_max) {
    const KaDistribution& d = s.ka;
    std::vector<ListChoice> rows;
    for (int Ka = std::max(d.lo(), 1); Ka <= d.hi(); ++Ka) {
        const double w = d.pmf(Ka);
        if (w < 1e-15) continue;
        const double coll = std::exp(log_binomial(Ka, 2) - s.J * kLn2);
        const double rate = (s.n * s.L * std::log2(1.0 + Ka * P) - s.L * (1.0 - coll) * fe(Ka, P)) / Ka;
        ListChoice r;
        r.weight = w;
        for (int c = 0; c <= c_max && Ka + c <= s.K; ++c) {
            const int kh = Ka + c;
            r.cost.push_back(std::max(s.J - std::log2(static_cast<double>(kh)) - rate, 0.0));
            r.fa.push_back(static_cast<double>(c) / kh);
        }
        if (!r.cost.empty()) rows.push_back(std::move(r));
    }
    return dual_value(rows, tg.eps_fa) <= tg.eps_md * s.J + binary_entropy(tg.eps_md);
}

inline BoundReport fano_converse(const Scenario& s, const ErrorTargets& tg, const McConfig& mc,
                                 const ConverseOptions& opt = {}) {
    s.validate();
    FanoExpectation fe(s.n, mc.seed, mc.samples);
    BoundReport rep = bisect_min_eb(s, [&](double P) { return fano_feasible(s, tg, P, fe, opt.c_max); }, opt);
    rep.samples = mc.samples;
    rep.seed = mc.seed;
    rep.note("theorem", 5);
    rep.note("jensen_violations", fe.jensen_violations());
    return rep;
}

struct ConverseEnvelope {
    BoundReport envelope;
    std::vector<std::pair<int, BoundReport>> parts;  // theorem number, report
};

inline ConverseEnvelope converse_envelope(const Scenario& s, const ErrorTargets& tg, const McConfig& mc,
                                          const ConverseOptions& opt = {}) {
    ConverseEnvelope out;
    out.parts.emplace_back(3, single_user_converse(s, tg, opt));
    if (s.ka.kind == KaDistribution::Kind::binomial) out.parts.emplace_back(4, single_user_converse_binom(s, tg, opt));
    out.parts.emplace_back(5, fano_converse(s, tg, mc, opt));
    int arg = -1;
    for (const auto& [th, r] : out.parts) {
        if (arg < 0 || r.value > out.envelope.value) {
            out.envelope = r;
            arg = th;
        }
    }
    out.envelope.trace.clear();
    out.envelope.note("theorem", arg);
    out.envelope.note("p_star", db_to_lin(out.envelope.value) * s.J / s.n);
    for (const auto& [th, r] : out.parts) out.envelope.note("theorem_" + std::to_string(th), r.value);
    return out;
}

}  // namespace uraflb
