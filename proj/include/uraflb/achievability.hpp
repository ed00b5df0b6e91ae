#pragma once

#include <algorithm>
#include <array>
#include <climits>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "codebook_sampler.hpp"
#include "ka_bounds.hpp"
#include "lowrank_linalg.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "parallel.hpp"

namespace uraflb {

struct AchievabilityOptions {
    std::vector<double> omega{0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.85, 1.0};
    std::vector<double> nu;  // empty: 12 log-spaced points on [1e-4, 10]
    int rays = 16;           // directions in the (u, r) quadrant
    int pilot = 16;          // samples used to pick the (omega, nu) point
    int finalists = 2;       // grid points re-evaluated on every sample
    int delta_budget = 12;
    int delta_refine = 8;
    int pilot_delta_budget = 6;  // the pilot only ranks grid points
    int pilot_delta_refine = 4;
    double skip_fraction = 1e-3;  // blocks whose cap is below this times the target just take the cap
    double tail_fraction = 1e-3;  // geometric tail cut-off for the t and t' sums
    // cells whose weighted pilot estimate (inflated by pilot_inflation) stays below this
    // fraction of the target keep the inflated pilot value instead of a full-sample pass
    double negligible_fraction = 1e-6;
    double pilot_inflation = 10.0;
    std::vector<int> r_prime_set;  // empty: the scenario's r'
    double eb_floor_db = -20.0;
    double eb_ceiling_db = 40.0;
    double eb_start_db = 0.0;
    double tol_db = 0.05;
    bool post_check = true;

    std::vector<double> nu_grid() const {
        if (!nu.empty()) return nu;
        std::vector<double> g;
        for (int i = 0; i < 12; ++i) g.push_back(std::pow(10.0, -4.0 + 5.0 * i / 11.0));
        return g;
    }
};

inline long long codebook_size_capped(int J) { return J < 62 ? (1LL << J) : LLONG_MAX / 4; }

// Index lattice for one (Ka, Ka') pair.
struct IndexSets {
    int Ka = 0, Ka_prime = 0;
    int kl = 0, ku = 0;  // K'_{a,l}, K'_{a,u}
    int x = 0;           // forced misdetections (Ka - K'_{a,u})^+
    int y = 0;           // forced false alarms (K'_{a,l} - Ka)^+
    int t_max = -1;      // T = [0 : t_max], empty when negative
    long long M = 0;

    int tp_lo(int t) const { return std::max(0, x - std::max(Ka - kl, 0) + t); }
    int tp_hi(int t) const {
        const long long a = std::max(ku - Ka, 0) - y + t;
        const long long b = M - std::max(Ka, kl);
        return static_cast<int>(std::min(a, b));
    }
    int ka_hat(int t, int tp) const { return Ka - t - x + tp + y; }
};

inline IndexSets index_sets(int Ka, int Ka_prime, int Kl, int Ku, int r_prime, int J) {
    IndexSets is;
    is.Ka = Ka;
    is.Ka_prime = Ka_prime;
    is.kl = std::max(Kl, Ka_prime - r_prime);
    is.ku = std::min(Ku, Ka_prime + r_prime);
    is.x = std::max(Ka - is.ku, 0);
    is.y = std::max(is.kl - Ka, 0);
    is.M = codebook_size_capped(J);
    const long long cap = is.M - is.kl - is.x;
    is.t_max = static_cast<int>(std::min<long long>({Ka, is.ku, cap}));
    return is;
}

inline double f_b(int k, const KaDistribution& d, int J) {
    if (k < 0) return -kInf;
    const double lp = d.log_pmf(k);
    if (lp == -kInf) return -kInf;
    return lp - log_binomial_pow2(J, k);
}

// Unit-power Gram matrices of the first `cols` codebook columns, one per sample.
// Every power level reuses them, which gives common random numbers across P.
struct GramBank {
    int n = 0;
    int cols = 0;
    std::vector<CMat> g;

    static GramBank build(Ensemble e, int n, int cols, std::uint64_t seed, int samples) {
        GramBank b;
        b.n = n;
        b.cols = cols;
        b.g.resize(samples);
        parallel_for(samples, [&](int i) {
            const CMat c = sample_columns(e, 1.0, n, cols, {seed, streams::codebook, static_cast<std::uint64_t>(i)});
            CMat m(cols, cols);
            m.setZero();
            m.selfadjointView<Eigen::Lower>().rankUpdate(c.adjoint());
            b.g[i] = m.selfadjointView<Eigen::Lower>();
        });
        return b;
    }
    int samples() const { return static_cast<int>(g.size()); }
};

inline double logdet_block(const CMat& g, int a, int b) {
    if (b <= a) return 0.0;
    CMat m = g.block(a, a, b - a, b - a);
    m.diagonal().array() += 1.0;
    Eigen::LLT<CMat> llt(m);
    return 2.0 * llt.matrixLLT().diagonal().real().array().log().sum();
}

struct EpsEval {
    double md = 1.0, fa = 1.0;
    double md_se = 0.0, fa_se = 0.0;
    double p0 = 0.0;
    bool md_done = false, fa_done = false;  // false when evaluation stopped early
    int cells = 0;
};

struct CellValue {
    double value = 1.0;
    double se = 0.0;
};

// MD/FA bound evaluator for one scenario. Holds the Monte-Carlo draws so that
// repeated evaluations at different powers share them.
class AchievabilityEvaluator {
public:
    AchievabilityEvaluator(const Scenario& s, const ErrorTargets& tg, const McConfig& mc,
                           const AchievabilityOptions& opt = {})
        : s_(s), tg_(tg), mc_(mc), opt_(opt) {
        s_.validate();
        auto iv = decoding_interval(s_, tg_);
        kl_ = iv.first;
        ku_ = iv.second;
        nu_ = opt_.nu_grid();
        std::sort(nu_.begin(), nu_.end());
        const long long M = codebook_size_capped(s_.J);
        const int cols = static_cast<int>(std::min<long long>(std::max(2 * ku_, 1), M));
        bank_ = GramBank::build(s_.ensemble, s_.n, cols, mc_.seed, mc_.samples);
        build_rays();
    }

    int k_l() const { return kl_; }
    int k_u() const { return ku_; }
    const Scenario& scenario() const { return s_; }

    double p0(double P, double Pp) const {
        Scenario sp = s_;
        sp.P = P;
        const KaDistribution& d = s_.ka;
        double acc = 0.0;
        for (int k = d.lo(); k <= d.hi(); ++k) {
            const double w = d.pmf(k);
            if (w == 0.0) continue;
            const double coll = k >= 2 ? std::exp(log_binomial(k, 2) - s_.J * kLn2) : 0.0;
            acc += w * (coll + p0_ka(sp, k, Pp));
            if (k < kl_ || k > ku_) acc += w;
        }
        return acc;
    }

    // eps_MD and eps_FA for one (P, P', r'). With early_stop the sums stop as soon as a
    // target is exceeded; md_done / fa_done report which sums are complete.
    EpsEval eval(double P, double Pp, int r_prime, bool need_md = true, bool need_fa = true, bool early_stop = false) {
        if (s_.ensemble == Ensemble::spherical && std::abs(Pp - P) > 1e-12 * P)
            throw std::invalid_argument("spherical ensemble requires P' = P");
        set_power(Pp);
        EpsEval out;
        out.p0 = p0(P, Pp);
        out.md = out.fa = out.p0;
        double md_var = 0.0, fa_var = 0.0;
        bool do_md = need_md, do_fa = need_fa;
        auto check = [&] {
            if (!early_stop) return;
            // the reported value is clamped at 1, so a target of 1 can never be exceeded
            if (do_md && out.md > tg_.eps_md && tg_.eps_md < 1.0) do_md = false;
            if (do_fa && out.fa > tg_.eps_fa && tg_.eps_fa < 1.0) do_fa = false;
        };
        check();
        std::vector<int> order;
        for (int k = std::max(kl_, 0); k <= ku_; ++k)
            if (s_.ka.pmf(k) > 0.0) order.push_back(k);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s_.ka.pmf(a) > s_.ka.pmf(b); });
        for (int Ka : order) {
            const double w = s_.ka.pmf(Ka);
            for (int Kp = kl_; Kp <= ku_ && (do_md || do_fa); ++Kp) {
                const IndexSets is = index_sets(Ka, Kp, kl_, ku_, r_prime, s_.J);
                const CellValue cap = Ka == Kp ? CellValue{1.0, 0.0} : p_prime(Ka, Kp);
                BlockSums bs = block(is, w, cap, do_md && Ka >= 1, do_fa, out.cells);
                out.md += w * bs.md;
                out.fa += w * bs.fa;
                md_var += w * w * bs.md_var;
                fa_var += w * w * bs.fa_var;
                check();
            }
            if (!do_md && !do_fa) break;
        }
        out.md_done = need_md && do_md;
        out.fa_done = need_fa && do_fa;
        out.md = std::min(out.md, 1.0);
        out.fa = std::min(out.fa, 1.0);
        out.md_se = std::sqrt(md_var);
        out.fa_se = std::sqrt(fa_var);
        return out;
    }

    // One cell of the lattice, evaluated at the current P'.
    CellValue cell(const IndexSets& is, int t, int tp, double Pp) {
        set_power(Pp);
        return cell_value(is, t, tp);
    }

    // p'_{Ka -> Ka'} at the current P'
    CellValue p_prime(int Ka, int Kp) {
        auto key = std::make_pair(Ka, Kp);
        auto it = pprime_.find(key);
        if (it != pprime_.end()) return it->second;
        const KaSpectra& ks = unit_spectra(Ka);
        const KaErrorEval e = ka_error_from_spectra(ks, s_.L, pp_, Kp, kl_, ku_);
        CellValue v{e.value, e.se};
        if (e.k_tilde < 0) v = {1.0, 0.0};
        pprime_[key] = v;
        return v;
    }

private:
    struct BlockSums {
        double md = 0.0, fa = 0.0, md_var = 0.0, fa_var = 0.0;
    };

    struct Q2Data {
        std::vector<double> lnF, lnF1, loggeo;
        std::map<int, std::pair<double, double>> pilot;  // value, minimizing delta
        std::map<int, double> full;
    };

    struct CellSample {
        double cr0 = 0.0;  // b - L ln|F|
        double lnF1 = 0.0;
        double cu = 0.0;   // b' - b'' + L ln|F''| - L ln|F'|
        BPencil pencil;
    };

    Scenario s_;
    ErrorTargets tg_;
    McConfig mc_;
    AchievabilityOptions opt_;
    int kl_ = 0, ku_ = 0;
    std::vector<double> nu_;
    std::vector<double> ray_cos, ray_sin;
    GramBank bank_;
    double pp_ = -1.0;
    std::map<int, KaSpectra> spectra_;
    std::map<std::pair<int, int>, CellValue> pprime_;
    struct CachedCell {
        CellValue v;
        double cap = 1.0;  // cap in force when the full pass was skipped (1 when it was not)
    };
    std::map<std::array<int, 5>, CachedCell> cell_cache_;
    std::vector<CMat> chol_;  // upper Cholesky factor of each scaled bank Gram (empty if singular)  // (Ka, x, y, t, t') at the current P'
    std::map<std::pair<int, int>, Q2Data> q2_;

    void build_rays() {
        const int R = std::max(opt_.rays, 2);
        ray_cos = {1.0};
        ray_sin = {0.0};
        for (int j = 0; j < R - 2; ++j) {
            const double ratio = R > 3 ? std::pow(10.0, -2.0 + 4.0 * j / (R - 3)) : 1.0;
            const double th = std::atan(ratio);
            ray_cos.push_back(std::cos(th));
            ray_sin.push_back(std::sin(th));
        }
        ray_cos.push_back(0.0);
        ray_sin.push_back(1.0);
    }

    void set_power(double Pp) {
        if (Pp == pp_) return;
        pp_ = Pp;
        pprime_.clear();
        q2_.clear();
        cell_cache_.clear();
        chol_.assign(bank_.samples(), CMat());
        parallel_for(bank_.samples(), [&](int i) {
            Eigen::LLT<CMat> llt(pp_ * bank_.g[i]);
            if (llt.info() == Eigen::Success) chol_[i] = llt.matrixU();
        });
    }

    const KaSpectra& unit_spectra(int Ka) {
        auto it = spectra_.find(Ka);
        if (it != spectra_.end()) return it->second;
        KaSpectra ks;
        ks.n = s_.n;
        ks.Ka = Ka;
        ks.mu.resize(bank_.samples());
        parallel_for(bank_.samples(), [&](int i) {
            if (Ka == 0) return;
            const RVec ev = herm_eigenvalues(bank_.g[i].topLeftCorner(Ka, Ka));
            const int r = std::min(s_.n, Ka);
            RVec out(r);
            for (int j = 0; j < r; ++j) out[j] = std::max(0.0, ev[Ka - 1 - j]);
            ks.mu[i] = out;
        });
        return spectra_.emplace(Ka, std::move(ks)).first->second;
    }

    int grid_size() const { return static_cast<int>(opt_.omega.size() * nu_.size()); }
    double grid_omega(int g) const { return opt_.omega[g / nu_.size()]; }
    double grid_nu(int g) const { return nu_[g % nu_.size()]; }

    Q2Data& q2_data(int Ka, int m1) {
        auto key = std::make_pair(Ka, m1);
        auto it = q2_.find(key);
        if (it != q2_.end()) return it->second;
        Q2Data d;
        const int N = bank_.samples();
        d.lnF.resize(N);
        d.lnF1.resize(N);
        d.loggeo.resize(N);
        parallel_for(N, [&](int i) {
            const CMat g = pp_ * bank_.g[i].topLeftCorner(Ka, Ka);
            d.lnF[i] = logdet_block(g, 0, Ka);
            d.lnF1[i] = logdet_block(g, m1, Ka);
            if (m1 == 0) return;
            CMat s11 = g.topLeftCorner(m1, m1);
            if (Ka > m1) {
                CMat core = g.block(m1, m1, Ka - m1, Ka - m1);
                core.diagonal().array() += 1.0;
                const CMat x = g.block(m1, 0, Ka - m1, m1);
                s11 -= x.adjoint() * Eigen::LLT<CMat>(core).solve(x);
            }
            const RVec ev = herm_eigenvalues(s11);
            const int m = std::min(s_.n, m1);
            double acc = 0.0;
            for (int j = 0; j < m; ++j) acc += std::log(std::max(ev[m1 - 1 - j], 1e-300));
            d.loggeo[i] = acc / m;
        });
        return q2_.emplace(key, std::move(d)).first->second;
    }

    // q2 (or q2_{t,0} when m1 = 0) at grid point g, averaged over the first `ns` samples.
    double q2_value(int Ka, int m1, int g, int ns) {
        Q2Data& d = q2_data(Ka, m1);
        const bool full = ns == bank_.samples();
        if (full) {
            auto it = d.full.find(g);
            if (it != d.full.end()) return it->second;
        } else {
            auto it = d.pilot.find(g);
            if (it != d.pilot.end()) return it->second.first;
        }
        const double w = grid_omega(g), nu = grid_nu(g);
        const double nL = static_cast<double>(s_.n) * s_.L;
        const double b = f_b(Ka, s_.ka, s_.J);
        double val = 0.0, arg_delta = 0.0;
        if (m1 == 0) {
            if (w < 1.0) {
                double acc = 0.0;
                for (int i = 0; i < ns; ++i) acc += reg_gamma_upper(nL, nL * nu / (1.0 - w) - s_.L * d.lnF[i] + b);
                val = acc / ns;
            }
        } else if (w > 0.0) {
            const double b1 = f_b(Ka - m1, s_.ka, s_.J);
            const int m = std::min(s_.n, m1);
            const double shape = static_cast<double>(s_.L) * m;
            auto f = [&](double delta) {
                double acc = 0.0;
                for (int i = 0; i < ns; ++i) {
                    const double num = nL * (1.0 + delta) * (1.0 - w) - w * (s_.L * d.lnF1[i] - b1) +
                                       s_.L * d.lnF[i] - b - nL * nu;
                    const double arg = num / (w * std::exp(d.loggeo[i]));
                    acc += std::isnan(arg) ? 1.0 : reg_gamma_lower(shape, arg);
                }
                return reg_gamma_upper(nL, nL * (1.0 + delta)) + acc / ns;
            };
            ScalarMin r;
            auto hint = d.pilot.find(g);
            if (full && hint != d.pilot.end()) {
                // any delta gives a valid bound; refine locally around the pilot's choice
                const double dp = hint->second.second;
                r.value = f(dp);
                r.argmin = dp;
                if (dp > 0.0) {
                    const ScalarMin loc = golden_section([&](double z) { return f(std::exp(z)); }, std::log(dp) - 1.5,
                                                         std::min(std::log(dp) + 1.5, std::log(10.0)), opt_.delta_refine);
                    if (loc.value < r.value) r = {std::exp(loc.argmin), loc.value, true};
                }
            } else {
                r = minimize_scalar(f, {0.0, 10.0, Scale::logarithmic, full ? opt_.delta_budget : opt_.pilot_delta_budget,
                                        full ? opt_.delta_refine : opt_.pilot_delta_refine});
            }
            val = std::exp(log_binomial(Ka, m1) + std::log(std::min(r.value, 1.0)));
            arg_delta = r.argmin;
        }
        if (full) d.full[g] = val;
        else d.pilot[g] = {val, arg_delta};
        return val;
    }

    CellSample cell_sample(const IndexSets& is, int t, int tp, int i, double cu_prior, double b, const Q2Data& qd) const {
        const int Ka = is.Ka, x = is.x, y = is.y;
        const int m1 = t + x, m2 = tp + y, k = Ka + m2;
        const CMat g = pp_ * bank_.g[i].topLeftCorner(k, k);
        CellSample cs;
        const double lnF = qd.lnF[i];
        cs.lnF1 = qd.lnF1[i];
        const double lnFp = logdet_block(g, m1, k);
        // F'' covers (W \ W11) u W21 = [x, Ka + y), contiguous in this layout
        const double lnFpp = logdet_block(g, x, Ka + y);
        cs.cr0 = b - s_.L * lnF;
        cs.cu = cu_prior + s_.L * (lnFpp - lnFp);
        RVec wF = RVec::Zero(k), w1 = RVec::Zero(k), wp = RVec::Zero(k), wpp = RVec::Zero(k);
        wF.head(Ka).setOnes();
        w1.segment(m1, Ka - m1).setOnes();
        wp.segment(m1, k - m1).setOnes();
        wpp.segment(x, Ka + y - x).setOnes();
        const std::optional<ReducedBasis> pre = ReducedBasis::from_chol_prefix(chol_[i], k, s_.n);
        const ReducedBasis rb = pre ? *pre : ReducedBasis::from_gram_chol(g, s_.n);
        cs.pencil = BPencil::build(rb, wF, w1, wp, wpp);
        return cs;
    }

    // Per-sample log of min over (u, r) of the q1 integrand, for the listed grid points.
    // `stride` > 1 visits a subset of the rays (always keeping both axes).
    void q1_sample(const CellSample& cs, double b1, const std::vector<int>& grid, double* out, int stride = 1) const {
        const int q = cs.pencil.q();
        const double n = s_.n, L = s_.L;
        std::vector<double> a(q);
        for (std::size_t j = 0; j < grid.size(); ++j) out[j] = 0.0;
        std::size_t j0 = 0;
        while (j0 < grid.size()) {
            const double w = grid_omega(grid[j0]);
            std::size_t j1 = j0;
            while (j1 < grid.size() && grid_omega(grid[j1]) == w) ++j1;
            // r multiplies ln|F1| and b1 only through omega, so b1 = -inf matters only for omega > 0
            const double r_extra = w > 0.0 ? w * (L * cs.lnF1 - b1) : 0.0;
            const std::size_t nr = ray_cos.size();
            for (std::size_t ray = 0; ray < nr; ray = ray + 1 == nr ? nr : std::min(ray + stride, nr - 1)) {
                const double cu = ray_cos[ray], cr = ray_sin[ray];
                const double a0 = cr * (1.0 - w);
                if (q > 0) {
                    CMat m = cu * cs.pencil.h1 - (cr * w) * cs.pencil.e3;
                    const RVec ev = herm_eigenvalues(m);
                    for (int i = 0; i < q; ++i) a[i] = a0 + ev[i];
                }
                // nu ascends within an omega group, so k does too and the minimizer shrinks
                double s_prev = 0.0, v = 0.0;
                for (std::size_t j = j0; j < j1; ++j) {
                    if (j == j0 || cr > 0.0) {
                        const double nu = grid_nu(grid[j]);
                        double k = 0.0;
                        if (cu > 0.0) k += cu * cs.cu;
                        if (cr > 0.0) k += cr * (L * n * nu + cs.cr0 + r_extra);
                        v = line_min_logdet(k, L, n - q, a0, a.data(), q, &s_prev);
                    }
                    out[j] = std::min(out[j], v);
                }
            }
            j0 = j1;
        }
    }

    // `cap` is a value the caller will substitute anyway once the cell reaches it, so the
    // full-sample pass is skipped when the pilot estimate is already there.
    CellValue cell_value(const IndexSets& is, int t, int tp, double cap = 1.0, double negligible = 0.0) {
        const int Ka = is.Ka;
        const int m1 = t + is.x, m2 = tp + is.y;
        const int kh = is.ka_hat(t, tp);
        const double bp = f_b(kh, s_.ka, s_.J);
        if (bp == -kInf) return {0.0, 0.0};
        const double b = f_b(Ka, s_.ka, s_.J);
        const double bpp = f_b(Ka - is.x + is.y, s_.ka, s_.J);
        const double b1 = f_b(Ka - m1, s_.ka, s_.J);
        const double cu_prior = bpp == -kInf ? kInf : bp - bpp;
        const double logC = log_binomial(Ka, m1) + log_binomial_pow2(s_.J, m2, Ka);
        if (logC == -kInf) return {0.0, 0.0};

        const int N = bank_.samples();
        const int NP = std::min(N, std::max(opt_.pilot, 1));
        std::vector<CellSample> cs(N);
        const Q2Data& qd = q2_data(Ka, m1);
        parallel_for(NP, [&](int i) { cs[i] = cell_sample(is, t, tp, i, cu_prior, b, qd); });

        const int G = grid_size();
        std::vector<int> all(G);
        std::iota(all.begin(), all.end(), 0);
        std::vector<double> pl(static_cast<std::size_t>(NP) * G);
        parallel_for(NP, [&](int i) { q1_sample(cs[i], b1, all, &pl[static_cast<std::size_t>(i) * G], 2); });
        std::vector<double> q1p(G);
        std::vector<double> col(NP);
        for (int g = 0; g < G; ++g) {
            for (int i = 0; i < NP; ++i) col[i] = pl[static_cast<std::size_t>(i) * G + g];
            q1p[g] = std::exp(logC + log_mean_exp(col));
        }
        std::vector<int> byq1(G);
        std::iota(byq1.begin(), byq1.end(), 0);
        std::stable_sort(byq1.begin(), byq1.end(), [&](int a, int c) { return q1p[a] < q1p[c]; });
        if (q1p[byq1[0]] >= 1.0) return {1.0, 0.0};

        // the q2 part is nonnegative, so points whose q1 alone exceeds the best total are skipped
        std::vector<std::pair<double, int>> tot;
        double best = kInf;
        for (int g : byq1) {
            if (q1p[g] >= best) break;
            const double v = q1p[g] + q2_value(Ka, m1, g, NP);
            tot.emplace_back(v, g);
            best = std::min(best, v);
        }
        std::stable_sort(tot.begin(), tot.end());
        if (best >= cap) return {1.0, 0.0};
        if (opt_.pilot_inflation * best < negligible) return {opt_.pilot_inflation * best, 0.0};
        parallel_for(N - NP, [&](int i) { cs[NP + i] = cell_sample(is, t, tp, NP + i, cu_prior, b, qd); });
        std::vector<int> fin;
        for (std::size_t j = 0; j < tot.size() && static_cast<int>(fin.size()) < opt_.finalists; ++j)
            fin.push_back(tot[j].second);
        std::sort(fin.begin(), fin.end());

        const int F = static_cast<int>(fin.size());
        std::vector<double> fl(static_cast<std::size_t>(N) * F);
        parallel_for(N, [&](int i) {
            double* o = &fl[static_cast<std::size_t>(i) * F];
            q1_sample(cs[i], b1, fin, o);
        });
        CellValue out{1.0, 0.0};
        std::vector<double> colN(N);
        for (int j = 0; j < F; ++j) {
            for (int i = 0; i < N; ++i) colN[i] = fl[static_cast<std::size_t>(i) * F + j];
            const MeanSe ms = clamped_mean(colN);
            const double C = std::exp(logC);
            const double v = C * ms.mean + q2_value(Ka, m1, fin[j], N);
            if (v < out.value) out = {v, C * ms.se};
        }
        out.value = std::min(out.value, 1.0);
        return out;
    }

    // MD and FA contributions of one (Ka, Ka') block, before the pmf weight.
    BlockSums block(const IndexSets& is, double w, const CellValue& cap, bool do_md, bool do_fa, int& cells) {
        BlockSums out;
        if (is.t_max < 0 || cap.value <= 0.0) return out;
        const double capv = std::min(1.0, cap.value);
        const double cap_var = cap.se * cap.se;

        double md_wmax = 0.0, fa_wmax = 0.0;
        for (int t = 0; t <= is.t_max; ++t) {
            if (is.Ka >= 1) md_wmax = std::max(md_wmax, static_cast<double>(t + is.x) / is.Ka);
            for (int tp = is.tp_lo(t); tp <= is.tp_hi(t); ++tp) {
                const int kh = is.ka_hat(t, tp);
                if (kh >= 1) fa_wmax = std::max(fa_wmax, static_cast<double>(tp + is.y) / kh);
            }
        }
        do_md = do_md && md_wmax > 0.0;
        do_fa = do_fa && fa_wmax > 0.0;
        const double md_cap = md_wmax * capv, fa_cap = fa_wmax * capv;
        if (do_md && w * md_cap < opt_.skip_fraction * tg_.eps_md) {
            out.md = md_cap;
            out.md_var = md_wmax * md_wmax * cap_var;
            do_md = false;
        }
        if (do_fa && w * fa_cap < opt_.skip_fraction * tg_.eps_fa) {
            out.fa = fa_cap;
            out.fa_var = fa_wmax * fa_wmax * cap_var;
            do_fa = false;
        }
        if (!do_md && !do_fa) return out;

        // cells depend on the block only through (x, y), so neighbouring blocks share them
        auto p = [&](int t, int tp) {
            const std::array<int, 5> key{is.Ka, is.x, is.y, t, tp};
            auto it = cell_cache_.find(key);
            if (it != cell_cache_.end() && capv <= it->second.cap) return it->second.v;
            ++cells;
            double wt = 0.0;
            if (is.Ka >= 1) wt = static_cast<double>(t + is.x) / is.Ka;
            const int kh = is.ka_hat(t, tp);
            if (kh >= 1) wt = std::max(wt, static_cast<double>(tp + is.y) / kh);
            const double negligible =
                wt > 0.0 ? opt_.negligible_fraction * std::min(tg_.eps_md, tg_.eps_fa) / (w * wt) : 0.0;
            const CellValue v = cell_value(is, t, tp, capv, negligible);
            cell_cache_[key] = {v, v.value >= 1.0 && v.se == 0.0 ? capv : 1.0};
            return v;
        };
        // geometric tail rule shared by the t and t' loops
        auto tail_done = [&](double prev, double cur, double scale_target, double& extra) {
            if (prev <= 0.0 || cur <= 0.0) return cur == 0.0 && prev == 0.0;
            const double rho = cur / prev;
            if (rho < 0.5 && w * cur < opt_.tail_fraction * scale_target) {
                extra = cur * rho / (1.0 - rho);
                return true;
            }
            return false;
        };

        if (do_md) {
            double sum = 0.0, var = 0.0, prev = -1.0;
            bool capped = false;
            for (int t = 0; t <= is.t_max; ++t) {
                const int m1 = t + is.x;
                if (m1 == 0) continue;
                const double wt = static_cast<double>(m1) / is.Ka;
                double S = 0.0, Svar = 0.0, sprev = -1.0;
                for (int tp = is.tp_lo(t); tp <= is.tp_hi(t); ++tp) {
                    const CellValue v = p(t, tp);
                    S += v.value;
                    Svar += v.se * v.se;
                    double extra = 0.0;
                    if (S >= capv || tail_done(sprev, v.value, tg_.eps_md, extra)) {
                        S += extra;
                        break;
                    }
                    sprev = v.value;
                }
                double term;
                if (S >= capv) {
                    term = wt * capv;
                    var += wt * wt * cap_var;
                } else {
                    term = wt * S;
                    var += wt * wt * Svar;
                }
                sum += term;
                if (sum >= md_cap) {
                    capped = true;
                    break;
                }
                double extra = 0.0;
                if (tail_done(prev, term, tg_.eps_md, extra)) {
                    sum += extra;
                    break;
                }
                prev = term;
            }
            if (capped || sum >= md_cap) {
                out.md = md_cap;
                out.md_var = md_wmax * md_wmax * cap_var;
            } else {
                out.md = sum;
                out.md_var = var;
            }
        }

        if (do_fa) {
            double sum = 0.0, var = 0.0, prev = -1.0;
            bool capped = false;
            for (int t = 0; t <= is.t_max && !capped; ++t) {
                double row = 0.0, rvar = 0.0, sprev = -1.0;
                for (int tp = is.tp_lo(t); tp <= is.tp_hi(t); ++tp) {
                    const int kh = is.ka_hat(t, tp);
                    const int m2 = tp + is.y;
                    if (kh < 1 || m2 == 0) continue;
                    const double wt = static_cast<double>(m2) / kh;
                    const CellValue v = p(t, tp);
                    double term;
                    if (v.value >= capv) {
                        term = wt * capv;
                        rvar += wt * wt * cap_var;
                    } else {
                        term = wt * v.value;
                        rvar += wt * wt * v.se * v.se;
                    }
                    row += term;
                    if (sum + row >= fa_cap) {
                        capped = true;
                        break;
                    }
                    double extra = 0.0;
                    if (tail_done(sprev, term, tg_.eps_fa, extra)) {
                        row += extra;
                        break;
                    }
                    sprev = term;
                }
                sum += row;
                var += rvar;
                if (sum >= fa_cap) capped = true;
                double extra = 0.0;
                if (!capped && tail_done(prev, row, tg_.eps_fa, extra)) {
                    sum += extra;
                    break;
                }
                prev = row;
            }
            if (capped || sum >= fa_cap) {
                out.fa = fa_cap;
                out.fa_var = fa_wmax * fa_wmax * cap_var;
            } else {
                out.fa = sum;
                out.fa_var = var;
            }
        }
        return out;
    }
};

// Probability bound for one cell, evaluated from scratch.
inline CellValue p_misdecode(const Scenario& s, const ErrorTargets& tg, int Ka, int Ka_prime, int t, int tp,
                             double Pp, const McConfig& mc, const AchievabilityOptions& opt = {}) {
    Scenario sp = s;
    AchievabilityEvaluator ev(sp, tg, mc, opt);
    const IndexSets is = index_sets(Ka, Ka_prime, ev.k_l(), ev.k_u(), s.r_prime, s.J);
    return ev.cell(is, t, tp, Pp);
}

struct PowerCheck {
    bool feasible = false;
    double md = 1.0, fa = 1.0, md_se = 0.0, fa_se = 0.0;
    double pp_md = 0.0, pp_fa = 0.0;
    int r_prime = 0;
};

inline std::vector<double> p_prime_ratios(const Scenario& s) {
    if (s.ensemble == Ensemble::spherical) return {1.0};
    std::vector<double> g;
    const double lo = std::log(0.1), hi = std::log(0.99);
    for (int i = 7; i >= 0; --i) g.push_back(std::exp(lo + (hi - lo) * i / 7.0));
    return g;
}

// Feasibility of the targets at power P: the best P' is chosen separately for MD and FA.
inline PowerCheck check_power(AchievabilityEvaluator& ev, const ErrorTargets& tg, double P,
                              const std::vector<int>& r_set, bool early_stop = true) {
    PowerCheck best;
    for (int rp : r_set) {
        PowerCheck pc;
        pc.r_prime = rp;
        bool md_ok = false, fa_ok = false;
        for (double ratio : p_prime_ratios(ev.scenario())) {
            const double Pp = ratio * P;
            const double p0 = ev.p0(P, Pp);
            if (p0 > tg.eps_md && p0 > tg.eps_fa) continue;
            const EpsEval e = ev.eval(P, Pp, rp, !md_ok, !fa_ok, early_stop);
            if (!md_ok && e.md_done && e.md < pc.md) {
                pc.md = e.md;
                pc.md_se = e.md_se;
                pc.pp_md = Pp;
            }
            if (!fa_ok && e.fa_done && e.fa < pc.fa) {
                pc.fa = e.fa;
                pc.fa_se = e.fa_se;
                pc.pp_fa = Pp;
            }
            md_ok = md_ok || (e.md_done && e.md <= tg.eps_md);
            fa_ok = fa_ok || (e.fa_done && e.fa <= tg.eps_fa);
            if (md_ok && fa_ok) break;
        }
        pc.feasible = md_ok && fa_ok;
        if (pc.feasible) return pc;
        if (rp == r_set.front()) best = pc;
    }
    return best;
}

inline double power_from_eb_db(const Scenario& s, double eb_db) { return db_to_lin(eb_db) * s.J / s.n; }

// Smallest E_b (dB) meeting the targets: bracket by factors of two, then bisection in dB.
inline BoundReport min_eb_achievability(const Scenario& s, const ErrorTargets& tg, const McConfig& mc,
                                        const AchievabilityOptions& opt = {}) {
    AchievabilityEvaluator ev(s, tg, mc, opt);
    std::vector<int> r_set = opt.r_prime_set;
    if (r_set.empty()) r_set = {s.r_prime};
    BoundReport rep;
    rep.samples = mc.samples;
    rep.seed = mc.seed;
    rep.note("k_l", ev.k_l());
    rep.note("k_u", ev.k_u());

    const double step = 10.0 * std::log10(2.0);
    auto feas = [&](double eb) { return check_power(ev, tg, power_from_eb_db(s, eb), r_set); };
    double lo = opt.eb_start_db, hi = opt.eb_start_db;
    PowerCheck at_hi = feas(hi);
    PowerCheck at_lo;
    if (at_hi.feasible) {
        for (;;) {
            if (lo <= opt.eb_floor_db) {
                rep.value = opt.eb_floor_db;
                const PowerCheck f = feas(opt.eb_floor_db);
                if (f.feasible) {
                    rep.note("floor", 1);
                    at_hi = f;
                    hi = opt.eb_floor_db;
                    lo = hi;
                    break;
                }
                lo = opt.eb_floor_db;
                at_lo = f;
                break;
            }
            const double cand = std::max(lo - step, opt.eb_floor_db);
            const PowerCheck f = feas(cand);
            if (f.feasible) {
                hi = cand;
                at_hi = f;
                lo = cand;
            } else {
                lo = cand;
                at_lo = f;
                break;
            }
        }
    } else {
        at_lo = at_hi;
        for (;;) {
            if (hi >= opt.eb_ceiling_db) {
                rep.feasible = false;
                rep.value = kInf;
                rep.note("eps_md", at_lo.md);
                rep.note("eps_fa", at_lo.fa);
                return rep;
            }
            lo = hi;
            at_lo = at_hi;
            hi = std::min(hi + step, opt.eb_ceiling_db);
            at_hi = feas(hi);
            if (at_hi.feasible) break;
        }
    }
    while (hi - lo > opt.tol_db) {
        const double mid = 0.5 * (lo + hi);
        const PowerCheck f = feas(mid);
        if (f.feasible) {
            hi = mid;
            at_hi = f;
        } else {
            lo = mid;
            at_lo = f;
        }
    }
    const double P = power_from_eb_db(s, hi);
    rep.value = hi;
    rep.note("p_star", P);
    rep.note("p_prime_star", std::max(at_hi.pp_md, at_hi.pp_fa) > 0.0 ? (at_hi.md / tg.eps_md >= at_hi.fa / tg.eps_fa ? at_hi.pp_md : at_hi.pp_fa) : P);
    rep.note("p_prime_md", at_hi.pp_md);
    rep.note("p_prime_fa", at_hi.pp_fa);
    rep.note("r_prime_star", at_hi.r_prime);
    rep.note("eps_md", at_hi.md);
    rep.note("eps_fa", at_hi.fa);
    rep.note("eps_md_se", at_hi.md_se);
    rep.note("eps_fa_se", at_hi.fa_se);

    // standard error in dB from the local slope of the binding constraint
    double se_db = 0.0;
    if (lo < hi) {
        const bool md_bind = at_hi.md / tg.eps_md >= at_hi.fa / tg.eps_fa;
        const double e_hi = md_bind ? at_hi.md : at_hi.fa;
        const double e_lo = md_bind ? at_lo.md : at_lo.fa;
        const double se = md_bind ? at_hi.md_se : at_hi.fa_se;
        const double slope = (e_lo - e_hi) / (hi - lo);
        if (slope > 0.0 && std::isfinite(slope)) se_db = se / slope;
    }
    rep.se = se_db;
    if (opt.post_check && rep.get("floor", 0.0) == 0.0) {
        const PowerCheck f = feas(hi + opt.tol_db / 10.0);
        rep.note("non_monotone", f.feasible ? 0 : 1);
    }
    return rep;
}

// eps_MD and eps_FA at power P with the best P' of the grid, all sums complete.
inline EpsEval eps_md_fa(const Scenario& s, const ErrorTargets& tg, double P, const McConfig& mc,
                         const AchievabilityOptions& opt = {}) {
    AchievabilityEvaluator ev(s, tg, mc, opt);
    EpsEval best;
    best.md = best.fa = kInf;
    for (double ratio : p_prime_ratios(s)) {
        const EpsEval e = ev.eval(P, ratio * P, s.r_prime);
        if (e.md < best.md) {
            best.md = e.md;
            best.md_se = e.md_se;
        }
        if (e.fa < best.fa) {
            best.fa = e.fa;
            best.fa_se = e.fa_se;
        }
        best.p0 = e.p0;
        best.cells += e.cells;
    }
    best.md_done = best.fa_done = true;
    return best;
}

}  // namespace uraflb
