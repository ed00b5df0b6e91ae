// Desk-scale acceptance run: one PASS/FAIL line per criterion.
// URAFLB_ACCEPT=1,3,7 restricts the run to the listed criteria.
#include <sys/wait.h>

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "uraflb/achievability.hpp"
#include "uraflb/converse.hpp"
#include "uraflb/ka_bounds.hpp"
#include "uraflb/simulator.hpp"

using namespace uraflb;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

void log(const std::string& s) {
    std::printf("    %s\n", s.c_str());
    std::fflush(stdout);
}

Scenario estimation_scenario(int L) {
    Scenario s;
    s.n = 100;
    s.L = L;
    s.J = 100;
    s.K = 20;
    s.P = db_to_lin(-10.0);
    s.ka = KaDistribution::fixed(10);
    return s;
}

const std::vector<int> kEstL{8, 16, 32};

std::vector<int> other_counts(int Ka, int K) {
    std::vector<int> v;
    for (int k = 0; k <= K; ++k)
        if (k != Ka) v.push_back(k);
    return v;
}

Verdict c1() {
    const int trials = 10000;
    const McConfig mc{2000, 11, false};
    bool ok = true;
    double worst = -kInf;
    for (int L : kEstL) {
        const Scenario s = estimation_scenario(L);
        const auto primes = other_counts(10, s.K);
        const auto b = ka_error_bounds(s, 10, primes, 0, -1, false, mc);
        const KaErrorFrequencies f = empirical_ka_error(s, 10, trials, 1001);
        double err = 0.0;
        for (std::size_t j = 0; j < primes.size(); ++j) {
            auto it = f.freq.find(primes[j]);
            const double p = it == f.freq.end() ? 0.0 : it->second;
            err += p;
            const double gap = p - 3.0 * f.se(primes[j]) - b[j].value;
            worst = std::max(worst, gap);
            if (gap > 0.0) {
                ok = false;
                log(fmt("L=%d Ka'=%d: freq %.4g > bound %.4g + 3SE", L, primes[j], p, b[j].value));
            }
        }
        log(fmt("L=%d: empirical P[Ka_hat != Ka] = %.4g", L, err));
    }
    return {ok, fmt("max(freq - 3SE - bound) = %.3g over L in {8,16,32}, all Ka' != 10", worst)};
}

Verdict c2() {
    const McConfig mc{2000, 11, false};
    const std::vector<int> primes{7, 8, 9, 11, 12, 13};
    std::vector<std::vector<double>> lb(primes.size());
    for (int L : kEstL) {
        const auto b = ka_error_bounds(estimation_scenario(L), 10, primes, 0, -1, false, mc);
        for (std::size_t j = 0; j < primes.size(); ++j) lb[j].push_back(std::log(b[j].value));
    }
    bool ok = true;
    double r2_min = 1.0;
    for (std::size_t j = 0; j < primes.size(); ++j) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < kEstL.size(); ++i) {
            mx += kEstL[i];
            my += lb[j][i];
        }
        mx /= kEstL.size();
        my /= kEstL.size();
        double sxx = 0, sxy = 0, syy = 0;
        for (std::size_t i = 0; i < kEstL.size(); ++i) {
            sxx += (kEstL[i] - mx) * (kEstL[i] - mx);
            sxy += (kEstL[i] - mx) * (lb[j][i] - my);
            syy += (lb[j][i] - my) * (lb[j][i] - my);
        }
        const double slope = sxy / sxx;
        const double r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 0.0;
        r2_min = std::min(r2_min, r2);
        log(fmt("Ka'=%d: ln bound = %.3f, %.3f, %.3f  slope %.4f  R2 %.5f", primes[j], lb[j][0], lb[j][1], lb[j][2],
                slope, r2));
        if (!(slope < 0.0 && r2 >= 0.98)) ok = false;
    }
    return {ok, fmt("min R2 %.5f over Ka' in {7,8,9,11,12,13}", r2_min)};
}

Scenario fig1(int n, double P_db) {
    Scenario s;
    s.n = n;
    s.L = 64;
    s.J = 100;
    s.K = 600;
    s.P = db_to_lin(P_db);
    s.ka = KaDistribution::fixed(300);
    return s;
}

Verdict c3() {
    const McConfig mc{500, 3, false};
    const std::vector<int> primes{290, 295, 305, 310};
    bool mono = true, plateau = true;
    std::vector<double> last;
    for (double pdb : {-10.0, 0.0, 10.0, 30.0}) {
        std::vector<double> v;
        for (const auto& r : ka_error_bounds(fig1(1000, pdb), 300, primes, 0, -1, false, mc)) v.push_back(r.value);
        for (std::size_t j = 0; j < v.size() && !last.empty(); ++j)
            if (v[j] > last[j] * (1.0 + 1e-9)) mono = false;
        log(fmt("P=%+.0f dB: %.5g %.5g %.5g %.5g", pdb, v[0], v[1], v[2], v[3]));
        last = v;
    }
    const auto lim = ka_error_bounds_asym_p(fig1(1000, 30.0), 300, primes, 0, -1, false, mc);
    double worst_p = 0.0;
    for (std::size_t j = 0; j < primes.size(); ++j) {
        const double rel = std::abs(last[j] - lim[j].value) / lim[j].value;
        worst_p = std::max(worst_p, rel);
        log(fmt("Ka'=%d: +30 dB %.5g vs P->inf limit %.5g (rel %.3g)", primes[j], last[j], lim[j].value, rel));
    }
    plateau = worst_p <= 0.10;

    bool from_above = true, decreasing = true;
    double worst_n = 0.0;
    std::vector<double> prev;
    for (int n : {500, 1000, 2000}) {
        const auto b = ka_error_bounds(fig1(n, -20.0), 300, primes, 0, -1, false, mc);
        std::vector<double> v;
        for (std::size_t j = 0; j < primes.size(); ++j) {
            v.push_back(b[j].value);
            const double cor = ka_error_bound_asym_n(300, primes[j], 0, 600, 64, 100);
            if (b[j].value < cor) from_above = false;
            if (!prev.empty() && b[j].value > prev[j] * (1.0 + 1e-9)) decreasing = false;
            const double rel = std::abs(b[j].value - cor) / cor;
            if (n == 2000) worst_n = std::max(worst_n, rel);
            log(fmt("n=%d Ka'=%d: %.5g vs n->inf limit %.5g (rel %.3g)", n, primes[j], b[j].value, cor, rel));
        }
        prev = v;
    }
    const bool ok = mono && plateau && from_above && decreasing && worst_n <= 0.15;
    return {ok, fmt("P: nonincreasing %s, +30 dB rel gap %.3g (<=0.10); n: decreasing %s, above limit %s, "
                    "rel gap at n=2000 %.3g (<=0.15)",
                    mono ? "yes" : "no", worst_p, decreasing ? "yes" : "no", from_above ? "yes" : "no", worst_n)};
}

Scenario reduced(double pa) {
    Scenario s;
    s.n = 200;
    s.L = 16;
    s.J = 16;
    s.K = 40;
    s.ka = KaDistribution::binomial(40, pa);
    s.r_prime = 6;
    return s;
}

const std::vector<double> kPa{0.125, 0.25, 0.5, 0.75};
const ErrorTargets kReducedTargets{0.01, 0.01};
const McConfig kReducedMc{500, 1, false};

// spherical achievability per point, shared by criteria 4 to 6
std::vector<double>& spherical_achievability() {
    static std::vector<double> v;
    if (v.empty()) {
        for (double pa : kPa) {
            const auto t0 = std::chrono::steady_clock::now();
            const BoundReport r = min_eb_achievability(reduced(pa), kReducedTargets, kReducedMc);
            const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            log(fmt("E[Ka]=%.0f spherical achievability %.3f dB (eps_md %.4g, eps_fa %.4g, %.0f s)", 40 * pa,
                    r.value, r.get("eps_md"), r.get("eps_fa"), sec));
            v.push_back(r.value);
        }
    }
    return v;
}

Verdict c4() {
    const auto& ach = spherical_achievability();
    bool ok = true;
    double margin = kInf;
    for (std::size_t i = 0; i < kPa.size(); ++i) {
        const ConverseEnvelope c = converse_envelope(reduced(kPa[i]), kReducedTargets, kReducedMc);
        log(fmt("E[Ka]=%.0f converse envelope %.3f dB (binding bound %d; 3: %.3f, 4: %.3f, 5: %.3f)", 40 * kPa[i],
                c.envelope.value, static_cast<int>(c.envelope.get("theorem")), c.envelope.get("theorem_3"),
                c.envelope.get("theorem_4"), c.envelope.get("theorem_5")));
        margin = std::min(margin, ach[i] - c.envelope.value);
        if (!(ach[i] >= c.envelope.value)) ok = false;
    }
    return {ok, fmt("min(achievability - converse) = %.3f dB over 4 points", margin)};
}

Verdict c5() {
    const auto& sph = spherical_achievability();
    bool ok = true;
    double gap = kInf;
    for (std::size_t i = 0; i < kPa.size(); ++i) {
        Scenario s = reduced(kPa[i]);
        s.ensemble = Ensemble::gaussian;
        const BoundReport g = min_eb_achievability(s, kReducedTargets, kReducedMc);
        log(fmt("E[Ka]=%.0f Gaussian achievability %.3f dB, spherical %.3f dB", 40 * kPa[i], g.value, sph[i]));
        gap = std::min(gap, g.value - sph[i]);
        if (!(sph[i] <= g.value)) ok = false;
    }
    return {ok, fmt("min(Gaussian - spherical) = %.3f dB over 4 points", gap)};
}

Verdict c6() {
    const auto& unk = spherical_achievability();
    bool ok = true;
    double gap = kInf;
    for (std::size_t i = 0; i < kPa.size(); ++i) {
        const int mean = static_cast<int>(std::lround(40 * kPa[i]));
        Scenario s = reduced(kPa[i]);
        s.ka = KaDistribution::fixed(mean);
        s.k_l = s.k_u = mean;
        s.r_prime = 0;
        const BoundReport k = min_eb_achievability(s, kReducedTargets, kReducedMc);
        log(fmt("E[Ka]=%d known-count achievability %.3f dB, unknown %.3f dB", mean, k.value, unk[i]));
        gap = std::min(gap, unk[i] - k.value);
        if (!(k.value <= unk[i])) ok = false;
    }
    return {ok, fmt("min(unknown - known) = %.3f dB over 4 points", gap)};
}

Verdict c7() {
    Scenario s;
    s.n = 6;
    s.L = 2;
    s.J = 3;
    s.K = 4;
    s.P = db_to_lin(10.0);
    s.ka = KaDistribution::binomial(4, 0.5);
    s.k_l = 0;
    s.k_u = 4;
    s.r_prime = 4;
    const ErrorTargets tg{0.1, 0.1};
    const MdFa emp = empirical_md_fa(s, tg, 10000, 7);
    const EpsEval b = eps_md_fa(s, tg, s.P, {2000, 7, false});
    log(fmt("empirical MD %.4g (SE %.2g), FA %.4g (SE %.2g)", emp.md, emp.md_se, emp.fa, emp.fa_se));
    log(fmt("bound MD %.4g, FA %.4g (p0 %.4g)", b.md, b.fa, b.p0));
    const bool ok = emp.md - 3.0 * emp.md_se <= b.md && emp.fa - 3.0 * emp.fa_se <= b.fa;
    return {ok, fmt("MD %.4g <= %.4g, FA %.4g <= %.4g", emp.md, b.md, emp.fa, b.fa)};
}

Verdict c8() {
    std::mt19937_64 eng(8);
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
    auto cn = [&](int r, int c) {
        CMat m(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = cplx(nd(eng), nd(eng));
        return m;
    };
    const int draws = 100000;
    bool ok = true;
    double worst = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        const int p = 2 + inst % 5;
        const CMat A = cn(p, p);
        CMat Sigma = A * A.adjoint();
        Sigma.diagonal().array() += 0.1;
        const CMat Bm = cn(p, p);
        const CMat B = hermitize(Bm);
        Eigen::SelfAdjointEigenSolver<CMat> es(Sigma);
        const CMat root = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().adjoint();
        const RVec ev = herm_eigenvalues(root * B * root);
        // alternate the sign of gamma and keep 2*gamma*lambda below 1 so that the
        // estimator has finite variance
        const double frac = 0.1 + 0.3 * (inst % 4) / 3.0;
        const double sign = inst % 2 ? 1.0 : -1.0;
        const double lam = std::max(sign > 0 ? ev.maxCoeff() : -ev.minCoeff(), ev.cwiseAbs().maxCoeff() * 1e-3);
        const double gamma = sign * frac / lam;
        CMat Ig = CMat::Identity(p, p) - gamma * Sigma * B;
        const double expect = 1.0 / std::real(Ig.determinant());
        double sum = 0.0, sq = 0.0;
        for (int d = 0; d < draws; ++d) {
            const CVec x = root * cn(p, 1);
            const double v = std::exp(gamma * std::real((x.adjoint() * B * x)(0, 0)));
            sum += v;
            sq += v * v;
        }
        const double mean = sum / draws;
        const double se = std::sqrt(std::max(sq / draws - mean * mean, 0.0) / draws);
        const double z = (mean - expect) / se;
        worst = std::max(worst, std::abs(z));
        if (std::abs(z) > 3.0) {
            ok = false;
            log(fmt("instance %d: MC %.6g vs %.6g (z %.2f)", inst, mean, expect, z));
        }
    }
    return {ok, fmt("max |z| = %.2f over 20 instances", worst)};
}

Verdict c9() {
    std::mt19937_64 eng(9);
    const int s = 3, m = 4, draws = 100000;
    bool ok = true;
    double worst = -kInf;
    std::chi_squared_distribution<double> xm(m), xsm(s * m);
    std::uniform_real_distribution<double> lu(std::log(0.2), std::log(5.0));
    for (int set = 0; set < 5; ++set) {
        double g[s], geo = 1.0;
        for (double& x : g) {
            x = std::exp(lu(eng));
            geo *= std::pow(x, 1.0 / s);
        }
        std::vector<double> sums(draws), prods(draws);
        for (int d = 0; d < draws; ++d) {
            double acc = 0.0;
            for (int j = 0; j < s; ++j) acc += g[j] * xm(eng);
            sums[d] = acc;
            prods[d] = geo * xsm(eng);
        }
        for (double q = 0.1; q <= 3.001; q += 0.1) {
            const double c = q * geo * s * m;
            double a = 0, b = 0;
            for (int d = 0; d < draws; ++d) {
                a += sums[d] < c;
                b += prods[d] < c;
            }
            a /= draws;
            b /= draws;
            const double se = std::sqrt((a * (1 - a) + b * (1 - b)) / draws);
            worst = std::max(worst, a - b - 3.0 * se);
            if (a > b + 3.0 * se) {
                ok = false;
                log(fmt("weights %d, c=%.3g: %.5g > %.5g + 3SE", set, c, a, b));
            }
        }
    }
    return {ok, fmt("max(P_sum - P_prod - 3SE) = %.3g over 5 weight sets x 30 thresholds", worst)};
}

Verdict c10() {
    double worst_q = 0.0;
    const std::vector<double> ps{1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999};
    for (int dof = 2; dof <= 512; ++dof)
        for (double p : ps) worst_q = std::max(worst_q, std::abs(chi2_cdf(dof, chi2_quantile(dof, p)) - p));

    std::mt19937_64 eng(10);
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
    double worst_l = 0.0;
    int mism = 0, feasible = 0, total = 0;
    for (int inst = 0; inst < 200; ++inst) {
        const int n = 2 + static_cast<int>(eng() % 63);
        const int k = 1 + static_cast<int>(eng() % 12);
        const int Ka = 1 + static_cast<int>(eng() % k);
        const int m1 = static_cast<int>(eng() % (Ka + 1));
        const int x = static_cast<int>(eng() % (Ka + 1));
        const int y = static_cast<int>(eng() % (k - Ka + 1));
        CMat c(n, k);
        const double sc = 0.2 + 1.5 * (eng() % 1000) / 1000.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < k; ++j) c(i, j) = sc * cplx(nd(eng), nd(eng));
        auto sel = [&](int a, int b) {
            RVec w = RVec::Zero(k);
            for (int i = a; i < b; ++i) w[i] = 1.0;
            return w;
        };
        const WeightedGram f{c, sel(0, Ka)}, f1{c, sel(m1, Ka)}, fp{c, sel(m1, k)}, fpp{c, sel(x, Ka + y)};
        for (double u : {0.0, 0.2, 1.0, 3.0})
            for (double r : {0.0, 0.5, 2.0})
                for (double w : {0.05, 0.5, 1.0}) {
                    ++total;
                    const auto a = logdet_B(u, r, w, f, f1, fp, fpp);
                    const auto b = dense::logdet_B(u, r, w, f, f1, fp, fpp);
                    if (a.has_value() != b.has_value()) {
                        ++mism;
                        continue;
                    }
                    if (!a) continue;
                    ++feasible;
                    worst_l = std::max(worst_l, std::abs(*a - *b) / std::max(1.0, std::abs(*b)));
                }
    }
    log(fmt("quantile round trip: max abs error %.3g over dof 2..512 x %zu levels", worst_q, ps.size()));
    log(fmt("log-det: %d evaluations, %d feasible, max rel error %.3g, %d verdict mismatches", total, feasible,
            worst_l, mism));
    const bool ok = worst_q <= 1e-10 && worst_l <= 1e-8 && mism == 0;
    return {ok, fmt("quantile %.2g (<=1e-10), log-det %.2g (<=1e-8), mismatches %d", worst_q, worst_l, mism)};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Verdict c11() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / ("uraflb_accept_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const std::string scn = URAFLB_SCENARIO_DIR;
    const std::vector<std::string> cmds{
        "ka-error-bound --scenario " + scn + "/ka_estimation.scn --samples 200",
        "ka-error-asym --scenario " + scn + "/ka_estimation.scn --samples 200",
        "achievability --scenario " + scn + "/tiny.scn --samples 200",
        "converse --scenario " + scn + "/reduced.scn --samples 200",
        "simulate --scenario " + scn + "/tiny.scn --trials 500",
        "simulate --scenario " + scn + "/ka_estimation.scn --mode estimate --trials 2000",
        "min-ebno --scenario " + scn + "/tiny.scn --samples 100 --side converse",
        "sweep --scenario " + scn + "/ka_estimation.scn --samples 100 --axis L --values 4:16:4 --command ka-error-bound",
    };
    bool ok = true;
    int idx = 0;
    for (const auto& c : cmds) {
        std::string ref;
        for (int w : {1, 2, 4, 1}) {
            const fs::path out = dir / fmt("c%d_w%d.csv", idx, w);
            const std::string line = "URAFLB_THREADS=" + std::to_string(w) + " " + URAFLB_CLI_PATH + " " + c +
                                     " --out " + out.string() + " 2>/dev/null";
            const int st = std::system(line.c_str());
            const int code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
            if (code != 0 && code != 2) {
                ok = false;
                log(fmt("exit %d: %s", code, c.c_str()));
            }
            const std::string csv = slurp(out);
            if (ref.empty()) ref = csv;
            else if (csv != ref || csv.empty()) {
                ok = false;
                log(fmt("output differs at %d workers: %s", w, c.c_str()));
            }
        }
        ++idx;
    }
    fs::remove_all(dir);
    return {ok, fmt("%zu commands, worker counts 1, 2, 4 and a repeat", cmds.size())};
}

}  // namespace

int main() {
    std::set<int> only;
    if (const char* env = std::getenv("URAFLB_ACCEPT")) {
        std::stringstream ss(env);
        std::string tok;
        while (std::getline(ss, tok, ',')) only.insert(std::atoi(tok.c_str()));
    }
    const std::vector<std::pair<int, std::function<Verdict()>>> all{
        {1, c1}, {2, c2}, {3, c3}, {4, c4}, {5, c5}, {6, c6}, {7, c7}, {8, c8}, {9, c9}, {10, c10}, {11, c11}};
    int failed = 0;
    for (const auto& [id, fn] : all) {
        if (!only.empty() && !only.count(id)) continue;
        std::printf("criterion %d\n", id);
        std::fflush(stdout);
        const auto t0 = std::chrono::steady_clock::now();
        const Verdict v = fn();
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %d: %s [%.0f s]\n", v.pass ? "PASS" : "FAIL", id, v.detail.c_str(), sec);
        std::fflush(stdout);
        failed += !v.pass;
    }
    return failed == 0 ? 0 : 1;
}
