#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "numerics.hpp"

namespace uraflb {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

inline CMat hermitize(const CMat& a) { return 0.5 * (a + a.adjoint()); }

inline RVec herm_eigenvalues(const CMat& a) {
    if (a.rows() == 0) return RVec();
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(a), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

// U diag(w) U^H, never materialized as an n x n matrix
struct WeightedGram {
    CMat columns;
    RVec weights;

    int n() const { return static_cast<int>(columns.rows()); }
    int s() const { return static_cast<int>(columns.cols()); }

    static WeightedGram unit(const CMat& c) { return {c, RVec::Ones(c.cols())}; }
};

inline CMat reduced_gram(const WeightedGram& g) {
    const RVec sw = g.weights.cwiseMax(0.0).cwiseSqrt();
    CMat m = g.columns.adjoint() * g.columns;
    return hermitize(sw.asDiagonal() * m * sw.asDiagonal());
}

// ln|a I + b U diag(w) U^H|; nullopt when a pivot is not positive
inline std::optional<double> logdet_shifted(const WeightedGram& g, double a, double b) {
    if (!(a > 0.0)) return std::nullopt;
    double acc = g.n() * std::log(a);
    if (b == 0.0 || g.s() == 0) return acc;
    const RVec mu = herm_eigenvalues(reduced_gram(g));
    for (int i = 0; i < mu.size(); ++i) {
        const double piv = 1.0 + (b / a) * std::max(mu[i], 0.0);
        if (!(piv > 0.0)) return std::nullopt;
        acc += std::log(piv);
    }
    return acc;
}

inline double max_eig(const WeightedGram& g) {
    if (g.s() == 0) return 0.0;
    return std::max(0.0, herm_eigenvalues(reduced_gram(g)).maxCoeff());
}

inline double quadratic_form_inv(const WeightedGram& f, const CMat& y) {
    double tot = y.squaredNorm();
    if (f.s() == 0 || y.size() == 0) return tot;
    const RVec sw = f.weights.cwiseMax(0.0).cwiseSqrt();
    const CMat z = sw.asDiagonal() * (f.columns.adjoint() * y);
    CMat core = reduced_gram(f);
    core.diagonal().array() += 1.0;
    Eigen::LLT<CMat> llt(core);
    tot -= (z.adjoint() * llt.solve(z)).trace().real();
    return tot;
}

// Nonzero eigenvalues of (I + C0 W0 C0^H)^{-1} C1 W1 C1^H, descending
inline std::vector<double> whitened_eigs(const WeightedGram& f1, const WeightedGram& g1) {
    std::vector<double> out;
    int active = 0;
    for (int i = 0; i < g1.s(); ++i) active += g1.weights[i] > 0.0;
    const int m = std::min(g1.n(), active);
    if (m == 0) return out;
    const RVec s1 = g1.weights.cwiseMax(0.0).cwiseSqrt();
    CMat mm = g1.columns.adjoint() * g1.columns;
    if (f1.s() > 0) {
        const RVec s0 = f1.weights.cwiseMax(0.0).cwiseSqrt();
        CMat core = reduced_gram(f1);
        core.diagonal().array() += 1.0;
        const CMat x = s0.asDiagonal() * (f1.columns.adjoint() * g1.columns);
        mm -= x.adjoint() * Eigen::LLT<CMat>(core).solve(x);
    }
    const RVec ev = herm_eigenvalues(s1.asDiagonal() * mm * s1.asDiagonal());
    for (int i = static_cast<int>(ev.size()) - 1; i >= 0 && static_cast<int>(out.size()) < m; --i)
        out.push_back(std::max(ev[i], 0.0));
    return out;
}

// min over s in [0, s_max) of  s*k - L*[w0*ln(1 + s*a0) + sum_j ln(1 + s*a_j)],
// s_max being the first pole. The objective is convex; the root of its derivative
// is found by safeguarded Newton. Returns -inf when the objective is unbounded below.
// `s_io`, when given, carries the minimizer: a previous minimizer for a smaller k is an
// upper bracket for this one, and the new minimizer is written back (0 when none).
inline double line_min_logdet(double k, double L, double w0, double a0, const double* a, int na,
                              double* s_io = nullptr) {
    const double hint = s_io ? *s_io : 0.0;
    if (s_io) *s_io = 0.0;
    if (std::isnan(k)) return 0.0;
    if (k == kInf) return 0.0;
    double smax = kInf;
    if (w0 > 0.0 && a0 < 0.0) smax = -1.0 / a0;
    for (int j = 0; j < na; ++j)
        if (a[j] < 0.0) smax = std::min(smax, -1.0 / a[j]);
    auto d1 = [&](double s) {
        double acc = w0 > 0.0 ? w0 * a0 / (1.0 + s * a0) : 0.0;
        for (int j = 0; j < na; ++j) acc += a[j] / (1.0 + s * a[j]);
        return k - L * acc;
    };
    auto d2 = [&](double s) {
        double acc = 0.0;
        if (w0 > 0.0) {
            const double z = a0 / (1.0 + s * a0);
            acc += w0 * z * z;
        }
        for (int j = 0; j < na; ++j) {
            const double z = a[j] / (1.0 + s * a[j]);
            acc += z * z;
        }
        return L * acc;
    };
    auto val = [&](double s) {
        double acc = w0 > 0.0 ? w0 * std::log1p(s * a0) : 0.0;
        for (int j = 0; j < na; ++j) acc += std::log1p(s * a[j]);
        return s * k - L * acc;
    };
    if (k == -kInf) return -kInf;
    if (d1(0.0) >= 0.0) return 0.0;
    double lo = 0.0, hi;
    if (hint > 0.0 && hint < smax && d1(hint) >= 0.0) {
        hi = hint;
    } else if (smax == kInf) {
        if (k <= 0.0) return -kInf;
        hi = 1.0;
        while (d1(hi) < 0.0) {
            lo = hi;
            hi *= 4.0;
            if (hi > 1e300) return -kInf;
        }
    } else {
        hi = 0.999999 * smax;
        if (d1(hi) < 0.0) return val(hi);
    }
    double s = 0.5 * (lo + hi);
    for (int it = 0; it < 100; ++it) {
        const double g = d1(s);
        if (g < 0.0) lo = s;
        else hi = s;
        if (hi - lo <= 1e-13 * hi) break;
        const double h = d2(s);
        double nx = h > 0.0 ? s - g / h : 0.5 * (lo + hi);
        if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
        if (std::abs(nx - s) <= 1e-13 * s) {
            s = nx;
            break;
        }
        s = nx;
    }
    if (s_io) *s_io = s;
    return std::min(val(s), 0.0);
}

// Coordinates of span(C) in an orthonormal basis: C = Q R with R of size rank x s.
struct ReducedBasis {
    int n = 0;
    CMat R;

    int rank() const { return static_cast<int>(R.rows()); }

    static ReducedBasis from_gram(const CMat& gram, int n, double rel_tol = 1e-11) {
        ReducedBasis rb;
        rb.n = n;
        const int s = static_cast<int>(gram.rows());
        if (s == 0) {
            rb.R.resize(0, 0);
            return rb;
        }
        Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(gram));
        const RVec& g = es.eigenvalues();
        const double gmax = std::max(g.maxCoeff(), 0.0);
        int keep = 0;
        for (int i = 0; i < s; ++i) keep += g[i] > rel_tol * std::max(gmax, 1e-300);
        keep = std::min(keep, n);
        rb.R.resize(keep, s);
        for (int j = 0; j < keep; ++j) {
            const int i = s - 1 - j;
            rb.R.row(j) = std::sqrt(g[i]) * es.eigenvectors().col(i).adjoint();
        }
        return rb;
    }

    // Leading k columns of a Gram whose upper Cholesky factor is `upper`: the factor of a
    // leading principal block is the leading block of the factor.
    static std::optional<ReducedBasis> from_chol_prefix(const CMat& upper, int k, int n) {
        if (k > n || k > upper.rows()) return std::nullopt;
        ReducedBasis rb;
        rb.n = n;
        if (k == 0) {
            rb.R.resize(0, 0);
            return rb;
        }
        const RVec d = upper.diagonal().head(k).real();
        if (!(d.minCoeff() > 1e-7 * d.maxCoeff())) return std::nullopt;
        rb.R = upper.topLeftCorner(k, k).triangularView<Eigen::Upper>();
        return rb;
    }

    // Cheaper factorization when the Gram is nonsingular: gram = R^H R with R = L^H.
    static ReducedBasis from_gram_chol(const CMat& gram, int n) {
        const int s = static_cast<int>(gram.rows());
        if (s == 0 || s > n) return from_gram(gram, n);
        Eigen::LLT<CMat> llt(hermitize(gram));
        if (llt.info() != Eigen::Success) return from_gram(gram, n);
        const RVec d = llt.matrixLLT().diagonal().real();
        if (d.minCoeff() <= 1e-7 * d.maxCoeff()) return from_gram(gram, n);
        ReducedBasis rb;
        rb.n = n;
        rb.R = llt.matrixU();
        return rb;
    }

    // I + R diag(w) R^H, touching only the columns with nonzero weight
    CMat form(const RVec& w) const {
        std::vector<int> nz;
        for (int i = 0; i < w.size(); ++i)
            if (w[i] != 0.0) nz.push_back(i);
        const int k = rank();
        CMat a = CMat::Zero(k, k);
        if (!nz.empty()) {
            CMat rs(k, nz.size());
            RVec ws(nz.size());
            for (std::size_t j = 0; j < nz.size(); ++j) {
                rs.col(j) = R.col(nz[j]);
                ws[j] = w[nz[j]];
            }
            a = hermitize(rs * ws.asDiagonal() * rs.adjoint());
        }
        a.diagonal().array() += 1.0;
        return a;
    }
};

// The matrix (1+r)I - u F''^{-1}F + u F'^{-1}F - r w F1^{-1}F is similar to
// c I + u H1 - r w E3 with c = 1 + r(1-w), where H1 and E3 are Hermitian and of
// low rank. Both are kept compressed to their joint range: with F = L L^H,
// range(H1) lies in L^H F'^{-1} C_D1 and range(E3) in L^H F1^{-1} C_D3, where D1
// and D3 are the columns on which the weights of (F', F'') and (F, F1) differ.
struct BPencil {
    int n = 0;
    CMat h1;
    CMat e3;

    int q() const { return static_cast<int>(h1.rows()); }

    // rb spans the columns; the four weight vectors select F, F1, F', F''.
    static BPencil build(const ReducedBasis& rb, const RVec& wF, const RVec& w1, const RVec& wp, const RVec& wpp) {
        BPencil bp;
        bp.n = rb.n;
        const int k = rb.rank();
        bp.h1.resize(0, 0);
        bp.e3.resize(0, 0);
        if (k == 0) return bp;
        std::vector<int> d1, d3;
        for (int i = 0; i < wF.size(); ++i) {
            if (wp[i] != wpp[i]) d1.push_back(i);
            if (wF[i] != w1[i]) d3.push_back(i);
        }
        if (d1.empty() && d3.empty()) return bp;
        const Eigen::LLT<CMat> lf(rb.form(wF));
        const CMat L = lf.matrixL();
        const Eigen::LLT<CMat> l1(rb.form(w1)), lp(rb.form(wp)), lpp(rb.form(wpp));
        CMat span(k, d1.size() + d3.size());
        int col = 0;
        for (int i : d1) span.col(col++) = rb.R.col(i);
        for (int i : d3) span.col(col++) = rb.R.col(i);
        const int nd1 = static_cast<int>(d1.size());
        if (nd1 > 0) span.leftCols(nd1) = L.adjoint() * lp.solve(span.leftCols(nd1));
        if (col > nd1) span.rightCols(col - nd1) = L.adjoint() * l1.solve(span.rightCols(col - nd1));
        Eigen::ColPivHouseholderQR<CMat> qr(span);
        qr.setThreshold(1e-10);
        const int rk = static_cast<int>(qr.rank());
        if (rk == 0) return bp;
        const CMat U = (qr.householderQ() * CMat::Identity(k, rk)).eval();
        const CMat LU = L * U;
        bp.h1 = hermitize(LU.adjoint() * (lp.solve(LU) - lpp.solve(LU)));
        bp.e3 = hermitize(LU.adjoint() * l1.solve(LU));
        bp.e3.diagonal().array() -= 1.0;
        return bp;
    }

    std::optional<double> logdet(double u, double r, double omega) const {
        const double c = 1.0 + r * (1.0 - omega);
        const double thr = 1e-12 * (1.0 + r);
        if (!(c > thr)) return std::nullopt;
        double acc = n * std::log(c);
        if (q() == 0) return acc;
        CMat m = u * h1 - (r * omega) * e3;
        m.diagonal().array() += c;
        const RVec ev = herm_eigenvalues(m);
        if (!(ev.minCoeff() > thr)) return std::nullopt;
        for (int i = 0; i < ev.size(); ++i) acc += std::log(ev[i] / c);
        return acc;
    }
};

inline std::optional<double> logdet_B(double u, double r, double omega, const WeightedGram& f,
                                      const WeightedGram& f1, const WeightedGram& fp, const WeightedGram& fpp) {
    const int n = f.n();
    const int s = f.s() + f1.s() + fp.s() + fpp.s();
    CMat all(n, s);
    RVec wf = RVec::Zero(s), w1 = RVec::Zero(s), wp = RVec::Zero(s), wpp = RVec::Zero(s);
    int off = 0;
    auto put = [&](const WeightedGram& g, RVec& w) {
        if (g.s() == 0) return;
        all.middleCols(off, g.s()) = g.columns;
        w.segment(off, g.s()) = g.weights;
        off += g.s();
    };
    put(f, wf);
    put(f1, w1);
    put(fp, wp);
    put(fpp, wpp);
    const ReducedBasis rb = ReducedBasis::from_gram(all.adjoint() * all, n);
    return BPencil::build(rb, wf, w1, wp, wpp).logdet(u, r, omega);
}

// Explicit n x n versions, kept for cross-checking the reduced path.
namespace dense {

inline CMat materialize(const WeightedGram& g) {
    CMat a = g.columns * g.weights.asDiagonal() * g.columns.adjoint();
    return hermitize(a);
}

inline CMat identity_plus(const WeightedGram& g) {
    CMat a = materialize(g);
    a.diagonal().array() += 1.0;
    return a;
}

inline std::optional<double> logdet_shifted(const WeightedGram& g, double a, double b) {
    CMat m = b * materialize(g);
    m.diagonal().array() += a;
    Eigen::LLT<CMat> llt(m);
    if (llt.info() != Eigen::Success) return std::nullopt;
    return 2.0 * llt.matrixLLT().diagonal().real().array().log().sum();
}

inline double max_eig(const WeightedGram& g) { return std::max(0.0, herm_eigenvalues(materialize(g)).maxCoeff()); }

inline double quadratic_form_inv(const WeightedGram& f, const CMat& y) {
    return (y.adjoint() * identity_plus(f).llt().solve(y)).trace().real();
}

inline std::vector<double> whitened_eigs(const WeightedGram& f1, const WeightedGram& g1, int m) {
    const CMat prod = identity_plus(f1).llt().solve(materialize(g1));
    Eigen::ComplexEigenSolver<CMat> es(prod, false);
    std::vector<double> ev;
    for (int i = 0; i < es.eigenvalues().size(); ++i) ev.push_back(es.eigenvalues()[i].real());
    std::sort(ev.begin(), ev.end(), std::greater<>());
    ev.resize(std::min<std::size_t>(ev.size(), m));
    return ev;
}

inline std::optional<double> logdet_B(double u, double r, double omega, const WeightedGram& f,
                                      const WeightedGram& f1, const WeightedGram& fp, const WeightedGram& fpp) {
    const int n = f.n();
    const CMat F = identity_plus(f);
    CMat B = (1.0 + r) * CMat::Identity(n, n) - u * identity_plus(fpp).llt().solve(F) +
             u * identity_plus(fp).llt().solve(F) - (r * omega) * identity_plus(f1).llt().solve(F);
    Eigen::ComplexEigenSolver<CMat> es(B, false);
    const double thr = 1e-12 * (1.0 + r);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double ev = es.eigenvalues()[i].real();
        if (!(ev > thr)) return std::nullopt;
        acc += std::log(ev);
    }
    return acc;
}

}  // namespace dense

}  // namespace uraflb
