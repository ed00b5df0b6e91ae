#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "lowrank_linalg.hpp"
#include "model.hpp"

namespace uraflb {

// Reproducibility coordinates: every draw is a pure function of these plus a column index.
struct RngCoords {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::uint64_t sample = 0;
};

// Stream identifiers so that different consumers never share draws.
namespace streams {
inline constexpr std::uint64_t codebook = 1;
inline constexpr std::uint64_t multiplicity = 2;
inline constexpr std::uint64_t channel = 3;
inline constexpr std::uint64_t noise = 4;
inline constexpr std::uint64_t activity = 5;
inline constexpr std::uint64_t messages = 6;
inline constexpr std::uint64_t fano = 7;
}  // namespace streams

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_engine(const RngCoords& c, std::uint64_t column) {
    std::uint64_t h = mix64(c.seed);
    h = mix64(h ^ c.stream);
    h = mix64(h ^ c.sample);
    h = mix64(h ^ column);
    return std::mt19937_64(h);
}

// CN(0,1) entries
inline void fill_cn(std::mt19937_64& eng, cplx* out, int count) {
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
    for (int i = 0; i < count; ++i) {
        const double re = nd(eng);
        const double im = nd(eng);
        out[i] = cplx(re, im);
    }
}

// Columns first_column .. first_column+count-1 of the random codebook, at power `power`.
inline CMat sample_columns(Ensemble e, double power, int n, int count, const RngCoords& c, int first_column = 0) {
    CMat out(n, count);
    const double sp = std::sqrt(power);
    for (int j = 0; j < count; ++j) {
        auto eng = make_engine(c, static_cast<std::uint64_t>(first_column + j));
        fill_cn(eng, out.col(j).data(), n);
        if (e == Ensemble::spherical) out.col(j) *= std::sqrt(static_cast<double>(n)) / out.col(j).norm();
        out.col(j) *= sp;
    }
    return out;
}

// ln P[no two of k i.i.d. uniform draws from 2^J coincide]
inline double log_no_collision(int k, int J, int already = 0) {
    const double inv = std::ldexp(1.0, -J);
    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
        const double frac = (already + i) * inv;
        if (frac >= 1.0) return -kInf;
        acc += std::log1p(-frac);
    }
    return acc;
}

// Multiplicities of the distinct messages picked by Ka users drawing i.i.d. from [2^J].
// The collision event is drawn first; given a collision the sequence is sampled
// conditionally, one user at a time.
inline std::vector<int> sample_multiplicities(int Ka, int J, const RngCoords& c) {
    std::vector<int> mult;
    if (Ka <= 0) return mult;
    const double lnone = log_no_collision(Ka, J);
    const double pcoll = -std::expm1(lnone);
    if (J >= 30 && pcoll < 1e-24) return std::vector<int>(Ka, 1);
    auto eng = make_engine(c, 0);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    if (ud(eng) >= pcoll) return std::vector<int>(Ka, 1);

    const double inv = std::ldexp(1.0, -J);
    bool collided = false;
    for (int step = 0; step < Ka; ++step) {
        const int d = static_cast<int>(mult.size());
        const int rem = Ka - step;
        const double p_new_raw = 1.0 - d * inv;
        double p_new = p_new_raw;
        if (!collided) {
            const double den = -std::expm1(log_no_collision(rem, J, d));
            const double num = rem > 1 ? -std::expm1(log_no_collision(rem - 1, J, d + 1)) : 0.0;
            p_new = den > 0.0 ? p_new_raw * num / den : 0.0;
        }
        if (d == 0 || ud(eng) < p_new) {
            mult.push_back(1);
        } else {
            std::uniform_int_distribution<int> pick(0, d - 1);
            ++mult[pick(eng)];
            collided = true;
        }
    }
    return mult;
}

}  // namespace uraflb
