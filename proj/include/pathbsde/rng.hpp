#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace pathbsde {

namespace detail {

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

/// Philox4x32-10 block cipher: 128-bit counter, 64-bit key -> 128 random bits.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo32(M0, ctr[0], hi0, lo0);
        mulhilo32(M1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += W0;
        key[1] += W1;
    }
    return ctr;
}

/// Inverse standard-normal CDF (Acklam's rational approximation plus one
/// Halley refinement); max relative error below 1e-13 on (0,1).
inline double inverse_normal_cdf(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double plow = 0.02425;

    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley step against erfc for full double accuracy.
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

}  // namespace detail

/// Counter-based random substream keyed by (seed, path index, step). Draws
/// within a substream are indexed by an internal counter, so the value of the
/// n-th draw depends only on (seed, path, step, n) — never on scheduling.
class SubstreamRng {
public:
    SubstreamRng(std::uint64_t seed, std::uint64_t path, std::uint64_t step)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          base_{0, static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(path),
                static_cast<std::uint32_t>(path >> 32)} {
        if (step >> 32) throw std::invalid_argument("step index exceeds 2^32");
    }

    std::uint64_t next_u64() {
        if (avail_ == 0) refill();
        const std::uint32_t hi = buf_[--avail_];
        const std::uint32_t lo = buf_[--avail_];
        return (static_cast<std::uint64_t>(hi) << 32) | lo;
    }

    /// Uniform on the open interval (0,1).
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double next_normal() { return detail::inverse_normal_cdf(next_uniform()); }

    /// Exact Poisson draw by sequential inversion; cost is O(mean).
    std::uint32_t next_poisson(double mean) {
        if (!(mean >= 0.0)) throw std::invalid_argument("poisson mean must be >= 0");
        if (mean == 0.0) return 0;
        double u = next_uniform();
        double p = std::exp(-mean);
        double cdf = p;
        std::uint32_t k = 0;
        while (u > cdf) {
            ++k;
            p *= mean / k;
            cdf += p;
            if (k > 1000000) throw std::runtime_error("poisson draw did not terminate");
        }
        return k;
    }

    /// Index in [0,n) with probability weights[i]/total.
    std::uint32_t next_weighted(const double* weights, std::uint32_t n, double total) {
        const double u = next_uniform() * total;
        double acc = 0.0;
        for (std::uint32_t i = 0; i + 1 < n; ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return n - 1;
    }

private:
    void refill() {
        // Counter layout (block, step, path_lo, path_hi) is a bijection of
        // the substream coordinates, so no two draws share a Philox input.
        std::array<std::uint32_t, 4> ctr = base_;
        ctr[0] = block_++;
        buf_ = detail::philox4x32(ctr, key_);
        avail_ = 4;
    }

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> base_;
    std::array<std::uint32_t, 4> buf_{};
    std::uint32_t block_ = 0;
    int avail_ = 0;
};

/// Stable 64-bit mix for deriving child seeds (nested Monte Carlo).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace pathbsde
