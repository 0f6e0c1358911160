#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace taxreg {

/// mt19937_64 with hand-pinned output transforms. std::uniform_*
/// distributions are implementation-defined, so every draw here is spelled
/// out to keep artifacts byte-identical across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    /// Uniform in [0,1), 53-bit mantissa.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo,hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0,n). Rejection-free; the modulo bias at n well
    /// below 2^53 is far beneath anything observable here.
    size_t below(size_t n) { return static_cast<size_t>(uniform() * static_cast<double>(n)); }

    /// Standard normal via Box-Muller; the spare draw is cached.
    double gauss() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Fisher-Yates; identical element order for identical seeds.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace taxreg
