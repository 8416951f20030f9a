#pragma once

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "imae/common.hpp"

namespace imae {

/// mt19937_64 engine with hand-rolled distributions. The standard library
/// distributions are implementation-defined, so every draw here goes through
/// our own transforms to keep runs reproducible and checkpointable.
class Rng {
public:
    explicit Rng(u64 seed) : eng_(seed) {}

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; the sine half is discarded so the
    /// engine state never carries a cached value across checkpoints.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    /// Truncated normal: resample until |z| <= 2 (ViT init convention).
    double trunc_normal(double std) {
        double z = normal();
        while (std::fabs(z) > 2.0) z = normal();
        return std * z;
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang, boosted for shape < 1.
    double gamma(double shape) {
        if (shape < 1.0) {
            double u = uniform();
            while (u <= 0.0) u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double t = 1.0 + c * x;
            if (t <= 0.0) continue;
            double v = t * t * t;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Beta(a, b). Beta(1,1) short-circuits to a single uniform draw.
    double beta(double a, double b) {
        if (a <= 0.0 || b <= 0.0) throw ConfigError("beta parameters must be positive");
        if (a == 1.0 && b == 1.0) return uniform();
        double ga = gamma(a);
        double gb = gamma(b);
        double s = ga + gb;
        return s > 0.0 ? ga / s : 0.5;
    }

    /// Unbiased integer in [0, n).
    i64 randint(i64 n) {
        if (n <= 0) throw ConfigError("randint needs n > 0");
        const u64 un = static_cast<u64>(n);
        const u64 limit = UINT64_MAX - UINT64_MAX % un;
        u64 x = eng_();
        while (x >= limit) x = eng_();
        return static_cast<i64>(x % un);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (i64 i = static_cast<i64>(v.size()) - 1; i > 0; --i) {
            i64 j = randint(i + 1);
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
        }
    }

    /// Random permutation of [0, n).
    std::vector<i64> permutation(i64 n) {
        std::vector<i64> p(static_cast<size_t>(n));
        for (i64 i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
        shuffle(p);
        return p;
    }

    std::string save_state() const {
        std::ostringstream os;
        os << eng_;
        return os.str();
    }

    void load_state(const std::string& s) {
        std::istringstream is(s);
        is >> eng_;
        if (is.fail()) throw DataError("corrupt rng state");
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace imae
