#pragma once

#include <cstdint>
#include <cmath>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace pwdice {

/// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Hash a base seed with integer coordinates (sweep point, dataset role, ...)
/// so parallel and serial runs draw from identical streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords) {
    std::uint64_t h = mix_seed(base);
    for (std::uint64_t c : coords) h = mix_seed(h ^ (c + 0x9e3779b97f4a7c15ULL));
    return h;
}

/// Deterministic random source. All draws are hand-rolled on top of the raw
/// mt19937_64 stream so results do not depend on the standard library's
/// distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in {0, ..., n-1}.
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
        return static_cast<int>((static_cast<unsigned __int128>(engine_()) * static_cast<unsigned __int128>(n)) >> 64);
    }

    /// Draw from a discrete distribution given by `probs` (need not be
    /// normalized exactly; the last positive entry absorbs rounding slack).
    int categorical(const Eigen::VectorXd& probs) {
        const double u = uniform() * probs.sum();
        double acc = 0.0;
        int last_positive = 0;
        for (int i = 0; i < probs.size(); ++i) {
            if (probs[i] > 0.0) last_positive = i;
            acc += probs[i];
            if (u < acc) return i;
        }
        return last_positive;
    }

    /// k distinct values from {0, ..., n-1} via partial Fisher-Yates.
    std::vector<int> sample_without_replacement(int n, int k) {
        if (k > n) throw std::invalid_argument("Rng::sample_without_replacement: k > n");
        std::vector<int> pool(n);
        for (int i = 0; i < n; ++i) pool[i] = i;
        for (int i = 0; i < k; ++i) {
            const int j = i + uniform_int(n - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

    double exponential() { return -std::log(1.0 - uniform()); }

    /// Dirichlet(1, ..., 1): normalized Exponential(1) draws.
    Eigen::VectorXd dirichlet_uniform(int k) {
        Eigen::VectorXd v(k);
        for (int i = 0; i < k; ++i) v[i] = exponential();
        return v / v.sum();
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace pwdice
