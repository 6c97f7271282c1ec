#pragma once
// Deterministic labeled random streams.
//
// A stream is identified by the hash chain of (seed, root label, fork labels...).
// Forking derives a child stream from the parent's identity and the child
// label only; it consumes no draws from the parent, so the set of streams a
// program uses is a pure function of the labels it asks for. All generator
// math is integer-only (xoshiro256++ seeded through SplitMix64), which makes
// the raw draw sequence bit-identical across platforms; bounded ints use
// rejection sampling rather than floating-point scaling for the same reason.

#include <cstdint>
#include <string>
#include <vector>

#include "rmm/common.hpp"

namespace rmm {

// FNV-1a over arbitrary bytes; the stream-identity hash.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull);

class RngStream {
public:
    RngStream(std::uint64_t seed, const std::string& label);

    // Child stream determined by this stream's identity plus child_label.
    // Const: forking never consumes draws.
    RngStream fork(const std::string& child_label) const;

    const std::string& label() const { return label_; }

    std::uint64_t next_u64();

    // Uniform on [0,1), 53-bit resolution.
    double uniform();

    // Uniform on [lo,hi), degenerate lo==hi allowed (returns lo).
    double uniform_real(double lo, double hi);

    // Inclusive integer range, unbiased (Lemire rejection).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    bool bernoulli(double p);

    // Standard normal via Box-Muller; second deviate cached.
    double gaussian();
    double gaussian(double mean, double stddev);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i)));
            std::swap(v[i], v[j]);
        }
    }

    // k distinct values from {0,...,n-1}, returned sorted ascending.
    std::vector<std::size_t> pick_k_of_n(std::size_t k, std::size_t n);

private:
    RngStream(std::uint64_t identity, std::string label, int);  // internal: from identity hash

    std::uint64_t identity_;  // hash chain up to and including this stream's label
    std::string label_;
    std::uint64_t s_[4];      // xoshiro256++ state
    bool have_cached_gauss_ = false;
    double cached_gauss_ = 0.0;

    void seed_state();
};

}  // namespace rmm
