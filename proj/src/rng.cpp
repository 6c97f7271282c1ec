#include "rmm/rng.hpp"

#include <algorithm>
#include <cmath>

namespace rmm {

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

std::uint64_t hash_u64(std::uint64_t h, std::uint64_t v) {
    unsigned char buf[8];  // explicit little-endian layout keeps the hash platform-stable
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    return fnv1a64(buf, 8, h);
}

std::uint64_t hash_label(std::uint64_t h, const std::string& s) {
    h = fnv1a64(s.data(), s.size(), h);
    return hash_u64(h, s.size());  // length-delimit so "ab"+"c" != "a"+"bc"
}

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, const std::string& label) : label_(label) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    h = hash_u64(h, seed);
    h = hash_label(h, label);
    identity_ = h;
    seed_state();
}

RngStream::RngStream(std::uint64_t identity, std::string label, int)
    : identity_(identity), label_(std::move(label)) {
    seed_state();
}

RngStream RngStream::fork(const std::string& child_label) const {
    std::uint64_t h = hash_u64(identity_, 0x666f726bull);  // fork domain separator
    h = hash_label(h, child_label);
    return RngStream(h, child_label, 0);
}

void RngStream::seed_state() {
    std::uint64_t x = identity_;
    for (int i = 0; i < 4; ++i) s_[i] = splitmix64(x);
    // All-zero state would be degenerate for xoshiro; splitmix output of any
    // seed never yields four zeros, but guard anyway.
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

std::uint64_t RngStream::next_u64() {
    std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_real(double lo, double hi) {
    if (!(lo <= hi)) throw ConfigError("uniform_real: lo > hi");
    return lo + (hi - lo) * uniform();
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw ConfigError("uniform_int: lo > hi");
    std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit span
    std::uint64_t threshold = (0 - range) % range;
    for (;;) {
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * range;
        if (static_cast<std::uint64_t>(m) >= threshold) {
            return lo + static_cast<std::int64_t>(static_cast<std::uint64_t>(m >> 64));
        }
    }
}

bool RngStream::bernoulli(double p) {
    if (p < 0.0 || p > 1.0) throw ConfigError("bernoulli: p outside [0,1]");
    return uniform() < p;
}

double RngStream::gaussian() {
    if (have_cached_gauss_) {
        have_cached_gauss_ = false;
        return cached_gauss_;
    }
    // u1 in (0,1] so log is finite.
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_gauss_ = r * std::sin(theta);
    have_cached_gauss_ = true;
    return r * std::cos(theta);
}

double RngStream::gaussian(double mean, double stddev) {
    return mean + stddev * gaussian();
}

std::vector<std::size_t> RngStream::pick_k_of_n(std::size_t k, std::size_t n) {
    if (k > n) throw ConfigError("pick_k_of_n: k exceeds n");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = static_cast<std::size_t>(
            uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n) - 1));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace rmm
