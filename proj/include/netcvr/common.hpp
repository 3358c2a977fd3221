#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace netcvr {

// Feature layout: 22 hashed categorical fields per click.
// Fields [0,8) are user fields, [8,14) item fields, [14,22) context fields.
inline constexpr int kNumFields = 22;
inline constexpr int kUserFieldBegin = 0;
inline constexpr int kUserFieldCount = 8;
inline constexpr int kItemFieldBegin = 8;
inline constexpr int kItemFieldCount = 6;
inline constexpr int kContextFieldBegin = 14;
inline constexpr int kContextFieldCount = 8;

using FeatureVec = std::array<std::uint32_t, kNumFields>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("logit: p must be in (0,1)");
  return std::log(p / (1.0 - p));
}

// -log(sigmoid(d)) without overflow for large |d|.
inline double log1p_exp_neg(double d) {
  return d > 0.0 ? std::log1p(std::exp(-d)) : -d + std::log1p(std::exp(d));
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stateless mix, used for deterministic per-entity feature tables.
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t s = a * 0x9e3779b97f4a7c15ULL + b * 0xc2b2ae3d27d4eb4fULL + c + 0x165667b19e3779f9ULL;
  return splitmix64(s);
}

// mt19937_64 is bit-exact across platforms; the distribution transforms are
// hand-rolled so generated streams are too (std:: distributions are not
// specified bit-exactly).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  // Uniform integer in [0,n). Multiply-shift, slight modulo bias is
  // irrelevant at 64 input bits.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(gen_()) * n) >> 64);
  }

  // Exponential with the given rate, strictly positive.
  double exponential(double rate) {
    double u = uniform01();
    double h = -std::log1p(-u) / rate;
    return h > 0.0 ? h : std::numeric_limits<double>::min();
  }

  // Weibull with scale 1/rate and the given shape (shape 1 == exponential).
  double weibull(double rate, double shape) {
    double u = uniform01();
    double h = std::pow(-std::log1p(-u), 1.0 / shape) / rate;
    return h > 0.0 ? h : std::numeric_limits<double>::min();
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Box-Muller; one fresh pair per call keeps the stream stateless.
    double u1 = std::max(uniform01(), 0x1.0p-60);
    double u2 = uniform01();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

 private:
  std::mt19937_64 gen_;
};

// Fixed-block pairwise sum: deterministic for a given input regardless of
// the caller's threading, and far more accurate than naive accumulation.
template <class T>
double pairwise_sum(std::span<const T> x) {
  const std::size_t n = x.size();
  if (n == 0) return 0.0;
  if (n <= 64) {
    double s = 0.0;
    for (const T& v : x) s += static_cast<double>(v);
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(x.subspan(0, half)) + pairwise_sum(x.subspan(half));
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Population standard deviation.
inline double stddev(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("stddev of empty set");
  double mean = pairwise_sum(v) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace netcvr
