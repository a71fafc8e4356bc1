#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mmreg/common.hpp"
#include "mmreg/permutation.hpp"

namespace mmreg {

/// Counter-based pseudo-random stream (version 1).
///
/// State advances as a SplitMix64 counter: s_{k+1} = s_k + 0x9E3779B97F4A7C15,
/// output = fmix64(s_{k+1}). The initial state is fmix64(seed ^ stream-tag),
/// so the same (seed, tag) pair always reproduces the same stream and distinct
/// tags give decorrelated streams. Uniform doubles take the top 53 bits;
/// normals use the Marsaglia polar transform. The algorithm is fixed: a given
/// (seed, tag) yields identical draws on every build.
class CounterRng {
 public:
  enum Stream : std::uint64_t {
    kDesign = 0x1001,
    kBeta = 0x1002,
    kPlacement = 0x1003,
    kScramble = 0x1004,
    kNoise = 0x1005,
    kGeneric = 0x1111,
  };

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream_tag = kGeneric)
      : state_(fmix64(seed ^ (stream_tag * 0xBF58476D1CE4E5B9ULL))) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return fmix64(state_);
  }

  /// Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound) by rejection (bound > 0).
  std::uint64_t next_below(std::uint64_t bound) {
    std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  /// Standard normal via the polar method.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

 private:
  static std::uint64_t fmix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Ground truth attached to a synthetic instance.
struct InstanceTruth {
  SparsePermutation perm;   // P*
  VecXd beta;               // beta*
  VecXd noise;              // eps
  Index r = 0;              // intended mismatch count
  double sigma = 0.0;
  std::string scheme;       // "random" | "equispaced"
  std::uint64_t seed = 0;
};

struct ProblemInstance {
  VecXd y;
  MatXd x;
  std::optional<InstanceTruth> truth;

  Index n() const { return x.rows(); }
  Index d() const { return x.cols(); }
};

/// n x d matrix of iid standard normals, deterministic in (n, d, seed).
inline MatXd gen_design(Index n, Index d, std::uint64_t seed) {
  if (d < 1 || n <= d) throw BadShape("gen_design: need n > d >= 1");
  CounterRng rng(seed, CounterRng::kDesign);
  MatXd x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = rng.next_normal();
  return x;
}

/// Uniform draw from the unit sphere in R^d.
inline VecXd gen_beta(Index d, std::uint64_t seed) {
  if (d < 1) throw BadShape("gen_beta: need d >= 1");
  CounterRng rng(seed, CounterRng::kBeta);
  VecXd b(d);
  double norm2;
  do {
    for (Index i = 0; i < d; ++i) b[i] = rng.next_normal();
    norm2 = b.squaredNorm();
  } while (norm2 == 0.0);
  return b / std::sqrt(norm2);
}

/// Uniform r-subset of {0,...,n-1}, returned sorted.
inline std::vector<Index> place_mismatch_random(Index n, Index r,
                                                std::uint64_t seed) {
  if (r < 0 || r > n) throw BadShape("place_mismatch_random: need 0 <= r <= n");
  CounterRng rng(seed, CounterRng::kPlacement);
  std::vector<Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Index(0));
  // partial Fisher-Yates: the first r slots are a uniform subset
  for (Index k = 0; k < r; ++k) {
    Index pick = k + static_cast<Index>(rng.next_below(
                         static_cast<std::uint64_t>(n - k)));
    std::swap(pool[k], pool[pick]);
  }
  std::vector<Index> out(pool.begin(), pool.begin() + r);
  std::sort(out.begin(), out.end());
  return out;
}

/// Indices chosen greedily against r equi-spaced targets spanning [min y, max y]:
/// the first index minimizes |y_i - a_1| over the whole sorted sequence, and
/// each later one minimizes |y_i - a_s| strictly to the right of its
/// predecessor. Deterministic in (y, r); returns original (unsorted) indices.
/// If the remaining window empties before r picks, returns the indices found
/// so far (shortfall reported through the output size).
inline std::vector<Index> place_mismatch_equispaced(const VecXd& y, Index r) {
  const Index n = y.size();
  if (r > n) throw BadShape("place_mismatch_equispaced: r > n");
  if (r < 2) throw BadShape("place_mismatch_equispaced: need r >= 2");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    return y[a] < y[b] || (y[a] == y[b] && a < b);
  });

  std::vector<double> ys(static_cast<std::size_t>(n));
  for (Index t = 0; t < n; ++t) ys[static_cast<std::size_t>(t)] = y[order[t]];

  const double lo = ys.front();
  const double hi = ys.back();
  std::vector<Index> picked;  // positions in sorted order
  Index window_lo = 0;
  for (Index s = 0; s < r; ++s) {
    if (window_lo >= n) break;  // window exhausted, report shortfall
    double target = lo + (hi - lo) * static_cast<double>(s) /
                             static_cast<double>(r - 1);
    // nearest value to the target inside [window_lo, n); the argmin over the
    // window is either the first value >= target or the first element of the
    // equal-value run just below it, ties resolved to the smaller position
    auto begin = ys.begin() + window_lo;
    auto it = std::lower_bound(begin, ys.end(), target);
    Index best;
    if (it == ys.end()) {
      best = static_cast<Index>(std::lower_bound(begin, ys.end(), ys.back()) -
                                ys.begin());
    } else if (it == begin) {
      best = window_lo;
    } else {
      Index right = static_cast<Index>(it - ys.begin());
      Index left = static_cast<Index>(std::lower_bound(begin, it, *(it - 1)) -
                                      ys.begin());
      double err_left = std::abs(ys[static_cast<std::size_t>(left)] - target);
      double err_right = std::abs(ys[static_cast<std::size_t>(right)] - target);
      best = err_left <= err_right ? left : right;
    }
    picked.push_back(best);
    window_lo = best + 1;
  }

  std::vector<Index> out;
  out.reserve(picked.size());
  for (Index pos : picked) out.push_back(order[pos]);
  std::sort(out.begin(), out.end());
  return out;
}

/// Uniform random permutation of the given coordinates, identity elsewhere.
inline SparsePermutation scramble(Index n, const std::vector<Index>& indices,
                                  std::uint64_t seed) {
  if (indices.size() < 2) throw BadShape("scramble: need at least 2 indices");
  for (Index i : indices)
    if (i < 0 || i >= n) throw IndexOutOfRange("scramble: index out of range");
  CounterRng rng(seed, CounterRng::kScramble);
  std::vector<Index> image(indices);
  for (std::size_t k = image.size() - 1; k > 0; --k) {
    std::size_t pick =
        static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(k + 1)));
    std::swap(image[k], image[pick]);
  }
  std::map<Index, Index> moved;
  for (std::size_t k = 0; k < indices.size(); ++k)
    if (indices[k] != image[k]) moved[indices[k]] = image[k];
  return SparsePermutation::from_moved(n, std::move(moved));
}

/// Full synthetic instance: X iid N(0,1), beta* on the unit sphere, eps iid
/// N(0, sigma^2), P* from the requested placement scheme, and
/// y := (P*)^{-1} (X beta* + eps) so that P* y = X beta* + eps holds exactly.
inline ProblemInstance gen_instance(Index n, Index d, Index r, double sigma,
                                    const std::string& scheme,
                                    std::uint64_t seed) {
  if (r < 0 || r > n) throw BadShape("gen_instance: need 0 <= r <= n");
  if (sigma < 0.0) throw BadShape("gen_instance: sigma < 0");
  if (scheme != "random" && scheme != "equispaced")
    throw BadShape("gen_instance: unknown scheme '" + scheme + "'");

  ProblemInstance inst;
  inst.x = gen_design(n, d, seed);
  VecXd beta = gen_beta(d, seed);
  CounterRng noise_rng(seed, CounterRng::kNoise);
  VecXd eps = VecXd::Zero(n);
  if (sigma > 0.0)
    for (Index i = 0; i < n; ++i) eps[i] = sigma * noise_rng.next_normal();

  VecXd clean = inst.x * beta + eps;

  SparsePermutation pstar(n);
  if (r >= 2) {
    std::vector<Index> coords =
        scheme == "random" ? place_mismatch_random(n, r, seed)
                           : place_mismatch_equispaced(clean, r);
    if (coords.size() >= 2)
      pstar = scramble(n, coords, seed);
  }

  inst.y = pstar.inverse().apply(clean);
  inst.truth = InstanceTruth{pstar, std::move(beta), std::move(eps),
                             r,     sigma,           scheme,  seed};
  return inst;
}

}  // namespace mmreg
