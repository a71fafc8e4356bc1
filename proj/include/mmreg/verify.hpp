#pragma once

#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "mmreg/datagen.hpp"
#include "mmreg/local_search.hpp"
#include "mmreg/metrics.hpp"

// Property suites behind the `verify` subcommand. Each suite re-derives its
// expected answers through an independent route (dense normal equations,
// definitional scans, exhaustive enumeration) and reports counterexample
// seeds on failure.

namespace mmreg::verify {

struct SuiteResult {
  std::string name;
  int passed = 0;
  int total = 0;
  std::vector<std::uint64_t> failing_seeds;

  bool ok() const { return passed == total; }
};

inline void print_result(std::ostream& os, const SuiteResult& r) {
  os << (r.ok() ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.passed << "/"
     << r.total;
  if (!r.failing_seeds.empty()) {
    os << "  counterexample seeds:";
    for (auto s : r.failing_seeds) os << ' ' << s;
  }
  os << '\n';
}

namespace detail {

inline MatXd dense_residual_maker(const MatXd& x) {
  return MatXd::Identity(x.rows(), x.rows()) -
         x * (x.transpose() * x).inverse() * x.transpose();
}

inline SparsePermutation random_full_perm(Index n, CounterRng& rng) {
  std::vector<Index> img(static_cast<std::size_t>(n));
  std::iota(img.begin(), img.end(), Index(0));
  for (std::size_t k = img.size() - 1; k > 0; --k) {
    std::size_t pick = static_cast<std::size_t>(rng.next_below(k + 1));
    std::swap(img[k], img[pick]);
  }
  std::map<Index, Index> moved;
  for (Index i = 0; i < n; ++i)
    if (img[static_cast<std::size_t>(i)] != i)
      moved[i] = img[static_cast<std::size_t>(i)];
  return SparsePermutation::from_moved(n, std::move(moved));
}

}  // namespace detail

/// One-step decrease witness exists for random (y, P, P*) triples.
inline SuiteResult lemma1_suite(int count = 500, std::uint64_t seed_base = 4000) {
  SuiteResult res;
  res.name = "lemma1";
  res.total = count;
  for (int c = 0; c < count; ++c) {
    std::uint64_t seed = seed_base + static_cast<std::uint64_t>(c);
    CounterRng rng(seed);
    Index n = 4 + static_cast<Index>(rng.next_below(7));  // 4..10
    VecXd y(n);
    for (Index i = 0; i < n; ++i) y[i] = rng.next_normal();
    auto p = detail::random_full_perm(n, rng);
    auto pstar = detail::random_full_perm(n, rng);
    try {
      auto wit = one_step_decrease_oracle(y, p, pstar);
      if (wit.vacuous || wit.lhs >= wit.rhs)
        ++res.passed;
      else
        res.failing_seeds.push_back(seed);
    } catch (const WitnessNotFound&) {
      res.failing_seeds.push_back(seed);
    }
  }
  return res;
}

using DeltaFn = std::function<double(const SolverState<double>&, Index, Index,
                                     const SolveContext<double>&)>;

/// best_swap_exact matches a dense-recomputation brute force (tie rule
/// included), and the incremental swap delta matches full recomputation.
/// `delta_fn` exists so a deliberately broken delta can be shown to fail.
inline SuiteResult swap_oracle_suite(int count = 100,
                                     std::uint64_t seed_base = 5000,
                                     DeltaFn delta_fn = {}) {
  if (!delta_fn)
    delta_fn = [](const SolverState<double>& st, Index i, Index j,
                  const SolveContext<double>& ctx) {
      return swap_delta_exact(st, i, j, ctx);
    };
  SuiteResult res;
  res.name = "swap-oracle";
  res.total = count;
  for (int c = 0; c < count; ++c) {
    std::uint64_t seed = seed_base + static_cast<std::uint64_t>(c);
    CounterRng rng(seed);
    Index n = 8 + static_cast<Index>(rng.next_below(5));  // 8..12
    Index d = 2 + static_cast<Index>(rng.next_below(3));  // 2..4
    Index radius = (c % 3 == 0) ? n : 4;
    double sigma = (c % 2 == 0) ? 0.0 : 0.3;
    auto inst = gen_instance(n, d, 3, sigma, "random", seed);
    SolverConfig cfg;
    cfg.radius = radius;
    auto ctx = make_context(inst.y, inst.x, cfg);
    auto st = make_state(ctx, SparsePermutation::identity(n));
    for (int s = 0; s < 6; ++s) {  // wander inside the ball
      Index i = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(n)));
      Index j = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(n)));
      if (i != j && st.perm.dist_to_identity_after_swap(i, j) <= radius) {
        st.perm.swap_in_place(i, j);
        std::swap(st.assigned[i], st.assigned[j]);
      }
    }
    st.coef = ctx.proj.q_factor().transpose() * st.assigned;
    st.w = st.assigned - ctx.proj.q_factor() * st.coef;
    st.obj = st.w.squaredNorm();

    // dense route, fully independent of the QR path
    MatXd rd = detail::dense_residual_maker(inst.x);
    double base = (rd * st.assigned).squaredNorm();
    SwapCandidate expect;
    bool ok = true;
    for (Index i = 0; i < n && ok; ++i)
      for (Index j = i + 1; j < n; ++j) {
        auto moved = st.perm.swap(i, j);
        if (moved.dist_to_identity() > radius) continue;
        double delta = (rd * moved.apply(ctx.y)).squaredNorm() - base;
        SwapCandidate cand{i, j, delta};
        if (cand.better_than(expect)) expect = cand;
        // spot-check the incremental delta on a sample of pairs
        if ((i + j) % 5 == 0 &&
            std::abs(delta_fn(st, i, j, ctx) - delta) >
                1e-8 * std::max(1.0, std::abs(delta))) {
          ok = false;
          break;
        }
      }
    auto got = best_swap_exact(st, ctx, cfg);
    ok = ok && got.has_value() && got->i == expect.i && got->j == expect.j &&
         std::abs(got->delta - expect.delta) <=
             1e-8 * std::max(1.0, std::abs(expect.delta));
    if (ok)
      ++res.passed;
    else
      res.failing_seeds.push_back(seed);
  }
  return res;
}

/// Staircase membership, argmin, and bisection windows against O(n^2) scans.
inline SuiteResult staircase_suite(int count = 100,
                                   std::uint64_t seed_base = 6000) {
  SuiteResult res;
  res.name = "staircase";
  res.total = count;
  for (int c = 0; c < count; ++c) {
    std::uint64_t seed = seed_base + static_cast<std::uint64_t>(c);
    CounterRng rng(seed);
    Index n = 20 + static_cast<Index>(rng.next_below(481));  // 20..500
    VecXd y(n), v(n);
    bool grid = c % 4 == 0;  // some sets with exact ties
    for (Index i = 0; i < n; ++i) {
      y[i] = grid ? std::floor(rng.next_double() * 8.0) : rng.next_normal();
      v[i] = grid ? std::floor(rng.next_double() * 8.0) : rng.next_normal();
    }
    auto idx = build_staircases(y, v);

    bool ok = true;
    std::set<Index> lt(idx.s_lt.begin(), idx.s_lt.end());
    std::set<Index> rb(idx.s_rb.begin(), idx.s_rb.end());
    for (Index i = 0; i < n && ok; ++i) {
      bool is_lt = true, is_rb = true;
      for (Index j = 0; j < n; ++j) {
        if (y[j] == y[i] && v[j] == v[i]) continue;
        if (y[j] <= y[i] && v[j] >= v[i]) is_lt = false;
        if (y[j] >= y[i] && v[j] <= v[i]) is_rb = false;
      }
      if (is_lt != (lt.count(i) == 1) || is_rb != (rb.count(i) == 1))
        ok = false;
    }

    // argmin against the full scan
    auto got = staircase_argmin(idx, y, v);
    double expect = 0.0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j)
        expect = std::min(expect, (y[i] - y[j]) * (v[i] - v[j]));
    ok = ok && std::abs(got.value - expect) <= 1e-12 * std::max(1.0, std::abs(expect));

    // windows against the linear scan
    for (Index m : idx.s_lt) {
      if (!ok) break;
      auto [lo, hi] = chain_window(idx, y[m], v[m]);
      for (std::ptrdiff_t t = 0;
           t < static_cast<std::ptrdiff_t>(idx.s_rb.size()); ++t) {
        double f = (y[m] - idx.rb_y[t]) * (v[m] - idx.rb_v[t]);
        if ((t >= lo && t <= hi) != (f <= 0.0)) {
          ok = false;
          break;
        }
      }
    }
    if (ok)
      ++res.passed;
    else
      res.failing_seeds.push_back(seed);
  }
  return res;
}

/// Local search reaches the exhaustive optimum on tiny noiseless instances.
/// Rare degenerate draws are tolerated by the caller via the pass count.
inline SuiteResult exhaustive_suite(int count = 50,
                                    std::uint64_t seed_base = 7000) {
  SuiteResult res;
  res.name = "exhaustive";
  res.total = count;
  for (int c = 0; c < count; ++c) {
    std::uint64_t seed = seed_base + static_cast<std::uint64_t>(c);
    CounterRng rng(seed);
    Index n = 5 + static_cast<Index>(rng.next_below(3));  // 5..7
    auto inst = gen_instance(n, 2, 3, 0.0, "random", seed);
    SolverConfig cfg;
    cfg.radius = n;
    auto rep = solve(inst, cfg);
    auto [opt_perm, opt_obj] = exhaustive_solve(inst, n);
    (void)opt_perm;
    if (rep.objective <= opt_obj + 1e-10)
      ++res.passed;
    else
      res.failing_seeds.push_back(seed);
  }
  return res;
}

}  // namespace mmreg::verify
