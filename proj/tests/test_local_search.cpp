#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "mmreg/datagen.hpp"
#include "mmreg/local_search.hpp"

using namespace mmreg;

namespace {

SolverConfig config(Index radius, SearchMode mode = SearchMode::kExact) {
  SolverConfig cfg;
  cfg.radius = radius;
  cfg.mode = mode;
  return cfg;
}

// Independent oracle: best feasible swap by full objective recomputation,
// feasibility by actually performing the swap, ties on (delta, i, j).
std::optional<SwapCandidate> brute_best_swap(const SolverState<double>& st,
                                             const SolveContext<double>& ctx,
                                             Index radius) {
  const Index n = ctx.n();
  const double base = objective(st.perm, ctx);
  std::optional<SwapCandidate> best;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      SparsePermutation moved = st.perm.swap(i, j);
      if (moved.dist_to_identity() > radius) continue;
      double delta = objective(moved, ctx) - base;
      SwapCandidate cand{i, j, delta};
      if (!best || cand.better_than(*best)) best = cand;
    }
  }
  return best;
}

// Random walk within the radius ball.
SparsePermutation random_feasible_perm(Index n, Index radius, CounterRng& rng,
                                       int steps) {
  SparsePermutation p = SparsePermutation::identity(n);
  for (int s = 0; s < steps; ++s) {
    Index i = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(n)));
    Index j = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(n)));
    if (i == j) continue;
    if (p.dist_to_identity_after_swap(i, j) <= radius) p.swap_in_place(i, j);
  }
  return p;
}

ProblemInstance small_instance(Index n, Index d, Index r, double sigma,
                               std::uint64_t seed) {
  return gen_instance(n, d, r, sigma, "random", seed);
}

}  // namespace

TEST_CASE("objective: zero at the true permutation of a noiseless instance") {
  auto inst = small_instance(20, 3, 4, 0.0, 11);
  auto ctx = make_context(inst.y, inst.x, config(20));
  CHECK(objective(inst.truth->perm, ctx) <= 1e-16 * inst.y.squaredNorm());
}

TEST_CASE("objective: equals residual noise energy at P* under noise") {
  auto inst = small_instance(25, 3, 5, 0.3, 12);
  auto ctx = make_context(inst.y, inst.x, config(25));
  double expect = ctx.proj.apply_residual(inst.truth->noise).squaredNorm();
  CHECK(objective(inst.truth->perm, ctx) ==
        doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("objective matches the dense residual oracle") {
  auto inst = small_instance(8, 2, 3, 0.2, 13);
  auto cfg = config(8);
  auto ctx = make_context(inst.y, inst.x, cfg);
  MatXd hd =
      inst.x * (inst.x.transpose() * inst.x).inverse() * inst.x.transpose();
  MatXd rd = MatXd::Identity(8, 8) - hd;
  CounterRng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    auto p = random_feasible_perm(8, 8, rng, 6);
    double dense = (rd * p.apply(inst.y)).squaredNorm();
    CHECK(objective(p, ctx) == doctest::Approx(dense).epsilon(1e-10));
  }
}

TEST_CASE("swap_delta_exact: zero displacement gives zero") {
  VecXd y(6);
  y << 1.0, 2.0, 2.0, 3.0, 4.0, 5.0;
  MatXd x = gen_design(6, 2, 3);
  auto cfg = config(6);
  auto ctx = make_context(y, x, cfg);
  auto st = make_state(ctx, SparsePermutation::identity(6));
  CHECK(swap_delta_exact(st, 1, 2, ctx) == 0.0);  // equal assigned responses
  CHECK_THROWS_AS(swap_delta_exact(st, 1, 1, ctx), IndexOutOfRange);
  CHECK_THROWS_AS(swap_delta_exact(st, 0, 6, ctx), IndexOutOfRange);
}

TEST_CASE("swap_delta_exact matches full recomputation for all pairs") {
  for (std::uint64_t seed : {21ull, 22ull, 23ull}) {
    auto inst = small_instance(8, 2, 3, 0.25, seed);
    auto cfg = config(8);
    auto ctx = make_context(inst.y, inst.x, cfg);
    CounterRng rng(seed);
    auto p = random_feasible_perm(8, 8, rng, 5);
    auto st = make_state(ctx, p);
    double base = objective(p, ctx);
    for (Index i = 0; i < 8; ++i)
      for (Index j = i + 1; j < 8; ++j) {
        double expect = objective(p.swap(i, j), ctx) - base;
        double got = swap_delta_exact(st, i, j, ctx);
        CHECK(got == doctest::Approx(expect).epsilon(1e-9));
      }
  }
}

TEST_CASE("swap_delta_exact: correcting the single mismatch empties the objective") {
  auto inst = small_instance(15, 3, 0, 0.0, 31);
  // plant exactly one transposition
  SparsePermutation pstar = SparsePermutation::identity(15).swap(4, 9);
  VecXd y = pstar.inverse().apply(VecXd(inst.x * inst.truth->beta));
  auto cfg = config(15);
  auto ctx = make_context(y, inst.x, cfg);
  auto st = make_state(ctx, SparsePermutation::identity(15));
  double obj = st.obj;
  CHECK(obj > 0.0);
  CHECK(swap_delta_exact(st, 4, 9, ctx) == doctest::Approx(-obj).epsilon(1e-9));
}

TEST_CASE("best_swap_exact equals the brute-force oracle, tie rule included") {
  int checked = 0;
  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    const Index n = 8 + static_cast<Index>(seed % 5);
    const Index d = 2 + static_cast<Index>(seed % 3);
    const Index radius =
        (seed % 4 == 0) ? n : 2 + 2 * static_cast<Index>(seed % 3);
    double sigma = (seed % 2 == 0) ? 0.0 : 0.3;
    auto inst = small_instance(n, d, std::min<Index>(4, n / 2), sigma, seed);
    auto cfg = config(radius);
    auto ctx = make_context(inst.y, inst.x, cfg);
    CounterRng rng(seed);
    auto p = random_feasible_perm(n, radius, rng, 8);
    auto st = make_state(ctx, p);

    auto got = best_swap_exact(st, ctx, cfg);
    auto expect = brute_best_swap(st, ctx, radius);
    REQUIRE(got.has_value());
    REQUIRE(expect.has_value());
    CHECK(got->i == expect->i);
    CHECK(got->j == expect->j);
    CHECK(got->delta == doctest::Approx(expect->delta).epsilon(1e-8));
    ++checked;
  }
  CHECK(checked == 40);
}

TEST_CASE("best_swap_exact: at an objective-zero state nothing improves") {
  auto inst = small_instance(20, 3, 4, 0.0, 41);
  auto cfg = config(20);
  auto ctx = make_context(inst.y, inst.x, cfg);
  auto st = make_state(ctx, inst.truth->perm);
  auto cand = best_swap_exact(st, ctx, cfg);
  REQUIRE(cand.has_value());
  CHECK(cand->delta >= -1e-12);
}

TEST_CASE("best_swap_exact: feasibility at the radius boundary, exhaustive n=6 R=4") {
  const Index n = 6, radius = 4;
  auto inst = small_instance(n, 2, 3, 0.1, 51);
  auto cfg = config(radius);
  auto ctx = make_context(inst.y, inst.x, cfg);

  std::vector<Index> img(static_cast<std::size_t>(n));
  std::iota(img.begin(), img.end(), Index(0));
  int states = 0;
  do {
    std::map<Index, Index> moved;
    for (Index i = 0; i < n; ++i)
      if (img[static_cast<std::size_t>(i)] != i)
        moved[i] = img[static_cast<std::size_t>(i)];
    if (static_cast<Index>(moved.size()) > radius) continue;
    auto p = SparsePermutation::from_moved(n, std::move(moved));
    auto st = make_state(ctx, p);
    auto cand = best_swap_exact(st, ctx, cfg);
    REQUIRE(cand.has_value());
    CHECK(p.swap(cand->i, cand->j).dist_to_identity() <= radius);
    auto expect = brute_best_swap(st, ctx, radius);
    CHECK(cand->i == expect->i);
    CHECK(cand->j == expect->j);
    ++states;
  } while (std::next_permutation(img.begin(), img.end()));
  CHECK(states > 100);
}

TEST_CASE("step: accepted move decreases the objective and updates the state") {
  auto inst = small_instance(30, 4, 6, 0.0, 61);
  auto cfg = config(30);
  auto ctx = make_context(inst.y, inst.x, cfg);
  auto st = make_state(ctx, SparsePermutation::identity(30));
  double before = st.obj;
  auto rec = step(st, ctx, cfg);
  CHECK(rec.accepted);
  CHECK(rec.obj_after < rec.obj_before);
  CHECK(st.obj < before);
  CHECK(rec.decrease == rec.obj_before - rec.obj_after);
  CHECK(st.perm.dist_to_identity() == 2);
}

TEST_CASE("step: maintained objective stays near the recomputed one") {
  auto inst = small_instance(60, 5, 20, 0.2, 62);
  SolverConfig cfg = config(60);
  cfg.refresh_every = 4;
  auto ctx = make_context(inst.y, inst.x, cfg);
  auto st = make_state(ctx, SparsePermutation::identity(60));
  for (int it = 0; it < 25; ++it) {
    auto rec = step(st, ctx, cfg);
    if (!rec.accepted) break;
    double recomputed = objective(st.perm, ctx);
    CHECK(std::abs(st.obj - recomputed) <= 1e-8 * inst.y.squaredNorm());
    CHECK((st.w - ctx.proj.apply_residual(st.assigned)).norm() <=
          1e-8 * inst.y.norm());
  }
}

TEST_CASE("step: noiseless n=100 run hits numerical zero within 3r iterations") {
  auto inst = small_instance(100, 5, 5, 0.0, 63);
  auto cfg = config(100);
  auto ctx = make_context(inst.y, inst.x, cfg);
  auto st = make_state(ctx, SparsePermutation::identity(100));
  double scale = inst.y.squaredNorm();
  int iters = 0;
  while (iters < 15) {
    auto rec = step(st, ctx, cfg);
    ++iters;
    if (!rec.accepted || st.obj <= 1e-12 * scale) break;
  }
  CHECK(st.obj <= 1e-12 * scale);
  CHECK(iters <= 15);
}

TEST_CASE("solve: matched noiseless data terminates immediately") {
  auto inst = small_instance(25, 4, 0, 0.0, 71);
  auto rep = solve(inst, config(25));
  CHECK(rep.perm.is_identity());
  CHECK((rep.beta - inst.truth->beta).norm() <= 1e-10);
  CHECK(rep.iterations == 1);
  CHECK_FALSE(rep.trace.back().accepted);
}

TEST_CASE("solve: noiseless n=500 r=50 run recovers the permutation exactly") {
  auto inst = gen_instance(500, 10, 50, 0.0, "random", 72);
  auto rep = solve(inst, config(500));
  CHECK(rep.perm.dist(inst.truth->perm) == 0);
  CHECK((rep.beta - inst.truth->beta).norm() <= 1e-8);
  CHECK(rep.objective <= 1e-12 * inst.y.squaredNorm());
  // support detection at termination
  auto shat = rep.perm.supp();
  for (Index i : inst.truth->perm.supp()) CHECK(shat.count(i) == 1);
}

TEST_CASE("solve: trace is monotone and every non-final decrease beats tol") {
  for (std::uint64_t seed : {81ull, 82ull}) {
    auto inst = gen_instance(80, 4, 10, 0.3, "random", seed);
    SolverConfig cfg = config(20);
    cfg.refresh_every = 8;
    auto rep = solve(inst, cfg);
    REQUIRE(rep.trace.size() >= 2);
    for (std::size_t t = 0; t < rep.trace.size(); ++t) {
      const auto& rec = rep.trace[t];
      CHECK(rec.obj_after <= rec.obj_before);
      if (t + 1 < rep.trace.size()) {
        CHECK(rec.decrease > cfg.tol);
        CHECK(rep.trace[t + 1].obj_before <= rec.obj_after);
      }
      CHECK(rec.dist_to_identity <= 20);
    }
    CHECK_FALSE(rep.trace.back().accepted);
  }
}

TEST_CASE("solve: equals exhaustive minimum on tiny noiseless instances") {
  int matches = 0;
  for (std::uint64_t seed = 300; seed < 312; ++seed) {
    const Index n = 6 + static_cast<Index>(seed % 2);
    auto inst = gen_instance(n, 2, 3, 0.0, "random", seed);
    auto cfg = config(n);
    auto ctx = make_context(inst.y, inst.x, cfg);
    auto rep = solve(inst, cfg);

    // brute force over all n! permutations
    std::vector<Index> img(static_cast<std::size_t>(n));
    std::iota(img.begin(), img.end(), Index(0));
    double best = std::numeric_limits<double>::infinity();
    do {
      std::map<Index, Index> moved;
      for (Index i = 0; i < n; ++i)
        if (img[static_cast<std::size_t>(i)] != i)
          moved[i] = img[static_cast<std::size_t>(i)];
      auto p = SparsePermutation::from_moved(n, std::move(moved));
      best = std::min(best, objective(p, ctx));
    } while (std::next_permutation(img.begin(), img.end()));

    if (std::abs(rep.objective - best) <= 1e-10) ++matches;
  }
  CHECK(matches >= 11);  // allow one degenerate draw
}

TEST_CASE("solve: max_iter caps the number of accepted steps") {
  auto inst = gen_instance(60, 4, 12, 0.0, "random", 91);
  SolverConfig cfg = config(60);
  cfg.max_iter = 3;
  auto rep = solve(inst, cfg);
  CHECK(rep.iterations == 3);
  CHECK(rep.trace.back().accepted);
}

TEST_CASE("solve: parallel sweep agrees with single-threaded result") {
  auto inst = gen_instance(120, 5, 15, 0.1, "random", 92);
  SolverConfig one = config(40);
  SolverConfig four = config(40);
  four.threads = 4;
  auto a = solve(inst, one);
  auto b = solve(inst, four);
  CHECK(a.perm == b.perm);
  CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-12));
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("solve: config validation") {
  auto inst = small_instance(10, 2, 2, 0.0, 93);
  SolverConfig cfg = config(1);
  CHECK_THROWS_AS(solve(inst, cfg), BadShape);
  cfg = config(4);
  cfg.tol = -1.0;
  CHECK_THROWS_AS(solve(inst, cfg), BadShape);
}
