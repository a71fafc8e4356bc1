#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "mmreg/datagen.hpp"
#include "mmreg/local_search.hpp"

using namespace mmreg;

namespace {

// O(n^2) definitional scans: a point is left-top (right-bottom) when no other
// point with different coordinates sits in its weakly dominating quadrant.
std::set<Index> lt_definitional(const VecXd& y, const VecXd& v) {
  std::set<Index> out;
  for (Index i = 0; i < y.size(); ++i) {
    bool ok = true;
    for (Index j = 0; j < y.size() && ok; ++j) {
      if (y[j] == y[i] && v[j] == v[i]) continue;
      if (y[j] <= y[i] && v[j] >= v[i]) ok = false;
    }
    if (ok) out.insert(i);
  }
  return out;
}

std::set<Index> rb_definitional(const VecXd& y, const VecXd& v) {
  std::set<Index> out;
  for (Index i = 0; i < y.size(); ++i) {
    bool ok = true;
    for (Index j = 0; j < y.size() && ok; ++j) {
      if (y[j] == y[i] && v[j] == v[i]) continue;
      if (y[j] >= y[i] && v[j] <= v[i]) ok = false;
    }
    if (ok) out.insert(i);
  }
  return out;
}

// Full O(n^2) scan of min (y_i - y_j)(v_i - v_j) with the same canonical
// (value, min index, max index) tie rule; the diagonal contributes 0.
StaircaseArgmin full_scan_argmin(const VecXd& y, const VecXd& v) {
  StaircaseArgmin best{0, 0, 0.0};
  bool found = false;
  for (Index i = 0; i < y.size(); ++i)
    for (Index j = i + 1; j < y.size(); ++j) {
      double f = (y[i] - y[j]) * (v[i] - v[j]);
      if (!found || f < best.value ||
          (f == best.value && (i < best.i || (i == best.i && j < best.j)))) {
        best = {i, j, f};
        found = true;
      }
    }
  if (!found || best.value > 0.0) return {0, 0, 0.0};
  return best;
}

VecXd random_vec(Index n, CounterRng& rng) {
  VecXd out(n);
  for (Index i = 0; i < n; ++i) out[i] = rng.next_normal();
  return out;
}

SolverConfig config(Index radius, SearchMode mode) {
  SolverConfig cfg;
  cfg.radius = radius;
  cfg.mode = mode;
  return cfg;
}

}  // namespace

TEST_CASE("build_staircases: two anti-ordered points") {
  VecXd y(2), v(2);
  y << 0.0, 1.0;
  v << 1.0, 0.0;
  auto idx = build_staircases(y, v);
  CHECK(idx.s_lt == std::vector<Index>{0});
  CHECK(idx.s_rb == std::vector<Index>{1});
}

TEST_CASE("build_staircases: increasing diagonal keeps every point in both sets") {
  VecXd y(3), v(3);
  y << 1.0, 2.0, 3.0;
  v << 1.0, 2.0, 3.0;
  auto idx = build_staircases(y, v);
  CHECK(idx.s_lt == std::vector<Index>{0, 1, 2});
  CHECK(idx.s_rb == std::vector<Index>{0, 1, 2});
}

TEST_CASE("build_staircases matches the definitional scan on random sets") {
  CounterRng rng(1001);
  for (int rep = 0; rep < 50; ++rep) {
    const Index n = 50;
    VecXd y = random_vec(n, rng);
    VecXd v = random_vec(n, rng);
    auto idx = build_staircases(y, v);
    std::set<Index> lt(idx.s_lt.begin(), idx.s_lt.end());
    std::set<Index> rb(idx.s_rb.begin(), idx.s_rb.end());
    CHECK(lt == lt_definitional(y, v));
    CHECK(rb == rb_definitional(y, v));
  }
}

TEST_CASE("build_staircases handles tied coordinates like the definition") {
  CounterRng rng(1002);
  for (int rep = 0; rep < 40; ++rep) {
    const Index n = 30;
    VecXd y(n), v(n);
    for (Index i = 0; i < n; ++i) {
      // coarse grid forces plenty of exact ties and duplicates
      y[i] = std::floor(rng.next_double() * 5.0);
      v[i] = std::floor(rng.next_double() * 5.0);
    }
    auto idx = build_staircases(y, v);
    std::set<Index> lt(idx.s_lt.begin(), idx.s_lt.end());
    std::set<Index> rb(idx.s_rb.begin(), idx.s_rb.end());
    CHECK(lt == lt_definitional(y, v));
    CHECK(rb == rb_definitional(y, v));
  }
}

TEST_CASE("right-bottom chain is ordered in both coordinates") {
  CounterRng rng(1003);
  for (int rep = 0; rep < 20; ++rep) {
    VecXd y = random_vec(80, rng);
    VecXd v = random_vec(80, rng);
    auto idx = build_staircases(y, v);
    for (std::size_t t = 1; t < idx.s_rb.size(); ++t) {
      CHECK(idx.rb_y[t - 1] <= idx.rb_y[t]);
      CHECK(idx.rb_v[t - 1] <= idx.rb_v[t]);
    }
  }
}

TEST_CASE("chain_window matches the linear scan of non-positive products") {
  CounterRng rng(1004);
  for (int rep = 0; rep < 30; ++rep) {
    VecXd y = random_vec(60, rng);
    VecXd v = random_vec(60, rng);
    auto idx = build_staircases(y, v);
    for (Index m : idx.s_lt) {
      auto [lo, hi] = chain_window(idx, y[m], v[m]);
      for (std::ptrdiff_t t = 0;
           t < static_cast<std::ptrdiff_t>(idx.s_rb.size()); ++t) {
        double f = (y[m] - idx.rb_y[t]) * (v[m] - idx.rb_v[t]);
        bool inside = t >= lo && t <= hi;
        CHECK(inside == (f <= 0.0));
      }
    }
  }
}

TEST_CASE("staircase_argmin: stated examples") {
  VecXd y(2), v(2);
  y << 0.0, 1.0;
  v << 1.0, 0.0;
  auto idx = build_staircases(y, v);
  auto got = staircase_argmin(idx, y, v);
  CHECK(got.value == -1.0);
  CHECK(got.i == 0);
  CHECK(got.j == 1);

  VecXd yd(4), vd(4);
  yd << 1.0, 2.0, 3.0, 4.0;
  vd << 1.0, 2.0, 3.0, 4.0;
  auto idx2 = build_staircases(yd, vd);
  auto none = staircase_argmin(idx2, yd, vd);
  CHECK(none.value == 0.0);
  CHECK(none.i == none.j);
}

TEST_CASE("staircase_argmin matches the full scan on random sets") {
  CounterRng rng(1005);
  for (int rep = 0; rep < 60; ++rep) {
    const Index n = (rep % 3 == 0) ? 200 : 40;
    VecXd y = random_vec(n, rng);
    VecXd v = random_vec(n, rng);
    auto idx = build_staircases(y, v);
    auto got = staircase_argmin(idx, y, v);
    auto expect = full_scan_argmin(y, v);
    CHECK(got.value == doctest::Approx(expect.value).epsilon(1e-12));
    if (expect.value < 0.0) {
      CHECK(got.i == expect.i);
      CHECK(got.j == expect.j);
    }
  }
}

TEST_CASE("SortedOrder stays a valid ascending order under value swaps") {
  CounterRng rng(1006);
  VecXd vals = random_vec(40, rng);
  auto order = SortedOrder::build(vals);
  for (int s = 0; s < 100; ++s) {
    Index i = static_cast<Index>(rng.next_below(40));
    Index j = static_cast<Index>(rng.next_below(40));
    if (i == j) continue;
    std::swap(vals[i], vals[j]);
    order.note_value_swap(i, j);
  }
  for (Index t = 1; t < 40; ++t)
    CHECK(vals[order.rank_to_idx[t - 1]] <= vals[order.rank_to_idx[t]]);
  for (Index t = 0; t < 40; ++t)
    CHECK(order.idx_to_rank[order.rank_to_idx[t]] == t);
}

TEST_CASE("fast_candidate finds the correcting pair one swap from the optimum") {
  auto inst = gen_instance(40, 4, 0, 0.0, "random", 2001);
  SparsePermutation pstar = SparsePermutation::identity(40).swap(3, 17);
  VecXd y = pstar.inverse().apply(VecXd(inst.x * inst.truth->beta));
  auto cfg = config(40, SearchMode::kFast);
  auto ctx = make_context(y, inst.x, cfg);
  auto st = make_state(ctx, SparsePermutation::identity(40));
  auto order = SortedOrder::build(st.assigned);
  VecXd v = ctx.proj.q_factor() * st.coef;

  auto cand = fast_candidate(st, v, order, cfg);
  REQUIRE(cand.has_value());
  CHECK(cand->i == 3);
  CHECK(cand->j == 17);
  double true_delta = swap_delta_exact(st, cand->i, cand->j, ctx);
  CHECK(true_delta == doctest::Approx(-st.obj).epsilon(1e-9));
}

TEST_CASE("fast candidate's approximate objective lower-bounds the exact best swap's") {
  CounterRng walk(2002);
  for (std::uint64_t seed = 500; seed < 530; ++seed) {
    const Index n = 100 + static_cast<Index>(seed % 3) * 50;
    const Index radius = (seed % 2 == 0) ? n : 8;
    auto inst = gen_instance(n, 5, 8, (seed % 3 == 0) ? 0.0 : 0.2, "random",
                             seed);
    auto cfg = config(radius, SearchMode::kFast);
    auto ctx = make_context(inst.y, inst.x, cfg);
    auto st = make_state(ctx, SparsePermutation::identity(n));
    // wander a few feasible swaps to reach a generic state
    for (int s = 0; s < 6; ++s) {
      Index i = static_cast<Index>(walk.next_below(static_cast<std::uint64_t>(n)));
      Index j = static_cast<Index>(walk.next_below(static_cast<std::uint64_t>(n)));
      if (i != j && st.perm.dist_to_identity_after_swap(i, j) <= radius) {
        SwapCandidate c{std::min(i, j), std::max(i, j), 0.0};
        c.delta = swap_delta_exact(st, c.i, c.j, ctx);
        detail::apply_swap(st, ctx, c, cfg, nullptr, true);
      }
    }
    st.coef = ctx.proj.q_factor().transpose() * st.assigned;
    VecXd v = ctx.proj.q_factor() * st.coef;
    st.w = st.assigned - v;
    auto order = SortedOrder::build(st.assigned);

    auto cand = fast_candidate(st, v, order, cfg);
    auto exact = best_swap_exact(st, ctx, cfg);
    REQUIRE(exact.has_value());
    double exact_approx =
        2.0 * (st.assigned[exact->i] - st.assigned[exact->j]) *
        (v[exact->i] - v[exact->j]);
    double cand_approx = cand ? cand->delta : 0.0;  // approximate value here
    CHECK(cand_approx <= exact_approx + 1e-12);
    // the approximate objective upper-bounds the true change
    if (cand) {
      double true_delta = swap_delta_exact(st, cand->i, cand->j, ctx);
      CHECK(true_delta <= cand_approx + 1e-12);
    }
  }
}

TEST_CASE("fast_step falls back to the exact sweep when the staircase stalls") {
  // search small noisy instances for a state where the approximate step sees
  // nothing but an exact improving swap exists
  bool exercised = false;
  for (std::uint64_t seed = 9000; seed < 9400 && !exercised; ++seed) {
    auto inst = gen_instance(20, 3, 4, 0.3, "random", seed);
    SolverConfig no_fb = config(6, SearchMode::kFast);
    no_fb.exact_fallback_max_n = 0;  // disable the fallback entirely
    auto ctx = make_context(inst.y, inst.x, no_fb);
    auto st = make_state(ctx, SparsePermutation::identity(20));
    auto order = SortedOrder::build(st.assigned);
    VecXd v_buf(20);
    for (int it = 0; it < 200; ++it) {
      auto rec = fast_step(st, ctx, no_fb, order, v_buf);
      if (!rec.accepted) break;
    }
    auto exact = best_swap_exact(st, ctx, no_fb);
    if (exact && exact->delta < -1e-10) {
      // with the fallback enabled the same state must keep improving
      SolverConfig with_fb = no_fb;
      with_fb.exact_fallback_max_n = 20000;
      double before = st.obj;
      auto rec = fast_step(st, ctx, with_fb, order, v_buf);
      CHECK(rec.accepted);
      CHECK(st.obj < before);
      exercised = true;
    }
  }
  CHECK(exercised);
}

TEST_CASE("fast_step terminates when neither step finds an improvement") {
  auto inst = gen_instance(30, 3, 5, 0.0, "random", 2003);
  auto cfg = config(30, SearchMode::kFast);
  auto ctx = make_context(inst.y, inst.x, cfg);
  auto st = make_state(ctx, inst.truth->perm);  // already optimal
  auto order = SortedOrder::build(st.assigned);
  VecXd v_buf(30);
  auto rec = fast_step(st, ctx, cfg, order, v_buf);
  CHECK_FALSE(rec.accepted);
  CHECK(rec.decrease == 0.0);
}

TEST_CASE("fast solve: noiseless parity with the exact solver") {
  auto inst = gen_instance(500, 10, 100, 0.0, "random", 2004);
  auto fast = solve(inst, config(500, SearchMode::kFast));
  CHECK((fast.beta - inst.truth->beta).norm() <= 0.01);
  for (std::size_t t = 0; t + 1 < fast.trace.size(); ++t) {
    CHECK(fast.trace[t].obj_after <= fast.trace[t].obj_before);
    CHECK(fast.trace[t + 1].obj_before <= fast.trace[t].obj_after);
  }
}

TEST_CASE("fast solve under noise stays close to the exact solve") {
  auto inst = gen_instance(300, 8, 30, 0.1, "random", 2005);
  auto fast = solve(inst, config(30, SearchMode::kFast));
  auto exact = solve(inst, config(30, SearchMode::kExact));
  double fast_err = (fast.beta - inst.truth->beta).norm();
  double exact_err = (exact.beta - inst.truth->beta).norm();
  CHECK(std::abs(fast_err - exact_err) <= 0.01);
}
