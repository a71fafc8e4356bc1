#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "mmreg/common.hpp"
#include "mmreg/solver_types.hpp"

namespace mmreg {

/// Ascending order of a value vector, maintained in O(1) under value swaps
/// (a swap exchanges which index holds which value, never the sorted values).
struct SortedOrder {
  std::vector<Index> rank_to_idx;
  std::vector<Index> idx_to_rank;

  template <typename Scalar>
  static SortedOrder build(const Vec<Scalar>& values) {
    SortedOrder s;
    const Index n = values.size();
    s.rank_to_idx.resize(static_cast<std::size_t>(n));
    std::iota(s.rank_to_idx.begin(), s.rank_to_idx.end(), Index(0));
    std::sort(s.rank_to_idx.begin(), s.rank_to_idx.end(),
              [&](Index a, Index b) {
                return values[a] < values[b] || (values[a] == values[b] && a < b);
              });
    s.idx_to_rank.resize(static_cast<std::size_t>(n));
    for (Index t = 0; t < n; ++t) s.idx_to_rank[s.rank_to_idx[t]] = t;
    return s;
  }

  /// Call after the values held at indices i and j have been exchanged.
  void note_value_swap(Index i, Index j) {
    Index ri = idx_to_rank[i], rj = idx_to_rank[j];
    rank_to_idx[ri] = j;
    rank_to_idx[rj] = i;
    idx_to_rank[i] = rj;
    idx_to_rank[j] = ri;
  }
};

/// Staircase frontier of the 2D points z_i = (y_i, v_i) over an active set:
/// left-top points (no other active point with y <= y_i, v >= v_i) and
/// right-bottom points (no other active point with y >= y_i, v <= v_i),
/// both listed in y-ascending order. Coordinate duplicates do not knock each
/// other out. Along s_rb, y and v are both non-decreasing.
struct StaircaseIndex {
  std::vector<Index> s_lt;
  std::vector<Index> s_rb;
  std::vector<double> rb_y;  // chain coordinates of s_rb, ready for bisection
  std::vector<double> rb_v;
};

namespace detail {

// Scans one y-group [lo, hi) of the active ranks. Within a group only the
// extreme-v members survive, and only when they beat the running extreme.
template <typename Scalar, typename Keep>
inline void scan_group_lt(const std::vector<Index>& pts, std::size_t lo,
                          std::size_t hi, const Vec<Scalar>& v,
                          Scalar& running_max, bool first, Keep&& keep) {
  Scalar gmax = v[pts[lo]];
  for (std::size_t t = lo + 1; t < hi; ++t) gmax = std::max(gmax, v[pts[t]]);
  if (first || gmax > running_max) {
    for (std::size_t t = lo; t < hi; ++t)
      if (v[pts[t]] == gmax) keep(pts[t]);
  }
  running_max = first ? gmax : std::max(running_max, gmax);
}

}  // namespace detail

/// Builds the staircase sets for points (y_i, v_i), i in `active`
/// (y-ascending order given by `order`). O(n) passes over the active ranks.
template <typename Scalar>
StaircaseIndex build_staircases(const Vec<Scalar>& y, const Vec<Scalar>& v,
                                const SortedOrder& order,
                                const std::vector<char>* active_mask) {
  if (y.size() != v.size()) throw DimensionMismatch("build_staircases");
  std::vector<Index> pts;  // active indices, y-ascending
  pts.reserve(order.rank_to_idx.size());
  for (Index idx : order.rank_to_idx)
    if (!active_mask || (*active_mask)[static_cast<std::size_t>(idx)])
      pts.push_back(idx);
  if (pts.empty()) throw EmptyActiveSet("build_staircases: no active points");

  StaircaseIndex out;
  const std::size_t m = pts.size();

  // left-top: forward over y-groups, keep group max-v when it exceeds the max
  // over all strictly smaller y
  {
    Scalar running = Scalar(0);
    bool first = true;
    std::size_t lo = 0;
    while (lo < m) {
      std::size_t hi = lo + 1;
      while (hi < m && y[pts[hi]] == y[pts[lo]]) ++hi;
      detail::scan_group_lt(pts, lo, hi, v, running, first,
                            [&](Index idx) { out.s_lt.push_back(idx); });
      first = false;
      lo = hi;
    }
  }
  // right-bottom: backward, keep group min-v when below the min over all
  // strictly larger y
  {
    Scalar running = Scalar(0);
    bool first = true;
    std::size_t hi = m;
    std::vector<Index> rev;
    while (hi > 0) {
      std::size_t lo = hi - 1;
      while (lo > 0 && y[pts[lo - 1]] == y[pts[hi - 1]]) --lo;
      Scalar gmin = v[pts[lo]];
      for (std::size_t t = lo + 1; t < hi; ++t)
        gmin = std::min(gmin, v[pts[t]]);
      if (first || gmin < running) {
        for (std::size_t t = lo; t < hi; ++t)
          if (v[pts[t]] == gmin) rev.push_back(pts[t]);
      }
      running = first ? gmin : std::min(running, gmin);
      first = false;
      hi = lo;
    }
    out.s_rb.assign(rev.rbegin(), rev.rend());
  }

  out.rb_y.reserve(out.s_rb.size());
  out.rb_v.reserve(out.s_rb.size());
  for (Index idx : out.s_rb) {
    out.rb_y.push_back(static_cast<double>(y[idx]));
    out.rb_v.push_back(static_cast<double>(v[idx]));
  }
  return out;
}

/// Convenience overload: sorts y internally, all points active.
template <typename Scalar>
StaircaseIndex build_staircases(const Vec<Scalar>& y, const Vec<Scalar>& v) {
  return build_staircases(y, v, SortedOrder::build(y), nullptr);
}

/// The contiguous rank window [first, last] of the right-bottom chain on
/// which (Y - rb_y[t]) * (V - rb_v[t]) <= 0; empty when first > last.
/// Both chain coordinate arrays are non-decreasing, so the window follows
/// from four binary searches.
inline std::pair<std::ptrdiff_t, std::ptrdiff_t> chain_window(
    const StaircaseIndex& idx, double y_m, double v_m) {
  const auto& ys = idx.rb_y;
  const auto& vs = idx.rb_v;
  const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(ys.size());
  // A(t) = y_m - ys[t] : {A >= 0} = [0, a_end], {A <= 0} = [a_start, len)
  std::ptrdiff_t a_start =
      std::lower_bound(ys.begin(), ys.end(), y_m) - ys.begin();
  std::ptrdiff_t a_end =
      (std::upper_bound(ys.begin(), ys.end(), y_m) - ys.begin()) - 1;
  std::ptrdiff_t b_start =
      std::lower_bound(vs.begin(), vs.end(), v_m) - vs.begin();
  std::ptrdiff_t b_end =
      (std::upper_bound(vs.begin(), vs.end(), v_m) - vs.begin()) - 1;

  // f <= 0 on [b_start, a_end] (A >= 0, B <= 0) union [a_start, b_end];
  // the union is gap-free because a_start <= a_end + 1 and b_start <= b_end + 1
  bool first_ok = b_start <= a_end;
  bool second_ok = a_start <= b_end;
  if (!first_ok && !second_ok) return {1, 0};
  std::ptrdiff_t lo = first_ok ? b_start : a_start;
  std::ptrdiff_t hi = first_ok ? a_end : b_end;
  if (first_ok && second_ok) {
    lo = std::min(lo, a_start);
    hi = std::max(hi, b_end);
  }
  lo = std::max<std::ptrdiff_t>(lo, 0);
  hi = std::min(hi, len - 1);
  return {lo, hi};
}

struct StaircaseArgmin {
  Index i = -1, j = -1;  // canonical i < j; i == j means no off-diagonal pair
  double value = 0.0;    // min of (y_i - y_j)(v_i - v_j); 0 for the diagonal
};

/// Global minimizer of (y_i - y_j)(v_i - v_j) over i in lt-set, j in rb-set.
/// The minimum over all pairs is at most 0 (the diagonal), so only the
/// non-positive chain window of each left-top point needs scanning.
/// Ties break lexicographically on (value, min index, max index).
template <typename Scalar>
StaircaseArgmin staircase_argmin(const StaircaseIndex& idx,
                                 const Vec<Scalar>& y, const Vec<Scalar>& v) {
  StaircaseArgmin best;
  bool found = false;
  for (Index m : idx.s_lt) {
    const double ym = static_cast<double>(y[m]);
    const double vm = static_cast<double>(v[m]);
    auto [lo, hi] = chain_window(idx, ym, vm);
    for (std::ptrdiff_t t = lo; t <= hi; ++t) {
      Index jdx = idx.s_rb[static_cast<std::size_t>(t)];
      if (jdx == m) continue;
      double f = (ym - idx.rb_y[t]) * (vm - idx.rb_v[t]);
      Index a = std::min(m, jdx), b = std::max(m, jdx);
      if (!found || f < best.value ||
          (f == best.value && (a < best.i || (a == best.i && b < best.j)))) {
        best = {a, b, f};
        found = true;
      }
    }
  }
  if (!found || best.value > 0.0) {
    Index diag = idx.s_lt.front();
    return {diag, diag, 0.0};
  }
  return best;
}

/// Approximate best swap for the current state: runs the staircase argmin on
/// (P y, H P y) under the constraint regime implied by dist(P, I) vs R, and
/// returns the selected pair with its approximate objective 2*(y_i-y_j)(v_i-v_j).
/// Empty when no strictly improving approximate pair exists.
template <typename Scalar>
std::optional<SwapCandidate> fast_candidate(const SolverState<Scalar>& state,
                                            const Vec<Scalar>& v,
                                            const SortedOrder& order,
                                            const SolverConfig& cfg) {
  const Index n = state.assigned.size();
  const Index dist = state.perm.dist_to_identity();
  const bool unconstrained = cfg.radius >= n || dist <= cfg.radius - 2;

  StaircaseArgmin pick;
  if (unconstrained) {
    auto idx = build_staircases(state.assigned, v, order, nullptr);
    pick = staircase_argmin(idx, state.assigned, v);
  } else {
    std::vector<char> supp_mask(static_cast<std::size_t>(n), 0);
    for (const auto& [i, j] : state.perm.moved()) {
      (void)j;
      supp_mask[static_cast<std::size_t>(i)] = 1;
    }
    auto supp_idx = build_staircases(state.assigned, v, order, &supp_mask);
    if (dist >= cfg.radius) {
      // both endpoints must already be displaced
      pick = staircase_argmin(supp_idx, state.assigned, v);
    } else {
      // dist == R-1: one endpoint free, one displaced; the displaced one can
      // play either frontier role, so probe both combinations
      auto all_idx = build_staircases(state.assigned, v, order, nullptr);
      StaircaseIndex lt_all_rb_supp{all_idx.s_lt, supp_idx.s_rb,
                                    supp_idx.rb_y, supp_idx.rb_v};
      StaircaseIndex lt_supp_rb_all{supp_idx.s_lt, all_idx.s_rb,
                                    all_idx.rb_y, all_idx.rb_v};
      StaircaseArgmin p1 = staircase_argmin(lt_all_rb_supp, state.assigned, v);
      StaircaseArgmin p2 = staircase_argmin(lt_supp_rb_all, state.assigned, v);
      auto off_diag = [](const StaircaseArgmin& p) { return p.i != p.j; };
      auto better = [&](const StaircaseArgmin& p, const StaircaseArgmin& q) {
        if (off_diag(p) != off_diag(q)) return off_diag(p);
        if (p.value != q.value) return p.value < q.value;
        return p.i < q.i || (p.i == q.i && p.j < q.j);
      };
      pick = better(p2, p1) ? p2 : p1;
    }
  }

  if (pick.i == pick.j || pick.value >= 0.0) return std::nullopt;
  SwapCandidate cand;
  cand.i = pick.i;
  cand.j = pick.j;
  cand.delta = 2.0 * pick.value;  // approximate objective change
  return cand;
}

}  // namespace mmreg
