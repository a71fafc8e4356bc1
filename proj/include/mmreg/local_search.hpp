#pragma once

#include <algorithm>
#include <chrono>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "mmreg/common.hpp"
#include "mmreg/datagen.hpp"
#include "mmreg/fast_search.hpp"
#include "mmreg/solver_types.hpp"

namespace mmreg {

/// || (I-H) P y ||^2, computed from scratch.
template <typename Scalar>
Scalar objective(const SparsePermutation& p, const SolveContext<Scalar>& ctx) {
  return ctx.proj.apply_residual(p.apply(ctx.y)).squaredNorm();
}

/// Exact objective change of exchanging the responses assigned to rows i and
/// j: with d = (Py)_i - (Py)_j,
///   delta = -2 d (w_i - w_j) + d^2 ||(I-H)(e_i - e_j)||^2.
template <typename Scalar>
Scalar swap_delta_exact(const SolverState<Scalar>& st, Index i, Index j,
                        const SolveContext<Scalar>& ctx) {
  const Index n = ctx.n();
  if (i < 0 || j < 0 || i >= n || j >= n || i == j)
    throw IndexOutOfRange("swap_delta_exact: bad pair");
  const Scalar d = st.assigned[i] - st.assigned[j];
  if (d == Scalar(0)) return Scalar(0);
  return Scalar(-2) * d * (st.w[i] - st.w[j]) + d * d * ctx.pair_norm(i, j);
}

namespace detail {

template <typename Scalar>
void sweep_dense_rows(const SolverState<Scalar>& st,
                      const SolveContext<Scalar>& ctx, Index row_begin,
                      Index row_stride, Vec<Scalar>& buf, SwapCandidate& best) {
  const Index n = ctx.n();
  const auto& hd = ctx.dense_residual;
  for (Index i = row_begin; i < n - 1; i += row_stride) {
    const Index m = n - i - 1;
    const Scalar yi = st.assigned[i];
    const Scalar wi = st.w[i];
    const Scalar rii = hd(i, i);
    auto yj = st.assigned.segment(i + 1, m).array();
    auto wj = st.w.segment(i + 1, m).array();
    auto rjj = hd.diagonal().segment(i + 1, m).array();
    auto rij = hd.col(i).segment(i + 1, m).array();
    buf.head(m) = ((yi - yj) * (Scalar(-2) * (wi - wj)) +
                   (yi - yj).square() * (rii + rjj - Scalar(2) * rij))
                      .matrix();
    Index rel = 0;
    Scalar val = buf.head(m).minCoeff(&rel);
    SwapCandidate cand{i, i + 1 + rel, static_cast<double>(val)};
    if (cand.better_than(best)) best = cand;
  }
}

template <typename Scalar>
void sweep_qr_blocks(const SolverState<Scalar>& st,
                     const SolveContext<Scalar>& ctx, Index block,
                     Index block_begin, Index block_stride, Mat<Scalar>& gbuf,
                     Vec<Scalar>& buf, SwapCandidate& best) {
  const Index n = ctx.n();
  const auto& q = ctx.proj.q_factor();
  for (Index b = block_begin; b * block < n - 1; b += block_stride) {
    const Index i0 = b * block;
    const Index rows = std::min(block, n - i0);
    gbuf.topRows(rows).noalias() = q.middleRows(i0, rows) * q.transpose();
    for (Index ii = 0; ii < rows; ++ii) {
      const Index i = i0 + ii;
      const Index m = n - i - 1;
      if (m <= 0) continue;
      const Scalar yi = st.assigned[i];
      const Scalar wi = st.w[i];
      const Scalar hi = ctx.hat_diag[i];
      auto yj = st.assigned.segment(i + 1, m).array();
      auto wj = st.w.segment(i + 1, m).array();
      auto hj = ctx.hat_diag.segment(i + 1, m).array();
      auto gij = gbuf.row(ii).segment(i + 1, m).array();
      buf.head(m) = ((yi - yj) * (Scalar(-2) * (wi - wj)) +
                     (yi - yj).square() *
                         (Scalar(2) - hi - hj + Scalar(2) * gij))
                        .matrix();
      Index rel = 0;
      Scalar val = buf.head(m).minCoeff(&rel);
      SwapCandidate cand{i, i + 1 + rel, static_cast<double>(val)};
      if (cand.better_than(best)) best = cand;
    }
  }
}

/// Full sweep over all unordered pairs, parallelized by strided rows/blocks.
template <typename Scalar>
SwapCandidate sweep_all_pairs(const SolverState<Scalar>& st,
                              const SolveContext<Scalar>& ctx, int threads) {
  const Index n = ctx.n();
  const bool dense = ctx.has_dense();
  const Index block =
      dense ? 0 : std::clamp<Index>(Index(4'000'000) / std::max<Index>(n, 1),
                                    Index(8), Index(256));
  auto run = [&](Index begin, Index stride, SwapCandidate& best) {
    Vec<Scalar> buf(n);
    if (dense) {
      sweep_dense_rows(st, ctx, begin, stride, buf, best);
    } else {
      Mat<Scalar> gbuf(block, n);
      sweep_qr_blocks(st, ctx, block, begin, stride, gbuf, buf, best);
    }
  };
  if (threads <= 1) {
    SwapCandidate best;
    run(0, 1, best);
    return best;
  }
  std::vector<SwapCandidate> bests(static_cast<std::size_t>(threads));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] { run(t, threads, bests[static_cast<std::size_t>(t)]); });
  for (auto& th : pool) th.join();
  SwapCandidate best;
  for (const auto& c : bests)
    if (c.valid() && c.better_than(best)) best = c;
  return best;
}

/// Pairs with at least one displaced endpoint (dist == R-1 regime).
template <typename Scalar>
SwapCandidate sweep_supp_cross(const SolverState<Scalar>& st,
                               const SolveContext<Scalar>& ctx) {
  const Index n = ctx.n();
  std::vector<char> in_supp(static_cast<std::size_t>(n), 0);
  for (const auto& [s, img] : st.perm.moved()) {
    (void)img;
    in_supp[static_cast<std::size_t>(s)] = 1;
  }
  const auto& q = ctx.proj.q_factor();
  Vec<Scalar> hrow(n);
  SwapCandidate best;
  for (const auto& [s, img] : st.perm.moved()) {
    (void)img;
    if (ctx.has_dense()) {
      hrow = -ctx.dense_residual.col(s);
      hrow[s] += Scalar(1);  // H column from the stored I-H column
    } else {
      hrow.noalias() = q * q.row(s).transpose();
    }
    for (Index j = 0; j < n; ++j) {
      if (j == s) continue;
      if (in_supp[static_cast<std::size_t>(j)] && j < s) continue;  // seen as (j, s)
      const Scalar d = st.assigned[s] - st.assigned[j];
      const Scalar sq = Scalar(2) - ctx.hat_diag[s] - ctx.hat_diag[j] +
                        Scalar(2) * hrow[j];
      const double delta = static_cast<double>(
          Scalar(-2) * d * (st.w[s] - st.w[j]) + d * d * sq);
      SwapCandidate cand{std::min(s, j), std::max(s, j), delta};
      if (cand.better_than(best)) best = cand;
    }
  }
  return best;
}

/// Pairs with both endpoints displaced (dist == R regime).
template <typename Scalar>
SwapCandidate sweep_supp_pairs(const SolverState<Scalar>& st,
                               const SolveContext<Scalar>& ctx) {
  std::vector<Index> supp;
  for (const auto& [s, img] : st.perm.moved()) {
    (void)img;
    supp.push_back(s);
  }
  SwapCandidate best;
  for (std::size_t a = 0; a + 1 < supp.size(); ++a) {
    for (std::size_t b = a + 1; b < supp.size(); ++b) {
      const Index i = supp[a], j = supp[b];
      const double delta =
          static_cast<double>(swap_delta_exact(st, i, j, ctx));
      SwapCandidate cand{i, j, delta};
      if (cand.better_than(best)) best = cand;
    }
  }
  return best;
}

}  // namespace detail

/// Minimizing feasible pair for one exact local-search step. Feasible means
/// dist(swap(P,i,j), I) <= R, which by the distance-change arithmetic splits
/// into three regimes: any pair when dist <= R-2 (or R >= n), at least one
/// displaced endpoint at dist == R-1, both displaced at dist == R.
/// Returns the lexicographic-(delta, i, j) minimum regardless of sign.
template <typename Scalar>
std::optional<SwapCandidate> best_swap_exact(const SolverState<Scalar>& st,
                                             const SolveContext<Scalar>& ctx,
                                             const SolverConfig& cfg) {
  const Index n = ctx.n();
  if (n < 2) return std::nullopt;
  const Index dist = st.perm.dist_to_identity();
  SwapCandidate best;
  if (cfg.radius >= n || dist <= cfg.radius - 2) {
    best = detail::sweep_all_pairs(st, ctx, cfg.threads);
  } else if (dist == cfg.radius - 1) {
    best = detail::sweep_supp_cross(st, ctx);
  } else {
    best = detail::sweep_supp_pairs(st, ctx);
  }
  if (!best.valid()) return std::nullopt;
  return best;
}

namespace detail {

template <typename Scalar>
void refresh_state(SolverState<Scalar>& st, const SolveContext<Scalar>& ctx) {
  st.coef.noalias() = ctx.proj.q_factor().transpose() * st.assigned;
  st.w = st.assigned;
  st.w.noalias() -= ctx.proj.q_factor() * st.coef;
  // the recomputed value corrects buffer drift; never raise the published
  // objective chain by a rounding-level difference
  st.obj = std::min(st.obj, st.w.squaredNorm());
  st.accepted_since_refresh = 0;
}

template <typename Scalar>
void apply_swap(SolverState<Scalar>& st, const SolveContext<Scalar>& ctx,
                const SwapCandidate& cand, const SolverConfig& cfg,
                SortedOrder* order, bool update_w) {
  const Index i = cand.i, j = cand.j;
  const Scalar d = st.assigned[i] - st.assigned[j];
  Vec<Scalar> dq =
      d * (ctx.proj.q_factor().row(i) - ctx.proj.q_factor().row(j)).transpose();

  if (update_w) {
    if (ctx.has_dense()) {
      st.w.noalias() -= d * ctx.dense_residual.col(i);
      st.w.noalias() += d * ctx.dense_residual.col(j);
    } else {
      st.w[i] -= d;
      st.w[j] += d;
      st.w.noalias() += ctx.proj.q_factor() * dq;
    }
  }
  st.coef.noalias() -= dq;

  std::swap(st.assigned[i], st.assigned[j]);
  st.perm.swap_in_place(i, j);
  if (order) order->note_value_swap(i, j);
  st.obj += static_cast<Scalar>(cand.delta);
  st.k += 1;
  st.accepted_since_refresh += 1;
  if (st.accepted_since_refresh >= cfg.refresh_every) refresh_state(st, ctx);
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

template <typename Scalar>
IterationRecord finish_record(const SolverState<Scalar>& st,
                              IterationRecord rec,
                              std::chrono::steady_clock::time_point t0) {
  rec.dist_to_identity = st.perm.dist_to_identity();
  rec.wall_ms = ms_since(t0);
  return rec;
}

}  // namespace detail

/// One exact local-search step. Applies the best feasible swap when it
/// decreases the objective by more than cfg.tol, otherwise leaves the state
/// unchanged and reports a terminal (non-accepted) record.
template <typename Scalar>
IterationRecord step(SolverState<Scalar>& st, const SolveContext<Scalar>& ctx,
                     const SolverConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  IterationRecord rec;
  rec.k = st.k;
  rec.obj_before = static_cast<double>(st.obj);

  auto cand = best_swap_exact(st, ctx, cfg);
  if (!cand || !(cand->delta < -cfg.tol) ||
      !(st.obj + static_cast<Scalar>(cand->delta) < st.obj)) {
    if (cand) {
      rec.i = cand->i;
      rec.j = cand->j;
    }
    rec.obj_after = rec.obj_before;
    rec.decrease = 0.0;
    rec.accepted = false;
    return detail::finish_record(st, rec, t0);
  }

  rec.i = cand->i;
  rec.j = cand->j;
  detail::apply_swap(st, ctx, *cand, cfg, nullptr, /*update_w=*/true);
  rec.obj_after = rec.obj_before + cand->delta;
  rec.decrease = rec.obj_before - rec.obj_after;
  rec.accepted = true;
  return detail::finish_record(st, rec, t0);
}

/// One approximate step: staircase candidate, exact swap-delta safeguard,
/// and (for affordable n) a single exact-sweep fallback before terminating.
template <typename Scalar>
IterationRecord fast_step(SolverState<Scalar>& st,
                          const SolveContext<Scalar>& ctx,
                          const SolverConfig& cfg, SortedOrder& order,
                          Vec<Scalar>& v_buffer) {
  auto t0 = std::chrono::steady_clock::now();
  IterationRecord rec;
  rec.k = st.k;
  rec.obj_before = static_cast<double>(st.obj);

  // realign w with the maintained coefficient image before selecting
  v_buffer.noalias() = ctx.proj.q_factor() * st.coef;
  st.w = st.assigned - v_buffer;

  std::optional<SwapCandidate> chosen;
  auto cand = fast_candidate(st, v_buffer, order, cfg);
  if (cand) {
    cand->delta = static_cast<double>(swap_delta_exact(st, cand->i, cand->j, ctx));
    if (cand->delta < -cfg.tol &&
        st.obj + static_cast<Scalar>(cand->delta) < st.obj)
      chosen = cand;
  }
  if (!chosen && ctx.n() <= cfg.exact_fallback_max_n) {
    auto exact = best_swap_exact(st, ctx, cfg);
    if (exact && exact->delta < -cfg.tol &&
        st.obj + static_cast<Scalar>(exact->delta) < st.obj)
      chosen = exact;
    else if (!cand)
      cand = exact;  // report the probed pair on the terminal record
  }

  if (!chosen) {
    if (cand) {
      rec.i = cand->i;
      rec.j = cand->j;
    }
    rec.obj_after = rec.obj_before;
    rec.decrease = 0.0;
    rec.accepted = false;
    return detail::finish_record(st, rec, t0);
  }

  rec.i = chosen->i;
  rec.j = chosen->j;
  // w is realigned from coef at the next step entry; skip its rank-d update
  detail::apply_swap(st, ctx, *chosen, cfg, &order, /*update_w=*/false);
  rec.obj_after = rec.obj_before + chosen->delta;
  rec.decrease = rec.obj_before - rec.obj_after;
  rec.accepted = true;
  return detail::finish_record(st, rec, t0);
}

/// Full local search from P = I. Stops when the best step decreases the
/// objective by at most cfg.tol, or after cfg.max_iter accepted steps.
inline SolveReport solve(VecXd y, MatXd x, const SolverConfig& cfg) {
  cfg.validate(y.size());
  const auto t_start = std::chrono::steady_clock::now();

  double qr_seconds = 0.0;
  SolveContext<double> ctx =
      make_context(std::move(y), std::move(x), cfg, &qr_seconds);

  SolverState<double> st =
      make_state(ctx, SparsePermutation::identity(ctx.n()));
  SortedOrder order;
  VecXd v_buffer;
  if (cfg.mode == SearchMode::kFast) {
    order = SortedOrder::build(st.assigned);
    v_buffer.resize(ctx.n());
  }

  SolveReport rep;
  rep.method = cfg.mode == SearchMode::kFast ? "fast" : "exact";
  while (st.k < cfg.max_iter) {
    IterationRecord rec = cfg.mode == SearchMode::kFast
                              ? fast_step(st, ctx, cfg, order, v_buffer)
                              : step(st, ctx, cfg);
    rep.trace.push_back(rec);
    if (!rec.accepted) break;
  }

  detail::refresh_state(st, ctx);
  rep.perm = st.perm;
  rep.beta = ctx.proj.solve_beta(st.assigned);
  rep.objective = st.obj;
  rep.iterations = static_cast<Index>(rep.trace.size());
  rep.time_qr_s = qr_seconds;
  rep.time_total_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return rep;
}

inline SolveReport solve(const ProblemInstance& inst, const SolverConfig& cfg) {
  return solve(inst.y, inst.x, cfg);
}

inline SolveReport solve(ProblemInstance&& inst, const SolverConfig& cfg) {
  return solve(std::move(inst.y), std::move(inst.x), cfg);
}

}  // namespace mmreg
