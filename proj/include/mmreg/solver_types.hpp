#pragma once

#include <chrono>
#include <limits>
#include <string>
#include <vector>

#include "mmreg/common.hpp"
#include "mmreg/permutation.hpp"
#include "mmreg/projection.hpp"

namespace mmreg {

enum class SearchMode { kExact, kFast };

struct SolverConfig {
  Index radius = 0;     // R: max permutation distance from identity
  double tol = 0.0;     // minimum accepted decrease per step
  Index max_iter = std::numeric_limits<Index>::max();
  SearchMode mode = SearchMode::kExact;
  Index dense_threshold = 2000;  // precompute dense I-H columns up to this n
  Index refresh_every = 64;      // full recompute period for the residual image
  int threads = 1;
  // Fast mode falls back to one exact sweep before terminating; above this n
  // the sweep is unaffordable and the approximate step's verdict is final.
  Index exact_fallback_max_n = 20000;

  void validate(Index n) const {
    if (radius < 2) throw BadShape("SolverConfig: radius must be >= 2");
    if (tol < 0.0) throw BadShape("SolverConfig: tol must be >= 0");
    if (max_iter < 1) throw BadShape("SolverConfig: max_iter must be >= 1");
    if (refresh_every < 1) throw BadShape("SolverConfig: refresh_every >= 1");
    if (threads < 1) throw BadShape("SolverConfig: threads >= 1");
    (void)n;
  }
};

struct IterationRecord {
  Index k = 0;
  double obj_before = 0.0;
  double obj_after = 0.0;
  double decrease = 0.0;  // obj_before - obj_after
  Index i = -1, j = -1;   // swapped pair; probed pair on the terminal record
  Index dist_to_identity = 0;
  double wall_ms = 0.0;
  bool accepted = false;
};

struct SolveReport {
  std::string method;
  SparsePermutation perm;
  VecXd beta;
  double objective = 0.0;
  Index iterations = 0;  // trace length
  double time_total_s = 0.0;
  double time_qr_s = 0.0;
  std::vector<IterationRecord> trace;
};

/// Immutable per-solve data: responses, thin QR of X, leverage values, and
/// (for small n) dense residual-maker columns.
template <typename Scalar>
struct SolveContext {
  Vec<Scalar> y;
  ProjectionOperator<Scalar> proj;
  Vec<Scalar> hat_diag;        // H_ii
  Mat<Scalar> dense_residual;  // I - H, empty unless enabled

  Index n() const { return y.size(); }
  bool has_dense() const { return dense_residual.size() > 0; }

  /// || (I-H)(e_i - e_j) ||^2 = 2 - H_ii - H_jj + 2 H_ij
  Scalar pair_norm(Index i, Index j) const {
    if (has_dense())
      return dense_residual(i, i) + dense_residual(j, j) -
             Scalar(2) * dense_residual(i, j);
    return Scalar(2) - hat_diag[i] - hat_diag[j] +
           Scalar(2) * proj.hat_entry(i, j);
  }
};

template <typename Scalar>
SolveContext<Scalar> make_context(Vec<Scalar> y, DesignMatrix<Scalar> x,
                                  const SolverConfig& cfg,
                                  double* qr_seconds = nullptr) {
  if (y.size() != x.rows()) throw DimensionMismatch("make_context: |y| != n");
  auto t0 = std::chrono::steady_clock::now();
  auto proj = ProjectionOperator<Scalar>::factorize(std::move(x));
  if (qr_seconds)
    *qr_seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  SolveContext<Scalar> ctx{std::move(y), std::move(proj), {}, {}};
  ctx.hat_diag = ctx.proj.hat_diagonal();
  const Index n = ctx.n();
  if (cfg.mode == SearchMode::kExact && n <= cfg.dense_threshold) {
    ctx.dense_residual = -ctx.proj.q_factor() * ctx.proj.q_factor().transpose();
    ctx.dense_residual.diagonal().array() += Scalar(1);
  }
  return ctx;
}

/// Mutable iterate: permutation, currently assigned responses P y, the
/// residual image w = (I-H) P y, and the coefficient image c = Q' P y.
template <typename Scalar>
struct SolverState {
  SparsePermutation perm;
  Vec<Scalar> assigned;  // P y
  Vec<Scalar> w;         // (I-H) P y
  Vec<Scalar> coef;      // Q' P y
  Scalar obj = Scalar(0);
  Index k = 0;
  Index accepted_since_refresh = 0;
};

template <typename Scalar>
SolverState<Scalar> make_state(const SolveContext<Scalar>& ctx,
                               const SparsePermutation& p) {
  if (p.size() != ctx.n()) throw DimensionMismatch("make_state: |P| != n");
  SolverState<Scalar> st;
  st.perm = p;
  st.assigned = p.apply(ctx.y);
  st.coef = ctx.proj.q_factor().transpose() * st.assigned;
  st.w = st.assigned - ctx.proj.q_factor() * st.coef;
  st.obj = st.w.squaredNorm();
  return st;
}

struct SwapCandidate {
  Index i = -1, j = -1;  // canonical i < j
  double delta = std::numeric_limits<double>::infinity();

  bool valid() const { return i >= 0; }
  /// Lexicographic (delta, i, j) order used for all argmin reductions.
  bool better_than(const SwapCandidate& o) const {
    if (delta != o.delta) return delta < o.delta;
    if (i != o.i) return i < o.i;
    return j < o.j;
  }
};

}  // namespace mmreg
