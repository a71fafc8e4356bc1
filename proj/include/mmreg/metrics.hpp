#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "mmreg/datagen.hpp"
#include "mmreg/local_search.hpp"
#include "mmreg/permutation.hpp"
#include "mmreg/projection.hpp"
#include "mmreg/solver_types.hpp"

namespace mmreg {

struct EvalMetrics {
  Index hamming = 0;
  double beta_error = 0.0;
  std::optional<double> relative_obj;        // undefined when ||(I-H)eps|| = 0
  std::optional<double> relative_beta_error; // undefined when sigma = 0
  double denoise_error = 0.0;
};

/// Recovery metrics of a report against the generating truth.
inline EvalMetrics evaluate(const SolveReport& rep,
                            const ProblemInstance& inst) {
  if (!inst.truth) throw MissingTruth("evaluate: instance has no truth");
  const auto& t = *inst.truth;
  EvalMetrics m;
  m.hamming = rep.perm.dist(t.perm);
  m.beta_error = (rep.beta - t.beta).norm() / t.beta.norm();
  if (t.sigma > 0.0) {
    auto proj = ProjectionOperator<double>::factorize(inst.x);
    double denom = proj.apply_residual(t.noise).squaredNorm();
    if (denom > 0.0) m.relative_obj = rep.objective / denom;
    m.relative_beta_error = m.beta_error / t.sigma;
  }
  VecXd fit_hat = rep.perm.inverse().apply(VecXd(inst.x * rep.beta));
  VecXd fit_star = t.perm.inverse().apply(VecXd(inst.x * t.beta));
  m.denoise_error =
      (fit_hat - fit_star).squaredNorm() / static_cast<double>(inst.n());
  return m;
}

struct OneStepWitness {
  SparsePermutation p_tilde;
  double lhs = 0.0;  // ||Py - P*y||^2 - ||P~y - P*y||^2
  double rhs = 0.0;  // (1/2) ||Py - P*y||_inf^2
  bool vacuous = false;
};

/// Brute-force witness for the one-step decrease property: among all dist-2
/// neighbours P~ of P whose disagreement set with P* is contained in P's,
/// find one with lhs >= rhs. Throws WitnessNotFound if none exists (which
/// would falsify the property, not the search).
inline OneStepWitness one_step_decrease_oracle(const VecXd& y,
                                               const SparsePermutation& p,
                                               const SparsePermutation& pstar) {
  const Index n = y.size();
  if (p.size() != n || pstar.size() != n)
    throw DimensionMismatch("one_step_decrease_oracle");
  if (n > 14) throw TooLarge("one_step_decrease_oracle: n > 14");

  VecXd py = p.apply(y);
  VecXd psy = pstar.apply(y);
  const double base = (py - psy).squaredNorm();
  const double sup = (py - psy).cwiseAbs().maxCoeff();
  const double rhs = 0.5 * sup * sup;
  if (sup == 0.0) return {p, 0.0, 0.0, true};

  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      SparsePermutation cand = p.swap(i, j);
      bool contained = true;
      for (Index t = 0; t < n && contained; ++t)
        if (cand.image(t) != pstar.image(t) && p.image(t) == pstar.image(t))
          contained = false;
      if (!contained) continue;
      double lhs = base - (cand.apply(y) - psy).squaredNorm();
      if (lhs >= rhs) return {cand, lhs, rhs, false};
    }
  }
  throw WitnessNotFound("one_step_decrease_oracle: no qualifying neighbour");
}

/// Global minimizer of ||(I-H) P y||^2 over all permutations with
/// dist(P, I) <= R, by enumeration. Ties resolve to the lexicographically
/// smallest image sequence. Only for n <= 8.
inline std::pair<SparsePermutation, double> exhaustive_solve(
    const ProblemInstance& inst, Index radius) {
  const Index n = inst.n();
  if (n > 8) throw TooLarge("exhaustive_solve: n > 8");
  SolverConfig cfg;
  cfg.radius = std::max<Index>(radius, 2);
  auto ctx = make_context(inst.y, inst.x, cfg);

  std::vector<Index> img(static_cast<std::size_t>(n));
  std::iota(img.begin(), img.end(), Index(0));
  SparsePermutation best = SparsePermutation::identity(n);
  double best_obj = std::numeric_limits<double>::infinity();
  do {
    std::map<Index, Index> moved;
    for (Index i = 0; i < n; ++i)
      if (img[static_cast<std::size_t>(i)] != i)
        moved[i] = img[static_cast<std::size_t>(i)];
    if (static_cast<Index>(moved.size()) > radius) continue;
    auto p = SparsePermutation::from_moved(n, std::move(moved));
    double obj = objective(p, ctx);
    if (obj < best_obj) {
      best_obj = obj;
      best = p;
    }
  } while (std::next_permutation(img.begin(), img.end()));
  return {best, best_obj};
}

struct RestrictedProjectionNorm {
  double value = 0.0;
  bool exact = false;
};

namespace detail {

template <typename Scalar>
double support_hat_norm(const ProjectionOperator<Scalar>& proj,
                        const std::vector<Index>& support) {
  const Index m = static_cast<Index>(support.size());
  const Index d = proj.cols();
  Mat<Scalar> qs(m, d);
  for (Index t = 0; t < m; ++t)
    qs.row(t) = proj.q_factor().row(support[static_cast<std::size_t>(t)]);
  // || H u ||^2 = u' H u for a projector, so the sharp constant over unit
  // vectors on this support is the top eigenvalue of Q_S Q_S'
  if (m <= d) {
    Mat<Scalar> outer = qs * qs.transpose();
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> eig(outer,
                                                   Eigen::EigenvaluesOnly);
    return eig.eigenvalues().maxCoeff();
  }
  Mat<Scalar> gram = qs.transpose() * qs;
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> eig(gram, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

inline bool next_combination(std::vector<Index>& comb, Index n) {
  const Index m = static_cast<Index>(comb.size());
  Index t = m - 1;
  while (t >= 0 && comb[static_cast<std::size_t>(t)] == n - m + t) --t;
  if (t < 0) return false;
  ++comb[static_cast<std::size_t>(t)];
  for (Index u = t + 1; u < m; ++u)
    comb[static_cast<std::size_t>(u)] = comb[static_cast<std::size_t>(u - 1)] + 1;
  return true;
}

inline double combination_count_capped(Index n, Index m, double cap) {
  double c = 1.0;
  for (Index t = 0; t < m; ++t) {
    c *= static_cast<double>(n - t) / static_cast<double>(t + 1);
    if (c > cap) return cap + 1.0;
  }
  return c;
}

}  // namespace detail

/// max ||H u||^2 / ||u||^2 over m-sparse u: exact support enumeration when
/// C(n, m) fits in the budget, otherwise a Monte-Carlo lower bound over
/// `budget` random supports.
template <typename Scalar>
RestrictedProjectionNorm restricted_projection_norm(
    const ProjectionOperator<Scalar>& proj, Index m, Index budget,
    std::uint64_t seed = 0) {
  const Index n = proj.rows();
  if (m < 1 || m > n) throw BadShape("restricted_projection_norm: bad m");
  RestrictedProjectionNorm out;
  double combos = detail::combination_count_capped(n, m, double(budget));
  if (combos <= double(budget)) {
    out.exact = true;
    std::vector<Index> comb(static_cast<std::size_t>(m));
    std::iota(comb.begin(), comb.end(), Index(0));
    do {
      out.value = std::max(out.value, detail::support_hat_norm(proj, comb));
    } while (detail::next_combination(comb, n));
  } else {
    out.exact = false;
    CounterRng rng(seed, CounterRng::kGeneric);
    std::vector<Index> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), Index(0));
    std::vector<Index> comb(static_cast<std::size_t>(m));
    for (Index rep = 0; rep < budget; ++rep) {
      for (Index k = 0; k < m; ++k) {
        Index pick = k + static_cast<Index>(rng.next_below(
                             static_cast<std::uint64_t>(n - k)));
        std::swap(pool[static_cast<std::size_t>(k)],
                  pool[static_cast<std::size_t>(pick)]);
        comb[static_cast<std::size_t>(k)] = pool[static_cast<std::size_t>(k)];
      }
      out.value = std::max(out.value, detail::support_hat_norm(proj, comb));
    }
  }
  return out;
}

struct AssumptionEstimates {
  double signal_floor = 0.0;    // L: min displaced |(P*y)_i - y_i|, +inf if r=0
  double response_range = 0.0;  // U: max pairwise |y_i - y_j|
  double sigma_bar = 0.0;       // max(|eps|_inf, |(I-H)eps|_inf, |H eps|/sqrt(d))
  double rho = 0.0;             // restricted projection norm at the given sparsity
  Index rho_sparsity = 4;
  bool rho_exact = false;
  double gamma_bar = 0.0;       // lambda_min(X'X / n)
  bool gate_projection = false; // R rho <= L^2 / (90 U^2)
  bool gate_radius = false;     // R^2 rho <= 1/10
  bool gate_noise = false;      // sigma_bar <= min(0.5, (rho d)^{-1/2}) L^2/(80U)
};

/// Realized values of the quantities the convergence theory assumes, plus the
/// pass/fail gates they imply. All measured from data; rho may be estimated.
inline AssumptionEstimates measure_assumptions(const ProblemInstance& inst,
                                               Index radius,
                                               Index rho_budget = 512) {
  if (!inst.truth) throw MissingTruth("measure_assumptions");
  const auto& t = *inst.truth;
  const Index n = inst.n();
  const Index d = inst.d();
  AssumptionEstimates a;

  VecXd psy = t.perm.apply(inst.y);
  a.signal_floor = std::numeric_limits<double>::infinity();
  for (Index i : t.perm.supp())
    a.signal_floor = std::min(a.signal_floor, std::abs(psy[i] - inst.y[i]));
  a.response_range = inst.y.maxCoeff() - inst.y.minCoeff();

  auto proj = ProjectionOperator<double>::factorize(inst.x);
  a.sigma_bar = std::max({t.noise.cwiseAbs().maxCoeff(),
                          proj.apply_residual(t.noise).cwiseAbs().maxCoeff(),
                          proj.apply_hat(t.noise).norm() / std::sqrt(double(d))});

  a.rho_sparsity = std::min<Index>(4, n);
  auto rho = restricted_projection_norm(proj, a.rho_sparsity, rho_budget,
                                        t.seed);
  a.rho = rho.value;
  a.rho_exact = rho.exact;

  Eigen::SelfAdjointEigenSolver<MatXd> eig(
      inst.x.transpose() * inst.x / double(n), Eigen::EigenvaluesOnly);
  a.gamma_bar = eig.eigenvalues().minCoeff();

  const double l2 = a.signal_floor * a.signal_floor;
  const double u2 = a.response_range * a.response_range;
  a.gate_projection = double(radius) * a.rho <= l2 / (90.0 * u2);
  a.gate_radius = double(radius) * double(radius) * a.rho <= 0.1;
  const double cap =
      std::min(0.5, 1.0 / std::sqrt(a.rho * double(d))) * l2 /
      (80.0 * a.response_range);
  a.gate_noise = a.sigma_bar <= cap;
  return a;
}

}  // namespace mmreg
