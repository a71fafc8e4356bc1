#pragma once

#include <map>
#include <set>
#include <utility>

#include "mmreg/common.hpp"

namespace mmreg {

/// Permutation of {0,...,n-1} stored by its displaced entries only.
///
/// The map `moved` contains exactly the pairs (i, pi(i)) with pi(i) != i, so
/// storage and most operations cost O(#moved) rather than O(n). The image
/// convention follows permutation-matrix rows: applying P to a vector u gives
/// result[i] = u[pi(i)].
class SparsePermutation {
 public:
  SparsePermutation() = default;
  explicit SparsePermutation(Index n) : n_(n) {
    if (n < 0) throw BadShape("SparsePermutation: negative size");
  }

  static SparsePermutation identity(Index n) { return SparsePermutation(n); }

  /// Builds from displaced entries; keys must form a bijection onto values.
  static SparsePermutation from_moved(Index n, std::map<Index, Index> moved) {
    SparsePermutation p(n);
    std::set<Index> values;
    for (const auto& [i, j] : moved) {
      if (i < 0 || i >= n || j < 0 || j >= n)
        throw IndexOutOfRange("SparsePermutation: moved entry out of range");
      if (i == j)
        throw BadShape("SparsePermutation: self-map listed as displaced");
      values.insert(j);
    }
    if (values.size() != moved.size())
      throw BadShape("SparsePermutation: image values not distinct");
    for (const auto& [i, j] : moved) {
      (void)j;
      if (values.count(i) == 0)
        throw BadShape("SparsePermutation: keys and values differ as sets");
    }
    p.moved_ = std::move(moved);
    return p;
  }

  Index size() const { return n_; }
  const std::map<Index, Index>& moved() const { return moved_; }
  bool is_identity() const { return moved_.empty(); }

  Index image(Index i) const {
    if (i < 0 || i >= n_) throw IndexOutOfRange("SparsePermutation::image");
    auto it = moved_.find(i);
    return it == moved_.end() ? i : it->second;
  }

  /// result[i] = u[pi(i)]
  template <typename Scalar>
  Vec<Scalar> apply(const Vec<Scalar>& u) const {
    if (u.size() != n_) throw DimensionMismatch("SparsePermutation::apply");
    Vec<Scalar> out = u;
    for (const auto& [i, j] : moved_) out[i] = u[j];
    return out;
  }

  SparsePermutation inverse() const {
    SparsePermutation inv(n_);
    for (const auto& [i, j] : moved_) inv.moved_.emplace(j, i);
    return inv;
  }

  std::set<Index> supp() const {
    std::set<Index> s;
    for (const auto& [i, j] : moved_) {
      (void)j;
      s.insert(i);
    }
    return s;
  }

  /// Number of indices where the two permutations' images differ.
  Index dist(const SparsePermutation& other) const {
    if (n_ != other.n_) throw DimensionMismatch("SparsePermutation::dist");
    Index count = 0;
    auto a = moved_.begin();
    auto b = other.moved_.begin();
    while (a != moved_.end() || b != other.moved_.end()) {
      if (b == other.moved_.end() || (a != moved_.end() && a->first < b->first)) {
        ++count;  // a displaced, b identity here
        ++a;
      } else if (a == moved_.end() || b->first < a->first) {
        ++count;
        ++b;
      } else {
        if (a->second != b->second) ++count;
        ++a;
        ++b;
      }
    }
    return count;
  }

  Index dist_to_identity() const { return static_cast<Index>(moved_.size()); }

  /// Returns the permutation that exchanges the images of positions i and j.
  SparsePermutation swap(Index i, Index j) const {
    check_pair(i, j);
    SparsePermutation out = *this;
    Index a = image(i), b = image(j);
    out.set_image(i, b);
    out.set_image(j, a);
    return out;
  }

  /// dist(swap(i,j), identity) computed in O(log #moved).
  Index dist_to_identity_after_swap(Index i, Index j) const {
    check_pair(i, j);
    Index a = image(i), b = image(j);
    Index d = dist_to_identity();
    d -= (a != i) ? 1 : 0;
    d -= (b != j) ? 1 : 0;
    d += (b != i) ? 1 : 0;
    d += (a != j) ? 1 : 0;
    return d;
  }

  /// In-place image exchange; used by the solver's hot loop.
  void swap_in_place(Index i, Index j) {
    check_pair(i, j);
    Index a = image(i), b = image(j);
    set_image(i, b);
    set_image(j, a);
  }

  bool operator==(const SparsePermutation& other) const {
    return n_ == other.n_ && moved_ == other.moved_;
  }

 private:
  void check_pair(Index i, Index j) const {
    if (i < 0 || i >= n_ || j < 0 || j >= n_)
      throw IndexOutOfRange("SparsePermutation: swap index out of range");
    if (i == j) throw IndexOutOfRange("SparsePermutation: swap needs i != j");
  }

  void set_image(Index i, Index v) {
    if (v == i)
      moved_.erase(i);
    else
      moved_[i] = v;
  }

  Index n_ = 0;
  std::map<Index, Index> moved_;
};

}  // namespace mmreg
