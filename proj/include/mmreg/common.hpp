#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mmreg {

using Index = Eigen::Index;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VecXd = Vec<double>;
using MatXd = Mat<double>;

// Row i of a design matrix is the covariate vector of sample i.
template <typename Scalar>
using DesignMatrix = Mat<Scalar>;

struct MmregError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : MmregError {
  using MmregError::MmregError;
};
struct IndexOutOfRange : MmregError {
  using MmregError::MmregError;
};
struct RankDeficient : MmregError {
  using MmregError::MmregError;
};
struct BadShape : MmregError {
  using MmregError::MmregError;
};
struct EmptyActiveSet : MmregError {
  using MmregError::MmregError;
};
struct MissingTruth : MmregError {
  using MmregError::MmregError;
};
struct TooLarge : MmregError {
  using MmregError::MmregError;
};
struct WitnessNotFound : MmregError {
  using MmregError::MmregError;
};
struct IoError : MmregError {
  using MmregError::MmregError;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw MmregError(what);
}

}  // namespace mmreg
