#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace linetension {

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

using Eigen::Matrix3d;
using Eigen::Vector3d;
using Matrix9d = Eigen::Matrix<double, 9, 9>;
using Vector9d = Eigen::Matrix<double, 9, 1>;

inline constexpr double kPi = 3.14159265358979323846;

// Bad input: malformed files, violated preconditions. The CLI maps it to exit 3.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical procedure failed to produce a trustworthy answer. CLI exit 4.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row-major flattening used for every 9-vector / 9x9 representation of
// matrices and fourth-order tensors: index 3*i + j <-> entry (i, j).
inline Vector9d flatten(const Matrix3d& m) {
  Vector9d v;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v(3 * i + j) = m(i, j);
  return v;
}

inline Matrix3d unflatten(const Vector9d& v) {
  Matrix3d m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = v(3 * i + j);
  return m;
}

inline Matrix3d unit_matrix(int i, int j) {
  Matrix3d m = Matrix3d::Zero();
  m(i, j) = 1.0;
  return m;
}

// Pairwise (cascade) summation; the result depends only on the order of the
// input, so reductions stay reproducible regardless of how terms were produced.
double pairwise_sum(const double* data, std::size_t n);

inline double pairwise_sum(const std::vector<double>& v) {
  return pairwise_sum(v.data(), v.size());
}

}  // namespace linetension
