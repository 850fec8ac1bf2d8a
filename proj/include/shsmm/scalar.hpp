#pragma once

// Scalar types shared by the numeric core. Everything is instantiated for
// double; the population-moment path is also instantiated for a 113-bit
// binary float so that exactness checks are not limited by cancellation in
// badly conditioned moment matrices.

#include <boost/multiprecision/float128.hpp>
#include <Eigen/Dense>

namespace shsmm {
using Quad = boost::multiprecision::float128;
}

namespace Eigen {
template <>
struct NumTraits<shsmm::Quad> : GenericNumTraits<shsmm::Quad> {
  using Real = shsmm::Quad;
  using NonInteger = shsmm::Quad;
  using Literal = shsmm::Quad;
  using Nested = shsmm::Quad;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 4,
    MulCost = 8
  };
  static Real dummy_precision() { return Real(1e-28); }
  static int digits10() { return 33; }
};
}  // namespace Eigen

namespace shsmm {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatrixXd = Mat<double>;
using VectorXd = Vec<double>;

template <class S>
inline double to_double(const S& v) {
  return static_cast<double>(v);
}

}  // namespace shsmm
