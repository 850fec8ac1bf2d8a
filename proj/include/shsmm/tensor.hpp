#pragma once

#include <atomic>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "shsmm/errors.hpp"
#include "shsmm/scalar.hpp"

namespace shsmm {

struct ModeLabel {
  std::string name;
  int occurrence = 0;

  bool operator==(const ModeLabel&) const = default;
  std::string str() const;
};

struct Mode {
  ModeLabel label;
  std::size_t dim = 1;

  bool operator==(const Mode&) const = default;
};

// Dense row-major tensor whose axes are addressed by label rather than by
// position. Values are immutable once constructed; every operation returns a
// fresh tensor.
template <class S>
class BasicTensor {
 public:
  BasicTensor() = default;
  BasicTensor(std::vector<Mode> modes, std::vector<S> data);

  static BasicTensor zeros(std::vector<Mode> modes);

  const std::vector<Mode>& modes() const { return modes_; }
  const std::vector<S>& data() const { return data_; }
  std::size_t size() const { return data_.size(); }
  std::size_t order() const { return modes_.size(); }
  std::vector<std::size_t> shape() const;

  bool has(const ModeLabel& l) const;
  std::size_t axis(const ModeLabel& l) const;  // throws UnknownMode
  std::size_t dim(const ModeLabel& l) const { return modes_[axis(l)].dim; }

  const S& at(const std::vector<std::size_t>& idx) const;
  S sum() const;

  template <class T>
  BasicTensor<T> cast() const {
    std::vector<T> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<T>(data_[i]);
    return BasicTensor<T>(modes_, std::move(out));
  }

 private:
  std::vector<Mode> modes_;
  std::vector<S> data_;
};

using NamedTensor = BasicTensor<double>;

struct PinvOptions {
  // Singular values at or below rtol * sigma_max are dropped. When unset the
  // default max(rows, cols) * machine epsilon of the scalar type is used.
  std::optional<double> rtol;
  // Keep at most this many singular values (known model rank).
  std::optional<std::size_t> max_rank;
};

// Counts the expensive learning-phase operations so callers can assert that
// a build performed a fixed amount of work.
struct OpCounters {
  std::atomic<long> pinv{0};
  std::atomic<long> contraction{0};
  void reset() {
    pinv = 0;
    contraction = 0;
  }
};
OpCounters& op_counters();

template <class S>
Mat<S> matricize(const BasicTensor<S>& t, const std::vector<ModeLabel>& rows,
                 const std::vector<ModeLabel>& cols);

template <class S>
BasicTensor<S> tensorize(const Mat<S>& m, const std::vector<Mode>& rows, const std::vector<Mode>& cols);

template <class S>
BasicTensor<S> mode_product(const BasicTensor<S>& a, const BasicTensor<S>& b,
                            const std::vector<ModeLabel>& shared);
// Contracts over every label common to both operands.
template <class S>
BasicTensor<S> mode_product(const BasicTensor<S>& a, const BasicTensor<S>& b);

template <class S>
BasicTensor<S> duplicate_mode(const BasicTensor<S>& t, const ModeLabel& mode, int copies);

template <class S>
BasicTensor<S> identity_tensor(const std::vector<Mode>& modes);

template <class S>
BasicTensor<S> pinv_along(const BasicTensor<S>& t, const std::vector<ModeLabel>& inv_modes,
                          const PinvOptions& opt = {});

template <class S>
BasicTensor<S> collapse_mode(const BasicTensor<S>& t, const ModeLabel& mode, std::size_t index);

template <class S>
BasicTensor<S> relabel(const BasicTensor<S>& t, const ModeLabel& from, const ModeLabel& to);

// Sums out one mode.
template <class S>
BasicTensor<S> marginalize(const BasicTensor<S>& t, const ModeLabel& mode);

template <class S>
Mat<S> khatri_rao_cols(const Mat<S>& a, const Mat<S>& b);

template <class S>
Mat<S> kron(const Mat<S>& a, const Mat<S>& b);

template <class S>
std::size_t numerical_rank(const Mat<S>& a, double rtol);

template <class S>
Vec<S> singular_values(const Mat<S>& a);

// Truncated Moore-Penrose pseudo-inverse. `kept` receives the number of
// singular values retained.
template <class S>
Mat<S> pinv(const Mat<S>& a, const PinvOptions& opt = {}, std::size_t* kept = nullptr);

}  // namespace shsmm
