#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "shsmm/io.hpp"
#include "shsmm/moments.hpp"
#include "shsmm/tensor.hpp"

namespace shsmm {

// Observable representation. Mode conventions:
//   d_tilde      (OR, OR#1)      maps the window message one step forward
//   x_tilde      (OR, OR#1, o)   emission step; OR and OR#1 are two
//                                distinct windows, so this is a full operator
//   o_tilde      (o, o#1)        o is contracted with x_tilde, o#1 is observed
//   start_factor (o1, o2, OR)
//   end_factor   (OR, o)         x_tilde with OR#1 summed out
template <class S>
struct BasicObservableModel {
  int n_o = 0;
  ObservationSchedule sched;
  BasicTensor<S> d_tilde, x_tilde, o_tilde, start_factor, end_factor;
  double pinv_rtol = 0;   // 0 means the default tolerance was used
  std::size_t rank = 0;   // singular values kept for the window inverse
  int anchor = -1;        // -1 for the pooled model
};
using ObservableModel = BasicObservableModel<double>;

struct BuildOptions {
  std::optional<double> rtol;
  // Truncate the window inverse at the factor rank min(n_x^ell, n_x n_d) and
  // the pair inverse at n_x. Finite-sample moments are full rank, so without
  // this every noise direction is inverted.
  bool truncate_to_model_rank = true;
};

template <class S>
BasicObservableModel<S> build_observable(const BasicMomentSet<S>& m, const BuildOptions& opt = {});

struct PerTModel {
  std::vector<ObservableModel> anchors;  // anchors[i] built at tau = first + i
  int first = 0;
  const ObservableModel& at_time(int t) const;
};

// Needs every sequence long enough for the anchors of the shortest one.
PerTModel build_observable_per_t(const std::vector<Sequence>& seqs, const ObservationSchedule& sched, int n_o,
                                 const BuildOptions& opt = {});

struct InferenceResult {
  double log_value = 0;
  int sign = 0;
  bool clamped = false;

  // sign * exp(log_value - reference_log), guarded against overflow.
  double ratio_to(double reference_log) const;
};

// Reference evaluation with named-tensor contractions at precision S.
template <class S>
InferenceResult infer(const BasicObservableModel<S>& model, const Sequence& obs, bool renormalize = true);

InferenceResult infer_per_t(const PerTModel& model, const Sequence& obs);

// Precomputed per-symbol step operators on the SIMD kernels.
class CompiledObservable {
 public:
  explicit CompiledObservable(const ObservableModel& m);
  InferenceResult infer(const Sequence& obs) const;
  int n_o() const { return n_o_; }

 private:
  int n_o_ = 0;
  std::size_t n_ = 0;
  std::vector<std::vector<double>> step_;  // per symbol, row-major n x n, v' = step * v
  std::vector<std::vector<double>> end_;   // per symbol, length n
  std::vector<double> start_;              // n_o * n_o * n
};

struct ScoreSummary {
  std::size_t rows = 0, errors = 0;
};

// Streams one CSV row per sequence line; bad lines become error rows.
ScoreSummary score_stream(const std::function<InferenceResult(const Sequence&)>& scorer, std::istream& in,
                          std::ostream& out);
ScoreSummary score_file(const CompiledObservable& model, std::istream& in, std::ostream& out);

TensorContainer observable_to_container(const ObservableModel& m);
TensorContainer per_t_to_container(const PerTModel& m);
ObservableModel observable_from_container(const TensorContainer& c);
PerTModel per_t_from_container(const TensorContainer& c);

}  // namespace shsmm
