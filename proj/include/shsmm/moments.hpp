#pragma once

#include <cstddef>
#include <vector>

#include "shsmm/model.hpp"
#include "shsmm/tensor.hpp"

namespace shsmm {

// Observation windows around an anchor tau (0-based positions):
//   left window  O_L : tau - span + left_offsets   (ends at tau - 1)
//   anchor symbol o  : tau
//   right window O_R : tau + 1 + right_offsets
// The separator between the two windows is u_tau = (x_tau, d_{tau-1}).
struct ObservationSchedule {
  int n_x = 1, n_d = 1;
  int ell = 1;
  std::vector<int> right_offsets;
  std::vector<int> left_offsets;
  int span = 1;

  std::size_t side(int n_o) const;  // n_o^ell
  int min_length() const { return 2 * span + 2; }
  int first_anchor() const { return span; }
  int last_anchor(int T) const { return T - span - 2; }
  // Target rank of the window factor: min(n_x^ell, n_x n_d).
  std::size_t factor_rank() const;
};

ObservationSchedule build_schedule(int n_x, int n_d);
// Offsets r_i = max(0, (n_d-1) - (n_x^i - 1)) for i < ell, deduplicated.
std::vector<int> schedule_offsets(int n_x, int n_d, int ell);

namespace labels {
inline const ModeLabel OL{"OL", 0};
inline const ModeLabel OR{"OR", 0};
inline const ModeLabel OR2{"OR", 1};
inline const ModeLabel o{"o", 0};
inline const ModeLabel o2{"o", 1};
inline const ModeLabel o_first{"o1", 0};
inline const ModeLabel o_second{"o2", 0};
inline const ModeLabel state{"xd", 0};
}  // namespace labels

template <class S>
struct BasicMomentSet {
  int n_o = 0;
  ObservationSchedule sched;
  BasicTensor<S> m_lr;        // (OL, OR): right window starts at tau+1
  BasicTensor<S> m_lr_shift;  // (OL, OR): right window starts at tau+2
  BasicTensor<S> m_lro;       // (OL, OR, o): o at tau
  BasicTensor<S> m_oo;        // (o, o#1): adjacent pairs
  BasicTensor<S> m_start;     // (o1, o2, OR): right window starts at 2
  std::size_t window_count = 0;

  template <class T>
  BasicMomentSet<T> cast() const {
    return {n_o,
            sched,
            m_lr.template cast<T>(),
            m_lr_shift.template cast<T>(),
            m_lro.template cast<T>(),
            m_oo.template cast<T>(),
            m_start.template cast<T>(),
            window_count};
  }
};
using MomentSet = BasicMomentSet<double>;

MomentSet estimate_moments(const std::vector<Sequence>& seqs, const ObservationSchedule& sched, int n_o,
                           int threads = 0);

// Moments from the single anchor tau (no pooling). m_oo uses the pair at
// (tau, tau+1); m_start is shared across anchors.
MomentSet estimate_moments_at(const std::vector<Sequence>& seqs, const ObservationSchedule& sched, int n_o, int tau);

template <class S>
struct AnalyticFactorContext {
  BasicTensor<S> f_right;  // (OR, xd): p(O_R | u)
  BasicTensor<S> f_left;   // (OL, xd): pooled p(O_L | u)
  std::vector<BasicTensor<S>> k_marginals;  // (xd): p(u_tau) per anchor
};

// Population limit of estimate_moments for sequences of length T. With
// `anchor` set, only that anchor is used (limit of estimate_moments_at).
template <class S>
std::pair<BasicMomentSet<S>, AnalyticFactorContext<S>> analytic_moments(const HsmmParams& p,
                                                                       const ObservationSchedule& sched, int T,
                                                                       int anchor = -1);

}  // namespace shsmm
