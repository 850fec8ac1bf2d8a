#pragma once

#include <cstdint>
#include <vector>

#include "shsmm/model.hpp"

namespace shsmm {

struct EmConfig {
  int max_iter = 200;
  double tol = 1e-6;  // relative log-likelihood improvement
  int restarts = 3;
  std::uint64_t seed = 1;
  // Allowed per-iteration decrease, relative to |log-likelihood|.
  double monotonicity_slack = 1e-9;
};

struct EmResult {
  HsmmParams model;
  std::vector<double> trace;  // total log-likelihood before each M-step, then the final value
  int iterations = 0;
  bool converged = false;
  int best_restart = 0;
};

// Validates cfg and data; throws InvalidArgument / InsufficientData.
void check_em_inputs(const std::vector<Sequence>& seqs, int n_o, int n_x, int n_d, const EmConfig& cfg);

// Best of cfg.restarts random initialisations.
EmResult em_fit(const std::vector<Sequence>& seqs, int n_o, int n_x, int n_d, const EmConfig& cfg = {});

// Single run from a given starting point (restarts ignored).
EmResult em_fit_from(const std::vector<Sequence>& seqs, const HsmmParams& init, const EmConfig& cfg = {});

// Total log-likelihood of the data under p (sum of forward log-likelihoods).
double total_log_likelihood(const HsmmParams& p, const std::vector<Sequence>& seqs);

}  // namespace shsmm
