#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "shsmm/scalar.hpp"

namespace shsmm {

using Symbol = int;
using Sequence = std::vector<Symbol>;
using Rng = std::mt19937_64;

enum class DurationPrior { FromD, Explicit };

// Explicit-duration HSMM. Matrices are column-stochastic: O(o, x), X(x', x),
// D(d-1, x). d counts down the remaining stay; at d = 1 the chain renews.
struct HsmmParams {
  int n_o = 0, n_x = 0, n_d = 0;
  MatrixXd O, X, D;
  VectorXd pi_x;
  DurationPrior prior = DurationPrior::FromD;
  MatrixXd pi_d;  // n_d x n_x, used when prior == Explicit

  // p(d_1 | x_1) as an n_d x n_x table.
  const MatrixXd& initial_duration() const { return prior == DurationPrior::Explicit ? pi_d : D; }
};

struct Check {
  std::string name;
  bool pass = false;
  double value = 0;  // offending or measured quantity
  std::string detail;
};

struct ValidationReport {
  std::vector<Check> checks;
  bool ok() const;
  const Check* find(const std::string& name) const;
  std::string summary() const;
};

ValidationReport validate(const HsmmParams& p, double rtol = 1e-10);
// Throws InvalidModel listing failed checks.
void require_valid(const HsmmParams& p, double rtol = 1e-10);

struct RandomModelOptions {
  double min_sigma = 0.05;
  bool zero_diagonal = false;
  double concentration = 1.0;
};

HsmmParams random_model(int n_o, int n_x, int n_d, std::uint64_t seed, const RandomModelOptions& opt = {});

struct SampledSequence {
  Sequence observations;
  std::vector<std::pair<int, int>> hidden;  // (x, d), d in 1..n_d
};

SampledSequence sample(const HsmmParams& p, int T, Rng& rng);
std::vector<Sequence> sample_many(const HsmmParams& p, int count, int T, Rng& rng);

double exact_likelihood_enum(const HsmmParams& p, const Sequence& obs);

struct Likelihood {
  double log_p = 0;
  double p = 0;  // exp(log_p), 0 on underflow
};
Likelihood forward_likelihood(const HsmmParams& p, const Sequence& obs);

// Operators on the joint state, indexed (d-1)*n_x + x with d-major blocks.
// The chain alternates between s_t = (x_t, d_t) and the separator
// u_t = (x_t, d_{t-1}):
//   Xl: s_{t-1} -> u_t   (new x on renewal, d carried)
//   Dl: u_t -> s_t       (new d on renewal, else d-1)
// and the one-step lift on s is V = Dl * Xl.
template <class S>
struct LiftedOps {
  Mat<S> Xl, Dl;
  Mat<S> emit;  // n_o x (n_x n_d): O(o, x(state))
  Vec<S> s1;    // distribution of s_1
};

template <class S>
LiftedOps<S> lifted_ops(const HsmmParams& p);

enum class Conditioning { JointState, Separator };

// p(o at t+1+r for r in offsets | state at t), rows flattened row-major in
// offset order. JointState conditions on s_t, Separator on u_t.
template <class S>
Mat<S> window_given_state(const HsmmParams& p, const std::vector<int>& offsets, Conditioning c);

}  // namespace shsmm
