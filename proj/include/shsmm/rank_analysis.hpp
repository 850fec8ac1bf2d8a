#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "shsmm/model.hpp"
#include "shsmm/scalar.hpp"

namespace shsmm {

// One-step transition on the joint state s = (x, d), index (d-1)*n_x + x.
//   V   = [Psi | shifted identity blocks], column s_prev -> row s_next
//   Psi : renewal block, block i = diag(D(i,:)) * X
//   E   = [I ... I], picks x out of s
struct LiftedTransition {
  MatrixXd V, Psi, E;
};

LiftedTransition build_lift(const HsmmParams& p);

enum class TAlgorithm { Sequential, Efficient };
const char* t_algorithm_name(TAlgorithm a);

// T(x at t+1+r for r in offsets | s_t). Rows are ordered with the largest
// offset as the most significant digit.
struct TReport {
  MatrixXd T;
  std::size_t predicted_rank = 0;
  std::size_t numerical_rank = 0;
  TAlgorithm algorithm = TAlgorithm::Sequential;
  int ell = 1;
  int expansions = 0;
  std::vector<int> offsets;  // ascending
};

constexpr double kRankRtol = 1e-10;

// ell-1 rounds of (expand, propagate): offsets 0..ell-1.
TReport compute_T_sequential(const HsmmParams& p, int ell, double rtol = kRankRtol);

// Propagations between expansions grow as n_x^c; the gap is capped at the
// duration horizon n_d - 1.
TReport compute_T_efficient(const HsmmParams& p, int ell, double rtol = kRankRtol);

// T built for an arbitrary sorted, distinct offset set in [0, n_d-1].
MatrixXd build_T_for_offsets(const HsmmParams& p, const std::vector<int>& offsets);

struct FReport {
  MatrixXd F;                 // n_o^ell x n_x n_d, rows in ascending offset order
  std::size_t numerical_rank = 0;
  double max_cross_check = 0;  // max |F - window_given_state| entrywise
};

// F = (O kron ... kron O) T, cross-checked against direct marginalisation.
FReport build_F(const HsmmParams& p, const std::vector<int>& offsets, double rtol = kRankRtol);

struct RankRow {
  int n_x = 0, n_d = 0, ell = 0;
  std::string algorithm;  // sequential, efficient, schedule_F
  std::uint64_t seed = 0;
  std::size_t predicted = 0, observed = 0;
  bool retried = false;
  bool pass = false;
};

struct RankGridOptions {
  std::vector<int> n_x{2, 3, 4};
  std::vector<int> n_d{2, 3, 4, 5, 6};
  int seeds = 5;
  std::uint64_t base_seed = 1;
  double rtol = kRankRtol;
};

// Sweeps ell in 1..n_d+1 for both algorithms plus the scheduled F per cell.
// A failing draw is retried once with a fresh seed.
std::vector<RankRow> run_rank_grid(const RankGridOptions& opt);
void write_rank_csv(const std::vector<RankRow>& rows, std::ostream& out);

// Randomised instances of the structural rank lemmas.
struct LemmaTrial {
  bool pass = false;
  std::string detail;
};
// rank(I kr a) = rank(a kr I) = n for m x n `a` with no zero column.
LemmaTrial lemma_khatri_rao_identity(Rng& rng, double rtol = kRankRtol);
// Block-row M = [A_1..A_k] with per-column ranks r_j:
// rank(M kr [I..I]) = min(mn, sum_j r_j).
LemmaTrial lemma_block_row(Rng& rng, double rtol = kRankRtol);
// u = sum c_i v_i with all c_i != 0 is independent of any strict subset.
LemmaTrial lemma_subset_independence(Rng& rng, double rtol = kRankRtol);

}  // namespace shsmm
