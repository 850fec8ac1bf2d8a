#include "shsmm/rank_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include "shsmm/errors.hpp"
#include "shsmm/moments.hpp"
#include "shsmm/tensor.hpp"

namespace shsmm {

LiftedTransition build_lift(const HsmmParams& p) {
  require_valid(p);
  const int nx = p.n_x, nd = p.n_d, m = nx * nd;
  LiftedTransition L;
  L.Psi = MatrixXd(m, nx);
  for (int i = 0; i < nd; ++i) L.Psi.middleRows(i * nx, nx) = p.D.row(i).asDiagonal() * p.X;
  L.V = MatrixXd::Zero(m, m);
  L.V.leftCols(nx) = L.Psi;
  // Column block d (d >= 2) moves to row block d-1 unchanged.
  for (int d = 1; d < nd; ++d) L.V.block((d - 1) * nx, d * nx, nx, nx).setIdentity();
  L.E = MatrixXd(nx, m);
  for (int d = 0; d < nd; ++d) L.E.middleCols(d * nx, nx).setIdentity();

  if ((L.Psi.colwise().sum().array() - 1.0).abs().maxCoeff() > 1e-10)
    throw Error(Errc::InvalidModel, "renewal block is not column-stochastic");
  return L;
}

const char* t_algorithm_name(TAlgorithm a) { return a == TAlgorithm::Sequential ? "sequential" : "efficient"; }

namespace {

MatrixXd initial_T(const HsmmParams& p) {
  const int nx = p.n_x;
  MatrixXd T(nx, nx * p.n_d);
  T.leftCols(nx) = p.X;
  for (int d = 1; d < p.n_d; ++d) T.middleCols(d * nx, nx).setIdentity();
  return T;
}

std::size_t ipow_capped(std::size_t b, int e, std::size_t cap) {
  std::size_t r = 1;
  for (int i = 0; i < e && r < cap; ++i) r *= b;
  return std::min(r, cap);
}

// Ascending offsets from the expansion points. `expand_at[i]` is the number of
// propagations done before expansion i, `total` the final count.
std::vector<int> offsets_from(const std::vector<int>& expand_at, int total) {
  std::vector<int> off{total};
  for (int k : expand_at) off.push_back(total - k - 1);
  std::sort(off.begin(), off.end());
  return off;
}

}  // namespace

TReport compute_T_sequential(const HsmmParams& p, int ell, double rtol) {
  if (ell < 1) throw Error(Errc::InvalidArgument, "ell must be >= 1");
  const auto L = build_lift(p);
  TReport r;
  r.algorithm = TAlgorithm::Sequential;
  r.ell = ell;
  r.T = initial_T(p);
  std::vector<int> expand_at;
  for (int i = 1; i < ell; ++i) {
    expand_at.push_back(i - 1);
    r.T = khatri_rao_cols<double>(r.T, L.E);
    r.T = r.T * L.V;
  }
  r.expansions = ell - 1;
  r.offsets = offsets_from(expand_at, ell - 1);
  const std::size_t full = static_cast<std::size_t>(p.n_x) * p.n_d;
  r.predicted_rank = std::min(static_cast<std::size_t>(ell) * p.n_x, full);
  r.numerical_rank = numerical_rank<double>(r.T, rtol);
  return r;
}

TReport compute_T_efficient(const HsmmParams& p, int ell, double rtol) {
  if (ell < 1) throw Error(Errc::InvalidArgument, "ell must be >= 1");
  const auto L = build_lift(p);
  TReport r;
  r.algorithm = TAlgorithm::Efficient;
  r.ell = ell;
  r.T = initial_T(p);
  const int horizon = p.n_d - 1;
  // T0 already accounts for one step, so the running count starts at 1 and
  // expansion c happens once it reaches n_x^c - 1.
  int count = 1;
  std::vector<int> expand_at;
  for (int c = 1; c < ell; ++c) {
    const std::size_t want = ipow_capped(p.n_x, c, static_cast<std::size_t>(horizon) + 1) - 1;
    const int target = static_cast<int>(std::min<std::size_t>(want, horizon));
    while (count < target) {
      r.T = r.T * L.V;
      ++count;
    }
    expand_at.push_back(count - 1);
    r.T = khatri_rao_cols<double>(r.T, L.E);
  }
  if (ell > 1) r.T = r.T * L.V;
  r.expansions = ell - 1;
  r.offsets = offsets_from(expand_at, ell > 1 ? count : 0);
  const std::size_t full = static_cast<std::size_t>(p.n_x) * p.n_d;
  r.predicted_rank = ipow_capped(p.n_x, r.expansions + 1, full);
  r.numerical_rank = numerical_rank<double>(r.T, rtol);
  return r;
}

MatrixXd build_T_for_offsets(const HsmmParams& p, const std::vector<int>& offsets) {
  if (offsets.empty()) throw Error(Errc::InvalidOffsets, "empty offset set");
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (offsets[i] < 0 || offsets[i] > p.n_d - 1)
      throw Error(Errc::InvalidOffsets,
                  "offset " + std::to_string(offsets[i]) + " outside [0, " + std::to_string(p.n_d - 1) + "]");
    if (i > 0 && offsets[i] <= offsets[i - 1]) throw Error(Errc::InvalidOffsets, "offsets must be strictly increasing");
  }
  const auto L = build_lift(p);
  const int total = offsets.back();
  MatrixXd T = initial_T(p);
  int props = 0;
  for (int i = static_cast<int>(offsets.size()) - 2; i >= 0; --i) {
    while (props < total - 1 - offsets[i]) {
      T = T * L.V;
      ++props;
    }
    T = khatri_rao_cols<double>(T, L.E);
  }
  while (props < total) {
    T = T * L.V;
    ++props;
  }
  return T;
}

FReport build_F(const HsmmParams& p, const std::vector<int>& offsets, double rtol) {
  const MatrixXd T = build_T_for_offsets(p, offsets);
  const std::size_t k = offsets.size();
  MatrixXd Q = p.O;
  for (std::size_t i = 1; i < k; ++i) Q = kron<double>(Q, p.O);
  const MatrixXd raw = Q * T;  // largest offset most significant
  // Reverse the digit order so the smallest offset leads.
  FReport r;
  r.F = MatrixXd(raw.rows(), raw.cols());
  const std::size_t no = static_cast<std::size_t>(p.n_o);
  for (Eigen::Index row = 0; row < raw.rows(); ++row) {
    std::size_t src = static_cast<std::size_t>(row), dst = 0;
    for (std::size_t d = 0; d < k; ++d) {
      dst = dst * no + src % no;
      src /= no;
    }
    r.F.row(static_cast<Eigen::Index>(dst)) = raw.row(row);
  }
  r.numerical_rank = numerical_rank<double>(r.F, rtol);
  const MatrixXd direct = window_given_state<double>(p, offsets, Conditioning::JointState);
  r.max_cross_check = (r.F - direct).cwiseAbs().maxCoeff();
  return r;
}

namespace {

HsmmParams grid_model(int n_x, int n_d, std::uint64_t seed) {
  // Observations do not enter T; n_o = n_x keeps Q square and invertible.
  return random_model(n_x, n_x, n_d, seed);
}

}  // namespace

std::vector<RankRow> run_rank_grid(const RankGridOptions& opt) {
  std::vector<RankRow> rows;
  for (int nx : opt.n_x)
    for (int nd : opt.n_d)
      for (int s = 0; s < opt.seeds; ++s) {
        const std::uint64_t seed = opt.base_seed + 1000003ULL * s + 7919ULL * nx + 104729ULL * nd;
        auto run = [&](std::uint64_t sd, const std::string& alg, int ell) {
          const auto p = grid_model(nx, nd, sd);
          if (alg == "schedule_F") {
            const auto sc_off = [&] {
              std::vector<int> off = schedule_offsets(nx, nd, ell);
              std::sort(off.begin(), off.end());
              return off;
            }();
            const auto f = build_F(p, sc_off, opt.rtol);
            return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(nx) * nd, f.numerical_rank);
          }
          const auto r = alg == "sequential" ? compute_T_sequential(p, ell, opt.rtol)
                                             : compute_T_efficient(p, ell, opt.rtol);
          return std::pair<std::size_t, std::size_t>(r.predicted_rank, r.numerical_rank);
        };
        auto cell = [&](const std::string& alg, int ell) {
          RankRow row{nx, nd, ell, alg, seed};
          auto [pred, obs] = run(seed, alg, ell);
          if (pred != obs) {
            row.retried = true;
            row.seed = seed + 1;
            std::tie(pred, obs) = run(row.seed, alg, ell);
          }
          row.predicted = pred;
          row.observed = obs;
          row.pass = pred == obs;
          rows.push_back(row);
        };
        for (int ell = 1; ell <= nd + 1; ++ell) {
          cell("sequential", ell);
          cell("efficient", ell);
        }
        cell("schedule_F", build_schedule(nx, nd).ell);
      }
  return rows;
}

void write_rank_csv(const std::vector<RankRow>& rows, std::ostream& out) {
  out << "n_x,n_d,ell,algorithm,predicted,observed,pass\n";
  for (const auto& r : rows)
    out << r.n_x << "," << r.n_d << "," << r.ell << "," << r.algorithm << "," << r.predicted << "," << r.observed
        << "," << (r.pass ? "true" : "false") << "\n";
}

namespace {

MatrixXd gaussian(Rng& rng, int r, int c) {
  std::normal_distribution<double> g;
  MatrixXd m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = g(rng);
  return m;
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::string ranks(std::size_t got, std::size_t want) {
  return "rank " + std::to_string(got) + ", expected " + std::to_string(want);
}

}  // namespace

LemmaTrial lemma_khatri_rao_identity(Rng& rng, double rtol) {
  const int m = uniform_int(rng, 1, 6), n = uniform_int(rng, 1, 6);
  MatrixXd a = gaussian(rng, m, n);
  // Sparsify but keep every column nonzero.
  for (int j = 0; j < n; ++j) {
    const int keep = uniform_int(rng, 0, m - 1);
    for (int i = 0; i < m; ++i)
      if (i != keep && uniform_int(rng, 0, 2) == 0) a(i, j) = 0;
  }
  const MatrixXd I = MatrixXd::Identity(n, n);
  const auto r1 = numerical_rank<double>(khatri_rao_cols<double>(I, a), rtol);
  const auto r2 = numerical_rank<double>(khatri_rao_cols<double>(a, I), rtol);
  LemmaTrial t;
  t.pass = r1 == static_cast<std::size_t>(n) && r2 == static_cast<std::size_t>(n);
  t.detail = std::to_string(m) + "x" + std::to_string(n) + ": " + ranks(r1, n) + " / " + ranks(r2, n);
  return t;
}

LemmaTrial lemma_block_row(Rng& rng, double rtol) {
  const int m = uniform_int(rng, 2, 5), n = uniform_int(rng, 1, 4), k = uniform_int(rng, 1, 5);
  // Column j of every block lies in an r_j-dimensional subspace.
  std::vector<MatrixXd> blocks(k, MatrixXd(m, n));
  std::size_t sum_r = 0;
  for (int j = 0; j < n; ++j) {
    const int r = uniform_int(rng, 1, std::min(k, m));
    sum_r += r;
    const MatrixXd basis = gaussian(rng, m, r), coef = gaussian(rng, r, k);
    const MatrixXd cols = basis * coef;
    for (int b = 0; b < k; ++b) blocks[b].col(j) = cols.col(b);
  }
  MatrixXd M(m, n * k), E(n, n * k);
  for (int b = 0; b < k; ++b) {
    M.middleCols(b * n, n) = blocks[b];
    E.middleCols(b * n, n).setIdentity();
  }
  const std::size_t want = std::min(static_cast<std::size_t>(m) * n, sum_r);
  const auto got = numerical_rank<double>(khatri_rao_cols<double>(M, E), rtol);
  return {got == want, "m=" + std::to_string(m) + " n=" + std::to_string(n) + " k=" + std::to_string(k) + ": " +
                           ranks(got, want)};
}

LemmaTrial lemma_subset_independence(Rng& rng, double rtol) {
  const int dim = uniform_int(rng, 2, 8), count = uniform_int(rng, 2, dim);
  const MatrixXd v = gaussian(rng, dim, count);
  VectorXd c(count);
  std::uniform_real_distribution<double> mag(0.2, 2.0);
  for (int i = 0; i < count; ++i) c(i) = (uniform_int(rng, 0, 1) ? 1 : -1) * mag(rng);
  const VectorXd u = v * c;
  // Every strict subset: drop at least one vector, keep the rest.
  for (unsigned mask = 0; mask + 1 < (1u << count); ++mask) {
    std::vector<int> keep;
    for (int i = 0; i < count; ++i)
      if (mask >> i & 1u) keep.push_back(i);
    MatrixXd S(dim, keep.size() + 1);
    for (std::size_t i = 0; i < keep.size(); ++i) S.col(i) = v.col(keep[i]);
    S.col(keep.size()) = u;
    const auto got = numerical_rank<double>(S, rtol);
    if (got != keep.size() + 1)
      return {false, "subset mask " + std::to_string(mask) + ": " + ranks(got, keep.size() + 1)};
  }
  return {true, std::to_string(count) + " vectors in R^" + std::to_string(dim)};
}

}  // namespace shsmm
