#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "shsmm/errors.hpp"
#include "shsmm/moments.hpp"
#include "shsmm/rank_analysis.hpp"
#include "test_util.hpp"

using namespace shsmm;

namespace {

template <class F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::InvalidArgument;
}

// p(x_{t+1+r}, r in offsets | s_t) by direct propagation of point masses; the
// largest offset is the most significant row digit.
MatrixXd T_oracle(const HsmmParams& p, const std::vector<int>& offsets) {
  const int nx = p.n_x, n = p.n_x * p.n_d;
  const auto ops = lifted_ops<double>(p);
  const MatrixXd V = ops.Dl * ops.Xl;
  const int k = static_cast<int>(offsets.size());
  int rows = 1;
  for (int i = 0; i < k; ++i) rows *= nx;
  MatrixXd out = MatrixXd::Zero(rows, n);
  for (int s0 = 0; s0 < n; ++s0) {
    // Enumerate x-paths at the requested offsets by splitting the mass.
    std::vector<std::pair<VectorXd, int>> front{{VectorXd::Unit(n, s0), 0}};
    int t = -1;
    for (int i = 0; i < k; ++i) {
      std::vector<std::pair<VectorXd, int>> next;
      for (auto& [v, code] : front) {
        VectorXd w = v;
        for (int step = t; step < offsets[i]; ++step) w = V * w;
        for (int x = 0; x < nx; ++x) {
          VectorXd m = VectorXd::Zero(n);
          for (int d = 0; d < p.n_d; ++d) m(d * nx + x) = w(d * nx + x);
          int place = 1;
          for (int j = 0; j < i; ++j) place *= nx;
          next.push_back({m, code + x * place});
        }
      }
      front = std::move(next);
      t = offsets[i];
    }
    for (auto& [v, code] : front) out(code, s0) += v.sum();
  }
  return out;
}

}  // namespace

TEST_CASE("build_lift: structure and column sums") {
  const auto p = random_model(4, 3, 3, 5);
  const auto L = build_lift(p);
  CHECK(L.V.rows() == 9);
  CHECK((L.V.colwise().sum().array() - 1).abs().maxCoeff() < 1e-14);
  CHECK((L.Psi.colwise().sum().array() - 1).abs().maxCoeff() < 1e-14);
  CHECK(L.E.rows() == 3);
  const auto ops = lifted_ops<double>(p);
  CHECK((L.V - ops.Dl * ops.Xl).cwiseAbs().maxCoeff() < 1e-14);

  const auto h = random_model(3, 3, 1, 2);
  CHECK((build_lift(h).V - h.X).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(numerical_rank<double>(build_lift(random_model(2, 2, 2, 1)).V, kRankRtol) == 4);
}

TEST_CASE("sequential T spans offsets 0..ell-1 and matches the oracle") {
  const auto p = random_model(3, 2, 3, 9);
  for (int ell = 1; ell <= 4; ++ell) {
    const auto r = compute_T_sequential(p, ell);
    std::vector<int> want(ell);
    for (int i = 0; i < ell; ++i) want[i] = i;
    CHECK(r.offsets == want);
    CHECK(r.expansions == ell - 1);
    CHECK((r.T - T_oracle(p, want)).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((r.T.colwise().sum().array() - 1).abs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("efficient T: cadence example and agreement with explicit offsets") {
  const auto big = random_model(3, 3, 20, 1);
  const auto r = compute_T_efficient(big, 4);
  CHECK(r.offsets == std::vector<int>{0, 11, 17, 19});
  CHECK(r.predicted_rank == 60);
  CHECK(r.numerical_rank == 60);
  CHECK(r.offsets == build_schedule(3, 20).right_offsets);

  for (auto [nx, nd] : {std::pair{2, 3}, std::pair{2, 5}, std::pair{3, 4}}) {
    const auto p = random_model(nx, nx, nd, 4);
    for (int ell = 1; ell <= nd; ++ell) {
      const auto e = compute_T_efficient(p, ell);
      // Past the schedule length the cadence repeats offsets, which the
      // explicit builder rejects.
      if (std::adjacent_find(e.offsets.begin(), e.offsets.end()) == e.offsets.end())
        CHECK((e.T - build_T_for_offsets(p, e.offsets)).cwiseAbs().maxCoeff() < 1e-13);
      CHECK((e.T - T_oracle(p, e.offsets)).cwiseAbs().maxCoeff() < 1e-13);
    }
  }
}

TEST_CASE("build_T_for_offsets rejects bad offsets") {
  const auto p = random_model(3, 2, 3, 2);
  CHECK(code_of([&] { build_T_for_offsets(p, {}); }) == Errc::InvalidOffsets);
  CHECK(code_of([&] { build_T_for_offsets(p, {0, 3}); }) == Errc::InvalidOffsets);
  CHECK(code_of([&] { build_T_for_offsets(p, {1, 1}); }) == Errc::InvalidOffsets);
  CHECK(code_of([&] { build_T_for_offsets(p, {2, 0}); }) == Errc::InvalidOffsets);
  CHECK(code_of([&] { build_F(p, {-1}); }) == Errc::InvalidOffsets);
}

TEST_CASE("build_F: rank thresholds and cross-check") {
  for (auto [nx, nd] : {std::pair{2, 3}, std::pair{3, 3}, std::pair{2, 4}}) {
    const auto p = random_model(nx + 1, nx, nd, 6);
    std::vector<int> full(nd), short_(nd - 1);
    for (int i = 0; i < nd; ++i) full[i] = i;
    for (int i = 0; i + 1 < nd; ++i) short_[i] = i;
    const auto f = build_F(p, full);
    CHECK(f.numerical_rank == static_cast<std::size_t>(nx * nd));
    CHECK(f.max_cross_check < 1e-12);
    // With only nd-1 windows the duration cannot be pinned down completely.
    const auto g = build_F(p, short_);
    CHECK(g.numerical_rank < static_cast<std::size_t>(nx * nd));
    CHECK(g.max_cross_check < 1e-12);
  }
}

TEST_CASE("rank lemmas hold on random instances") {
  Rng rng(11);
  for (int k = 0; k < 50; ++k) {
    const auto a = lemma_khatri_rao_identity(rng);
    CHECK_MESSAGE(a.pass, a.detail);
    const auto b = lemma_block_row(rng);
    CHECK_MESSAGE(b.pass, b.detail);
    const auto c = lemma_subset_independence(rng);
    CHECK_MESSAGE(c.pass, c.detail);
  }
}

TEST_CASE("small rank grid passes and serialises") {
  RankGridOptions opt;
  opt.n_x = {2};
  opt.n_d = {2, 3};
  opt.seeds = 2;
  const auto rows = run_rank_grid(opt);
  CHECK_FALSE(rows.empty());
  for (const auto& r : rows) CHECK_MESSAGE(r.pass, r.algorithm << " nx=" << r.n_x << " nd=" << r.n_d << " ell=" << r.ell);
  std::stringstream ss;
  write_rank_csv(rows, ss);
  std::string line;
  std::getline(ss, line);
  CHECK(line == "n_x,n_d,ell,algorithm,predicted,observed,pass");
  std::size_t n = 0;
  while (std::getline(ss, line)) ++n;
  CHECK(n == rows.size());
}
