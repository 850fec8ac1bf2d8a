#include "doctest.h"
#include "shsmm/errors.hpp"
#include "shsmm/rank_analysis.hpp"
#include "shsmm/tensor.hpp"
#include "test_util.hpp"

using namespace shsmm;
using testutil::max_abs_diff;
using testutil::random_matrix;
using testutil::random_tensor;

namespace {

const ModeLabel A{"a", 0}, B{"b", 0}, C{"c", 0}, P{"p", 0}, P1{"p", 1}, Q{"q", 0};

template <class F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::InvalidArgument;  // sentinel: nothing thrown
}

NamedTensor seq_tensor(std::vector<Mode> modes) {
  std::size_t n = 1;
  for (const auto& m : modes) n *= m.dim;
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = static_cast<double>(i + 1);
  return NamedTensor(std::move(modes), std::move(d));
}

}  // namespace

TEST_CASE("tensor construction validates shape and labels") {
  CHECK(code_of([] { NamedTensor({{A, 2}, {A, 3}}, std::vector<double>(6)); }) == Errc::InvalidModePartition);
  CHECK(code_of([] { NamedTensor({{A, 2}}, std::vector<double>(3)); }) == Errc::ShapeMismatch);
  CHECK(code_of([] { NamedTensor({{A, 1}}, {std::nan("")}); }) == Errc::InvalidArgument);
  const auto t = seq_tensor({{A, 2}, {B, 3}});
  CHECK(t.at({1, 2}) == 6);
  CHECK(code_of([&] { t.axis(C); }) == Errc::UnknownMode);
  CHECK(code_of([&] { t.at({2, 0}); }) == Errc::IndexOutOfRange);
}

TEST_CASE("matricize natural layout, transpose and round trip") {
  const auto t = seq_tensor({{A, 2}, {B, 3}});
  const MatrixXd m = matricize(t, {A}, {B});
  CHECK(m.rows() == 2);
  CHECK(m(0, 0) == 1);
  CHECK(m(0, 2) == 3);
  CHECK(m(1, 0) == 4);
  const MatrixXd mt = matricize(t, {B}, {A});
  CHECK(mt == m.transpose());

  std::mt19937_64 rng(3);
  const auto r = random_tensor(rng, {{A, 2}, {B, 3}, {C, 4}});
  const std::vector<std::vector<ModeLabel>> parts[] = {
      {{A}, {B, C}}, {{C}, {A, B}}, {{B, A}, {C}}, {{C, B}, {A}}, {{A, B, C}, {}}};
  for (const auto& pr : parts) {
    const MatrixXd mm = matricize(r, pr[0], pr[1]);
    std::vector<Mode> rows, cols;
    for (const auto& l : pr[0]) rows.push_back(r.modes()[r.axis(l)]);
    for (const auto& l : pr[1]) cols.push_back(r.modes()[r.axis(l)]);
    const auto back = tensorize<double>(mm, rows, cols);
    // Compare entry by entry through labels: back may have a permuted order.
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t k = 0; k < 4; ++k) {
          std::vector<std::size_t> idx(3);
          idx[back.axis(A)] = i;
          idx[back.axis(B)] = j;
          idx[back.axis(C)] = k;
          CHECK(back.at(idx) == r.at({i, j, k}));
        }
  }
  CHECK(code_of([&] { matricize(r, {A}, {B}); }) == Errc::InvalidModePartition);
  CHECK(code_of([&] { matricize(r, {A, B}, {B, C}); }) == Errc::InvalidModePartition);
}

TEST_CASE("mode_product identity, association order and errors") {
  std::mt19937_64 rng(5);
  const auto T = random_tensor(rng, {{P, 3}, {Q, 4}});
  const auto I = identity_tensor<double>({{P, 3}});  // (p, p#1)
  const auto r = mode_product(I, relabel(T, P, P1), {P1});
  CHECK(r.modes()[0].label == P);
  CHECK(max_abs_diff(r.data(), T.data()) == 0);

  // A(s,p), Z(r,s), Y(t,r): A x (Y x Z) == (A x Z) x Y
  const ModeLabel s{"s", 0}, rr{"r", 0}, tt{"t", 0};
  const auto Am = random_tensor(rng, {{s, 3}, {P, 2}});
  const auto Z = random_tensor(rng, {{rr, 4}, {s, 3}});
  const auto Y = random_tensor(rng, {{tt, 5}, {rr, 4}});
  const auto left = mode_product(Am, mode_product(Y, Z));
  const auto right = mode_product(mode_product(Am, Z), Y);
  // left modes (p, t); right modes (p, t)
  REQUIRE(left.modes() == right.modes());
  for (std::size_t i = 0; i < left.size(); ++i) CHECK(left.data()[i] == doctest::Approx(right.data()[i]).epsilon(1e-12));

  CHECK(code_of([&] { mode_product(Am, Z, {}); }) == Errc::OuterProductNotSupported);
  const auto bad = random_tensor(rng, {{s, 4}});
  CHECK(code_of([&] { mode_product(Am, bad, {s}); }) == Errc::ShapeMismatch);
}

TEST_CASE("mode_product association on random 3-mode tensors (property)") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t da = dim(rng), db = dim(rng), dc = dim(rng), dd = dim(rng), de = dim(rng);
    const auto X = random_tensor(rng, {{A, da}, {B, db}, {C, dc}});
    const auto Y = random_tensor(rng, {{B, db}, {Q, dd}, {P, de}});
    const auto Z = random_tensor(rng, {{C, dc}, {Q, dd}});
    const auto r1 = mode_product(mode_product(X, Y, {B}), Z, {C, Q});
    const auto r2 = mode_product(X, mode_product(Y, Z, {Q}), {B, C});
    REQUIRE(r1.order() == r2.order());
    // r1 modes (a, p); r2 modes (a, p)
    double scale = 1e-300;
    for (double v : r1.data()) scale = std::max(scale, std::abs(v));
    CHECK(max_abs_diff(r1.data(), r2.data()) <= 1e-12 * scale * 10);
  }
}

TEST_CASE("duplicate_mode embeds a hyper-diagonal") {
  const NamedTensor v({{P, 3}}, {1, 2, 3});
  const auto d = duplicate_mode(v, P, 2);
  const MatrixXd m = matricize(d, {P}, {P1});
  CHECK(m == Eigen::Vector3d(1, 2, 3).asDiagonal().toDenseMatrix());

  std::mt19937_64 rng(2);
  const auto X = random_tensor(rng, {{P, 3}, {Q, 2}});
  const auto h = duplicate_mode(X, P, 3);
  REQUIRE(h.order() == 4);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t q = 0; q < 2; ++q) {
          const double want = (i == j && j == k) ? X.at({i, q}) : 0.0;
          CHECK(h.at({i, j, k, q}) == want);
        }

  const NamedTensor w({{P, 3}}, {4, 5, 6});
  const auto prod = mode_product(d, relabel(w, P, P1), {P1});
  CHECK(prod.data() == std::vector<double>{4, 10, 18});
  CHECK(code_of([&] { duplicate_mode(v, Q, 2); }) == Errc::UnknownMode);
}

TEST_CASE("identity_tensor") {
  const auto I3 = identity_tensor<double>({{P, 3}});
  CHECK(matricize(I3, {P}, {P1}) == MatrixXd::Identity(3, 3));
  const auto I23 = identity_tensor<double>({{P, 2}, {Q, 3}});
  CHECK(I23.order() == 4);
  CHECK(matricize(I23, {P, Q}, {P1, ModeLabel{"q", 1}}) == MatrixXd::Identity(6, 6));
  std::mt19937_64 rng(8);
  const auto T = random_tensor(rng, {{P, 2}, {Q, 3}, {C, 2}});
  const auto back = mode_product(T, I23, {P, Q});  // (c, p#1, q#1)
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t q = 0; q < 3; ++q)
      for (std::size_t c = 0; c < 2; ++c) CHECK(back.at({c, p, q}) == T.at({p, q, c}));
}

TEST_CASE("pinv_along examples and Moore-Penrose identities") {
  const auto I = identity_tensor<double>({{P, 3}});
  const auto Ii = pinv_along(I, {P1});
  CHECK(max_abs_diff(Ii.data(), I.data()) < 1e-14);

  const NamedTensor dg({{P, 2}, {Q, 2}}, {1, 0, 0, 0});
  CHECK(max_abs_diff(pinv_along(dg, {Q}).data(), dg.data()) < 1e-15);

  std::mt19937_64 rng(21);
  const auto full = random_tensor(rng, {{P, 4}, {Q, 6}});
  const auto W = pinv_along(full, {Q});
  // Contract over q: sum_q full(p', q) W(p, q) = (A A^+)(p', p)
  const auto prod = mode_product(full, relabel(W, P, P1), {Q});
  CHECK((matricize(prod, {P}, {P1}) - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);

  for (int trial = 0; trial < 30; ++trial) {
    const int m = 2 + trial % 5, n = 2 + (trial * 7) % 5, r = 1 + trial % std::min(m, n);
    const MatrixXd a = random_matrix(rng, m, r) * random_matrix(rng, r, n);
    const MatrixXd x = pinv<double>(a);
    CHECK((a * x * a - a).norm() < 1e-10 * a.norm());
    CHECK((x * a * x - x).norm() < 1e-10 * x.norm());
    CHECK((a * x - (a * x).transpose()).norm() < 1e-10);
    CHECK((x * a - (x * a).transpose()).norm() < 1e-10);
  }

  CHECK(code_of([&] { pinv_along(full, {Q}, PinvOptions{0.0, std::nullopt}); }) == Errc::InvalidTolerance);
  const NamedTensor zero({{P, 2}, {Q, 2}}, {0, 0, 0, 0});
  CHECK(code_of([&] { pinv_along(zero, {Q}); }) == Errc::RankZero);
  CHECK(code_of([&] { pinv_along(full, {P, Q}); }) == Errc::InvalidModePartition);
}

TEST_CASE("pinv truncation to a maximum rank") {
  MatrixXd a = MatrixXd::Zero(3, 3);
  a.diagonal() << 3, 2, 1;
  std::size_t kept = 0;
  const MatrixXd x = pinv<double>(a, PinvOptions{std::nullopt, 2}, &kept);
  CHECK(kept == 2);
  CHECK(x(0, 0) == doctest::Approx(1.0 / 3));
  CHECK(x(2, 2) == 0);
}

TEST_CASE("collapse_mode and marginalize") {
  std::mt19937_64 rng(4);
  const auto O = random_tensor(rng, {{P, 10}, {Q, 10}});
  const auto col = collapse_mode(O, Q, 2);
  for (std::size_t i = 0; i < 10; ++i) CHECK(col.data()[i] == O.at({i, 2}));
  const auto I = identity_tensor<double>({{P, 4}});
  CHECK(collapse_mode(I, P, 0).data() == std::vector<double>{1, 0, 0, 0});
  CHECK(code_of([&] { collapse_mode(O, Q, 10); }) == Errc::IndexOutOfRange);

  const auto T = random_tensor(rng, {{A, 2}, {B, 3}, {C, 4}});
  const auto mC = marginalize(T, C);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto slice = collapse_mode(T, B, k);
    CHECK(slice.sum() == doctest::Approx(collapse_mode(mC, B, k).sum()).epsilon(1e-12));
  }
}

TEST_CASE("khatri_rao_cols and kron") {
  const MatrixXd I2 = MatrixXd::Identity(2, 2);
  const MatrixXd kr = khatri_rao_cols<double>(I2, I2);
  MatrixXd want = MatrixXd::Zero(4, 2);
  want(0, 0) = 1;
  want(3, 1) = 1;
  CHECK(kr == want);
  CHECK(code_of([] { khatri_rao_cols<double>(MatrixXd::Ones(2, 2), MatrixXd::Ones(2, 3)); }) == Errc::ShapeMismatch);

  CHECK(kron<double>(I2, MatrixXd::Identity(3, 3)) == MatrixXd::Identity(6, 6));
  const MatrixXd a = (MatrixXd(2, 1) << 1, 2).finished(), b = (MatrixXd(1, 2) << 3, 4).finished();
  CHECK(kron<double>(a, b) == a * b);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd x = random_matrix(rng, 3, 2), y = random_matrix(rng, 2, 2);
    CHECK(numerical_rank<double>(kron<double>(x, y), 1e-10) ==
          numerical_rank<double>(x, 1e-10) * numerical_rank<double>(y, 1e-10));
  }
}

TEST_CASE("numerical_rank threshold semantics") {
  CHECK(numerical_rank<double>(MatrixXd::Identity(5, 5), 1e-10) == 5);
  CHECK(numerical_rank<double>(MatrixXd::Zero(3, 4), 1e-10) == 0);
  MatrixXd d = MatrixXd::Zero(2, 2);
  d(0, 0) = 1;
  d(1, 1) = 1e-14;
  CHECK(numerical_rank<double>(d, 1e-10) == 1);
  CHECK(code_of([&] { numerical_rank<double>(d, 0.0); }) == Errc::InvalidTolerance);
}

TEST_CASE("rank lemmas: 100 randomized trials each") {
  Rng rng(2024);
  int f1 = 0, f2 = 0, f3 = 0;
  for (int i = 0; i < 100; ++i) {
    f1 += !lemma_khatri_rao_identity(rng).pass;
    f2 += !lemma_block_row(rng).pass;
    f3 += !lemma_subset_independence(rng).pass;
  }
  CHECK(f1 == 0);
  CHECK(f2 == 0);
  CHECK(f3 == 0);
}

TEST_CASE("quad precision instantiation agrees with double") {
  std::mt19937_64 rng(13);
  const auto t = random_tensor(rng, {{P, 3}, {Q, 5}});
  const auto wq = pinv_along(t.cast<Quad>(), {Q});
  const auto wd = pinv_along(t, {Q});
  for (std::size_t i = 0; i < wd.size(); ++i) CHECK(static_cast<double>(wq.data()[i]) == doctest::Approx(wd.data()[i]).epsilon(1e-10));
}
