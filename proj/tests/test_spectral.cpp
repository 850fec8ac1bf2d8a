#include <cmath>
#include <sstream>

#include <Eigen/SVD>

#include "doctest.h"
#include "shsmm/errors.hpp"
#include "shsmm/io.hpp"
#include "shsmm/spectral.hpp"
#include "test_util.hpp"

using namespace shsmm;
using namespace shsmm::labels;

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

double rel_to_forward(const InferenceResult& r, const HsmmParams& p, const Sequence& s) {
  return std::abs(r.ratio_to(forward_likelihood(p, s).log_p) - 1);
}

Sequence random_obs(Rng& rng, int n_o, int T) {
  std::uniform_int_distribution<int> u(0, n_o - 1);
  Sequence s(T);
  for (auto& o : s) o = u(rng);
  return s;
}

double frob(const NamedTensor& a, const NamedTensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("population moments reproduce forward likelihood, (3,2,2)") {
  for (int seed = 1; seed <= 5; ++seed) {
    const auto p = random_model(3, 2, 2, seed);
    const auto sc = build_schedule(2, 2);
    const auto mq = build_observable(analytic_moments<Quad>(p, sc, 40).first);
    const auto md = build_observable(analytic_moments<double>(p, sc, 40).first);
    Rng rng(seed);
    for (int k = 0; k < 40; ++k) {
      const auto s = random_obs(rng, 3, 3 + k % 8);
      CHECK(rel_to_forward(infer(mq, s), p, s) <= 1e-12);
      // m_lr's weakest kept singular value reaches 1e-8 on some draws, so
      // double precision only keeps about eight digits.
      CHECK(rel_to_forward(infer(md, s), p, s) <= 1e-6);
    }
  }
}

TEST_CASE("population moments reproduce forward likelihood, (5,4,6) in quad precision") {
  const auto p = random_model(5, 4, 6, 2);
  const auto sc = build_schedule(4, 6);
  const auto m = build_observable(analytic_moments<Quad>(p, sc, sc.min_length() + 4).first);
  Rng rng(3);
  for (int k = 0; k < 8; ++k) {
    const auto s = random_obs(rng, 5, 3 + k);
    CHECK(rel_to_forward(infer(m, s), p, s) <= 1e-8);
  }
}

TEST_CASE("o_tilde is a projector; identity when n_x = n_o") {
  const auto p = random_model(3, 2, 2, 4);
  const auto m = build_observable(analytic_moments<double>(p, build_schedule(2, 2), 20).first);
  const MatrixXd Ot = matricize(m.o_tilde, {o}, {o2});
  CHECK((Ot * Ot - Ot).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(std::abs(Ot.trace() - 2) < 1e-10);

  const auto sq = random_model(2, 2, 2, 4);
  const auto ms = build_observable(analytic_moments<double>(sq, build_schedule(2, 2), 20).first);
  CHECK((matricize(ms.o_tilde, {o}, {o2}) - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("build_observable performs three inversions and three contractions") {
  const auto p = random_model(3, 2, 2, 6);
  const auto mom = analytic_moments<double>(p, build_schedule(2, 2), 20).first;
  op_counters().reset();
  build_observable(mom);
  CHECK(op_counters().pinv == 3);
  CHECK(op_counters().contraction == 3);
  // Independent of the horizon the moments were pooled over.
  const auto longer = analytic_moments<double>(p, build_schedule(2, 2), 200).first;
  op_counters().reset();
  build_observable(longer);
  CHECK(op_counters().pinv == 3);
  CHECK(op_counters().contraction == 3);
}

TEST_CASE("degenerate moments are reported") {
  const auto p = random_model(3, 2, 2, 6);
  auto mom = analytic_moments<double>(p, build_schedule(2, 2), 20).first;
  mom.m_lr = NamedTensor::zeros(mom.m_lr.modes());
  const auto e = code_of([&] { build_observable(mom); });
  CHECK(e == Errc::DegenerateMoments);
  try {
    build_observable(mom);
  } catch (const Error& err) {
    CHECK(std::string(err.what()).find("m_lr") != std::string::npos);
  }

  // Identical sequences give rank-one moments.
  const std::vector<Sequence> same(50, Sequence{0, 1, 2, 0, 1, 2, 0, 1});
  const auto sc = build_schedule(2, 2);
  CHECK(code_of([&] { build_observable(estimate_moments(same, sc, 3, 1)); }) == Errc::DegenerateMoments);
  CHECK(code_of([&] { build_observable_per_t(same, sc, 3); }) == Errc::DegenerateMoments);
}

TEST_CASE("infer preconditions and degenerate chain") {
  const auto p = random_model(3, 2, 2, 6);
  const auto m = build_observable(analytic_moments<double>(p, build_schedule(2, 2), 20).first);
  CHECK(code_of([&] { infer(m, {0, 1}); }) == Errc::SequenceTooShort);
  CHECK(code_of([&] { infer(m, {0, 1, 3}); }) == Errc::UnknownSymbol);
  const CompiledObservable c(m);
  CHECK(code_of([&] { c.infer({0, 1}); }) == Errc::SequenceTooShort);

  HsmmParams one;
  one.n_o = 1;
  one.n_x = 1;
  one.n_d = 1;
  one.O = MatrixXd::Ones(1, 1);
  one.X = MatrixXd::Ones(1, 1);
  one.D = MatrixXd::Ones(1, 1);
  one.pi_x = VectorXd::Ones(1);
  const auto m1 = build_observable(analytic_moments<double>(one, build_schedule(1, 1), 10).first);
  const auto r = infer(m1, Sequence(7, 0));
  CHECK(r.sign == 1);
  CHECK(std::abs(r.log_value) < 1e-14);
}

TEST_CASE("renormalisation and evaluation order do not change the result") {
  const auto p = random_model(4, 2, 3, 8);
  const auto sc = build_schedule(2, 3);
  const auto m = build_observable(analytic_moments<double>(p, sc, 30).first);
  const CompiledObservable c(m);
  const MatrixXd D = matricize(m.d_tilde, {OR}, {OR2});
  const MatrixXd Ot = matricize(m.o_tilde, {o}, {o2});
  const MatrixXd E = matricize(m.end_factor, {OR}, {o});
  Rng rng(2);
  for (int k = 0; k < 30; ++k) {
    const auto s = random_obs(rng, 4, 3 + k % 9);
    const auto a = infer(m, s, true), b = infer(m, s, false);
    CHECK(std::abs(a.log_value - b.log_value) < 1e-10);
    CHECK(a.sign == b.sign);
    const auto cc = c.infer(s);
    CHECK(std::abs(cc.log_value - a.log_value) < 1e-10);

    // Right-to-left accumulation.
    VectorXd back = D * (E * Ot.col(s.back()));
    for (std::size_t t = s.size() - 2; t >= 2; --t) {
      MatrixXd B = MatrixXd::Zero(D.rows(), D.cols());
      for (int q = 0; q < 4; ++q) B += Ot(q, s[t]) * matricize(collapse_mode(m.x_tilde, o, q), {OR}, {OR2});
      back = D * (B * back);
    }
    const auto v0 = collapse_mode(collapse_mode(m.start_factor, o_first, s[0]), o_second, s[1]);
    const double total = Eigen::Map<const VectorXd>(v0.data().data(), v0.size()).dot(back);
    CHECK(std::abs(std::log(std::abs(total)) - a.log_value) < 1e-9);
  }
}

TEST_CASE("per-anchor analytic models coincide with the pooled model") {
  const auto p = random_model(3, 2, 2, 10);
  const auto sc = build_schedule(2, 2);
  const int T = 14;
  const auto pooled = build_observable(analytic_moments<Quad>(p, sc, T).first);
  for (int tau = sc.first_anchor(); tau <= sc.last_anchor(T); ++tau) {
    const auto at = build_observable(analytic_moments<Quad>(p, sc, T, tau).first);
    // The tensors themselves differ per anchor; the likelihoods they produce
    // must not.
    Rng rng(tau);
    for (int k = 0; k < 5; ++k) {
      const auto s = random_obs(rng, 3, 4 + k);
      CHECK(std::abs(infer(at, s).log_value - infer(pooled, s).log_value) < 1e-12);
    }
    double od = 0;
    for (std::size_t i = 0; i < at.o_tilde.size(); ++i)
      od = std::max(od, std::abs(static_cast<double>(at.o_tilde.data()[i] - pooled.o_tilde.data()[i])));
    CHECK(od < 1e-12);
  }
}

TEST_CASE("finite samples: per-anchor tensors deviate more than pooled ones") {
  // Elementwise distances only mean something when the weakest kept singular
  // value of m_lr clears the sampling noise; this draw has it near 1.6e-3.
  const auto p = random_model(3, 2, 2, 2);
  const auto sc = build_schedule(2, 2);
  const int T = 30;
  {
    const auto sv = Eigen::JacobiSVD<MatrixXd>(matricize(analytic_moments<double>(p, sc, T).first.m_lr, {OL}, {OR}))
                        .singularValues();
    REQUIRE(sv(3) > 1e-3);
  }
  Rng rng(99);
  const auto seqs = sample_many(p, 500, T, rng);
  const auto pooled = build_observable(estimate_moments(seqs, sc, 3, 1));
  const auto per_t = build_observable_per_t(seqs, sc, 3);
  const auto pooled_truth = build_observable(analytic_moments<double>(p, sc, T).first);
  const double d_pool = frob(pooled.d_tilde, pooled_truth.d_tilde) + frob(pooled.x_tilde, pooled_truth.x_tilde) +
                        frob(pooled.o_tilde, pooled_truth.o_tilde);
  double d_per = 0;
  for (std::size_t i = 0; i < per_t.anchors.size(); ++i) {
    const int tau = per_t.first + static_cast<int>(i);
    const auto truth = build_observable(analytic_moments<double>(p, sc, T, tau).first);
    d_per += frob(per_t.anchors[i].d_tilde, truth.d_tilde) + frob(per_t.anchors[i].x_tilde, truth.x_tilde) +
             frob(per_t.anchors[i].o_tilde, truth.o_tilde);
  }
  d_per /= static_cast<double>(per_t.anchors.size());
  CHECK(d_pool < d_per);
}

TEST_CASE("learned model containers round-trip") {
  const auto p = random_model(3, 2, 2, 10);
  const auto sc = build_schedule(2, 2);
  Rng rng(4);
  const auto seqs = sample_many(p, 300, 20, rng);
  const auto m = build_observable(estimate_moments(seqs, sc, 3, 1));
  std::stringstream ss;
  write_container(observable_to_container(m), ss);
  const auto back = observable_from_container(read_container(ss));
  CHECK(back.x_tilde.data() == m.x_tilde.data());
  CHECK(back.end_factor.modes() == m.end_factor.modes());
  CHECK(back.rank == m.rank);

  const auto pt = build_observable_per_t(seqs, sc, 3);
  std::stringstream s2;
  write_container(per_t_to_container(pt), s2);
  const auto pt2 = per_t_from_container(read_container(s2));
  CHECK(pt2.anchors.size() == pt.anchors.size());
  CHECK(pt2.first == pt.first);
  const Sequence s{0, 1, 2, 2, 1, 0, 0};
  CHECK(infer_per_t(pt2, s).log_value == infer_per_t(pt, s).log_value);

  std::stringstream s3;
  write_container(per_t_to_container(pt), s3);
  CHECK(code_of([&] { observable_from_container(read_container(s3)); }) == Errc::ParseError);
}

TEST_CASE("score_file streams rows and error rows") {
  const auto p = random_model(3, 2, 2, 10);
  const auto m = build_observable(analytic_moments<double>(p, build_schedule(2, 2), 20).first);
  const CompiledObservable c(m);
  {
    std::stringstream in, out;
    const auto sum = score_file(c, in, out);
    CHECK(out.str() == "id,log_value,sign,clamped,norm_loglik\n");
    CHECK(sum.rows == 0);
  }
  {
    std::stringstream in("0 1\n# note\n0 1 2 2\n0 9 1\n0 a\n"), out;
    const auto sum = score_file(c, in, out);
    CHECK(sum.rows == 4);
    CHECK(sum.errors == 3);
    const std::string s = out.str();
    CHECK(s.find("0,ERROR:SequenceTooShort@line1,,,") != std::string::npos);
    CHECK(s.find("2,ERROR:UnknownSymbol@line4,,,") != std::string::npos);
    CHECK(s.find("3,ERROR:ParseError@line5,,,") != std::string::npos);
  }
  {
    Rng rng(5);
    std::stringstream in, out;
    for (const auto& s : sample_many(p, 1000, 50, rng)) {
      for (auto v : s) in << v << ' ';
      in << '\n';
    }
    const auto sum = score_file(c, in, out);
    CHECK(sum.rows == 1000);
    CHECK(sum.errors == 0);
    std::string line;
    std::getline(out, line);
    int rows = 0;
    while (std::getline(out, line)) {
      ++rows;
      const auto a = line.find(','), b = line.find(',', a + 1);
      CHECK(std::isfinite(std::stod(line.substr(a + 1, b - a - 1))));
    }
    CHECK(rows == 1000);
  }
}
