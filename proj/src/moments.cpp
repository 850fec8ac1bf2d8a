#include "shsmm/moments.hpp"

#include <algorithm>
#include <set>
#include <thread>

#include "shsmm/errors.hpp"

namespace shsmm {

std::size_t ObservationSchedule::side(int n_o) const {
  std::size_t s = 1;
  for (int i = 0; i < ell; ++i) s *= static_cast<std::size_t>(n_o);
  return s;
}

std::size_t ObservationSchedule::factor_rank() const {
  std::size_t pow = 1;
  const std::size_t m = static_cast<std::size_t>(n_x) * n_d;
  for (int i = 0; i < ell && pow < m; ++i) pow *= static_cast<std::size_t>(n_x);
  return std::min(pow, m);
}

std::vector<int> schedule_offsets(int n_x, int n_d, int ell) {
  std::set<int> offs;
  long long pw = 1;  // n_x^i, saturating once it passes n_d
  for (int i = 0; i < ell; ++i) {
    const long long r = static_cast<long long>(n_d - 1) - (pw - 1);
    offs.insert(static_cast<int>(std::max(0LL, r)));
    if (pw <= n_d) pw *= n_x;
  }
  return {offs.begin(), offs.end()};
}

ObservationSchedule build_schedule(int n_x, int n_d) {
  if (n_x < 1 || n_d < 1) throw Error(Errc::InvalidArgument, "n_x and n_d must be positive");
  ObservationSchedule s;
  s.n_x = n_x;
  s.n_d = n_d;
  s.span = n_d;
  if (n_x == 1) {
    for (int i = 0; i < n_d; ++i) s.right_offsets.push_back(i);
  } else {
    // Smallest ell with n_x^(ell-1) >= n_d, i.e. ceil(1 + log n_d / log n_x),
    // computed on integers so exact powers do not round up.
    int ell = 1;
    for (long long pw = 1; pw < n_d; pw *= n_x) ++ell;
    s.right_offsets = schedule_offsets(n_x, n_d, ell);
  }
  s.ell = static_cast<int>(s.right_offsets.size());
  for (int r : s.right_offsets) s.left_offsets.push_back(s.span - 1 - r);
  std::sort(s.left_offsets.begin(), s.left_offsets.end());
  return s;
}

namespace {

struct Counts {
  std::vector<double> lr, shift, lro, oo, start;
  std::size_t windows = 0, pairs = 0, starts = 0;

  Counts(std::size_t side, int n_o)
      : lr(side * side, 0), shift(side * side, 0), lro(side * side * n_o, 0), oo(n_o * n_o, 0),
        start(n_o * n_o * side, 0) {}

  void add(const Counts& o) {
    auto acc = [](std::vector<double>& a, const std::vector<double>& b) {
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    acc(lr, o.lr);
    acc(shift, o.shift);
    acc(lro, o.lro);
    acc(oo, o.oo);
    acc(start, o.start);
    windows += o.windows;
    pairs += o.pairs;
    starts += o.starts;
  }
};

std::size_t encode(const Sequence& s, int base, const std::vector<int>& offs, int n_o) {
  std::size_t c = 0;
  for (int r : offs) c = c * n_o + static_cast<std::size_t>(s[base + r]);
  return c;
}

void check_sequence(const Sequence& s, int n_o) {
  for (auto o : s)
    if (o < 0 || o >= n_o) throw Error(Errc::UnknownSymbol, "symbol " + std::to_string(o));
}

// Counts windows at anchors in [lo, hi] (clamped per sequence).
void count_sequence(const Sequence& s, const ObservationSchedule& sc, int n_o, std::size_t side, int lo, int hi,
                    bool pairs_at_anchor, Counts& c) {
  const int T = static_cast<int>(s.size());
  const int first = std::max(lo, sc.first_anchor());
  const int last = std::min(hi, sc.last_anchor(T));
  for (int tau = first; tau <= last; ++tau) {
    const std::size_t l = encode(s, tau - sc.span, sc.left_offsets, n_o);
    const std::size_t r = encode(s, tau + 1, sc.right_offsets, n_o);
    const std::size_t r2 = encode(s, tau + 2, sc.right_offsets, n_o);
    c.lr[l * side + r] += 1;
    c.shift[l * side + r2] += 1;
    c.lro[(l * side + r) * n_o + s[tau]] += 1;
    ++c.windows;
  }
  if (pairs_at_anchor) {
    if (lo + 1 < T) {
      c.oo[s[lo] * n_o + s[lo + 1]] += 1;
      ++c.pairs;
    }
  } else {
    for (int t = 0; t + 1 < T; ++t) c.oo[s[t] * n_o + s[t + 1]] += 1;
    c.pairs += T > 1 ? T - 1 : 0;
  }
  if (T >= sc.span + 2) {
    c.start[(s[0] * n_o + s[1]) * side + encode(s, 2, sc.right_offsets, n_o)] += 1;
    ++c.starts;
  }
}

MomentSet finish(const Counts& c, const ObservationSchedule& sc, int n_o, std::size_t side) {
  using namespace labels;
  if (c.windows == 0)
    throw Error(Errc::InsufficientData,
                "no window placement; sequences need length >= " + std::to_string(sc.min_length()));
  auto norm = [](std::vector<double> v, double n) {
    for (auto& e : v) e /= n;
    return v;
  };
  const Mode mol{OL, side}, mor{OR, side}, mo{o, static_cast<std::size_t>(n_o)};
  MomentSet m;
  m.n_o = n_o;
  m.sched = sc;
  m.window_count = c.windows;
  const double w = static_cast<double>(c.windows);
  m.m_lr = NamedTensor({mol, mor}, norm(c.lr, w));
  m.m_lr_shift = NamedTensor({mol, mor}, norm(c.shift, w));
  m.m_lro = NamedTensor({mol, mor, mo}, norm(c.lro, w));
  m.m_oo = NamedTensor({mo, {o2, mo.dim}}, norm(c.oo, std::max<double>(1, c.pairs)));
  m.m_start = NamedTensor({{o_first, mo.dim}, {o_second, mo.dim}, mor}, norm(c.start, std::max<double>(1, c.starts)));
  return m;
}

}  // namespace

MomentSet estimate_moments(const std::vector<Sequence>& seqs, const ObservationSchedule& sc, int n_o, int threads) {
  for (const auto& s : seqs) check_sequence(s, n_o);
  const std::size_t side = sc.side(n_o);
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::max(1, std::min<int>(threads, static_cast<int>(seqs.size() / 256) + 1));
  std::vector<Counts> parts(threads, Counts(side, n_o));
  auto work = [&](int w) {
    for (std::size_t i = w; i < seqs.size(); i += threads)
      count_sequence(seqs[i], sc, n_o, side, 0, static_cast<int>(seqs[i].size()), false, parts[w]);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (int w = 1; w < threads; ++w) parts[0].add(parts[w]);
  return finish(parts[0], sc, n_o, side);
}

MomentSet estimate_moments_at(const std::vector<Sequence>& seqs, const ObservationSchedule& sc, int n_o, int tau) {
  for (const auto& s : seqs) check_sequence(s, n_o);
  const std::size_t side = sc.side(n_o);
  Counts c(side, n_o);
  for (const auto& s : seqs) count_sequence(s, sc, n_o, side, tau, tau, true, c);
  return finish(c, sc, n_o, side);
}

template <class S>
std::pair<BasicMomentSet<S>, AnalyticFactorContext<S>> analytic_moments(const HsmmParams& p,
                                                                       const ObservationSchedule& sc, int T,
                                                                       int anchor) {
  using namespace labels;
  require_valid(p);
  if (sc.n_x != p.n_x || sc.n_d != p.n_d) throw Error(Errc::ShapeMismatch, "schedule built for another model");
  int lo = sc.first_anchor(), hi = sc.last_anchor(T);
  if (anchor >= 0) {
    if (anchor < lo || anchor > hi) throw Error(Errc::InsufficientData, "anchor outside valid range");
    lo = hi = anchor;
  }
  if (lo > hi)
    throw Error(Errc::InsufficientData, "horizon too short; need length >= " + std::to_string(sc.min_length()));

  const int n_o = p.n_o, m = p.n_x * p.n_d;
  const std::size_t side = sc.side(n_o);
  const auto L = lifted_ops<S>(p);
  const Mat<S> Vs = L.Dl * L.Xl;  // s_t -> s_{t+1}
  const Mat<S> G = window_given_state<S>(p, sc.right_offsets, Conditioning::Separator);
  const Mat<S> G2 = G * L.Xl * L.Dl;

  std::vector<Vec<S>> alpha{L.s1};  // marginal of s_t
  for (int t = 1; t < T; ++t) alpha.push_back(Vs * alpha.back());

  Mat<S> lr = Mat<S>::Zero(side, side), sh = Mat<S>::Zero(side, side), left_sum = Mat<S>::Zero(side, m);
  Mat<S> lro = Mat<S>::Zero(side, side * n_o);
  Vec<S> k_sum = Vec<S>::Zero(m);
  AnalyticFactorContext<S> ctx;
  for (int tau = lo; tau <= hi; ++tau) {
    const int a = tau - sc.span;
    Mat<S> P = alpha[a].transpose();  // rows: left-window prefixes, cols: s_t
    for (int t = a; t < tau; ++t) {
      if (t > a) P = P * Vs.transpose();
      if (std::find(sc.left_offsets.begin(), sc.left_offsets.end(), t - a) != sc.left_offsets.end()) {
        Mat<S> next(P.rows() * n_o, m);
        for (Eigen::Index r = 0; r < P.rows(); ++r)
          for (int o = 0; o < n_o; ++o) next.row(r * n_o + o) = P.row(r).cwiseProduct(L.emit.row(o));
        P = std::move(next);
      }
    }
    const Mat<S> J = P * L.Xl.transpose();  // p(O_L, u_tau)
    lr += J * G.transpose();
    sh += J * G2.transpose();
    for (int o = 0; o < n_o; ++o) {
      const Mat<S> blk = J * L.emit.row(o).transpose().asDiagonal() * G.transpose();
      for (std::size_t r = 0; r < side; ++r) lro.col(r * n_o + o) += blk.col(r);
    }
    const Vec<S> k = L.Xl * alpha[tau - 1];
    left_sum += J;
    k_sum += k;
    ctx.k_marginals.push_back(BasicTensor<S>({{state, static_cast<std::size_t>(m)}},
                                             std::vector<S>(k.data(), k.data() + m)));
  }
  const S n_anchor = S(hi - lo + 1);
  lr /= n_anchor;
  sh /= n_anchor;
  lro /= n_anchor;

  Mat<S> oo = Mat<S>::Zero(n_o, n_o);
  const Mat<S> next_emit = L.emit * L.Xl;  // p(o_{t+1} | s_t)
  if (anchor >= 0) {
    oo = L.emit * alpha[anchor].asDiagonal() * next_emit.transpose();
  } else {
    for (int t = 0; t + 1 < T; ++t) oo += L.emit * alpha[t].asDiagonal() * next_emit.transpose();
    oo /= S(T - 1);
  }

  Mat<S> start(n_o * n_o, side);
  for (int o0 = 0; o0 < n_o; ++o0) {
    const Vec<S> u1 = L.Xl * L.emit.row(o0).transpose().cwiseProduct(L.s1);
    for (int o1 = 0; o1 < n_o; ++o1)
      start.row(o0 * n_o + o1) = (G * u1.cwiseProduct(L.emit.row(o1).transpose())).transpose();
  }

  auto flat = [](const Mat<S>& mtx, std::vector<Mode> rows, std::vector<Mode> cols) {
    return tensorize<S>(mtx, rows, cols);
  };
  const Mode mol{OL, side}, mor{OR, side}, mo{o, static_cast<std::size_t>(n_o)}, ms{state, static_cast<std::size_t>(m)};
  BasicMomentSet<S> ms_out;
  ms_out.n_o = n_o;
  ms_out.sched = sc;
  ms_out.window_count = static_cast<std::size_t>(hi - lo + 1);
  ms_out.m_lr = flat(lr, {mol}, {mor});
  ms_out.m_lr_shift = flat(sh, {mol}, {mor});
  ms_out.m_lro = flat(lro, {mol}, {mor, mo});
  ms_out.m_oo = flat(oo, {mo}, {{o2, mo.dim}});
  ms_out.m_start = flat(start, {{o_first, mo.dim}, {o_second, mo.dim}}, {mor});

  ctx.f_right = flat(G, {mor}, {ms});
  Mat<S> fl = left_sum;
  for (int j = 0; j < m; ++j)
    if (k_sum(j) > S(0)) fl.col(j) /= k_sum(j);
  ctx.f_left = flat(fl, {mol}, {ms});
  return {std::move(ms_out), std::move(ctx)};
}

template std::pair<BasicMomentSet<double>, AnalyticFactorContext<double>> analytic_moments<double>(
    const HsmmParams&, const ObservationSchedule&, int, int);
template std::pair<BasicMomentSet<Quad>, AnalyticFactorContext<Quad>> analytic_moments<Quad>(
    const HsmmParams&, const ObservationSchedule&, int, int);

}  // namespace shsmm
