#include "shsmm/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "shsmm/errors.hpp"
#include "shsmm/kernels.hpp"

namespace shsmm {

using namespace labels;

namespace {

template <class S>
BasicTensor<S> window_inverse(const BasicTensor<S>& m_lr, const PinvOptions& po, const char* what,
                              std::size_t target) {
  std::size_t kept = 0;
  try {
    const Mat<S> a = matricize(m_lr, {OL}, {OR});
    const Mat<S> w = pinv(a, po, &kept);
    if (kept < target)
      throw Error(Errc::DegenerateMoments,
                  std::string(what) + " has rank " + std::to_string(kept) + " < " + std::to_string(target));
    return tensorize<S>(Mat<S>(w.transpose()), {m_lr.modes()[m_lr.axis(OL)]}, {m_lr.modes()[m_lr.axis(OR)]});
  } catch (const Error& e) {
    if (e.code() == Errc::RankZero) throw Error(Errc::DegenerateMoments, std::string(what) + ": " + e.what());
    throw;
  }
}

template <class S>
double log_abs(const S& v) {
  using std::log;
  using std::abs;
  return static_cast<double>(log(abs(v)));
}

template <class S>
InferenceResult finish_result(const S& s, double scale) {
  InferenceResult r;
  if (s > S(0)) r.sign = 1;
  else if (s < S(0)) r.sign = -1;
  if (r.sign == 0) {
    r.log_value = std::log(std::numeric_limits<double>::denorm_min()) + scale;
    r.clamped = true;
    return r;
  }
  r.log_value = log_abs(s) + scale;
  r.clamped = r.sign < 0;
  return r;
}

void check_obs(const Sequence& obs, int n_o) {
  if (obs.size() < 3) throw Error(Errc::SequenceTooShort, "need T >= 3, got " + std::to_string(obs.size()));
  for (auto o : obs)
    if (o < 0 || o >= n_o) throw Error(Errc::UnknownSymbol, "symbol " + std::to_string(o));
}

}  // namespace

double InferenceResult::ratio_to(double reference_log) const {
  const double d = std::min(log_value - reference_log, 700.0);
  return sign * std::exp(d);
}

template <class S>
BasicObservableModel<S> build_observable(const BasicMomentSet<S>& m, const BuildOptions& opt) {
  const auto& sc = m.sched;
  PinvOptions win, pair;
  win.rtol = pair.rtol = opt.rtol;
  std::size_t win_target = 1, pair_target = 1;
  if (opt.truncate_to_model_rank) {
    win_target = sc.factor_rank();
    pair_target = static_cast<std::size_t>(sc.n_x);
    win.max_rank = win_target;
    pair.max_rank = pair_target;
  }
  BasicObservableModel<S> out;
  out.n_o = m.n_o;
  out.sched = sc;
  out.pinv_rtol = opt.rtol.value_or(0.0);
  out.rank = win_target;

  const auto inv_d = window_inverse(m.m_lr, win, "m_lr", win_target);
  out.d_tilde = mode_product(inv_d, relabel(m.m_lr_shift, OR, OR2), {OL});

  const auto inv_x = window_inverse(m.m_lr, win, "m_lr", win_target);
  out.x_tilde = mode_product(inv_x, relabel(m.m_lro, OR, OR2), {OL});

  BasicTensor<S> inv_o;
  try {
    std::size_t kept = 0;
    const Mat<S> a = matricize(m.m_oo, {o}, {o2});
    const Mat<S> w = pinv(a, pair, &kept);
    if (kept < pair_target)
      throw Error(Errc::DegenerateMoments,
                  "m_oo has rank " + std::to_string(kept) + " < " + std::to_string(pair_target));
    inv_o = tensorize<S>(Mat<S>(w.transpose()), {m.m_oo.modes()[0]}, {m.m_oo.modes()[1]});
  } catch (const Error& e) {
    if (e.code() == Errc::RankZero) throw Error(Errc::DegenerateMoments, std::string("m_oo: ") + e.what());
    throw;
  }
  // (M M^+)(b, a) stored as o_tilde(a, b).
  const ModeLabel tmp{"o", 2};
  out.o_tilde = relabel(mode_product(inv_o, relabel(m.m_oo, o, tmp), {o2}), tmp, o2);

  out.start_factor = m.m_start;
  out.end_factor = marginalize(out.x_tilde, OR2);
  if (out.end_factor.modes()[0].label != OR) throw Error(Errc::ShapeMismatch, "unexpected end factor layout");
  return out;
}

template <class S>
InferenceResult infer(const BasicObservableModel<S>& m, const Sequence& obs, bool renormalize) {
  check_obs(obs, m.n_o);
  const std::size_t T = obs.size();
  BasicTensor<S> v = collapse_mode(collapse_mode(m.start_factor, o_first, obs[0]), o_second, obs[1]);
  double scale = 0;
  auto advance = [&](const BasicTensor<S>& msg) { return relabel(mode_product(msg, m.d_tilde, {OR}), OR2, OR); };
  for (std::size_t t = 2; t + 1 < T; ++t) {
    const auto w = advance(v);
    const auto emit = mode_product(m.x_tilde, collapse_mode(m.o_tilde, o2, obs[t]), {o});
    v = relabel(mode_product(w, emit, {OR}), OR2, OR);
    if (renormalize) {
      S norm(0);
      for (const auto& e : v.data()) norm += (e < S(0) ? -e : e);
      if (norm == S(0)) return finish_result(S(0), scale);
      std::vector<S> d = v.data();
      for (auto& e : d) e /= norm;
      scale += log_abs(norm);
      v = BasicTensor<S>(v.modes(), std::move(d));
    }
  }
  const auto w = advance(v);
  const auto end = mode_product(m.end_factor, collapse_mode(m.o_tilde, o2, obs[T - 1]), {o});
  const auto s = mode_product(w, end, {OR});
  return finish_result(s.data()[0], scale);
}

const ObservableModel& PerTModel::at_time(int t) const {
  if (anchors.empty()) throw Error(Errc::InvalidArgument, "empty per-anchor model");
  const int i = std::clamp(t - first, 0, static_cast<int>(anchors.size()) - 1);
  return anchors[i];
}

PerTModel build_observable_per_t(const std::vector<Sequence>& seqs, const ObservationSchedule& sc, int n_o,
                                 const BuildOptions& opt) {
  if (seqs.empty()) throw Error(Errc::InsufficientData, "no sequences");
  std::size_t shortest = seqs.front().size();
  for (const auto& s : seqs) shortest = std::min(shortest, s.size());
  const int T = static_cast<int>(shortest);
  PerTModel out;
  out.first = sc.first_anchor();
  if (sc.last_anchor(T) < out.first)
    throw Error(Errc::InsufficientData, "need length >= " + std::to_string(sc.min_length()));
  for (int tau = out.first; tau <= sc.last_anchor(T); ++tau) {
    try {
      auto model = build_observable(estimate_moments_at(seqs, sc, n_o, tau), opt);
      model.anchor = tau;
      out.anchors.push_back(std::move(model));
    } catch (const Error& e) {
      if (e.code() == Errc::DegenerateMoments || e.code() == Errc::InsufficientData)
        throw Error(Errc::DegenerateMoments, "anchor " + std::to_string(tau) + ": " + e.what());
      throw;
    }
  }
  return out;
}

InferenceResult infer_per_t(const PerTModel& pm, const Sequence& obs) {
  const auto& first = pm.at_time(0);
  check_obs(obs, first.n_o);
  const std::size_t T = obs.size();
  // Message bookkeeping mirrors infer(); the operators come from the anchor
  // nearest to each step.
  NamedTensor v = collapse_mode(collapse_mode(first.start_factor, o_first, obs[0]), o_second, obs[1]);
  double scale = 0;
  for (std::size_t t = 2; t + 1 < T; ++t) {
    const auto& m = pm.at_time(static_cast<int>(t));
    const auto w = relabel(mode_product(v, m.d_tilde, {OR}), OR2, OR);
    const auto emit = mode_product(m.x_tilde, collapse_mode(m.o_tilde, o2, obs[t]), {o});
    v = relabel(mode_product(w, emit, {OR}), OR2, OR);
    double norm = 0;
    for (double e : v.data()) norm += std::fabs(e);
    if (norm == 0) return finish_result(0.0, scale);
    std::vector<double> d = v.data();
    for (auto& e : d) e /= norm;
    scale += std::log(norm);
    v = NamedTensor(v.modes(), std::move(d));
  }
  const auto& m = pm.at_time(static_cast<int>(T - 1));
  const auto w = relabel(mode_product(v, m.d_tilde, {OR}), OR2, OR);
  const auto end = mode_product(m.end_factor, collapse_mode(m.o_tilde, o2, obs[T - 1]), {o});
  return finish_result(mode_product(w, end, {OR}).data()[0], scale);
}

CompiledObservable::CompiledObservable(const ObservableModel& m) : n_o_(m.n_o), n_(m.sched.side(m.n_o)) {
  const Mat<double> D = matricize(m.d_tilde, {OR}, {OR2});
  const Mat<double> Ot = matricize(m.o_tilde, {o}, {o2});
  const Mat<double> E = matricize(m.end_factor, {OR}, {o});
  std::vector<Mat<double>> X;  // per emitted symbol slice: X[o](a, b)
  for (int k = 0; k < n_o_; ++k) X.push_back(matricize(collapse_mode(m.x_tilde, o, k), {OR}, {OR2}));
  step_.resize(n_o_);
  end_.resize(n_o_);
  for (int obs = 0; obs < n_o_; ++obs) {
    Mat<double> B = Mat<double>::Zero(n_, n_);
    for (int k = 0; k < n_o_; ++k) B += Ot(k, obs) * X[k];
    // v'(b) = sum_a v(a) (D B)(a, b), stored as the row-major transpose.
    const Mat<double> stepT = (D * B).transpose();
    step_[obs].resize(n_ * n_);
    for (std::size_t r = 0; r < n_; ++r)
      for (std::size_t c = 0; c < n_; ++c) step_[obs][r * n_ + c] = stepT(r, c);
    const Vec<double> e = D * (E * Ot.col(obs));
    end_[obs].assign(e.data(), e.data() + n_);
  }
  start_ = m.start_factor.data();
}

InferenceResult CompiledObservable::infer(const Sequence& obs) const {
  check_obs(obs, n_o_);
  const auto& k = kernels::active();
  std::vector<double> v(start_.begin() + (obs[0] * n_o_ + obs[1]) * n_, start_.begin() + (obs[0] * n_o_ + obs[1] + 1) * n_);
  std::vector<double> w(n_);
  double scale = 0;
  for (std::size_t t = 2; t + 1 < obs.size(); ++t) {
    k.gemv(step_[obs[t]].data(), n_, n_, v.data(), w.data());
    const double norm = k.sum_abs(w.data(), n_);
    if (norm == 0) return finish_result(0.0, scale);
    k.scale(w.data(), 1.0 / norm, n_);
    scale += std::log(norm);
    std::swap(v, w);
  }
  return finish_result(k.dot(end_[obs.back()].data(), v.data(), n_), scale);
}

ScoreSummary score_stream(const std::function<InferenceResult(const Sequence&)>& scorer, std::istream& in,
                          std::ostream& out) {
  ScoreSummary sum;
  out << "id,log_value,sign,clamped,norm_loglik\n";
  std::size_t id = 0;
  for (const auto& line : read_sequence_lines(in)) {
    ++sum.rows;
    const std::size_t row = id++;
    std::string err = line.error.empty() ? "" : "ParseError";
    if (err.empty()) {
      try {
        const auto r = scorer(line.symbols);
        std::ostringstream os;
        os.precision(17);
        os << row << "," << r.log_value << "," << r.sign << "," << (r.clamped ? 1 : 0) << ","
           << r.log_value / static_cast<double>(line.symbols.size()) << "\n";
        out << os.str();
        continue;
      } catch (const Error& e) {
        err = errc_name(e.code());
      }
    }
    ++sum.errors;
    out << row << ",ERROR:" << err << "@line" << line.line << ",,,\n";
  }
  return sum;
}

ScoreSummary score_file(const CompiledObservable& model, std::istream& in, std::ostream& out) {
  return score_stream([&](const Sequence& s) { return model.infer(s); }, in, out);
}

namespace {

void put_model(TensorContainer& c, const ObservableModel& m, const std::string& suffix) {
  c.tensors.emplace_back("d_tilde" + suffix, m.d_tilde);
  c.tensors.emplace_back("x_tilde" + suffix, m.x_tilde);
  c.tensors.emplace_back("o_tilde" + suffix, m.o_tilde);
  c.tensors.emplace_back("start_factor" + suffix, m.start_factor);
  c.tensors.emplace_back("end_factor" + suffix, m.end_factor);
}

ObservableModel get_model(const TensorContainer& c, const std::string& suffix) {
  ObservableModel m;
  m.n_o = c.n_o;
  m.sched = build_schedule(c.n_x, c.n_d);
  if (m.sched.right_offsets != c.offsets) throw Error(Errc::ParseError, "offsets do not match the schedule");
  m.d_tilde = c.get("d_tilde" + suffix);
  m.x_tilde = c.get("x_tilde" + suffix);
  m.o_tilde = c.get("o_tilde" + suffix);
  m.start_factor = c.get("start_factor" + suffix);
  m.end_factor = c.get("end_factor" + suffix);
  if (auto it = c.meta.find("rtol"); it != c.meta.end()) m.pinv_rtol = std::stod(it->second);
  if (auto it = c.meta.find("rank"); it != c.meta.end()) m.rank = std::stoull(it->second);
  return m;
}

TensorContainer header_for(const ObservableModel& m, const std::string& kind) {
  TensorContainer c;
  c.kind = kind;
  c.n_o = m.n_o;
  c.n_x = m.sched.n_x;
  c.n_d = m.sched.n_d;
  c.offsets = m.sched.right_offsets;
  std::ostringstream r;
  r.precision(17);
  r << m.pinv_rtol;
  c.meta["rtol"] = r.str();
  c.meta["rank"] = std::to_string(m.rank);
  return c;
}

}  // namespace

TensorContainer observable_to_container(const ObservableModel& m) {
  auto c = header_for(m, "observable");
  put_model(c, m, "");
  return c;
}

TensorContainer per_t_to_container(const PerTModel& pm) {
  auto c = header_for(pm.at_time(0), "observable-per-t");
  c.meta["first_anchor"] = std::to_string(pm.first);
  c.meta["anchors"] = std::to_string(pm.anchors.size());
  for (std::size_t i = 0; i < pm.anchors.size(); ++i) put_model(c, pm.anchors[i], "@" + std::to_string(i));
  return c;
}

ObservableModel observable_from_container(const TensorContainer& c) {
  if (c.kind != "observable") throw Error(Errc::ParseError, "container kind is " + c.kind + ", expected observable");
  return get_model(c, "");
}

PerTModel per_t_from_container(const TensorContainer& c) {
  if (c.kind != "observable-per-t")
    throw Error(Errc::ParseError, "container kind is " + c.kind + ", expected observable-per-t");
  PerTModel pm;
  pm.first = std::stoi(c.meta.at("first_anchor"));
  const int n = std::stoi(c.meta.at("anchors"));
  for (int i = 0; i < n; ++i) {
    auto m = get_model(c, "@" + std::to_string(i));
    m.anchor = pm.first + i;
    pm.anchors.push_back(std::move(m));
  }
  return pm;
}

template BasicObservableModel<double> build_observable<double>(const BasicMomentSet<double>&, const BuildOptions&);
template BasicObservableModel<Quad> build_observable<Quad>(const BasicMomentSet<Quad>&, const BuildOptions&);
template InferenceResult infer<double>(const BasicObservableModel<double>&, const Sequence&, bool);
template InferenceResult infer<Quad>(const BasicObservableModel<Quad>&, const Sequence&, bool);

}  // namespace shsmm
