#include "shsmm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace shsmm {

std::string ModeLabel::str() const {
  return occurrence == 0 ? name : name + "#" + std::to_string(occurrence);
}

OpCounters& op_counters() {
  static OpCounters c;
  return c;
}

namespace {

template <class S>
bool finite(const S& v) {
  using std::isfinite;
  using boost::multiprecision::isfinite;
  return isfinite(v);
}

std::size_t product(const std::vector<Mode>& modes) {
  std::size_t n = 1;
  for (const auto& m : modes) n *= m.dim;
  return n;
}

void check_unique(const std::vector<Mode>& modes) {
  for (std::size_t i = 0; i < modes.size(); ++i)
    for (std::size_t j = i + 1; j < modes.size(); ++j)
      if (modes[i].label == modes[j].label)
        throw Error(Errc::InvalidModePartition, "repeated mode " + modes[i].label.str());
}

std::vector<std::size_t> strides_of(const std::vector<Mode>& modes) {
  std::vector<std::size_t> s(modes.size(), 1);
  for (std::size_t i = modes.size(); i-- > 1;) s[i - 1] = s[i] * modes[i].dim;
  return s;
}

// Row-major strides for a sub-list of axes, expressed per axis of the parent.
std::vector<std::size_t> group_strides(const std::vector<Mode>& modes, const std::vector<std::size_t>& axes) {
  std::vector<std::size_t> out(modes.size(), 0);
  std::size_t s = 1;
  for (std::size_t k = axes.size(); k-- > 0;) {
    out[axes[k]] = s;
    s *= modes[axes[k]].dim;
  }
  return out;
}

// Walks every entry of `modes` in row-major order, calling f(linear, rowidx, colidx).
template <class F>
void walk(const std::vector<Mode>& modes, const std::vector<std::size_t>& rs, const std::vector<std::size_t>& cs,
          F&& f) {
  const std::size_t n = product(modes);
  const std::size_t k = modes.size();
  std::vector<std::size_t> idx(k, 0);
  std::size_t r = 0, c = 0;
  for (std::size_t lin = 0; lin < n; ++lin) {
    f(lin, r, c);
    for (std::size_t ax = k; ax-- > 0;) {
      if (++idx[ax] < modes[ax].dim) {
        r += rs[ax];
        c += cs[ax];
        break;
      }
      r -= rs[ax] * (modes[ax].dim - 1);
      c -= cs[ax] * (modes[ax].dim - 1);
      idx[ax] = 0;
    }
  }
}

template <class S>
S default_eps() {
  return std::numeric_limits<S>::epsilon();
}

}  // namespace

template <class S>
BasicTensor<S>::BasicTensor(std::vector<Mode> modes, std::vector<S> data)
    : modes_(std::move(modes)), data_(std::move(data)) {
  for (const auto& m : modes_)
    if (m.dim == 0) throw Error(Errc::ShapeMismatch, "zero-sized mode " + m.label.str());
  check_unique(modes_);
  if (data_.size() != product(modes_))
    throw Error(Errc::ShapeMismatch, "data length " + std::to_string(data_.size()) + " does not match shape");
  for (const auto& v : data_)
    if (!finite(v)) throw Error(Errc::InvalidArgument, "non-finite tensor entry");
}

template <class S>
BasicTensor<S> BasicTensor<S>::zeros(std::vector<Mode> modes) {
  const std::size_t n = product(modes);
  return BasicTensor(std::move(modes), std::vector<S>(n, S(0)));
}

template <class S>
std::vector<std::size_t> BasicTensor<S>::shape() const {
  std::vector<std::size_t> s;
  for (const auto& m : modes_) s.push_back(m.dim);
  return s;
}

template <class S>
bool BasicTensor<S>::has(const ModeLabel& l) const {
  return std::any_of(modes_.begin(), modes_.end(), [&](const Mode& m) { return m.label == l; });
}

template <class S>
std::size_t BasicTensor<S>::axis(const ModeLabel& l) const {
  for (std::size_t i = 0; i < modes_.size(); ++i)
    if (modes_[i].label == l) return i;
  throw Error(Errc::UnknownMode, l.str());
}

template <class S>
const S& BasicTensor<S>::at(const std::vector<std::size_t>& idx) const {
  if (idx.size() != modes_.size()) throw Error(Errc::ShapeMismatch, "index arity");
  std::size_t lin = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= modes_[i].dim) throw Error(Errc::IndexOutOfRange, modes_[i].label.str());
    lin = lin * modes_[i].dim + idx[i];
  }
  return data_[lin];
}

template <class S>
S BasicTensor<S>::sum() const {
  S s(0);
  for (const auto& v : data_) s += v;
  return s;
}

namespace {

template <class S>
std::vector<std::size_t> axes_of(const BasicTensor<S>& t, const std::vector<ModeLabel>& labels) {
  std::vector<std::size_t> out;
  for (const auto& l : labels) {
    if (!t.has(l)) throw Error(Errc::InvalidModePartition, "mode " + l.str() + " not in tensor");
    out.push_back(t.axis(l));
  }
  return out;
}

template <class S>
std::vector<ModeLabel> complement(const BasicTensor<S>& t, const std::vector<ModeLabel>& labels) {
  std::vector<ModeLabel> out;
  for (const auto& m : t.modes())
    if (std::find(labels.begin(), labels.end(), m.label) == labels.end()) out.push_back(m.label);
  return out;
}

template <class S>
std::vector<Mode> modes_for(const BasicTensor<S>& t, const std::vector<ModeLabel>& labels) {
  std::vector<Mode> out;
  for (const auto& l : labels) out.push_back(t.modes()[t.axis(l)]);
  return out;
}

}  // namespace

template <class S>
Mat<S> matricize(const BasicTensor<S>& t, const std::vector<ModeLabel>& rows, const std::vector<ModeLabel>& cols) {
  const auto ra = axes_of(t, rows);
  const auto ca = axes_of(t, cols);
  std::vector<bool> seen(t.order(), false);
  for (auto a : ra) {
    if (seen[a]) throw Error(Errc::InvalidModePartition, "mode listed twice");
    seen[a] = true;
  }
  for (auto a : ca) {
    if (seen[a]) throw Error(Errc::InvalidModePartition, "mode listed twice");
    seen[a] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw Error(Errc::InvalidModePartition, "partition does not cover every mode");
  const auto rs = group_strides(t.modes(), ra);
  const auto cs = group_strides(t.modes(), ca);
  std::size_t nr = 1, nc = 1;
  for (auto a : ra) nr *= t.modes()[a].dim;
  for (auto a : ca) nc *= t.modes()[a].dim;
  Mat<S> m(nr, nc);
  const auto& d = t.data();
  walk(t.modes(), rs, cs, [&](std::size_t lin, std::size_t r, std::size_t c) { m(r, c) = d[lin]; });
  return m;
}

template <class S>
BasicTensor<S> tensorize(const Mat<S>& m, const std::vector<Mode>& rows, const std::vector<Mode>& cols) {
  std::vector<Mode> modes = rows;
  modes.insert(modes.end(), cols.begin(), cols.end());
  check_unique(modes);
  if (static_cast<std::size_t>(m.rows()) != product(rows) || static_cast<std::size_t>(m.cols()) != product(cols))
    throw Error(Errc::ShapeMismatch, "matrix shape does not match modes");
  std::vector<S> data(product(modes));
  const std::size_t nc = product(cols);
  for (std::size_t r = 0; r < static_cast<std::size_t>(m.rows()); ++r)
    for (std::size_t c = 0; c < nc; ++c) data[r * nc + c] = m(r, c);
  return BasicTensor<S>(std::move(modes), std::move(data));
}

template <class S>
BasicTensor<S> mode_product(const BasicTensor<S>& a, const BasicTensor<S>& b, const std::vector<ModeLabel>& shared) {
  if (shared.empty()) throw Error(Errc::OuterProductNotSupported, "no shared modes");
  for (const auto& l : shared) {
    if (!a.has(l) || !b.has(l)) throw Error(Errc::UnknownMode, "shared mode " + l.str() + " missing");
    if (a.dim(l) != b.dim(l)) throw Error(Errc::ShapeMismatch, "dimension mismatch on " + l.str());
  }
  const auto ar = complement(a, shared);
  const auto bc = complement(b, shared);
  const Mat<S> ma = matricize(a, ar, shared);
  const Mat<S> mb = matricize(b, shared, bc);
  ++op_counters().contraction;
  const Mat<S> prod = ma * mb;
  auto rm = modes_for(a, ar);
  auto cm = modes_for(b, bc);
  if (rm.empty() && cm.empty()) return BasicTensor<S>({}, {prod(0, 0)});
  if (rm.empty()) return tensorize<S>(prod, {}, cm);
  return tensorize<S>(prod, rm, cm);
}

template <class S>
BasicTensor<S> mode_product(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  std::vector<ModeLabel> shared;
  for (const auto& m : a.modes())
    if (b.has(m.label)) shared.push_back(m.label);
  return mode_product(a, b, shared);
}

template <class S>
BasicTensor<S> duplicate_mode(const BasicTensor<S>& t, const ModeLabel& mode, int copies) {
  if (copies < 2) throw Error(Errc::InvalidArgument, "copies must be at least 2");
  const std::size_t ax = t.axis(mode);
  std::vector<Mode> modes;
  for (std::size_t i = 0; i < t.order(); ++i) {
    if (i != ax) {
      modes.push_back(t.modes()[i]);
      continue;
    }
    for (int c = 0; c < copies; ++c)
      modes.push_back({{mode.name, mode.occurrence + c}, t.modes()[i].dim});
  }
  check_unique(modes);
  auto out = std::vector<S>(product(modes), S(0));
  const auto os = strides_of(modes);
  const auto ts = strides_of(t.modes());
  std::vector<std::size_t> zero(t.order(), 0);
  // Map each source entry to the output entry where all copies share its index.
  std::vector<std::size_t> map(t.order());
  for (std::size_t i = 0; i < t.order(); ++i) {
    if (i < ax) map[i] = os[i];
    else if (i == ax) {
      std::size_t s = 0;
      for (int c = 0; c < copies; ++c) s += os[ax + c];
      map[i] = s;
    } else map[i] = os[i + copies - 1];
  }
  walk(t.modes(), map, zero, [&](std::size_t lin, std::size_t o, std::size_t) { out[o] = t.data()[lin]; });
  (void)ts;
  return BasicTensor<S>(std::move(modes), std::move(out));
}

template <class S>
BasicTensor<S> identity_tensor(const std::vector<Mode>& modes) {
  std::vector<Mode> copy;
  for (const auto& m : modes) copy.push_back({{m.label.name, m.label.occurrence + 1}, m.dim});
  const std::size_t n = product(modes);
  Mat<S> eye = Mat<S>::Identity(n, n);
  return tensorize<S>(eye, modes, copy);
}

template <class S>
Vec<S> singular_values(const Mat<S>& a) {
  if (a.size() == 0) return Vec<S>();
  Eigen::BDCSVD<Mat<S>> svd(a);
  return svd.singularValues();
}

template <class S>
std::size_t numerical_rank(const Mat<S>& a, double rtol) {
  if (!(rtol > 0)) throw Error(Errc::InvalidTolerance, "rtol must be positive");
  const Vec<S> s = singular_values(a);
  if (s.size() == 0 || s(0) == S(0)) return 0;
  const S thr = S(rtol) * s(0);
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > thr) ++r;
  return r;
}

template <class S>
Mat<S> pinv(const Mat<S>& a, const PinvOptions& opt, std::size_t* kept) {
  if (opt.rtol && !(*opt.rtol > 0)) throw Error(Errc::InvalidTolerance, "rtol must be positive");
  ++op_counters().pinv;
  Eigen::BDCSVD<Mat<S>> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec<S>& s = svd.singularValues();
  const S rtol = opt.rtol ? S(*opt.rtol) : S(double(std::max(a.rows(), a.cols()))) * default_eps<S>();
  std::size_t r = 0;
  if (s.size() > 0 && s(0) > S(0)) {
    const S thr = rtol * s(0);
    while (r < static_cast<std::size_t>(s.size()) && s(r) > thr) ++r;
  }
  if (opt.max_rank) r = std::min(r, *opt.max_rank);
  if (kept) *kept = r;
  if (r == 0) throw Error(Errc::RankZero, "every singular value truncated");
  Mat<S> v = svd.matrixV().leftCols(r);
  for (std::size_t i = 0; i < r; ++i) v.col(i) /= s(i);
  return v * svd.matrixU().leftCols(r).transpose();
}

template <class S>
BasicTensor<S> pinv_along(const BasicTensor<S>& t, const std::vector<ModeLabel>& inv_modes, const PinvOptions& opt) {
  if (inv_modes.empty() || inv_modes.size() >= t.order())
    throw Error(Errc::InvalidModePartition, "inverted modes must be a nonempty proper subset");
  const auto keep = complement(t, inv_modes);
  const Mat<S> a = matricize(t, keep, inv_modes);
  // W(p, q) = A^+(q, p): contracting t with W over q yields A A^+ on p.
  const Mat<S> w = pinv(a, opt).transpose();
  const BasicTensor<S> flat = tensorize<S>(w, modes_for(t, keep), modes_for(t, inv_modes));
  std::vector<ModeLabel> order;
  for (const auto& m : t.modes()) order.push_back(m.label);
  if (flat.modes() == t.modes()) return flat;
  // Restore the caller's mode order.
  const Mat<S> back = matricize(flat, order, {});
  return tensorize<S>(back, t.modes(), {});
}

template <class S>
BasicTensor<S> collapse_mode(const BasicTensor<S>& t, const ModeLabel& mode, std::size_t index) {
  const std::size_t ax = t.axis(mode);
  if (index >= t.modes()[ax].dim)
    throw Error(Errc::IndexOutOfRange, mode.str() + " index " + std::to_string(index));
  std::vector<Mode> modes;
  for (std::size_t i = 0; i < t.order(); ++i)
    if (i != ax) modes.push_back(t.modes()[i]);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= t.modes()[i].dim;
  for (std::size_t i = ax + 1; i < t.order(); ++i) inner *= t.modes()[i].dim;
  const std::size_t d = t.modes()[ax].dim;
  std::vector<S> out(outer * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] = t.data()[(o * d + index) * inner + i];
  return BasicTensor<S>(std::move(modes), std::move(out));
}

template <class S>
BasicTensor<S> marginalize(const BasicTensor<S>& t, const ModeLabel& mode) {
  const std::size_t ax = t.axis(mode);
  std::vector<Mode> modes;
  for (std::size_t i = 0; i < t.order(); ++i)
    if (i != ax) modes.push_back(t.modes()[i]);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= t.modes()[i].dim;
  for (std::size_t i = ax + 1; i < t.order(); ++i) inner *= t.modes()[i].dim;
  const std::size_t d = t.modes()[ax].dim;
  std::vector<S> out(outer * inner, S(0));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += t.data()[(o * d + k) * inner + i];
  return BasicTensor<S>(std::move(modes), std::move(out));
}

template <class S>
BasicTensor<S> relabel(const BasicTensor<S>& t, const ModeLabel& from, const ModeLabel& to) {
  auto modes = t.modes();
  modes[t.axis(from)].label = to;
  return BasicTensor<S>(std::move(modes), t.data());
}

template <class S>
Mat<S> khatri_rao_cols(const Mat<S>& a, const Mat<S>& b) {
  if (a.cols() != b.cols()) throw Error(Errc::ShapeMismatch, "khatri-rao column counts differ");
  Mat<S> out(a.rows() * b.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      out.col(j).segment(i * b.rows(), b.rows()) = a(i, j) * b.col(j);
  return out;
}

template <class S>
Mat<S> kron(const Mat<S>& a, const Mat<S>& b) {
  Mat<S> out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

#define SHSMM_INSTANTIATE(S)                                                                                \
  template class BasicTensor<S>;                                                                            \
  template Mat<S> matricize(const BasicTensor<S>&, const std::vector<ModeLabel>&,                           \
                            const std::vector<ModeLabel>&);                                                 \
  template BasicTensor<S> tensorize(const Mat<S>&, const std::vector<Mode>&, const std::vector<Mode>&);     \
  template BasicTensor<S> mode_product(const BasicTensor<S>&, const BasicTensor<S>&,                        \
                                       const std::vector<ModeLabel>&);                                      \
  template BasicTensor<S> mode_product(const BasicTensor<S>&, const BasicTensor<S>&);                       \
  template BasicTensor<S> duplicate_mode(const BasicTensor<S>&, const ModeLabel&, int);                     \
  template BasicTensor<S> identity_tensor<S>(const std::vector<Mode>&);                                     \
  template BasicTensor<S> pinv_along(const BasicTensor<S>&, const std::vector<ModeLabel>&, const PinvOptions&); \
  template BasicTensor<S> collapse_mode(const BasicTensor<S>&, const ModeLabel&, std::size_t);              \
  template BasicTensor<S> marginalize(const BasicTensor<S>&, const ModeLabel&);                             \
  template BasicTensor<S> relabel(const BasicTensor<S>&, const ModeLabel&, const ModeLabel&);               \
  template Mat<S> khatri_rao_cols(const Mat<S>&, const Mat<S>&);                                            \
  template Mat<S> kron(const Mat<S>&, const Mat<S>&);                                                       \
  template std::size_t numerical_rank(const Mat<S>&, double);                                               \
  template Vec<S> singular_values(const Mat<S>&);                                                           \
  template Mat<S> pinv(const Mat<S>&, const PinvOptions&, std::size_t*);

SHSMM_INSTANTIATE(double)
SHSMM_INSTANTIATE(Quad)

}  // namespace shsmm
