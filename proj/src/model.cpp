#include "shsmm/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "shsmm/errors.hpp"
#include "shsmm/tensor.hpp"

namespace shsmm {

bool ValidationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

const Check* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& c : checks)
    os << (c.pass ? "pass " : "FAIL ") << c.name << " (" << c.value << ")" << (c.detail.empty() ? "" : " " + c.detail)
       << "\n";
  return os.str();
}

namespace {

double column_sum_error(const MatrixXd& m) {
  double worst = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) worst = std::max(worst, std::abs(m.col(j).sum() - 1.0));
  return worst;
}

double sigma_min(const MatrixXd& m) {
  const VectorXd s = singular_values<double>(m);
  return s.size() ? s(s.size() - 1) : 0.0;
}

void check_shapes(const HsmmParams& p) {
  auto fail = [](const std::string& what) { throw Error(Errc::ShapeMismatch, what); };
  if (p.n_o < 1 || p.n_x < 1 || p.n_d < 1) fail("sizes must be positive");
  if (p.O.rows() != p.n_o || p.O.cols() != p.n_x) fail("O must be n_o x n_x");
  if (p.X.rows() != p.n_x || p.X.cols() != p.n_x) fail("X must be n_x x n_x");
  if (p.D.rows() != p.n_d || p.D.cols() != p.n_x) fail("D must be n_d x n_x");
  if (p.pi_x.size() != p.n_x) fail("pi_x must have n_x entries");
  if (p.prior == DurationPrior::Explicit && (p.pi_d.rows() != p.n_d || p.pi_d.cols() != p.n_x))
    fail("pi_d must be n_d x n_x");
}

}  // namespace

ValidationReport validate(const HsmmParams& p, double rtol) {
  check_shapes(p);
  ValidationReport r;
  auto stochastic = [&](const std::string& name, const MatrixXd& m) {
    const double err = column_sum_error(m);
    const double lo = m.size() ? m.minCoeff() : 0.0;
    r.checks.push_back({name, err <= 1e-12 && lo >= 0, err, lo < 0 ? "negative entry" : ""});
  };
  stochastic("O_stochastic", p.O);
  stochastic("X_stochastic", p.X);
  stochastic("D_stochastic", p.D);
  {
    const double err = std::abs(p.pi_x.sum() - 1.0);
    r.checks.push_back({"pi_x_stochastic", err <= 1e-12 && p.pi_x.minCoeff() >= 0, err, ""});
  }
  if (p.prior == DurationPrior::Explicit) stochastic("pi_d_stochastic", p.pi_d);

  const double sx = sigma_min(p.X);
  r.checks.push_back({"A1_X_full_rank", numerical_rank<double>(p.X, rtol) == static_cast<std::size_t>(p.n_x), sx,
                      "sigma_min(X)"});
  const double dmin = p.D.minCoeff();
  r.checks.push_back({"A2_D_positive", dmin > 0, dmin, "min D"});
  const double so = sigma_min(p.O);
  const bool a3 = p.n_x <= p.n_o && numerical_rank<double>(p.O, rtol) == static_cast<std::size_t>(p.n_x);
  r.checks.push_back({"A3_O_full_column_rank", a3, so, p.n_x > p.n_o ? "n_x > n_o" : "sigma_min(O)"});
  return r;
}

void require_valid(const HsmmParams& p, double rtol) {
  const auto r = validate(p, rtol);
  if (!r.ok()) throw Error(Errc::InvalidModel, r.summary());
}

namespace {

VectorXd dirichlet(int n, double alpha, Rng& rng) {
  std::gamma_distribution<double> g(alpha, 1.0);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v / v.sum();
}

MatrixXd dirichlet_columns(int rows, int cols, double alpha, Rng& rng) {
  MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j) m.col(j) = dirichlet(rows, alpha, rng);
  return m;
}

}  // namespace

HsmmParams random_model(int n_o, int n_x, int n_d, std::uint64_t seed, const RandomModelOptions& opt) {
  if (n_o < 1 || n_x < 1 || n_d < 1) throw Error(Errc::InvalidArgument, "sizes must be positive");
  if (n_x > n_o) throw Error(Errc::InvalidArgument, "n_x > n_o violates full column rank of O");
  if (opt.zero_diagonal && n_x < 2) throw Error(Errc::InvalidArgument, "zero diagonal needs n_x >= 2");
  Rng rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    HsmmParams p;
    p.n_o = n_o;
    p.n_x = n_x;
    p.n_d = n_d;
    p.O = dirichlet_columns(n_o, n_x, opt.concentration, rng);
    p.X = dirichlet_columns(n_x, n_x, opt.concentration, rng);
    if (opt.zero_diagonal) {
      for (int j = 0; j < n_x; ++j) p.X(j, j) = 0;
      for (int j = 0; j < n_x; ++j) p.X.col(j) /= p.X.col(j).sum();
    }
    p.D = dirichlet_columns(n_d, n_x, opt.concentration, rng);
    p.pi_x = dirichlet(n_x, opt.concentration, rng);
    if (sigma_min(p.O) >= opt.min_sigma && sigma_min(p.X) >= opt.min_sigma && p.D.minCoeff() >= 1e-3) return p;
  }
  throw Error(Errc::GenerationFailed, "1000 draws rejected");
}

namespace {

int draw(const double* probs, int n, int stride, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  for (int i = 0; i < n - 1; ++i) {
    r -= probs[i * stride];
    if (r < 0) return i;
  }
  return n - 1;
}

int draw_col(const MatrixXd& m, int col, Rng& rng) {
  return draw(m.data() + col * m.rows(), static_cast<int>(m.rows()), 1, rng);
}

}  // namespace

SampledSequence sample(const HsmmParams& p, int T, Rng& rng) {
  if (T < 1) throw Error(Errc::InvalidArgument, "T must be at least 1");
  SampledSequence s;
  s.observations.reserve(T);
  s.hidden.reserve(T);
  int x = draw(p.pi_x.data(), p.n_x, 1, rng);
  int d = draw_col(p.initial_duration(), x, rng) + 1;
  for (int t = 0; t < T; ++t) {
    if (t > 0) {
      if (d == 1) {
        x = draw_col(p.X, x, rng);
        d = draw_col(p.D, x, rng) + 1;
      } else {
        --d;
      }
    }
    s.hidden.emplace_back(x, d);
    s.observations.push_back(draw_col(p.O, x, rng));
  }
  return s;
}

std::vector<Sequence> sample_many(const HsmmParams& p, int count, int T, Rng& rng) {
  std::vector<Sequence> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(sample(p, T, rng).observations);
  return out;
}

namespace {

void check_symbols(const HsmmParams& p, const Sequence& obs) {
  for (auto o : obs)
    if (o < 0 || o >= p.n_o) throw Error(Errc::UnknownSymbol, "symbol " + std::to_string(o));
}

}  // namespace

double exact_likelihood_enum(const HsmmParams& p, const Sequence& obs) {
  if (obs.size() > 12) throw Error(Errc::OracleTooLarge, "enumeration limited to T <= 12");
  check_symbols(p, obs);
  if (obs.empty()) return 1.0;
  const int T = static_cast<int>(obs.size());
  const MatrixXd& d1 = p.initial_duration();
  // Depth-first over latent paths; weight carries prior x CPTs x emissions.
  std::function<double(int, int, int)> rec = [&](int t, int x, int d) -> double {
    if (t == T) return 1.0;
    double total = 0;
    if (d > 1) {
      total = p.O(obs[t], x) * rec(t + 1, x, d - 1);
    } else {
      for (int nx = 0; nx < p.n_x; ++nx) {
        const double px = p.X(nx, x);
        if (px == 0) continue;
        for (int nd = 1; nd <= p.n_d; ++nd) {
          const double w = px * p.D(nd - 1, nx) * p.O(obs[t], nx);
          if (w == 0) continue;
          total += w * rec(t + 1, nx, nd);
        }
      }
    }
    return total;
  };
  double total = 0;
  for (int x = 0; x < p.n_x; ++x)
    for (int d = 1; d <= p.n_d; ++d) {
      const double w = p.pi_x(x) * d1(d - 1, x) * p.O(obs[0], x);
      if (w != 0) total += w * rec(1, x, d);
    }
  return total;
}

Likelihood forward_likelihood(const HsmmParams& p, const Sequence& obs) {
  if (obs.empty()) throw Error(Errc::SequenceTooShort, "empty sequence");
  check_symbols(p, obs);
  const int nx = p.n_x, nd = p.n_d;
  // alpha[(d-1)*nx + x]
  std::vector<double> a(nx * nd), b(nx * nd);
  const MatrixXd& d1 = p.initial_duration();
  for (int d = 0; d < nd; ++d)
    for (int x = 0; x < nx; ++x) a[d * nx + x] = p.pi_x(x) * d1(d, x) * p.O(obs[0], x);
  double logp = 0;
  auto normalize = [&](std::vector<double>& v) {
    double s = 0;
    for (double e : v) s += e;
    if (s <= 0) return false;
    for (double& e : v) e /= s;
    logp += std::log(s);
    return true;
  };
  if (!normalize(a)) return {-std::numeric_limits<double>::infinity(), 0.0};
  std::vector<double> renew(nx);
  for (std::size_t t = 1; t < obs.size(); ++t) {
    const int o = obs[t];
    for (int x2 = 0; x2 < nx; ++x2) {
      double s = 0;
      for (int x = 0; x < nx; ++x) s += p.X(x2, x) * a[x];
      renew[x2] = s;
    }
    for (int d = 0; d < nd; ++d)
      for (int x = 0; x < nx; ++x) {
        const double carry = d + 1 < nd ? a[(d + 1) * nx + x] : 0.0;
        b[d * nx + x] = p.O(o, x) * (renew[x] * p.D(d, x) + carry);
      }
    std::swap(a, b);
    if (!normalize(a)) return {-std::numeric_limits<double>::infinity(), 0.0};
  }
  return {logp, std::exp(logp)};
}

template <class S>
LiftedOps<S> lifted_ops(const HsmmParams& p) {
  const int nx = p.n_x, nd = p.n_d, m = nx * nd;
  LiftedOps<S> L;
  L.Xl = Mat<S>::Zero(m, m);
  L.Dl = Mat<S>::Zero(m, m);
  L.emit = Mat<S>(p.n_o, m);
  L.s1 = Vec<S>(m);
  const MatrixXd& d1 = p.initial_duration();
  for (int d = 0; d < nd; ++d)
    for (int x = 0; x < nx; ++x) {
      const int s = d * nx + x;
      if (d == 0) {
        for (int x2 = 0; x2 < nx; ++x2) L.Xl(x2, s) = S(p.X(x2, x));
        for (int d2 = 0; d2 < nd; ++d2) L.Dl(d2 * nx + x, s) = S(p.D(d2, x));
      } else {
        L.Xl(s, s) = S(1);
        L.Dl((d - 1) * nx + x, s) = S(1);
      }
      for (int o = 0; o < p.n_o; ++o) L.emit(o, s) = S(p.O(o, x));
      L.s1(s) = S(p.pi_x(x)) * S(d1(d, x));
    }
  return L;
}

template <class S>
Mat<S> window_given_state(const HsmmParams& p, const std::vector<int>& offsets, Conditioning c) {
  const int m = p.n_x * p.n_d;
  const auto L = lifted_ops<S>(p);
  const Mat<S> V = L.Xl * L.Dl;  // u_t -> u_{t+1}
  int last = offsets.empty() ? 0 : *std::max_element(offsets.begin(), offsets.end());
  // Track p(prefix, u_{t+k} | start) as a stack of m x m slices, one per prefix.
  std::vector<Mat<S>> slices;
  slices.push_back(c == Conditioning::Separator ? V : Mat<S>(L.Xl));
  for (int k = 0; k <= last; ++k) {
    if (k > 0)
      for (auto& sl : slices) sl = V * sl;
    if (std::find(offsets.begin(), offsets.end(), k) != offsets.end()) {
      std::vector<Mat<S>> next;
      next.reserve(slices.size() * p.n_o);
      for (const auto& sl : slices)
        for (int o = 0; o < p.n_o; ++o) next.push_back(L.emit.row(o).transpose().asDiagonal() * sl);
      slices = std::move(next);
    }
  }
  Mat<S> out(slices.size(), m);
  for (std::size_t i = 0; i < slices.size(); ++i) out.row(i) = slices[i].colwise().sum();
  return out;
}

template LiftedOps<double> lifted_ops<double>(const HsmmParams&);
template LiftedOps<Quad> lifted_ops<Quad>(const HsmmParams&);
template Mat<double> window_given_state<double>(const HsmmParams&, const std::vector<int>&, Conditioning);
template Mat<Quad> window_given_state<Quad>(const HsmmParams&, const std::vector<int>&, Conditioning);

}  // namespace shsmm
