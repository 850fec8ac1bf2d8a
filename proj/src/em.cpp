#include "shsmm/em.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "shsmm/errors.hpp"

namespace shsmm {

namespace {

struct Counts {
  MatrixXd O, X, D;
  VectorXd pi;
  double loglik = 0;

  Counts(int n_o, int n_x, int n_d)
      : O(MatrixXd::Zero(n_o, n_x)), X(MatrixXd::Zero(n_x, n_x)), D(MatrixXd::Zero(n_d, n_x)), pi(VectorXd::Zero(n_x)) {}
};

// Scaled forward-backward over s = (x, d), index d*nx + x (d 0-based).
// Transitions are applied in structured form: d > 0 counts down, d = 0 renews
// through X then D.
void accumulate(const HsmmParams& p, const Sequence& obs, Counts& c) {
  const int nx = p.n_x, nd = p.n_d, m = nx * nd;
  const std::size_t T = obs.size();
  std::vector<double> alpha(T * m), beta(T * m), scale(T);
  const MatrixXd& d1 = p.initial_duration();

  auto a = [&](std::size_t t) { return alpha.data() + t * m; };
  auto b = [&](std::size_t t) { return beta.data() + t * m; };

  for (int d = 0; d < nd; ++d)
    for (int x = 0; x < nx; ++x) a(0)[d * nx + x] = p.pi_x(x) * d1(d, x) * p.O(obs[0], x);
  std::vector<double> renew(nx);
  for (std::size_t t = 0; t < T; ++t) {
    double* at = a(t);
    if (t > 0) {
      const double* prev = a(t - 1);
      for (int x2 = 0; x2 < nx; ++x2) {
        double s = 0;
        for (int x = 0; x < nx; ++x) s += p.X(x2, x) * prev[x];
        renew[x2] = s;
      }
      for (int d = 0; d < nd; ++d)
        for (int x = 0; x < nx; ++x) {
          const double carry = d + 1 < nd ? prev[(d + 1) * nx + x] : 0.0;
          at[d * nx + x] = p.O(obs[t], x) * (renew[x] * p.D(d, x) + carry);
        }
    }
    double s = 0;
    for (int i = 0; i < m; ++i) s += at[i];
    if (!(s > 0)) throw Error(Errc::InvalidModel, "sequence has zero probability under the current model");
    for (int i = 0; i < m; ++i) at[i] /= s;
    scale[t] = s;
    c.loglik += std::log(s);
  }

  // g[x2, d2] = O(o_{t+1}, x2) beta_{t+1}(x2, d2) / scale_{t+1}
  std::vector<double> g(m);
  std::fill(b(T - 1), b(T - 1) + m, 1.0);
  for (std::size_t t = T - 1; t-- > 0;) {
    const double* bn = b(t + 1);
    double* bt = b(t);
    for (int d = 0; d < nd; ++d)
      for (int x = 0; x < nx; ++x) g[d * nx + x] = p.O(obs[t + 1], x) * bn[d * nx + x] / scale[t + 1];
    for (int d = 1; d < nd; ++d)
      for (int x = 0; x < nx; ++x) bt[d * nx + x] = g[(d - 1) * nx + x];
    for (int x = 0; x < nx; ++x) {
      double s = 0;
      for (int x2 = 0; x2 < nx; ++x2) {
        double inner = 0;
        for (int d2 = 0; d2 < nd; ++d2) inner += p.D(d2, x2) * g[d2 * nx + x2];
        s += p.X(x2, x) * inner;
      }
      bt[x] = s;
    }

    // Renewal transitions out of (x, d=1) at time t.
    const double* at = a(t);
    for (int x = 0; x < nx; ++x) {
      if (at[x] == 0) continue;
      for (int x2 = 0; x2 < nx; ++x2)
        for (int d2 = 0; d2 < nd; ++d2) {
          const double xi = at[x] * p.X(x2, x) * p.D(d2, x2) * g[d2 * nx + x2];
          c.X(x2, x) += xi;
          c.D(d2, x2) += xi;
        }
    }
  }

  for (std::size_t t = 0; t < T; ++t) {
    const double* at = a(t);
    const double* bt = b(t);
    for (int d = 0; d < nd; ++d)
      for (int x = 0; x < nx; ++x) {
        const double gamma = at[d * nx + x] * bt[d * nx + x];
        c.O(obs[t], x) += gamma;
        if (t == 0) {
          c.pi(x) += gamma;
          c.D(d, x) += gamma;
        }
      }
  }
}

// Columns with no expected mass keep their previous values.
void normalize_columns(const MatrixXd& counts, MatrixXd& out) {
  for (Eigen::Index j = 0; j < counts.cols(); ++j) {
    const double s = counts.col(j).sum();
    if (s > 0) out.col(j) = counts.col(j) / s;
  }
}

HsmmParams m_step(const HsmmParams& p, const Counts& c) {
  HsmmParams q = p;
  q.prior = DurationPrior::FromD;
  q.pi_d.resize(0, 0);
  normalize_columns(c.O, q.O);
  normalize_columns(c.X, q.X);
  normalize_columns(c.D, q.D);
  const double s = c.pi.sum();
  if (s > 0) q.pi_x = c.pi / s;
  return q;
}

Counts e_step(const HsmmParams& p, const std::vector<Sequence>& seqs) {
  Counts c(p.n_o, p.n_x, p.n_d);
  for (const auto& s : seqs) accumulate(p, s, c);
  return c;
}

void check_config(const EmConfig& cfg) {
  if (cfg.max_iter < 1) throw Error(Errc::InvalidArgument, "max_iter must be >= 1");
  if (!(cfg.tol > 0)) throw Error(Errc::InvalidArgument, "tol must be > 0");
  if (cfg.restarts < 1) throw Error(Errc::InvalidArgument, "restarts must be >= 1");
}

void check_data(const std::vector<Sequence>& seqs, int n_o) {
  if (seqs.empty()) throw Error(Errc::InsufficientData, "no training sequences");
  for (const auto& s : seqs) {
    if (s.empty()) throw Error(Errc::SequenceTooShort, "empty training sequence");
    for (auto o : s)
      if (o < 0 || o >= n_o) throw Error(Errc::UnknownSymbol, "symbol " + std::to_string(o));
  }
}

}  // namespace

void check_em_inputs(const std::vector<Sequence>& seqs, int n_o, int n_x, int n_d, const EmConfig& cfg) {
  check_config(cfg);
  if (n_o < 1 || n_x < 1 || n_d < 1) throw Error(Errc::InvalidArgument, "sizes must be positive");
  if (n_x > n_o) throw Error(Errc::InvalidArgument, "n_x must not exceed n_o");
  check_data(seqs, n_o);
}

double total_log_likelihood(const HsmmParams& p, const std::vector<Sequence>& seqs) {
  double total = 0;
  for (const auto& s : seqs) total += forward_likelihood(p, s).log_p;
  return total;
}

EmResult em_fit_from(const std::vector<Sequence>& seqs, const HsmmParams& init, const EmConfig& cfg) {
  check_config(cfg);
  check_data(seqs, init.n_o);
  EmResult r;
  r.model = init;
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_iter; ++it) {
    const Counts c = e_step(r.model, seqs);
    r.trace.push_back(c.loglik);
    if (it > 0) {
      const double slack = cfg.monotonicity_slack * std::max(1.0, std::abs(prev));
      if (c.loglik < prev - slack) {
        std::ostringstream os;
        os.precision(17);
        os << "iteration " << it << ": " << prev << " -> " << c.loglik;
        throw Error(Errc::MonotonicityViolation, os.str());
      }
      if ((c.loglik - prev) <= cfg.tol * std::abs(prev)) {
        r.converged = true;
        r.iterations = it;
        return r;
      }
    }
    prev = c.loglik;
    r.model = m_step(r.model, c);
    r.iterations = it + 1;
  }
  const double final_ll = total_log_likelihood(r.model, seqs);
  const double slack = cfg.monotonicity_slack * std::max(1.0, std::abs(prev));
  if (final_ll < prev - slack) throw Error(Errc::MonotonicityViolation, "final M-step decreased the likelihood");
  r.trace.push_back(final_ll);
  return r;
}

EmResult em_fit(const std::vector<Sequence>& seqs, int n_o, int n_x, int n_d, const EmConfig& cfg) {
  check_em_inputs(seqs, n_o, n_x, n_d, cfg);
  Rng rng(cfg.seed);
  RandomModelOptions init_opt;
  init_opt.min_sigma = 0;
  EmResult best;
  bool have = false;
  for (int k = 0; k < cfg.restarts; ++k) {
    const auto init = random_model(n_o, n_x, n_d, rng(), init_opt);
    auto r = em_fit_from(seqs, init, cfg);
    r.best_restart = k;
    if (!have || r.trace.back() > best.trace.back()) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

}  // namespace shsmm
