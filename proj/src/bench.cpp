#include "shsmm/bench.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "shsmm/errors.hpp"
#include "shsmm/moments.hpp"

namespace shsmm {

std::string ModelSize::str() const {
  return std::to_string(n_o) + "x" + std::to_string(n_x) + "x" + std::to_string(n_d);
}

BenchConfig bench_preset(const std::string& name) {
  BenchConfig c;
  if (name == "paper") return c;
  if (name == "paper-small") {
    c.Ns = {500, 5000, 50000};
    c.n_test = 200;
    c.em_max_n = 5000;
    return c;
  }
  if (name == "smoke") {
    c.sizes = {{3, 2, 2}};
    c.Ns = {500, 5000};
    c.n_test = 50;
    c.seeds = 2;
    c.em.max_iter = 20;
    c.em.restarts = 1;
    return c;
  }
  throw Error(Errc::InvalidArgument, "unknown preset '" + name + "' (paper, paper-small, smoke)");
}

double relative_error(double log_p_hat, int sign_hat, double log_p) {
  if (sign_hat == 0) return 1.0;
  const double d = std::min(log_p_hat - log_p, 700.0);
  return std::abs(sign_hat * std::exp(d) - 1.0);
}

double rmse(const std::vector<double>& eps) {
  if (eps.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (double e : eps) s += e * e;
  return std::sqrt(s / static_cast<double>(eps.size()));
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 step over the combined key
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t size_key(const ModelSize& s) {
  return static_cast<std::uint64_t>(s.n_o) << 32 | static_cast<std::uint64_t>(s.n_x) << 16 |
         static_cast<std::uint64_t>(s.n_d);
}

}  // namespace

BenchCell run_bench_cell(const BenchConfig& cfg, const ModelSize& size, int N, int seed_index) {
  BenchCell cell;
  cell.size = size;
  cell.N = N;
  cell.seed_index = seed_index;
  const std::uint64_t base = mix(mix(cfg.base_seed, size_key(size)), static_cast<std::uint64_t>(seed_index));
  cell.model_seed = base;
  const auto truth = random_model(size.n_o, size.n_x, size.n_d, base);
  Rng test_rng(mix(base, 1));
  const auto test = sample_many(truth, cfg.n_test, cfg.T, test_rng);
  Rng train_rng(mix(base, 2 + static_cast<std::uint64_t>(N)));
  const auto train = sample_many(truth, N, cfg.T, train_rng);

  std::vector<double> true_log(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) true_log[i] = forward_likelihood(truth, test[i]).log_p;

  auto t0 = Clock::now();
  try {
    const auto sched = build_schedule(size.n_x, size.n_d);
    const auto model = build_observable(estimate_moments(train, sched, size.n_o, 1));
    const CompiledObservable compiled(model);
    cell.learn_time_spectral = seconds_since(t0);
    t0 = Clock::now();
    std::vector<double> eps(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto r = compiled.infer(test[i]);
      eps[i] = relative_error(r.log_value, r.sign, true_log[i]);
    }
    cell.infer_time_spectral = seconds_since(t0);
    cell.rmse_spectral = rmse(eps);
    cell.spectral_ok = true;
  } catch (const Error& e) {
    if (e.code() != Errc::DegenerateMoments && e.code() != Errc::InsufficientData) throw;
    cell.spectral_error = e.what();
    cell.rmse_spectral = std::numeric_limits<double>::quiet_NaN();
  }

  cell.rmse_em = std::numeric_limits<double>::quiet_NaN();
  if (cfg.run_em && (cfg.em_max_n <= 0 || N <= cfg.em_max_n)) {
    EmConfig ec = cfg.em;
    ec.seed = mix(base, 3);
    t0 = Clock::now();
    const auto fit = em_fit(train, size.n_o, size.n_x, size.n_d, ec);
    cell.learn_time_em = seconds_since(t0);
    cell.em_iterations = fit.iterations;
    t0 = Clock::now();
    std::vector<double> eps(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto l = forward_likelihood(fit.model, test[i]);
      eps[i] = relative_error(l.log_p, 1, true_log[i]);
    }
    cell.infer_time_em = seconds_since(t0);
    cell.rmse_em = rmse(eps);
    cell.em_ran = true;
  }
  return cell;
}

BenchReport run_synthetic_bench(const BenchConfig& cfg) {
  if (cfg.seeds < 1 || cfg.T < 1 || cfg.n_test < 1 || cfg.Ns.empty() || cfg.sizes.empty())
    throw Error(Errc::InvalidArgument, "bench needs sizes, Ns, seeds >= 1, T >= 1, n_test >= 1");
  struct Job {
    ModelSize size;
    int N, seed;
  };
  std::vector<Job> jobs;
  for (const auto& s : cfg.sizes)
    for (int N : cfg.Ns)
      for (int k = 0; k < cfg.seeds; ++k) jobs.push_back({s, N, k});

  BenchReport rep;
  rep.cells.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < jobs.size();) {
      try {
        rep.cells[i] = run_bench_cell(cfg, jobs[i].size, jobs[i].N, jobs[i].seed);
      } catch (...) {
        std::lock_guard<std::mutex> lk(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  unsigned n = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::max(1u, std::thread::hardware_concurrency());
  n = std::min<unsigned>(n, static_cast<unsigned>(jobs.size()));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& s : cfg.sizes)
    for (int N : cfg.Ns) {
      BenchRow row;
      row.size = s;
      row.N = N;
      double rs = 0, re = 0, ls = 0, le = 0, is = 0, ie = 0;
      for (const auto& c : rep.cells) {
        if (c.size.str() != s.str() || c.N != N) continue;
        if (c.spectral_ok) {
          ++row.seeds_used;
          rs += c.rmse_spectral;
          ls += c.learn_time_spectral;
          is += c.infer_time_spectral;
        } else {
          ++row.failed;
        }
        if (c.em_ran) {
          ++row.em_seeds;
          re += c.rmse_em;
          le += c.learn_time_em;
          ie += c.infer_time_em;
        }
      }
      const double ns = row.seeds_used, ne = row.em_seeds;
      row.rmse_spectral = ns > 0 ? rs / ns : nan;
      row.learn_time_spectral = ns > 0 ? ls / ns : nan;
      row.infer_time_spectral = ns > 0 ? is / ns : nan;
      row.rmse_em = ne > 0 ? re / ne : nan;
      row.learn_time_em = ne > 0 ? le / ne : nan;
      row.infer_time_em = ne > 0 ? ie / ne : nan;
      rep.rows.push_back(row);
    }
  return rep;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

void write_bench_csv(const BenchReport& r, std::ostream& out) {
  out << "size,N,rmse_spectral,rmse_em,learn_time_spectral,learn_time_em,infer_time_spectral,infer_time_em,"
         "seeds_used,em_seeds,failed\n";
  for (const auto& row : r.rows)
    out << row.size.str() << "," << row.N << "," << num(row.rmse_spectral) << "," << num(row.rmse_em) << ","
        << num(row.learn_time_spectral) << "," << num(row.learn_time_em) << "," << num(row.infer_time_spectral)
        << "," << num(row.infer_time_em) << "," << row.seeds_used << "," << row.em_seeds << "," << row.failed << "\n";
}

void write_bench_cells_csv(const BenchReport& r, std::ostream& out, bool with_timing) {
  out << "size,N,seed_index,model_seed,spectral_ok,rmse_spectral,rmse_em,em_iterations";
  if (with_timing) out << ",learn_time_spectral,learn_time_em,infer_time_spectral,infer_time_em";
  out << ",error\n";
  for (const auto& c : r.cells) {
    out << c.size.str() << "," << c.N << "," << c.seed_index << "," << c.model_seed << "," << (c.spectral_ok ? 1 : 0)
        << "," << num(c.rmse_spectral) << "," << num(c.rmse_em) << "," << c.em_iterations;
    if (with_timing)
      out << "," << num(c.learn_time_spectral) << "," << num(c.learn_time_em) << "," << num(c.infer_time_spectral)
          << "," << num(c.infer_time_em);
    std::string err = c.spectral_error;
    for (auto& ch : err)
      if (ch == ',' || ch == '\n') ch = ';';
    out << "," << err << "\n";
  }
}

std::string bench_config_json(const BenchConfig& cfg) {
  nlohmann::json j;
  for (const auto& s : cfg.sizes) j["sizes"].push_back({s.n_o, s.n_x, s.n_d});
  j["Ns"] = cfg.Ns;
  j["T"] = cfg.T;
  j["n_test"] = cfg.n_test;
  j["seeds"] = cfg.seeds;
  j["base_seed"] = cfg.base_seed;
  j["run_em"] = cfg.run_em;
  j["em_max_n"] = cfg.em_max_n;
  j["em"] = {{"max_iter", cfg.em.max_iter}, {"tol", cfg.em.tol}, {"restarts", cfg.em.restarts}};
  j["threads"] = cfg.threads;
  j["epsilon"] = "|p_hat/p - 1| with p from the exact forward pass of the generating model";
  return j.dump(2) + "\n";
}

}  // namespace shsmm
