#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "shsmm/em.hpp"
#include "shsmm/model.hpp"
#include "shsmm/spectral.hpp"

namespace shsmm {

struct ModelSize {
  int n_o = 3, n_x = 2, n_d = 2;
  std::string str() const;  // "3x2x2"
};

struct BenchConfig {
  std::vector<ModelSize> sizes{{3, 2, 2}, {5, 4, 6}};
  std::vector<int> Ns{500, 1000, 5000, 10000, 100000};
  int T = 100;
  int n_test = 1000;
  int seeds = 5;
  std::uint64_t base_seed = 1;
  bool run_em = true;
  int em_max_n = 0;  // skip EM above this N; 0 runs it everywhere
  EmConfig em;
  int threads = 0;  // 0 picks hardware_concurrency
};

// "paper" (defaults), "paper-small", "smoke". Throws InvalidArgument.
BenchConfig bench_preset(const std::string& name);

// Relative deviation |p_hat / p - 1| from log values; p_hat may be signed.
double relative_error(double log_p_hat, int sign_hat, double log_p);
// sqrt(mean eps^2)
double rmse(const std::vector<double>& eps);

struct BenchCell {
  ModelSize size;
  int N = 0;
  int seed_index = 0;
  std::uint64_t model_seed = 0;
  bool spectral_ok = false, em_ran = false;
  std::string spectral_error;
  double rmse_spectral = 0, rmse_em = 0;
  double learn_time_spectral = 0, learn_time_em = 0;  // seconds
  double infer_time_spectral = 0, infer_time_em = 0;
  int em_iterations = 0;
};

struct BenchRow {
  ModelSize size;
  int N = 0;
  int seeds_used = 0;  // cells where spectral learning succeeded
  int failed = 0;
  int em_seeds = 0;
  double rmse_spectral = 0, rmse_em = 0;  // means over seeds; NaN when nothing ran
  double learn_time_spectral = 0, learn_time_em = 0;
  double infer_time_spectral = 0, infer_time_em = 0;
};

struct BenchReport {
  std::vector<BenchCell> cells;
  std::vector<BenchRow> rows;
};

// Ground-truth model and test set depend on (size, seed) only; training data
// on (size, N, seed).
BenchCell run_bench_cell(const BenchConfig& cfg, const ModelSize& size, int N, int seed_index);
BenchReport run_synthetic_bench(const BenchConfig& cfg);

void write_bench_csv(const BenchReport& r, std::ostream& out);
void write_bench_cells_csv(const BenchReport& r, std::ostream& out, bool with_timing = true);
std::string bench_config_json(const BenchConfig& cfg);

}  // namespace shsmm
