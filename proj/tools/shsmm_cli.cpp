#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "shsmm/bench.hpp"
#include "shsmm/em.hpp"
#include "shsmm/errors.hpp"
#include "shsmm/io.hpp"
#include "shsmm/kernels.hpp"
#include "shsmm/model.hpp"
#include "shsmm/moments.hpp"
#include "shsmm/rank_analysis.hpp"
#include "shsmm/spectral.hpp"

using namespace shsmm;

namespace {

constexpr int kOk = 0, kUsage = 1, kDataError = 2;

// Writes to `path`, or stdout when path is empty or "-".
template <class F>
void with_output(const std::string& path, F&& f) {
  if (path.empty() || path == "-") {
    f(std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path);
  f(out);
}

Sequence parse_inline(const std::string& text) {
  std::istringstream in(text);
  const auto lines = read_sequence_lines(in);
  if (lines.size() != 1) throw Error(Errc::ParseError, "expected exactly one inline sequence");
  if (!lines[0].error.empty()) throw Error(Errc::ParseError, lines[0].error);
  return lines[0].symbols;
}

// A learned container (pooled or per-anchor) or an HSMM JSON evaluated exactly.
struct Scorer {
  std::function<InferenceResult(const Sequence&)> fn;
  std::string kind;
};

Scorer load_scorer(const std::string& path) {
  Scorer s;
  if (is_container_file(path)) {
    const auto c = load_container(path);
    if (c.kind == "observable-per-t") {
      auto pm = std::make_shared<PerTModel>(per_t_from_container(c));
      s.fn = [pm](const Sequence& o) { return infer_per_t(*pm, o); };
    } else {
      auto m = std::make_shared<CompiledObservable>(observable_from_container(c));
      s.fn = [m](const Sequence& o) { return m->infer(o); };
    }
    s.kind = c.kind;
    return s;
  }
  auto p = std::make_shared<HsmmParams>(load_model(path));
  require_valid(*p);
  s.fn = [p](const Sequence& o) {
    if (o.size() < 3) throw Error(Errc::SequenceTooShort, "need T >= 3, got " + std::to_string(o.size()));
    const auto l = forward_likelihood(*p, o);
    InferenceResult r;
    r.log_value = l.log_p;
    r.sign = l.p > 0 || std::isfinite(l.log_p) ? 1 : 0;
    r.clamped = r.sign == 0;
    return r;
  };
  s.kind = "hsmm";
  return s;
}

void print_result(std::ostream& out, const InferenceResult& r, std::size_t T) {
  out.precision(17);
  out << r.log_value << "," << r.sign << "," << (r.clamped ? 1 : 0) << "," << r.log_value / static_cast<double>(T)
      << "\n";
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, "bad integer list '" + s + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral learning and inference for explicit-duration hidden semi-Markov models"};
  app.require_subcommand(1);
  std::uint64_t seed = 1;

  int n_o = 3, n_x = 2, n_d = 2;
  auto add_sizes = [&](CLI::App* sc, bool required) {
    auto a = sc->add_option("--no", n_o, "Number of observation symbols");
    auto b = sc->add_option("--nx", n_x, "Number of hidden states");
    auto c = sc->add_option("--nd", n_d, "Maximum duration");
    if (required) {
      a->required();
      b->required();
      c->required();
    }
  };
  auto add_seed = [&](CLI::App* sc) { sc->add_option("--seed", seed, "Random seed"); };

  std::string out_path, model_path, data_path, seq_text;

  auto* gen_model = app.add_subcommand("gen-model", "Draw a random valid HSMM");
  add_sizes(gen_model, true);
  add_seed(gen_model);
  double min_sigma = 0.05;
  gen_model->add_option("--min-sigma", min_sigma, "Minimum singular value of O and X")->capture_default_str();
  gen_model->add_option("-o,--output", out_path, "Model JSON (default stdout)");

  auto* gen_data = app.add_subcommand("gen-data", "Sample sequences from a model");
  int count = 100, length = 100;
  gen_data->add_option("model", model_path, "Model JSON")->required();
  gen_data->add_option("-n,--count", count, "Number of sequences")->capture_default_str();
  gen_data->add_option("-T,--length", length, "Sequence length")->capture_default_str();
  add_seed(gen_data);
  gen_data->add_option("-o,--output", out_path, "Sequence file (default stdout)");

  auto* validate_cmd = app.add_subcommand("validate", "Check model stochasticity and identifiability assumptions");
  double vrtol = 1e-10;
  validate_cmd->add_option("model", model_path, "Model JSON")->required();
  validate_cmd->add_option("--rtol", vrtol, "Tolerance")->capture_default_str();
  add_seed(validate_cmd);

  auto* learn_sp = app.add_subcommand("learn-spectral", "Estimate moments and build the observable representation");
  bool basic = false, no_truncate = false;
  double rtol = 0;
  int threads = 0;
  learn_sp->add_option("data", data_path, "Training sequences")->required();
  add_sizes(learn_sp, true);
  add_seed(learn_sp);
  learn_sp->add_flag("--basic", basic, "Per-anchor variant instead of pooling windows");
  learn_sp->add_option("--rtol", rtol, "Relative pseudo-inverse tolerance (default: scalar epsilon based)");
  learn_sp->add_flag("--no-truncate", no_truncate, "Do not truncate inverses at the model rank");
  learn_sp->add_option("--threads", threads, "Moment estimation threads (0 = all)");
  learn_sp->add_option("-o,--output", out_path, "Tensor container")->required();

  auto* learn_em = app.add_subcommand("learn-em", "Fit an HSMM by expectation maximisation");
  EmConfig em;
  learn_em->add_option("data", data_path, "Training sequences")->required();
  add_sizes(learn_em, true);
  add_seed(learn_em);
  learn_em->add_option("--max-iter", em.max_iter)->capture_default_str();
  learn_em->add_option("--tol", em.tol)->capture_default_str();
  learn_em->add_option("--restarts", em.restarts)->capture_default_str();
  learn_em->add_option("-o,--output", out_path, "Model JSON (default stdout)");

  auto* infer_cmd = app.add_subcommand("infer", "Evaluate sequence probabilities");
  infer_cmd->add_option("model", model_path, "Tensor container or model JSON")->required();
  auto* seq_opt = infer_cmd->add_option("-s,--sequence", seq_text, "Inline sequence, e.g. \"0 1 2\"");
  infer_cmd->add_option("-i,--input", data_path, "Sequence file")->excludes(seq_opt);
  add_seed(infer_cmd);
  infer_cmd->add_option("-o,--output", out_path, "Output (default stdout)");

  auto* score_cmd = app.add_subcommand("score", "Score a sequence file as CSV, one row per sequence");
  score_cmd->add_option("model", model_path, "Tensor container or model JSON")->required();
  score_cmd->add_option("-i,--input", data_path, "Sequence file")->required();
  add_seed(score_cmd);
  score_cmd->add_option("-o,--output", out_path, "CSV (default stdout)");

  auto* rank_cmd = app.add_subcommand("rank-check", "Check predicted against numerical ranks of T and F");
  std::string nx_list = "2,3,4", nd_list = "2,3,4,5,6";
  int rank_seeds = 5;
  double rank_rtol = kRankRtol;
  rank_cmd->add_option("--nx", nx_list, "Comma-separated n_x values")->capture_default_str();
  rank_cmd->add_option("--nd", nd_list, "Comma-separated n_d values")->capture_default_str();
  rank_cmd->add_option("--seeds", rank_seeds, "Random models per cell")->capture_default_str();
  rank_cmd->add_option("--rtol", rank_rtol, "Rank tolerance")->capture_default_str();
  add_seed(rank_cmd);
  rank_cmd->add_option("-o,--output", out_path, "CSV (default stdout)");

  auto* bench_cmd = app.add_subcommand("bench", "Synthetic spectral-vs-EM benchmark");
  std::string preset = "paper-small", cells_path;
  int bench_seeds = 0, em_max_n = -1, bench_threads = 0;
  bool no_em = false;
  bench_cmd->add_option("--preset", preset, "paper, paper-small or smoke")->capture_default_str();
  bench_cmd->add_option("--seeds", bench_seeds, "Seeds per (size, N) cell (default from preset)");
  bench_cmd->add_flag("--no-em", no_em, "Skip the EM baseline");
  bench_cmd->add_option("--em-max-n", em_max_n, "Skip EM above this N (0 = never skip)");
  bench_cmd->add_option("--threads", bench_threads, "Parallel cells (0 = all cores)");
  bench_cmd->add_option("--cells", cells_path, "Also write per-seed cells CSV");
  add_seed(bench_cmd);
  bench_cmd->add_option("-o,--output", out_path, "Report CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen_model) {
      RandomModelOptions opt;
      opt.min_sigma = min_sigma;
      const auto p = random_model(n_o, n_x, n_d, seed, opt);
      with_output(out_path, [&](std::ostream& o) { o << model_to_json(p); });
    } else if (*gen_data) {
      const auto p = load_model(model_path);
      require_valid(p);
      if (count < 1 || length < 1) throw Error(Errc::InvalidArgument, "count and length must be positive");
      Rng rng(seed);
      const auto seqs = sample_many(p, count, length, rng);
      with_output(out_path, [&](std::ostream& o) {
        for (const auto& s : seqs) {
          for (std::size_t i = 0; i < s.size(); ++i) o << (i ? " " : "") << s[i];
          o << "\n";
        }
      });
    } else if (*validate_cmd) {
      const auto p = load_model(model_path);
      const auto rep = validate(p, vrtol);
      std::cout << rep.summary();
      if (!rep.ok()) {
        std::cerr << "InvalidModel: " << model_path << " failed validation\n";
        return kDataError;
      }
    } else if (*learn_sp) {
      const auto seqs = load_sequences(data_path);
      for (const auto& s : seqs)
        for (auto o : s)
          if (o >= n_o) throw Error(Errc::UnknownSymbol, "symbol " + std::to_string(o) + " >= n_o");
      const auto sched = build_schedule(n_x, n_d);
      BuildOptions opt;
      if (rtol > 0) opt.rtol = rtol;
      opt.truncate_to_model_rank = !no_truncate;
      TensorContainer c;
      if (basic) {
        c = per_t_to_container(build_observable_per_t(seqs, sched, n_o, opt));
      } else {
        const auto m = estimate_moments(seqs, sched, n_o, threads);
        c = observable_to_container(build_observable(m, opt));
        c.meta["window_count"] = std::to_string(m.window_count);
      }
      c.meta["isa"] = kernels::active_isa() == kernels::Isa::Avx2 ? "avx2" : "scalar";
      save_container(c, out_path);
    } else if (*learn_em) {
      const auto seqs = load_sequences(data_path);
      em.seed = seed;
      const auto r = em_fit(seqs, n_o, n_x, n_d, em);
      with_output(out_path, [&](std::ostream& o) { o << model_to_json(r.model); });
      std::cerr << "iterations " << r.iterations << " converged " << (r.converged ? "yes" : "no")
                << " loglik " << r.trace.back() << "\n";
    } else if (*infer_cmd) {
      const auto scorer = load_scorer(model_path);
      std::vector<Sequence> seqs;
      if (!seq_text.empty()) seqs.push_back(parse_inline(seq_text));
      else if (!data_path.empty()) seqs = load_sequences(data_path);
      else throw Error(Errc::InvalidArgument, "give --sequence or --input");
      std::vector<std::pair<InferenceResult, std::size_t>> results;
      for (const auto& s : seqs) results.emplace_back(scorer.fn(s), s.size());
      with_output(out_path, [&](std::ostream& o) {
        o << "log_value,sign,clamped,norm_loglik\n";
        for (const auto& [r, T] : results) print_result(o, r, T);
      });
    } else if (*score_cmd) {
      const auto scorer = load_scorer(model_path);
      std::ifstream in(data_path);
      if (!in) throw Error(Errc::IoError, "cannot open " + data_path);
      ScoreSummary sum;
      with_output(out_path, [&](std::ostream& o) { sum = score_stream(scorer.fn, in, o); });
      std::cerr << "scored " << sum.rows << " sequences, " << sum.errors << " error rows\n";
    } else if (*rank_cmd) {
      RankGridOptions opt;
      opt.n_x = parse_int_list(nx_list);
      opt.n_d = parse_int_list(nd_list);
      opt.seeds = rank_seeds;
      opt.base_seed = seed;
      opt.rtol = rank_rtol;
      for (int v : opt.n_x)
        if (v < 1) throw Error(Errc::InvalidArgument, "n_x must be >= 1");
      for (int v : opt.n_d)
        if (v < 1) throw Error(Errc::InvalidArgument, "n_d must be >= 1");
      const auto rows = run_rank_grid(opt);
      with_output(out_path, [&](std::ostream& o) { write_rank_csv(rows, o); });
      std::size_t bad = 0;
      for (const auto& r : rows) bad += !r.pass;
      std::cerr << rows.size() << " rank checks, " << bad << " mismatches\n";
      if (bad) return kDataError;
    } else if (*bench_cmd) {
      auto cfg = bench_preset(preset);
      cfg.base_seed = seed;
      if (bench_seeds > 0) cfg.seeds = bench_seeds;
      if (no_em) cfg.run_em = false;
      if (em_max_n >= 0) cfg.em_max_n = em_max_n;
      cfg.threads = bench_threads;
      const auto rep = run_synthetic_bench(cfg);
      with_output(out_path, [&](std::ostream& o) { write_bench_csv(rep, o); });
      with_output(out_path + ".config.json", [&](std::ostream& o) { o << bench_config_json(cfg); });
      if (!cells_path.empty()) with_output(cells_path, [&](std::ostream& o) { write_bench_cells_csv(rep, o); });
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}
