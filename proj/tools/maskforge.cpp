// maskforge CLI: synthetic-corpus generation, two-stage separator training,
// NMF baseline training, separation, evaluation, and the end-to-end
// reproduction run.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "maskforge/bss_eval.hpp"
#include "maskforge/data_io.hpp"
#include "maskforge/errors.hpp"
#include "maskforge/neural.hpp"
#include "maskforge/nmf.hpp"
#include "maskforge/pipeline.hpp"

namespace fs = std::filesystem;
using namespace maskforge;

namespace {

constexpr const char* kExitCodeNote =
    "Exit codes: 0 success, 1 usage, 2 configuration, 3 I/O, 4 numeric failure.";

// Seed precedence: --seed flag > MASKFORGE_SEED env > config/default.
std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("MASKFORGE_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto value = std::stoull(raw, &used);
    if (used != std::string(raw).size())
      throw InvalidConfig("MASKFORGE_SEED is not an integer: " + std::string(raw));
    return value;
  } catch (const InvalidConfig&) {
    throw;
  } catch (const std::exception&) {
    throw InvalidConfig("MASKFORGE_SEED is not an integer: " + std::string(raw));
  }
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const auto env = env_seed()) return *env;
  return fallback;
}

void write_trace_csv(const fs::path& path, const std::vector<double>& costs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(17) << "epoch,cost\n";
  for (std::size_t i = 0; i < costs.size(); ++i) out << i + 1 << ',' << costs[i] << '\n';
}

pipeline::Corpus load_corpus_dir(const fs::path& corpus_dir) {
  return io::load_corpus(io::load_manifest(corpus_dir / "manifest.json"));
}

pipeline::PipelineConfig load_config_with_seed(const fs::path& config_path,
                                               const std::optional<std::uint64_t>& seed_flag) {
  auto cfg = io::load_config(config_path);
  cfg.seed = resolve_seed(seed_flag, cfg.seed);
  return cfg;
}

void print_summary(const std::vector<bss::ModelSummary>& summary) {
  std::cout << "model  songs  SDR mean/med      SIR mean/med      SAR mean/med (dB)\n";
  for (const auto& s : summary) {
    std::ostringstream line;
    line << std::left << std::setw(7) << s.model << std::setw(7) << s.song_count
         << std::fixed << std::setprecision(2) << std::setw(8) << s.mean.sdr_db << '/'
         << std::setw(9) << s.median.sdr_db << std::setw(8) << s.mean.sir_db << '/'
         << std::setw(9) << s.median.sir_db << std::setw(8) << s.mean.sar_db << '/'
         << s.median.sar_db;
    std::cout << line.str() << "\n";
  }
}

// Canonical model order first, anything else after, for stable reports.
std::vector<std::string> order_models(std::vector<std::string> names) {
  std::vector<std::string> ordered;
  for (const char* canonical : pipeline::kAllModels) {
    auto it = std::find(names.begin(), names.end(), canonical);
    if (it != names.end()) {
      ordered.push_back(*it);
      names.erase(it);
    }
  }
  std::sort(names.begin(), names.end());
  ordered.insert(ordered.end(), names.begin(), names.end());
  return ordered;
}

struct GenDataArgs {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string songs = "8,8,6";
  double duration = 6.0;
  int rate = 16000;
};

int run_gen_data(const GenDataArgs& args) {
  io::SynthSpec spec;
  spec.duration_s = args.duration;
  spec.sample_rate = args.rate;
  spec.seed = resolve_seed(args.seed, spec.seed);

  int counts[3] = {0, 0, 0};
  std::istringstream parts(args.songs);
  std::string token;
  int parsed = 0;
  while (std::getline(parts, token, ',') && parsed < 3) counts[parsed++] = std::stoi(token);
  if (parsed != 3 || counts[0] < 1 || counts[1] < 1 || counts[2] < 1)
    throw InvalidConfig("--songs must be three positive counts: train_a,train_b,test");
  spec.train_a_songs = counts[0];
  spec.train_b_songs = counts[1];
  spec.test_songs = counts[2];

  const auto manifest = io::generate_synthetic_corpus(spec, args.out);
  std::cout << "[gen-data] wrote " << manifest.entries.size() << " songs under " << args.out
            << " (seed " << spec.seed << ")\n";
  return 0;
}

struct TrainArgs {
  std::string corpus;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  double lambda = 0.0;
  std::string dnn_a;  // train-enh only
  int basis_count = 0;  // train-nmf only; 0 = use config
};

int run_train_sep(const TrainArgs& args) {
  const auto cfg = load_config_with_seed(args.config, args.seed);
  const auto corpus = load_corpus_dir(args.corpus);
  const auto trained = pipeline::train_dnn_a(corpus, cfg);
  neural::save_mlp(trained.net, args.out);
  write_trace_csv(fs::path(args.out).string() + ".trace.csv", trained.cost_trace);
  std::cout << "[train-sep] final cost " << trained.cost_trace.back() << " after "
            << trained.cost_trace.size() << " epochs -> " << args.out << "\n";
  return 0;
}

int run_train_enh(const TrainArgs& args) {
  const auto cfg = load_config_with_seed(args.config, args.seed);
  const auto corpus = load_corpus_dir(args.corpus);
  const auto dnn_a = neural::load_mlp(args.dnn_a);
  const auto data = pipeline::gen_enh_training(corpus, dnn_a, cfg);
  const auto trained = pipeline::train_dnn_b(data, args.lambda, cfg);
  neural::save_mlp(trained.net, args.out);
  write_trace_csv(fs::path(args.out).string() + ".trace.csv", trained.cost_trace);
  std::cout << "[train-enh] model " << pipeline::model_name_for_lambda(args.lambda)
            << " final cost " << trained.cost_trace.back() << " after "
            << trained.cost_trace.size() << " epochs -> " << args.out << "\n";
  return 0;
}

int run_train_nmf(const TrainArgs& args) {
  auto cfg = load_config_with_seed(args.config, args.seed);
  if (args.basis_count > 0) cfg.nmf.basis_count = args.basis_count;
  const auto corpus = load_corpus_dir(args.corpus);
  const auto [vocal, accomp] = pipeline::train_nmf_bases(corpus, cfg);
  const auto vocal_path = args.out + ".vocal.nmf";
  const auto accomp_path = args.out + ".accompaniment.nmf";
  nmf::save_basis(vocal, vocal_path);
  nmf::save_basis(accomp, accomp_path);
  std::cout << "[train-nmf] " << cfg.nmf.basis_count << " bases per source -> " << vocal_path
            << ", " << accomp_path << "\n";
  return 0;
}

struct SeparateArgs {
  std::string mixture;
  std::string dnn_a;
  std::string dnn_b;
  std::string nmf_pair;
  std::string out;
  std::string config;
};

int run_separate(const SeparateArgs& args) {
  const auto cfg = io::load_config(args.config);
  const auto mixture = io::read_wav(args.mixture);
  const auto dnn_a = neural::load_mlp(args.dnn_a);

  std::vector<dsp::Waveform> estimates;
  if (!args.nmf_pair.empty()) {
    const auto comma = args.nmf_pair.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == args.nmf_pair.size())
      throw InvalidConfig("--nmf expects two comma-separated basis files: W1,W2");
    const auto vocal_basis = nmf::load_basis(args.nmf_pair.substr(0, comma));
    const auto accomp_basis = nmf::load_basis(args.nmf_pair.substr(comma + 1));
    estimates = pipeline::separate_nmf(mixture, dnn_a, vocal_basis, accomp_basis, cfg);
  } else if (!args.dnn_b.empty()) {
    const auto dnn_b = neural::load_mlp(args.dnn_b);
    estimates = pipeline::separate(mixture, dnn_a, &dnn_b, cfg);
  } else {
    estimates = pipeline::separate(mixture, dnn_a, nullptr, cfg);  // model "S"
  }

  fs::create_directories(args.out);
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto path = fs::path(args.out) / ("source_" + std::to_string(i + 1) + ".wav");
    io::write_wav(estimates[i], path, 16);
    std::cout << "[separate] wrote " << path.string() << "\n";
  }
  return 0;
}

struct EvaluateArgs {
  std::string corpus;
  std::string estimates;
  std::string out;
};

int run_evaluate(const EvaluateArgs& args) {
  const auto corpus = load_corpus_dir(args.corpus);
  const auto test_songs = corpus.subset(pipeline::Split::Test);
  if (test_songs.empty()) throw InvalidInput("evaluate: corpus has no test split");

  std::vector<std::string> model_names;
  for (const auto& entry : fs::directory_iterator(args.estimates))
    if (entry.is_directory()) model_names.push_back(entry.path().filename().string());
  if (model_names.empty())
    throw IoError("evaluate: no model directories under " + args.estimates);
  model_names = order_models(std::move(model_names));

  std::vector<bss::ReportRow> rows;
  for (const pipeline::Song* song : test_songs) {
    const std::vector<dsp::Waveform> references = {song->vocal, song->accompaniment};
    for (const auto& model : model_names) {
      std::vector<dsp::Waveform> estimates;
      for (int i = 1; i <= 2; ++i) {
        const auto path =
            fs::path(args.estimates) / model / song->id / ("source_" + std::to_string(i) + ".wav");
        if (!fs::exists(path)) throw IoError("evaluate: missing estimate file " + path.string());
        auto est = io::read_wav(path);
        est.samples.resize(references[0].samples.size(), 0.0);
        estimates.push_back(std::move(est));
      }
      const auto report = bss::song_report(estimates, references);
      const char* source_names[] = {"vocal", "accompaniment"};
      for (std::size_t i = 0; i < report.per_source.size(); ++i)
        rows.push_back({song->id, model, source_names[i], report.per_source[i]});
    }
  }

  const auto per_song = bss::per_song_averages(rows);
  const auto summary = bss::summarize(per_song);
  const fs::path report_path(args.out);
  if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
  bss::write_metrics_csv(report_path, rows);
  auto with_suffix = [&report_path](const char* suffix) {
    fs::path p = report_path;
    p.replace_extension(std::string(suffix) + ".csv");
    return p;
  };
  bss::write_per_song_csv(with_suffix("persong"), per_song);
  bss::write_summary_csv(with_suffix("summary"), summary);
  print_summary(summary);
  return 0;
}

struct ReproduceArgs {
  std::string corpus;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

int run_reproduce(const ReproduceArgs& args) {
  const fs::path corpus_dir(args.corpus);
  const fs::path out_dir(args.out);
  fs::create_directories(out_dir);

  // Stage 0: corpus (generated when absent).
  if (!fs::exists(corpus_dir / "manifest.json")) {
    io::SynthSpec spec;
    spec.seed = resolve_seed(args.seed, spec.seed);
    std::cout << "[reproduce] no manifest found, generating synthetic corpus (seed " << spec.seed
              << ")\n";
    io::generate_synthetic_corpus(spec, corpus_dir);
  }

  pipeline::PipelineConfig cfg;
  if (!args.config.empty()) {
    cfg = io::load_config(args.config);
  } else if (fs::exists(corpus_dir / "config.json")) {
    cfg = io::load_config(corpus_dir / "config.json");
  } else {
    cfg = pipeline::default_config();
  }
  cfg.seed = resolve_seed(args.seed, cfg.seed);
  io::save_config(cfg, out_dir / "config.used.json");

  const auto corpus = load_corpus_dir(corpus_dir);
  const auto models_dir = out_dir / "models";
  fs::create_directories(models_dir);

  // Stage 1: separator.
  std::cout << "[reproduce] training separator (dnn-a, " << cfg.dnn_a.train.epochs
            << " epochs)\n";
  auto dnn_a = pipeline::train_dnn_a(corpus, cfg);
  neural::save_mlp(dnn_a.net, models_dir / "dnn_a.mlp");
  write_trace_csv(models_dir / "dnn_a.trace.csv", dnn_a.cost_trace);

  // Stage 2: enhancers, one per lambda.
  pipeline::ModelSet models;
  models.dnn_a = dnn_a.net;
  const auto enh_data = pipeline::gen_enh_training(corpus, models.dnn_a, cfg);
  for (double lambda : cfg.lambdas) {
    const auto name = pipeline::model_name_for_lambda(lambda);
    std::cout << "[reproduce] training enhancer " << name << " (lambda " << lambda << ", "
              << cfg.dnn_b.train.epochs << " epochs)\n";
    auto trained = pipeline::train_dnn_b(enh_data, lambda, cfg);
    neural::save_mlp(trained.net, models_dir / ("dnn_b_" + name + ".mlp"));
    write_trace_csv(models_dir / ("dnn_b_" + name + ".trace.csv"), trained.cost_trace);
    models.enhancers.emplace_back(name, std::move(trained.net));
  }

  // Stage 3: NMF baseline.
  std::cout << "[reproduce] training NMF bases (" << cfg.nmf.basis_count << " per source)\n";
  auto bases = pipeline::train_nmf_bases(corpus, cfg);
  nmf::save_basis(bases.first, models_dir / "nmf.vocal.nmf");
  nmf::save_basis(bases.second, models_dir / "nmf.accompaniment.nmf");
  models.nmf_bases = std::move(bases);

  // Stage 4: separate + evaluate the full model matrix.
  std::vector<std::string> requested = {"S", "N"};
  for (double lambda : cfg.lambdas) requested.push_back(pipeline::model_name_for_lambda(lambda));
  std::cout << "[reproduce] separating and evaluating the test split\n";
  const auto result = pipeline::run_experiment(corpus, cfg, models, requested, out_dir, args.jobs);
  print_summary(result.summary);
  std::cout << "[reproduce] reports under " << (out_dir / "reports").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maskforge: two-stage mask-based single-channel source separation"};
  app.require_subcommand(1);
  app.footer(kExitCodeNote);

  GenDataArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "Generate the deterministic synthetic corpus");
  gen->footer(kExitCodeNote);
  gen->add_option("--out", gen_args.out, "Corpus output directory")->required();
  gen->add_option("--seed", gen_args.seed, "Master seed (overrides MASKFORGE_SEED)");
  gen->add_option("--songs", gen_args.songs, "Songs per split: train_a,train_b,test")
      ->capture_default_str();
  gen->add_option("--duration", gen_args.duration, "Song duration in seconds")
      ->capture_default_str();
  gen->add_option("--rate", gen_args.rate, "Sample rate in Hz")->capture_default_str();

  TrainArgs sep_args;
  auto* sep = app.add_subcommand("train-sep", "Train the separator network (dnn-a)");
  sep->footer(kExitCodeNote);
  sep->add_option("--corpus", sep_args.corpus, "Corpus directory (with manifest.json)")
      ->required();
  sep->add_option("--config", sep_args.config, "Pipeline config file")->required();
  sep->add_option("--out", sep_args.out, "Model output path")->required();
  sep->add_option("--seed", sep_args.seed, "Master seed (overrides MASKFORGE_SEED and config)");

  TrainArgs enh_args;
  auto* enh = app.add_subcommand("train-enh", "Train the enhancement network (dnn-b)");
  enh->footer(kExitCodeNote);
  enh->add_option("--corpus", enh_args.corpus, "Corpus directory")->required();
  enh->add_option("--config", enh_args.config, "Pipeline config file")->required();
  enh->add_option("--out", enh_args.out, "Model output path")->required();
  enh->add_option("--dnn-a", enh_args.dnn_a, "Trained separator model")->required();
  enh->add_option("--lambda", enh_args.lambda, "Discriminative weight in [0,1)")
      ->capture_default_str();
  enh->add_option("--seed", enh_args.seed, "Master seed (overrides MASKFORGE_SEED and config)");

  TrainArgs nmf_args;
  auto* nmf_cmd = app.add_subcommand("train-nmf", "Train the NMF enhancement bases");
  nmf_cmd->footer(kExitCodeNote);
  nmf_cmd->add_option("--corpus", nmf_args.corpus, "Corpus directory")->required();
  nmf_cmd->add_option("--config", nmf_args.config, "Pipeline config file")->required();
  nmf_cmd->add_option("--out", nmf_args.out,
                      "Output prefix; writes <out>.vocal.nmf and <out>.accompaniment.nmf")
      ->required();
  nmf_cmd->add_option("--k", nmf_args.basis_count, "Basis vectors per source (default: config)");
  nmf_cmd->add_option("--seed", nmf_args.seed,
                      "Master seed (overrides MASKFORGE_SEED and config)");

  SeparateArgs sep_run_args;
  auto* sep_run = app.add_subcommand("separate", "Separate one mixture into source WAVs");
  sep_run->footer(kExitCodeNote);
  sep_run->add_option("--mixture", sep_run_args.mixture, "Input mixture WAV")->required();
  sep_run->add_option("--dnn-a", sep_run_args.dnn_a, "Trained separator model")->required();
  auto* dnn_b_opt =
      sep_run->add_option("--dnn-b", sep_run_args.dnn_b, "Enhancer model (models D*)");
  auto* nmf_opt = sep_run->add_option("--nmf", sep_run_args.nmf_pair,
                                      "NMF bases W1,W2 (model N)");
  dnn_b_opt->excludes(nmf_opt);
  nmf_opt->excludes(dnn_b_opt);
  sep_run->add_option("--out", sep_run_args.out, "Output directory")->required();
  sep_run->add_option("--config", sep_run_args.config, "Pipeline config file")->required();

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score estimate directories against references");
  eval_cmd->footer(kExitCodeNote);
  eval_cmd->add_option("--corpus", eval_args.corpus, "Corpus directory")->required();
  eval_cmd->add_option("--estimates", eval_args.estimates,
                       "Estimates root: <model>/<song_id>/source_N.wav")
      ->required();
  eval_cmd->add_option("--out", eval_args.out, "Report CSV path")->required();

  ReproduceArgs rep_args;
  auto* rep = app.add_subcommand(
      "reproduce", "End-to-end run: gen-data if absent, train S/N/D0/D2/D4, separate, evaluate");
  rep->footer(kExitCodeNote);
  rep->add_option("--corpus", rep_args.corpus, "Corpus directory (generated when absent)")
      ->required();
  rep->add_option("--config", rep_args.config, "Pipeline config file (default: corpus config)");
  rep->add_option("--out", rep_args.out, "Output directory")->required();
  rep->add_option("--seed", rep_args.seed, "Master seed (overrides MASKFORGE_SEED and config)");
  rep->add_option("--jobs", rep_args.jobs, "Worker cap for per-song stages")
      ->capture_default_str();

  try {
    app.parse(argc, argv);

    if (gen->parsed()) return run_gen_data(gen_args);
    if (sep->parsed()) return run_train_sep(sep_args);
    if (enh->parsed()) return run_train_enh(enh_args);
    if (nmf_cmd->parsed()) return run_train_nmf(nmf_args);
    if (sep_run->parsed()) return run_separate(sep_run_args);
    if (eval_cmd->parsed()) return run_evaluate(eval_args);
    if (rep->parsed()) return run_reproduce(rep_args);
    return 1;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the usage error
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidConfig& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
