#include "maskforge/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>

#include "maskforge/data_io.hpp"
#include "maskforge/errors.hpp"
#include "maskforge/rng.hpp"

namespace maskforge::pipeline {

namespace {

dsp::MagSpectrogram magnitude_of(const dsp::Waveform& wave, const PipelineConfig& cfg) {
  return dsp::magnitude_phase(dsp::stft(wave, cfg.stft)).first;
}

/// Magnitude-domain mixture and per-source magnitudes for one song.
struct SongSpectra {
  dsp::MagSpectrogram vocal;
  dsp::MagSpectrogram accompaniment;
  dsp::MagSpectrogram mixture;  // sum of the source magnitudes
};

SongSpectra song_spectra(const Song& song, const PipelineConfig& cfg) {
  SongSpectra s;
  s.vocal = magnitude_of(song.vocal, cfg);
  s.accompaniment = magnitude_of(song.accompaniment, cfg);
  s.mixture = s.vocal;
  s.mixture.values += s.accompaniment.values;
  return s;
}

Eigen::MatrixXd vstack(const std::vector<Eigen::MatrixXd>& parts) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Eigen::MatrixXd out(rows, parts.front().cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  return out;
}

void check_net_geometry(const neural::Mlp& net, int in, int out, const char* who) {
  if (net.input_dim() != in || net.output_dim() != out) {
    std::ostringstream msg;
    msg << who << ": network geometry " << net.input_dim() << "->" << net.output_dim()
        << " does not match the configured " << in << "->" << out;
    throw InvalidConfig(msg.str());
  }
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::TrainA: return "train_a";
    case Split::TrainB: return "train_b";
    case Split::Test: return "test";
  }
  return "?";
}

std::optional<Split> split_from_string(const std::string& name) {
  if (name == "train_a") return Split::TrainA;
  if (name == "train_b") return Split::TrainB;
  if (name == "test") return Split::Test;
  return std::nullopt;
}

std::vector<const Song*> Corpus::subset(Split split) const {
  std::vector<const Song*> out;
  for (const auto& song : songs)
    if (song.split == split) out.push_back(&song);
  return out;
}

PipelineConfig default_config() {
  PipelineConfig cfg;
  const int bins = cfg.stft.bin_count();  // 513
  cfg.dnn_a.layer_dims = {bins, 256, 256, 256, bins};
  cfg.dnn_a.train = {.epochs = 64, .batch_size = 100, .learning_rate = 0.1, .shuffle = true};
  cfg.dnn_b.layer_dims = {2 * bins, 512, 512, 512, 2 * bins};
  cfg.dnn_b.train = {.epochs = 110, .batch_size = 50, .learning_rate = 0.1, .shuffle = true};
  return cfg;
}

PipelineConfig paper_config() {
  PipelineConfig cfg;
  cfg.sample_rate = 44100;
  cfg.stft = {2048, 512, 2048};
  cfg.dnn_a.layer_dims = {1025, 1025, 1025, 1025, 1025};
  cfg.dnn_a.train = {.epochs = 200, .batch_size = 100, .learning_rate = 0.1, .shuffle = true};
  cfg.dnn_b.layer_dims = {2050, 4100, 4100, 4100, 2050};
  cfg.dnn_b.train = {.epochs = 200, .batch_size = 100, .learning_rate = 0.1, .shuffle = true};
  cfg.nmf = {.basis_count = 80, .train_iters = 200, .decode_iters = 100};
  return cfg;
}

std::vector<std::string> validate(const PipelineConfig& cfg) {
  std::vector<std::string> problems;
  auto complain = [&problems](const std::string& p) { problems.push_back(p); };

  if (cfg.sample_rate <= 0) complain("sample_rate must be positive");
  if (cfg.stft.window_len <= 0 || cfg.stft.hop <= 0 || cfg.stft.fft_len <= 0)
    complain("stft geometry entries must be positive");
  else {
    if (cfg.stft.window_len > cfg.stft.fft_len)
      complain("stft.window_len must not exceed stft.fft_len");
    if (cfg.stft.hop > cfg.stft.window_len) complain("stft.hop must not exceed stft.window_len");
  }

  const int bins = cfg.stft.bin_count();
  auto check_net = [&](const NetSettings& net, const char* name, int in, int out) {
    if (net.layer_dims.size() < 2) {
      complain(std::string(name) + ".layer_dims needs at least two entries");
      return;
    }
    for (int d : net.layer_dims)
      if (d <= 0) complain(std::string(name) + ".layer_dims entries must be positive");
    if (net.layer_dims.front() != in)
      complain(std::string(name) + ".layer_dims front must equal " + std::to_string(in));
    if (net.layer_dims.back() != out)
      complain(std::string(name) + ".layer_dims back must equal " + std::to_string(out));
    if (net.train.epochs < 1) complain(std::string(name) + ".epochs must be >= 1");
    if (net.train.batch_size < 1) complain(std::string(name) + ".batch_size must be >= 1");
    if (net.train.learning_rate <= 0.0)
      complain(std::string(name) + ".learning_rate must be positive");
  };
  check_net(cfg.dnn_a, "dnn_a", bins, bins);
  check_net(cfg.dnn_b, "dnn_b", 2 * bins, 2 * bins);

  if (cfg.lambdas.empty()) complain("lambdas must not be empty");
  for (double l : cfg.lambdas)
    if (l < 0.0 || l >= 1.0)
      complain("lambda " + std::to_string(l) + " outside the [0,1) bound");

  if (cfg.nmf.basis_count < 1) complain("nmf.basis_count must be >= 1");
  if (cfg.nmf.train_iters < 1) complain("nmf.train_iters must be >= 1");
  if (cfg.nmf.decode_iters < 1) complain("nmf.decode_iters must be >= 1");
  return problems;
}

void validate_or_throw(const PipelineConfig& cfg) {
  auto problems = validate(cfg);
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

std::string model_name_for_lambda(double lambda) {
  std::ostringstream name;
  name << 'D' << lambda * 10.0;
  return name.str();
}

TrainingMatrices build_sep_training(const Corpus& corpus, const PipelineConfig& cfg) {
  const auto songs = corpus.subset(Split::TrainA);
  if (songs.empty()) throw InvalidInput("build_sep_training: train_a split is empty");

  std::vector<Eigen::MatrixXd> input_parts, target_parts;
  for (const Song* song : songs) {
    const auto spectra = song_spectra(*song, cfg);
    const auto refs =
        masks::StackedSpectra{{spectra.vocal.values, spectra.accompaniment.values}};
    input_parts.push_back(spectra.mixture.values);
    target_parts.push_back(masks::ratio_mask(refs).front().values);
  }
  return {vstack(input_parts), vstack(target_parts)};
}

TrainedNet train_dnn_a(const Corpus& corpus, const PipelineConfig& cfg) {
  validate_or_throw(cfg);
  const auto data = build_sep_training(corpus, cfg);
  neural::Mlp net = neural::init_mlp(cfg.dnn_a.layer_dims, derive_seed(cfg.seed, "dnn-a/init"));
  neural::TrainConfig train_cfg = cfg.dnn_a.train;
  train_cfg.seed = derive_seed(cfg.seed, "dnn-a/train");
  auto result = neural::train(std::move(net), data.inputs, data.targets,
                              neural::CostSpec{neural::CostKind::MaskMse}, train_cfg);
  return {std::move(result.net), std::move(result.epoch_costs)};
}

EnhTraining gen_enh_training(const Corpus& corpus, const neural::Mlp& dnn_a,
                             const PipelineConfig& cfg) {
  const auto songs = corpus.subset(Split::TrainB);
  if (songs.empty()) throw InvalidInput("gen_enh_training: train_b split is empty");
  const int bins = cfg.stft.bin_count();
  check_net_geometry(dnn_a, bins, bins, "gen_enh_training");

  std::vector<Eigen::MatrixXd> input_parts, target_parts;
  for (const Song* song : songs) {
    const auto spectra = song_spectra(*song, cfg);

    const masks::Mask vocal_mask{neural::forward(dnn_a, spectra.mixture.values)};
    const masks::Mask accomp_mask = masks::complement_mask(vocal_mask);
    auto sep_vocal = masks::apply_mask(vocal_mask, spectra.mixture);
    auto sep_accomp = masks::apply_mask(accomp_mask, spectra.mixture);

    Eigen::MatrixXd u(sep_vocal.values.rows(), 2 * bins);
    if (cfg.normalize_dnn_b_inputs) {
      u << dsp::normalize_frames(sep_vocal).first.values,
          dsp::normalize_frames(sep_accomp).first.values;
    } else {
      u << sep_vocal.values, sep_accomp.values;
    }

    Eigen::MatrixXd v(u.rows(), 2 * bins);
    v << dsp::normalize_frames(spectra.vocal).first.values,
        dsp::normalize_frames(spectra.accompaniment).first.values;

    input_parts.push_back(std::move(u));
    target_parts.push_back(std::move(v));
  }
  return {vstack(input_parts), vstack(target_parts)};
}

TrainedNet train_dnn_b(const EnhTraining& data, double lambda, const PipelineConfig& cfg) {
  if (lambda < 0.0 || lambda >= 1.0)
    throw InvalidConfig("train_dnn_b: lambda must lie in [0,1)");
  const int bins = cfg.stft.bin_count();

  neural::CostSpec spec;
  spec.kind = neural::CostKind::Discriminative;
  spec.lambda = lambda;
  spec.source_dims = {bins, bins};

  const std::string tag = model_name_for_lambda(lambda);
  neural::Mlp net =
      neural::init_mlp(cfg.dnn_b.layer_dims, derive_seed(cfg.seed, "dnn-b/init/" + tag));
  neural::TrainConfig train_cfg = cfg.dnn_b.train;
  train_cfg.seed = derive_seed(cfg.seed, "dnn-b/train/" + tag);
  auto result = neural::train(std::move(net), data.inputs, data.targets, spec, train_cfg);
  return {std::move(result.net), std::move(result.epoch_costs)};
}

std::pair<nmf::NmfBasis, nmf::NmfBasis> train_nmf_bases(const Corpus& corpus,
                                                        const PipelineConfig& cfg) {
  const auto songs = corpus.subset(Split::TrainB);
  if (songs.empty()) throw InvalidInput("train_nmf_bases: train_b split is empty");

  std::vector<Eigen::MatrixXd> vocal_parts, accomp_parts;
  dsp::StftGeometry geometry = cfg.stft;
  for (const Song* song : songs) {
    vocal_parts.push_back(magnitude_of(song->vocal, cfg).values);
    accomp_parts.push_back(magnitude_of(song->accompaniment, cfg).values);
  }
  dsp::MagSpectrogram vocal{vstack(vocal_parts), geometry};
  dsp::MagSpectrogram accomp{vstack(accomp_parts), geometry};

  auto vocal_model = nmf::train_nmf(vocal, cfg.nmf.basis_count, cfg.nmf.train_iters,
                                    derive_seed(cfg.seed, "nmf/vocal"));
  auto accomp_model = nmf::train_nmf(accomp, cfg.nmf.basis_count, cfg.nmf.train_iters,
                                     derive_seed(cfg.seed, "nmf/accompaniment"));
  return {std::move(vocal_model.basis), std::move(accomp_model.basis)};
}

namespace {

struct MixtureAnalysis {
  dsp::MagSpectrogram mag;
  dsp::PhaseMatrix phase;
  masks::Mask vocal_mask;
  dsp::MagSpectrogram sep_vocal;   // initial estimates, Eq.-(8) style
  dsp::MagSpectrogram sep_accomp;
};

MixtureAnalysis analyze_mixture(const dsp::Waveform& mixture, const neural::Mlp& dnn_a,
                                const PipelineConfig& cfg) {
  if (mixture.samples.empty()) throw InvalidInput("separate: empty mixture");
  const int bins = cfg.stft.bin_count();
  check_net_geometry(dnn_a, bins, bins, "separate");

  MixtureAnalysis a;
  auto [mag, phase] = dsp::magnitude_phase(dsp::stft(mixture, cfg.stft));
  a.mag = std::move(mag);
  a.phase = std::move(phase);
  a.vocal_mask.values = neural::forward(dnn_a, a.mag.values);
  a.sep_vocal = masks::apply_mask(a.vocal_mask, a.mag);
  a.sep_accomp = masks::apply_mask(masks::complement_mask(a.vocal_mask), a.mag);
  return a;
}

std::vector<dsp::Waveform> resynthesize(const SeparationSpectra& spectra, std::size_t target_len,
                                        int sample_rate) {
  std::vector<dsp::Waveform> out;
  out.reserve(spectra.sources.size());
  for (const auto& mag : spectra.sources)
    out.push_back(dsp::istft(mag, spectra.mixture_phase, target_len, sample_rate));
  return out;
}

}  // namespace

SeparationSpectra separate_spectra(const dsp::Waveform& mixture, const neural::Mlp& dnn_a,
                                   const neural::Mlp* dnn_b, const PipelineConfig& cfg) {
  auto analysis = analyze_mixture(mixture, dnn_a, cfg);
  const int bins = cfg.stft.bin_count();

  SeparationSpectra result;
  result.mixture_mag = analysis.mag;
  result.mixture_phase = analysis.phase;

  if (dnn_b == nullptr) {
    // Model "S": the separated spectra are the final estimates.
    result.sources = {analysis.sep_vocal, analysis.sep_accomp};
    return result;
  }
  check_net_geometry(*dnn_b, 2 * bins, 2 * bins, "separate (dnn_b)");

  // Per-frame gains are saved before enhancement and restore the scale of
  // the bounded network outputs inside the final mask.
  const std::vector<dsp::GainVector> gains = {dsp::frame_norms(analysis.sep_vocal),
                                              dsp::frame_norms(analysis.sep_accomp)};

  Eigen::MatrixXd stacked_in(analysis.sep_vocal.values.rows(), 2 * bins);
  if (cfg.normalize_dnn_b_inputs) {
    stacked_in << dsp::normalize_frames(analysis.sep_vocal).first.values,
        dsp::normalize_frames(analysis.sep_accomp).first.values;
  } else {
    stacked_in << analysis.sep_vocal.values, analysis.sep_accomp.values;
  }

  const Eigen::MatrixXd enhanced = neural::forward(*dnn_b, stacked_in);
  const auto blocks = masks::StackedSpectra::split(enhanced, {bins, bins});
  const auto final_masks = masks::final_mask(blocks, gains);

  result.sources.clear();
  for (const auto& mask : final_masks)
    result.sources.push_back(masks::apply_mask(mask, analysis.mag));
  return result;
}

std::vector<dsp::Waveform> separate(const dsp::Waveform& mixture, const neural::Mlp& dnn_a,
                                    const neural::Mlp* dnn_b, const PipelineConfig& cfg) {
  const auto spectra = separate_spectra(mixture, dnn_a, dnn_b, cfg);
  return resynthesize(spectra, mixture.samples.size(), mixture.sample_rate);
}

SeparationSpectra separate_nmf_spectra(const dsp::Waveform& mixture, const neural::Mlp& dnn_a,
                                       const nmf::NmfBasis& vocal_basis,
                                       const nmf::NmfBasis& accompaniment_basis,
                                       const PipelineConfig& cfg) {
  auto analysis = analyze_mixture(mixture, dnn_a, cfg);
  const int bins = cfg.stft.bin_count();
  if (vocal_basis.bin_count() != bins || accompaniment_basis.bin_count() != bins)
    throw InvalidConfig("separate_nmf: basis bin count does not match the stft geometry");

  const auto vocal_dec = nmf::decode_nmf(analysis.sep_vocal, vocal_basis, cfg.nmf.decode_iters,
                                         derive_seed(cfg.seed, "nmf/decode/vocal"));
  const auto accomp_dec =
      nmf::decode_nmf(analysis.sep_accomp, accompaniment_basis, cfg.nmf.decode_iters,
                      derive_seed(cfg.seed, "nmf/decode/accompaniment"));

  const auto [vocal_mask, accomp_mask] =
      nmf::nmf_masks(nmf::reconstruct(vocal_basis, vocal_dec.activations),
                     nmf::reconstruct(accompaniment_basis, accomp_dec.activations));

  SeparationSpectra result;
  result.sources = {masks::apply_mask(vocal_mask, analysis.mag),
                    masks::apply_mask(accomp_mask, analysis.mag)};
  result.mixture_mag = std::move(analysis.mag);
  result.mixture_phase = std::move(analysis.phase);
  return result;
}

std::vector<dsp::Waveform> separate_nmf(const dsp::Waveform& mixture, const neural::Mlp& dnn_a,
                                        const nmf::NmfBasis& vocal_basis,
                                        const nmf::NmfBasis& accompaniment_basis,
                                        const PipelineConfig& cfg) {
  const auto spectra =
      separate_nmf_spectra(mixture, dnn_a, vocal_basis, accompaniment_basis, cfg);
  return resynthesize(spectra, mixture.samples.size(), mixture.sample_rate);
}

dsp::Waveform song_mixture(const Song& song) {
  dsp::Waveform mix;
  mix.sample_rate = song.vocal.sample_rate;
  const std::size_t len = std::min(song.vocal.samples.size(), song.accompaniment.samples.size());
  mix.samples.resize(len);
  for (std::size_t i = 0; i < len; ++i)
    mix.samples[i] = song.vocal.samples[i] + song.accompaniment.samples[i];
  return mix;
}

std::vector<dsp::Waveform> separate_oracle(const Song& song, const PipelineConfig& cfg) {
  const auto mixture = song_mixture(song);
  auto [mag, phase] = dsp::magnitude_phase(dsp::stft(mixture, cfg.stft));

  const auto spectra = song_spectra(song, cfg);
  const auto ideal =
      masks::ratio_mask({{spectra.vocal.values, spectra.accompaniment.values}});

  std::vector<dsp::Waveform> out;
  for (const auto& mask : ideal)
    out.push_back(dsp::istft(masks::apply_mask(mask, mag), phase, mixture.samples.size(),
                             mixture.sample_rate));
  return out;
}

const neural::Mlp* ModelSet::enhancer(const std::string& name) const {
  for (const auto& [model, net] : enhancers)
    if (model == name) return &net;
  return nullptr;
}

ExperimentResult run_experiment(const Corpus& corpus, const PipelineConfig& cfg,
                                const ModelSet& models, const std::vector<std::string>& requested,
                                const std::filesystem::path& out_dir, int jobs) {
  validate_or_throw(cfg);
  const auto test_songs = corpus.subset(Split::Test);
  if (test_songs.empty()) throw InvalidInput("run_experiment: test split is empty");

  for (const auto& name : requested) {
    if (name == "S") continue;
    if (name == "N") {
      if (!models.nmf_bases) throw InvalidConfig("run_experiment: model N requested but no bases");
    } else if (models.enhancer(name) == nullptr) {
      throw InvalidConfig("run_experiment: model " + name + " requested but not trained");
    }
  }

  const auto estimates_dir = out_dir / "estimates";
  std::filesystem::create_directories(estimates_dir);

  struct SongRows {
    std::vector<bss::ReportRow> rows;
  };

  auto evaluate_song = [&](const Song* song) {
    SongRows result;
    const auto mixture = song_mixture(*song);
    const std::vector<dsp::Waveform> references = {song->vocal, song->accompaniment};
    for (const auto& model : requested) {
      std::vector<dsp::Waveform> estimates;
      if (model == "S") {
        estimates = separate(mixture, models.dnn_a, nullptr, cfg);
      } else if (model == "N") {
        estimates =
            separate_nmf(mixture, models.dnn_a, models.nmf_bases->first,
                         models.nmf_bases->second, cfg);
      } else {
        estimates = separate(mixture, models.dnn_a, models.enhancer(model), cfg);
      }

      const auto song_dir = estimates_dir / model / song->id;
      std::filesystem::create_directories(song_dir);
      for (std::size_t i = 0; i < estimates.size(); ++i)
        io::write_wav(estimates[i], song_dir / ("source_" + std::to_string(i + 1) + ".wav"), 16);

      const auto report = bss::song_report(estimates, references);
      const char* source_names[] = {"vocal", "accompaniment"};
      for (std::size_t i = 0; i < report.per_source.size(); ++i)
        result.rows.push_back({song->id, model, source_names[i], report.per_source[i]});
    }
    return result;
  };

  std::vector<SongRows> per_song_rows(test_songs.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < test_songs.size(); ++i)
      per_song_rows[i] = evaluate_song(test_songs[i]);
  } else {
    // Songs are independent; results are merged in song order below.
    std::vector<std::future<SongRows>> futures;
    std::size_t next = 0;
    while (next < test_songs.size() || !futures.empty()) {
      while (next < test_songs.size() && futures.size() < static_cast<std::size_t>(jobs)) {
        futures.push_back(
            std::async(std::launch::async, evaluate_song, test_songs[next]));
        ++next;
      }
      const std::size_t done = next - futures.size();
      per_song_rows[done] = futures.front().get();
      futures.erase(futures.begin());
    }
  }

  ExperimentResult result;
  for (const auto& song_rows : per_song_rows)
    result.rows.insert(result.rows.end(), song_rows.rows.begin(), song_rows.rows.end());
  result.per_song = bss::per_song_averages(result.rows);
  result.summary = bss::summarize(result.per_song);

  const auto reports_dir = out_dir / "reports";
  std::filesystem::create_directories(reports_dir);
  bss::write_metrics_csv(reports_dir / "report.csv", result.rows);
  bss::write_per_song_csv(reports_dir / "report.persong.csv", result.per_song);
  bss::write_summary_csv(reports_dir / "report.summary.csv", result.summary);
  return result;
}

}  // namespace maskforge::pipeline
