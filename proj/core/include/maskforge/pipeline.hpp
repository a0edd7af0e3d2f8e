#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maskforge/bss_eval.hpp"
#include "maskforge/dsp.hpp"
#include "maskforge/masks.hpp"
#include "maskforge/neural.hpp"
#include "maskforge/nmf.hpp"

namespace maskforge::pipeline {

enum class Split { TrainA, TrainB, Test };

std::string to_string(Split split);
std::optional<Split> split_from_string(const std::string& name);

struct Song {
  std::string id;
  Split split = Split::TrainA;
  dsp::Waveform vocal;
  dsp::Waveform accompaniment;
};

struct Corpus {
  std::vector<Song> songs;

  std::vector<const Song*> subset(Split split) const;
};

struct NetSettings {
  std::vector<int> layer_dims;
  neural::TrainConfig train;
};

struct NmfSettings {
  int basis_count = 80;
  int train_iters = 200;
  int decode_iters = 100;
};

/**
 * Everything the end-to-end run needs. Stage seeds (network init, shuffling,
 * NMF init, corpus synthesis) are all derived from the single master seed.
 * The separator (dnn_a) maps F mixture bins to a single F-wide vocal mask;
 * the enhancer (dnn_b) maps the 2F concatenation of separated spectra to the
 * 2F concatenation of cleaned spectra.
 */
struct PipelineConfig {
  int sample_rate = 16000;
  dsp::StftGeometry stft{1024, 256, 1024};
  NetSettings dnn_a;
  NetSettings dnn_b;
  std::vector<double> lambdas{0.0, 0.2, 0.4};
  NmfSettings nmf;
  std::uint64_t seed = 42;
  // When true, dnn_b consumes per-frame unit-normalized inputs at train and
  // test time. Off by default: the raw separated spectra are fed through,
  // and the per-frame gains enter only via the final mask.
  bool normalize_dnn_b_inputs = false;

  static constexpr int source_count = 2;
};

/// Desk-scale defaults: 16 kHz, 1024/256 STFT, [513,256,256,256,513] separator.
PipelineConfig default_config();

/// The full-scale preset: 44.1 kHz, 2048/512 STFT, 1025-wide separator with
/// three 1025 hidden layers, 2050/4100 enhancer, 200 epochs.
PipelineConfig paper_config();

/// Collects every invariant violation (empty when the config is valid).
std::vector<std::string> validate(const PipelineConfig& cfg);
void validate_or_throw(const PipelineConfig& cfg);

/// "D0" / "D2" / "D4" naming for enhancer models by lambda.
std::string model_name_for_lambda(double lambda);

// ---- training-set construction and training ----------------------------

struct TrainingMatrices {
  Eigen::MatrixXd inputs;   // frames x F mixture magnitudes
  Eigen::MatrixXd targets;  // frames x F vocal ratio masks
};

/// Separator training data from the train_a split. Mixtures are formed in
/// the magnitude domain (X = sum of source magnitudes); targets are the
/// vocal ratio masks.
TrainingMatrices build_sep_training(const Corpus& corpus, const PipelineConfig& cfg);

struct TrainedNet {
  neural::Mlp net;
  std::vector<double> cost_trace;
};

TrainedNet train_dnn_a(const Corpus& corpus, const PipelineConfig& cfg);

struct EnhTraining {
  Eigen::MatrixXd inputs;   // frames x 2F raw separated spectra (U)
  Eigen::MatrixXd targets;  // frames x 2F per-source unit-normalized references (V)
};

/// Runs the trained separator over the train_b split and pairs its separated
/// spectra with the normalized references.
EnhTraining gen_enh_training(const Corpus& corpus, const neural::Mlp& dnn_a,
                             const PipelineConfig& cfg);

TrainedNet train_dnn_b(const EnhTraining& data, double lambda, const PipelineConfig& cfg);

/// Basis training for the NMF enhancement baseline, one basis per source,
/// fit on the train_b reference spectrograms.
std::pair<nmf::NmfBasis, nmf::NmfBasis> train_nmf_bases(const Corpus& corpus,
                                                        const PipelineConfig& cfg);

// ---- inference ----------------------------------------------------------

/// Final per-source magnitude estimates plus the mixture analysis they came
/// from; kept separate from the time-domain path so conservation can be
/// checked spectrally.
struct SeparationSpectra {
  std::vector<dsp::MagSpectrogram> sources;
  dsp::MagSpectrogram mixture_mag;
  dsp::PhaseMatrix mixture_phase;
};

/// dnn_b == nullptr runs the separation-only model "S" (the separated
/// spectra are used directly, no enhancement).
SeparationSpectra separate_spectra(const dsp::Waveform& mixture, const neural::Mlp& dnn_a,
                                   const neural::Mlp* dnn_b, const PipelineConfig& cfg);

std::vector<dsp::Waveform> separate(const dsp::Waveform& mixture, const neural::Mlp& dnn_a,
                                    const neural::Mlp* dnn_b, const PipelineConfig& cfg);

SeparationSpectra separate_nmf_spectra(const dsp::Waveform& mixture, const neural::Mlp& dnn_a,
                                       const nmf::NmfBasis& vocal_basis,
                                       const nmf::NmfBasis& accompaniment_basis,
                                       const PipelineConfig& cfg);

std::vector<dsp::Waveform> separate_nmf(const dsp::Waveform& mixture, const neural::Mlp& dnn_a,
                                        const nmf::NmfBasis& vocal_basis,
                                        const nmf::NmfBasis& accompaniment_basis,
                                        const PipelineConfig& cfg);

/// Ideal-ratio-mask separation from the true references; the performance
/// ceiling any trained model is measured against.
std::vector<dsp::Waveform> separate_oracle(const Song& song, const PipelineConfig& cfg);

/// Time-domain mixture of a song's sources.
dsp::Waveform song_mixture(const Song& song);

// ---- experiment runner --------------------------------------------------

inline constexpr const char* kAllModels[] = {"S", "N", "D0", "D2", "D4"};

struct ModelSet {
  neural::Mlp dnn_a;
  std::vector<std::pair<std::string, neural::Mlp>> enhancers;  // model name -> dnn_b
  std::optional<std::pair<nmf::NmfBasis, nmf::NmfBasis>> nmf_bases;

  const neural::Mlp* enhancer(const std::string& name) const;
};

struct ExperimentResult {
  std::vector<bss::ReportRow> rows;
  std::vector<bss::PerSongAverage> per_song;
  std::vector<bss::ModelSummary> summary;
};

/**
 * Separates every test song under every requested model, evaluates, writes
 * estimates (WAV) and the three CSV reports under out_dir. Per-song work may
 * run on `jobs` workers; results are merged in manifest song order.
 */
ExperimentResult run_experiment(const Corpus& corpus, const PipelineConfig& cfg,
                                const ModelSet& models, const std::vector<std::string>& requested,
                                const std::filesystem::path& out_dir, int jobs = 1);

}  // namespace maskforge::pipeline
