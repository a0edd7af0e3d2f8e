#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "maskforge/data_io.hpp"
#include "maskforge/errors.hpp"
#include "maskforge/rng.hpp"

namespace maskforge::io {

namespace {

using std::numbers::pi;

double rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

/// Harmonic stack over a vibrato'd fundamental, gated by a slow phrasing
/// envelope that dips to silence between "phrases".
std::vector<double> synth_vocal(std::size_t n, int rate, Rng& rng) {
  const double f0 = rng.uniform(150.0, 400.0);
  const double vib_rate = rng.uniform(4.0, 6.5);
  const double vib_depth = rng.uniform(0.005, 0.02);
  const int harmonics = 3 + static_cast<int>(rng.below(3));  // 3..5
  const double decay = rng.uniform(0.8, 1.4);

  std::vector<double> amp(harmonics), phase(harmonics);
  for (int h = 0; h < harmonics; ++h) {
    amp[h] = rng.uniform(0.5, 1.0) / std::pow(h + 1.0, decay);
    phase[h] = rng.uniform(0.0, 2.0 * pi);
  }
  const double env_rate = rng.uniform(0.12, 0.35);
  const double env_phase = rng.uniform(0.0, 2.0 * pi);

  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / rate;
    // phase of f(t) = f0 (1 + depth sin(2 pi vr t)), integrated analytically
    const double base = 2.0 * pi * f0 * t -
                        (f0 * vib_depth / vib_rate) * std::cos(2.0 * pi * vib_rate * t);
    const double gate = 0.5 + 0.6 * std::sin(2.0 * pi * env_rate * t + env_phase);
    const double env = gate > 0.0 ? std::pow(gate, 1.5) : 0.0;
    double s = 0.0;
    for (int h = 0; h < harmonics; ++h) s += amp[h] * std::sin((h + 1.0) * base + phase[h]);
    out[k] = env * s;
  }
  return out;
}

/// Low triad with slow per-tone amplitude wobble plus band-limited noise
/// bursts on a periodic onset grid.
std::vector<double> synth_accompaniment(std::size_t n, int rate, Rng& rng) {
  const double root = rng.uniform(80.0, 160.0);
  const double freqs[3] = {root, root * rng.uniform(1.19, 1.27), root * rng.uniform(1.48, 1.52)};

  double amps[3], wob_rate[3], wob_phase[3], tone_phase[3];
  for (int i = 0; i < 3; ++i) {
    amps[i] = rng.uniform(0.5, 1.0);
    wob_rate[i] = rng.uniform(0.1, 0.3);
    wob_phase[i] = rng.uniform(0.0, 2.0 * pi);
    tone_phase[i] = rng.uniform(0.0, 2.0 * pi);
  }

  const double onset_period = rng.uniform(0.35, 0.6);
  const double burst_tau = rng.uniform(0.04, 0.1);
  const double noise_level = rng.uniform(0.35, 0.7);
  const double fc_hi = rng.uniform(2000.0, 3500.0);
  const double fc_lo = rng.uniform(250.0, 450.0);
  const double a_hi = 1.0 - std::exp(-2.0 * pi * fc_hi / rate);
  const double a_lo = 1.0 - std::exp(-2.0 * pi * fc_lo / rate);

  // Stationary broadband bed under the tones and bursts. It overlaps the
  // vocal's harmonic range, which keeps single-frame masking imperfect and
  // leaves the enhancement stage something to clean up.
  const double bed_level = rng.uniform(0.3, 0.5);
  const double bed_fc_hi = rng.uniform(3000.0, 4500.0);
  const double bed_fc_lo = rng.uniform(120.0, 200.0);
  const double b_hi = 1.0 - std::exp(-2.0 * pi * bed_fc_hi / rate);
  const double b_lo = 1.0 - std::exp(-2.0 * pi * bed_fc_lo / rate);

  std::vector<double> out(n);
  double lp_hi = 0.0, lp_hi2 = 0.0, lp_lo = 0.0;
  double bed_hi = 0.0, bed_hi2 = 0.0, bed_lo = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / rate;
    double tones = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double wobble = 0.75 + 0.25 * std::sin(2.0 * pi * wob_rate[i] * t + wob_phase[i]);
      tones += amps[i] * wobble * std::sin(2.0 * pi * freqs[i] * t + tone_phase[i]);
    }

    const double white = rng.uniform(-1.0, 1.0);
    lp_hi += a_hi * (white - lp_hi);
    lp_hi2 += a_hi * (lp_hi - lp_hi2);
    lp_lo += a_lo * (lp_hi2 - lp_lo);
    const double banded = lp_hi2 - lp_lo;  // roughly fc_lo..fc_hi

    const double white_bed = rng.uniform(-1.0, 1.0);
    bed_hi += b_hi * (white_bed - bed_hi);
    bed_hi2 += b_hi * (bed_hi - bed_hi2);
    bed_lo += b_lo * (bed_hi2 - bed_lo);
    const double bed = bed_hi2 - bed_lo;

    const double since_onset = std::fmod(t, onset_period);
    const double burst = std::exp(-since_onset / burst_tau);
    out[k] = tones + noise_level * burst * banded * 3.0 + bed_level * bed * 3.0;
  }
  return out;
}

}  // namespace

pipeline::Song synthesize_song(const SynthSpec& spec, pipeline::Split split, int song_index,
                               std::uint64_t song_seed) {
  if (spec.duration_s <= 0.0 || spec.sample_rate <= 0)
    throw InvalidConfig("synthesize_song: duration and sample_rate must be positive");
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate));

  Rng rng(song_seed);
  std::vector<double> vocal = synth_vocal(n, spec.sample_rate, rng);
  std::vector<double> accomp = synth_accompaniment(n, spec.sample_rate, rng);

  // Accompaniment carries more energy than the vocal, always.
  const double ratio = rng.uniform(1.3, 2.2);
  const double vocal_rms = rms(vocal);
  const double accomp_rms = rms(accomp);
  if (vocal_rms > 0.0 && accomp_rms > 0.0) {
    const double scale = ratio * vocal_rms / accomp_rms;
    for (double& s : accomp) s *= scale;
  }

  // Joint rescale: keep the mixture peak modest so spectral magnitudes stay
  // in a range the sigmoid networks train well on.
  const double target_peak = rng.uniform(0.18, 0.28);
  double peak = 0.0;
  for (std::size_t k = 0; k < n; ++k) peak = std::max(peak, std::abs(vocal[k] + accomp[k]));
  if (peak > 0.0) {
    const double scale = target_peak / peak;
    for (double& s : vocal) s *= scale;
    for (double& s : accomp) s *= scale;
  }

  pipeline::Song song;
  song.split = split;
  song.id = [&] {
    const char prefix = split == pipeline::Split::TrainA  ? 'a'
                        : split == pipeline::Split::TrainB ? 'b'
                                                           : 't';
    char buf[8];
    std::snprintf(buf, sizeof buf, "%c%02d", prefix, song_index);
    return std::string(buf);
  }();
  song.vocal = {std::move(vocal), spec.sample_rate};
  song.accompaniment = {std::move(accomp), spec.sample_rate};
  return song;
}

CorpusManifest generate_synthetic_corpus(const SynthSpec& spec,
                                         const std::filesystem::path& out_dir) {
  if (spec.train_a_songs < 1 || spec.train_b_songs < 1 || spec.test_songs < 1)
    throw InvalidConfig("generate_synthetic_corpus: all song counts must be >= 1");
  if (spec.duration_s <= 0.0 || spec.sample_rate <= 0)
    throw InvalidConfig("generate_synthetic_corpus: duration and sample_rate must be positive");

  std::filesystem::create_directories(out_dir);

  CorpusManifest manifest;
  manifest.root = out_dir;

  const struct {
    pipeline::Split split;
    int count;
  } groups[] = {{pipeline::Split::TrainA, spec.train_a_songs},
                {pipeline::Split::TrainB, spec.train_b_songs},
                {pipeline::Split::Test, spec.test_songs}};

  int global_index = 0;
  for (const auto& group : groups) {
    const auto dir = out_dir / pipeline::to_string(group.split);
    std::filesystem::create_directories(dir);
    for (int i = 0; i < group.count; ++i, ++global_index) {
      const auto song =
          synthesize_song(spec, group.split, i, derive_seed(spec.seed, "song", global_index));
      ManifestEntry entry;
      entry.id = song.id;
      entry.split = group.split;
      entry.vocal_path =
          std::filesystem::path(pipeline::to_string(group.split)) / (song.id + "_vocal.wav");
      entry.accompaniment_path = std::filesystem::path(pipeline::to_string(group.split)) /
                                 (song.id + "_accompaniment.wav");
      write_wav(song.vocal, manifest.root / entry.vocal_path, 16);
      write_wav(song.accompaniment, manifest.root / entry.accompaniment_path, 16);
      manifest.entries.push_back(std::move(entry));
    }
  }

  save_manifest(manifest, out_dir / "manifest.json");

  auto cfg = pipeline::default_config();
  cfg.sample_rate = spec.sample_rate;
  cfg.seed = spec.seed;
  save_config(cfg, out_dir / "config.json");
  save_config(pipeline::paper_config(), out_dir / "config.paper.json");
  return manifest;
}

}  // namespace maskforge::io
