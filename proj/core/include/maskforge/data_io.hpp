#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "maskforge/dsp.hpp"
#include "maskforge/pipeline.hpp"

namespace maskforge::io {

/// Decodes 16-bit PCM or 32-bit IEEE-float RIFF/WAVE. Multi-channel files are
/// downmixed by channel averaging; 16-bit samples map to [-1,1) via /32768.
dsp::Waveform read_wav(const std::filesystem::path& path);

/// bit_depth 16 writes PCM (clamped to [-1, 1-2^-15], round half away from
/// zero); bit_depth 32 writes IEEE float.
void write_wav(const dsp::Waveform& wave, const std::filesystem::path& path, int bit_depth = 16);

struct ManifestEntry {
  std::string id;
  std::filesystem::path vocal_path;          // relative to the manifest directory
  std::filesystem::path accompaniment_path;
  pipeline::Split split = pipeline::Split::TrainA;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;  // directory the relative paths resolve against
};

/// Parses and validates; reports every violation at once (duplicate ids,
/// unknown splits, missing files).
CorpusManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);

/// Decodes every referenced WAV; each song's sources are truncated to their
/// common length before any spectral processing.
pipeline::Corpus load_corpus(const CorpusManifest& manifest);

struct SynthSpec {
  int train_a_songs = 8;
  int train_b_songs = 8;
  int test_songs = 6;
  double duration_s = 6.0;
  int sample_rate = 16000;
  std::uint64_t seed = 42;
};

/**
 * Deterministic desk-scale corpus: per song a harmonic "vocal" (3-5 partials
 * of a randomized 150-400 Hz fundamental with slow vibrato and a phrasing
 * envelope) and a higher-energy "accompaniment" (low triad plus band-limited
 * noise bursts on a periodic onset grid). Writes the WAVs, manifest.json,
 * config.json (desk defaults) and config.paper.json into out_dir.
 */
CorpusManifest generate_synthetic_corpus(const SynthSpec& spec,
                                         const std::filesystem::path& out_dir);

/// In-memory generator for a single song; exposed for tests.
pipeline::Song synthesize_song(const SynthSpec& spec, pipeline::Split split, int song_index,
                               std::uint64_t song_seed);

pipeline::PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const pipeline::PipelineConfig& cfg, const std::filesystem::path& path);

}  // namespace maskforge::io
