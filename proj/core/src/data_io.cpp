#include "maskforge/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "maskforge/errors.hpp"

namespace maskforge::io {

namespace {

using nlohmann::json;

// ---- WAV ----------------------------------------------------------------

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

dsp::Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("read_wav: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();

  if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0)
    throw FormatError("read_wav: " + path.string() + " is not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const std::uint32_t chunk_size = read_u32(data + pos + 4);
    const unsigned char* payload = data + pos + 8;
    if (pos + 8 + chunk_size > size)
      throw FormatError("read_wav: truncated chunk in " + path.string());

    if (std::memcmp(data + pos, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw FormatError("read_wav: fmt chunk too small");
      format = read_u16(payload);
      channels = read_u16(payload + 2);
      rate = read_u32(payload + 4);
      bits = read_u16(payload + 14);
      have_fmt = true;
    } else if (std::memcmp(data + pos, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("read_wav: data chunk before fmt in " + path.string());
      if (channels == 0) throw FormatError("read_wav: zero channels");
      const bool pcm16 = format == 1 && bits == 16;
      const bool float32 = format == 3 && bits == 32;
      if (!pcm16 && !float32)
        throw FormatError("read_wav: unsupported encoding (format " + std::to_string(format) +
                          ", " + std::to_string(bits) + " bits); only PCM16 and float32");

      const std::size_t bytes_per_sample = bits / 8;
      const std::size_t frame_bytes = bytes_per_sample * channels;
      if (chunk_size % frame_bytes != 0)
        throw FormatError("read_wav: data chunk size is not a whole number of frames");
      const std::size_t frames = chunk_size / frame_bytes;

      dsp::Waveform wave;
      wave.sample_rate = static_cast<int>(rate);
      wave.samples.resize(frames);
      for (std::size_t n = 0; n < frames; ++n) {
        double sum = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) {
          const unsigned char* s = payload + n * frame_bytes + c * bytes_per_sample;
          if (pcm16) {
            const auto raw = static_cast<std::int16_t>(read_u16(s));
            sum += raw / 32768.0;
          } else {
            float f;
            std::memcpy(&f, s, 4);
            sum += f;
          }
        }
        wave.samples[n] = sum / channels;
      }
      return wave;
    }
    pos += 8 + chunk_size + (chunk_size % 2);  // chunks are word aligned
  }
  throw FormatError("read_wav: no data chunk in " + path.string());
}

void write_wav(const dsp::Waveform& wave, const std::filesystem::path& path, int bit_depth) {
  if (bit_depth != 16 && bit_depth != 32)
    throw InvalidConfig("write_wav: bit_depth must be 16 or 32");
  for (double s : wave.samples)
    if (!std::isfinite(s)) throw InvalidInput("write_wav: non-finite sample");
  if (wave.sample_rate <= 0) throw InvalidInput("write_wav: sample_rate must be positive");

  const std::uint16_t channels = 1;
  const std::uint16_t bytes_per_sample = static_cast<std::uint16_t>(bit_depth / 8);
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(wave.samples.size() * bytes_per_sample);

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, bit_depth == 16 ? 1 : 3);  // PCM or IEEE float
  put_u16(out, channels);
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * channels * bytes_per_sample);
  put_u16(out, static_cast<std::uint16_t>(channels * bytes_per_sample));
  put_u16(out, static_cast<std::uint16_t>(bit_depth));
  out += "data";
  put_u32(out, data_size);

  if (bit_depth == 16) {
    constexpr double kMax = 1.0 - 0x1.0p-15;
    for (double s : wave.samples) {
      const double clamped = std::clamp(s, -1.0, kMax);
      const auto code = static_cast<std::int16_t>(std::lround(clamped * 32768.0));
      put_u16(out, static_cast<std::uint16_t>(code));
    }
  } else {
    for (double s : wave.samples) {
      const float f = static_cast<float>(s);
      char raw[4];
      std::memcpy(raw, &f, 4);
      out.append(raw, 4);
    }
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("write_wav: cannot open " + path.string() + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("write_wav: write failed for " + path.string());
}

// ---- manifest -------------------------------------------------------------

CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw IoError("load_manifest: cannot open " + path.string());

  json doc;
  try {
    doc = json::parse(file);
  } catch (const json::parse_error& e) {
    throw FormatError("load_manifest: " + path.string() + ": " + e.what());
  }

  CorpusManifest manifest;
  manifest.root = path.parent_path();

  std::vector<std::string> problems;
  if (!doc.contains("songs") || !doc["songs"].is_array()) {
    throw FormatError("load_manifest: missing 'songs' array in " + path.string());
  }

  std::set<std::string> seen;
  for (const auto& entry : doc["songs"]) {
    ManifestEntry m;
    try {
      m.id = entry.at("id").get<std::string>();
      m.vocal_path = entry.at("vocal").get<std::string>();
      m.accompaniment_path = entry.at("accompaniment").get<std::string>();
      const auto split_name = entry.at("split").get<std::string>();
      const auto split = pipeline::split_from_string(split_name);
      if (!split) {
        problems.push_back("song '" + m.id + "': unknown split '" + split_name + "'");
      } else {
        m.split = *split;
      }
    } catch (const json::exception& e) {
      throw FormatError("load_manifest: malformed song entry: " + std::string(e.what()));
    }

    if (!seen.insert(m.id).second) problems.push_back("duplicate song_id '" + m.id + "'");
    for (const auto& p : {m.vocal_path, m.accompaniment_path}) {
      if (!std::filesystem::exists(manifest.root / p))
        problems.push_back("song '" + m.id + "': missing file " + (manifest.root / p).string());
    }
    manifest.entries.push_back(std::move(m));
  }

  if (manifest.entries.empty()) problems.push_back("manifest lists no songs");
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return manifest;
}

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  json doc;
  doc["songs"] = json::array();
  for (const auto& m : manifest.entries) {
    doc["songs"].push_back({{"id", m.id},
                            {"vocal", m.vocal_path.generic_string()},
                            {"accompaniment", m.accompaniment_path.generic_string()},
                            {"split", pipeline::to_string(m.split)}});
  }
  std::ofstream file(path);
  if (!file) throw IoError("save_manifest: cannot open " + path.string());
  file << doc.dump(2) << "\n";
}

pipeline::Corpus load_corpus(const CorpusManifest& manifest) {
  pipeline::Corpus corpus;
  std::vector<std::string> problems;
  for (const auto& entry : manifest.entries) {
    pipeline::Song song;
    song.id = entry.id;
    song.split = entry.split;
    song.vocal = read_wav(manifest.root / entry.vocal_path);
    song.accompaniment = read_wav(manifest.root / entry.accompaniment_path);
    if (song.vocal.sample_rate != song.accompaniment.sample_rate) {
      problems.push_back("song '" + entry.id + "': sources disagree on sample rate");
      continue;
    }
    // Sources are truncated to the shortest common length up front.
    const std::size_t len = std::min(song.vocal.samples.size(), song.accompaniment.samples.size());
    song.vocal.samples.resize(len);
    song.accompaniment.samples.resize(len);
    corpus.songs.push_back(std::move(song));
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return corpus;
}

// ---- config ---------------------------------------------------------------

namespace {

json net_to_json(const pipeline::NetSettings& net) {
  return {{"layer_dims", net.layer_dims},
          {"epochs", net.train.epochs},
          {"batch_size", net.train.batch_size},
          {"learning_rate", net.train.learning_rate},
          {"shuffle", net.train.shuffle}};
}

void net_from_json(const json& j, pipeline::NetSettings& net) {
  net.layer_dims = j.value("layer_dims", net.layer_dims);
  net.train.epochs = j.value("epochs", net.train.epochs);
  net.train.batch_size = j.value("batch_size", net.train.batch_size);
  net.train.learning_rate = j.value("learning_rate", net.train.learning_rate);
  net.train.shuffle = j.value("shuffle", net.train.shuffle);
}

}  // namespace

pipeline::PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw IoError("load_config: cannot open " + path.string());

  json doc;
  try {
    doc = json::parse(file);
  } catch (const json::parse_error& e) {
    throw FormatError("load_config: " + path.string() + ": " + e.what());
  }

  pipeline::PipelineConfig cfg = pipeline::default_config();
  try {
    cfg.sample_rate = doc.value("sample_rate", cfg.sample_rate);
    if (doc.contains("stft")) {
      const auto& s = doc["stft"];
      cfg.stft.window_len = s.value("window_len", cfg.stft.window_len);
      cfg.stft.hop = s.value("hop", cfg.stft.hop);
      cfg.stft.fft_len = s.value("fft_len", cfg.stft.fft_len);
    }
    if (doc.contains("dnn_a")) net_from_json(doc["dnn_a"], cfg.dnn_a);
    if (doc.contains("dnn_b")) net_from_json(doc["dnn_b"], cfg.dnn_b);
    if (doc.contains("lambdas")) cfg.lambdas = doc["lambdas"].get<std::vector<double>>();
    if (doc.contains("nmf")) {
      const auto& n = doc["nmf"];
      cfg.nmf.basis_count = n.value("basis_count", cfg.nmf.basis_count);
      cfg.nmf.train_iters = n.value("train_iters", cfg.nmf.train_iters);
      cfg.nmf.decode_iters = n.value("decode_iters", cfg.nmf.decode_iters);
    }
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.normalize_dnn_b_inputs = doc.value("normalize_dnn_b_inputs", cfg.normalize_dnn_b_inputs);
  } catch (const json::exception& e) {
    throw FormatError("load_config: " + path.string() + ": " + e.what());
  }

  pipeline::validate_or_throw(cfg);
  return cfg;
}

void save_config(const pipeline::PipelineConfig& cfg, const std::filesystem::path& path) {
  json doc = {{"sample_rate", cfg.sample_rate},
              {"stft",
               {{"window_len", cfg.stft.window_len},
                {"hop", cfg.stft.hop},
                {"fft_len", cfg.stft.fft_len}}},
              {"dnn_a", net_to_json(cfg.dnn_a)},
              {"dnn_b", net_to_json(cfg.dnn_b)},
              {"lambdas", cfg.lambdas},
              {"nmf",
               {{"basis_count", cfg.nmf.basis_count},
                {"train_iters", cfg.nmf.train_iters},
                {"decode_iters", cfg.nmf.decode_iters}}},
              {"seed", cfg.seed},
              {"normalize_dnn_b_inputs", cfg.normalize_dnn_b_inputs}};
  std::ofstream file(path);
  if (!file) throw IoError("save_config: cannot open " + path.string());
  file << doc.dump(2) << "\n";
}

}  // namespace maskforge::io
