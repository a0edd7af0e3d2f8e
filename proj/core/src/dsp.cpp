#include "maskforge/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "maskforge/errors.hpp"

namespace maskforge::dsp {

namespace {

// FFTW plan creation/destruction is not thread safe; execution on distinct
// arrays is.
std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }

  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(fftw_plan_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }

  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }

  void run() { fftw_execute(plan_); }

  std::complex<double> bin(int k) const { return {out_[k][0], out_[k][1]}; }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

class InverseRealFft {
 public:
  explicit InverseRealFft(int n) : n_(n) {
    in_ = fftw_alloc_complex(n / 2 + 1);
    out_ = fftw_alloc_real(n);
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    // FFTW_PRESERVE_INPUT keeps the spectrum intact across frames.
    plan_ = fftw_plan_dft_c2r_1d(n, in_, out_, FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
  }

  ~InverseRealFft() {
    {
      std::lock_guard<std::mutex> lock(fftw_plan_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }

  InverseRealFft(const InverseRealFft&) = delete;
  InverseRealFft& operator=(const InverseRealFft&) = delete;

  void set_bin(int k, std::complex<double> v) {
    in_[k][0] = v.real();
    in_[k][1] = v.imag();
  }

  void run() { fftw_execute(plan_); }

  /// Unnormalized FFTW output; caller divides by n.
  double sample(int t) const { return out_[t]; }

 private:
  int n_;
  fftw_complex* in_;
  double* out_;
  fftw_plan plan_;
};

void check_geometry(const StftGeometry& g) {
  if (g.window_len <= 0 || g.hop <= 0 || g.fft_len <= 0)
    throw InvalidConfig("stft geometry must be positive");
  if (g.window_len > g.fft_len)
    throw InvalidConfig("window_len must not exceed fft_len");
  if (g.hop > g.window_len)
    throw InvalidConfig("hop must not exceed window_len");
}

Eigen::Index frame_count_for(std::size_t samples, const StftGeometry& g) {
  if (samples <= static_cast<std::size_t>(g.window_len)) return 1;
  const std::size_t full = (samples - g.window_len) / g.hop + 1;
  const std::size_t covered = (full - 1) * g.hop + g.window_len;
  return static_cast<Eigen::Index>(covered < samples ? full + 1 : full);
}

}  // namespace

std::vector<double> hann_window(int len) {
  std::vector<double> w(len);
  for (int k = 0; k < len; ++k)
    w[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * k / len);
  return w;
}

ComplexSpectrogram stft(const Waveform& wave, int window_len, int hop, int fft_len) {
  return stft(wave, StftGeometry{window_len, hop, fft_len});
}

ComplexSpectrogram stft(const Waveform& wave, const StftGeometry& g) {
  check_geometry(g);
  if (wave.samples.empty()) throw InvalidInput("stft: empty waveform");

  const auto window = hann_window(g.window_len);
  const Eigen::Index frames = frame_count_for(wave.samples.size(), g);
  const Eigen::Index bins = g.bin_count();

  ComplexSpectrogram spec;
  spec.geometry = g;
  spec.frames.resize(frames, bins);

  RealFft fft(g.fft_len);
  const std::size_t len = wave.samples.size();
  for (Eigen::Index n = 0; n < frames; ++n) {
    const std::size_t start = static_cast<std::size_t>(n) * g.hop;
    for (int t = 0; t < g.window_len; ++t) {
      const std::size_t s = start + t;
      fft.input()[t] = s < len ? window[t] * wave.samples[s] : 0.0;
    }
    std::fill(fft.input() + g.window_len, fft.input() + g.fft_len, 0.0);
    fft.run();
    for (Eigen::Index k = 0; k < bins; ++k) spec.frames(n, k) = fft.bin(static_cast<int>(k));
  }
  return spec;
}

Waveform istft(const MagSpectrogram& mag, const PhaseMatrix& phase, std::size_t target_len,
               int sample_rate) {
  if (mag.values.rows() != phase.values.rows() || mag.values.cols() != phase.values.cols())
    throw ShapeError("istft: magnitude and phase shapes differ");
  const StftGeometry& g = mag.geometry;
  check_geometry(g);
  if (mag.values.cols() != g.bin_count())
    throw ShapeError("istft: bin count does not match fft_len/2+1");

  const auto window = hann_window(g.window_len);
  const Eigen::Index frames = mag.frame_count();
  const std::size_t span = static_cast<std::size_t>(frames - 1) * g.hop + g.window_len;

  std::vector<double> acc(span, 0.0);
  std::vector<double> wsq(span, 0.0);

  InverseRealFft ifft(g.fft_len);
  const Eigen::Index bins = g.bin_count();
  for (Eigen::Index n = 0; n < frames; ++n) {
    for (Eigen::Index k = 0; k < bins; ++k) {
      const double m = mag.values(n, k);
      const double p = phase.values(n, k);
      ifft.set_bin(static_cast<int>(k), std::polar(m, p));
    }
    ifft.run();
    const std::size_t start = static_cast<std::size_t>(n) * g.hop;
    for (int t = 0; t < g.window_len; ++t) {
      acc[start + t] += window[t] * ifft.sample(t) / g.fft_len;
      wsq[start + t] += window[t] * window[t];
    }
  }

  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.assign(target_len, 0.0);
  // The divisor floor matters: in the single-coverage edge regions the
  // window energy decays to zero, and once masks have modified the spectra
  // the frame content is no longer window-shaped there. A near-zero floor
  // would amplify that content by 1/w^2 (up to ~1e4x). Flooring at 1e-2
  // caps the edge gain at 10x and leaves the interior untouched (the
  // overlapped window-square sum is 1.5 for hop = window/4).
  constexpr double kNormFloor = 1e-2;
  const std::size_t copy = std::min(target_len, span);
  for (std::size_t s = 0; s < copy; ++s)
    out.samples[s] = acc[s] / std::max(wsq[s], kNormFloor);
  return out;
}

std::pair<MagSpectrogram, PhaseMatrix> magnitude_phase(const ComplexSpectrogram& spec) {
  MagSpectrogram mag;
  mag.geometry = spec.geometry;
  mag.values = spec.frames.cwiseAbs();

  PhaseMatrix phase;
  phase.values.resize(spec.frames.rows(), spec.frames.cols());
  for (Eigen::Index n = 0; n < spec.frames.rows(); ++n) {
    for (Eigen::Index k = 0; k < spec.frames.cols(); ++k) {
      const std::complex<double> c = spec.frames(n, k);
      double p = c == std::complex<double>(0.0, 0.0) ? 0.0 : std::arg(c);
      if (p == -std::numbers::pi) p = std::numbers::pi;  // keep angles in (-pi, pi]
      phase.values(n, k) = p;
    }
  }
  return {std::move(mag), std::move(phase)};
}

GainVector frame_norms(const MagSpectrogram& mag) {
  return mag.values.rowwise().norm();
}

std::pair<MagSpectrogram, GainVector> normalize_frames(const MagSpectrogram& mag) {
  GainVector norms = frame_norms(mag);
  MagSpectrogram unit = mag;
  for (Eigen::Index n = 0; n < unit.values.rows(); ++n) {
    if (norms[n] > 0.0) unit.values.row(n) /= norms[n];
    // zero rows stay zero; gain 0 marks a silent frame
  }
  return {std::move(unit), std::move(norms)};
}

}  // namespace maskforge::dsp
