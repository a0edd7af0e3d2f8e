#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

namespace maskforge::dsp {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 0;
};

/// Grid parameters shared by every spectral type. Rows of the matrices below
/// are time frames, columns are frequency bins.
struct StftGeometry {
  int window_len = 0;
  int hop = 0;
  int fft_len = 0;

  int bin_count() const { return fft_len / 2 + 1; }
  bool operator==(const StftGeometry&) const = default;
};

struct ComplexSpectrogram {
  Eigen::MatrixXcd frames;  // N x F, one-sided
  StftGeometry geometry;

  Eigen::Index frame_count() const { return frames.rows(); }
  Eigen::Index bin_count() const { return frames.cols(); }
};

struct MagSpectrogram {
  Eigen::MatrixXd values;  // N x F, nonnegative
  StftGeometry geometry;

  Eigen::Index frame_count() const { return values.rows(); }
  Eigen::Index bin_count() const { return values.cols(); }
};

struct PhaseMatrix {
  Eigen::MatrixXd values;  // N x F, radians in (-pi, pi]
};

/// Per-frame Euclidean norms; one entry per row of a spectrogram.
using GainVector = Eigen::VectorXd;

/// Periodic Hann window of the given length.
std::vector<double> hann_window(int len);

/**
 * One-sided STFT. Frame n covers samples [n*hop, n*hop + window_len); the
 * trailing partial frame is zero-padded so no sample is dropped. No centering
 * pre-padding is applied.
 */
ComplexSpectrogram stft(const Waveform& wave, int window_len, int hop, int fft_len);

ComplexSpectrogram stft(const Waveform& wave, const StftGeometry& geometry);

/**
 * Overlap-add inverse of stft(). Combines mag*exp(i*phase), mirrors to a full
 * spectrum, inverse-FFTs each frame and normalizes by the overlap-added
 * squared window (floored at 1e-8). Output is truncated or zero-padded to
 * target_len samples.
 */
Waveform istft(const MagSpectrogram& mag, const PhaseMatrix& phase, std::size_t target_len,
               int sample_rate);

std::pair<MagSpectrogram, PhaseMatrix> magnitude_phase(const ComplexSpectrogram& spec);

GainVector frame_norms(const MagSpectrogram& mag);

/// Scales each nonzero row to unit L2 norm and returns the norms; zero rows
/// stay zero with a recorded gain of 0, so gains ⊗ rows reproduces the input.
std::pair<MagSpectrogram, GainVector> normalize_frames(const MagSpectrogram& mag);

}  // namespace maskforge::dsp
