#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "maskforge/dsp.hpp"
#include "maskforge/masks.hpp"

namespace maskforge::nmf {

/// Nonnegative basis matrix, frequency bins x basis vectors. Columns are
/// L1-normalized after every training update.
struct NmfBasis {
  Eigen::MatrixXd w;  // F x K

  Eigen::Index bin_count() const { return w.rows(); }
  Eigen::Index basis_count() const { return w.cols(); }
};

/// Per-frame gains of the basis vectors.
struct NmfActivations {
  Eigen::MatrixXd h;  // K x N
};

struct NmfModel {
  NmfBasis basis;
  NmfActivations activations;
  std::vector<double> kl_trace;  // D(S || WH) after each iteration
};

struct DecodeResult {
  NmfActivations activations;
  std::vector<double> kl_trace;
};

/// Generalized KL divergence sum(S log(S/WH) - S + WH) with 0 log(0/x) := 0
/// and WH floored at 1e-12.
double generalized_kl(const Eigen::MatrixXd& s, const Eigen::MatrixXd& wh);

/**
 * Multiplicative-update NMF under generalized KL. The spectrogram arrives in
 * the pipeline's frames-by-bins convention and is transposed to F x N inside.
 * Initialization is seeded uniform on (0,1]; the KL trace is non-increasing.
 */
NmfModel train_nmf(const dsp::MagSpectrogram& s, int basis_count, int iters, std::uint64_t seed);

/// Fixed-basis decode: only H is updated; W is never touched.
DecodeResult decode_nmf(const dsp::MagSpectrogram& s_sep, const NmfBasis& basis, int iters,
                        std::uint64_t seed);

/// W*H, bins x frames.
Eigen::MatrixXd reconstruct(const NmfBasis& basis, const NmfActivations& activations);

/// M1 = recon_1/(recon_1+recon_2) with 0/0 -> 0.5, M2 = 1 - M1. Inputs are
/// F x N reconstructions; masks come back in the frames-by-bins convention.
std::pair<masks::Mask, masks::Mask> nmf_masks(const Eigen::MatrixXd& recon_1,
                                              const Eigen::MatrixXd& recon_2);

void save_basis(const NmfBasis& basis, const std::filesystem::path& path);
NmfBasis load_basis(const std::filesystem::path& path);

}  // namespace maskforge::nmf
