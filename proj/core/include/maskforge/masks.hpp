#pragma once

#include <Eigen/Dense>
#include <vector>

#include "maskforge/dsp.hpp"

namespace maskforge::masks {

/// Time-frequency mask; entries in [0, 1], rows are frames.
struct Mask {
  Eigen::MatrixXd values;
};

/// Ordered list of equally shaped per-source matrices. Conceptually the
/// horizontal concatenation [B_1, ..., B_I]; kept as separate blocks so
/// per-source operations stay shape safe. Concatenation happens only at the
/// network boundary.
struct StackedSpectra {
  std::vector<Eigen::MatrixXd> blocks;

  Eigen::MatrixXd concatenated() const;
  static StackedSpectra split(const Eigen::MatrixXd& wide, const std::vector<int>& widths);
};

/**
 * Reference ratio masks: mask_i = S_i / sum_j S_j elementwise. Bins where the
 * denominator is exactly zero get 1/I for every source, which preserves the
 * sum-to-one invariant.
 */
std::vector<Mask> ratio_mask(const StackedSpectra& sources);

/// 1 - m elementwise; the two-source accompaniment convention.
Mask complement_mask(const Mask& m);

dsp::MagSpectrogram apply_mask(const Mask& m, const dsp::MagSpectrogram& mixture);

/**
 * Gain-weighted final masks: mask_i = (alpha_i ⊗ Q_i) / sum_j (alpha_j ⊗ Q_j),
 * where alpha_i ⊗ Q_i scales frame n of Q_i by alpha_i[n]. Zero-denominator
 * bins get 1/I.
 */
std::vector<Mask> final_mask(const StackedSpectra& outputs,
                             const std::vector<dsp::GainVector>& gains);

}  // namespace maskforge::masks
