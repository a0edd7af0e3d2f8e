#include "maskforge/masks.hpp"

#include "maskforge/errors.hpp"

namespace maskforge::masks {

namespace {

void check_blocks(const StackedSpectra& s, const char* who) {
  if (s.blocks.size() < 2)
    throw ShapeError(std::string(who) + ": need at least two source blocks");
  const auto rows = s.blocks.front().rows();
  const auto cols = s.blocks.front().cols();
  for (const auto& b : s.blocks)
    if (b.rows() != rows || b.cols() != cols)
      throw ShapeError(std::string(who) + ": source blocks differ in shape");
}

// Shared core of Eqs. for ratio and gain-weighted masks: elementwise
// numerator/denominator with the 1/I rule on exactly-zero denominators and a
// 1e-12 floor against subnormal noise elsewhere.
std::vector<Mask> normalized_masks(const std::vector<Eigen::MatrixXd>& numerators) {
  const std::size_t count = numerators.size();
  Eigen::MatrixXd denom = numerators.front();
  for (std::size_t i = 1; i < count; ++i) denom += numerators[i];

  std::vector<Mask> out(count);
  for (auto& m : out) m.values.resize(denom.rows(), denom.cols());

  const double uniform = 1.0 / static_cast<double>(count);
  for (Eigen::Index n = 0; n < denom.rows(); ++n) {
    for (Eigen::Index f = 0; f < denom.cols(); ++f) {
      const double d = denom(n, f);
      if (d == 0.0) {
        for (auto& m : out) m.values(n, f) = uniform;
      } else {
        const double floored = std::max(d, 1e-12);
        for (std::size_t i = 0; i < count; ++i)
          out[i].values(n, f) = numerators[i](n, f) / floored;
      }
    }
  }
  return out;
}

}  // namespace

Eigen::MatrixXd StackedSpectra::concatenated() const {
  check_blocks(*this, "StackedSpectra::concatenated");
  const Eigen::Index rows = blocks.front().rows();
  Eigen::Index cols = 0;
  for (const auto& b : blocks) cols += b.cols();
  Eigen::MatrixXd wide(rows, cols);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    wide.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  return wide;
}

StackedSpectra StackedSpectra::split(const Eigen::MatrixXd& wide, const std::vector<int>& widths) {
  Eigen::Index total = 0;
  for (int w : widths) total += w;
  if (total != wide.cols())
    throw ShapeError("StackedSpectra::split: widths do not cover the matrix");
  StackedSpectra out;
  Eigen::Index at = 0;
  for (int w : widths) {
    out.blocks.push_back(wide.middleCols(at, w));
    at += w;
  }
  return out;
}

std::vector<Mask> ratio_mask(const StackedSpectra& sources) {
  check_blocks(sources, "ratio_mask");
  for (const auto& b : sources.blocks)
    if ((b.array() < 0.0).any())
      throw InvalidInput("ratio_mask: negative magnitude input");
  return normalized_masks(sources.blocks);
}

Mask complement_mask(const Mask& m) {
  return Mask{Eigen::MatrixXd::Ones(m.values.rows(), m.values.cols()) - m.values};
}

dsp::MagSpectrogram apply_mask(const Mask& m, const dsp::MagSpectrogram& mixture) {
  if (m.values.rows() != mixture.values.rows() || m.values.cols() != mixture.values.cols())
    throw ShapeError("apply_mask: mask and mixture shapes differ");
  dsp::MagSpectrogram out;
  out.geometry = mixture.geometry;
  out.values = m.values.cwiseProduct(mixture.values);
  return out;
}

std::vector<Mask> final_mask(const StackedSpectra& outputs,
                             const std::vector<dsp::GainVector>& gains) {
  check_blocks(outputs, "final_mask");
  if (gains.size() != outputs.blocks.size())
    throw ShapeError("final_mask: one gain vector per source required");

  std::vector<Eigen::MatrixXd> scaled;
  scaled.reserve(outputs.blocks.size());
  for (std::size_t i = 0; i < outputs.blocks.size(); ++i) {
    if (gains[i].size() != outputs.blocks[i].rows())
      throw ShapeError("final_mask: gain length does not match frame count");
    scaled.push_back(gains[i].asDiagonal() * outputs.blocks[i]);
  }
  return normalized_masks(scaled);
}

}  // namespace maskforge::masks
