#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "maskforge/dsp.hpp"

namespace maskforge::bss {

/// Replaces +/- infinity in the dB metrics so reports stay totally ordered
/// and serializable.
inline constexpr double kDbCap = 300.0;

/**
 * Time-invariant projection split of an estimate: s_target is colinear with
 * the true reference, e_interf lies in the span of all references, e_artif is
 * orthogonal to that span. The three parts sum to the estimate exactly.
 *
 * This is the filter-free variant of the BSS Eval methodology (projection
 * onto the raw references, no allowed-distortion filter), so absolute dB
 * values can differ from toolbox implementations that use a 512-tap filter;
 * relative model comparisons are preserved.
 */
struct BssDecomposition {
  Eigen::VectorXd s_target;
  Eigen::VectorXd e_interf;
  Eigen::VectorXd e_artif;
};

struct SourceMetrics {
  double sdr_db = 0.0;
  double sir_db = 0.0;
  double sar_db = 0.0;
};

struct MetricReport {
  std::vector<SourceMetrics> per_source;
  SourceMetrics song_average;
};

BssDecomposition bss_decompose(const dsp::Waveform& estimate,
                               const std::vector<dsp::Waveform>& references, int target_index);

/// SDR/SIR/SAR in dB from a decomposition; zero denominators give +cap, zero
/// numerators -cap.
SourceMetrics sdr_sir_sar(const BssDecomposition& d);

/// Per-source metrics plus the across-source average of each metric.
MetricReport song_report(const std::vector<dsp::Waveform>& estimates,
                         const std::vector<dsp::Waveform>& references);

// ---- report serialization ---------------------------------------------

struct ReportRow {
  std::string song_id;
  std::string model;
  std::string source;
  SourceMetrics metrics;
};

struct PerSongAverage {
  std::string song_id;
  std::string model;
  SourceMetrics metrics;
};

struct ModelSummary {
  std::string model;
  SourceMetrics mean;
  SourceMetrics median;
  int song_count = 0;
};

std::vector<PerSongAverage> per_song_averages(const std::vector<ReportRow>& rows);
std::vector<ModelSummary> summarize(const std::vector<PerSongAverage>& averages);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows);
void write_per_song_csv(const std::filesystem::path& path,
                        const std::vector<PerSongAverage>& averages);
void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<ModelSummary>& summaries);

}  // namespace maskforge::bss
