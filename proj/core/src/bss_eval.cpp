#include "maskforge/bss_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>

#include "maskforge/errors.hpp"

namespace maskforge::bss {

namespace {

double to_db(double num, double den) {
  if (num == 0.0) return -kDbCap;
  if (den == 0.0) return kDbCap;
  return std::clamp(10.0 * std::log10(num / den), -kDbCap, kDbCap);
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_open_check(const std::ofstream& out, const std::filesystem::path& path) {
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
}

std::ostream& put_metrics(std::ostream& out, const SourceMetrics& m) {
  return out << m.sdr_db << ',' << m.sir_db << ',' << m.sar_db;
}

}  // namespace

BssDecomposition bss_decompose(const dsp::Waveform& estimate,
                               const std::vector<dsp::Waveform>& references, int target_index) {
  if (references.empty()) throw InvalidInput("bss_decompose: no references");
  if (target_index < 0 || target_index >= static_cast<int>(references.size()))
    throw InvalidInput("bss_decompose: target index out of range");
  const std::size_t len = estimate.samples.size();
  if (len == 0) throw ShapeError("bss_decompose: empty estimate");
  for (const auto& r : references)
    if (r.samples.size() != len)
      throw ShapeError("bss_decompose: reference length does not match the estimate");

  const Eigen::Index t = static_cast<Eigen::Index>(len);
  const Eigen::Index count = static_cast<Eigen::Index>(references.size());
  Eigen::VectorXd e = Eigen::Map<const Eigen::VectorXd>(estimate.samples.data(), t);
  Eigen::MatrixXd refs(t, count);
  for (Eigen::Index i = 0; i < count; ++i)
    refs.col(i) = Eigen::Map<const Eigen::VectorXd>(references[i].samples.data(), t);

  // Normal equations on the reference Gram matrix; a condition number above
  // 1e12 means the reference set is effectively rank deficient.
  const Eigen::MatrixXd gram = refs.transpose() * refs;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (lo <= 0.0 || hi / lo > 1e12)
    throw DegenerateReferences("bss_decompose: reference Gram matrix is ill conditioned");

  const Eigen::VectorXd coeffs = gram.ldlt().solve(refs.transpose() * e);
  const Eigen::VectorXd span_proj = refs * coeffs;

  const Eigen::VectorXd& target = refs.col(target_index);
  BssDecomposition d;
  d.s_target = (e.dot(target) / target.squaredNorm()) * target;
  d.e_interf = span_proj - d.s_target;
  d.e_artif = e - span_proj;
  return d;
}

SourceMetrics sdr_sir_sar(const BssDecomposition& d) {
  const double target = d.s_target.squaredNorm();
  const double interf = d.e_interf.squaredNorm();
  const double artif = d.e_artif.squaredNorm();

  SourceMetrics m;
  m.sdr_db = to_db(target, (d.e_interf + d.e_artif).squaredNorm());
  m.sir_db = to_db(target, interf);
  m.sar_db = to_db((d.s_target + d.e_interf).squaredNorm(), artif);
  return m;
}

MetricReport song_report(const std::vector<dsp::Waveform>& estimates,
                         const std::vector<dsp::Waveform>& references) {
  if (estimates.size() != references.size())
    throw ShapeError("song_report: estimate and reference counts differ");

  MetricReport report;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto d = bss_decompose(estimates[i], references, static_cast<int>(i));
    report.per_source.push_back(sdr_sir_sar(d));
  }

  const double inv = 1.0 / static_cast<double>(report.per_source.size());
  for (const auto& m : report.per_source) {
    report.song_average.sdr_db += inv * m.sdr_db;
    report.song_average.sir_db += inv * m.sir_db;
    report.song_average.sar_db += inv * m.sar_db;
  }
  return report;
}

std::vector<PerSongAverage> per_song_averages(const std::vector<ReportRow>& rows) {
  // (song, model) -> accumulated metrics; insertion order preserved.
  std::vector<PerSongAverage> out;
  std::map<std::pair<std::string, std::string>, std::pair<std::size_t, int>> index;
  for (const auto& row : rows) {
    const auto key = std::make_pair(row.song_id, row.model);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, std::make_pair(out.size(), 1));
      out.push_back({row.song_id, row.model, row.metrics});
    } else {
      auto& [pos, count] = it->second;
      out[pos].metrics.sdr_db += row.metrics.sdr_db;
      out[pos].metrics.sir_db += row.metrics.sir_db;
      out[pos].metrics.sar_db += row.metrics.sar_db;
      ++count;
    }
  }
  for (auto& [key, entry] : index) {
    auto& [pos, count] = entry;
    out[pos].metrics.sdr_db /= count;
    out[pos].metrics.sir_db /= count;
    out[pos].metrics.sar_db /= count;
  }
  return out;
}

std::vector<ModelSummary> summarize(const std::vector<PerSongAverage>& averages) {
  std::vector<std::string> models;
  std::map<std::string, std::vector<SourceMetrics>> by_model;
  for (const auto& a : averages) {
    if (by_model.find(a.model) == by_model.end()) models.push_back(a.model);
    by_model[a.model].push_back(a.metrics);
  }

  std::vector<ModelSummary> out;
  for (const auto& model : models) {
    const auto& ms = by_model[model];
    ModelSummary s;
    s.model = model;
    s.song_count = static_cast<int>(ms.size());
    std::vector<double> sdr, sir, sar;
    for (const auto& m : ms) {
      s.mean.sdr_db += m.sdr_db;
      s.mean.sir_db += m.sir_db;
      s.mean.sar_db += m.sar_db;
      sdr.push_back(m.sdr_db);
      sir.push_back(m.sir_db);
      sar.push_back(m.sar_db);
    }
    s.mean.sdr_db /= s.song_count;
    s.mean.sir_db /= s.song_count;
    s.mean.sar_db /= s.song_count;
    s.median.sdr_db = median_of(sdr);
    s.median.sir_db = median_of(sir);
    s.median.sar_db = median_of(sar);
    out.push_back(std::move(s));
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows) {
  std::ofstream out(path);
  write_open_check(out, path);
  out << std::setprecision(12);
  out << "song_id,model,source,sdr_db,sir_db,sar_db\n";
  for (const auto& row : rows) {
    out << row.song_id << ',' << row.model << ',' << row.source << ',';
    put_metrics(out, row.metrics) << '\n';
  }
}

void write_per_song_csv(const std::filesystem::path& path,
                        const std::vector<PerSongAverage>& averages) {
  std::ofstream out(path);
  write_open_check(out, path);
  out << std::setprecision(12);
  out << "song_id,model,sdr_db,sir_db,sar_db\n";
  for (const auto& a : averages) {
    out << a.song_id << ',' << a.model << ',';
    put_metrics(out, a.metrics) << '\n';
  }
}

void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<ModelSummary>& summaries) {
  std::ofstream out(path);
  write_open_check(out, path);
  out << std::setprecision(12);
  out << "model,songs,sdr_mean_db,sdr_median_db,sir_mean_db,sir_median_db,"
         "sar_mean_db,sar_median_db\n";
  for (const auto& s : summaries) {
    out << s.model << ',' << s.song_count << ',' << s.mean.sdr_db << ',' << s.median.sdr_db << ','
        << s.mean.sir_db << ',' << s.median.sir_db << ',' << s.mean.sar_db << ','
        << s.median.sar_db << '\n';
  }
}

}  // namespace maskforge::bss
