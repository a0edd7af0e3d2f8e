#include <doctest.h>

#include <cmath>

#include "maskforge/bss_eval.hpp"
#include "maskforge/errors.hpp"
#include "test_support.hpp"

using namespace maskforge;

namespace {

/// Orthogonal-by-construction references: disjoint supports, so all the
/// projection arithmetic is exact.
std::vector<dsp::Waveform> disjoint_references(std::size_t len, std::uint64_t seed,
                                               double amp2 = 0.5) {
  Rng rng(seed);
  dsp::Waveform r1, r2;
  r1.sample_rate = r2.sample_rate = 8000;
  r1.samples.assign(len, 0.0);
  r2.samples.assign(len, 0.0);
  for (std::size_t i = 0; i < len / 2; ++i) r1.samples[i] = rng.uniform(-1.0, 1.0);
  for (std::size_t i = len / 2; i < len; ++i) r2.samples[i] = rng.uniform(-amp2, amp2);
  return {r1, r2};
}

double squared_norm(const dsp::Waveform& w) {
  double acc = 0.0;
  for (double s : w.samples) acc += s * s;
  return acc;
}

dsp::Waveform mix(const dsp::Waveform& a, const dsp::Waveform& b, double wa = 1.0,
                  double wb = 1.0) {
  dsp::Waveform out = a;
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    out.samples[i] = wa * a.samples[i] + wb * b.samples[i];
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("bss");

TEST_CASE("a perfect estimate hits the +cap") {
  const auto refs = disjoint_references(400, 5);
  const auto d = bss::bss_decompose(refs[0], refs, 0);
  CHECK(d.e_interf.cwiseAbs().maxCoeff() == 0.0);
  CHECK(d.e_artif.cwiseAbs().maxCoeff() == 0.0);
  const auto m = bss::sdr_sir_sar(d);
  CHECK(m.sdr_db == bss::kDbCap);
  CHECK(m.sir_db == bss::kDbCap);
}

TEST_CASE("projections absorb scale") {
  const auto refs = disjoint_references(400, 7);
  auto scaled = refs[0];
  for (double& s : scaled.samples) s *= 3.5;
  const auto m = bss::sdr_sir_sar(bss::bss_decompose(scaled, refs, 0));
  CHECK(m.sdr_db == bss::kDbCap);
  CHECK(m.sir_db == bss::kDbCap);
}

TEST_CASE("orthogonal construction matches the closed-form SIR") {
  const auto refs = disjoint_references(600, 9, 0.3);
  const auto estimate = mix(refs[0], refs[1]);
  const auto d = bss::bss_decompose(estimate, refs, 0);
  const auto m = bss::sdr_sir_sar(d);

  // hand-computed projection oracle: s_target = r1, e_interf = r2
  const double expected = 10.0 * std::log10(squared_norm(refs[0]) / squared_norm(refs[1]));
  CHECK(std::abs(m.sir_db - expected) < 1e-9);
  CHECK(d.e_artif.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sdr_sir_sar formula oracle on a hand-built decomposition") {
  Rng rng(13);
  bss::BssDecomposition d;
  d.s_target = Eigen::VectorXd(4);
  d.e_interf = Eigen::VectorXd(4);
  d.e_artif = Eigen::VectorXd(4);
  for (Eigen::Index i = 0; i < 4; ++i) {
    d.s_target[i] = rng.uniform(-1.0, 1.0);
    d.e_interf[i] = rng.uniform(-0.5, 0.5);
    d.e_artif[i] = rng.uniform(-0.25, 0.25);
  }
  const auto m = bss::sdr_sir_sar(d);

  auto norm2 = [](const Eigen::VectorXd& v) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) acc += v[i] * v[i];
    return acc;
  };
  const double sdr = 10.0 * std::log10(norm2(d.s_target) / norm2(d.e_interf + d.e_artif));
  const double sir = 10.0 * std::log10(norm2(d.s_target) / norm2(d.e_interf));
  const double sar = 10.0 * std::log10(norm2(d.s_target + d.e_interf) / norm2(d.e_artif));
  CHECK(std::abs(m.sdr_db - sdr) < 1e-9);
  CHECK(std::abs(m.sir_db - sir) < 1e-9);
  CHECK(std::abs(m.sar_db - sar) < 1e-9);
}

TEST_CASE("equal target and interference energy pins SIR at 0 dB") {
  bss::BssDecomposition d;
  d.s_target = Eigen::VectorXd::Constant(9, 0.5);
  d.e_interf = Eigen::VectorXd::Constant(9, -0.5);
  d.e_artif = Eigen::VectorXd::Zero(9);
  CHECK(bss::sdr_sir_sar(d).sir_db == 0.0);
}

TEST_CASE("decomposition reconstructs the estimate and is orthogonal where promised") {
  const auto refs = disjoint_references(512, 17);
  Rng rng(19);
  dsp::Waveform estimate;
  estimate.sample_rate = 8000;
  estimate.samples.resize(512);
  for (auto& s : estimate.samples) s = rng.uniform(-1.0, 1.0);

  const auto d = bss::bss_decompose(estimate, refs, 0);
  double err = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < 512; ++i) {
    const double rebuilt = d.s_target[i] + d.e_interf[i] + d.e_artif[i];
    err += (rebuilt - estimate.samples[i]) * (rebuilt - estimate.samples[i]);
    norm += estimate.samples[i] * estimate.samples[i];
  }
  CHECK(std::sqrt(err / norm) < 1e-9);

  for (const auto& r : refs) {
    const Eigen::Map<const Eigen::VectorXd> rv(r.samples.data(), 512);
    CHECK(std::abs(d.e_artif.dot(rv)) < 1e-9 * d.e_artif.norm() * rv.norm() + 1e-15);
  }
}

TEST_CASE("added interference strictly lowers SIR") {
  const auto refs = disjoint_references(512, 23);
  double prev = bss::kDbCap;
  for (double eps : {0.05, 0.1, 0.2, 0.4}) {
    const auto estimate = mix(refs[0], refs[1], 1.0, eps);
    const double sir = bss::sdr_sir_sar(bss::bss_decompose(estimate, refs, 0)).sir_db;
    CHECK(sir < prev);
    prev = sir;
  }
}

TEST_CASE("correct pairing scores at least as high as the swap") {
  const auto refs = disjoint_references(512, 29);
  const auto est_0 = mix(refs[0], refs[1], 0.9, 0.1);
  const auto est_1 = mix(refs[0], refs[1], 0.1, 0.9);
  const double correct = bss::sdr_sir_sar(bss::bss_decompose(est_0, refs, 0)).sir_db +
                         bss::sdr_sir_sar(bss::bss_decompose(est_1, refs, 1)).sir_db;
  const double swapped = bss::sdr_sir_sar(bss::bss_decompose(est_1, refs, 0)).sir_db +
                         bss::sdr_sir_sar(bss::bss_decompose(est_0, refs, 1)).sir_db;
  CHECK(correct > swapped);
}

TEST_CASE("song_report aggregates per-source metrics") {
  const auto refs = disjoint_references(400, 31);

  SUBCASE("perfect estimates cap every average") {
    const auto report = bss::song_report(refs, refs);
    CHECK(report.song_average.sdr_db == bss::kDbCap);
    CHECK(report.song_average.sir_db == bss::kDbCap);
  }

  SUBCASE("swapped estimates have no target component") {
    const std::vector<dsp::Waveform> swapped = {refs[1], refs[0]};
    const auto report = bss::song_report(swapped, refs);
    CHECK(report.per_source[0].sir_db == -bss::kDbCap);
    CHECK(report.per_source[1].sir_db == -bss::kDbCap);
  }

  SUBCASE("mixture as both estimates matches the projection oracle") {
    const auto mixture = mix(refs[0], refs[1]);
    const auto report = bss::song_report({mixture, mixture}, refs);
    const double e1 = squared_norm(refs[0]);
    const double e2 = squared_norm(refs[1]);
    // disjoint supports: the span projection is the mixture itself
    CHECK(std::abs(report.per_source[0].sdr_db - 10.0 * std::log10(e1 / e2)) < 1e-9);
    CHECK(std::abs(report.per_source[1].sdr_db - 10.0 * std::log10(e2 / e1)) < 1e-9);
    CHECK(std::abs(report.song_average.sdr_db -
                   0.5 * (report.per_source[0].sdr_db + report.per_source[1].sdr_db)) < 1e-12);
  }
}

TEST_CASE("degenerate and mismatched references") {
  const auto refs = disjoint_references(300, 37);
  const std::vector<dsp::Waveform> colinear = {refs[0], refs[0]};
  CHECK_THROWS_AS(bss::bss_decompose(refs[0], colinear, 0), DegenerateReferences);

  auto truncated = refs;
  truncated[1].samples.resize(200);
  CHECK_THROWS_AS(bss::bss_decompose(refs[0], truncated, 0), ShapeError);

  CHECK_THROWS_AS(bss::song_report({refs[0]}, refs), ShapeError);
}

TEST_CASE("report aggregation and CSV serialization") {
  testutil::TempDir dir("report");
  std::vector<bss::ReportRow> rows = {
      {"t00", "S", "vocal", {5.0, 10.0, 7.0}},
      {"t00", "S", "accompaniment", {7.0, 14.0, 9.0}},
      {"t01", "S", "vocal", {1.0, 2.0, 3.0}},
      {"t01", "S", "accompaniment", {3.0, 4.0, 5.0}},
      {"t00", "D0", "vocal", {8.0, 16.0, 10.0}},
      {"t00", "D0", "accompaniment", {10.0, 20.0, 12.0}},
      {"t01", "D0", "vocal", {2.0, 3.0, 4.0}},
      {"t01", "D0", "accompaniment", {4.0, 5.0, 6.0}},
  };

  const auto per_song = bss::per_song_averages(rows);
  REQUIRE(per_song.size() == 4);
  CHECK(per_song[0].song_id == "t00");
  CHECK(per_song[0].model == "S");
  CHECK(per_song[0].metrics.sdr_db == doctest::Approx(6.0));   // (5+7)/2
  CHECK(per_song[0].metrics.sir_db == doctest::Approx(12.0));  // (10+14)/2

  const auto summary = bss::summarize(per_song);
  REQUIRE(summary.size() == 2);
  CHECK(summary[0].model == "S");
  CHECK(summary[0].song_count == 2);
  CHECK(summary[0].mean.sdr_db == doctest::Approx((6.0 + 2.0) / 2));
  CHECK(summary[0].median.sdr_db == doctest::Approx((6.0 + 2.0) / 2));

  bss::write_metrics_csv(dir.path() / "report.csv", rows);
  const auto text = testutil::read_file(dir.path() / "report.csv");
  CHECK(text.find("song_id,model,source,sdr_db,sir_db,sar_db") == 0);
  CHECK(text.find("t00,S,vocal,5,10,7") != std::string::npos);

  bss::write_summary_csv(dir.path() / "summary.csv", summary);
  const auto summary_text = testutil::read_file(dir.path() / "summary.csv");
  CHECK(summary_text.find("sdr_mean_db") != std::string::npos);
  CHECK(summary_text.find("sdr_median_db") != std::string::npos);
}

TEST_SUITE_END();
