#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "batrul/labeling.hpp"
#include "batrul/simulate.hpp"

namespace batrul {
namespace {

CellSeries constant_series(double current, double duration_s, double step_s) {
  CellSeries s;
  s.cell_id = "c";
  s.nominal_capacity_ah = 2.0;
  for (double t = 0.0; t <= duration_s + 1e-9; t += step_s) s.samples.push_back({t, 3.7, current, 25.0});
  return s;
}

CycleSegment whole(const CellSeries& s, CycleKind kind) { return {kind, 0, s.size(), s.cell_id}; }

TEST(CoulombCount, ConstantCurrentOneHour) {
  const auto s = constant_series(-2.0, 3600.0, 1.0);
  EXPECT_NEAR(coulomb_count(s, whole(s, CycleKind::Discharge)), 2.0, 1e-12);
}

TEST(CoulombCount, RestIsZero) {
  const auto s = constant_series(0.0, 600.0, 1.0);
  EXPECT_EQ(coulomb_count(s, whole(s, CycleKind::Rest)), 0.0);
}

TEST(CoulombCount, RampMatchesTriangleArea) {
  CellSeries s;
  s.nominal_capacity_ah = 2.0;
  for (int k = 0; k <= 3600; ++k) s.samples.push_back({double(k), 3.7, 2.0 * k / 3600.0, 25.0});
  // Triangle: 0.5 * 2 A * 1 h.
  EXPECT_NEAR(coulomb_count(s, whole(s, CycleKind::Charge)), 1.0, 1e-6);
}

TEST(CoulombCount, SegmentsPartitionTheWholeIntegral) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> cur(-3.0, 3.0), dt(0.5, 20.0);
  CellSeries s;
  double t = 0.0;
  for (int k = 0; k < 500; ++k) {
    s.samples.push_back({t, 3.7, cur(rng), 25.0});
    t += dt(rng);
  }
  double trapezoid = 0.0;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const auto& a = s.samples[k];
    const auto& b = s.samples[k + 1];
    trapezoid += 0.5 * (std::abs(a.current_a) + std::abs(b.current_a)) * (b.timestamp_s - a.timestamp_s);
  }
  double summed = 0.0;
  for (const auto& seg : segment_cycles(s)) summed += coulomb_count(s, seg);
  EXPECT_NEAR(summed, trapezoid / 3600.0, 1e-9);
}

TEST(CoulombCount, OutOfRangeSegment) {
  const auto s = constant_series(-1.0, 10.0, 1.0);
  try {
    coulomb_count(s, {CycleKind::Discharge, 3, 40, "c"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SegmentOutOfRange);
  }
}

TEST(ComputeSoh, Examples) {
  const auto soh = compute_soh({{0.0, 2.0}, {10.0, 1.4}, {20.0, 1.6}}, 2.0);
  ASSERT_EQ(soh.size(), 3u);
  EXPECT_DOUBLE_EQ(soh[0].soh_pct, 100.0);
  EXPECT_DOUBLE_EQ(soh[1].soh_pct, 70.0);
  EXPECT_DOUBLE_EQ(soh[2].soh_pct, 80.0);
  EXPECT_EQ(soh[1].cumulative_discharge_ah, 10.0);
}

TEST(ComputeSoh, Errors) {
  try {
    compute_soh({{0.0, 1.0}}, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonPositiveNominal);
  }
  EXPECT_THROW(compute_soh({{0.0, 3.0}}, 2.0), Error);
}

TEST(ComputeSoh, HomogeneityUnderJointScaling) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> cap(0.5, 2.0), k(0.01, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CapacityPoint> pts;
    for (int i = 0; i < 5; ++i) pts.push_back({double(i), cap(rng)});
    const double scale = k(rng);
    auto scaled = pts;
    for (auto& p : scaled) p.capacity_ah *= scale;
    const auto a = compute_soh(pts, 2.0);
    const auto b = compute_soh(scaled, 2.0 * scale);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_LE(std::abs(a[i].soh_pct - b[i].soh_pct), 1e-12 * a[i].soh_pct);
    }
  }
}

TEST(DetectEol, Examples) {
  const auto eol = detect_eol({{0, 100}, {100, 90}, {200, 79}}, 80.0);
  ASSERT_TRUE(eol.has_value());
  EXPECT_NEAR(*eol, 100.0 + 100.0 * 10.0 / 11.0, 1e-9);
  EXPECT_NEAR(*eol, 190.909, 1e-3);

  EXPECT_FALSE(detect_eol({{0, 100}, {100, 90}, {200, 81}}, 80.0).has_value());

  const auto exact = detect_eol({{0, 100}, {150, 80}}, 80.0);
  ASSERT_TRUE(exact.has_value());
  EXPECT_EQ(*exact, 150.0);

  const auto first = detect_eol({{5, 60}, {10, 50}}, 80.0);
  ASSERT_TRUE(first.has_value());
  EXPECT_EQ(*first, 5.0);
}

TEST(DetectEol, EmptyInput) {
  try {
    detect_eol({}, 80.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyInput);
  }
}

TEST(DetectEol, InvariantUnderCollinearInsertion) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> drop(0.1, 4.0), gap(1.0, 30.0), frac(0.05, 0.95);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<SohPoint> soh{{0.0, 100.0}};
    while (soh.back().soh_pct > 60.0) soh.push_back({soh.back().cumulative_discharge_ah + gap(rng), soh.back().soh_pct - drop(rng)});
    const auto base = detect_eol(soh, 80.0);
    ASSERT_TRUE(base.has_value());
    auto dense = soh;
    for (std::size_t i = dense.size() - 1; i > 0; --i) {
      const auto a = dense[i - 1];
      const auto b = dense[i];
      const double f = frac(rng);
      dense.insert(dense.begin() + static_cast<std::ptrdiff_t>(i),
                   {a.cumulative_discharge_ah + f * (b.cumulative_discharge_ah - a.cumulative_discharge_ah),
                    a.soh_pct + f * (b.soh_pct - a.soh_pct)});
    }
    const auto denser = detect_eol(dense, 80.0);
    ASSERT_TRUE(denser.has_value());
    EXPECT_NEAR(*denser, *base, 1e-9 * *base);
  }
}

TEST(RulTargets, ExamplesAndClamp) {
  const double eol = 190.909;
  auto t = compute_rul_targets(eol, {0.0});
  EXPECT_EQ(t[0].remaining_ah, 190.909);
  t = compute_rul_targets(eol, {eol});
  EXPECT_EQ(t[0].remaining_ah, 0.0);
  t = compute_rul_targets(std::vector<SohPoint>{{0, 100}}, eol, {0.0, 50.0, 250.0});
  ASSERT_EQ(t.size(), 3u);
  EXPECT_NEAR(t[0].remaining_ah, 190.909, 1e-12);
  EXPECT_NEAR(t[1].remaining_ah, 140.909, 1e-12);
  EXPECT_EQ(t[2].remaining_ah, 0.0);
}

TEST(RulTargets, UnitSlopeUntilClamp) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> q(0.0, 300.0);
  std::vector<double> queries(300);
  for (auto& v : queries) v = q(rng);
  std::sort(queries.begin(), queries.end());
  const double eol = 190.909;
  const auto t = compute_rul_targets(eol, queries);
  for (std::size_t i = 1; i < t.size(); ++i) {
    EXPECT_LE(t[i].remaining_ah, t[i - 1].remaining_ah);
    if (queries[i] <= eol) {
      EXPECT_NEAR(t[i - 1].remaining_ah - t[i].remaining_ah, queries[i] - queries[i - 1], 1e-12);
    } else {
      EXPECT_EQ(t[i].remaining_ah, 0.0);
    }
  }
}

TEST(CycleRul, Examples) {
  const std::vector<SohPoint> soh{{0, 100}, {10, 97}, {20, 94}, {30, 91}, {40, 88}};
  EXPECT_EQ(cycle_rul_for_reference(soh, 0, 45.0), 4u);
  EXPECT_EQ(cycle_rul_for_reference(soh, 4, 45.0), 0u);
  EXPECT_THROW(cycle_rul_for_reference({}, 0, 1.0), Error);
}

SimConfig oracle_config(double period_s) {
  SimConfig c;
  c.profile = SimProfile::ConstantCurrent;
  c.noise_std = {0.0, 0.0, 0.0};
  c.fade_per_ah = 0.004;
  c.sample_period_s = period_s;
  return c;
}

// Capacity points from coulomb counting against the fade law evaluated at
// the same throughput.
TEST(CapacityPoints, MatchSimulatorTruth) {
  const auto cfg = oracle_config(1.0);
  const auto r = simulate_cell(cfg);
  const auto pts = estimate_capacity_points(r.series, segment_cycles(r.series));
  ASSERT_GT(pts.size(), 20u);
  for (const auto& p : pts) {
    const double truth = faded_capacity_ah(cfg.nominal_capacity_ah, cfg.fade_per_ah, p.cumulative_discharge_ah);
    EXPECT_NEAR(p.capacity_ah, truth, 1e-3 * truth) << "at " << p.cumulative_discharge_ah;
  }
}

// The cell fades while it is being measured, so a slowly fading cell is
// needed for the first point to sit near nominal.
TEST(CapacityPoints, FreshCellMeasuresNominal) {
  auto cfg = oracle_config(1.0);
  cfg.fade_per_ah = 4e-4;
  cfg.max_duration_s = 30000.0;
  const auto r = simulate_cell(cfg);
  const auto pts = estimate_capacity_points(r.series, segment_cycles(r.series));
  ASSERT_FALSE(pts.empty());
  EXPECT_NEAR(pts.front().capacity_ah, cfg.nominal_capacity_ah, 1e-3 * cfg.nominal_capacity_ah);
}

TEST(CapacityPoints, PartialDischargesOnly) {
  CellSeries s;
  s.nominal_capacity_ah = 2.0;
  for (int k = 0; k < 100; ++k) s.samples.push_back({double(k), 3.8 - 0.001 * k, -1.0, 25.0});
  try {
    estimate_capacity_points(s, segment_cycles(s));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoReferenceDischarges);
  }
}

TEST(LabelCell, EolMatchesClosedFormFadeLaw) {
  for (const double period : {1.0, 10.0}) {
    const auto cfg = oracle_config(period);
    const auto r = simulate_cell(cfg);
    for (const double threshold : {80.0, 70.0}) {
      LabelOptions opt;
      opt.threshold_pct = threshold;
      const auto labels = label_cell(r.series, opt);
      ASSERT_FALSE(labels.censored());
      // 2.0 * (1 - fade * x) = 2.0 * threshold / 100.
      const double closed = (1.0 - threshold / 100.0) / cfg.fade_per_ah;
      EXPECT_NEAR(*labels.eol_throughput_ah, closed, 5e-3 * closed);
    }
  }
}

TEST(LabelCell, RecordsAreConsistent) {
  const auto r = simulate_cell(oracle_config(10.0));
  const auto labels = label_cell(r.series);
  ASSERT_FALSE(labels.censored());
  ASSERT_FALSE(labels.records.empty());
  EXPECT_EQ(labels.records.front().cumulative_discharge_ah, 0.0);
  EXPECT_EQ(labels.records.front().remaining_ah, *labels.eol_throughput_ah);
  std::size_t with_soh = 0;
  for (std::size_t i = 0; i < labels.records.size(); ++i) {
    const auto& rec = labels.records[i];
    EXPECT_EQ(rec.remaining_ah, std::max(0.0, *labels.eol_throughput_ah - rec.cumulative_discharge_ah));
    if (i > 0) {
      EXPECT_GT(rec.cumulative_discharge_ah, labels.records[i - 1].cumulative_discharge_ah);
    }
    with_soh += rec.soh_pct.has_value();
  }
  EXPECT_EQ(with_soh, labels.soh.size());
  EXPECT_NEAR(labels.records.back().cumulative_discharge_ah, r.total_discharge_ah, 1e-3 * r.total_discharge_ah);
}

TEST(LabelCell, CycleRulTracksAhRul) {
  const auto r = simulate_cell(oracle_config(10.0));
  const auto labels = label_cell(r.series);
  const auto& soh = labels.soh;
  const double eol = *labels.eol_throughput_ah;
  for (std::size_t i = 0; i + 1 < soh.size(); ++i) {
    if (soh[i].cumulative_discharge_ah > eol) break;
    // Each cycle delivers the current capacity, which fades linearly, so
    // the mean per-cycle Ah over the remaining life is the average of the
    // capacity now and at EOL.
    const double now = soh[i].soh_pct / 100.0 * labels.nominal_capacity_ah;
    const double at_eol = 0.8 * labels.nominal_capacity_ah;
    const double per_cycle = 0.5 * (now + at_eol);
    const double ah_rul = eol - soh[i].cumulative_discharge_ah;
    EXPECT_NEAR(cycle_rul_for_reference(soh, i, eol) * per_cycle, ah_rul, now);
  }
}

TEST(LabelCell, CensoredWhenThresholdNeverReached) {
  auto cfg = oracle_config(10.0);
  cfg.max_duration_s = 200000.0;
  const auto labels = label_cell(simulate_cell(cfg).series);
  EXPECT_TRUE(labels.censored());
  EXPECT_TRUE(labels.records.empty());
  EXPECT_FALSE(labels.censor_reason.empty());
}

}  // namespace
}  // namespace batrul
