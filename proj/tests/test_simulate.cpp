#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "batrul/simulate.hpp"

namespace batrul {
namespace {

SimConfig quiet_cc() {
  SimConfig c;
  c.profile = SimProfile::ConstantCurrent;
  c.noise_std = {0.0, 0.0, 0.0};
  c.nominal_capacity_ah = 2.0;
  c.max_discharge_rate_a = 2.0;
  c.charge_rate_a = 1.0;
  c.sample_period_s = 10.0;
  return c;
}

SimConfig fast_partial() {
  SimConfig c;
  c.fade_per_ah = 0.02;
  c.reference_interval_ah = 2.0;
  return c;
}

// Rectangle (zero-order hold) sum of discharge current over the emitted
// trace, independent of the simulator's counter.
double emitted_discharge_ah(const CellSeries& s, std::size_t upto) {
  double ah = 0.0;
  for (std::size_t k = 0; k + 1 < upto && k + 1 < s.samples.size(); ++k) {
    const double dt = s.samples[k + 1].timestamp_s - s.samples[k].timestamp_s;
    if (s.samples[k].current_a < 0.0) ah += -s.samples[k].current_a * dt / 3600.0;
  }
  return ah;
}

TEST(OcvCurve, AnchorsAndMonotonicity) {
  EXPECT_DOUBLE_EQ(ocv_volts(0.0), 3.0);
  EXPECT_DOUBLE_EQ(ocv_volts(0.1), 3.5);
  EXPECT_DOUBLE_EQ(ocv_volts(0.9), 4.0);
  EXPECT_DOUBLE_EQ(ocv_volts(1.0), 4.2);
  EXPECT_DOUBLE_EQ(ocv_volts(0.5), 3.75);
  double prev = ocv_volts(0.0);
  for (int k = 1; k <= 1000; ++k) {
    const double v = ocv_volts(k / 1000.0);
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(SimulateCell, ZeroFadeKeepsNominal) {
  auto c = quiet_cc();
  c.fade_per_ah = 0.0;
  c.max_duration_s = 40000.0;
  const auto r = simulate_cell(c);
  ASSERT_GE(r.true_capacity_trace.size(), 2u);
  for (const auto& p : r.true_capacity_trace) EXPECT_EQ(p.capacity_ah, 2.0);
  EXPECT_LE(r.series.samples.back().timestamp_s, 40000.0);
}

TEST(SimulateCell, SameSeedIsBitIdentical) {
  auto c = fast_partial();
  c.seed = 99;
  EXPECT_EQ(simulate_cell(c), simulate_cell(c));
}

TEST(SimulateCell, FadeLawAt200Ah) {
  auto c = quiet_cc();
  c.fade_per_ah = 0.001;
  const auto r = simulate_cell(c);
  // Hand evaluation: 2.0 * (1 - 0.001 * 200) = 1.6 Ah, SOH 80 %.
  EXPECT_NEAR(faded_capacity_ah(2.0, 0.001, 200.0), 1.6, 1e-15);

  // Trace point nearest 200 Ah obeys the closed form, and the internal
  // throughput agrees with the emitted current trace.
  const TruthPoint* best = nullptr;
  for (const auto& p : r.true_capacity_trace) {
    if (!best || std::abs(p.cumulative_discharge_ah - 200.0) < std::abs(best->cumulative_discharge_ah - 200.0)) {
      best = &p;
    }
  }
  ASSERT_NE(best, nullptr);
  EXPECT_LT(std::abs(best->cumulative_discharge_ah - 200.0), 2.0);
  EXPECT_NEAR(best->capacity_ah, 2.0 * (1.0 - 0.001 * best->cumulative_discharge_ah), 1e-12);

  const double emitted = emitted_discharge_ah(r.series, r.series.size());
  EXPECT_NEAR(emitted, r.total_discharge_ah, 1e-3 * r.total_discharge_ah);
  // Terminated at 60 % of nominal.
  EXPECT_LE(r.true_capacity_trace.back().capacity_ah, 0.6 * 2.0 + 1e-12);
  EXPECT_NEAR(r.true_capacity_trace.back().capacity_ah, 1.2, 2e-3);
}

TEST(SimulateCell, TraceNonIncreasingAndStartsAtNominal) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto c = fast_partial();
    c.seed = seed;
    const auto r = simulate_cell(c);
    ASSERT_FALSE(r.true_capacity_trace.empty());
    EXPECT_EQ(r.true_capacity_trace.front().capacity_ah, c.nominal_capacity_ah);
    for (std::size_t k = 1; k < r.true_capacity_trace.size(); ++k) {
      EXPECT_LE(r.true_capacity_trace[k].capacity_ah, r.true_capacity_trace[k - 1].capacity_ah);
    }
    EXPECT_NO_THROW(validate_series(r.series));
  }
}

// Re-integrate SOC from the noise-free emitted current with the closed-form
// fade law; it must stay inside [0, 1].
TEST(SimulateCell, SocStaysInBounds) {
  for (const auto profile : {SimProfile::ConstantCurrent, SimProfile::RandomizedPartial}) {
    auto c = fast_partial();
    c.profile = profile;
    c.noise_std = {0.0, 0.0, 0.0};
    c.seed = 5;
    const auto r = simulate_cell(c);
    double soc = 1.0, discharged = 0.0;
    double lo = 1.0, hi = 0.0;
    const auto& s = r.series.samples;
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
      const double dt = s[k + 1].timestamp_s - s[k].timestamp_s;
      const double cap = faded_capacity_ah(c.nominal_capacity_ah, c.fade_per_ah, discharged);
      soc += s[k].current_a * dt / 3600.0 / cap;
      if (s[k].current_a < 0.0) discharged += -s[k].current_a * dt / 3600.0;
      lo = std::min(lo, soc);
      hi = std::max(hi, soc);
    }
    EXPECT_GE(lo, -1e-9);
    EXPECT_LE(hi, 1.0 + 1e-9);
    EXPECT_NEAR(discharged, r.total_discharge_ah, 1e-3 * r.total_discharge_ah);
  }
}

TEST(SimulateCell, RandomizedPartialVariesCurrentsWithinBounds) {
  auto c = fast_partial();
  c.noise_std = {0.0, 0.0, 0.0};
  const auto r = simulate_cell(c);
  std::set<double> discharge_levels;
  for (const auto& s : r.series.samples) {
    if (s.current_a < 0.0) {
      EXPECT_LE(-s.current_a, c.max_discharge_rate_a + 1e-12);
      discharge_levels.insert(s.current_a);
    }
    EXPECT_GT(s.voltage_v, 0.0);
    EXPECT_LT(s.voltage_v, 10.0);
  }
  EXPECT_GT(discharge_levels.size(), 10u);
}

TEST(SimulateCell, InvalidConfigs) {
  auto bad = [](auto mutate) {
    SimConfig c;
    mutate(c);
    try {
      simulate_cell(c);
    } catch (const Error& e) {
      return e.code() == Errc::InvalidConfig;
    }
    return false;
  };
  EXPECT_TRUE(bad([](SimConfig& c) { c.soc_bounds = {0.8, 0.2}; }));
  EXPECT_TRUE(bad([](SimConfig& c) { c.soc_bounds = {-0.1, 0.9}; }));
  EXPECT_TRUE(bad([](SimConfig& c) { c.sample_period_s = 0.0; }));
  EXPECT_TRUE(bad([](SimConfig& c) { c.fade_per_ah = -0.1; }));
  EXPECT_TRUE(bad([](SimConfig& c) { c.nominal_capacity_ah = 0.0; }));
  EXPECT_TRUE(bad([](SimConfig& c) { c.max_duration_s = 1.0; }));
}

TEST(SimulateFleet, FleetOfOneMatchesDerivedCell) {
  const auto base = fast_partial();
  const auto fleet = simulate_fleet(base, 1, 42);
  ASSERT_EQ(fleet.size(), 1u);
  EXPECT_EQ(fleet[0], simulate_cell(fleet_member_config(base, 42, 0)));
  EXPECT_EQ(fleet[0].series.cell_id, "sim-000");
}

TEST(SimulateFleet, TenDistinctCellsWithValidTraces) {
  const auto fleet = simulate_fleet(fast_partial(), 10, 7);
  ASSERT_EQ(fleet.size(), 10u);
  std::set<std::string> ids;
  std::set<double> fades;
  for (const auto& r : fleet) {
    ids.insert(r.series.cell_id);
    for (std::size_t k = 1; k < r.true_capacity_trace.size(); ++k) {
      EXPECT_LE(r.true_capacity_trace[k].capacity_ah, r.true_capacity_trace[k - 1].capacity_ah);
    }
  }
  EXPECT_EQ(ids.size(), 10u);
  EXPECT_TRUE(ids.count("sim-009"));
  for (std::size_t i = 0; i < 10; ++i) fades.insert(fleet_member_config(fast_partial(), 7, i).fade_per_ah);
  EXPECT_EQ(fades.size(), 10u);
}

TEST(SimulateFleet, DifferentSeedsGiveDifferentNoise) {
  const auto a = simulate_fleet(fast_partial(), 1, 1);
  const auto b = simulate_fleet(fast_partial(), 1, 2);
  int differing = 0;
  for (std::size_t k = 0; k < 100; ++k) {
    differing += a[0].series.samples[k].voltage_v != b[0].series.samples[k].voltage_v;
  }
  EXPECT_GE(differing, 99);
}

TEST(SimulateFleet, ParallelMatchesSerial) {
  EXPECT_EQ(simulate_fleet(fast_partial(), 4, 3, {}, 1), simulate_fleet(fast_partial(), 4, 3, {}, 3));
}

TEST(SimulateFleet, ZeroCellsRejected) {
  EXPECT_THROW(simulate_fleet(fast_partial(), 0, 1), Error);
}

}  // namespace
}  // namespace batrul
