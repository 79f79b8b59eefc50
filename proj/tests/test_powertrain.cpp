#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ecodrive/detail/random.hpp"
#include "ecodrive/powertrain.hpp"

using namespace ecodrive;

namespace {

// Flat maps so that hand-computed values apply directly.
PowertrainMaps flat_maps(double v_oc, double r_cell, double eta = 0.9, double f_reg = 1.0)
{
    auto maps = default_powertrain().maps;
    maps.v_oc = LookupTable1D({0.0, 100.0}, {v_oc, v_oc});
    maps.r_cell = LookupTable1D({0.0, 100.0}, {r_cell, r_cell});
    maps.eta_mg = LookupTable2D({0.0, 1000.0}, {0.0, 2000.0}, {{eta, eta}, {eta, eta}});
    maps.f_reg = LookupTable2D({0.0, 100.0}, {0.0, 100.0}, {{f_reg, f_reg}, {f_reg, f_reg}});
    return maps;
}

VehicleParams small_pack()
{
    VehicleParams p;
    p.cells_series = 100;
    p.cells_parallel = 25;
    return p;
}

double residual(double i, double p_mg, double soc, const VehicleParams& p, const PowertrainMaps& m)
{
    const double a = static_cast<double>(p.cells_series) / p.cells_parallel * m.r_cell(soc);
    const double b = p.cells_series * m.v_oc(soc);
    return a * i * i - b * i + p_mg;
}

}  // namespace

TEST(MgSpeed, HandValues)
{
    VehicleParams p;
    EXPECT_EQ(mg_speed(0.0, p), 0.0);
    EXPECT_DOUBLE_EQ(mg_speed(24.0, p), 600.0);
    EXPECT_DOUBLE_EQ(mg_speed(0.32, p), 8.0);
}

TEST(WheelTorque, IdleIsRollA)
{
    const auto wt = wheel_torque(0.0, 0.0, VehicleParams{});
    EXPECT_EQ(wt.t_a, 0.0);
    EXPECT_EQ(wt.t_whl, 120.0);
}

TEST(WheelTorque, AcceleratingAndBraking)
{
    const VehicleParams p;
    auto wt = wheel_torque(20.0, 1.0, p);
    EXPECT_NEAR(wt.t_a, 576.0, 1e-9);
    EXPECT_NEAR(wt.t_l, 300.0, 1e-9);
    EXPECT_NEAR(wt.t_whl, 876.0, 1e-9);
    wt = wheel_torque(20.0, -2.0, p);
    EXPECT_NEAR(wt.t_a, -1152.0, 1e-9);
    EXPECT_NEAR(wt.t_whl, -852.0, 1e-9);
}

TEST(TorqueSplit, TractionBelowLimit)
{
    const auto pt = default_powertrain();
    const auto s = distribute_torque(876.0, 500.0, 20.0, 50.0, pt.params, pt.maps);
    EXPECT_NEAR(s.t_mg, 109.5, 1e-12);
    EXPECT_EQ(s.t_mech_brk, 0.0);
}

TEST(TorqueSplit, TractionSaturatesAtMaxTorque)
{
    const auto pt = default_powertrain();
    const auto s = distribute_torque(2600.0, 500.0, 20.0, 50.0, pt.params, pt.maps);
    EXPECT_NEAR(s.t_mg, 250.0, 1e-12);
}

TEST(TorqueSplit, FullRegenerationNeedsNoFriction)
{
    const auto pt = default_powertrain();
    const auto s = distribute_torque(-800.0, 500.0, 20.0, 50.0, pt.params, pt.maps);
    EXPECT_NEAR(s.t_whl_brk, 800.0, 1e-12);
    EXPECT_NEAR(s.t_mg, -100.0, 1e-12);
    EXPECT_NEAR(s.t_mech_brk, 0.0, 1e-12);
}

TEST(TorqueSplit, HalfRegenerationFactor)
{
    auto pt = default_powertrain();
    pt.maps.f_reg = LookupTable2D({0.0, 100.0}, {0.0, 100.0}, {{0.5, 0.5}, {0.5, 0.5}});
    const auto s = distribute_torque(-800.0, 500.0, 20.0, 50.0, pt.params, pt.maps);
    EXPECT_NEAR(s.t_mg, -50.0, 1e-12);
    EXPECT_NEAR(s.t_mech_brk, -400.0, 1e-12);
}

TEST(TorqueSplit, LiteralBrakeSplitOmitsGearRatio)
{
    auto pt = default_powertrain();
    pt.params.literal_brake_split = true;
    const auto s = distribute_torque(-800.0, 500.0, 20.0, 50.0, pt.params, pt.maps);
    EXPECT_NEAR(s.t_mech_brk, -700.0, 1e-12);
}

TEST(TorqueSplit, NoRegenerationAtHighSoc)
{
    const auto pt = default_powertrain();
    const auto s = distribute_torque(-800.0, 500.0, 20.0, 99.0, pt.params, pt.maps);
    EXPECT_EQ(s.t_mg, 0.0);
    EXPECT_NEAR(s.t_mech_brk, -800.0, 1e-12);
}

TEST(TorqueSplit, WheelTorqueBalanceWithinLimits)
{
    const auto pt = default_powertrain();
    const auto g = pt.params.gear_ratio;
    for (double t_whl = -3500.0; t_whl <= 1900.0; t_whl += 137.0) {
        const auto s = distribute_torque(t_whl, 500.0, 20.0, 50.0, pt.params, pt.maps);
        EXPECT_NEAR(s.t_mg * g + s.t_mech_brk, t_whl, 1e-9) << t_whl;
        EXPECT_LE(s.t_mech_brk, 0.0);
    }
}

TEST(MgPower, MotoringAndGenerating)
{
    const auto maps = flat_maps(3.6, 0.01);
    EXPECT_EQ(mg_electric_power(0.0, 500.0, maps), 0.0);
    EXPECT_NEAR(mg_electric_power(100.0, 500.0, maps), 55555.555555555555, 1e-6);
    EXPECT_NEAR(mg_electric_power(-100.0, 500.0, maps), -45000.0, 1e-9);
}

TEST(BatteryCurrent, ZeroPowerZeroCurrent)
{
    const auto maps = flat_maps(3.6, 0.01);
    EXPECT_EQ(battery_current(0.0, 50.0, small_pack(), maps).i, 0.0);
}

TEST(BatteryCurrent, HandExample)
{
    const auto maps = flat_maps(3.6, 0.01);
    const auto bc = battery_current(10000.0, 50.0, small_pack(), maps);
    // Smaller root of 0.04 I^2 - 360 I + 10000 = 0.
    EXPECT_NEAR(bc.i, 27.864045000420607, 1e-9);
    EXPECT_FALSE(bc.clamped);
    EXPECT_LE(std::abs(residual(bc.i, 10000.0, 50.0, small_pack(), maps)), 1e-6 * 10000.0);
}

TEST(BatteryCurrent, RegenerationChargesPack)
{
    const auto maps = flat_maps(3.6, 0.01);
    const auto bc = battery_current(-20000.0, 50.0, small_pack(), maps);
    EXPECT_LT(bc.i, 0.0);
    EXPECT_LE(std::abs(residual(bc.i, -20000.0, 50.0, small_pack(), maps)), 1e-6 * 20000.0);
}

TEST(BatteryCurrent, ClampsBeyondMaximumPower)
{
    const auto maps = flat_maps(3.6, 0.01);
    const auto bc = battery_current(1e7, 50.0, small_pack(), maps);
    EXPECT_TRUE(bc.clamped);
    EXPECT_NEAR(bc.p_mg, 360.0 * 360.0 / (4.0 * 0.04), 1e-6);
    EXPECT_NEAR(bc.i, 360.0 / (2.0 * 0.04), 1e-9);
}

TEST(BatteryCurrent, RandomResidualProperty)
{
    const auto pt = default_powertrain();
    Rng rng(12345);
    for (int k = 0; k < 1000; ++k) {
        const double p_mg = uniform_real(rng, -150000.0, 150000.0);
        const double soc = uniform_real(rng, 0.0, 100.0);
        const auto bc = battery_current(p_mg, soc, pt.params, pt.maps);
        ASSERT_FALSE(bc.clamped);
        ASSERT_LE(std::abs(residual(bc.i, p_mg, soc, pt.params, pt.maps)), 1e-6 * std::max(1.0, std::abs(p_mg)));
    }
}

TEST(PowertrainStep, SocChangeHandValue)
{
    // 45 A on a 25-parallel pack of 5 Ah cells for 1 s removes 0.01 %.
    VehicleParams p = small_pack();
    const auto maps = flat_maps(3.6, 0.01);
    const double i = 45.0;
    const double p_mg = 100.0 * 3.6 * i - 0.04 * i * i;
    const double t_mg = p_mg * 0.9 / mg_speed(20.0, p);
    const double t_whl = t_mg * p.gear_ratio;
    const double t_l = p.roll_a + p.roll_b * 20.0 + p.roll_c * 400.0;
    const double v_dot = (t_whl - t_l) / (p.mass * p.wheel_radius);
    const auto step = powertrain_step(PowertrainState{50.0, 0.0, 0.0, false}, 20.0, v_dot, 1.0, p, maps);
    EXPECT_NEAR(step.electrical.i_batt, 45.0, 1e-9);
    EXPECT_NEAR(step.state.soc, 50.0 - 0.01, 1e-12);
    EXPECT_NEAR(step.state.x, 20.0, 1e-12);
}

TEST(PowertrainStep, StandstillOnlyDrawsIdleLoad)
{
    const auto pt = default_powertrain();
    const auto step = powertrain_step(PowertrainState{60.0, 0.0, 0.0, false}, 0.0, 0.0, 1.0, pt.params, pt.maps);
    EXPECT_EQ(step.electrical.i_batt, 0.0);  // zero MG speed, zero mechanical power
    EXPECT_EQ(step.state.soc, 60.0);
    EXPECT_EQ(step.state.x, 0.0);
}

TEST(PowertrainStep, RegenerationRaisesSoc)
{
    const auto pt = default_powertrain();
    const auto step = powertrain_step(PowertrainState{50.0, 0.0, 0.0, false}, 20.0, -2.0, 1.0, pt.params, pt.maps);
    EXPECT_LT(step.electrical.i_batt, 0.0);
    EXPECT_GT(step.state.soc, 50.0);
    EXPECT_LT(step.state.e_batt, 0.0);
}

TEST(PowertrainStep, DepletedPackStopsTraction)
{
    auto pt = default_powertrain();
    pt.params.soc_min = 10.0;
    const auto step = powertrain_step(PowertrainState{10.0, 0.0, 0.0, false}, 20.0, 1.0, 1.0, pt.params, pt.maps);
    EXPECT_TRUE(step.state.depleted);
    EXPECT_EQ(step.state.soc, 10.0);
    EXPECT_EQ(step.electrical.i_batt, 0.0);
}

TEST(PowertrainStep, RejectsNonPositiveDt)
{
    const auto pt = default_powertrain();
    EXPECT_THROW(powertrain_step(PowertrainState{}, 10.0, 0.0, 0.0, pt.params, pt.maps), std::invalid_argument);
}

TEST(Mpge, UnitIdentity)
{
    const VehicleParams p;
    const auto m = mpge(PowertrainState{50.0, 1.2132e8, 1609.344, false}, p);
    ASSERT_TRUE(m.has_value());
    EXPECT_NEAR(*m, 1.0, 1e-9);
}

TEST(Mpge, RoundedConversionFactor)
{
    VehicleParams p;
    p.unit_gamma = 75384.9;
    EXPECT_NEAR(*mpge(PowertrainState{50.0, 1.2132e8, 1609.344, false}, p), 1.0, 1e-5);
}

TEST(Mpge, TwentyMilesOnAFifthGallon)
{
    const VehicleParams p;
    EXPECT_NEAR(*mpge(PowertrainState{50.0, 2.4264e7, 32186.9, false}, p), 100.0, 1e-3);
}

TEST(Mpge, UndefinedWithoutEnergy)
{
    const VehicleParams p;
    EXPECT_FALSE(mpge(PowertrainState{50.0, 0.0, 100.0, false}, p).has_value());
    EXPECT_FALSE(mpge(PowertrainState{50.0, 999.0, 100.0, false}, p).has_value());
}

TEST(ResistancePower, HandValues)
{
    const VehicleParams p;
    EXPECT_EQ(resistance_power(0.0, 0.9, p), 0.0);
    EXPECT_NEAR(resistance_power(20.0, 0.9, p), 300.0 * 20.0 / 0.288, 1e-9);
}

TEST(ResistancePower, FasterCostsMore)
{
    const VehicleParams p;
    const double ratio = resistance_power(24.5, 0.9, p) / resistance_power(20.5, 0.9, p);
    EXPECT_GT(ratio, 1.0);
    RecordProperty("ratio_24_5_over_20_5", std::to_string(ratio));
}

TEST(PowertrainParams, DefaultsValidate)
{
    const auto pt = default_powertrain();
    EXPECT_NO_THROW(pt.params.validate());
    EXPECT_NO_THROW(pt.maps.validate());
    VehicleParams bad;
    bad.mass = -1.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}
