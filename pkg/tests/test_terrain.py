import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from terratrack.terrain import (ControlInput, Deformable, Matched, Plant,
                                PlantFault, TerrainParams, VehicleParams,
                                VehicleState, bekker_pressure,
                                compaction_resistance, run_with_zoh,
                                static_sinkage, step, traction_limit)
from terratrack.scenarios import TERRAIN_1, TERRAIN_2, TERRAIN_3

VEH = VehicleParams()


def make_terrain(**kw):
    base = dict(friction_angle=math.radians(30), k_phi=2e6, k_c=0.0,
                elastic_stiffness=2e8, shear_coeff_K=0.01, bekker_n=1.1,
                damping=3e4, shear_cohesion_c=0.0)
    base.update(kw)
    return TerrainParams(**base)


terrain_strategy = st.builds(
    make_terrain,
    friction_angle=st.floats(0.05, 1.4),
    k_phi=st.floats(1e4, 1e7),
    k_c=st.floats(0.0, 1e5),
    shear_coeff_K=st.floats(1e-3, 0.1),
    bekker_n=st.floats(0.3, 2.0),
)


class TestBekkerPressure:
    def test_terrain1_hand_value(self):
        # sigma = (k_c/b + k_phi) * y^n evaluated directly
        expected = (0.0 / 0.3 + 2e6) * 0.05 ** 1.1
        assert bekker_pressure(TERRAIN_1, 0.3, 0.05) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(7.411e4, rel=1e-3)

    def test_zero_sinkage(self):
        assert bekker_pressure(TERRAIN_1, 0.3, 0.0) == 0.0
        assert bekker_pressure(TERRAIN_3, 0.5, 0.0) == 0.0

    def test_terrain3_hand_value(self):
        expected = (1e5 / 0.3 + 5e5) * 0.02 ** 0.7
        assert bekker_pressure(TERRAIN_3, 0.3, 0.02) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(5.389e4, rel=1e-3)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            bekker_pressure(TERRAIN_1, 0.3, -1e-9)
        with pytest.raises(ValueError):
            bekker_pressure(TERRAIN_1, 0.0, 0.01)

    @given(terrain_strategy, st.floats(1e-6, 0.5), st.floats(1e-6, 0.5))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_sinkage(self, terrain, y1, y2):
        lo, hi = sorted((y1, y2))
        if hi - lo < 1e-12:
            return
        assert bekker_pressure(terrain, 0.3, lo) < bekker_pressure(terrain, 0.3, hi)

    @given(terrain_strategy, st.floats(0.01, 0.4))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_stiffness(self, terrain, y):
        stiffer = make_terrain(k_phi=terrain.k_phi * 2, k_c=terrain.k_c,
                               bekker_n=terrain.bekker_n,
                               friction_angle=terrain.friction_angle,
                               shear_coeff_K=terrain.shear_coeff_K)
        assert bekker_pressure(stiffer, 0.3, y) > bekker_pressure(terrain, 0.3, y)


class TestStaticSinkage:
    def test_terrain1_load_and_depth(self):
        assert VEH.contact_pressure == pytest.approx(81750.0, rel=1e-12)
        y0 = static_sinkage(TERRAIN_1, VEH)
        assert y0 == pytest.approx(0.0547, rel=2e-3)

    def test_round_trip_through_pressure(self):
        for terrain in (TERRAIN_1, TERRAIN_2, TERRAIN_3):
            y0 = static_sinkage(terrain, VEH)
            p = bekker_pressure(terrain, VEH.tire_width_b, y0)
            assert p == pytest.approx(VEH.contact_pressure, rel=1e-9)

    def test_rigid_limit(self):
        y_soft = static_sinkage(TERRAIN_1, VEH)
        hard = make_terrain(k_phi=TERRAIN_1.k_phi * 100)
        assert static_sinkage(hard, VEH) < y_soft / 10

    def test_mass_scaling_exponent(self):
        heavy = VehicleParams(mass=VEH.mass * 2)
        ratio = static_sinkage(TERRAIN_1, heavy) / static_sinkage(TERRAIN_1, VEH)
        assert ratio == pytest.approx(2.0 ** (1.0 / TERRAIN_1.bekker_n), rel=1e-12)


class TestCompactionResistance:
    def test_terrain1_hand_value(self):
        total = compaction_resistance(TERRAIN_1, VEH, 0.0547)
        assert total == pytest.approx(2.55e3, rel=5e-3)

    def test_zero_sinkage(self):
        assert compaction_resistance(TERRAIN_1, VEH, 0.0) == 0.0

    def test_negative_sinkage_rejected(self):
        with pytest.raises(ValueError):
            compaction_resistance(TERRAIN_1, VEH, -0.01)

    def test_matches_quadrature_oracle(self):
        # independent oracle: numerically integrate b * sigma(y) dy per wheel
        rng = np.random.default_rng(7)
        for _ in range(50):
            terrain = make_terrain(
                k_phi=float(rng.uniform(1e5, 5e6)),
                k_c=float(rng.uniform(0, 1e5)),
                bekker_n=float(rng.uniform(0.4, 1.8)))
            y = float(rng.uniform(1e-3, 0.3))
            per_wheel, _ = quad(
                lambda s: VEH.tire_width_b * bekker_pressure(terrain, VEH.tire_width_b, s),
                0.0, y, epsabs=1e-12, epsrel=1e-12)
            got = compaction_resistance(terrain, VEH, y)
            assert got == pytest.approx(VEH.wheel_count * per_wheel, rel=1e-9)

    @given(terrain_strategy, st.floats(1e-4, 0.4), st.floats(1e-4, 0.4))
    @settings(max_examples=100, deadline=None)
    def test_strictly_increasing(self, terrain, y1, y2):
        lo, hi = sorted((y1, y2))
        if hi - lo < 1e-12:
            return
        assert (compaction_resistance(terrain, VEH, lo)
                < compaction_resistance(terrain, VEH, hi))


class TestTractionLimit:
    def test_terrain1_hand_value(self):
        # Janosi efficiency then Mohr-Coulomb strength over the patch area
        j = VEH.assumed_slip_is * VEH.patch_length_l
        eff = 1.0 - (TERRAIN_1.shear_coeff_K / j) * (1.0 - math.exp(-j / TERRAIN_1.shear_coeff_K))
        assert eff == pytest.approx(0.8013, rel=1e-3)
        f_max = traction_limit(TERRAIN_1, VEH)
        assert f_max == pytest.approx(
            eff * VEH.contact_area * VEH.contact_pressure * math.tan(TERRAIN_1.friction_angle),
            rel=1e-12)
        assert f_max == pytest.approx(1.134e4, rel=1e-3)

    def test_zero_strength(self):
        frictionless = make_terrain(friction_angle=1e-12, shear_cohesion_c=0.0)
        assert traction_limit(frictionless, VEH) == pytest.approx(0.0, abs=1e-3)

    def test_perfect_shear_limit(self):
        ideal = make_terrain(shear_coeff_K=1e-9)
        j = VEH.assumed_slip_is * VEH.patch_length_l
        eff = traction_limit(ideal, VEH) / (
            VEH.contact_area * VEH.contact_pressure * math.tan(ideal.friction_angle))
        assert eff > 0.999


class TestStep:
    def test_matched_constant_accel_closed_form(self):
        state = VehicleState(speed_v=5.0)
        inp = ControlInput(0.2)  # 1 m/s^2
        out = step(state, inp, VEH, Matched(), dt=0.5)
        assert out.s_x == pytest.approx(5 * 0.5 + 0.5 * 1.0 * 0.5 ** 2, rel=1e-12)
        assert out.speed_v == pytest.approx(5.5, rel=1e-12)
        assert out.sim_time == pytest.approx(0.5)

    def test_rest_is_equilibrium(self):
        state = VehicleState()
        for mode in (Matched(), Deformable(TERRAIN_1), Deformable(TERRAIN_3)):
            out = state
            for _ in range(100):
                out = step(out, ControlInput(0.0), VEH, mode)
            assert out.speed_v == 0.0
            assert out.s_x == 0.0
            assert out.s_y == 0.0

    def test_resistances_never_reverse(self):
        # rolling to a stop on soft soil must end exactly at rest
        state = VehicleState(speed_v=0.3, sim_time=100.0)
        mode = Deformable(TERRAIN_3)
        for _ in range(5000):
            state = step(state, ControlInput(0.0), VEH, mode)
        assert state.speed_v == 0.0

    def test_steady_state_matches_force_balance_oracle(self):
        # root-find the force balance independently, then simulate to it
        forces_cmd = VEH.mass * VEH.max_accel_scale * 1.0
        f_t = min(forces_cmd, traction_limit(TERRAIN_1, VEH))
        y0 = static_sinkage(TERRAIN_1, VEH)
        r_c = compaction_resistance(TERRAIN_1, VEH, y0)
        drag = VEH.damping_scale_chi * TERRAIN_1.damping * VEH.contact_area

        v_star = brentq(lambda v: f_t - r_c - drag * v, 0.0, 100.0)
        state = VehicleState()
        mode = Deformable(TERRAIN_1)
        for _ in range(500):  # ~49.5 s, about 9 drag time constants
            state = run_with_zoh(state, ControlInput(1.0), VEH, mode, 33)
        assert state.speed_v == pytest.approx(v_star, rel=1e-3)

    def test_settle_ramp_suppresses_early_traction(self):
        state = VehicleState()
        mode = Deformable(TERRAIN_1)
        v_early = step(state, ControlInput(1.0), VEH, mode, dt=0.1).speed_v
        assert v_early == 0.0  # ramped traction below compaction drag

    def test_traction_clamp_bounds_force(self):
        # top speed on terrain-2 is traction-limited, not command-limited
        f_max = traction_limit(TERRAIN_2, VEH)
        y0 = static_sinkage(TERRAIN_2, VEH)
        r_c = compaction_resistance(TERRAIN_2, VEH, y0)
        drag = VEH.damping_scale_chi * TERRAIN_2.damping * VEH.contact_area
        v_cap = (f_max - r_c) / drag
        state = VehicleState()
        mode = Deformable(TERRAIN_2)
        for _ in range(600):
            state = run_with_zoh(state, ControlInput(1.0), VEH, mode, 33)
        assert state.speed_v == pytest.approx(v_cap, rel=1e-3)
        assert state.speed_v < 12.6  # far below the unclamped command equilibrium

    def test_non_finite_input_faults(self):
        with pytest.raises(PlantFault):
            step(VehicleState(speed_v=float("nan")), ControlInput(0.0), VEH, Matched())

    def test_speed_never_negative_fuzz(self):
        rng = np.random.default_rng(3)
        state = VehicleState()
        mode = Deformable(TERRAIN_3)
        for _ in range(5000):
            inp = ControlInput(float(rng.uniform(-1, 1)),
                               float(rng.uniform(-0.05, 0.05)))
            state = step(state, inp, VEH, mode)
            assert state.speed_v >= 0.0
            assert abs(state.steering_theta) <= 0.57 + 1e-12

    def test_matched_curved_order4_convergence(self):
        # halving dt cuts the error ~16x against a fine-step reference
        inp = ControlInput(0.3, 0.03)
        start = VehicleState(speed_v=8.0)

        def integrate(dt, t_end=1.0):
            s = start
            for _ in range(int(round(t_end / dt))):
                s = step(s, inp, VEH, Matched(), dt)
            return np.array([s.s_x, s.s_y, s.heading_phi, s.steering_theta, s.speed_v])

        ref = integrate(1.0 / 4096)
        err_h = np.max(np.abs(integrate(0.1) - ref))
        err_h2 = np.max(np.abs(integrate(0.05) - ref))
        assert 12.0 < err_h / err_h2 < 20.0


class TestZoh:
    def test_total_time_advance(self):
        out = run_with_zoh(VehicleState(), ControlInput(0.5), VEH,
                           Deformable(TERRAIN_1), 33)
        assert out.sim_time == pytest.approx(33 * 3e-3, rel=1e-12)

    def test_single_substep_equals_step(self):
        state = VehicleState(speed_v=4.0, sim_time=5.0)
        inp = ControlInput(0.7, 0.01)
        a = run_with_zoh(state, inp, VEH, Deformable(TERRAIN_1), 1)
        b = step(state, inp, VEH, Deformable(TERRAIN_1))
        assert a == b

    def test_composition(self):
        state = VehicleState(speed_v=2.0)
        inp = ControlInput(0.9)
        mode = Deformable(TERRAIN_1)
        once = run_with_zoh(state, inp, VEH, mode, 66)
        half = run_with_zoh(state, inp, VEH, mode, 33)
        twice = run_with_zoh(half, inp, VEH, mode, 33)
        for field in ("s_x", "s_y", "heading_phi", "steering_theta", "speed_v", "sim_time"):
            assert getattr(once, field) == pytest.approx(getattr(twice, field), abs=1e-12)

    def test_determinism_bitwise(self):
        rng = np.random.default_rng(11)
        inputs = [ControlInput(float(rng.uniform(-1, 1))) for _ in range(20)]
        plant = Plant(VEH, Deformable(TERRAIN_2))

        def run():
            s = VehicleState()
            return [plant.run_zoh(s, i, 33) for i in inputs][-1]

        assert run() == run()

    def test_invalid_substeps(self):
        with pytest.raises(ValueError):
            run_with_zoh(VehicleState(), ControlInput(0.0), VEH, Matched(), 0)


class TestValidation:
    def test_terrain_invariants(self):
        with pytest.raises(ValueError):
            make_terrain(k_phi=-1.0)
        with pytest.raises(ValueError):
            make_terrain(bekker_n=0.0)
        with pytest.raises(ValueError):
            make_terrain(friction_angle=2.0)
        with pytest.raises(ValueError):
            make_terrain(k_c=-1.0)

    def test_control_input_invariants(self):
        with pytest.raises(ValueError):
            ControlInput(1.2)
        with pytest.raises(ValueError):
            ControlInput(0.0, 0.06)
        sat = ControlInput.saturated(3.0, -1.0)
        assert sat.throttle_a == 1.0
        assert sat.steer_rate_omega == -0.05

    def test_vehicle_invariants(self):
        with pytest.raises(ValueError):
            VehicleParams(mass=0.0)
        with pytest.raises(ValueError):
            VehicleParams(assumed_slip_is=0.0)
