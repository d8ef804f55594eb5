"""Planar vehicle plant with a quasi-static deformable-soil longitudinal force balance.

The lateral/heading motion is the kinematic bicycle; the longitudinal channel
adds pressure-sinkage contact forces (compaction drag, a Mohr-Coulomb/Janosi
traction ceiling, and a linear velocity drag) plus a start-up traction ramp
that mimics the contact settling seen on soft soil.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

G = 9.81  # m/s^2

# Steering column limits, shared with the tracking controller.
STEERING_BOUND = 0.57  # rad
STEER_RATE_BOUND = 0.05  # rad/s


class PlantFault(RuntimeError):
    """Plant driven with a non-finite state or input."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


@dataclass(frozen=True)
class TerrainParams:
    """Soil constants for the pressure-sinkage contact model.

    ``elastic_stiffness`` is carried for scenario round-trips but does not
    enter the quasi-static force balance (it governs unloading/rebound,
    which this plant omits).
    """

    friction_angle: float      # rad, Mohr-Coulomb friction limit
    k_phi: float               # soil stiffness modulus
    k_c: float                 # cohesive modulus
    elastic_stiffness: float   # Pa/m
    shear_coeff_K: float       # m
    bekker_n: float            # sinkage exponent
    damping: float             # Pa*s/m
    shear_cohesion_c: float = 0.0  # Pa, shear (not Bekker) cohesion

    def __post_init__(self):
        _require(self.k_phi > 0, "k_phi must be > 0")
        _require(self.bekker_n > 0, "bekker_n must be > 0")
        _require(self.shear_coeff_K > 0, "shear_coeff_K must be > 0")
        _require(0 < self.friction_angle < math.pi / 2,
                 "friction_angle must be in (0, pi/2) radians")
        _require(self.k_c >= 0, "k_c must be >= 0")
        _require(self.shear_cohesion_c >= 0, "shear_cohesion_c must be >= 0")
        _require(self.damping >= 0, "damping must be >= 0")


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 2500.0           # kg
    wheel_count: int = 4
    tire_width_b: float = 0.3      # m
    patch_length_l: float = 0.25   # m
    max_accel_scale: float = 5.0   # m/s^2 per unit throttle
    wheelbase_L: float = 2.75      # m
    cg_to_rear_Lr: float = 1.75    # m
    settle_time: float = 3.0       # s, traction ramp duration from episode start
    damping_scale_chi: float = 0.05
    assumed_slip_is: float = 0.2

    def __post_init__(self):
        _require(self.mass > 0, "mass must be > 0")
        _require(self.tire_width_b > 0, "tire_width_b must be > 0")
        _require(self.patch_length_l > 0, "patch_length_l must be > 0")
        _require(self.wheel_count >= 1, "wheel_count must be >= 1")
        _require(0 < self.assumed_slip_is <= 1, "assumed_slip_is must be in (0, 1]")
        _require(self.settle_time >= 0, "settle_time must be >= 0")

    @property
    def contact_area(self) -> float:
        return self.wheel_count * self.tire_width_b * self.patch_length_l

    @property
    def contact_pressure(self) -> float:
        # per-wheel static load spread over one contact patch
        load = self.mass * G / self.wheel_count
        return load / (self.tire_width_b * self.patch_length_l)


@dataclass(frozen=True)
class VehicleState:
    s_x: float = 0.0           # m
    s_y: float = 0.0           # m
    heading_phi: float = 0.0   # rad
    steering_theta: float = 0.0  # rad
    speed_v: float = 0.0       # m/s, never negative
    sim_time: float = 0.0      # s


@dataclass(frozen=True)
class ControlInput:
    throttle_a: float          # normalized, |a| <= 1
    steer_rate_omega: float = 0.0  # rad/s, |omega| <= 0.05

    def __post_init__(self):
        _require(abs(self.throttle_a) <= 1.0, "|throttle_a| must be <= 1")
        _require(abs(self.steer_rate_omega) <= STEER_RATE_BOUND,
                 "|steer_rate_omega| must be <= 0.05")

    @classmethod
    def saturated(cls, throttle_a: float, steer_rate_omega: float = 0.0) -> "ControlInput":
        a = min(1.0, max(-1.0, throttle_a))
        w = min(STEER_RATE_BOUND, max(-STEER_RATE_BOUND, steer_rate_omega))
        return cls(a, w)


@dataclass(frozen=True)
class Matched:
    """Ideal plant: the bicycle model with no terrain forces."""


@dataclass(frozen=True)
class Deformable:
    terrain: TerrainParams


PlantMode = Matched | Deformable


def bekker_pressure(terrain: TerrainParams, b: float, sinkage_y: float) -> float:
    """Contact pressure (Pa) at sinkage y for contact width b."""
    if b <= 0:
        raise ValueError("contact width b must be > 0")
    if sinkage_y < 0:
        raise ValueError("sinkage must be >= 0")
    if sinkage_y == 0.0:
        return 0.0
    return (terrain.k_c / b + terrain.k_phi) * sinkage_y ** terrain.bekker_n


def static_sinkage(terrain: TerrainParams, vehicle: VehicleParams) -> float:
    """Quasi-static sinkage (m): pressure-sinkage law inverted at the wheel load."""
    p = vehicle.contact_pressure
    k = terrain.k_c / vehicle.tire_width_b + terrain.k_phi
    return (p / k) ** (1.0 / terrain.bekker_n)


def compaction_resistance(terrain: TerrainParams, vehicle: VehicleParams,
                          sinkage_y: float) -> float:
    """Total compaction drag (N): work of pressing soil to depth y, all wheels."""
    if sinkage_y < 0:
        raise ValueError("sinkage must be >= 0")
    k = terrain.k_c / vehicle.tire_width_b + terrain.k_phi
    n = terrain.bekker_n
    per_wheel = vehicle.tire_width_b * k * sinkage_y ** (n + 1.0) / (n + 1.0)
    return vehicle.wheel_count * per_wheel


def traction_limit(terrain: TerrainParams, vehicle: VehicleParams) -> float:
    """Maximum transmissible longitudinal force (N), Mohr-Coulomb shear strength
    over the contact area scaled by the Janosi shear efficiency at the assumed slip."""
    j = vehicle.assumed_slip_is * vehicle.patch_length_l  # shear displacement
    K = terrain.shear_coeff_K
    eff = 1.0 - (K / j) * (1.0 - math.exp(-j / K))
    shear_strength = (terrain.shear_cohesion_c
                      + vehicle.contact_pressure * math.tan(terrain.friction_angle))
    return eff * vehicle.contact_area * shear_strength


@dataclass(frozen=True)
class _SoilForces:
    # per-episode constants of the quasi-static model
    traction_max: float   # N
    compaction: float     # N, total over wheels
    drag_coeff: float     # N per (m/s)


def _soil_forces(terrain: TerrainParams, vehicle: VehicleParams) -> _SoilForces:
    y0 = static_sinkage(terrain, vehicle)
    return _SoilForces(
        traction_max=traction_limit(terrain, vehicle),
        compaction=compaction_resistance(terrain, vehicle, y0),
        drag_coeff=vehicle.damping_scale_chi * terrain.damping * vehicle.contact_area,
    )


def _step_scalar(state: VehicleState, inp: ControlInput, vehicle: VehicleParams,
                 forces: _SoilForces | None, dt: float) -> VehicleState:
    """One RK4 step of the planar kinematics + longitudinal force balance."""
    if not all(map(math.isfinite,
                   (state.s_x, state.s_y, state.heading_phi, state.steering_theta,
                    state.speed_v, state.sim_time, inp.throttle_a, inp.steer_rate_omega))):
        raise PlantFault("non-finite state or input")

    m = vehicle.mass
    L = vehicle.wheelbase_L
    lr_ratio = vehicle.cg_to_rear_Lr / L
    f_cmd = m * vehicle.max_accel_scale * inp.throttle_a
    omega = inp.steer_rate_omega
    t0 = state.sim_time

    if forces is None:
        f_t = f_cmd
    else:
        f_t = min(forces.traction_max, max(-forces.traction_max, f_cmd))

    def rhs(t, sx, sy, phi, theta, v):
        beta = math.atan(lr_ratio * math.tan(theta))
        if forces is None:
            accel = f_t / m
        else:
            if vehicle.settle_time > 0.0:
                eta = min(1.0, t / vehicle.settle_time)
            else:
                eta = 1.0
            f_net = eta * f_t - forces.compaction - forces.drag_coeff * v
            # resistances hold the vehicle at rest instead of reversing it
            if v <= 0.0 and f_net < 0.0:
                accel = 0.0
            else:
                accel = f_net / m
        return (v * math.cos(phi + beta),
                v * math.sin(phi + beta),
                v / L * math.tan(beta),
                omega,
                accel)

    sx, sy, phi, theta, v = (state.s_x, state.s_y, state.heading_phi,
                             state.steering_theta, state.speed_v)
    k1 = rhs(t0, sx, sy, phi, theta, v)
    h2 = dt / 2.0
    k2 = rhs(t0 + h2, sx + h2 * k1[0], sy + h2 * k1[1], phi + h2 * k1[2],
             theta + h2 * k1[3], v + h2 * k1[4])
    k3 = rhs(t0 + h2, sx + h2 * k2[0], sy + h2 * k2[1], phi + h2 * k2[2],
             theta + h2 * k2[3], v + h2 * k2[4])
    k4 = rhs(t0 + dt, sx + dt * k3[0], sy + dt * k3[1], phi + dt * k3[2],
             theta + dt * k3[3], v + dt * k3[4])
    w = dt / 6.0
    new_v = v + w * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
    new_theta = theta + w * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
    return VehicleState(
        s_x=sx + w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        s_y=sy + w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
        heading_phi=phi + w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
        steering_theta=min(STEERING_BOUND, max(-STEERING_BOUND, new_theta)),
        speed_v=max(0.0, new_v),
        sim_time=t0 + dt,
    )


def step(state: VehicleState, inp: ControlInput, vehicle: VehicleParams,
         mode: PlantMode, dt: float = 3e-3) -> VehicleState:
    """Advance the plant by one simulation step of length dt."""
    forces = None if isinstance(mode, Matched) else _soil_forces(mode.terrain, vehicle)
    return _step_scalar(state, inp, vehicle, forces, dt)


def run_with_zoh(state: VehicleState, inp: ControlInput, vehicle: VehicleParams,
                 mode: PlantMode, substeps: int, dt: float = 3e-3) -> VehicleState:
    """Hold one control input over `substeps` simulation steps."""
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    forces = None if isinstance(mode, Matched) else _soil_forces(mode.terrain, vehicle)
    for _ in range(substeps):
        state = _step_scalar(state, inp, vehicle, forces, dt)
    return state


class Plant:
    """A plant instance with per-episode soil constants precomputed."""

    def __init__(self, vehicle: VehicleParams, mode: PlantMode, dt: float = 3e-3):
        self.vehicle = vehicle
        self.mode = mode
        self.dt = dt
        self._forces = (None if isinstance(mode, Matched)
                        else _soil_forces(mode.terrain, vehicle))

    def step(self, state: VehicleState, inp: ControlInput) -> VehicleState:
        return _step_scalar(state, inp, self.vehicle, self._forces, self.dt)

    def run_zoh(self, state: VehicleState, inp: ControlInput, substeps: int) -> VehicleState:
        for _ in range(substeps):
            state = _step_scalar(state, inp, self.vehicle, self._forces, self.dt)
        return state
