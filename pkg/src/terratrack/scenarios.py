"""Scenario definitions: built-in terrain/profile combinations and the
JSON scenario file format (units explicit in key names, radians internal)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .terrain import TerrainParams, VehicleParams

BUILTIN_PATH_LENGTH = 1000.0  # m
CONSTANT_V_REF = 10.0         # m/s
VARYING_MEAN = 8.0            # m/s
VARYING_AMPLITUDE = 4.0       # m/s
VARYING_WAVELENGTH = 200.0    # m
EPISODE_STEPS = 300


class ScenarioError(ValueError):
    """Scenario file failed validation; message carries the field path."""


def _terrain(friction_deg, k_phi, k_c, elastic, shear_k, n, damping, cohesion):
    return TerrainParams(
        friction_angle=math.radians(friction_deg), k_phi=k_phi, k_c=k_c,
        elastic_stiffness=elastic, shear_coeff_K=shear_k, bekker_n=n,
        damping=damping, shear_cohesion_c=cohesion)


# Loose deformable sand / sand over stiff rocky base / soft cohesive clay.
TERRAIN_1 = _terrain(30.0, 2e6, 0.0, 2e8, 0.01, 1.1, 3e4, 0.0)
TERRAIN_2 = _terrain(20.0, 1e6, 1e2, 3e8, 0.005, 1.0, 3e4, 6000.0)
TERRAIN_3 = _terrain(14.0, 5e5, 1e5, 2e7, 0.02, 0.7, 5e4, 36000.0)

TERRAINS = {"1": TERRAIN_1, "2": TERRAIN_2, "3": TERRAIN_3}


@dataclass(frozen=True)
class ConstantProfile:
    v_ref: float = CONSTANT_V_REF


@dataclass(frozen=True)
class VaryingProfile:
    arc_length: tuple
    v_ref: tuple

    def __post_init__(self):
        if len(self.arc_length) != len(self.v_ref) or len(self.arc_length) < 2:
            raise ScenarioError("profile: arc_length and v_ref tables must align")


def varying_profile(length: float = BUILTIN_PATH_LENGTH, pitch: float = 2.0) -> VaryingProfile:
    """Position-parameterized sinusoidal speed reference sampled to a table."""
    n = int(length / pitch) + 1
    s = tuple(i * pitch for i in range(n))
    v = tuple(VARYING_MEAN + VARYING_AMPLITUDE
              * math.sin(2.0 * math.pi * si / VARYING_WAVELENGTH) for si in s)
    return VaryingProfile(s, v)


@dataclass(frozen=True)
class ControllerChoice:
    kind: str = "mpc"             # mpc | ac | ac2mpc
    checkpoint: str | None = None

    def __post_init__(self):
        if self.kind not in ("mpc", "ac", "ac2mpc"):
            raise ScenarioError(f"controller.kind: unknown kind {self.kind!r}")
        if self.kind != "mpc" and self.checkpoint is None:
            raise ScenarioError(f"controller.checkpoint: required for {self.kind}")


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    terrain: TerrainParams | None          # None = ideal matched plant
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    path_length: float = BUILTIN_PATH_LENGTH
    profile: ConstantProfile | VaryingProfile = field(default_factory=ConstantProfile)
    episode_steps: int = EPISODE_STEPS
    seed: int = 0
    controller: ControllerChoice = field(default_factory=ControllerChoice)

    def __post_init__(self):
        if self.episode_steps < 1:
            raise ScenarioError("episode_steps: must be >= 1")
        if self.path_length <= 0:
            raise ScenarioError("path.length_m: must be > 0")

    def reference_path(self):
        from .path import ReferencePath
        import numpy as np
        pts = np.array([[0.0, 0.0], [self.path_length, 0.0]])
        if isinstance(self.profile, ConstantProfile):
            return ReferencePath(pts, np.array([0.0, self.path_length]),
                                 np.array([self.profile.v_ref, self.profile.v_ref]))
        return ReferencePath(pts, np.asarray(self.profile.arc_length),
                             np.asarray(self.profile.v_ref))

    def plant_mode(self):
        from .terrain import Deformable, Matched
        return Matched() if self.terrain is None else Deformable(self.terrain)


BUILTIN_IDS = ("1A", "1B", "2A", "2B", "3A", "3B")


def builtin_scenario(scenario_id: str, controller: ControllerChoice | None = None,
                     seed: int = 0) -> ScenarioSpec:
    """The six named terrain/profile scenarios, plus 'C1' (matched plant)."""
    controller = controller or ControllerChoice()
    if scenario_id == "C1":
        return ScenarioSpec(id="C1", terrain=None, seed=seed, controller=controller)
    if scenario_id not in BUILTIN_IDS:
        raise ScenarioError(f"id: unknown built-in scenario {scenario_id!r}")
    terrain = TERRAINS[scenario_id[0]]
    if scenario_id.endswith("A"):
        profile = ConstantProfile()
    else:
        profile = varying_profile()
    return ScenarioSpec(id=scenario_id, terrain=terrain, profile=profile,
                        seed=seed, controller=controller)


# -- file format ------------------------------------------------------------

def _need(data: dict, key: str, ctx: str):
    if key not in data:
        raise ScenarioError(f"{ctx}{key}: missing")
    return data[key]


def _number(data: dict, key: str, ctx: str, minimum=None, strict=False):
    val = _need(data, key, ctx)
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        raise ScenarioError(f"{ctx}{key}: must be a number")
    if minimum is not None and (val <= minimum if strict else val < minimum):
        op = ">" if strict else ">="
        raise ScenarioError(f"{ctx}{key}: must be {op} {minimum}")
    return float(val)


def terrain_from_dict(data: dict, ctx: str = "terrain.") -> TerrainParams:
    try:
        return TerrainParams(
            friction_angle=math.radians(_number(data, "friction_angle_deg", ctx)),
            k_phi=_number(data, "k_phi_si", ctx, 0.0, strict=True),
            k_c=_number(data, "k_c_si", ctx, 0.0),
            elastic_stiffness=_number(data, "elastic_stiffness_pa_per_m", ctx, 0.0),
            shear_coeff_K=_number(data, "shear_coeff_k_m", ctx, 0.0, strict=True),
            bekker_n=_number(data, "bekker_n", ctx, 0.0, strict=True),
            damping=_number(data, "damping_pa_s_per_m", ctx, 0.0),
            shear_cohesion_c=_number(data, "shear_cohesion_pa", ctx, 0.0),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{ctx}: {exc}") from exc


def terrain_to_dict(t: TerrainParams) -> dict:
    return {
        "friction_angle_deg": math.degrees(t.friction_angle),
        "k_phi_si": t.k_phi, "k_c_si": t.k_c,
        "elastic_stiffness_pa_per_m": t.elastic_stiffness,
        "shear_coeff_k_m": t.shear_coeff_K, "bekker_n": t.bekker_n,
        "damping_pa_s_per_m": t.damping, "shear_cohesion_pa": t.shear_cohesion_c,
    }


def vehicle_from_dict(data: dict, ctx: str = "vehicle.") -> VehicleParams:
    try:
        return VehicleParams(
            mass=_number(data, "mass_kg", ctx, 0.0, strict=True),
            wheel_count=int(_number(data, "wheel_count", ctx, 1)),
            tire_width_b=_number(data, "tire_width_m", ctx, 0.0, strict=True),
            patch_length_l=_number(data, "patch_length_m", ctx, 0.0, strict=True),
            max_accel_scale=_number(data, "max_accel_scale_mps2", ctx, 0.0, strict=True),
            wheelbase_L=_number(data, "wheelbase_m", ctx, 0.0, strict=True),
            cg_to_rear_Lr=_number(data, "cg_to_rear_m", ctx, 0.0, strict=True),
            settle_time=_number(data, "settle_time_s", ctx, 0.0),
            damping_scale_chi=_number(data, "damping_scale_chi", ctx, 0.0),
            assumed_slip_is=_number(data, "assumed_slip", ctx, 0.0, strict=True),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{ctx}: {exc}") from exc


def vehicle_to_dict(v: VehicleParams) -> dict:
    return {
        "mass_kg": v.mass, "wheel_count": v.wheel_count,
        "tire_width_m": v.tire_width_b, "patch_length_m": v.patch_length_l,
        "max_accel_scale_mps2": v.max_accel_scale, "wheelbase_m": v.wheelbase_L,
        "cg_to_rear_m": v.cg_to_rear_Lr, "settle_time_s": v.settle_time,
        "damping_scale_chi": v.damping_scale_chi, "assumed_slip": v.assumed_slip_is,
    }


def scenario_from_dict(data: dict) -> ScenarioSpec:
    if not isinstance(data, dict):
        raise ScenarioError(": scenario file must hold a JSON object")
    sid = data.get("id", "custom")
    terrain_data = data.get("terrain")
    terrain = None if terrain_data is None else terrain_from_dict(terrain_data)
    vehicle = (vehicle_from_dict(data["vehicle"]) if "vehicle" in data
               else VehicleParams())

    path_data = data.get("path", {"kind": "straight", "length_m": BUILTIN_PATH_LENGTH})
    if path_data.get("kind") != "straight":
        raise ScenarioError("path.kind: only 'straight' is supported")
    length = _number(path_data, "length_m", "path.", 0.0, strict=True)

    prof_data = data.get("profile", {"kind": "constant", "v_ref_mps": CONSTANT_V_REF})
    kind = prof_data.get("kind")
    if kind == "constant":
        profile = ConstantProfile(_number(prof_data, "v_ref_mps", "profile.", 0.0))
    elif kind == "varying":
        s = _need(prof_data, "arc_length_m", "profile.")
        v = _need(prof_data, "v_ref_mps", "profile.")
        if (not isinstance(s, list) or not isinstance(v, list)
                or len(s) != len(v) or len(s) < 2):
            raise ScenarioError("profile: arc_length_m and v_ref_mps must be "
                                "equal-length lists of at least two entries")
        if any(b <= a for a, b in zip(s, s[1:])):
            raise ScenarioError("profile.arc_length_m: must be strictly increasing")
        if any(vi < 0 for vi in v):
            raise ScenarioError("profile.v_ref_mps: must be >= 0")
        profile = VaryingProfile(tuple(float(x) for x in s), tuple(float(x) for x in v))
    else:
        raise ScenarioError(f"profile.kind: unknown kind {kind!r}")

    ctrl_data = data.get("controller", {"kind": "mpc"})
    controller = ControllerChoice(ctrl_data.get("kind", "mpc"),
                                  ctrl_data.get("checkpoint"))
    steps = data.get("episode_steps", EPISODE_STEPS)
    if not isinstance(steps, int) or steps < 1:
        raise ScenarioError("episode_steps: must be an integer >= 1")
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ScenarioError("seed: must be an integer")
    return ScenarioSpec(id=sid, terrain=terrain, vehicle=vehicle, path_length=length,
                        profile=profile, episode_steps=steps, seed=seed,
                        controller=controller)


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    if isinstance(spec.profile, ConstantProfile):
        profile = {"kind": "constant", "v_ref_mps": spec.profile.v_ref}
    else:
        profile = {"kind": "varying", "arc_length_m": list(spec.profile.arc_length),
                   "v_ref_mps": list(spec.profile.v_ref)}
    ctrl = {"kind": spec.controller.kind}
    if spec.controller.checkpoint is not None:
        ctrl["checkpoint"] = spec.controller.checkpoint
    return {
        "id": spec.id,
        "terrain": None if spec.terrain is None else terrain_to_dict(spec.terrain),
        "vehicle": vehicle_to_dict(spec.vehicle),
        "path": {"kind": "straight", "length_m": spec.path_length},
        "profile": profile,
        "episode_steps": spec.episode_steps,
        "seed": spec.seed,
        "controller": ctrl,
    }


def load_scenario(path_or_id: str) -> ScenarioSpec:
    """Built-in scenario by id, or a validated scenario loaded from a file."""
    if path_or_id in BUILTIN_IDS or path_or_id == "C1":
        return builtin_scenario(path_or_id)
    try:
        with open(path_or_id) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot open scenario {path_or_id!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path_or_id}: not valid JSON ({exc})") from exc
    return scenario_from_dict(data)


def save_scenario(spec: ScenarioSpec, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(spec), fh, indent=1)
        fh.write("\n")
