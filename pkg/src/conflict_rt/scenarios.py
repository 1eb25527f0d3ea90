"""Synthetic conflict-scenario generators.

Three families are covered: rear-end lead-vehicle braking (variants S1,
S2, S3), lateral cut-in from an adjacent lane, and a crossing-path
conflict at an intersection. All kinematics are integrated analytically
(piecewise-quadratic positions), so generated traces carry no solver
error; rear-end traces are truncated at the moment of contact since the
subject vehicle never performs an evasive maneuver here.

Coordinates are lane-relative throughout: x runs along the (possibly
curved) lane centerline, y is the lateral offset from it, heading is
measured from the local road tangent. A curved road is therefore a rigid
reparameterization of the same motion; lane_to_global/global_to_lane
convert to world coordinates for a constant-curvature centerline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import SpecInvalid
from .trace import (AgentStates, ContextFlags, KinematicTrace, ScenarioKind,
                    DEFAULT_DT, MAX_ABS_ACCEL)

# Built-in profile constants (not part of the spec surface)
S2_LATERAL_SPEED = 0.5        # m/s, lead vehicle drifting out of lane
CROSSING_STOP_MARGIN = 0.5    # m short of the boundary for stop_then_go
CROSSING_STOP_DWELL = 1.0     # s at standstill before going
CROSSING_GO_SPEED = 1.5       # m/s target speed when going again
CROSSING_GO_ACCEL = 1.5       # m/s^2


@dataclass(frozen=True)
class EventContext:
    """Event-level annotator judgment inputs attached to generated traces."""

    brake_light_surprising: bool = True
    expected_slowdown_context: bool = False
    eyes_off_path: bool = False
    impaired: bool = False

    def as_dict(self) -> dict:
        return {
            "brake_light_surprising": self.brake_light_surprising,
            "expected_slowdown_context": self.expected_slowdown_context,
            "eyes_off_path": self.eyes_off_path,
            "impaired": self.impaired,
        }


@dataclass(frozen=True)
class RearEndSpec:
    """Lead-vehicle braking scenario.

    The lead vehicle holds lv_speed until brake_onset_t, then decelerates
    at a constant lv_decel until standstill; lv_decel = 0 means it never
    brakes. initial_time_gap is the time gap at the moment braking starts
    (how such gaps are reported for lead-vehicle braking studies), so the
    bumper-to-bumper gap equals initial_time_gap * sv_speed at
    brake_onset_t; with equal approach speeds or a zero onset time that
    is also the gap at t = 0.
    """

    sv_speed: float                 # m/s
    lv_speed: float                 # m/s
    initial_time_gap: float         # s
    lv_decel: float                 # m/s^2, >= 0, applied from brake_onset_t
    brake_onset_t: float = 2.0      # s
    lv_width: float = 1.8           # m (passenger car; ~2.5 for a truck)
    duration: float = 15.0          # s
    dt: float = DEFAULT_DT
    context: EventContext = field(default_factory=EventContext)

    def check(self):
        if self.sv_speed < 0 or self.lv_speed < 0:
            raise SpecInvalid("speeds must be >= 0")
        if not 0 <= self.lv_decel <= MAX_ABS_ACCEL:
            raise SpecInvalid(
                f"lv_decel must be within [0, {MAX_ABS_ACCEL}]: {self.lv_decel}")
        if not self.initial_time_gap * self.sv_speed > 0:
            raise SpecInvalid("initial gap (time gap * SV speed) must be > 0")
        if self.lv_width <= 0:
            raise SpecInvalid("lv_width must be > 0")
        if self.dt <= 0 or self.duration <= 0:
            raise SpecInvalid("dt and duration must be > 0")
        if self.brake_onset_t < 0:
            raise SpecInvalid("brake_onset_t must be >= 0")


@dataclass(frozen=True)
class CutInSpec:
    """Adjacent-lane vehicle cutting in front of the subject vehicle."""

    sv_speed: float                     # m/s
    pov_speed: float                    # m/s
    initial_longitudinal_gap: float     # m
    lateral_offset: float = 3.5         # m, adjacent to SV lane center
    lateral_onset_t: float = 5.0        # s
    lateral_speed: float = 1.0          # m/s toward the SV lane
    lane_half_width: float = 1.75       # m
    road_curvature: float = 0.0         # 1/m, 0 = straight
    duration: float = 12.0              # s
    dt: float = DEFAULT_DT
    context: EventContext = field(default_factory=EventContext)

    def check(self):
        if self.sv_speed < 0 or self.pov_speed < 0:
            raise SpecInvalid("speeds must be >= 0")
        if self.lateral_speed <= 0:
            raise SpecInvalid("lateral_speed must be > 0 for a conflict")
        if self.lane_half_width <= 0:
            raise SpecInvalid("lane_half_width must be > 0")
        if self.lateral_offset < self.lane_half_width:
            raise SpecInvalid("POV must start outside the SV lane "
                              "(lateral_offset >= lane_half_width)")
        if self.initial_longitudinal_gap <= 0:
            raise SpecInvalid("initial_longitudinal_gap must be > 0")
        if self.dt <= 0 or self.duration <= 0:
            raise SpecInvalid("dt and duration must be > 0")
        if self.lateral_onset_t < 0:
            raise SpecInvalid("lateral_onset_t must be >= 0")


class CrossingProfile(str, Enum):
    NONE = "none"                    # constant speed through the boundary
    COMFORTABLE = "comfortable"      # stops exactly at the boundary
    STOP_THEN_GO = "stop_then_go"    # stops short, then crosses


@dataclass(frozen=True)
class CrossingSpec:
    """Perpendicular crossing-path conflict.

    The POV approaches the SV's lane boundary (a lateral line at
    reference_boundary) from the positive-y side and, depending on the
    profile, crosses without slowing, stops exactly at the boundary, or
    stops just short and then creeps across. The POV is placed
    longitudinally so the SV reaches the crossing point at about the
    constant-speed boundary-arrival time.
    """

    sv_speed: float                           # m/s
    pov_approach_speed: float                 # m/s
    pov_start_distance_to_boundary: float     # m
    pov_decel_profile: CrossingProfile = CrossingProfile.NONE
    reference_boundary: float = 1.75          # m, lateral line position
    occlusion_interval: tuple[float, float] | None = None
    duration: float = 10.0                    # s
    dt: float = DEFAULT_DT
    context: EventContext = field(default_factory=EventContext)

    def check(self):
        if self.pov_start_distance_to_boundary <= 0:
            raise SpecInvalid("pov_start_distance_to_boundary must be > 0")
        if self.sv_speed < 0 or self.pov_approach_speed < 0:
            raise SpecInvalid("speeds must be >= 0")
        if self.dt <= 0 or self.duration <= 0:
            raise SpecInvalid("dt and duration must be > 0")
        if self.occlusion_interval is not None:
            a, b = self.occlusion_interval
            if not a < b:
                raise SpecInvalid("occlusion_interval must be (start, end) "
                                  "with start < end")


def _time_grid(duration: float, dt: float) -> np.ndarray:
    n = int(np.floor(duration / dt + 1e-9)) + 1
    return dt * np.arange(n)


def _braking_profile(t: np.ndarray, v0: float, decel: float, onset: float):
    """Closed-form speed/position/acceleration for brake-to-standstill.

    Position is exact (piecewise quadratic): pre-onset cruise, constant
    deceleration, standstill.
    """
    if decel <= 0 or v0 <= 0:
        return np.full_like(t, v0), v0 * t, np.zeros_like(t)
    t_stop = onset + v0 / decel
    tb = np.clip(t - onset, 0.0, v0 / decel)
    v = np.where(t < onset, v0, np.maximum(v0 - decel * (t - onset), 0.0))
    x = v0 * np.minimum(t, onset) + v0 * tb - 0.5 * decel * tb ** 2
    a = np.where((t >= onset) & (t < t_stop), -decel, 0.0)
    return v, x, a


def _truncate_at_contact(gap: np.ndarray) -> int:
    """Number of leading samples with positive gap."""
    hit = np.flatnonzero(gap <= 0)
    return int(hit[0]) if hit.size else len(gap)


def gen_rear_end(spec: RearEndSpec, variant: ScenarioKind | str = "S1"
                 ) -> KinematicTrace:
    """Generate an S1/S2/S3 rear-end conflict trace."""
    spec.check()
    variant = ScenarioKind(variant)
    if variant not in (ScenarioKind.S1, ScenarioKind.S2, ScenarioKind.S3):
        raise SpecInvalid(f"not a rear-end variant: {variant}")
    t = _time_grid(spec.duration, spec.dt)

    sv_x = spec.sv_speed * t
    braking_happens = spec.lv_decel > 0 and spec.lv_speed > 0
    # anchor the gap at braking onset; before it both speeds are constant
    anchor_t = spec.brake_onset_t if braking_happens else 0.0
    gap0 = spec.initial_time_gap * spec.sv_speed \
        + (spec.sv_speed - spec.lv_speed) * anchor_t
    if gap0 <= 0:
        raise SpecInvalid("vehicles would be in contact before braking "
                          "onset; shorten brake_onset_t or widen the gap")
    lv_v, lv_travel, lv_a = _braking_profile(
        t, spec.lv_speed, spec.lv_decel, spec.brake_onset_t)
    lv_x = gap0 + lv_travel
    brake_light = (t >= spec.brake_onset_t) if braking_happens \
        else np.zeros_like(t, dtype=bool)

    lv_y = np.zeros_like(t)
    heading = np.zeros_like(t)
    speed = lv_v
    if variant is ScenarioKind.S2 and braking_happens:
        # drifting out of the lane while braking; the turn never completes
        # because the vehicle stops first
        t_stop = spec.brake_onset_t + spec.lv_speed / spec.lv_decel
        moving = np.clip(t, spec.brake_onset_t, t_stop) - spec.brake_onset_t
        lv_y = S2_LATERAL_SPEED * moving
        lat_v = np.where((t >= spec.brake_onset_t) & (t < t_stop),
                         S2_LATERAL_SPEED, 0.0)
        heading = np.arctan2(lat_v, lv_v)
        speed = np.hypot(lv_v, lat_v)

    keep = _truncate_at_contact(lv_x - sv_x)
    if keep < 2:
        raise SpecInvalid("vehicles are in contact within the first sample")
    sl = slice(0, keep)

    n = keep
    flags = ContextFlags(brake_light_on=brake_light[sl],
                         occluded=np.zeros(n, bool),
                         **spec.context.as_dict())
    return KinematicTrace(
        dt=spec.dt, t0=0.0,
        sv=AgentStates.from_arrays(sv_x[sl], np.zeros(n),
                                   np.full(n, spec.sv_speed), np.zeros(n)),
        pov=AgentStates.from_arrays(lv_x[sl], lv_y[sl], speed[sl], lv_a[sl],
                                    heading[sl]),
        pov_width=spec.lv_width, flags=flags, scenario_kind=variant)


def gen_cut_in(spec: CutInSpec) -> KinematicTrace:
    """Generate a lateral cut-in trace (lane-relative coordinates).

    The POV holds its lane until lateral_onset_t, then moves toward the
    SV lane center at constant lateral_speed and settles there. Because
    positions are stored relative to the lane centerline, the same
    relative motion on a curved road (road_curvature != 0) produces an
    identical trace; the curvature only matters to consumers that map
    back to world coordinates.
    """
    spec.check()
    t = _time_grid(spec.duration, spec.dt)

    sv_x = spec.sv_speed * t
    pov_x = spec.initial_longitudinal_gap + spec.pov_speed * t

    travel_needed = spec.lateral_offset                      # to lane center
    t_settle = spec.lateral_onset_t + travel_needed / spec.lateral_speed
    moved = spec.lateral_speed * (
        np.clip(t, spec.lateral_onset_t, t_settle) - spec.lateral_onset_t)
    pov_y = spec.lateral_offset - moved
    lat_v = np.where((t >= spec.lateral_onset_t) & (t < t_settle),
                     -spec.lateral_speed, 0.0)
    heading = np.arctan2(lat_v, spec.pov_speed)
    speed = np.hypot(spec.pov_speed, lat_v)

    keep = _truncate_at_contact(pov_x - sv_x)
    if keep < 2:
        raise SpecInvalid("vehicles are in contact within the first sample")
    sl = slice(0, keep)
    n = keep

    flags = ContextFlags.quiet(n, **spec.context.as_dict())
    return KinematicTrace(
        dt=spec.dt, t0=0.0,
        sv=AgentStates.from_arrays(sv_x[sl], np.zeros(n),
                                   np.full(n, spec.sv_speed), np.zeros(n)),
        pov=AgentStates.from_arrays(pov_x[sl], pov_y[sl], speed[sl],
                                    np.zeros(n), heading[sl]),
        pov_width=1.8, flags=flags, scenario_kind=ScenarioKind.CUT_IN)


def _crossing_distance_profile(spec: CrossingSpec, t: np.ndarray):
    """Distance above the boundary D(t) (negative once crossed), speed, accel."""
    v0 = spec.pov_approach_speed
    d0 = spec.pov_start_distance_to_boundary
    profile = CrossingProfile(spec.pov_decel_profile)

    if profile is CrossingProfile.NONE:
        return d0 - v0 * t, np.full_like(t, v0), np.zeros_like(t)

    stop_at = 0.0 if profile is CrossingProfile.COMFORTABLE \
        else CROSSING_STOP_MARGIN
    brake_dist = d0 - stop_at
    if brake_dist <= 0:
        raise SpecInvalid("POV starts closer than the stopping point")
    decel = v0 ** 2 / (2.0 * brake_dist)
    if decel > 3.0 + 1e-9:
        raise SpecInvalid(
            f"profile needs {decel:.2f} m/s^2 > 3 m/s^2 comfortable limit")
    t_stop = v0 / decel if decel > 0 else np.inf

    v, travel, a = _braking_profile(t, v0, decel, 0.0)
    dist = d0 - travel

    if profile is CrossingProfile.STOP_THEN_GO and np.isfinite(t_stop):
        t_go = t_stop + CROSSING_STOP_DWELL
        t_cruise = t_go + CROSSING_GO_SPEED / CROSSING_GO_ACCEL
        tg = np.clip(t - t_go, 0.0, CROSSING_GO_SPEED / CROSSING_GO_ACCEL)
        go_travel = 0.5 * CROSSING_GO_ACCEL * tg ** 2 \
            + CROSSING_GO_SPEED * np.maximum(t - t_cruise, 0.0)
        going = t >= t_go
        v = np.where(going, np.minimum(CROSSING_GO_ACCEL * (t - t_go),
                                       CROSSING_GO_SPEED), v)
        a = np.where(going & (t < t_cruise), CROSSING_GO_ACCEL, a)
        dist = dist - go_travel
    return dist, v, a


def gen_crossing(spec: CrossingSpec) -> KinematicTrace:
    """Generate a perpendicular crossing-path trace."""
    spec.check()
    t = _time_grid(spec.duration, spec.dt)

    dist, pov_v, pov_a = _crossing_distance_profile(spec, t)
    pov_y = spec.reference_boundary + dist
    # place the conflict point where the SV arrives as the POV would cross
    v0 = spec.pov_approach_speed
    t_cross_est = spec.pov_start_distance_to_boundary / v0 if v0 > 0 \
        else spec.duration / 2.0
    pov_x = np.full_like(t, spec.sv_speed * t_cross_est)

    n = len(t)
    occluded = np.zeros(n, bool)
    if spec.occlusion_interval is not None:
        a, b = spec.occlusion_interval
        occluded = (t >= a) & (t <= b)

    flags = ContextFlags(brake_light_on=np.zeros(n, bool), occluded=occluded,
                         **spec.context.as_dict())
    return KinematicTrace(
        dt=spec.dt, t0=0.0,
        sv=AgentStates.from_arrays(spec.sv_speed * t, np.zeros(n),
                                   np.full(n, spec.sv_speed), np.zeros(n)),
        pov=AgentStates.from_arrays(pov_x, pov_y, pov_v, pov_a,
                                    np.full(n, -np.pi / 2)),
        pov_width=1.8, flags=flags,
        scenario_kind=ScenarioKind.CROSSING_PATH)


def lane_to_global(s, d, curvature: float):
    """Map lane coordinates (arc length s, lateral offset d) to world XY.

    The centerline is a constant-curvature arc through the origin with
    initial tangent +x; curvature > 0 bends left. curvature = 0 is the
    identity.
    """
    s = np.asarray(s, float)
    d = np.asarray(d, float)
    if curvature == 0.0:
        return s.copy(), d.copy()
    radius = 1.0 / curvature
    return ((radius - d) * np.sin(curvature * s),
            radius - (radius - d) * np.cos(curvature * s))


def global_to_lane(x, y, curvature: float):
    """Inverse of lane_to_global for the same constant-curvature arc.

    Valid while the lateral offset stays within the turning radius.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if curvature == 0.0:
        return x.copy(), y.copy()
    radius = 1.0 / curvature
    sgn = 1.0 if radius > 0 else -1.0
    d = radius - sgn * np.hypot(x, radius - y)
    s = np.arctan2(sgn * x, sgn * (radius - y)) / curvature
    return s, d


_REAR_END_KINDS = {"S1": ScenarioKind.S1, "S2": ScenarioKind.S2,
                   "S3": ScenarioKind.S3}


@dataclass(frozen=True)
class ScenarioFile:
    """A parsed scenario spec file: kind, optional rear-end variant, spec."""

    kind: str
    spec: RearEndSpec | CutInSpec | CrossingSpec
    variant: str | None = None
    name: str = "scenario"

    def generate(self) -> KinematicTrace:
        if self.kind == "rear_end":
            return gen_rear_end(self.spec, self.variant or "S1")
        if self.kind == "cut_in":
            return gen_cut_in(self.spec)
        if self.kind == "crossing":
            return gen_crossing(self.spec)
        raise SpecInvalid(f"unknown scenario kind {self.kind!r}")


def load_scenario_spec(path) -> ScenarioFile:
    """Read a scenario spec JSON file.

    Expected shape: {"kind": "rear_end" | "cut_in" | "crossing",
    "variant": "S1" (rear_end only), "context": {...}, <spec fields>}.
    """
    path = Path(path)
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict) or "kind" not in raw:
        raise SpecInvalid(f"{path.name}: expected an object with a 'kind'")
    kind = raw.pop("kind")
    variant = raw.pop("variant", None)
    context = EventContext(**raw.pop("context", {}))
    cls = {"rear_end": RearEndSpec, "cut_in": CutInSpec,
           "crossing": CrossingSpec}.get(kind)
    if cls is None:
        raise SpecInvalid(f"{path.name}: unknown scenario kind {kind!r}")
    if kind == "rear_end" and variant not in _REAR_END_KINDS:
        raise SpecInvalid(f"{path.name}: rear_end requires variant S1/S2/S3")
    if kind == "crossing" and "occlusion_interval" in raw \
            and raw["occlusion_interval"] is not None:
        raw["occlusion_interval"] = tuple(raw["occlusion_interval"])
    try:
        spec = cls(context=context, **raw)
    except TypeError as exc:
        raise SpecInvalid(f"{path.name}: {exc}") from None
    spec.check()
    return ScenarioFile(kind=kind, spec=spec, variant=variant, name=path.stem)
