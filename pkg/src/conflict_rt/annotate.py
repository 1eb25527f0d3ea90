"""Heuristic stimulus annotation: T1, T2 and ramp-up time.

T1 is the first observable evidence that violates the driver's prior
belief (scenario-specific rules below); T2 marks the point where the
updated belief is certain, operationalized for rear-end conflicts as
looming reaching 0.05 rad/s. RUT = T2 - T1 proxies the rate at which the
surprising evidence arrives.

Scenario rules:
  S1   earlier of a surprising brake-light onset and the first surprising
       lead-vehicle deceleration that is visible (looming >= 0.005 rad/s).
  S2   as S1, plus the lead vehicle coming to a complete stop.
  S3   first visible closing, i.e. looming >= 0.005 rad/s.
  CutIn         onset of lateral motion toward the SV lane (straight road)
                or of heading deviation from the road tangent (curved);
                T2 = start of the SV-lane boundary crossing.
  CrossingPath  earliest of: a near-boundary standing start reaching
                1 m/s, entry within 1 m of the boundary without slowing,
                required deceleration to stop short exceeding 3 m/s^2, or
                appearing from occlusion with any of those already true;
                T2 = boundary crossing (or occlusion exit if crossed
                while hidden).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (NoConflictDetected, NonPositiveDistance,
                     ScenarioUnknown, WindowTooShort)
from .looming import LoomingSignal, first_crossing
from .trace import KinematicTrace, ScenarioKind


class T1Rationale(str, Enum):
    SURPRISING_BRAKE_LIGHT = "SurprisingBrakeLight"
    SURPRISING_DECEL_VISIBLE = "SurprisingDecelVisible"
    SURPRISING_LOOMING = "SurprisingLooming"
    LATERAL_MOTION_ONSET = "LateralMotionOnset"
    HEADING_DEVIATION = "HeadingDeviation"
    BOUNDARY_APPROACH_RULE = "BoundaryApproachRule"
    COMPLETE_STOP = "CompleteStop"
    APPEAR_FROM_OCCLUSION = "AppearFromOcclusion"


@dataclass(frozen=True)
class AnnotatorConfig:
    """Thresholds for the annotation heuristics.

    The defaults quantify judgments the heuristics leave implicit: what
    counts as "moving laterally" (lat_v_eps), "deviating" (heading_eps),
    a "complete stop" (complete_stop_speed), and how long a deceleration
    must persist to count as braking rather than noise (decel_debounce).
    """

    t2_looming_threshold: float = 0.05      # rad/s
    visibility_threshold: float = 0.005     # rad/s
    surprising_decel: float = 3.0           # m/s^2
    decel_debounce: float = 0.3             # s of sustained braking
    complete_stop_speed: float = 0.1        # m/s
    lat_v_eps: float = 0.1                  # m/s
    heading_eps: float = 0.02               # rad
    curved_road: bool = False               # selects the CutIn heading rule
    lane_half_width: float = 1.75           # m, SV lane boundary offset
    boundary_position: float | None = None  # crossing-path boundary (m)
    near_boundary_distance: float = 1.0     # m
    start_move_speed: float = 1.0           # m/s
    near_stationary_speed: float = 0.5      # m/s
    no_slowing_decel: float = 0.5           # m/s^2
    extrapolation_horizon: float = 10.0     # s past T1
    extrapolation_pre_window: float = 1.0   # s before T1
    extrapolate_on_theta: bool = False      # fit theta instead of theta_dot


@dataclass(frozen=True)
class Annotation:
    """T1/T2/RUT plus optional evasive-maneuver onset and response time."""

    t1: float
    t2: float
    rut: float
    t1_rationale: T1Rationale
    em: float | None = None
    rsp_t: float | None = None
    extrapolated_t2: bool = False

    def __post_init__(self):
        if self.t2 < self.t1 - 1e-9:
            raise ValueError(f"t2 {self.t2:g} precedes t1 {self.t1:g}")
        if self.em is not None and self.em < self.t1 - 1e-9:
            raise ValueError(f"em {self.em:g} precedes t1 {self.t1:g}")

    def as_dict(self) -> dict:
        return {
            "t1": self.t1, "t2": self.t2, "rut": self.rut,
            "em": self.em, "rsp_t": self.rsp_t,
            "t1_rationale": self.t1_rationale.value,
            "extrapolated_t2": self.extrapolated_t2,
        }


def save_annotation(ann: Annotation, path) -> None:
    with open(Path(path), "w") as fh:
        json.dump(ann.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_annotation(path) -> Annotation:
    with open(Path(path)) as fh:
        d = json.load(fh)
    return Annotation(t1=d["t1"], t2=d["t2"], rut=d["rut"],
                      t1_rationale=T1Rationale(d["t1_rationale"]),
                      em=d.get("em"), rsp_t=d.get("rsp_t"),
                      extrapolated_t2=d.get("extrapolated_t2", False))


def required_decel(v: float, distance: float) -> float:
    """Constant deceleration needed to stop within the given distance."""
    if distance <= 0:
        raise NonPositiveDistance(f"distance must be > 0, got {distance}")
    return v * v / (2.0 * distance)


def _first_time(t: np.ndarray, mask: np.ndarray) -> float | None:
    idx = np.flatnonzero(mask)
    return float(t[idx[0]]) if idx.size else None


def _sustained(mask: np.ndarray, dt: float, min_duration: float) -> np.ndarray:
    """Mark every sample of each run of True that spans >= min_duration."""
    out = np.zeros_like(mask)
    if not mask.any():
        return out
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(int)))
    for start, stop in zip(edges[::2], edges[1::2]):
        if (stop - start - 1) * dt >= min_duration - 1e-12:
            out[start:stop] = True
    return out


def _surprising_decel_mask(trace: KinematicTrace,
                           cfg: AnnotatorConfig) -> np.ndarray:
    a = trace.pov.a
    hard = a < -cfg.surprising_decel
    if trace.flags.expected_slowdown_context:
        return hard
    braking = a < -1e-9
    return hard | _sustained(braking, trace.dt, cfg.decel_debounce)


def _brake_light_onset(trace: KinematicTrace) -> float | None:
    """First rising edge; a light already on at the first sample has no
    onset attributable to the event."""
    on = trace.flags.brake_light_on
    edge = np.zeros_like(on)
    edge[1:] = on[1:] & ~on[:-1]
    return _first_time(trace.t, edge)


def _rear_end_t1(trace, looming, cfg):
    candidates: list[tuple[float, T1Rationale]] = []
    if trace.flags.brake_light_surprising \
            and not trace.flags.expected_slowdown_context:
        t_light = _brake_light_onset(trace)
        if t_light is not None:
            candidates.append((t_light, T1Rationale.SURPRISING_BRAKE_LIGHT))
    visible = looming.theta_dot >= cfg.visibility_threshold
    t_decel = _first_time(trace.t,
                          _surprising_decel_mask(trace, cfg) & visible)
    if t_decel is not None:
        candidates.append((t_decel, T1Rationale.SURPRISING_DECEL_VISIBLE))
    if trace.scenario_kind is ScenarioKind.S2:
        t_stop = _first_time(trace.t, trace.pov.v <= cfg.complete_stop_speed)
        if t_stop is not None:
            candidates.append((t_stop, T1Rationale.COMPLETE_STOP))
    if trace.scenario_kind is ScenarioKind.S3:
        t_loom = _first_time(trace.t, visible)
        if t_loom is not None:
            # S3 keys on visible closing alone
            candidates = [(t_loom, T1Rationale.SURPRISING_LOOMING)]
        else:
            candidates = []
    if not candidates:
        raise NoConflictDetected(
            f"no {trace.scenario_kind.value} stimulus rule fired")
    return min(candidates, key=lambda c: c[0])


def _cut_in_t1(trace, cfg):
    t = trace.t
    side = 1.0 if trace.pov.y[0] >= 0 else -1.0
    if cfg.curved_road:
        toward = -side * trace.pov.heading
        mask = toward > cfg.heading_eps
        rationale = T1Rationale.HEADING_DEVIATION
    else:
        lat_v = np.gradient(trace.pov.y, trace.dt)
        mask = -side * lat_v > cfg.lat_v_eps
        rationale = T1Rationale.LATERAL_MOTION_ONSET
    t1 = _first_time(t, mask)
    if t1 is None:
        raise NoConflictDetected("POV never moves toward the SV lane")
    return t1, rationale


def _boundary_crossing_t2(t, dist_above, t1, occluded=None):
    """First time the distance-above-boundary signal reaches zero.

    If the crossing happens while the POV is occluded, T2 is deferred to
    the end of the occlusion (the first moment the crossed POV is seen).
    """
    t2 = first_crossing(t, -np.asarray(dist_above), 0.0, from_t=t1)
    if t2 is None:
        return None
    if occluded is not None and occluded.any():
        i = min(int(np.searchsorted(t, t2 + 1e-12, side="right")) - 1,
                len(t) - 1)
        if occluded[i]:
            after = np.flatnonzero(~occluded & (t > t2))
            if after.size:
                return float(t[after[0]])
            return None
    return float(t2)


def _crossing_t1(trace, cfg):
    t = trace.t
    boundary = cfg.boundary_position if cfg.boundary_position is not None \
        else cfg.lane_half_width
    dist = trace.pov.y - boundary
    v_toward = -np.gradient(trace.pov.y, trace.dt)

    near = dist <= cfg.near_boundary_distance
    was_stationary_near = np.logical_or.accumulate(
        near & (trace.pov.v <= cfg.near_stationary_speed))
    standing_start = was_stationary_near & (v_toward >= cfg.start_move_speed)

    entry = near & (v_toward >= cfg.start_move_speed) \
        & (trace.pov.a >= -cfg.no_slowing_decel)

    ahead = dist > 1e-9
    req = np.zeros_like(dist)
    req[ahead] = v_toward[ahead] ** 2 / (2.0 * dist[ahead])
    hard_stop_needed = ahead & (v_toward > 0) & (req > cfg.surprising_decel)

    fired = standing_start | entry | hard_stop_needed
    visible_fire = fired & ~trace.flags.occluded
    idx = np.flatnonzero(visible_fire)
    if not idx.size:
        raise NoConflictDetected("no crossing-path stimulus rule fired")
    i = int(idx[0])
    from_occlusion = i > 0 and bool(trace.flags.occluded[i - 1]) \
        and bool(fired[:i][trace.flags.occluded[:i]].any())
    rationale = T1Rationale.APPEAR_FROM_OCCLUSION if from_occlusion \
        else T1Rationale.BOUNDARY_APPROACH_RULE
    return float(t[i]), rationale, dist


def extrapolate_t2(looming: LoomingSignal, t1: float, em: float,
                   cfg: AnnotatorConfig = AnnotatorConfig()) -> float | None:
    """T2 with the driver's response removed from the looming signal.

    A least-squares quadratic is fitted to the looming over
    [t1 - pre_window, em] (the data not yet affected by the response) and
    T2 is the first time at or after t1 where the fitted curve reaches
    the T2 threshold; None if it never does within the extrapolation
    horizon. With extrapolate_on_theta the quadratic is fitted to theta
    and differentiated instead, which is less expressive (a linear
    looming extrapolation) but independent of the differentiation step.
    """
    if em <= t1:
        raise ValueError(f"em {em:g} must follow t1 {t1:g}")
    t = looming.t
    window = (t >= t1 - cfg.extrapolation_pre_window - 1e-12) & (t <= em + 1e-12)
    if window.sum() < 3:
        raise WindowTooShort(
            f"window [{t1 - cfg.extrapolation_pre_window:g}, {em:g}] holds "
            f"{int(window.sum())} samples, need >= 3")
    tw = t[window]
    if cfg.extrapolate_on_theta:
        poly = np.polyder(np.polyfit(tw, looming.theta[window], 2))
    else:
        poly = np.polyfit(tw, looming.theta_dot[window], 2)

    thr = cfg.t2_looming_threshold
    if np.polyval(poly, t1) >= thr:
        return t1
    roots = np.roots(np.polysub(poly, np.array([thr])))
    real = np.sort(roots[np.abs(roots.imag) < 1e-9].real)
    for r in real:
        if t1 - 1e-9 <= r <= t1 + cfg.extrapolation_horizon:
            return float(max(r, t1))
    return None


def annotate(trace: KinematicTrace, looming: LoomingSignal,
             cfg: AnnotatorConfig = AnnotatorConfig(),
             em: float | None = None) -> Annotation:
    """Apply the scenario-specific stimulus heuristics to one trace.

    em, when supplied (from data or from a response simulation), yields
    rsp_t = em - t1 and enables T2 extrapolation for rear-end traces
    whose looming never reaches the T2 threshold on its own.
    """
    kind = trace.scenario_kind
    if kind is ScenarioKind.UNKNOWN:
        raise ScenarioUnknown("cannot annotate a trace of unknown scenario")
    t = trace.t
    extrapolated = False

    if kind in (ScenarioKind.S1, ScenarioKind.S2, ScenarioKind.S3):
        t1, rationale = _rear_end_t1(trace, looming, cfg)
        t2 = first_crossing(looming.t, looming.theta_dot,
                            cfg.t2_looming_threshold, from_t=t1)
        if t2 is None:
            if em is not None and em > t1:
                t2 = extrapolate_t2(looming, t1, em, cfg)
                extrapolated = t2 is not None
            if t2 is None:
                t2 = t1     # threshold never reached: stimulus end = onset
    elif kind is ScenarioKind.CUT_IN:
        t1, rationale = _cut_in_t1(trace, cfg)
        side = 1.0 if trace.pov.y[0] >= 0 else -1.0
        dist_above = side * trace.pov.y - cfg.lane_half_width
        t2 = _boundary_crossing_t2(t, dist_above, t1)
        if t2 is None:
            t2 = t1
    elif kind is ScenarioKind.CROSSING_PATH:
        t1, rationale, dist = _crossing_t1(trace, cfg)
        t2 = _boundary_crossing_t2(t, dist, t1,
                                   occluded=trace.flags.occluded)
        if t2 is None:
            t2 = t1
    else:  # pragma: no cover
        raise ScenarioUnknown(f"unhandled scenario kind {kind}")

    rsp_t = em - t1 if em is not None else None
    return Annotation(t1=t1, t2=float(t2), rut=float(t2) - t1,
                      t1_rationale=rationale, em=em, rsp_t=rsp_t,
                      extrapolated_t2=extrapolated)
