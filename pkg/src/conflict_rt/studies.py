"""Built-in benchmark: four published simulator lead-vehicle braking studies.

Ships the studies' kinematics and observed mean response times, rebuilds
each scenario as a RearEndSpec, and recomputes the ramp-up time from the
simulated looming, which is how the reference RUT values were obtained
in the first place.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .annotate import AnnotatorConfig
from .looming import first_crossing, looming_from_trace
from .response import LinearRspModel, ValidationRow
from .scenarios import EventContext, RearEndSpec, gen_rear_end

GRAVITY = 9.81
KPH = 1.0 / 3.6
DEFAULT_LV_WIDTH = 1.8        # m; the studies do not report widths used


@dataclass(frozen=True)
class SimulatorStudy:
    study_id: str
    n: int
    sv_type: str
    sv_speed_kph: float
    lv_speed_kph: float
    initial_time_gap_s: float
    lv_decel_g: float
    observed_mean_rsp_t: float
    t1: float
    t2: float
    rut: float
    predicted_mean_rsp_t: float

    def rear_end_spec(self, dt: float = 0.01, brake_onset_t: float = 2.0,
                      lv_width: float = DEFAULT_LV_WIDTH) -> RearEndSpec:
        """SI-converted S1 spec reproducing this study's kinematics."""
        return RearEndSpec(
            sv_speed=self.sv_speed_kph * KPH,
            lv_speed=self.lv_speed_kph * KPH,
            initial_time_gap=self.initial_time_gap_s,
            lv_decel=self.lv_decel_g * GRAVITY,
            brake_onset_t=brake_onset_t,
            lv_width=lv_width,
            duration=brake_onset_t + 10.0,
            dt=dt,
            context=EventContext(brake_light_surprising=True))

    def validation_row(self) -> ValidationRow:
        return ValidationRow(study_id=self.study_id, rut=self.rut,
                             observed_mean_rsp_t=self.observed_mean_rsp_t,
                             predicted_rsp_t=self.predicted_mean_rsp_t)


def _raw() -> dict:
    with resources.files("conflict_rt.data").joinpath(
            "simulator_studies.json").open() as fh:
        return json.load(fh)


def benchmark_studies() -> list[SimulatorStudy]:
    return [SimulatorStudy(**row) for row in _raw()["studies"]]


def benchmark_meta() -> dict:
    raw = _raw()
    return {k: v for k, v in raw.items() if k != "studies"}


def published_model() -> LinearRspModel:
    """The reference coefficient pair (no fit diagnostics available)."""
    ref = _raw()["reference_fit"]
    return LinearRspModel(k=ref["k"], m=ref["m"], n=ref["n_events"])


def recompute_rut(study: SimulatorStudy, dt: float = 0.01,
                  cfg: AnnotatorConfig = AnnotatorConfig()) -> float:
    """Ramp-up time from the study's simulated kinematics.

    The scenario is simulated, looming computed from geometry, and the
    RUT read off as the first crossing of the T2 looming threshold after
    braking onset (T1 being the surprising brake-light onset at braking
    start in all four studies).
    """
    spec = study.rear_end_spec(dt=dt)
    trace = gen_rear_end(spec, "S1")
    sig = looming_from_trace(trace)
    t2 = first_crossing(sig.t, sig.theta_dot, cfg.t2_looming_threshold,
                        from_t=spec.brake_onset_t)
    if t2 is None:
        raise RuntimeError(f"{study.study_id}: looming never reaches "
                           f"{cfg.t2_looming_threshold} rad/s")
    return float(t2 - spec.brake_onset_t)
