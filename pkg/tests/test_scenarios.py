import json

import numpy as np
import pytest

from conflict_rt.errors import SpecInvalid
from conflict_rt.looming import first_crossing, looming_from_trace
from conflict_rt.scenarios import (CrossingSpec, CutInSpec, EventContext,
                                   RearEndSpec, gen_crossing, gen_cut_in,
                                   gen_rear_end, global_to_lane,
                                   lane_to_global, load_scenario_spec)
from conflict_rt.trace import ScenarioKind, validate_trace


def rear_end_range_oracle(spec: RearEndSpec, t):
    """Independent closed-form range for the rear-end scenario."""
    v0, d, tb = spec.lv_speed, spec.lv_decel, spec.brake_onset_t
    anchor = tb if (d > 0 and v0 > 0) else 0.0
    gap0 = spec.initial_time_gap * spec.sv_speed \
        + (spec.sv_speed - spec.lv_speed) * anchor
    out = []
    for ti in t:
        if d > 0 and v0 > 0 and ti >= tb:
            tau = min(ti - tb, v0 / d)
            lv_travel = v0 * tb + v0 * tau - 0.5 * d * tau ** 2
        else:
            lv_travel = v0 * ti
        out.append(gap0 + lv_travel - spec.sv_speed * ti)
    return np.array(out)


class TestRearEnd:
    def test_range_matches_closed_form(self):
        spec = RearEndSpec(sv_speed=22.22, lv_speed=13.33,
                           initial_time_gap=1.3, lv_decel=5.886,
                           brake_onset_t=2.0, duration=8.0, dt=0.01)
        trace = gen_rear_end(spec, "S1")
        expected = rear_end_range_oracle(spec, trace.t)
        np.testing.assert_allclose(trace.gap(), expected, atol=1e-9)

    def test_nilsson_style_rut(self):
        # hard-braking slower lead: looming crosses 0.05 rad/s ~0.7 s
        # after braking onset
        spec = RearEndSpec(sv_speed=22.22, lv_speed=13.33,
                           initial_time_gap=1.3, lv_decel=5.886,
                           brake_onset_t=2.0, lv_width=1.8,
                           duration=10.0, dt=0.01)
        trace = gen_rear_end(spec, "S1")
        sig = looming_from_trace(trace)
        t2 = first_crossing(sig.t, sig.theta_dot, 0.05, from_t=2.0)
        assert t2 - 2.0 == pytest.approx(0.7, abs=0.3)

    def test_zero_decel_constant_speed(self):
        spec = RearEndSpec(sv_speed=20.0, lv_speed=22.0, initial_time_gap=1.5,
                           lv_decel=0.0, duration=6.0)
        trace = gen_rear_end(spec, "S1")
        assert np.all(trace.pov.v == 22.0)
        assert not trace.flags.brake_light_on.any()

    def test_s3_stationary_lv(self):
        spec = RearEndSpec(sv_speed=20.0, lv_speed=0.0, initial_time_gap=5.0,
                           lv_decel=0.0, duration=4.0, dt=0.1)
        trace = gen_rear_end(spec, "S3")
        assert np.all(trace.pov.v == 0.0)
        gap = trace.gap()
        np.testing.assert_allclose(np.diff(gap) / trace.dt, -20.0, atol=1e-9)
        assert trace.scenario_kind is ScenarioKind.S3

    def test_gap_anchored_at_braking_onset(self):
        spec = RearEndSpec(sv_speed=19.444, lv_speed=22.222,
                           initial_time_gap=1.5, lv_decel=5.0,
                           brake_onset_t=2.0, duration=8.0, dt=0.01)
        trace = gen_rear_end(spec, "S1")
        gap_at_onset = float(np.interp(2.0, trace.t, trace.gap()))
        assert gap_at_onset == pytest.approx(1.5 * 19.444, abs=1e-9)

    def test_brake_light_from_onset(self):
        spec = RearEndSpec(sv_speed=20.0, lv_speed=20.0, initial_time_gap=2.0,
                           lv_decel=4.0, brake_onset_t=1.5, duration=6.0)
        trace = gen_rear_end(spec, "S1")
        t = trace.t
        assert not trace.flags.brake_light_on[t < 1.5 - 1e-9].any()
        assert trace.flags.brake_light_on[t >= 1.5 - 1e-9].all()

    def test_truncated_before_contact(self):
        spec = RearEndSpec(sv_speed=25.0, lv_speed=0.0, initial_time_gap=1.0,
                           lv_decel=0.0, duration=20.0)
        trace = gen_rear_end(spec, "S3")
        assert np.all(trace.gap() > 0)
        assert trace.span < 20.0

    def test_s2_lateral_exit_then_stop(self):
        spec = RearEndSpec(sv_speed=12.0, lv_speed=8.0, initial_time_gap=3.0,
                           lv_decel=2.5, brake_onset_t=2.0, duration=12.0,
                           dt=0.01)
        trace = gen_rear_end(spec, "S2")
        t = trace.t
        stop_t = 2.0 + 8.0 / 2.5
        # no lateral motion before onset, drift while braking, frozen after
        assert np.all(trace.pov.y[t <= 2.0] == 0.0)
        moving = (t > 2.0) & (t < stop_t)
        assert np.all(np.diff(trace.pov.y[moving]) > 0)
        after = t >= stop_t
        if after.sum() > 1:
            np.testing.assert_allclose(np.diff(trace.pov.y[after]), 0.0,
                                       atol=1e-12)
        assert np.any(np.abs(trace.pov.heading) > 0.01)
        assert trace.pov.v[-1] == 0.0

    def test_invalid_specs(self):
        with pytest.raises(SpecInvalid):
            gen_rear_end(RearEndSpec(sv_speed=20.0, lv_speed=20.0,
                                     initial_time_gap=0.0, lv_decel=3.0), "S1")
        with pytest.raises(SpecInvalid):
            gen_rear_end(RearEndSpec(sv_speed=20.0, lv_speed=20.0,
                                     initial_time_gap=1.5, lv_decel=20.0),
                         "S1")
        with pytest.raises(SpecInvalid):
            gen_rear_end(RearEndSpec(sv_speed=20.0, lv_speed=20.0,
                                     initial_time_gap=1.5, lv_decel=3.0),
                         "CutIn")

    def test_generated_traces_validate(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            spec = RearEndSpec(
                sv_speed=rng.uniform(10, 30),
                lv_speed=rng.uniform(0, 30),
                initial_time_gap=rng.uniform(0.8, 3.0),
                lv_decel=rng.uniform(0, 8),
                brake_onset_t=rng.uniform(0, 3),
                duration=10.0, dt=0.1)
            variant = rng.choice(["S1", "S2", "S3"])
            assert validate_trace(gen_rear_end(spec, variant)) == []


class TestCutIn:
    def canonical(self, **kw):
        base = dict(sv_speed=25.0, pov_speed=25.0,
                    initial_longitudinal_gap=20.0, lateral_offset=3.5,
                    lateral_onset_t=5.0, lateral_speed=1.0,
                    lane_half_width=1.75, duration=12.0, dt=0.05)
        base.update(kw)
        return CutInSpec(**base)

    def test_boundary_reached_at_expected_time(self):
        trace = gen_cut_in(self.canonical())
        # 1.75 m of travel at 1 m/s from onset 5.0
        cross = first_crossing(trace.t, 1.75 - trace.pov.y, 0.0, from_t=5.0)
        assert cross == pytest.approx(6.75, abs=1e-9)

    def test_degenerate_offset_equals_half_width(self):
        # POV starts exactly on the boundary: crossing at lateral onset
        trace = gen_cut_in(self.canonical(lateral_offset=1.75))
        cross = first_crossing(trace.t, 1.75 - trace.pov.y, 0.0, from_t=5.0)
        assert cross == pytest.approx(5.0, abs=1e-9)

    def test_heading_matches_velocity(self):
        trace = gen_cut_in(self.canonical(lateral_speed=2.0))
        t = trace.t
        during = (t >= 5.0) & (t < 5.0 + 3.5 / 2.0)
        np.testing.assert_allclose(trace.pov.heading[during],
                                   np.arctan2(-2.0, 25.0), atol=1e-12)
        assert np.all(trace.pov.heading[t < 5.0] == 0.0)

    def test_settles_at_lane_center(self):
        trace = gen_cut_in(self.canonical(lateral_speed=2.0, duration=12.0))
        assert trace.pov.y[-1] == pytest.approx(0.0, abs=1e-12)
        assert np.all(trace.pov.y >= -1e-12)

    def test_curvature_frame_invariance(self):
        flat = gen_cut_in(self.canonical())
        curved = gen_cut_in(self.canonical(road_curvature=0.002))
        np.testing.assert_allclose(curved.pov.y, flat.pov.y, atol=1e-9)
        np.testing.assert_allclose(curved.pov.x, flat.pov.x, atol=1e-9)

    def test_lane_global_round_trip(self):
        # mapping the lane-relative motion onto a curved centerline and
        # back must recover it exactly (the frame-invariance oracle)
        trace = gen_cut_in(self.canonical())
        # |curvature * arclength| must stay below pi for the arc chart
        for curvature in (0.002, -0.003, 0.005):
            gx, gy = lane_to_global(trace.pov.x, trace.pov.y, curvature)
            s, d = global_to_lane(gx, gy, curvature)
            np.testing.assert_allclose(s, trace.pov.x, atol=1e-9)
            np.testing.assert_allclose(d, trace.pov.y, atol=1e-9)

    def test_pov_inside_lane_rejected(self):
        with pytest.raises(SpecInvalid):
            gen_cut_in(self.canonical(lateral_offset=1.0))

    def test_validates(self):
        assert validate_trace(gen_cut_in(self.canonical())) == []


class TestCrossing:
    def test_none_profile_boundary_time(self):
        spec = CrossingSpec(sv_speed=15.0, pov_approach_speed=8.0,
                            pov_start_distance_to_boundary=20.0,
                            duration=5.0, dt=0.05)
        trace = gen_crossing(spec)
        cross = first_crossing(trace.t, -(trace.pov.y - 1.75), 0.0)
        assert cross == pytest.approx(2.5, abs=1e-9)
        np.testing.assert_allclose(trace.pov.v, 8.0)

    def test_comfortable_stops_at_boundary(self):
        spec = CrossingSpec(sv_speed=10.0, pov_approach_speed=8.0,
                            pov_start_distance_to_boundary=20.0,
                            pov_decel_profile="comfortable", duration=10.0,
                            dt=0.01)
        trace = gen_crossing(spec)
        assert trace.pov.v[-1] == 0.0
        assert np.abs(trace.pov.a).max() <= 3.0 + 1e-9
        assert trace.pov.y.min() == pytest.approx(1.75, abs=1e-9)

    def test_comfortable_impossible(self):
        spec = CrossingSpec(sv_speed=10.0, pov_approach_speed=15.0,
                            pov_start_distance_to_boundary=10.0,
                            pov_decel_profile="comfortable")
        with pytest.raises(SpecInvalid):
            gen_crossing(spec)

    def test_stop_then_go_crosses_at_speed(self):
        spec = CrossingSpec(sv_speed=10.0, pov_approach_speed=6.0,
                            pov_start_distance_to_boundary=12.0,
                            pov_decel_profile="stop_then_go", duration=14.0,
                            dt=0.01)
        trace = gen_crossing(spec)
        cross = first_crossing(trace.t, -(trace.pov.y - 1.75), 0.0)
        assert cross is not None
        v_at_cross = float(np.interp(cross, trace.t, trace.pov.v))
        assert v_at_cross >= 1.0
        assert trace.pov.v.min() == 0.0          # it did stop first

    def test_occlusion_flags(self):
        spec = CrossingSpec(sv_speed=10.0, pov_approach_speed=8.0,
                            pov_start_distance_to_boundary=20.0,
                            occlusion_interval=(1.0, 2.0), duration=5.0,
                            dt=0.1)
        trace = gen_crossing(spec)
        t = trace.t
        inside = (t >= 1.0) & (t <= 2.0)
        assert trace.flags.occluded[inside].all()
        assert not trace.flags.occluded[~inside].any()

    def test_validates(self):
        for profile in ("none", "comfortable", "stop_then_go"):
            spec = CrossingSpec(sv_speed=10.0, pov_approach_speed=6.0,
                                pov_start_distance_to_boundary=15.0,
                                pov_decel_profile=profile, duration=8.0)
            assert validate_trace(gen_crossing(spec)) == []


class TestSpecFiles:
    def test_rear_end_round_trip(self, tmp_path):
        path = tmp_path / "s1_hard_brake.json"
        path.write_text(json.dumps({
            "kind": "rear_end", "variant": "S1",
            "sv_speed": 22.22, "lv_speed": 13.33, "initial_time_gap": 1.3,
            "lv_decel": 5.886, "brake_onset_t": 2.0, "duration": 10.0,
            "dt": 0.01,
            "context": {"brake_light_surprising": True},
        }))
        loaded = load_scenario_spec(path)
        assert loaded.kind == "rear_end"
        assert loaded.variant == "S1"
        assert loaded.name == "s1_hard_brake"
        trace = loaded.generate()
        assert trace.scenario_kind is ScenarioKind.S1
        assert trace.flags.brake_light_surprising

    def test_cut_in_and_crossing(self, tmp_path):
        p1 = tmp_path / "cutin.json"
        p1.write_text(json.dumps({
            "kind": "cut_in", "sv_speed": 25.0, "pov_speed": 25.0,
            "initial_longitudinal_gap": 20.0, "lateral_speed": 2.0,
            "duration": 10.0}))
        assert load_scenario_spec(p1).generate().scenario_kind \
            is ScenarioKind.CUT_IN
        p2 = tmp_path / "crossing.json"
        p2.write_text(json.dumps({
            "kind": "crossing", "sv_speed": 15.0, "pov_approach_speed": 8.0,
            "pov_start_distance_to_boundary": 20.0,
            "occlusion_interval": [1.0, 2.0], "duration": 5.0}))
        assert load_scenario_spec(p2).generate().scenario_kind \
            is ScenarioKind.CROSSING_PATH

    def test_bad_spec_files(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"kind": "warp_drive"}))
        with pytest.raises(SpecInvalid):
            load_scenario_spec(p)
        p.write_text(json.dumps({"kind": "rear_end", "sv_speed": 20.0}))
        with pytest.raises(SpecInvalid):
            load_scenario_spec(p)
        p.write_text(json.dumps({"kind": "cut_in", "sv_speed": 20.0,
                                 "warp_factor": 9}))
        with pytest.raises(SpecInvalid):
            load_scenario_spec(p)
