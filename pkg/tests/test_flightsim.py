"""Drone controller, depth manipulator, scenario files and the built-in maneuvers."""

import io
import json
import math

import numpy as np
import pytest

from errors import DomainError, ScenarioParseError, ScheduleError
from flightsim import (
    BUILTIN_SCENARIOS,
    LOG_COLUMNS,
    ControllerConfig,
    DepthObservation,
    DroneState,
    FlightMode,
    InjectionEvent,
    InjectionSchedule,
    Obstacle,
    ObservationSource,
    Scenario,
    body_axes,
    commanded_sectors,
    load_scenario,
    manipulate,
    parse_scenario,
    pilot_command,
    run_scenario,
    sector_vectors,
    sense,
    step,
    summarize,
    write_trajectory_csv,
)

DT = 0.02


def _obs(**sectors):
    depths = {"forward": math.inf, "backward": math.inf, "left": math.inf, "right": math.inf}
    depths.update(sectors)
    return DepthObservation(depths)


def _run(state, cmd, obs, seconds, cfg=None):
    for _ in range(int(round(seconds / DT))):
        state = step(state, cmd, obs, DT, cfg)
    return state


class TestStep:

    def test_positioning_brakes_before_obstacle(self):
        state = DroneState(velocity=(0.0, 2.0, 0.0))
        nxt = step(state, (0.0, 2.0, 0.0), _obs(forward=3.0), DT)
        assert nxt.velocity[1] == 0.0
        assert nxt.oa_engaged

    def test_tracks_command_within_five_tau(self):
        state = _run(DroneState(), (0.0, 2.0, 0.0), _obs(), 5 * 0.3)
        assert state.velocity[1] == pytest.approx(2.0, abs=0.02)
        assert not state.oa_engaged

    def test_activetrack_drifts_away_from_right(self):
        state = DroneState(mode=FlightMode.ACTIVETRACK, velocity=(0.0, 2.0, 0.0))
        state = _run(state, (0.0, 2.0, 0.0), _obs(right=4.0), 5.0)
        _, right = body_axes(0.0)
        assert float(np.asarray(state.velocity) @ right) == pytest.approx(-1.0, abs=1e-3)
        assert state.velocity[1] == pytest.approx(2.0, abs=1e-3)

    def test_positioning_does_not_dodge(self):
        state = _run(DroneState(), (0.0, 0.0, 0.0), _obs(right=4.0), 2.0)
        assert state.velocity == (0.0, 0.0, 0.0)
        assert not state.oa_engaged

    def test_positioning_ignores_sectors_off_the_command(self):
        state = DroneState(velocity=(0.0, 2.0, 0.0))
        nxt = step(state, (0.0, 2.0, 0.0), _obs(right=4.0, backward=1.0), DT)
        assert nxt.velocity[1] == pytest.approx(2.0)
        assert not nxt.oa_engaged

    def test_positioning_diagonal_brakes_blocked_side(self):
        state = DroneState(velocity=(1.0, 1.0, 0.0))
        nxt = step(state, (1.0, 1.0, 0.0), _obs(right=4.0), DT)
        assert nxt.velocity[0] == 0.0
        assert nxt.velocity[1] == pytest.approx(1.0)
        assert nxt.oa_engaged

    def test_speed_clipped(self):
        state = _run(DroneState(), (30.0, 0.0, 0.0), _obs(), 3.0)
        assert state.speed <= 5.0 + 1e-9

    def test_altitude_floor(self):
        state = _run(DroneState(position=(0.0, 0.0, 0.1)), (0.0, 0.0, -2.0), _obs(), 1.0)
        assert state.position[2] == 0.0

    @pytest.mark.parametrize("dt", [0.0, -0.01, 0.2])
    def test_dt_domain(self, dt):
        with pytest.raises(DomainError):
            step(DroneState(), (0.0, 0.0, 0.0), _obs(), dt)

    def test_heading_rotates_sectors(self):
        state = DroneState(heading_rad=math.pi / 2, velocity=(2.0, 0.0, 0.0))
        nxt = step(state, (2.0, 0.0, 0.0), _obs(forward=1.0), DT)
        assert nxt.velocity[0] == pytest.approx(0.0, abs=1e-12)


class TestCommandedSectors:

    @pytest.mark.parametrize("cmd, expected", [
        ((0.0, 2.0, 0.0), ["forward"]),
        ((0.0, -1.0, 0.0), ["backward"]),
        ((-1.0, 0.2, 0.0), ["left"]),
        ((1.0, 1.0, 0.0), ["forward", "right"]),
        ((0.0, 0.0, 1.0), []),
        ((0.0, 0.0, 0.0), []),
    ])
    def test_heading_zero(self, cmd, expected):
        assert commanded_sectors(cmd, 0.0) == expected

    def test_follows_heading(self):
        # heading east: world +x is forward
        assert commanded_sectors((1.0, 0.0, 0.0), math.pi / 2) == ["forward"]


class TestSensing:

    def test_obstacle_in_forward_sector(self):
        obs = sense(DroneState(), [Obstacle(0.0, 5.0, radius=0.5)])
        assert obs.sectors["forward"] == pytest.approx(4.5)
        assert math.isinf(obs.sectors["backward"])

    def test_out_of_range(self):
        assert math.isinf(sense(DroneState(), [Obstacle(0.0, 40.0)]).sectors["forward"])

    def test_observation_validation(self):
        with pytest.raises(DomainError):
            DepthObservation({"forward": 1.0})
        with pytest.raises(DomainError):
            _obs(left=0.0)


class TestManipulate:

    def test_min_rule(self):
        sched = InjectionSchedule((InjectionEvent(0.0, 1.0, "forward", 0.5),))
        out = manipulate(_obs(), sched, 0.5)
        assert out.sectors["forward"] == 0.5
        assert out.source is ObservationSource.MANIPULATED

    def test_cannot_hide_nearer_truth(self):
        sched = InjectionSchedule((InjectionEvent(0.0, 1.0, "forward", 10.0),))
        assert manipulate(_obs(forward=3.0), sched, 0.5).sectors["forward"] == 3.0

    def test_mask_truth_overrides(self):
        sched = InjectionSchedule((InjectionEvent(0.0, 1.0, "forward", 10.0, mask_truth=True),))
        assert manipulate(_obs(forward=3.0), sched, 0.5).sectors["forward"] == 10.0

    def test_inactive_is_identity(self):
        obs = _obs(left=7.0)
        sched = InjectionSchedule((InjectionEvent(1.0, 2.0, "forward", 0.5),))
        assert manipulate(obs, sched, 2.0) is obs

    def test_repeating(self):
        sched = InjectionSchedule((InjectionEvent(0.0, 0.25, "forward", 0.5),), repeat_period_s=0.5)
        assert manipulate(_obs(), sched, 3.1).sectors["forward"] == 0.5
        assert math.isinf(manipulate(_obs(), sched, 3.3).sectors["forward"])


class TestInjectionSchedule:

    def test_events_sorted(self):
        sched = InjectionSchedule((InjectionEvent(2.0, 3.0, "left", 1.0), InjectionEvent(0.0, 1.0, "left", 1.0)))
        assert [e.t_start_s for e in sched.events] == [0.0, 2.0]

    @pytest.mark.parametrize("events, period", [
        ((InjectionEvent(0.0, 2.0, "forward", 1.0), InjectionEvent(1.0, 3.0, "forward", 1.0)), None),
        ((InjectionEvent(0.0, 1.0, "up", 1.0),), None),
        ((InjectionEvent(0.0, 1.0, "forward", 0.0),), None),
        ((InjectionEvent(1.0, 1.0, "forward", 1.0),), None),
        ((InjectionEvent(0.0, 0.6, "forward", 1.0),), 0.5),
        ((), 0.0),
    ])
    def test_invalid(self, events, period):
        with pytest.raises(ScheduleError):
            InjectionSchedule(events, period)

    def test_overlap_on_different_sectors_allowed(self):
        InjectionSchedule((InjectionEvent(0.0, 2.0, "forward", 1.0), InjectionEvent(1.0, 3.0, "left", 1.0)))


class TestScenarioParsing:

    def test_minimal(self):
        sc = parse_scenario('{"name": "hover"}')
        assert sc.name == "hover"
        assert sc.mode is FlightMode.POSITIONING
        assert sc.schedule.events == ()

    def test_full(self):
        text = json.dumps({
            "name": "box", "mode": "activetrack", "duration_s": 2.0, "heading_deg": 90,
            "pilot": [{"t_s": 1.0, "right": 1.0}, {"t_s": 0.0, "forward": 1.0}],
            "schedule": {"events": [{"t_start_s": 0.5, "t_end_s": 1.5, "sector": "left", "fake_depth_m": 2.0}]},
            "obstacles": [{"x": 3.0, "y": 0.0}],
            "controller": {"tau_s": 0.5},
        }, indent=2)
        sc = parse_scenario(text)
        assert sc.mode is FlightMode.ACTIVETRACK
        assert [seg["t_s"] for seg in sc.pilot] == [0.0, 1.0]
        assert sc.obstacles == [Obstacle(3.0, 0.0, 0.5)]
        assert sc.controller == ControllerConfig(tau_s=0.5)
        assert sc.heading_rad == pytest.approx(math.pi / 2)

    def test_syntax_error_has_line(self):
        with pytest.raises(ScenarioParseError) as exc:
            parse_scenario('{\n  "name": "x",\n  "mode": \n}', "bad.json")
        assert exc.value.lineno == 4
        assert str(exc.value).startswith("bad.json:4:")

    def test_unknown_sector_points_at_line(self):
        text = '{\n  "schedule": {\n    "events": [\n      {"t_start_s": 0, "t_end_s": 1,\n       "sector": "up", "fake_depth_m": 1}\n    ]\n  }\n}'
        with pytest.raises(ScenarioParseError) as exc:
            parse_scenario(text)
        assert exc.value.lineno == 5

    @pytest.mark.parametrize("body", [
        '{"unknown": 1}',
        '{"mode": "sport"}',
        '{"duration_s": -1}',
        '{"dt_s": 0.5}',
        '{"initial_position": [0, 0]}',
        '{"sensor": "lidar"}',
        '{"sensor": "rendered"}',
        '{"controller": {"gain": 2}}',
    ])
    def test_schema_errors(self, body):
        with pytest.raises(ScenarioParseError):
            parse_scenario(body)

    def test_error_points_at_the_right_list_item(self):
        text = ('{\n  "schedule": {\n    "events": [\n'
                '      {"t_start_s": 0, "t_end_s": 1, "sector": "left", "fake_depth_m": 1},\n'
                '      {"t_start_s": 1, "t_end_s": 2, "sector": "left",\n'
                '       "fake_depth_m": -1}\n    ]\n  }\n}')
        with pytest.raises(ScenarioParseError) as exc:
            parse_scenario(text)
        assert exc.value.lineno == 6

    def test_key_in_later_section_is_located(self):
        text = '{\n  "pilot": [{"t_s": 0, "forward": 1}],\n  "controller": {\n    "forward": 2\n  }\n}'
        with pytest.raises(ScenarioParseError) as exc:
            parse_scenario(text)
        assert exc.value.lineno == 4

    @pytest.mark.parametrize("body, lineno", [
        ('{\n  "schedule": {\n    "events": 5\n  }\n}', 3),
        ('{\n  "obstacles": {"x": 1}\n}', 2),
        ('{\n  "pilot": "forward"\n}', 2),
    ])
    def test_lists_must_be_lists(self, body, lineno):
        with pytest.raises(ScenarioParseError) as exc:
            parse_scenario(body)
        assert exc.value.lineno == lineno

    @pytest.mark.parametrize("attack", [
        {"separation_m": 1.0, "distance_m": 4.0, "colour": "red"},
        {"separation_m": 1.0},
        {"separation_m": 1.0, "distance_m": 4.0, "pattern": "circle"},
        {"separation_m": 1.0, "distance_m": 4.0, "intensity_primary": 0.3, "intensity_secondary": 0.5},
        {"separation_m": 1.0, "distance_m": 4.0, "seed": "x"},
        "x-shape",
    ])
    def test_invalid_attack(self, attack):
        text = json.dumps({"sensor": "rendered", "attack": attack}, indent=2)
        with pytest.raises(ScenarioParseError) as exc:
            parse_scenario(text)
        assert exc.value.lineno >= 2

    def test_unknown_attack_key_line(self):
        text = '{\n  "sensor": "rendered",\n  "attack": {\n    "separation_m": 1,\n    "distance_m": 4,\n    "colour": "red"\n  }\n}'
        with pytest.raises(ScenarioParseError) as exc:
            parse_scenario(text)
        assert exc.value.lineno == 6

    def test_invalid_rig(self):
        text = json.dumps({"rig": {"focal_length_px": -1.0}}, indent=2)
        with pytest.raises(ScenarioParseError):
            parse_scenario(text)

    def test_valid_attack_and_rig_kept(self):
        attack = {"separation_m": 1.0, "distance_m": 4.0, "pattern": "x", "mode": "beams", "seed": 3}
        sc = parse_scenario(json.dumps({"sensor": "rendered", "attack": attack, "rig": {"image_width_px": 320}}))
        assert sc.attack == attack
        assert sc.rig == {"image_width_px": 320}

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioParseError) as exc:
            load_scenario(str(tmp_path / "nope.json"))
        assert exc.value.lineno == 0

    def test_file_with_duration_override(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text('{"name": "f", "duration_s": 4}')
        sc = load_scenario(str(path), duration_s=1.0)
        assert sc.duration_s == 1.0
        assert sc.config["duration_s"] == 1.0


class TestRunScenario:

    def test_rows_at_fixed_dt(self):
        traj = run_scenario(parse_scenario('{"duration_s": 1.0}'))
        assert len(traj.points) == 51
        assert traj.points[10].t == pytest.approx(0.2)

    def test_empty_schedule_matches_baseline(self):
        base = parse_scenario('{"duration_s": 2, "pilot": {"t_s": 0, "forward": 1}}')
        with_sched = parse_scenario('{"duration_s": 2, "pilot": {"t_s": 0, "forward": 1}, "schedule": {"events": []}}')
        a = [p.state for p in run_scenario(base).points]
        b = [p.state for p in run_scenario(with_sched).points]
        assert a == b

    def test_real_obstacle_stops_drone(self):
        sc = parse_scenario(json.dumps({
            "duration_s": 6, "pilot": [{"t_s": 0, "forward": 2}], "obstacles": [{"x": 0, "y": 12}],
        }))
        summary = summarize(run_scenario(sc))
        assert summary["min_forward_clearance_m"] > 5.0
        assert summary["oa_engaged_steps"] > 0

    def test_csv_header_and_rows(self):
        traj = run_scenario(load_scenario("sudden_stop", duration_s=0.1))
        buf = io.StringIO()
        write_trajectory_csv(traj, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "# scenario: sudden_stop"
        assert lines[1].startswith("# config: {")
        assert lines[2] == ",".join(LOG_COLUMNS)
        assert len(lines) == 3 + len(traj.points)
        assert lines[3].split(",")[0] == "0.0000"
        assert lines[3].split(",")[-5] == "inf"

    def test_logs_are_byte_identical(self):
        logs = []
        for _ in range(2):
            buf = io.StringIO()
            write_trajectory_csv(run_scenario(load_scenario("shake_fb", period_s=0.5)), buf)
            logs.append(buf.getvalue())
        assert logs[0] == logs[1]

    @pytest.mark.parametrize("scenario", [
        "sudden_stop",
        {"duration_s": 6, "pilot": [{"t_s": 0, "forward": 2}], "obstacles": [{"x": 0, "y": 12}]},
        {"duration_s": 4, "heading_deg": 30, "pilot": [{"t_s": 0, "forward": 1.5, "right": 1.5}],
         "schedule": {"events": [{"t_start_s": 1, "t_end_s": 3, "sector": "right", "fake_depth_m": 2}]}},
    ])
    def test_brake_rule_at_every_step(self, scenario):
        sc = load_scenario(scenario) if isinstance(scenario, str) else parse_scenario(json.dumps(scenario))
        traj = run_scenario(sc)
        checked = 0
        for now, nxt in zip(traj.points, traj.points[1:]):
            cmd = pilot_command(sc, now.t)
            vectors = sector_vectors(now.state.heading_rad)
            for s in commanded_sectors(cmd, now.state.heading_rad):
                if now.observation.sectors[s] < sc.controller.oa_threshold_m:
                    assert float(np.asarray(nxt.state.velocity) @ vectors[s]) <= 1e-12
                    assert nxt.state.oa_engaged
                    checked += 1
        assert checked > 0

    def test_run_accepts_name(self):
        assert run_scenario("sudden_stop").scenario.name == "sudden_stop"


class TestBuiltinManeuvers:

    def test_all_names_load(self):
        for name in BUILTIN_SCENARIOS:
            assert isinstance(load_scenario(name), Scenario)

    def test_sudden_stop(self):
        summary = summarize(run_scenario("sudden_stop"))
        assert summary["first_injection_s"] == pytest.approx(5.0)
        assert summary["forward_displacement_after_injection_m"] < 0.05
        assert summary["forward_displacement_m"] == pytest.approx(10.0, abs=1.0)

    def test_drift_away(self):
        traj = run_scenario("drift_away")
        lateral = [p.state.position[0] for p in traj.points]
        forward = [p.state.position[1] for p in traj.points]
        assert all(b <= a for a, b in zip(lateral, lateral[1:]))
        assert lateral[-1] < -5.0
        assert forward[-1] > 15.0

    def test_shake_front_back(self):
        summary = summarize(run_scenario(load_scenario("shake_fb", period_s=0.5)))
        assert 39 <= summary["forward_zero_crossings"] <= 41

    def test_shake_left_right(self):
        summary = summarize(run_scenario(load_scenario("shake_lr", period_s=0.5)))
        assert summary["lateral_zero_crossings"] >= 30
        assert abs(summary["lateral_displacement_m"]) < 1.0
