"""
Discrete-time drone simulator with a sector-based obstacle-avoidance
controller and a depth manipulator between the sensor and the controller.

World frame: x east, y north, z up. Heading 0 faces north; forward is
(sin h, cos h) and right is (cos h, -sin h). Sector depths are the nearest
obstacle distance inside a +-45 degree wedge around each body axis.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache

import numpy as np

from errors import DomainError, GeometryError, ScenarioParseError, ScheduleError
from geometry import AttackGeometry, StereoRig, default_rig
from spoof_constants import (
    MAX_SPEED_MPS,
    OA_THRESHOLD_M,
    SECTOR_HALF_ANGLE_DEG,
    SECTORS,
    SENSOR_RANGE_M,
    SIM_DT_S,
    V_AVOID_MPS,
    VELOCITY_TAU_S,
)

logger = logging.getLogger(__name__)

MAX_DT_S = 0.1
ZERO_VELOCITY_EPS = 1e-9
LOG_COLUMNS = [
    "t", "x", "y", "z", "vx", "vy", "vz", "heading_rad", "mode", "oa_engaged",
    "forward_m", "backward_m", "left_m", "right_m", "source",
]


class FlightMode(str, Enum):
    POSITIONING = "positioning"
    ACTIVETRACK = "activetrack"


class ObservationSource(str, Enum):
    TRUE_SCENE = "TrueScene"
    MANIPULATED = "Manipulated"


# ── Domain types ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class DroneState:
    position: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)
    heading_rad: float = 0.0
    mode: FlightMode = FlightMode.POSITIONING
    oa_engaged: bool = False

    @property
    def speed(self):
        return math.sqrt(sum(v * v for v in self.velocity))


@dataclass(frozen=True)
class DepthObservation:
    sectors: dict
    source: ObservationSource = ObservationSource.TRUE_SCENE

    def __post_init__(self):
        missing = [s for s in SECTORS if s not in self.sectors]
        if missing:
            raise DomainError(f"observation missing sectors {missing}")
        for name, value in self.sectors.items():
            if not value > 0:
                raise DomainError(f"sector {name} depth must be > 0 or inf, got {value}")

    @classmethod
    def clear(cls):
        return cls({s: math.inf for s in SECTORS})


@dataclass(frozen=True)
class InjectionEvent:
    t_start_s: float
    t_end_s: float
    sector: str
    fake_depth_m: float
    mask_truth: bool = False

    def active_at(self, t):
        return self.t_start_s <= t < self.t_end_s


@dataclass(frozen=True)
class InjectionSchedule:
    events: tuple = ()
    repeat_period_s: float = None

    def __post_init__(self):
        events = tuple(sorted(self.events, key=lambda e: (e.t_start_s, e.sector)))
        object.__setattr__(self, "events", events)
        if self.repeat_period_s is not None and not self.repeat_period_s > 0:
            raise ScheduleError(f"repeat_period_s must be > 0, got {self.repeat_period_s}")
        last_end = {}
        for ev in events:
            if ev.sector not in SECTORS:
                raise ScheduleError(f"unknown sector {ev.sector!r}; expected one of {list(SECTORS)}")
            if not ev.fake_depth_m > 0:
                raise ScheduleError(f"fake_depth_m must be > 0, got {ev.fake_depth_m}")
            if not ev.t_end_s > ev.t_start_s:
                raise ScheduleError(f"event ends before it starts: [{ev.t_start_s}, {ev.t_end_s})")
            if self.repeat_period_s is not None and (ev.t_start_s < 0 or ev.t_end_s > self.repeat_period_s):
                raise ScheduleError(
                    f"repeating event [{ev.t_start_s}, {ev.t_end_s}) must fit in one period of {self.repeat_period_s} s")
            if ev.sector in last_end and ev.t_start_s < last_end[ev.sector]:
                raise ScheduleError(
                    f"overlapping events on sector {ev.sector} at t={ev.t_start_s} s")
            last_end[ev.sector] = ev.t_end_s

    def local_time(self, t):
        return math.fmod(t, self.repeat_period_s) if self.repeat_period_s else t


@dataclass(frozen=True)
class ControllerConfig:
    oa_threshold_m: float = OA_THRESHOLD_M
    tau_s: float = VELOCITY_TAU_S
    v_avoid_mps: float = V_AVOID_MPS
    max_speed_mps: float = MAX_SPEED_MPS


@dataclass(frozen=True)
class Obstacle:
    """Vertical cylinder at (x, y) in the world frame."""
    x: float
    y: float
    radius: float = 0.5


@dataclass
class Scenario:
    name: str = "custom"
    mode: FlightMode = FlightMode.POSITIONING
    duration_s: float = 10.0
    dt_s: float = SIM_DT_S
    seed: int = 0
    heading_deg: float = 0.0
    initial_position: tuple = (0.0, 0.0, 0.0)
    initial_velocity: dict = field(default_factory=lambda: {"forward": 0.0, "right": 0.0, "up": 0.0})
    pilot: list = field(default_factory=list)
    schedule: InjectionSchedule = field(default_factory=InjectionSchedule)
    obstacles: list = field(default_factory=list)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    sensor: str = "sectors"
    attack: dict = None
    rig: dict = None
    config: dict = field(default_factory=dict)

    @property
    def heading_rad(self):
        return math.radians(self.heading_deg)


@dataclass
class TrajectoryPoint:
    t: float
    state: DroneState
    observation: DepthObservation


@dataclass
class Trajectory:
    scenario: Scenario
    points: list


# ── Frames ───────────────────────────────────────────────────────────────

def body_axes(heading_rad):
    forward = np.array([math.sin(heading_rad), math.cos(heading_rad), 0.0])
    right = np.array([math.cos(heading_rad), -math.sin(heading_rad), 0.0])
    return forward, right


def sector_vectors(heading_rad):
    forward, right = body_axes(heading_rad)
    return {"forward": forward, "backward": -forward, "left": -right, "right": right}


def body_to_world(cmd, heading_rad):
    forward, right = body_axes(heading_rad)
    world = forward * cmd.get("forward", 0.0) + right * cmd.get("right", 0.0)
    world[2] = cmd.get("up", 0.0)
    return world


# ── Sensing and manipulation ─────────────────────────────────────────────

def sense(state, obstacles, sensor_range_m=SENSOR_RANGE_M):
    """True sector depths from cylindrical obstacles; inf when nothing is in range."""
    depths = {s: math.inf for s in SECTORS}
    if not obstacles:
        return DepthObservation(depths)
    px, py = state.position[0], state.position[1]
    cos_limit = math.cos(math.radians(SECTOR_HALF_ANGLE_DEG))
    vectors = sector_vectors(state.heading_rad)
    for ob in obstacles:
        dx, dy = ob.x - px, ob.y - py
        center = math.hypot(dx, dy)
        distance = max(center - ob.radius, 1e-3)
        if distance > sensor_range_m or center == 0:
            continue
        for name, vec in vectors.items():
            if (dx * vec[0] + dy * vec[1]) / center >= cos_limit - 1e-12:
                depths[name] = min(depths[name], distance)
    return DepthObservation(depths)


def manipulate(obs_true, sched, t):
    """Apply every event active at t: min(true, fake), or fake alone when the event masks the truth."""
    local = sched.local_time(t)
    active = [ev for ev in sched.events if ev.active_at(local)]
    if not active:
        return obs_true
    sectors = dict(obs_true.sectors)
    for ev in active:
        sectors[ev.sector] = ev.fake_depth_m if ev.mask_truth else min(sectors[ev.sector], ev.fake_depth_m)
    return DepthObservation(sectors, ObservationSource.MANIPULATED)


# ── Controller ───────────────────────────────────────────────────────────

def commanded_sectors(pilot_cmd, heading_rad):
    """Sectors whose wedge contains the horizontal command; both on a diagonal, none when hovering."""
    cmd = np.asarray(pilot_cmd, dtype=np.float64)
    horizontal = math.hypot(cmd[0], cmd[1])
    if horizontal < ZERO_VELOCITY_EPS:
        return []
    cos_limit = math.cos(math.radians(SECTOR_HALF_ANGLE_DEG))
    vectors = sector_vectors(heading_rad)
    return [s for s in SECTORS if float(cmd @ vectors[s]) / horizontal >= cos_limit - 1e-12]


def step(state, pilot_cmd, obs, dt, cfg=None):
    """Advance one tick. `pilot_cmd` is a world-frame velocity (east, north, up) in m/s."""
    cfg = cfg or ControllerConfig()
    if not (0 < dt <= MAX_DT_S):
        raise DomainError(f"dt must be in (0, {MAX_DT_S}], got {dt}")

    cmd = np.asarray(pilot_cmd, dtype=np.float64)
    cmd_speed = float(np.linalg.norm(cmd))
    if cmd_speed > cfg.max_speed_mps:
        cmd = cmd * (cfg.max_speed_mps / cmd_speed)

    vectors = sector_vectors(state.heading_rad)
    blocked = [s for s in SECTORS if obs.sectors[s] < cfg.oa_threshold_m]

    target = cmd.copy()
    if state.mode == FlightMode.ACTIVETRACK:
        for s in blocked:
            target -= cfg.v_avoid_mps * vectors[s]
    else:
        # Positioning only reacts to the sector it is being flown into.
        ahead = commanded_sectors(cmd, state.heading_rad)
        blocked = [s for s in blocked if s in ahead]

    v = np.asarray(state.velocity, dtype=np.float64)
    v = v + (target - v) * (dt / cfg.tau_s)

    # Brake: no motion toward a blocked sector.
    for s in blocked:
        toward = float(v @ vectors[s])
        if toward > 0:
            v = v - toward * vectors[s]

    speed = float(np.linalg.norm(v))
    if speed > cfg.max_speed_mps:
        v = v * (cfg.max_speed_mps / speed)

    pos = np.asarray(state.position, dtype=np.float64) + v * dt
    if pos[2] < 0:
        pos[2] = 0.0
        v[2] = max(v[2], 0.0)

    return replace(
        state,
        position=tuple(float(c) for c in pos),
        velocity=tuple(float(c) for c in v),
        oa_engaged=bool(blocked),
    )


# ── Scenario files ───────────────────────────────────────────────────────

SCENARIO_KEYS = {
    "name", "mode", "duration_s", "dt_s", "seed", "heading_deg", "initial_position",
    "initial_velocity", "pilot", "schedule", "obstacles", "controller", "sensor", "attack", "rig",
}
EVENT_KEYS = {"t_start_s", "t_end_s", "sector", "fake_depth_m", "mask_truth"}
CONTROLLER_KEYS = {"oa_threshold_m", "tau_s", "v_avoid_mps", "max_speed_mps"}
BODY_KEYS = {"t_s", "forward", "right", "up"}
ATTACK_KEYS = {
    "separation_m", "distance_m", "lateral_offset_m", "pattern", "mode",
    "intensity_primary", "intensity_secondary", "seed",
}
RIG_KEYS = {
    "focal_length_px", "baseline_m", "image_width_px", "image_height_px",
    "principal_point", "pixel_pitch_m_per_px",
}


def _line_of(text, path):
    """1-based line of a key path such as ("schedule", "events", 1, "sector"); 0 when it cannot be found.

    Each key is searched after the previous one, and an int selects that list
    item (items are flat objects).
    """
    pos, found = 0, -1
    for part in path:
        if isinstance(part, int):
            idx = text.find("[", pos)
            for _ in range(part + 1):
                if idx < 0:
                    break
                idx = text.find("{", idx + 1)
        else:
            idx = text.find(f'"{part}"', pos)
        if idx < 0:
            break
        found, pos = idx, idx + 1
    return text.count("\n", 0, found) + 1 if found >= 0 else 0


class _Parser:
    def __init__(self, text, source):
        self.text = text
        self.source = source

    def fail(self, message, path=()):
        raise ScenarioParseError(message, _line_of(self.text, path) if path else 0, self.source)

    def number(self, data, key, default=None, positive=False, at=()):
        value = data.get(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"'{key}' must be a number, got {value!r}", at + (key,))
        if positive and not value > 0:
            self.fail(f"'{key}' must be > 0, got {value}", at + (key,))
        return float(value)

    def check_keys(self, data, allowed, where, at):
        if not isinstance(data, dict):
            self.fail(f"{where} must be an object", at)
        unknown = sorted(set(data) - allowed)
        if unknown:
            self.fail(f"unknown key(s) in {where}: {unknown}", at + (unknown[0],))

    def items(self, data, key, at=()):
        value = data.get(key, [])
        if not isinstance(value, list):
            self.fail(f"'{key}' must be a list", at + (key,))
        return value

    def body(self, data, where, at):
        self.check_keys(data, BODY_KEYS, where, at)
        return {axis: self.number(data, axis, 0.0, at=at) for axis in ("forward", "right", "up")}

    def parse(self, data):
        self.check_keys(data, SCENARIO_KEYS, "scenario", ())
        sc = Scenario(config=data)
        sc.name = str(data.get("name", "custom"))
        try:
            sc.mode = FlightMode(data.get("mode", FlightMode.POSITIONING.value))
        except ValueError:
            self.fail(f"unknown mode {data.get('mode')!r}", ("mode",))
        sc.duration_s = self.number(data, "duration_s", 10.0, positive=True)
        sc.dt_s = self.number(data, "dt_s", SIM_DT_S, positive=True)
        if sc.dt_s > MAX_DT_S:
            self.fail(f"'dt_s' must be <= {MAX_DT_S}, got {sc.dt_s}", ("dt_s",))
        sc.seed = int(self.number(data, "seed", 0))
        sc.heading_deg = self.number(data, "heading_deg", 0.0)

        pos = data.get("initial_position", [0.0, 0.0, 0.0])
        if not (isinstance(pos, list) and len(pos) == 3 and all(isinstance(c, (int, float)) for c in pos)):
            self.fail("'initial_position' must be [x, y, z] in meters", ("initial_position",))
        sc.initial_position = tuple(float(c) for c in pos)
        sc.initial_velocity = self.body(data.get("initial_velocity", {}), "initial_velocity", ("initial_velocity",))

        pilot = data.get("pilot", [])
        if isinstance(pilot, dict):
            pilot = [pilot]
            paths = [("pilot",)]
        else:
            pilot = self.items(data, "pilot")
            paths = [("pilot", i) for i in range(len(pilot))]
        segments = []
        for seg, at in zip(pilot, paths):
            cmd = self.body(seg, "pilot segment", at)
            cmd["t_s"] = self.number(seg, "t_s", 0.0, at=at)
            segments.append(cmd)
        sc.pilot = sorted(segments, key=lambda s: s["t_s"])

        sched = data.get("schedule", {})
        self.check_keys(sched, {"events", "repeat_period_s"}, "schedule", ("schedule",))
        events = []
        for i, ev in enumerate(self.items(sched, "events", ("schedule",))):
            at = ("schedule", "events", i)
            self.check_keys(ev, EVENT_KEYS, "schedule event", at)
            sector = ev.get("sector")
            if sector not in SECTORS:
                self.fail(f"unknown sector {sector!r}; expected one of {list(SECTORS)}", at + ("sector",))
            events.append(InjectionEvent(
                t_start_s=self.number(ev, "t_start_s", at=at),
                t_end_s=self.number(ev, "t_end_s", at=at),
                sector=sector,
                fake_depth_m=self.number(ev, "fake_depth_m", positive=True, at=at),
                mask_truth=bool(ev.get("mask_truth", False)),
            ))
        period = sched.get("repeat_period_s")
        if period is not None:
            period = self.number(sched, "repeat_period_s", positive=True, at=("schedule",))
        try:
            sc.schedule = InjectionSchedule(tuple(events), period)
        except ScheduleError as e:
            self.fail(str(e), ("schedule",))

        obstacles = []
        for i, ob in enumerate(self.items(data, "obstacles")):
            at = ("obstacles", i)
            self.check_keys(ob, {"x", "y", "radius"}, "obstacle", at)
            obstacles.append(Obstacle(self.number(ob, "x", at=at), self.number(ob, "y", at=at),
                                      self.number(ob, "radius", 0.5, positive=True, at=at)))
        sc.obstacles = obstacles

        ctrl = data.get("controller", {})
        at = ("controller",)
        self.check_keys(ctrl, CONTROLLER_KEYS, "controller", at)
        sc.controller = ControllerConfig(
            oa_threshold_m=self.number(ctrl, "oa_threshold_m", OA_THRESHOLD_M, positive=True, at=at),
            tau_s=self.number(ctrl, "tau_s", VELOCITY_TAU_S, positive=True, at=at),
            v_avoid_mps=self.number(ctrl, "v_avoid_mps", V_AVOID_MPS, at=at),
            max_speed_mps=self.number(ctrl, "max_speed_mps", MAX_SPEED_MPS, positive=True, at=at),
        )

        sc.sensor = data.get("sensor", "sectors")
        if sc.sensor not in ("sectors", "rendered"):
            self.fail(f"'sensor' must be 'sectors' or 'rendered', got {sc.sensor!r}", ("sensor",))
        sc.attack = self.attack(data["attack"]) if "attack" in data else None
        sc.rig = self.rig(data["rig"]) if "rig" in data else None
        if sc.sensor == "rendered" and sc.attack is None:
            self.fail("rendered sensor mode needs an 'attack' object", ("sensor",))
        return sc

    def attack(self, attack):
        at = ("attack",)
        self.check_keys(attack, ATTACK_KEYS, "attack", at)
        if "seed" in attack:
            self.number(attack, "seed", at=at)
        fields = {k: v for k, v in attack.items() if k != "seed"}
        try:
            AttackGeometry(**fields)
        except TypeError:
            missing = sorted({"separation_m", "distance_m"} - set(fields))
            self.fail(f"attack needs {missing}", at)
        except (GeometryError, ValueError) as e:
            self.fail(f"invalid attack: {e}", at)
        return attack

    def rig(self, rig):
        at = ("rig",)
        self.check_keys(rig, RIG_KEYS, "rig", at)
        try:
            StereoRig.from_dict(rig)
        except (GeometryError, TypeError, ValueError) as e:
            self.fail(f"invalid rig: {e}", at)
        return rig


def parse_scenario(text, source="<scenario>"):
    """JSON text -> Scenario. Syntax and schema errors carry the offending line number."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(e.msg, e.lineno, source) from e
    return _Parser(text, source).parse(data)


# ── Built-in maneuvers ───────────────────────────────────────────────────

def builtin_scenario(name, period_s=0.5, duration_s=10.0):
    """JSON-equivalent dicts for the named maneuvers; they go through the same parser as files."""
    if name == "sudden_stop":
        return {
            "name": name, "mode": "positioning", "duration_s": duration_s,
            "pilot": [{"t_s": 0.0, "forward": 2.0}],
            "schedule": {"events": [
                {"t_start_s": 5.0, "t_end_s": max(duration_s, 5.0) + 1.0, "sector": "forward", "fake_depth_m": 0.5},
            ]},
        }
    if name == "drift_away":
        return {
            "name": name, "mode": "activetrack", "duration_s": duration_s,
            "pilot": [{"t_s": 0.0, "forward": 2.0}],
            "initial_velocity": {"forward": 2.0},
            "schedule": {"events": [
                {"t_start_s": 0.0, "t_end_s": duration_s + 1.0, "sector": "right", "fake_depth_m": 4.0},
            ]},
        }
    if name == "shake_fb":
        return {
            "name": name, "mode": "activetrack", "duration_s": duration_s,
            "pilot": [{"t_s": 0.0, "forward": 0.5}],
            "initial_velocity": {"forward": 0.5},
            "schedule": {"repeat_period_s": period_s, "events": [
                {"t_start_s": 0.0, "t_end_s": period_s / 2.0, "sector": "forward", "fake_depth_m": 0.5},
            ]},
        }
    if name == "shake_lr":
        return {
            "name": name, "mode": "activetrack", "duration_s": duration_s,
            "pilot": [{"t_s": 0.0}],
            "initial_velocity": {"right": 0.5},
            "schedule": {"repeat_period_s": period_s, "events": [
                {"t_start_s": 0.0, "t_end_s": period_s / 2.0, "sector": "right", "fake_depth_m": 0.5},
                {"t_start_s": period_s / 2.0, "t_end_s": period_s, "sector": "left", "fake_depth_m": 0.5},
            ]},
        }
    raise KeyError(name)


BUILTIN_SCENARIOS = ("sudden_stop", "drift_away", "shake_fb", "shake_lr")


def load_scenario(path_or_name, period_s=None, duration_s=None):
    """Built-in name or JSON file path -> Scenario."""
    if path_or_name in BUILTIN_SCENARIOS:
        data = builtin_scenario(path_or_name, period_s or 0.5, duration_s or 10.0)
        text = json.dumps(data, indent=2, sort_keys=True)
        return parse_scenario(text, f"<builtin:{path_or_name}>")
    if not os.path.isfile(path_or_name):
        raise ScenarioParseError("no such scenario file or built-in name", 0, str(path_or_name))
    with open(path_or_name, "r", encoding="utf-8") as f:
        text = f.read()
    sc = parse_scenario(text, str(path_or_name))
    if duration_s:
        sc.duration_s = duration_s
        sc.config = dict(sc.config, duration_s=duration_s)
    return sc


# ── Rendered sensor mode ─────────────────────────────────────────────────

@lru_cache(maxsize=32)
def _rendered_fake_depth(attack_json, rig_json):
    # Deferred import keeps the sector-only simulator free of the image stack.
    from analysis import evaluate_attack

    attack = json.loads(attack_json)
    rig = StereoRig.from_dict(json.loads(rig_json)) if rig_json != "null" else default_rig()
    seed = int(attack.pop("seed", 0))
    geo = AttackGeometry(**attack)
    report = evaluate_attack(rig, geo, seed=seed)
    logger.info(f"Rendered sensor: detected={report.detected} measured={report.measured_depth_m:.3f} m")
    return report.measured_depth_m if report.detected else None


def _apply_rendered_sensor(sc):
    measured = _rendered_fake_depth(json.dumps(sc.attack, sort_keys=True), json.dumps(sc.rig, sort_keys=True))
    if measured is None:
        logger.warning("Rendered attack produced no fake-depth blob; injections are dropped")
        return replace(sc, schedule=InjectionSchedule((), sc.schedule.repeat_period_s))
    events = tuple(replace(ev, fake_depth_m=measured) for ev in sc.schedule.events)
    return replace(sc, schedule=InjectionSchedule(events, sc.schedule.repeat_period_s))


# ── Simulation loop ──────────────────────────────────────────────────────

def pilot_command(sc, t):
    active = {"forward": 0.0, "right": 0.0, "up": 0.0}
    for seg in sc.pilot:
        if seg["t_s"] <= t:
            active = seg
        else:
            break
    return body_to_world(active, sc.heading_rad)


def run_scenario(scenario):
    """Run a Scenario (or a built-in name / file path) at fixed dt. Row k is the state at t = k*dt."""
    sc = scenario if isinstance(scenario, Scenario) else load_scenario(scenario)
    if sc.sensor == "rendered":
        sc = _apply_rendered_sensor(sc)

    v0 = body_to_world(sc.initial_velocity, sc.heading_rad)
    state = DroneState(
        position=sc.initial_position,
        velocity=tuple(float(c) for c in v0),
        heading_rad=sc.heading_rad,
        mode=sc.mode,
    )
    n_steps = int(round(sc.duration_s / sc.dt_s))
    points = []
    for k in range(n_steps + 1):
        t = k * sc.dt_s
        obs = manipulate(sense(state, sc.obstacles), sc.schedule, t)
        points.append(TrajectoryPoint(t, state, obs))
        if k == n_steps:
            break
        state = step(state, pilot_command(sc, t), obs, sc.dt_s, sc.controller)
    logger.info(f"Simulated {sc.name}: {n_steps} steps of {sc.dt_s} s")
    return Trajectory(sc, points)


# ── Output ───────────────────────────────────────────────────────────────

def _fmt(value):
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return f"{value:.6f}"
    return str(value)


def write_trajectory_csv(traj, f):
    """Header block with the full scenario config, then one fixed-format row per tick."""
    f.write(f"# scenario: {traj.scenario.name}\n")
    f.write(f"# config: {json.dumps(traj.scenario.config, sort_keys=True)}\n")
    f.write(",".join(LOG_COLUMNS) + "\n")
    for p in traj.points:
        s, o = p.state, p.observation
        row = [f"{p.t:.4f}", *map(_fmt, s.position), *map(_fmt, s.velocity), _fmt(s.heading_rad),
               s.mode.value, "1" if s.oa_engaged else "0",
               *(_fmt(o.sectors[name]) for name in SECTORS), o.source.value]
        f.write(",".join(row) + "\n")


def _sign_changes(values):
    signs = [math.copysign(1.0, v) for v in values if abs(v) > ZERO_VELOCITY_EPS]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def summarize(traj):
    """Scalar summary of a run: clearances, displacements, zero crossings."""
    sc = traj.scenario
    forward, right = body_axes(sc.heading_rad)
    start = np.asarray(traj.points[0].state.position)
    end = np.asarray(traj.points[-1].state.position)
    v_fwd = [float(np.asarray(p.state.velocity) @ forward) for p in traj.points]
    v_lat = [float(np.asarray(p.state.velocity) @ right) for p in traj.points]

    first_injection = next((p for p in traj.points if p.observation.source == ObservationSource.MANIPULATED), None)
    after = None
    if first_injection is not None:
        after = float((end - np.asarray(first_injection.state.position)) @ forward)

    return {
        "scenario": sc.name,
        "steps": len(traj.points) - 1,
        "min_forward_clearance_m": min(p.observation.sectors["forward"] for p in traj.points),
        "forward_displacement_m": float((end - start) @ forward),
        "lateral_displacement_m": float((end - start) @ right),
        "forward_zero_crossings": _sign_changes(v_fwd),
        "lateral_zero_crossings": _sign_changes(v_lat),
        "first_injection_s": first_injection.t if first_injection else None,
        "forward_displacement_after_injection_m": after,
        "oa_engaged_steps": sum(1 for p in traj.points if p.state.oa_engaged),
    }
