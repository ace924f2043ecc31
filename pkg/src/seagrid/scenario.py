"""World definition and evolution: nodes, fleets, obstacles, drift, limits.

Configuration is TOML; every key has a default taken from the reference
parameter table (2 GHz carrier, 128/4/4/128 antennas, 2 users per group,
48.45/47/47/48.45 dBm budgets, -110 dB noise, K = 20, 1 s slots).  dB-valued
quantities live in the file with a _db/_dbm/_dbi suffix and are converted to
linear units here, never downstream.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

GROUPS = ("tbs", "usv", "uav", "sat")


class ScenarioError(ValueError):
    pass


def _vec2(x, key):
    a = np.asarray(x, dtype=float)
    if a.shape != (2,) or not np.all(np.isfinite(a)):
        raise ScenarioError(f"{key}: expected a finite 2-vector, got {x!r}")
    return a


@dataclass
class AreaLayout:
    coastal: float = 2000.0
    offshore: float = 8000.0
    middle: float = 30000.0


@dataclass
class NodeKinematics:
    max_speed: float
    max_steering_angle: float            # radians
    drift_velocity: np.ndarray
    initial_position: np.ndarray
    safe_radius_obstacle: float = 100.0
    safe_radius_ship: float = 50.0


@dataclass
class Obstacle:
    center: np.ndarray
    radius: float                        # required clearance, see check_safety


@dataclass
class Fleet:
    positions: np.ndarray                # (M, 2)
    velocities: np.ndarray               # (M, 2)


@dataclass
class ScenarioConfig:
    carrier_wavelength: float
    antenna_spacing: float
    antenna_counts: dict
    user_counts: dict
    heights: dict
    power_budgets: dict                  # watts
    noise_variance: float                # watts
    rician_factor: float
    slot_length: float
    horizon: int
    convergence_threshold: float
    rain_fading: dict                    # mean_db, std_db
    sat_beam: dict                       # max_gain (linear), aperture_diameter (m)
    uav_ref_gain: float
    rx_antenna_gain: float               # linear
    csi_uncertainty_ratio: float
    rng_seed: int
    areas: AreaLayout
    usv_kinematics: NodeKinematics
    uav_kinematics: NodeKinematics
    fleets: dict                         # group -> Fleet
    obstacles: list
    sat_ground_point: np.ndarray         # boresight/zenith point of the satellite
    nlos_freeze: bool = False

    def user_ids(self, group=None):
        gs = GROUPS if group is None else (group,)
        return [f"{g}{k}" for g in gs for k in range(self.user_counts[g])]


@dataclass
class WorldState:
    slot_index: int
    tbs_position: np.ndarray
    usv_position: np.ndarray
    uav_position: np.ndarray
    user_positions: dict
    user_velocities: dict
    obstacles: list


@dataclass
class KinematicsReport:
    speed_residual: float
    steering_residual: float
    degenerate_heading: bool

    @property
    def ok(self):
        return self.speed_residual <= 0 and self.steering_residual <= 0


@dataclass
class SafetyReport:
    rows: list                           # (label, residual), residual <= 0 is safe
    max_residual: float

    @property
    def ok(self):
        return self.max_residual <= 0


def _db(x):
    return 10.0 ** (x / 10.0)


def _default_tree():
    return {
        "carrier_wavelength": 0.15,
        "antenna_spacing": 0.075,
        "noise_variance_db": -110.0,
        "rician_factor": 20.0,
        "slot_length": 1.0,
        "horizon": 1000,
        "convergence_threshold": 0.001,
        "uav_ref_gain": 0.15 / (4 * math.pi),
        "rx_antenna_gain_dbi": 15.0,
        "csi_uncertainty_ratio": 0.0,
        "rng_seed": 0,
        "nlos_freeze": False,
        "sat_ground_point": None,
        "antenna_counts": {"tbs": 128, "usv": 4, "uav": 4, "sat": 128},
        "user_counts": {"tbs": 2, "usv": 2, "uav": 2, "sat": 2},
        "heights": {"tbs": 35.0, "usv": 15.0, "uav": 200.0, "user": 10.0,
                    "sat": 500000.0},
        "power_budgets_dbm": {"tbs": 48.45, "usv": 47.0, "uav": 47.0,
                              "sat": 48.45},
        "rain_fading": {"mean_db": -2.6, "std_db": math.sqrt(1.63)},
        "sat_beam": {"max_gain_dbi": 55.0, "aperture_diameter": 1.0},
        "areas": {"coastal": 2000.0, "offshore": 8000.0, "middle": 30000.0},
        "usv_kinematics": {
            "max_speed": 37.5, "max_steering_deg": 60.0,
            "drift_velocity": [5.0, 0.0], "initial_position": [0.0, 0.0],
            "safe_radius_obstacle": 100.0, "safe_radius_ship": 50.0,
        },
        "uav_kinematics": {
            "max_speed": 50.0, "max_steering_deg": 60.0,
            "drift_velocity": [5.0, 0.0], "initial_position": [0.0, 0.0],
            "safe_radius_obstacle": 100.0, "safe_radius_ship": 50.0,
        },
        "fleets": {
            "tbs": {"positions": [[600.0, 200.0], [600.0, -200.0]],
                    "velocities": [[0.0, 0.0], [0.0, 0.0]]},
            "usv": {"positions": [[2500.0, 150.0], [2500.0, -150.0]],
                    "velocities": [[0.0, 0.0], [0.0, 0.0]]},
            "uav": {"positions": [[12000.0, 300.0], [12000.0, -300.0]],
                    "velocities": [[0.0, 0.0], [0.0, 0.0]]},
            "sat": {"positions": [[40000.0, 300.0], [40000.0, -300.0]],
                    "velocities": [[0.0, 0.0], [0.0, 0.0]]},
        },
        "obstacles": [],
    }


def _merge(base, override, path=""):
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ScenarioError(f"unknown key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ScenarioError(f"{where}: expected a table")
            _merge(base[key], val, where + ".")
        else:
            base[key] = val
    return base


def _positive(val, key, strict=True):
    try:
        v = float(val)
    except (TypeError, ValueError):
        raise ScenarioError(f"{key}: not a number") from None
    if not math.isfinite(v) or (v <= 0 if strict else v < 0):
        raise ScenarioError(f"{key}: must be {'positive' if strict else 'nonnegative'}")
    return v


def load_scenario(config_text: str) -> ScenarioConfig:
    """Parse TOML text, merge over defaults, validate, convert units."""
    try:
        raw = tomllib.loads(config_text)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"parse failure: {e}") from None
    tree = _merge(_default_tree(), raw)

    counts = {}
    for g in GROUPS:
        c = tree["antenna_counts"][g]
        if not isinstance(c, int) or c < 1:
            raise ScenarioError(f"antenna_counts.{g}: must be an integer >= 1")
        counts[g] = c
    users = {}
    for g in GROUPS:
        c = tree["user_counts"][g]
        if not isinstance(c, int) or c < 1:
            raise ScenarioError(f"user_counts.{g}: must be an integer >= 1")
        users[g] = c
    heights = {k: _positive(v, f"heights.{k}") for k, v in tree["heights"].items()}
    powers = {g: _db(float(tree["power_budgets_dbm"][g]) - 30.0) for g in GROUPS}

    def kin(name):
        t = tree[name]
        ang = math.radians(_positive(t["max_steering_deg"], f"{name}.max_steering_deg"))
        if ang > math.pi:
            raise ScenarioError(f"{name}.max_steering_deg: must be <= 180")
        return NodeKinematics(
            max_speed=_positive(t["max_speed"], f"{name}.max_speed"),
            max_steering_angle=ang,
            drift_velocity=_vec2(t["drift_velocity"], f"{name}.drift_velocity"),
            initial_position=_vec2(t["initial_position"], f"{name}.initial_position"),
            safe_radius_obstacle=_positive(t["safe_radius_obstacle"],
                                           f"{name}.safe_radius_obstacle", strict=False),
            safe_radius_ship=_positive(t["safe_radius_ship"],
                                       f"{name}.safe_radius_ship", strict=False),
        )

    usv_kin, uav_kin = kin("usv_kinematics"), kin("uav_kinematics")

    fleets = {}
    for g in GROUPS:
        t = tree["fleets"][g]
        pos = np.asarray(t["positions"], dtype=float)
        vel = np.asarray(t["velocities"], dtype=float)
        if pos.shape != (users[g], 2):
            raise ScenarioError(
                f"fleets.{g}.positions: need {users[g]} 2-vectors, got shape {pos.shape}")
        if vel.shape != pos.shape or not np.all(np.isfinite(vel)):
            raise ScenarioError(f"fleets.{g}.velocities: shape/finiteness mismatch")
        fleets[g] = Fleet(pos, vel)

    obstacles = []
    for k, entry in enumerate(tree["obstacles"]):
        extra = set(entry) - {"center", "radius"}
        if extra:
            raise ScenarioError(f"obstacles[{k}]: unknown key {sorted(extra)[0]}")
        radius = entry.get("radius", usv_kin.safe_radius_obstacle)
        obstacles.append(Obstacle(_vec2(entry["center"], f"obstacles[{k}].center"),
                                  _positive(radius, f"obstacles[{k}].radius")))

    areas = AreaLayout(**{k: _positive(v, f"areas.{k}")
                          for k, v in tree["areas"].items()})
    if not areas.coastal < areas.offshore < areas.middle:
        raise ScenarioError("areas: radii must be strictly increasing")

    rain = {"mean_db": float(tree["rain_fading"]["mean_db"]),
            "std_db": _positive(tree["rain_fading"]["std_db"],
                                "rain_fading.std_db", strict=False)}
    # the boresight power gain is the square of the pattern peak, so the
    # dBi figure maps to the linear peak through 10^(dBi/20)
    sat_beam = {"max_gain": 10.0 ** (_positive(tree["sat_beam"]["max_gain_dbi"],
                                               "sat_beam.max_gain_dbi") / 20.0),
                "aperture_diameter": _positive(tree["sat_beam"]["aperture_diameter"],
                                               "sat_beam.aperture_diameter")}

    ground = tree["sat_ground_point"]
    if ground is None:
        ground = fleets["sat"].positions.mean(axis=0)
    else:
        ground = _vec2(ground, "sat_ground_point")

    horizon = tree["horizon"]
    if not isinstance(horizon, int) or horizon < 1:
        raise ScenarioError("horizon: must be an integer >= 1")

    return ScenarioConfig(
        carrier_wavelength=_positive(tree["carrier_wavelength"], "carrier_wavelength"),
        antenna_spacing=_positive(tree["antenna_spacing"], "antenna_spacing"),
        antenna_counts=counts,
        user_counts=users,
        heights=heights,
        power_budgets=powers,
        noise_variance=_db(float(tree["noise_variance_db"])),
        rician_factor=_positive(tree["rician_factor"], "rician_factor"),
        slot_length=_positive(tree["slot_length"], "slot_length"),
        horizon=horizon,
        convergence_threshold=_positive(tree["convergence_threshold"],
                                        "convergence_threshold"),
        rain_fading=rain,
        sat_beam=sat_beam,
        uav_ref_gain=_positive(tree["uav_ref_gain"], "uav_ref_gain"),
        rx_antenna_gain=_db(_positive(tree["rx_antenna_gain_dbi"],
                                      "rx_antenna_gain_dbi")),
        csi_uncertainty_ratio=_positive(tree["csi_uncertainty_ratio"],
                                        "csi_uncertainty_ratio", strict=False),
        rng_seed=int(tree["rng_seed"]),
        areas=areas,
        usv_kinematics=usv_kin,
        uav_kinematics=uav_kin,
        fleets=fleets,
        obstacles=obstacles,
        sat_ground_point=ground,
        nlos_freeze=bool(tree["nlos_freeze"]),
    )


def load_scenario_path(path) -> ScenarioConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return load_scenario(text)


def load_profile(name: str) -> ScenarioConfig:
    from importlib import resources
    ref = resources.files(__package__) / "profiles" / f"{name}.toml"
    return load_scenario(ref.read_text(encoding="utf-8"))


def initial_world(config: ScenarioConfig) -> WorldState:
    pos, vel = {}, {}
    for g in GROUPS:
        fl = config.fleets[g]
        for k in range(config.user_counts[g]):
            uid = f"{g}{k}"
            pos[uid] = fl.positions[k].copy()
            vel[uid] = fl.velocities[k].copy()
    return WorldState(
        slot_index=0,
        tbs_position=np.zeros(2),
        usv_position=config.usv_kinematics.initial_position.copy(),
        uav_position=config.uav_kinematics.initial_position.copy(),
        user_positions=pos,
        user_velocities=vel,
        obstacles=list(config.obstacles),
    )


def step_users(state: WorldState, dt: float) -> WorldState:
    """Advance users by dt * velocity; relays are moved by the optimizer."""
    pos = {uid: p + dt * state.user_velocities[uid]
           for uid, p in state.user_positions.items()}
    return replace(state, slot_index=state.slot_index + 1, user_positions=pos,
                   user_velocities=dict(state.user_velocities))


def validate_kinematics(prev2, prev1, nxt, kin: NodeKinematics, dt: float,
                        base_axis=(1.0, 0.0)) -> KinematicsReport:
    """Signed residuals for the speed and steering limits of one slot step.

    Speed: ||next - prev1 - dt*drift|| - dt*Vmax.  Steering: cos(phi_max) -
    cos(turn angle between raw consecutive displacements); on the first slot
    (prev2 is None) the incoming heading is the base axis.
    """
    prev1 = np.asarray(prev1, dtype=float)
    nxt = np.asarray(nxt, dtype=float)
    step = nxt - prev1
    speed_res = float(np.linalg.norm(step - dt * kin.drift_velocity)) \
        - dt * kin.max_speed
    heading = np.asarray(base_axis, dtype=float) if prev2 is None \
        else prev1 - np.asarray(prev2, dtype=float)
    n1, n2 = np.linalg.norm(heading), np.linalg.norm(step)
    if n1 == 0.0 or n2 == 0.0:
        # no turn is defined for a stationary node; treated as satisfied
        return KinematicsReport(speed_res, 0.0, True)
    cos_turn = float(heading @ step) / (n1 * n2)
    return KinematicsReport(speed_res, math.cos(kin.max_steering_angle) - cos_turn,
                            False)


def check_safety(state: WorldState, kin: NodeKinematics,
                 position=None) -> SafetyReport:
    """Clearance residuals of the surface relay against obstacles and users."""
    q = state.usv_position if position is None else np.asarray(position, float)
    rows = []
    for k, ob in enumerate(state.obstacles):
        rows.append((f"obstacle{k}", ob.radius - float(np.linalg.norm(q - ob.center))))
    for uid, p in state.user_positions.items():
        rows.append((f"ship:{uid}",
                     kin.safe_radius_ship - float(np.linalg.norm(q - p))))
    worst = max((r for _, r in rows), default=0.0)
    return SafetyReport(rows, worst)
