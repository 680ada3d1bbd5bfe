"""Targets, trajectories and scatterer sampling.

Extended targets are parametric point-scatterer clusters with aspect-angle
weighting; amplitudes follow the Swerling-1 model (exponential power, held
for one coherent processing interval).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .config import C

PEDESTRIAN_BOX = (0.6, 0.6, 1.8)
CAR_BOX = (4.5, 1.8, 1.5)


@dataclass
class Scatterer:
    offset: np.ndarray           # position relative to the target root (m)
    mean_rcs: float              # m^2
    normal: np.ndarray | None = None   # outward normal for aspect weighting

    def __post_init__(self):
        if self.mean_rcs <= 0:
            raise ValueError("mean_rcs must be positive")


@dataclass
class Trajectory:
    start: np.ndarray            # m
    velocity: np.ndarray         # m/s, constant
    duration: float              # s
    bs_position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def position(self, t: float) -> np.ndarray:
        return np.asarray(self.start, float) + np.asarray(self.velocity, float) * t


@dataclass
class Target:
    kind: str                    # point | pedestrian | car | clutter
    scatterers: list
    trajectory: Trajectory
    fluctuating: bool = True     # Swerling-1 draws when True, fixed power otherwise

    @property
    def root(self) -> np.ndarray:
        return self.trajectory.position(0.0)

    def root_at(self, t: float) -> np.ndarray:
        return self.trajectory.position(t)


@dataclass
class ScatterSample:
    range_m: float
    azimuth_deg: float
    radial_velocity_mps: float
    amplitude: complex


# -- target factories --------------------------------------------------------

def point_target(trajectory: Trajectory, mean_rcs: float = 1.0,
                 fluctuating: bool = True) -> Target:
    sc = [Scatterer(offset=np.zeros(3), mean_rcs=mean_rcs)]
    return Target("point", sc, trajectory, fluctuating)


def clutter_pole(position, mean_rcs: float = 1.0,
                 bs_position=(0, 0, 0)) -> Target:
    traj = Trajectory(start=np.asarray(position, float), velocity=np.zeros(3),
                      duration=np.inf, bs_position=np.asarray(bs_position, float))
    sc = [Scatterer(offset=np.zeros(3), mean_rcs=mean_rcs)]
    return Target("clutter", sc, traj, fluctuating=False)


def _cluster_offsets(n: int, box, seed: int) -> np.ndarray:
    """Deterministic scatterer layout filling a (dx, dy, dz) box."""
    rng = np.random.default_rng(seed)
    dx, dy, dz = box
    pts = rng.uniform(-0.5, 0.5, size=(n, 3)) * np.array([dx, dy, dz])
    pts[:, 2] += dz / 2.0          # root sits at ground level under the cluster
    return pts


def pedestrian_target(trajectory: Trajectory, total_rcs: float = 1.0,
                      fluctuating: bool = True) -> Target:
    """27 scatterers in a 0.6 x 0.6 x 1.8 m bounding box."""
    offsets = _cluster_offsets(27, PEDESTRIAN_BOX, seed=271)
    normals = _outward_normals(offsets)
    per = total_rcs / 27.0
    sc = [Scatterer(offset=o, mean_rcs=per, normal=n)
          for o, n in zip(offsets, normals)]
    return Target("pedestrian", sc, trajectory, fluctuating)


def car_target(trajectory: Trajectory, total_rcs: float = 10.0,
               fluctuating: bool = True) -> Target:
    """56 scatterers covering a 4.5 x 1.8 x 1.5 m mid-size hull."""
    offsets = _cluster_offsets(56, CAR_BOX, seed=563)
    normals = _outward_normals(offsets)
    per = total_rcs / 56.0
    sc = [Scatterer(offset=o, mean_rcs=per, normal=n)
          for o, n in zip(offsets, normals)]
    return Target("car", sc, trajectory, fluctuating)


def _outward_normals(offsets: np.ndarray) -> np.ndarray:
    centered = offsets - offsets.mean(axis=0)
    norms = np.linalg.norm(centered, axis=1, keepdims=True)
    norms[norms < 1e-9] = 1.0
    return centered / norms


# -- standard trajectories ---------------------------------------------------

def tangential_trajectory(speed: float = 1.5, duration: float = 1.0) -> Trajectory:
    """Crossing motion: start (-5, 10, 0), +x direction, BS at the origin."""
    return Trajectory(start=np.array([-5.0, 10.0, 0.0]),
                      velocity=np.array([speed, 0.0, 0.0]),
                      duration=duration, bs_position=np.zeros(3))


def radial_trajectory(speed: float = 1.5, duration: float = 1.0) -> Trajectory:
    """Receding motion: BS at (-13, 15, 0), start (-3, 15, 0), +x direction."""
    return Trajectory(start=np.array([-3.0, 15.0, 0.0]),
                      velocity=np.array([speed, 0.0, 0.0]),
                      duration=duration,
                      bs_position=np.array([-13.0, 15.0, 0.0]))


# -- sampling ----------------------------------------------------------------

def geometry_at(target: Target, t: float):
    """Per-scatterer (range, azimuth deg, closing velocity, aspect weight)."""
    traj = target.trajectory
    if not 0.0 <= t <= traj.duration:
        raise ValueError("t outside the trajectory span")
    root = target.root_at(t)
    bs = np.asarray(traj.bs_position, float)
    vel = np.asarray(traj.velocity, float)
    out = []
    for sc in target.scatterers:
        rel = root + sc.offset - bs
        rng_m = float(np.linalg.norm(rel))
        az = float(np.degrees(np.arctan2(rel[0], rel[1])))
        # Positive radial velocity means the range is closing.
        v_r = float(-np.dot(rel, vel) / max(rng_m, 1e-12))
        weight = 1.0
        if sc.normal is not None:
            look = -rel / max(rng_m, 1e-12)
            weight = max(abs(float(np.dot(look, sc.normal))), 0.05)
        out.append((rng_m, az, v_r, weight))
    return out


def draw_amplitudes(target: Target, rng: np.random.Generator) -> np.ndarray:
    """Complex reflection coefficients for one coherent processing interval."""
    n = len(target.scatterers)
    rcs = np.array([sc.mean_rcs for sc in target.scatterers])
    phases = np.exp(2j * np.pi * rng.random(n))
    if target.fluctuating:
        g = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
        return np.sqrt(rcs) * g
    return np.sqrt(rcs) * phases


def sample_scene(target: Target, t: float, rng) -> list[ScatterSample]:
    """Scatterer tuples relative to the BS with fresh amplitude draws."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    geo = geometry_at(target, t)
    amps = draw_amplitudes(target, rng)
    return [ScatterSample(r, az, v, complex(a * np.sqrt(w)))
            for (r, az, v, w), a in zip(geo, amps)]


RCS_CHOICES = (10.0, 1.0, 0.1, 0.01)


def spawn_multi_target_scene(rng_seed) -> list[Target]:
    """Poisson(2) point targets (min 1) in a 60 m x 60 m sector, radial motion."""
    rng = np.random.default_rng(rng_seed)
    count = max(1, int(rng.poisson(2.0)))
    targets = []
    for _ in range(count):
        pos = np.array([rng.uniform(-30.0, 30.0), rng.uniform(0.5, 60.0), 0.0])
        speed = rng.uniform(-30.0, 30.0)
        radial = pos / np.linalg.norm(pos)
        traj = Trajectory(start=pos, velocity=speed * radial, duration=np.inf,
                          bs_position=np.zeros(3))
        rcs = float(rng.choice(RCS_CHOICES))
        targets.append(point_target(traj, mean_rcs=rcs))
    return targets


# -- external interfaces -----------------------------------------------------

_FACTORIES = {
    "point": point_target,
    "pedestrian": pedestrian_target,
    "car": car_target,
}


def load_scene(path: str) -> list[Target]:
    """Targets from a JSON description: kind, start, velocity, rcs, duration."""
    with open(path) as fh:
        spec = json.load(fh)
    targets = []
    for entry in spec["targets"]:
        traj = Trajectory(start=np.asarray(entry["start"], float),
                          velocity=np.asarray(entry["velocity"], float),
                          duration=float(entry.get("duration", 1.0)),
                          bs_position=np.asarray(entry.get("bs_position",
                                                           [0, 0, 0]), float))
        kind = entry["kind"]
        if kind == "clutter":
            targets.append(clutter_pole(entry["start"], entry.get("rcs", 1.0),
                                        entry.get("bs_position", (0, 0, 0))))
            continue
        factory = _FACTORIES[kind]
        kwargs = {"fluctuating": bool(entry.get("fluctuating", True))}
        if kind == "point":
            kwargs["mean_rcs"] = float(entry.get("rcs", 1.0))
        else:
            kwargs["total_rcs"] = float(entry.get("rcs", 1.0))
        targets.append(factory(traj, **kwargs))
    return targets


def write_ground_truth_csv(target: Target, times, path: str) -> None:
    """Root-point truth log: t, range, azimuth, closing velocity."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "range_m", "azimuth_deg", "radial_velocity_mps"])
        for t in times:
            root = target.root_at(t)
            rel = root - target.trajectory.bs_position
            rng_m = float(np.linalg.norm(rel))
            az = float(np.degrees(np.arctan2(rel[0], rel[1])))
            v_r = float(-np.dot(rel, target.trajectory.velocity) / max(rng_m, 1e-12))
            writer.writerow([f"{t:.6f}", f"{rng_m:.4f}", f"{az:.4f}", f"{v_r:.4f}"])


def root_truth(target: Target, t: float) -> tuple[float, float, float]:
    rel = target.root_at(t) - target.trajectory.bs_position
    rng_m = float(np.linalg.norm(rel))
    az = float(np.degrees(np.arctan2(rel[0], rel[1])))
    v_r = float(-np.dot(rel, target.trajectory.velocity) / max(rng_m, 1e-12))
    return rng_m, az, v_r
