"""Simulation scenarios: landmark maps, sampling bounds, prior sweeps.

A scenario fixes everything about the world that is shared across Monte Carlo
runs and comparison arms: where the landmarks sit, the box poses are sampled
from, and the fixed prior trajectory flown before planning starts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eskf import Landmark
from .planner import Box, Pose6D
from .rotations import so3_exp


@dataclass
class Scenario:
    name: str
    landmarks: list
    bounds: Box
    start: Pose6D           # where both truth and estimate begin
    prior_poses: list       # waypoints of the prior sweep, flown in order


def cube_landmarks(half=10.0, center=(0.0, 0.0, 0.0)):
    """Eight landmarks on the corners of a cube (the default range map)."""
    c = np.asarray(center, dtype=float)
    out = []
    i = 0
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                out.append(Landmark(id=i, position=c + half * np.array([sx, sy, sz])))
                i += 1
    return out


def lawnmower_poses(half=3.0, rows=4, z=0.0):
    """Boustrophedon sweep in the z-plane, constant identity attitude.

    Deliberately rotation-free: the prior localizes the platform without
    exciting the bias states, leaving bias convergence to the planner.
    """
    ys = np.linspace(-half, half, rows)
    poses = []
    for i, y in enumerate(ys):
        xs = (half, -half) if i % 2 else (-half, half)
        for x in xs:
            poses.append(Pose6D(position=np.array([x, y, z]), rotation=np.eye(3)))
    return poses


def figure_eight_poses(radius=3.0, n=8, z=1.0, tilt=0.25):
    """Waypoints around a lemniscate with yaw tracking and a gentle roll wobble."""
    poses = []
    for k in range(n):
        u = 2.0 * np.pi * k / n
        p = np.array([radius * np.sin(u), radius * np.sin(u) * np.cos(u), z])
        phi = np.array([tilt * np.sin(u), tilt * np.cos(u), 0.5 * u - np.pi / 2.0])
        poses.append(Pose6D(position=p, rotation=so3_exp(phi)))
    poses.append(poses[0])
    return poses


def make_scenario(name, map_half=6.0, workspace_half=4.0):
    """Build a named scenario.

    ``cube``: landmarks on the corners of a cube of half-extent ``map_half``,
    pose sampling inside a centered box of half-extent ``workspace_half``,
    stationary initialization dwell as the prior.  ``lawnmower``: same map
    with a single-leg sweep prior instead of the dwell.  ``figure_eight``:
    a 10 m landmark cube with the figure-eight waypoints as the prior.

    The dwell and the sweep are rotation-free on purpose: they localize the
    vehicle but leave the accelerometer bias weakly observed (under constant
    attitude, bias and tilt stay entangled), so planning starts with bias
    uncertainty above typical thresholds.
    """
    if name == "cube":
        # initialization dwell: position/velocity converge from the range
        # bursts while the accelerometer bias stays loosely observed (constant
        # attitude keeps bias and tilt entangled)
        start = Pose6D(position=np.array([-2.0, -2.0, 0.0]),
                       rotation=np.eye(3))
        bounds = Box(lo=-workspace_half * np.ones(3),
                     hi=workspace_half * np.ones(3))
        return Scenario(name=name, landmarks=cube_landmarks(half=map_half),
                        bounds=bounds, start=start, prior_poses=[])
    if name == "lawnmower":
        prior = lawnmower_poses(half=min(2.0, workspace_half), rows=1)
        bounds = Box(lo=-workspace_half * np.ones(3), hi=workspace_half * np.ones(3))
        return Scenario(name=name, landmarks=cube_landmarks(half=map_half),
                        bounds=bounds, start=prior[0], prior_poses=prior[1:])
    if name == "figure_eight":
        prior = figure_eight_poses()
        bounds = Box(lo=-workspace_half * np.ones(3), hi=workspace_half * np.ones(3))
        return Scenario(name=name, landmarks=cube_landmarks(half=10.0),
                        bounds=bounds, start=prior[0], prior_poses=prior[1:])
    raise KeyError(f"unknown scenario {name!r}")
