"""Flat trial configuration: one JSON document holds every tunable.

Every benchmark artifact embeds the fully resolved config so a run can be
reproduced from its own output.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path


@dataclass(frozen=True)
class SimConfig:
    """All simulation, control, and harness parameters (SI units)."""

    # integration
    dt: float = 0.005
    speed_limit: float = 7.5            # divergence guard, 100 * v0

    # robot body (homogeneous chain)
    mass: float = 2.0
    yaw_inertia: float = 0.02
    wheel_radius: float = 0.05
    wheel_separation: float = 0.2
    half_link: float = 0.15             # joint attachment offset L

    # environment force model
    gravity: float = 9.81
    mu: float = 0.8
    c_v: float = 2.0                    # linear drag, N*s/m
    c_psi: float = 0.05                 # yaw drag, N*m*s/rad
    lateral_damping: float = 400.0      # lateral traction gain, N*s/m
    block_slope_deg: float = 70.0       # drive force vanishes at this slope

    # inter-robot joint (translational penalty + yaw spring)
    k_trans: float = 5000.0
    k_trans_damping: float = -1.0       # <0 means critical damping for mass/2
    k_beta: float = 15.0                # pitch stiffness, inert in planar model
    k_gamma: float = 30.0               # roll stiffness, inert in planar model

    # motion control
    v0: float = 0.075
    kp: float = 0.5
    km: float = 0.5
    tau_max: float = 2.0

    # stiffness switching
    k_low: float = 5.0
    k_high: float = 100.0
    tau_env_threshold: float = 20.0
    switch_dwell: float = 0.2

    # motorized-joint baseline servo
    mj_joint_kp: float = 400.0
    mj_joint_kd: float = 10.0

    # planner
    astar_resolution: float = 0.25
    astar_w_slope: float = 1.0
    astar_w_tip: float = 3.0
    lookahead: float = 0.6

    # trial geometry
    n_robots: int = 6
    start: tuple = (0.0, 0.0)
    target: tuple = (9.0, 9.0)
    success_radius: float = 0.5
    time_limit: float = 1000.0
    region_lo: float = -1.0             # navigation region bound (square)
    region_hi: float = 10.0
    slope_resolution: float = 0.05      # slope-statistics grid spacing

    # logging
    log_interval: float = 0.1           # trajectory CSV cadence, sim seconds
    series_interval: float = 1.0        # in-record time series cadence

    def resolved_k_trans_damping(self) -> float:
        """Translational joint damping; negative sentinel means critical."""
        if self.k_trans_damping >= 0.0:
            return self.k_trans_damping
        return 2.0 * math.sqrt(self.k_trans * self.mass / 2.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start"] = list(self.start)
        d["target"] = list(self.target)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("start", "target"):
            if key in kwargs:
                kwargs[key] = tuple(float(v) for v in kwargs[key])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "SimConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_overrides(self, overrides: dict) -> "SimConfig":
        merged = self.to_dict()
        known = {f.name for f in fields(type(self))}
        unknown = set(overrides) - known
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        merged.update(overrides)
        return SimConfig.from_dict(merged)


def parse_set_overrides(pairs: list[str]) -> dict:
    """Parse ``--set key=value`` strings; values are JSON when possible."""
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"expected key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out
