"""Leader-follower motion control and the stiffness switching law.

The leader steers toward the target bearing at constant forward speed;
each follower tracks its predecessor's heading. Wheel speeds come from a
proportional heading loop, wheel torques from a proportional speed loop.
Joint stiffness is broadcast uniformly to all joints and toggles between a
low and a high value from two signals measured on the leader: opposition
between its steering torque and the constraint torque, and the estimated
environmental yaw torque.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from numba import njit

from .dynamics import ChainState, RobotBody, RobotState, _wrap


@dataclass(frozen=True)
class ControlGains:
    v0: float = 0.075
    kp: float = 0.5
    km: float = 0.5
    k_low: float = 5.0
    k_high: float = 100.0
    tau_env_threshold: float = 20.0
    switch_dwell: float = 0.2
    tau_max: float = 2.0

    def __post_init__(self):
        if not self.k_low < self.k_high:
            raise ValueError("k_low must be below k_high")
        for name in ("v0", "kp", "km", "k_low", "k_high", "tau_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.tau_env_threshold < 0 or self.switch_dwell < 0:
            raise ValueError("thresholds must be nonnegative")

    @classmethod
    def from_config(cls, cfg) -> "ControlGains":
        return cls(v0=cfg.v0, kp=cfg.kp, km=cfg.km, k_low=cfg.k_low,
                   k_high=cfg.k_high, tau_env_threshold=cfg.tau_env_threshold,
                   switch_dwell=cfg.switch_dwell, tau_max=cfg.tau_max)


@dataclass(frozen=True)
class NavigationTarget:
    x: float
    y: float
    success_radius: float = 0.5
    time_limit: float = 1000.0

    def __post_init__(self):
        if self.success_radius <= 0 or self.time_limit <= 0:
            raise ValueError("success_radius and time_limit must be positive")


# ---------------------------------------------------------------------------
# Scalar kernels (shared with the benchmark trial loop).

@njit(cache=True)
def _motion_command(psi, psi_ref, v0, kp, d, r):
    psi_dot_cmd = kp * _wrap(psi_ref - psi)
    w_l = (v0 - psi_dot_cmd * d / 2.0) / r
    w_r = (v0 + psi_dot_cmd * d / 2.0) / r
    return w_l, w_r


@njit(cache=True)
def _wheel_p(w_cmd, w_actual, km, tau_max):
    tau = km * (w_cmd - w_actual)
    if tau > tau_max:
        tau = tau_max
    elif tau < -tau_max:
        tau = -tau_max
    return tau


@njit(cache=True)
def _switch_wants_low(tau_1, tau_c1, tau_env_hat, threshold):
    return (tau_1 * tau_c1 < 0.0) or (abs(tau_env_hat) >= threshold)


# ---------------------------------------------------------------------------
# Public operations.

def reference_heading(index: int, state: ChainState,
                      target: NavigationTarget) -> float:
    """Reference heading for robot ``index`` (0 is the leader)."""
    if not 0 <= index < state.n_robots:
        raise IndexError(f"robot index {index} out of range")
    if index == 0:
        return math.atan2(target.y - state.q[0, 1], target.x - state.q[0, 0])
    return float(state.q[index - 1, 2])


def motion_command(robot: RobotState, psi_ref: float, gains: ControlGains,
                   body: RobotBody):
    """Commanded (left, right) wheel speeds from the heading loop."""
    return _motion_command(robot.psi, float(psi_ref), gains.v0, gains.kp,
                           body.wheel_separation, body.wheel_radius)


def wheel_p_control(w_cmd: float, w_actual: float, km: float,
                    tau_max: float = 2.0) -> float:
    """Proportional wheel torque, saturated at +-tau_max."""
    return _wheel_p(float(w_cmd), float(w_actual), float(km), float(tau_max))


def estimate_env_torque(state: ChainState, tau_1: float,
                        k_alpha: float) -> float:
    """Estimated environmental yaw torque on the leader.

    Uses the small-inertia approximation: the leader's angular acceleration
    term is dropped, leaving the steering torque and the joint torque.
    """
    if state.n_robots < 2:
        raise ValueError("need at least two robots")
    return -tau_1 + k_alpha * _wrap(state.q[0, 2] - state.q[1, 2])


def stiffness_switch(tau_1: float, tau_c1: float, tau_env_hat: float,
                     gains: ControlGains, current: float,
                     time_in_state: float) -> float:
    """Next broadcast stiffness, K_low or K_high.

    Softens when the leader's steering torque opposes the constraint torque
    or the estimated environmental torque reaches the threshold; stiffens
    otherwise. A pending change is suppressed until the current value has
    been held for the dwell time (anti-chatter; set dwell to 0 to disable).
    """
    low = _switch_wants_low(float(tau_1), float(tau_c1), float(tau_env_hat),
                            gains.tau_env_threshold)
    desired = gains.k_low if low else gains.k_high
    if desired != current and time_in_state < gains.switch_dwell:
        return current
    return desired
