"""Procedural sinusoidal heightfield terrain.

The surface is a three-component sum of phase-shifted sines applied
independently along x and y, scaled vertically:

    H(x, y) = [sum_i w_i * A_i * (sin(2*pi*P_i + f_i*x) + sin(2*pi*P_i + f_i*y))] * dzs

Terrains are classified by average slope over the navigation region into
group A (moderate, < 30 deg) and group B (rugged, > 30 deg); both groups
cap the maximum slope at 70 deg.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

WEIGHTS = (1.0, 0.5, 0.1)

# Random draw ranges for the generator. The slope bands below are empty or
# unreachable for ranges much wider/narrower than these.
AMP_RANGE = (0.1, 1.5)        # A_i, meters
PHASE_RANGE = (0.0, 1.0)      # P_i, cycles
FREQ_RANGE = (0.2, 2.5)       # f_i, rad/m
DZS_RANGE = (0.3, 1.5)        # vertical scale

GROUP_SPLIT_DEG = 30.0
MAX_SLOPE_DEG = 70.0

# Region and grid spacing used to classify terrains: covers the benchmark
# start (0,0) and target (9,9) with 1 m margin.
SLOPE_REGION = (-1.0, 10.0)
SLOPE_RESOLUTION = 0.05


class TerrainSamplingError(RuntimeError):
    """Raised when rejection sampling exhausts its attempt budget."""


@dataclass(frozen=True)
class TerrainParams:
    """Parameters of one generated terrain surface."""

    amplitudes: tuple      # A_1..A_3, m
    phases: tuple          # P_1..P_3, cycles
    frequencies: tuple     # f_1..f_3, rad/m
    vertical_scale: float  # dzs
    seed: int = 0
    group: str = "unclassified"
    weights: tuple = WEIGHTS

    def __post_init__(self):
        for name in ("amplitudes", "phases", "frequencies", "weights"):
            vals = getattr(self, name)
            if len(vals) != 3:
                raise ValueError(f"{name} must have 3 components")
        if any(a < 0 for a in self.amplitudes):
            raise ValueError("amplitudes must be nonnegative")
        if any(f < 0 for f in self.frequencies):
            raise ValueError("frequencies must be nonnegative")
        if self.vertical_scale <= 0:
            raise ValueError("vertical_scale must be positive")
        if self.group not in ("A", "B", "unclassified"):
            raise ValueError(f"unknown group {self.group!r}")

    def arrays(self):
        """(A, P, f, w, dzs) as float64 arrays/scalar, for the hot kernels."""
        return (
            np.asarray(self.amplitudes, dtype=np.float64),
            np.asarray(self.phases, dtype=np.float64),
            np.asarray(self.frequencies, dtype=np.float64),
            np.asarray(self.weights, dtype=np.float64),
            float(self.vertical_scale),
        )


FLAT_TERRAIN = TerrainParams(
    amplitudes=(0.0, 0.0, 0.0),
    phases=(0.0, 0.0, 0.0),
    frequencies=(1.0, 1.0, 1.0),
    vertical_scale=1.0,
)


@dataclass(frozen=True)
class SlopeStats:
    """Average/max surface slope over a sampled rectangular region."""

    average_slope_deg: float
    max_slope_deg: float
    sample_resolution: float
    region: tuple  # (x_lo, x_hi, y_lo, y_hi)

    def __post_init__(self):
        if not 0.0 <= self.average_slope_deg <= self.max_slope_deg <= 90.0:
            raise ValueError("slope stats out of order: "
                             f"avg={self.average_slope_deg}, max={self.max_slope_deg}")


def height(params: TerrainParams, x, y):
    """Surface height H(x, y) in meters; broadcasts over array inputs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = np.zeros(np.broadcast(x, y).shape)
    for w, a, p, f in zip(params.weights, params.amplitudes,
                          params.phases, params.frequencies):
        out = out + w * a * (np.sin(2.0 * np.pi * p + f * x)
                             + np.sin(2.0 * np.pi * p + f * y))
    out = out * params.vertical_scale
    return float(out) if out.ndim == 0 else out


def gradient(params: TerrainParams, x, y):
    """Analytic (dH/dx, dH/dy); broadcasts over array inputs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    gx = np.zeros(np.broadcast(x, y).shape)
    gy = np.zeros(np.broadcast(x, y).shape)
    for w, a, p, f in zip(params.weights, params.amplitudes,
                          params.phases, params.frequencies):
        gx = gx + w * a * f * np.cos(2.0 * np.pi * p + f * x)
        gy = gy + w * a * f * np.cos(2.0 * np.pi * p + f * y)
    gx = gx * params.vertical_scale
    gy = gy * params.vertical_scale
    if gx.ndim == 0:
        return float(gx), float(gy)
    return gx, gy


def slope_deg(params: TerrainParams, x, y):
    """Surface slope atan(|grad H|) in degrees; broadcasts over arrays."""
    gx, gy = gradient(params, x, y)
    return np.degrees(np.arctan(np.hypot(gx, gy)))


def _grid_1d(lo: float, hi: float, resolution: float) -> np.ndarray:
    n = int(math.floor((hi - lo) / resolution + 1e-9))
    return lo + resolution * np.arange(n + 1)


def slope_stats(params: TerrainParams, region, resolution: float) -> SlopeStats:
    """Average and maximum slope over a uniform grid on ``region``.

    ``region`` is (x_lo, x_hi, y_lo, y_hi); a 2-tuple (lo, hi) is taken as a
    square. The x- and y-gradients are separable, so the grid is evaluated
    as an outer product of two 1-D sweeps.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if len(region) == 2:
        region = (region[0], region[1], region[0], region[1])
    x_lo, x_hi, y_lo, y_hi = region
    if not (x_hi > x_lo and y_hi > y_lo):
        raise ValueError("region must be non-degenerate")

    xs = _grid_1d(x_lo, x_hi, resolution)
    ys = _grid_1d(y_lo, y_hi, resolution)
    gx, _ = gradient(params, xs, np.zeros_like(xs))
    _, gy = gradient(params, np.zeros_like(ys), ys)
    norm2 = gx[:, None] ** 2 + gy[None, :] ** 2
    slopes = np.degrees(np.arctan(np.sqrt(norm2)))
    return SlopeStats(
        average_slope_deg=float(slopes.mean()),
        max_slope_deg=float(slopes.max()),
        sample_resolution=float(resolution),
        region=(float(x_lo), float(x_hi), float(y_lo), float(y_hi)),
    )


def group_of(stats: SlopeStats) -> str:
    """Classify slope stats into group A/B; raise if in neither band."""
    if stats.max_slope_deg > MAX_SLOPE_DEG:
        raise ValueError("max slope exceeds cap")
    if stats.average_slope_deg < GROUP_SPLIT_DEG:
        return "A"
    if stats.average_slope_deg > GROUP_SPLIT_DEG:
        return "B"
    raise ValueError("average slope exactly on the split")


def sample_terrain(group: str, seed: int, max_rejections: int = 10_000,
                   region=SLOPE_REGION,
                   resolution: float = SLOPE_RESOLUTION) -> TerrainParams:
    """Draw terrain parameters for the requested group.

    A pure function of (group, seed): a seeded generator proposes parameter
    sets until one lands in the group's average-slope band with max slope
    within the cap. Raises TerrainSamplingError past ``max_rejections``.
    """
    if group not in ("A", "B"):
        raise ValueError(f"group must be 'A' or 'B', got {group!r}")
    rng = np.random.default_rng(seed)
    last = None
    for _ in range(max_rejections):
        amps = rng.uniform(*AMP_RANGE, size=3)
        phases = rng.uniform(*PHASE_RANGE, size=3)
        freqs = rng.uniform(*FREQ_RANGE, size=3)
        dzs = rng.uniform(*DZS_RANGE)
        candidate = TerrainParams(
            amplitudes=tuple(amps),
            phases=tuple(phases),
            frequencies=tuple(freqs),
            vertical_scale=float(dzs),
            seed=int(seed),
            group=group,
        )
        stats = slope_stats(candidate, region, resolution)
        last = stats
        if stats.max_slope_deg > MAX_SLOPE_DEG:
            continue
        if group == "A" and stats.average_slope_deg < GROUP_SPLIT_DEG:
            return candidate
        if group == "B" and stats.average_slope_deg > GROUP_SPLIT_DEG:
            return candidate
    raise TerrainSamplingError(
        f"no group-{group} terrain within {max_rejections} draws for seed {seed} "
        f"(last candidate: avg={last.average_slope_deg:.1f} deg, "
        f"max={last.max_slope_deg:.1f} deg)")


def terrain_id(params: TerrainParams) -> str:
    return f"{params.group}-{params.seed}"


def _generator_version() -> str:
    from . import GENERATOR_VERSION
    return GENERATOR_VERSION


def terrain_record(params: TerrainParams, stats: SlopeStats) -> dict:
    return {
        "seed": int(params.seed),
        "A": list(params.amplitudes),
        "P": list(params.phases),
        "f": list(params.frequencies),
        "dzs": params.vertical_scale,
        "weights": list(params.weights),
        "group": params.group,
        "avg_slope_deg": stats.average_slope_deg,
        "max_slope_deg": stats.max_slope_deg,
        "generator_version": _generator_version(),
    }


def save_terrain(params: TerrainParams, stats: SlopeStats, path) -> dict:
    record = terrain_record(params, stats)
    path = Path(path)
    try:
        with open(path, "w") as fh:
            json.dump(record, fh, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write terrain file {path}: {exc}") from exc
    return record


def load_terrain(path) -> tuple[TerrainParams, dict]:
    """Read a terrain file; returns (params, full record)."""
    path = Path(path)
    try:
        with open(path) as fh:
            record = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read terrain file {path}: {exc}") from exc
    params = TerrainParams(
        amplitudes=tuple(record["A"]),
        phases=tuple(record["P"]),
        frequencies=tuple(record["f"]),
        vertical_scale=record["dzs"],
        seed=record["seed"],
        group=record["group"],
        weights=tuple(record["weights"]),
    )
    return params, record


def generate_dataset(count_per_group: int, base_seed: int, out_dir,
                     groups=("A", "B"), max_rejections: int = 10_000) -> dict:
    """Write ``count_per_group`` terrain files per group plus a manifest.

    Per-terrain seeds derive deterministically from ``base_seed``, so reruns
    reproduce every file byte for byte. Returns the manifest dict; the
    manifest file lands at ``out_dir``/manifest.json.
    """
    if count_per_group < 1:
        raise ValueError("count_per_group must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    seeds = np.random.SeedSequence(base_seed).generate_state(
        len(groups) * count_per_group, dtype=np.uint64)
    entries = []
    idx = 0
    for group in groups:
        for k in range(count_per_group):
            seed = int(seeds[idx])
            idx += 1
            params = sample_terrain(group, seed, max_rejections)
            stats = slope_stats(params, SLOPE_REGION, SLOPE_RESOLUTION)
            name = f"terrain_{group}_{k:03d}.json"
            record = save_terrain(params, stats, out_dir / name)
            record["file"] = name
            record["terrain_id"] = terrain_id(params)
            entries.append(record)

    manifest = {
        "generator_version": _generator_version(),
        "base_seed": int(base_seed),
        "count_per_group": int(count_per_group),
        "groups": list(groups),
        "parameter_ranges": {
            "A": list(AMP_RANGE),
            "P": list(PHASE_RANGE),
            "f": list(FREQ_RANGE),
            "dzs": list(DZS_RANGE),
        },
        "slope_region": list(SLOPE_REGION),
        "slope_resolution": SLOPE_RESOLUTION,
        "terrains": entries,
    }
    manifest_path = out_dir / "manifest.json"
    try:
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write manifest {manifest_path}: {exc}") from exc
    return manifest


# ---------------------------------------------------------------------------
# Scalar kernels shared with the dynamics inner loop.

@njit(cache=True)
def height_at(A, P, F, W, dzs, x, y):
    h = 0.0
    for i in range(3):
        h += W[i] * A[i] * (math.sin(2.0 * math.pi * P[i] + F[i] * x)
                            + math.sin(2.0 * math.pi * P[i] + F[i] * y))
    return h * dzs


@njit(cache=True)
def gradient_at(A, P, F, W, dzs, x, y):
    gx = 0.0
    gy = 0.0
    for i in range(3):
        gx += W[i] * A[i] * F[i] * math.cos(2.0 * math.pi * P[i] + F[i] * x)
        gy += W[i] * A[i] * F[i] * math.cos(2.0 * math.pi * P[i] + F[i] * y)
    return gx * dzs, gy * dzs
