"""Filterbank-geometry metrics and the deformation-stability harness.

The distance between two Morlet filters is the Euclidean distance of their
(sigma, xi, gamma) triples plus the arc distance of their orientations on
the unit circle; the distance between two banks is the total over a
minimum-cost perfect bipartite matching of their filters.

Deformations warp an image as x(u - tau(u)) with bilinear interpolation,
for six families (rotation, scale, shear, translation and two fixed
polynomial flows), each with the strength cap it was studied at.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.optimize import linear_sum_assignment

from .filterbank import FilterBank
from .morlet import MorletParams
from .scattering import forward


class SizeMismatch(ValueError):
    """Bipartite matching needs equally sized filter sets."""


class StrengthOutOfRange(ValueError):
    """Deformation strength outside the family's studied range."""


def arc_distance(t1: float, t2: float) -> float:
    """Arc distance between two angles on the unit circle."""
    d = abs(t1 - t2) % (2 * np.pi)
    return min(d, 2 * np.pi - d)


def morlet_distance(m1: MorletParams, m2: MorletParams) -> float:
    """||(sigma1, xi1, gamma1) - (sigma2, xi2, gamma2)||_2 + arcdist(theta)."""
    vec1 = np.array([m1.sigma, m1.xi, m1.gamma])
    vec2 = np.array([m2.sigma, m2.xi, m2.gamma])
    return float(np.linalg.norm(vec1 - vec2) + arc_distance(m1.theta, m2.theta))


@dataclass
class FilterMatch:
    """Minimum-cost perfect matching between two filter sets."""

    pairs: list[tuple[int, int]]
    costs: list[float]
    total: float


def _param_list(bank) -> list[MorletParams]:
    if isinstance(bank, FilterBank):
        return bank.params
    return list(bank)


def filterbank_distance(a, b) -> FilterMatch:
    """Exact minimum-cost bipartite matching over the pairwise filter
    distances (Jonker-Volgenant via scipy); accepts FilterBank objects or
    plain parameter lists."""
    pa, pb = _param_list(a), _param_list(b)
    if len(pa) != len(pb):
        raise SizeMismatch(f"bank sizes differ: {len(pa)} vs {len(pb)}")
    cost = np.array([[morlet_distance(x, y) for y in pb] for x in pa])
    rows, cols = linear_sum_assignment(cost)
    pairs = list(zip(rows.tolist(), cols.tolist()))
    costs = [float(cost[i, j]) for i, j in pairs]
    return FilterMatch(pairs=pairs, costs=costs, total=float(sum(costs)))


def distance_trajectory(runlog, reference) -> list[tuple[int, float]]:
    """Per-epoch filterbank distance of a RunLog's parameter snapshots to a
    reference bank (e.g. the tight-frame initialization)."""
    ref = _param_list(reference)
    series = []
    for rec in runlog.records:
        if rec.get("params") is None:
            raise ValueError("runlog carries no parameter snapshots")
        params = [MorletParams(*row) for row in rec["params"]]
        series.append((rec["epoch"], filterbank_distance(params, ref).total))
    return series


def write_trajectory_csv(series, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "distance"])
        writer.writerows(series)


DEFORMATION_MAX = {
    "rotation": 10.0,     # degrees
    "scale": 1.4,         # zoom factor (range [1, 1.4])
    "shear": 5.0,         # degrees of shear angle along the first axis
    "translation": 22.0,  # pixels
    "custom1": 1.0,
    "custom2": 1.0,
}


@dataclass(frozen=True)
class DeformationSpec:
    kind: str
    strength: float

    def __post_init__(self):
        if self.kind not in DEFORMATION_MAX:
            raise StrengthOutOfRange(f"unknown deformation kind {self.kind!r}")
        lo = 1.0 if self.kind == "scale" else 0.0
        if not lo <= self.strength <= DEFORMATION_MAX[self.kind]:
            raise StrengthOutOfRange(
                f"{self.kind} strength {self.strength} outside "
                f"[{lo}, {DEFORMATION_MAX[self.kind]}]")


def polynomial_tau(kind: str, u1, u2, eps: float):
    """The two fixed polynomial flows, on coordinates in [-1, 1]^2."""
    if kind == "custom1":
        return (eps * (0.3 * u1 ** 2 + 0.2 * u2 ** 2),
                eps * (0.2 * (0.2 * u1)))
    if kind == "custom2":
        return (eps * 0.3 * (u1 ** 2 + u2 ** 2),
                -eps * 0.3 * (2.0 * u1 * u2))
    raise ValueError(f"not a polynomial flow: {kind!r}")


def _sample_positions(spec: DeformationSpec, n: int):
    """Sampling coordinates p(u) = u - tau(u) for the inverse warp."""
    c = (n - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(n, dtype=float),
                             np.arange(n, dtype=float), indexing="ij")
    r, q = rows - c, cols - c
    kind, eps = spec.kind, spec.strength
    if kind == "rotation":
        a = np.deg2rad(eps)
        pr = c + np.cos(a) * r + np.sin(a) * q
        pq = c - np.sin(a) * r + np.cos(a) * q
    elif kind == "scale":
        pr = c + r / eps
        pq = c + q / eps
    elif kind == "shear":
        t = np.tan(np.deg2rad(eps))
        pr = c + r + t * q
        pq = c + q
    elif kind == "translation":
        pr = rows
        pq = cols - eps
    else:
        # normalized coordinates; displacements mapped back to pixels by n/2
        tau1, tau2 = polynomial_tau(kind, r / (n / 2.0), q / (n / 2.0), eps)
        pr = rows - tau1 * (n / 2.0)
        pq = cols - tau2 * (n / 2.0)
    return pr, pq


def deform(x: np.ndarray, spec: DeformationSpec, fill: str = "zero") -> np.ndarray:
    """Warp the image as x(u - tau(u)) with bilinear interpolation.

    Out-of-bounds samples are zero-filled by default; ``fill='wrap'`` uses
    periodic boundary conditions instead.  Zero strength (scale 1) returns
    the input bit-for-bit.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"expected a square image, got {x.shape}")
    if spec.strength == (1.0 if spec.kind == "scale" else 0.0):
        return x.copy()
    pr, pq = _sample_positions(spec, x.shape[0])
    mode = {"zero": "constant", "wrap": "grid-wrap"}[fill]
    return map_coordinates(x, [pr, pq], order=1, mode=mode, cval=0.0)


def stability_curve(fb: FilterBank, x: np.ndarray, kind: str,
                    strengths, workers: int = 1) -> np.ndarray:
    """Normalized scattering distances ||S(x) - S(x_eps)|| / ||S(x)|| for a
    sweep of deformation strengths."""
    base, _ = forward(x, fb, workers=workers)
    ref = base.stack().ravel()
    ref_norm = np.linalg.norm(ref)
    out = []
    for eps in strengths:
        warped = deform(x, DeformationSpec(kind=kind, strength=float(eps)))
        got, _ = forward(warped, fb, workers=workers)
        out.append(np.linalg.norm(got.stack().ravel() - ref) / ref_norm)
    return np.array(out)


def write_stability_csv(rows, path) -> None:
    """Rows of (kind, strength, normalized_distance)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "strength", "normalized_distance"])
        writer.writerows(rows)
