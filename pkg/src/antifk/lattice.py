"""Configurations on the integer lattice and the operators acting on them.

A configuration assigns a point of R^d to every site of Z. Numerically we
store values on a symmetric window {-N, ..., N} and extend beyond it by a
deterministic tail rule, either following a rotation vector (homomorphism
extension) or following the anchor configuration generated by a zero-set
sampler. All operators that need neighbors outside the window read them
from the tail.

Distances use the sup norm over sites of the Euclidean norm in R^d. This
is an extended metric: configurations with different asymptotic slopes are
at distance +inf.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificateError

__all__ = [
    "Window",
    "RotationVector",
    "TailRule",
    "HomomorphismTail",
    "AnchorTail",
    "DerivedTail",
    "Configuration",
    "homomorphism_configuration",
    "anchor_configuration",
    "ext_distance",
    "shift",
    "translate",
    "nearest_anchor",
    "rotation_vector_estimate",
    "configuration_to_csv",
    "configuration_from_csv",
]

# Sites probed on each side when two tails follow the same slope but
# different rules; beyond the probe the tail sup is not sampled.
TAIL_PROBE = 64


@dataclass(frozen=True)
class Window:
    """Symmetric site window {-half_width, ..., half_width}."""

    half_width: int
    dimension: int = 1

    def __post_init__(self):
        if self.half_width < 1:
            raise ValueError(f"half_width must be >= 1, got {self.half_width}")
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")

    @property
    def n_sites(self) -> int:
        return 2 * self.half_width + 1

    def sites(self) -> np.ndarray:
        return np.arange(-self.half_width, self.half_width + 1)

    def index(self, i: int) -> int:
        if abs(i) > self.half_width:
            raise ValueError(f"site {i} outside window of half-width {self.half_width}")
        return i + self.half_width


@dataclass(frozen=True)
class RotationVector:
    """Average drift per site: the homomorphism i -> i * rho."""

    rho: np.ndarray

    def __post_init__(self):
        arr = np.atleast_1d(np.asarray(self.rho, dtype=float))
        if arr.ndim != 1:
            raise ValueError("rotation vector must be one-dimensional")
        object.__setattr__(self, "rho", arr)

    @property
    def dimension(self) -> int:
        return self.rho.shape[0]

    def __call__(self, i) -> np.ndarray:
        i = np.asarray(i, dtype=float)
        return np.multiply.outer(i, self.rho) if i.ndim else i * self.rho

    def norm(self) -> float:
        return float(np.linalg.norm(self.rho))

    def signature(self):
        return ("rotation", self.rho.tobytes())


def as_rotation(rho) -> RotationVector:
    if isinstance(rho, RotationVector):
        return rho
    return RotationVector(np.atleast_1d(np.asarray(rho, dtype=float)))


class TailRule:
    """Deterministic extension of a configuration beyond its window."""

    kind: str = "abstract"

    def value(self, i: int) -> np.ndarray:
        raise NotImplementedError

    def values(self, sites: np.ndarray) -> np.ndarray:
        return np.stack([self.value(int(i)) for i in np.atleast_1d(sites)])

    @property
    def slope(self) -> np.ndarray:
        """Asymptotic drift per site; distances between tails with
        different slopes are infinite."""
        raise NotImplementedError

    def signature(self):
        raise NotImplementedError


@dataclass(frozen=True)
class HomomorphismTail(TailRule):
    """u_i = rho(i) outside the window."""

    rotation: RotationVector
    kind: str = field(default="homomorphism", init=False)

    def value(self, i: int) -> np.ndarray:
        return self.rotation(float(i))

    def values(self, sites: np.ndarray) -> np.ndarray:
        return self.rotation(np.asarray(sites, dtype=float))

    @property
    def slope(self) -> np.ndarray:
        return self.rotation.rho

    def signature(self):
        return ("homomorphism", self.rotation.signature())


@dataclass(frozen=True)
class AnchorTail(TailRule):
    """u_i = nearest anchor to rho(i) outside the window.

    The sampler is any object with points_near(x, radius) and signature();
    radius is the covering radius guaranteeing a nonempty query.
    """

    rotation: RotationVector
    sampler: object
    radius: float
    kind: str = field(default="anchor", init=False)

    def value(self, i: int) -> np.ndarray:
        return nearest_anchor(self.rotation, i, self.sampler, self.radius)

    @property
    def slope(self) -> np.ndarray:
        return self.rotation.rho

    def signature(self):
        return ("anchor", self.rotation.signature(), self.sampler.signature(), self.radius)


@dataclass(frozen=True)
class DerivedTail(TailRule):
    """Tail of a shifted/translated configuration.

    Reads the parent configuration (window values included, which matters
    near the window edge where i + offset may land inside the parent
    window) and applies the vertical translation.
    """

    parent: "Configuration"
    site_offset: int
    translation: np.ndarray
    kind: str = field(default="derived", init=False)

    def value(self, i: int) -> np.ndarray:
        return self.parent.value(i + self.site_offset) + self.translation

    @property
    def slope(self) -> np.ndarray:
        return self.parent.tail.slope

    def signature(self):
        return (
            "derived",
            self.parent.tail.signature(),
            self.parent.values.tobytes(),
            self.site_offset,
            np.asarray(self.translation, dtype=float).tobytes(),
        )


@dataclass(frozen=True)
class Configuration:
    """Window values plus a tail rule.

    values has shape (n_sites, dimension), row j holding the value at
    site j - half_width.
    """

    window: Window
    values: np.ndarray
    tail: TailRule

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape != (self.window.n_sites, self.window.dimension):
            raise ValueError(
                f"values shape {vals.shape} does not match window "
                f"({self.window.n_sites}, {self.window.dimension})"
            )
        object.__setattr__(self, "values", vals)

    @property
    def dimension(self) -> int:
        return self.window.dimension

    @property
    def half_width(self) -> int:
        return self.window.half_width

    def value(self, i: int) -> np.ndarray:
        if abs(i) <= self.window.half_width:
            return self.values[i + self.window.half_width]
        return self.tail.value(i)

    def values_at(self, sites) -> np.ndarray:
        sites = np.atleast_1d(np.asarray(sites))
        out = np.empty((sites.shape[0], self.dimension))
        inside = np.abs(sites) <= self.window.half_width
        if inside.any():
            out[inside] = self.values[sites[inside] + self.window.half_width]
        for j in np.nonzero(~inside)[0]:
            out[j] = self.tail.value(int(sites[j]))
        return out

    def extended(self, halo: int) -> np.ndarray:
        """Values on {-N-halo, ..., N+halo}, tail supplying the halo."""
        if halo == 0:
            return self.values
        n = self.window.half_width
        left = self.values_at(np.arange(-n - halo, -n))
        right = self.values_at(np.arange(n + 1, n + halo + 1))
        return np.concatenate([left, self.values, right], axis=0)

    def with_values(self, values: np.ndarray) -> "Configuration":
        return Configuration(self.window, values, self.tail)

    def to_json_dict(self) -> dict:
        d = {
            "window": self.window.half_width,
            "dimension": self.window.dimension,
            "tail_rule": self.tail.kind,
            "values": self.values.tolist(),
        }
        slope = getattr(self.tail, "slope", None)
        if slope is not None:
            d["rotation"] = np.asarray(slope, dtype=float).tolist()
        return d


def homomorphism_configuration(rho, window: Window) -> Configuration:
    """The configuration u_i = rho(i), extended by itself."""
    rot = as_rotation(rho)
    if rot.dimension != window.dimension:
        raise ValueError("rotation vector dimension does not match window")
    vals = rot(window.sites().astype(float))
    return Configuration(window, vals, HomomorphismTail(rot))


def anchor_configuration(rho, sampler, radius: float, window: Window) -> Configuration:
    """Nearest-anchor configuration a_i = argmin_{z in O} |z - rho(i)|."""
    rot = as_rotation(rho)
    if rot.dimension != window.dimension:
        raise ValueError("rotation vector dimension does not match window")
    vals = np.stack([nearest_anchor(rot, int(i), sampler, radius) for i in window.sites()])
    return Configuration(window, vals, AnchorTail(rot, sampler, radius))


def nearest_anchor(rho, i: int, sampler, radius: float) -> np.ndarray:
    """Closest point of the sampled zero set to rho(i).

    Ties (to within an 1e-12 relative margin) break to the
    lexicographically smallest point.
    """
    rot = as_rotation(rho)
    x = rot(float(i))
    # tiny slack so that boundary cases (distance exactly R) are found
    pts = np.atleast_2d(sampler.points_near(x, radius * (1 + 1e-12) + 1e-12))
    if pts.size == 0:
        raise CertificateError(
            f"no anchor within radius {radius} of rho({i}) = {x}"
        )
    dists = np.linalg.norm(pts - x, axis=1)
    best = dists.min()
    tol = 1e-12 * (1.0 + abs(best))
    candidates = pts[dists <= best + tol]
    order = np.lexsort(candidates.T[::-1])  # lexicographic by leading component
    return candidates[order[0]].copy()


def _tails_equal(t1: TailRule, t2: TailRule) -> bool:
    try:
        return t1.signature() == t2.signature()
    except NotImplementedError:
        return t1 is t2


def ext_distance(u: Configuration, v: Configuration, tail_probe: int = TAIL_PROBE) -> float:
    """Sup-norm distance over sites.

    Window sites are compared exactly. Tails contribute zero when the two
    rules coincide, +inf when their slopes differ, and otherwise a sampled
    sup over tail_probe sites on each side (stopping early if a tail rule
    cannot produce values that far out).
    """
    if u.window != v.window:
        raise ValueError("configurations live on different windows")
    core = float(np.linalg.norm(u.values - v.values, axis=1).max())
    if _tails_equal(u.tail, v.tail):
        return core
    slope_gap = np.linalg.norm(np.asarray(u.tail.slope) - np.asarray(v.tail.slope))
    if slope_gap > 0:
        return float("inf")
    n = u.window.half_width
    worst = core
    for side in (1, -1):
        for k in range(1, tail_probe + 1):
            i = side * (n + k)
            try:
                gap = float(np.linalg.norm(u.tail.value(i) - v.tail.value(i)))
            except CertificateError:
                break  # finite zero-set tail ran out of validity
            worst = max(worst, gap)
    return worst


def shift(u: Configuration, k: int) -> Configuration:
    """Horizontal shift: result_i = u_{i+k}."""
    if abs(k) > u.window.half_width:
        raise ValueError(
            f"shift {k} exceeds window half-width {u.window.half_width}"
        )
    vals = u.values_at(u.window.sites() + k)
    zero = np.zeros(u.dimension)
    return Configuration(u.window, vals, DerivedTail(u, k, zero))


def translate(u: Configuration, c) -> Configuration:
    """Vertical translation: result_i = u_i + c."""
    c = np.broadcast_to(np.atleast_1d(np.asarray(c, dtype=float)), (u.dimension,))
    return Configuration(u.window, u.values + c, DerivedTail(u, 0, c.copy()))


def rotation_vector_estimate(u: Configuration) -> np.ndarray:
    """Two-endpoint drift estimate (u_N - u_{-N}) / (2N)."""
    n = u.window.half_width
    return (u.values[-1] - u.values[0]) / (2.0 * n)


def configuration_to_csv(u: Configuration, path) -> None:
    import csv

    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["site"] + [f"u_{j}" for j in range(u.dimension)])
        for i, row in zip(u.window.sites(), u.values):
            w.writerow([int(i)] + [repr(float(x)) for x in row])


def configuration_from_csv(path, tail: TailRule) -> Configuration:
    import csv

    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, data = rows[0], rows[1:]
    dim = len(header) - 1
    sites = np.array([int(r[0]) for r in data])
    vals = np.array([[float(x) for x in r[1:]] for r in data])
    n = int(sites.max())
    if not np.array_equal(sites, np.arange(-n, n + 1)):
        raise ValueError("csv sites do not form a symmetric window")
    return Configuration(Window(n, dim), vals, tail)


def configuration_to_json(u: Configuration, path) -> None:
    with open(path, "w") as f:
        json.dump(u.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
