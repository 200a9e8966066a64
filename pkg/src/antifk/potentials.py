"""On-site potentials, expansion certificates, and the local inverse.

A potential V: R^d -> R enters the equilibrium equation through its
gradient psi = grad V. Solvability in the strong-coupling regime rests on
a certificate (O, R, r, m) for psi: a set O of nondegenerate zeros meeting
every closed R-ball, such that psi expands distances by at least m on the
closed r-ball around each zero. The certificate also licenses a local
inverse of psi on each ball, which is the elementary step of the
fixed-point solver.

Certificates produced here are sampled, not rigorous: zeros are polished
from a grid scan and the expansion/covering properties are verified on
random samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import math

import numpy as np

from .errors import CertificateError, CertificationError, ConvergenceError, DomainError

__all__ = [
    "TrigSumPotential",
    "DeloneBumpPotential",
    "cosine_potential",
    "truncated_almost_periodic",
    "PeriodicZeroSet",
    "FiniteZeroSet",
    "AubryCertificate",
    "cosine_certificate",
    "estimate_aubry",
    "local_inverse",
    "potential_derivatives",
    "potential_to_dict",
    "potential_from_dict",
]


# --------------------------------------------------------------------------
# potential families


class TrigSumPotential:
    """V(x) = sum_j A_j cos(<w_j, x> + phi_j)."""

    family = "trig-sum"

    def __init__(self, terms):
        terms = list(terms)
        if not terms:
            raise ValueError("trig-sum potential needs at least one term")
        amps, freqs, phases = [], [], []
        for amplitude, frequency, phase in terms:
            amps.append(float(amplitude))
            freqs.append(np.atleast_1d(np.asarray(frequency, dtype=float)))
            phases.append(float(phase))
        dims = {f.shape[0] for f in freqs}
        if len(dims) != 1:
            raise ValueError("all frequency vectors must share a dimension")
        self.amplitudes = np.array(amps)
        self.frequencies = np.stack(freqs)
        self.phases = np.array(phases)
        self.dimension = self.frequencies.shape[1]

    def _angles(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.frequencies.T + self.phases

    def value(self, x):
        th = self._angles(x)
        return (self.amplitudes * np.cos(th)).sum(axis=-1)

    def gradient(self, x):
        th = self._angles(x)
        return -(self.amplitudes * np.sin(th)) @ self.frequencies

    def hessian(self, x):
        th = self._angles(x)
        c = self.amplitudes * np.cos(th)
        return -np.einsum("...m,mi,mj->...ij", c, self.frequencies, self.frequencies)

    def hessian_sup_bound(self) -> float:
        norms2 = (self.frequencies**2).sum(axis=1)
        return float(np.abs(self.amplitudes) @ norms2)

    def period(self):
        """Common period for d = 1 when all frequencies are commensurable,
        else None."""
        if self.dimension != 1:
            return None
        freqs = np.abs(self.frequencies[:, 0])
        freqs = freqs[freqs > 0]
        if freqs.size == 0:
            return None
        ref = freqs.max()
        denominators = []
        for f in freqs:
            ratio = f / ref
            frac = Fraction(ratio).limit_denominator(4096)
            if abs(ratio - float(frac)) > 1e-9 * max(1.0, ratio):
                return None
            denominators.append(frac.denominator)
        n = math.lcm(*denominators)
        return 2.0 * math.pi * n / ref

    def to_dict(self):
        return {
            "family": self.family,
            "terms": [
                {"amplitude": float(a), "frequency": f.tolist(), "phase": float(p)}
                for a, f, p in zip(self.amplitudes, self.frequencies, self.phases)
            ],
        }


class _TruncatedAlmostPeriodic(TrigSumPotential):
    family = "almost-periodic-truncated"

    def __init__(self, term_count, amplitude_ratio, frequency_ratio):
        self.term_count = int(term_count)
        self.amplitude_ratio = float(amplitude_ratio)
        self.frequency_ratio = float(frequency_ratio)
        terms = [
            (amplitude_ratio**n, [frequency_ratio**n], 0.0)
            for n in range(self.term_count)
        ]
        super().__init__(terms)

    def tail_bounds(self) -> dict:
        """Sup-norm bounds on the dropped series tail, up to second
        derivatives (geometric sums of |a|^n, |a b|^n, |a b^2|^n)."""
        a, b, M = self.amplitude_ratio, self.frequency_ratio, self.term_count
        out = {}
        for order, ratio in (("c0", a), ("c1", a * b), ("c2", a * b * b)):
            out[order] = abs(ratio) ** M / (1.0 - abs(ratio))
        return out

    def to_dict(self):
        return {
            "family": self.family,
            "term_count": self.term_count,
            "amplitude_ratio": self.amplitude_ratio,
            "frequency_ratio": self.frequency_ratio,
        }


def cosine_potential() -> TrigSumPotential:
    return TrigSumPotential([(1.0, [1.0], 0.0)])


def truncated_almost_periodic(term_count: int = 8, amplitude_ratio: float = 0.5,
                              frequency_ratio: float = 1.0 / math.pi):
    """Truncation of sum_n a^n cos(b^n x); the defaults give incommensurable
    frequencies, so the truncated potential has no period."""
    if not 0 < abs(amplitude_ratio) < 1:
        raise ValueError("amplitude_ratio must lie in (0, 1)")
    return _TruncatedAlmostPeriodic(term_count, amplitude_ratio, frequency_ratio)


class DeloneBumpPotential:
    """V(x) = -depth * sum_{p in points} exp(-|x - p|^2 / width^2)."""

    family = "delone-bump"

    def __init__(self, points, width: float, depth: float = 1.0):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] == 0:
            raise ValueError("delone-bump potential needs at least one point")
        self.points = pts
        self.width = float(width)
        self.depth = float(depth)
        self.dimension = pts.shape[1]
        if self.width <= 0:
            raise ValueError("width must be positive")

    def _diffs(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., None, :] - self.points  # (..., P, d)

    def value(self, x):
        diffs = self._diffs(x)
        s = (diffs**2).sum(axis=-1) / self.width**2
        return -self.depth * np.exp(-s).sum(axis=-1)

    def gradient(self, x):
        diffs = self._diffs(x)
        s = (diffs**2).sum(axis=-1) / self.width**2
        w = np.exp(-s) * (2.0 * self.depth / self.width**2)
        return (w[..., None] * diffs).sum(axis=-2)

    def hessian(self, x):
        diffs = self._diffs(x)
        s = (diffs**2).sum(axis=-1) / self.width**2
        e = np.exp(-s)
        eye = np.eye(self.dimension)
        term_iso = (2.0 * self.depth / self.width**2) * e  # (..., P)
        outer = np.einsum("...pi,...pj->...pij", diffs, diffs)
        h = term_iso[..., None, None] * eye - (
            4.0 * self.depth / self.width**4
        ) * e[..., None, None] * outer
        return h.sum(axis=-3)

    def hessian_sup_bound(self) -> float:
        """Sampled bound (x1.05) over the padded bounding box of the points."""
        lo = self.points.min(axis=0) - 3 * self.width
        hi = self.points.max(axis=0) + 3 * self.width
        rng = np.random.default_rng(0)
        xs = rng.uniform(lo, hi, size=(2048, self.dimension))
        sig = np.linalg.svd(self.hessian(xs), compute_uv=False)
        return float(sig.max() * 1.05)

    def period(self):
        return None

    def to_dict(self):
        return {
            "family": self.family,
            "points": self.points.tolist(),
            "width": self.width,
            "depth": self.depth,
        }


def potential_derivatives(V, x):
    """(value, gradient, hessian) of V at x."""
    return V.value(x), V.gradient(x), V.hessian(x)


def potential_to_dict(V) -> dict:
    return V.to_dict()


def potential_from_dict(d: dict):
    family = d.get("family")
    if family == "cosine":
        return cosine_potential()
    if family == "trig-sum":
        return TrigSumPotential(
            [(t["amplitude"], t["frequency"], t["phase"]) for t in d["terms"]]
        )
    if family == "almost-periodic-truncated":
        return truncated_almost_periodic(
            d.get("term_count", 8),
            d.get("amplitude_ratio", 0.5),
            d.get("frequency_ratio", 1.0 / math.pi),
        )
    if family == "delone-bump":
        return DeloneBumpPotential(d["points"], d["width"], d.get("depth", 1.0))
    raise ValueError(f"unknown potential family: {family!r}")


# --------------------------------------------------------------------------
# zero-set samplers


@dataclass(frozen=True)
class PeriodicZeroSet:
    """Zero set generated by base points repeated with a scalar period
    (one-dimensional)."""

    base_points: np.ndarray
    period: float

    def __post_init__(self):
        pts = np.sort(np.ravel(np.asarray(self.base_points, dtype=float)))
        object.__setattr__(self, "base_points", pts)
        object.__setattr__(self, "period", float(self.period))
        if self.period <= 0:
            raise ValueError("period must be positive")

    @property
    def dimension(self) -> int:
        return 1

    def points_near(self, x, radius: float) -> np.ndarray:
        x = float(np.atleast_1d(x)[0])
        out = []
        for z in self.base_points:
            k_lo = math.ceil((x - radius - z) / self.period)
            k_hi = math.floor((x + radius - z) / self.period)
            for k in range(k_lo, k_hi + 1):
                out.append(z + k * self.period)
        if not out:
            return np.empty((0, 1))
        return np.sort(np.array(out))[:, None]

    def signature(self):
        return ("periodic", self.base_points.tobytes(), self.period)

    def to_dict(self):
        return {
            "kind": "periodic",
            "base_points": self.base_points.tolist(),
            "period": self.period,
        }


@dataclass(frozen=True)
class FiniteZeroSet:
    """Explicit zero list, valid for query centers inside [lo, hi]."""

    points: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", pts)
        d = pts.shape[1]
        lo = np.broadcast_to(np.atleast_1d(np.asarray(self.lo, dtype=float)), (d,))
        hi = np.broadcast_to(np.atleast_1d(np.asarray(self.hi, dtype=float)), (d,))
        object.__setattr__(self, "lo", lo.copy())
        object.__setattr__(self, "hi", hi.copy())

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def points_near(self, x, radius: float) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        tol = 1e-9 * (1.0 + np.abs(x).max())
        if (x < self.lo - tol).any() or (x > self.hi + tol).any():
            raise CertificateError(
                f"query {x} outside the validity box [{self.lo}, {self.hi}] "
                "of a finite zero set"
            )
        mask = np.linalg.norm(self.points - x, axis=1) <= radius
        return self.points[mask]

    def signature(self):
        return ("finite", self.points.tobytes(), self.lo.tobytes(), self.hi.tobytes())

    def to_dict(self):
        return {
            "kind": "finite",
            "points": self.points.tolist(),
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
        }


def sampler_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "periodic":
        return PeriodicZeroSet(d["base_points"], d["period"])
    if kind == "finite":
        return FiniteZeroSet(d["points"], d["lo"], d["hi"])
    raise ValueError(f"unknown zero-set kind: {kind!r}")


# --------------------------------------------------------------------------
# certificates


@dataclass
class AubryCertificate:
    """Sampled expansion certificate (O, R, r, m) for psi = grad V.

    covering_radius R: every closed R-ball around an admissible center
    meets the zero set. ball_radius r and expansion m: psi expands
    distances by at least m on the closed r-ball around each zero.
    safety multiplied R during estimation; zero_tol bounds |psi| at the
    reported zeros. metadata/provenance record how each number was
    obtained.
    """

    sampler: object
    covering_radius: float
    ball_radius: float
    expansion: float
    safety: float = 1.0
    zero_tol: float = 1e-9
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.covering_radius <= 0 or self.ball_radius <= 0 or self.expansion <= 0:
            raise ValueError("certificate radii and expansion must be positive")

    @property
    def admissible_radius(self) -> float:
        """Radius r*m of admissible local-inverse targets."""
        return self.ball_radius * self.expansion

    def to_json_dict(self) -> dict:
        return {
            "zero_set": self.sampler.to_dict(),
            "covering_radius": self.covering_radius,
            "ball_radius": self.ball_radius,
            "expansion": self.expansion,
            "safety": self.safety,
            "zero_tol": self.zero_tol,
            "metadata": self.metadata,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AubryCertificate":
        return cls(
            sampler=sampler_from_dict(d["zero_set"]),
            covering_radius=float(d["covering_radius"]),
            ball_radius=float(d["ball_radius"]),
            expansion=float(d["expansion"]),
            safety=float(d.get("safety", 1.0)),
            zero_tol=float(d.get("zero_tol", 1e-9)),
            metadata=dict(d.get("metadata", {})),
        )

    def representative_zeros(self) -> np.ndarray:
        if isinstance(self.sampler, PeriodicZeroSet):
            return self.sampler.base_points[:, None]
        return self.sampler.points

    def verify(self, V, seed: int = 0, covering_checks: int = 256,
               pair_checks: int = 256) -> dict:
        """Sampled re-check of the three certificate properties; raises
        CertificationError on the first failure, returns check counts."""
        rng = np.random.default_rng(seed)
        zeros = self.representative_zeros()
        g = V.gradient(zeros)
        worst_zero = float(np.linalg.norm(np.atleast_2d(g), axis=1).max())
        if worst_zero > self.zero_tol:
            raise CertificationError(
                f"|psi| = {worst_zero:.3e} at a reported zero exceeds "
                f"zero_tol = {self.zero_tol:.3e}"
            )
        # covering: random admissible centers must see a zero within R
        if isinstance(self.sampler, PeriodicZeroSet):
            lo = np.array([self.sampler.base_points.min()])
            hi = np.array([self.sampler.base_points.min() + self.sampler.period])
        else:
            lo, hi = self.sampler.lo, self.sampler.hi
        centers = rng.uniform(lo, hi, size=(covering_checks, zeros.shape[1]))
        for c in centers:
            pts = self.sampler.points_near(c, self.covering_radius * (1 + 1e-12) + 1e-12)
            if np.atleast_2d(pts).size == 0:
                raise CertificationError(
                    f"no zero within R = {self.covering_radius} of center {c}"
                )
        # expansion on sampled pairs inside each ball
        r, m = self.ball_radius, self.expansion
        for z in zeros:
            offsets = rng.uniform(-1.0, 1.0, size=(2 * pair_checks, zeros.shape[1]))
            norms = np.linalg.norm(offsets, axis=1, keepdims=True)
            offsets = offsets / np.maximum(norms, 1e-300) * (
                rng.uniform(0, r, size=(2 * pair_checks, 1))
            )
            xs = z + offsets[:pair_checks]
            ys = z + offsets[pair_checks:]
            lhs = np.linalg.norm(V.gradient(xs) - V.gradient(ys), axis=1)
            rhs = m * np.linalg.norm(xs - ys, axis=1)
            bad = lhs < rhs * (1 - 1e-12) - 1e-15
            if bad.any():
                j = int(np.argmax(bad))
                raise CertificationError(
                    f"expansion failed near zero {z}: |psi(x)-psi(y)| = "
                    f"{lhs[j]:.6e} < m|x-y| = {rhs[j]:.6e}"
                )
        return {"covering_checks": covering_checks,
                "pair_checks_per_zero": pair_checks,
                "zeros_checked": int(zeros.shape[0])}


def cosine_certificate() -> AubryCertificate:
    """Closed-form certificate for V = cos: zeros pi*Z, R = pi/2,
    r = pi/4, m = cos(pi/4)."""
    return AubryCertificate(
        sampler=PeriodicZeroSet([0.0], math.pi),
        covering_radius=math.pi / 2,
        ball_radius=math.pi / 4,
        expansion=math.sqrt(2) / 2,
        safety=1.0,
        zero_tol=1e-12,
        metadata={"provenance": {"all": "closed form for the cosine potential"}},
    )


# --------------------------------------------------------------------------
# certificate estimation


def _polish_zero_1d(V, a: float, b: float, iters: int = 200) -> float:
    """Bisection on psi over a sign-change bracket."""
    fa = float(V.gradient(np.array([a]))[0])
    fb = float(V.gradient(np.array([b]))[0])
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0:
        raise ValueError("not a bracket")
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if mid == a or mid == b:
            break
        fm = float(V.gradient(np.array([mid]))[0])
        if fm == 0.0:
            return mid
        if fa * fm < 0:
            b, fb = mid, fm
        else:
            a, fa = mid, fm
    return 0.5 * (a + b)


def _scan_zeros_1d(V, lo: float, hi: float, grid_points: int) -> np.ndarray:
    xs = np.linspace(lo, hi, grid_points)
    g = V.gradient(xs[:, None])[:, 0]
    zeros = [float(xs[j]) for j in np.nonzero(g == 0.0)[0]]
    sign_change = np.nonzero(g[:-1] * g[1:] < 0)[0]
    for j in sign_change:
        zeros.append(_polish_zero_1d(V, xs[j], xs[j + 1]))
    zeros = np.sort(np.array(zeros))
    if zeros.size == 0:
        return zeros
    # dedupe polished roots that collapsed to the same point
    keep = [zeros[0]]
    spacing = (hi - lo) / (grid_points - 1)
    for z in zeros[1:]:
        if z - keep[-1] > 1e-7 * max(1.0, spacing):
            keep.append(z)
    return np.array(keep)


def _cluster_mod_period(zeros: np.ndarray, period: float, tol: float):
    """Reduce zeros mod the period and cluster them into base points.
    Returns base points in [0, period)."""
    reduced = np.sort(np.mod(zeros, period))
    groups = [[reduced[0]]]
    for z in reduced[1:]:
        if z - groups[-1][-1] <= tol:
            groups[-1].append(z)
        else:
            groups.append([z])
    # wrap-around: a cluster hugging `period` is the same as one at 0
    if len(groups) > 1 and (period - groups[-1][-1]) + groups[0][0] <= tol:
        groups[0] = [g - period for g in groups.pop()] + groups[0]
    return np.array([float(np.mean(g)) % period for g in groups])


def _sigma_min(H: np.ndarray) -> np.ndarray:
    H = np.atleast_2d(H)
    if H.ndim == 2:
        H = H[None]
    return np.linalg.svd(H, compute_uv=False).min(axis=-1)


def _ball_expansion_radius(V, zeros: np.ndarray, m: float, r_cap: float,
                           radius_samples: int, rng) -> float:
    """Largest radius (bisection) such that sigma_min(hessian) >= m at all
    sampled points of every ball."""
    d = zeros.shape[1]

    def ok(r: float) -> bool:
        for z in zeros:
            if d == 1:
                pts = z + np.linspace(-r, r, radius_samples)[:, None]
            else:
                raw = rng.standard_normal((radius_samples, d))
                raw /= np.linalg.norm(raw, axis=1, keepdims=True)
                radii = r * rng.uniform(0, 1, size=(radius_samples, 1)) ** (1.0 / d)
                pts = np.concatenate([z + raw * radii, z[None]], axis=0)
            if _sigma_min(V.hessian(pts)).min() < m:
                return False
        return True

    lo_r, hi_r = 0.0, r_cap
    if not ok(hi_r * 1e-6):
        raise CertificationError(
            "expansion fails arbitrarily close to a zero; "
            "degeneracy filter too permissive"
        )
    if ok(hi_r):
        return hi_r
    for _ in range(60):
        mid = 0.5 * (lo_r + hi_r)
        if ok(mid):
            lo_r = mid
        else:
            hi_r = mid
    return lo_r


def estimate_aubry(V, search_window, *, grid_points: int = 4001,
                   zero_tol: float = 1e-9, degeneracy_fraction: float = 0.1,
                   safety: float = 1.0, expansion_fraction: float = 2**-0.5,
                   radius_samples: int = 512, covering_checks: int = 256,
                   pair_checks: int = 256, seed: int = 0) -> AubryCertificate:
    """Estimate a certificate for psi = grad V over a search window.

    Zeros come from a grid scan with root polishing; zeros whose hessian
    smallest singular value falls below degeneracy_fraction of the best
    are discarded. The expansion constant is expansion_fraction times the
    weakest retained curvature, the ball radius is the largest sampled
    radius sustaining that curvature, and the covering radius is half the
    largest gap (times safety). All properties are re-verified on random
    samples before returning.
    """
    lo = np.atleast_1d(np.asarray(search_window[0], dtype=float))
    hi = np.atleast_1d(np.asarray(search_window[1], dtype=float))
    d = getattr(V, "dimension", lo.shape[0])
    rng = np.random.default_rng(seed)

    if d == 1:
        zeros = _scan_zeros_1d(V, float(lo[0]), float(hi[0]), grid_points)[:, None]
    else:
        zeros = _scan_zeros_nd(V, lo, hi, grid_points, zero_tol)
    if zeros.shape[0] == 0:
        raise CertificationError("no zeros of grad V found in the search window")

    sig = _sigma_min(V.hessian(zeros))
    sig_max = sig.max()
    if sig_max <= 0:
        raise CertificationError("all zeros of grad V are degenerate")
    retained = zeros[sig >= degeneracy_fraction * sig_max]
    sig_kept = sig[sig >= degeneracy_fraction * sig_max]
    if retained.shape[0] == 0:
        raise CertificationError("every zero failed the degeneracy filter")

    m = expansion_fraction * float(sig_kept.min())

    period = V.period() if hasattr(V, "period") else None
    if d == 1 and period is not None:
        base = _cluster_mod_period(retained[:, 0], period, tol=1e-6)
        sampler = PeriodicZeroSet(base, period)
        sorted_base = np.sort(base)
        gaps = np.diff(np.concatenate([sorted_base, [sorted_base[0] + period]]))
        ball_zeros = sorted_base[:, None]
        sampler_kind = "periodic"
    else:
        if retained.shape[0] < 2:
            raise CertificationError(
                "need at least two nondegenerate zeros for a covering radius"
            )
        sampler = FiniteZeroSet(retained, retained.min(axis=0), retained.max(axis=0))
        if d == 1:
            gaps = np.diff(np.sort(retained[:, 0]))
        else:
            centers = rng.uniform(sampler.lo, sampler.hi, size=(4096, d))
            dmat = np.linalg.norm(centers[:, None, :] - retained[None], axis=2)
            gaps = 2.0 * dmat.min(axis=1)  # twice distance-to-nearest-zero
        ball_zeros = retained
        sampler_kind = "finite"

    covering_radius = float(gaps.max()) / 2.0 * safety
    r_cap = 0.49 * float(gaps.min()) if gaps.min() > 0 else covering_radius
    ball_radius = _ball_expansion_radius(V, ball_zeros, m, r_cap, radius_samples, rng)
    if ball_radius <= 0:
        raise CertificationError("no positive radius sustains the expansion bound")

    cert = AubryCertificate(
        sampler=sampler,
        covering_radius=covering_radius,
        ball_radius=ball_radius,
        expansion=m,
        safety=safety,
        zero_tol=zero_tol,
        metadata={
            "provenance": {
                "zeros": f"grid scan ({grid_points} points) + bisection polish, "
                         f"{sampler_kind} sampler",
                "degeneracy_filter": f"sigma_min(hessian) >= {degeneracy_fraction}"
                                     " * best",
                "expansion": f"{expansion_fraction:.6f} * weakest retained"
                             " curvature",
                "ball_radius": f"radius bisection, {radius_samples} hessian"
                               " samples per ball",
                "covering_radius": f"half largest gap * safety ({safety})",
            },
            "search_window": [lo.tolist(), hi.tolist()],
            "zeros_found": int(zeros.shape[0]),
            "zeros_retained": int(ball_zeros.shape[0]),
            "seed": seed,
        },
    )
    cert.metadata["verification"] = cert.verify(
        V, seed=seed + 1, covering_checks=covering_checks, pair_checks=pair_checks
    )
    return cert


def _scan_zeros_nd(V, lo, hi, grid_points, zero_tol):
    """Newton polish from a coarse box grid; dedupe converged roots."""
    d = lo.shape[0]
    per_dim = max(8, int(round(grid_points ** (1.0 / d))))
    axes = [np.linspace(lo[j], hi[j], per_dim) for j in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    y = pts.copy()
    for _ in range(60):
        g = V.gradient(y)
        if np.linalg.norm(g, axis=1).max() <= zero_tol * 1e-3:
            break
        H = V.hessian(y)
        ok = np.abs(np.linalg.det(H)) > 1e-12
        step = np.zeros_like(y)
        if ok.any():
            step[ok] = np.linalg.solve(H[ok], g[ok][..., None])[..., 0]
        y = np.clip(y - step, lo, hi)
    g = np.linalg.norm(V.gradient(y), axis=1)
    inside = ((y > lo + 1e-9) & (y < hi - 1e-9)).all(axis=1)
    roots = y[(g <= zero_tol) & inside]
    if roots.shape[0] == 0:
        return roots
    # cluster within a tolerance scaled to the box
    scale = float(np.linalg.norm(hi - lo))
    tol = max(1e-8 * scale, 1e-10)
    kept = []
    for p in roots:
        if all(np.linalg.norm(p - q) > tol for q in kept):
            kept.append(p)
    return np.array(kept)


# --------------------------------------------------------------------------
# local inverse


def local_inverse(V, z, target, cert: AubryCertificate, tol: float = 1e-12,
                  max_iter: int = 80) -> np.ndarray:
    """Solve psi(y) = target for y in the closed r-ball around the zero z.

    Projected Newton from the ball center; for d = 1 a bisection fallback
    guarantees convergence (psi is strictly monotone on the ball).
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    target = np.atleast_1d(np.asarray(target, dtype=float))
    r, m = cert.ball_radius, cert.expansion
    tnorm = float(np.linalg.norm(target))
    limit = r * m
    if tnorm > limit * (1 + 1e-12):
        raise DomainError(
            f"target norm {tnorm:.6e} exceeds admissible radius r*m = {limit:.6e}",
            norm=tnorm, limit=limit,
        )
    y = z.copy()
    best_y, best_f = y.copy(), np.inf
    for _ in range(max_iter):
        f = V.gradient(y) - target
        nf = float(np.linalg.norm(f))
        if nf < best_f:
            best_f, best_y = nf, y.copy()
        if nf <= tol:
            return y
        H = np.atleast_2d(V.hessian(y))
        try:
            step = np.linalg.solve(H, f)
        except np.linalg.LinAlgError:
            break
        y_new = y - step
        dy = y_new - z
        nd = float(np.linalg.norm(dy))
        if nd > r:
            y_new = z + dy * (r / nd)
        if np.array_equal(y_new, y):
            break
        y = y_new
    if z.shape[0] == 1:
        return _local_inverse_bisect(V, float(z[0]), float(target[0]), r, tol)
    if best_f <= 10 * tol:
        return best_y
    raise ConvergenceError(
        f"local inverse stalled at |psi(y) - target| = {best_f:.3e} (tol {tol:.1e})"
    )


def _local_inverse_bisect(V, z, target, r, tol):
    a, b = z - r, z + r
    fa = float(V.gradient(np.array([a]))[0]) - target
    fb = float(V.gradient(np.array([b]))[0]) - target
    if fa == 0.0:
        return np.array([a])
    if fb == 0.0:
        return np.array([b])
    if fa * fb > 0:
        raise ConvergenceError(
            "local inverse target is not bracketed on the certificate ball; "
            "certificate inconsistent with the potential"
        )
    for _ in range(200):
        mid = 0.5 * (a + b)
        fm = float(V.gradient(np.array([mid]))[0]) - target
        if abs(fm) <= tol or mid == a or mid == b:
            return np.array([mid])
        if fa * fm < 0:
            b, fb = mid, fm
        else:
            a, fa = mid, fm
    return np.array([0.5 * (a + b)])


def local_inverse_batch(V, centers: np.ndarray, targets: np.ndarray,
                        cert: AubryCertificate, tol: float = 1e-12,
                        max_iter: int = 60) -> np.ndarray:
    """Vectorized local_inverse over rows of centers/targets.

    Callers are responsible for the domain check (so they can name the
    offending site); rows that fail the batched Newton loop fall back to
    the scalar routine.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    n, d = centers.shape
    r = cert.ball_radius
    y = centers.copy()
    active = np.ones(n, dtype=bool)
    for _ in range(max_iter):
        f = V.gradient(y[active]) - targets[active]
        nf = np.linalg.norm(np.atleast_2d(f), axis=1)
        done = nf <= tol
        if done.any():
            idx = np.nonzero(active)[0]
            active[idx[done]] = False
            f = f[~done]
        if not active.any():
            break
        H = np.atleast_2d(V.hessian(y[active]))
        if H.ndim == 2:
            H = H[None]
        step = np.linalg.solve(H, f[..., None])[..., 0]
        y_new = y[active] - step
        dy = y_new - centers[active]
        nd = np.linalg.norm(dy, axis=1)
        over = nd > r
        if over.any():
            y_new[over] = centers[active][over] + dy[over] * (r / nd[over])[:, None]
        y[active] = y_new
    for j in np.nonzero(active)[0]:
        y[j] = local_inverse(V, centers[j], targets[j], cert, tol=tol)
    return y
