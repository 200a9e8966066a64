"""Interaction operators on configurations.

Both families are invariant operators: they commute with lattice shifts
and ignore simultaneous translations of all particles. Applied to a
homomorphism (a linear configuration) they produce a constant sequence,
so each exposes that constant directly, together with a Lipschitz bound
K(rho, R) valid on the tube of configurations within R of the
homomorphism rho.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvexityError
from .lattice import Configuration, as_rotation

__all__ = [
    "QuadraticCoupling",
    "PerturbedQuadraticCoupling",
    "NearestNeighborInteraction",
    "LongRangeInteraction",
    "apply_delta",
    "delta_hom",
    "lipschitz_bound",
    "coupling_from_dict",
    "interaction_from_dict",
]


# --------------------------------------------------------------------------
# couplings for the generating (nearest-neighbor) form


class QuadraticCoupling:
    """I(x) = scale * |x|^2 / 2."""

    name = "quadratic"
    constant_hessian = True

    def __init__(self, scale: float = 1.0):
        if scale <= 0:
            raise ConvexityError("quadratic coupling needs a positive scale")
        self.scale = float(scale)

    # (sigma_min, sigma_max) of the hessian, globally
    @property
    def convexity_bounds(self):
        return (self.scale, self.scale)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.scale * (x * x).sum(axis=-1)

    def gradient(self, x):
        return self.scale * np.asarray(x, dtype=float)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        eye = self.scale * np.eye(d)
        return np.broadcast_to(eye, x.shape[:-1] + (d, d)).copy()

    def to_dict(self):
        return {"name": self.name, "scale": self.scale}


class PerturbedQuadraticCoupling:
    """I(x) = |x|^2 / 2 + amplitude * sqrt(1 + |x|^2).

    Smooth, uniformly convex, non-quadratic; hessian eigenvalues lie in
    (1, 1 + amplitude].
    """

    name = "perturbed-quadratic"
    constant_hessian = False

    def __init__(self, amplitude: float = 0.1):
        if amplitude < 0:
            raise ConvexityError("perturbation amplitude must be nonnegative")
        self.amplitude = float(amplitude)

    @property
    def convexity_bounds(self):
        return (1.0, 1.0 + self.amplitude)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        s = (x * x).sum(axis=-1)
        return 0.5 * s + self.amplitude * np.sqrt(1.0 + s)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        s = (x * x).sum(axis=-1)
        return x * (1.0 + self.amplitude / np.sqrt(1.0 + s))[..., None]

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        s = (x * x).sum(axis=-1)
        iso = 1.0 + self.amplitude / np.sqrt(1.0 + s)
        eye = np.eye(d)
        outer = np.einsum("...i,...j->...ij", x, x)
        return iso[..., None, None] * eye - (
            self.amplitude * (1.0 + s) ** -1.5
        )[..., None, None] * outer

    def to_dict(self):
        return {"name": self.name, "amplitude": self.amplitude}


def coupling_from_dict(d: dict):
    name = d.get("name")
    if name == "quadratic":
        return QuadraticCoupling(d.get("scale", 1.0))
    if name == "perturbed-quadratic":
        return PerturbedQuadraticCoupling(d.get("amplitude", 0.1))
    raise ValueError(f"unknown coupling: {name!r}")


# --------------------------------------------------------------------------
# interactions


class NearestNeighborInteraction:
    """Delta(u)_i = grad I(u_i - u_{i+1}) - grad I(u_{i-1} - u_i)."""

    kind = "nearest-neighbor"
    reach = 1

    def __init__(self, coupling=None):
        self.coupling = coupling if coupling is not None else QuadraticCoupling()
        lo, hi = self.coupling.convexity_bounds
        if not (0 < lo <= hi):
            raise ConvexityError(
                f"coupling convexity bounds ({lo}, {hi}) are not ordered positives"
            )

    def delta(self, u: Configuration) -> np.ndarray:
        """Delta(u) at every window site, neighbors from the tail."""
        ext = u.extended(1)
        right = self.coupling.gradient(ext[1:-1] - ext[2:])
        left = self.coupling.gradient(ext[:-2] - ext[1:-1])
        return right - left

    def delta_at(self, u: Configuration, i: int) -> np.ndarray:
        ui = u.value(i)
        return self.coupling.gradient(ui - u.value(i + 1)) - self.coupling.gradient(
            u.value(i - 1) - ui
        )

    def delta_hom(self, rho) -> np.ndarray:
        rot = as_rotation(rho)
        g = self.coupling.gradient(-rot.rho)
        return g - g  # identical gaps on a homomorphism: exact cancellation

    def lipschitz_bound(self, rho, R: float, samples: int = 10_000,
                        seed: int = 0) -> float:
        """K(rho, R) = 4 sup |hessian of I| over the ball of radius
        |rho| + 2R; exact for constant-hessian couplings, otherwise a
        sampled sup inflated by 5% and capped by the declared convexity
        bound."""
        rot = as_rotation(rho)
        if self.coupling.constant_hessian:
            x0 = np.zeros((1, rot.dimension))
            smax = np.linalg.svd(self.coupling.hessian(x0)[0], compute_uv=False).max()
            return 4.0 * float(smax)
        radius = rot.norm() + 2.0 * R
        rng = np.random.default_rng(seed)
        d = rot.dimension
        raw = rng.standard_normal((samples, d))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        pts = raw * (radius * rng.uniform(0, 1, size=(samples, 1)) ** (1.0 / d))
        sig = np.linalg.svd(self.coupling.hessian(pts), compute_uv=False).max(axis=-1)
        sampled = 4.0 * float(sig.max()) * 1.05
        return min(sampled, 4.0 * self.coupling.convexity_bounds[1])

    def truncation_error(self, rho, R: float) -> float:
        return 0.0  # finite reach, nothing dropped

    def to_dict(self):
        return {"kind": self.kind, "coupling": self.coupling.to_dict()}


class LongRangeInteraction:
    """Delta(u)_i = sum_k c_k (u_i - u_{i+k})^power, componentwise.

    Default weights c_k = weight_base^|k| for 1 <= |k| <= cutoff; the
    dropped geometric tail is accounted for in the Lipschitz bound and
    reported by truncation_error. Explicit weight dictionaries define a
    finite operator with no tail.
    """

    kind = "long-range"

    def __init__(self, weights=None, power: int = 3, cutoff: int = 32,
                 weight_base: float = 0.5):
        self.power = int(power)
        if self.power < 1:
            raise ValueError("power must be >= 1")
        if weights is None:
            if not 0 < weight_base < 1:
                raise ValueError("weight_base must lie in (0, 1)")
            self.weight_base = float(weight_base)
            self.cutoff = int(cutoff)
            self.weights = {
                k: self.weight_base ** abs(k)
                for k in range(-self.cutoff, self.cutoff + 1)
                if k != 0
            }
            self.rule_tail = True
        else:
            self.weights = {int(k): float(c) for k, c in weights.items() if int(k) != 0}
            if not self.weights:
                raise ValueError("long-range interaction needs a nonzero offset")
            self.cutoff = max(abs(k) for k in self.weights)
            self.weight_base = None
            self.rule_tail = False
        self.reach = max(abs(k) for k in self.weights)

    def delta(self, u: Configuration) -> np.ndarray:
        ext = u.extended(self.reach)
        n = u.window.n_sites
        center = ext[self.reach:self.reach + n]
        out = np.zeros_like(center)
        for k, c in self.weights.items():
            neighbor = ext[self.reach + k:self.reach + k + n]
            out += c * (center - neighbor) ** self.power
        return out

    def delta_at(self, u: Configuration, i: int) -> np.ndarray:
        ui = u.value(i)
        out = np.zeros_like(ui)
        for k, c in self.weights.items():
            out += c * (ui - u.value(i + k)) ** self.power
        return out

    def delta_hom(self, rho) -> np.ndarray:
        rot = as_rotation(rho)
        out = np.zeros(rot.dimension)
        for k, c in self.weights.items():
            out += c * (-k * rot.rho) ** self.power
        return out

    def _term_lipschitz(self, k: int, rho_norm: float, R: float) -> float:
        # |a^p - b^p| <= p max(|a|,|b|)^(p-1) |a-b| with |a|,|b| <= |k||rho|+2R
        # and |a-b| <= 2 d(u,u')
        return 2.0 * self.power * (abs(k) * rho_norm + 2.0 * R) ** (self.power - 1)

    def lipschitz_bound(self, rho, R: float) -> float:
        rho_norm = as_rotation(rho).norm()
        total = sum(
            abs(c) * self._term_lipschitz(k, rho_norm, R)
            for k, c in self.weights.items()
        )
        if self.rule_tail:
            # the series runs over all of Z; the k = 0 term has weight 1
            # even though that offset never contributes to Delta
            total += self._term_lipschitz(0, rho_norm, R)
            k = self.cutoff + 1
            while True:
                term = 2 * self.weight_base**k * self._term_lipschitz(k, rho_norm, R)
                total += term
                if term < 1e-30 * max(total, 1.0):
                    break
                k += 1
        return total

    def truncation_error(self, rho, R: float) -> float:
        """Sup-norm bound on the dropped tail of Delta over the tube
        d(u, rho) <= R."""
        if not self.rule_tail:
            return 0.0
        rho_norm = as_rotation(rho).norm()
        total = 0.0
        k = self.cutoff + 1
        while True:
            term = 2 * self.weight_base**k * (k * rho_norm + 2.0 * R) ** self.power
            total += term
            if term < 1e-30 * max(total, 1.0):
                break
            k += 1
        return total

    def to_dict(self):
        d = {"kind": self.kind, "power": self.power}
        if self.rule_tail:
            d["cutoff"] = self.cutoff
            d["weight_base"] = self.weight_base
        else:
            d["weights"] = {str(k): c for k, c in self.weights.items()}
        return d


def interaction_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "nearest-neighbor":
        coupling = coupling_from_dict(d.get("coupling", {"name": "quadratic"}))
        return NearestNeighborInteraction(coupling)
    if kind == "long-range":
        return LongRangeInteraction(
            weights=d.get("weights"),
            power=d.get("power", 3),
            cutoff=d.get("cutoff", 32),
            weight_base=d.get("weight_base", 0.5),
        )
    raise ValueError(f"unknown interaction kind: {kind!r}")


# free-function spellings of the operator interface


def apply_delta(interaction, u: Configuration, i: int | None = None):
    """Delta(u) at one site (i given) or across the window (i omitted)."""
    if i is None:
        return interaction.delta(u)
    return interaction.delta_at(u, i)


def delta_hom(interaction, rho) -> np.ndarray:
    return interaction.delta_hom(rho)


def lipschitz_bound(interaction, rho, R: float) -> float:
    return interaction.lipschitz_bound(rho, R)
