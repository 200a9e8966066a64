"""Linear stability of computed equilibria and the induced twist dynamics.

The second variation of the action along a configuration gives a
three-term recursion for tangent vectors,

    A_i (xi_i - xi_{i+1}) - B_i (xi_{i-1} - xi_i) + C_i xi_i = 0,

with A_i = hess I(u_i - u_{i+1}), B_i = hess I(u_{i-1} - u_i) and
C_i = lam * hess V(u_i). At strong coupling this recursion admits a pair
of invariant cone fields with uniform expansion of pair norms; the cone
conditions are checked exactly in one dimension and by boundary sampling
otherwise. The same data feeds the symplectic side: conjugate momenta,
the twist map they generate, and the discrete Legendre transform linking
position pairs to (x, p) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CertificateError, ConvexityError
from .interactions import NearestNeighborInteraction, QuadraticCoupling
from .lattice import Configuration

__all__ = [
    "LinearizationSite",
    "linearize",
    "transfer_step",
    "backward_transfer_step",
    "transfer_matrix",
    "ConeParameters",
    "cone_parameters",
    "ConeVerdict",
    "verify_cone_conditions",
    "SplittingReport",
    "cone_splitting",
    "momentum",
    "twist_map_step",
    "position_pair_step",
    "legendre_transform",
    "legendre_bounds",
    "verify_orbit",
    "HyperbolicityCertificate",
    "orbit_to_csv",
]


@dataclass(frozen=True)
class LinearizationSite:
    """Coefficient matrices of the tangent recursion at one site."""

    site: int
    A: np.ndarray      # (d, d) hess I(u_i - u_{i+1})
    B: np.ndarray      # (d, d) hess I(u_{i-1} - u_i)
    C: np.ndarray      # (d, d) lam * hess V(u_i)

    @property
    def dimension(self) -> int:
        return self.A.shape[-1]


def _require_nn(interaction):
    if not isinstance(interaction, NearestNeighborInteraction):
        raise ValueError(
            "transfer-matrix analysis requires a nearest-neighbor interaction"
        )


def linearize(u: Configuration, interaction, potential, lam: float,
              cert=None, slack: float = 1e-9) -> list:
    """Assemble the per-site (A, B, C) along the window.

    Only nearest-neighbor interactions produce a three-term recursion.
    When a certificate is supplied, the coefficients are checked against
    its bounds: coupling hessians below the convexity ceiling and
    sigma_min(C_i) >= lam * m.
    """
    _require_nn(interaction)
    coupling = interaction.coupling
    ext = u.extended(1)
    fwd = ext[1:-1] - ext[2:]    # u_i - u_{i+1}
    bwd = ext[:-2] - ext[1:-1]   # u_{i-1} - u_i
    d = u.window.dimension
    n = u.window.n_sites
    A = coupling.hessian(fwd).reshape(n, d, d)
    B = coupling.hessian(bwd).reshape(n, d, d)
    C = (lam * potential.hessian(u.values)).reshape(n, d, d)
    sites = u.window.sites()
    if cert is not None:
        upper = coupling.convexity_bounds[1]
        sa = np.linalg.svd(A, compute_uv=False).max()
        sb = np.linalg.svd(B, compute_uv=False).max()
        if max(sa, sb) > upper * (1 + slack):
            raise CertificateError(
                f"coupling hessian norm {max(sa, sb):.6e} exceeds the "
                f"convexity ceiling {upper:.6e}"
            )
        sc = np.linalg.svd(C, compute_uv=False).min(axis=-1)
        floor = lam * cert.expansion
        if sc.min() < floor * (1 - slack):
            k = int(np.argmin(sc))
            raise CertificateError(
                f"|C| = {sc.min():.6e} below lam * m = {floor:.6e} at site "
                f"{int(sites[k])}; configuration left the certified tube"
            )
    return [
        LinearizationSite(site=int(s), A=A[k], B=B[k], C=C[k])
        for k, s in enumerate(sites)
    ]


def transfer_step(site: LinearizationSite, xi_prev, xi_cur):
    """xi_{i+1} from (xi_{i-1}, xi_i): the produced triple satisfies the
    tangent recursion to machine precision."""
    try:
        rhs = (site.A + site.B + site.C) @ np.asarray(
            xi_cur, dtype=float
        ) - site.B @ np.asarray(xi_prev, dtype=float)
        return np.linalg.solve(site.A, rhs)
    except np.linalg.LinAlgError as exc:
        raise ConvexityError(
            f"singular coupling hessian at site {site.site}"
        ) from exc


def backward_transfer_step(site: LinearizationSite, xi_cur, xi_next):
    """xi_{i-1} from (xi_i, xi_{i+1})."""
    try:
        rhs = (site.A + site.B + site.C) @ np.asarray(
            xi_cur, dtype=float
        ) - site.A @ np.asarray(xi_next, dtype=float)
        return np.linalg.solve(site.B, rhs)
    except np.linalg.LinAlgError as exc:
        raise ConvexityError(
            f"singular coupling hessian at site {site.site}"
        ) from exc


def transfer_matrix(site: LinearizationSite) -> np.ndarray:
    """2d x 2d one-step matrix acting on stacked pairs (xi_{i-1}, xi_i)."""
    d = site.dimension
    Ainv = np.linalg.inv(site.A)
    M = np.zeros((2 * d, 2 * d))
    M[:d, d:] = np.eye(d)
    M[d:, :d] = -Ainv @ site.B
    M[d:, d:] = Ainv @ (site.A + site.B + site.C)
    return M


@dataclass(frozen=True)
class ConeParameters:
    """Apertures and expansion rate for the invariant cone pair.

    mu and alpha are the larger/smaller roots of
    x^2 - (2 + 4 R / r) x + 1 = 0, so mu * alpha = 1 and
    mu + alpha = 2 + 4 R / r; the backward aperture beta equals alpha.
    """

    mu: float
    alpha: float
    beta: float

    def to_json_dict(self) -> dict:
        return {"mu": self.mu, "alpha": self.alpha, "beta": self.beta}


def cone_parameters(cert) -> ConeParameters:
    s = 2.0 + 4.0 * cert.covering_radius / cert.ball_radius
    root = np.sqrt(s * s - 4.0)
    mu = 0.5 * (s + root)
    alpha = 2.0 / (s + root)  # = smaller root, in a cancellation-free form
    return ConeParameters(mu=mu, alpha=alpha, beta=alpha)


@dataclass
class ConeVerdict:
    """Per-site outcome of the two cone conditions.

    Condition (i): whenever |xi_{i-1}| <= alpha |xi_i|, the image must
    satisfy |xi_i| <= alpha |xi_{i+1}| and the pair norm must grow by mu.
    Condition (ii) is the mirror statement for the backward transfer with
    aperture beta. Growth columns record the worst |xi_next| / |xi_cur|
    over the cone; pair margins record the worst value of
    |pair_out|^2 - mu^2 |pair_in|^2 (nonnegative means pass).
    """

    sites: list
    cone: ConeParameters
    forward_growth: list
    forward_pair_margin: list
    backward_growth: list
    backward_pair_margin: list
    forward_pass: list
    backward_pass: list
    all_pass: bool

    def to_json_dict(self) -> dict:
        return {
            "sites": [int(s) for s in self.sites],
            "cone": self.cone.to_json_dict(),
            "forward_growth": [float(x) for x in self.forward_growth],
            "forward_pair_margin": [float(x) for x in self.forward_pair_margin],
            "backward_growth": [float(x) for x in self.backward_growth],
            "backward_pair_margin": [float(x) for x in self.backward_pair_margin],
            "forward_pass": [bool(x) for x in self.forward_pass],
            "backward_pass": [bool(x) for x in self.backward_pass],
            "all_pass": self.all_pass,
        }

    @property
    def margin(self) -> float:
        """Worst aperture-growth slack over both cones (growth - 1/aperture)."""
        return float(
            min(
                min(self.forward_growth) - 1.0 / self.cone.alpha,
                min(self.backward_growth) - 1.0 / self.cone.beta,
            )
        )


def _cone_min_growth_1d(c0: float, c1: float, aperture: float) -> float:
    # min over |t| <= aperture of |c0 - c1 t|; zero inside the interval
    # means the image can vanish, so no growth at all
    if c1 != 0.0 and abs(c0 / c1) <= aperture:
        return 0.0
    return min(abs(c0 - c1 * aperture), abs(c0 + c1 * aperture))


def _pair_margin_1d(c0: float, c1: float, aperture: float, mu: float) -> float:
    # min over |t| <= aperture of 1 + (c0 - c1 t)^2 - mu^2 (1 + t^2),
    # a quadratic q2 t^2 - 2 c0 c1 t + (1 + c0^2 - mu^2)
    q2 = c1 * c1 - mu * mu
    ends = []
    for t in (-aperture, aperture):
        f = c0 - c1 * t
        ends.append(1.0 + f * f - mu * mu * (1.0 + t * t))
    best = min(ends)
    if q2 > 0.0:
        t_star = c0 * c1 / q2
        if abs(t_star) <= aperture:
            f = c0 - c1 * t_star
            best = min(best, 1.0 + f * f - mu * mu * (1.0 + t_star * t_star))
    return best


def verify_cone_conditions(u: Configuration, interaction, potential,
                           lam: float, cert, samples: int = 256,
                           seed: int = 0) -> ConeVerdict:
    """Check both cone conditions at every window site of u.

    d = 1 is exact (growth and pair margin are explicit in the cone
    coordinate); d > 1 samples cone-boundary directions plus the cone
    axis, giving a falsifiable numerical check rather than a proof.
    Failures are verdicts, not errors.
    """
    lin = linearize(u, interaction, potential, lam, cert=cert)
    cone = cone_parameters(cert)
    d = lin[0].dimension
    n = len(lin)
    fwd_growth = np.empty(n)
    fwd_pair = np.empty(n)
    bwd_growth = np.empty(n)
    bwd_pair = np.empty(n)
    if d == 1:
        for k, rec in enumerate(lin):
            a, b, c = rec.A[0, 0], rec.B[0, 0], rec.C[0, 0]
            s = a + b + c
            fwd_growth[k] = _cone_min_growth_1d(s / a, b / a, cone.alpha)
            fwd_pair[k] = _pair_margin_1d(s / a, b / a, cone.alpha, cone.mu)
            bwd_growth[k] = _cone_min_growth_1d(s / b, a / b, cone.beta)
            bwd_pair[k] = _pair_margin_1d(s / b, a / b, cone.beta, cone.mu)
    else:
        rng = np.random.default_rng(seed)
        dirs = rng.normal(size=(samples, 2, d))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        xi = np.concatenate([dirs[:, 0], dirs[:1, 0]])
        other = np.concatenate([dirs[:, 1], np.zeros((1, d))])
        for k, rec in enumerate(lin):
            S = rec.A + rec.B + rec.C
            out = np.linalg.solve(
                rec.A, (S @ xi.T - rec.B @ (cone.alpha * other).T)
            ).T
            g = np.linalg.norm(out, axis=1)
            fwd_growth[k] = g.min()
            pair_in = 1.0 + cone.alpha**2 * np.linalg.norm(other, axis=1) ** 2
            fwd_pair[k] = (1.0 + g**2 - cone.mu**2 * pair_in).min()
            outb = np.linalg.solve(
                rec.B, (S @ xi.T - rec.A @ (cone.beta * other).T)
            ).T
            gb = np.linalg.norm(outb, axis=1)
            bwd_growth[k] = gb.min()
            pair_inb = 1.0 + cone.beta**2 * np.linalg.norm(other, axis=1) ** 2
            bwd_pair[k] = (1.0 + gb**2 - cone.mu**2 * pair_inb).min()
    tol = 1e-12
    fpass = (fwd_growth >= (1.0 / cone.alpha) * (1 - tol)) & (
        fwd_pair >= -tol * (1.0 + cone.mu**2)
    )
    bpass = (bwd_growth >= (1.0 / cone.beta) * (1 - tol)) & (
        bwd_pair >= -tol * (1.0 + cone.mu**2)
    )
    return ConeVerdict(
        sites=[rec.site for rec in lin],
        cone=cone,
        forward_growth=list(fwd_growth),
        forward_pair_margin=list(fwd_pair),
        backward_growth=list(bwd_growth),
        backward_pair_margin=list(bwd_pair),
        forward_pass=list(fpass),
        backward_pass=list(bpass),
        all_pass=bool(fpass.all() and bpass.all()),
    )


@dataclass
class SplittingReport:
    sites: list
    unstable_basis: list        # per site, (2d, d) orthonormal columns
    stable_basis: list
    unstable_multipliers: list  # one-step pair-norm growth along each bundle
    stable_multipliers: list
    angles: list                # principal angle between the bundles (rad)
    min_angle: float
    horizon: int

    def to_json_dict(self) -> dict:
        return {
            "sites": [int(s) for s in self.sites],
            "unstable_basis": [b.tolist() for b in self.unstable_basis],
            "stable_basis": [b.tolist() for b in self.stable_basis],
            "unstable_multipliers": [float(x) for x in self.unstable_multipliers],
            "stable_multipliers": [float(x) for x in self.stable_multipliers],
            "angles": [float(x) for x in self.angles],
            "min_angle": self.min_angle,
            "horizon": self.horizon,
        }


def cone_splitting(u: Configuration, interaction, potential, lam: float,
                   horizon: int = 20) -> SplittingReport:
    """Approximate the stable/unstable bundles by finite-horizon cone
    iteration.

    The unstable space at site i is the image of the vertical seed pushed
    forward ``horizon`` steps (orthonormalized each step); the stable
    space comes from pulling the horizontal seed backward. Convergence is
    geometric, so moderate horizons give near-exact bundles. Only sites
    with a full horizon on both sides are reported.
    """
    lin = linearize(u, interaction, potential, lam)
    d = lin[0].dimension
    lo, hi = lin[0].site, lin[-1].site
    first, last = lo + horizon, hi - horizon
    if first > last:
        raise ValueError(
            f"horizon {horizon} too large for a window of {len(lin)} sites"
        )
    mats = {rec.site: transfer_matrix(rec) for rec in lin}
    seed_u = np.zeros((2 * d, d))
    seed_u[d:] = np.eye(d)
    seed_s = np.zeros((2 * d, d))
    seed_s[:d] = np.eye(d)
    sites, ubasis, sbasis, umult, smult, angles = [], [], [], [], [], []
    for i in range(first, last + 1):
        U = seed_u
        for j in range(i - horizon, i):
            U, _ = np.linalg.qr(mats[j] @ U)
        S = seed_s
        for j in range(i + horizon - 1, i - 1, -1):
            S, _ = np.linalg.qr(np.linalg.solve(mats[j], S))
        sig = np.linalg.svd(U.T @ S, compute_uv=False)
        angle = float(np.arccos(np.clip(sig.max(), -1.0, 1.0)))
        # one-step growth along each bundle; bases are orthonormal so the
        # Frobenius ratio reduces to the multiplier on eigendirections
        gu = np.linalg.norm(mats[i] @ U) / np.linalg.norm(U)
        gs = np.linalg.norm(mats[i] @ S) / np.linalg.norm(S)
        sites.append(i)
        ubasis.append(U)
        sbasis.append(S)
        umult.append(float(gu))
        smult.append(float(gs))
        angles.append(angle)
    return SplittingReport(
        sites=sites,
        unstable_basis=ubasis,
        stable_basis=sbasis,
        unstable_multipliers=umult,
        stable_multipliers=smult,
        angles=angles,
        min_angle=float(min(angles)),
        horizon=horizon,
    )


def momentum(u: Configuration, interaction, potential, lam: float) -> np.ndarray:
    """Conjugate momenta p_i = -grad I(u_i - u_{i+1}) - lam * grad V(u_i).

    At an equilibrium this equals grad I applied to the backward
    difference, so for the quadratic coupling p_i = u_i - u_{i-1}.
    """
    _require_nn(interaction)
    ext = u.extended(1)
    fwd = ext[1:-1] - ext[2:]
    gv = potential.gradient(u.values).reshape(u.values.shape)
    return -interaction.coupling.gradient(fwd) - lam * gv


def _invert_coupling_gradient(coupling, target, tol=1e-13, max_iter=80):
    """Solve grad I(w) = target for w (vectorized rows); Newton on the
    strictly monotone gradient, closed form for the quadratic."""
    if isinstance(coupling, QuadraticCoupling):
        return target / coupling.scale
    t = np.atleast_2d(np.asarray(target, dtype=float))
    w = t / max(coupling.convexity_bounds[0], 1e-12)
    for _ in range(max_iter):
        f = coupling.gradient(w) - t
        err = np.linalg.norm(f, axis=1)
        scale = tol * (1.0 + np.linalg.norm(t, axis=1))
        if (err <= scale).all():
            break
        try:
            H = coupling.hessian(w)
            step = np.linalg.solve(H, f[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise ConvexityError(
                "coupling hessian became singular during gradient inversion; "
                "convexity bounds are violated"
            ) from exc
        w = w - step
        if not np.isfinite(w).all():
            raise ConvexityError(
                "coupling gradient inversion diverged; the target is outside "
                "the gradient's range"
            )
    else:
        raise ConvexityError(
            "coupling gradient inversion did not converge; convexity bounds "
            "may be violated"
        )
    return w.reshape(np.asarray(target, dtype=float).shape)


def twist_map_step(x, p, interaction, potential, lam: float):
    """One step (x_i, p_i) -> (x_{i+1}, p_{i+1}) of the generated twist map.

    x_{i+1} solves grad I(x_i - x_{i+1}) = -p_i - lam * grad V(x_i); the
    momentum updates by the local force, p_{i+1} = p_i + lam * grad V(x_i).
    Accepts single sites (d,) or batches (n, d).
    """
    _require_nn(interaction)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    gv = potential.gradient(x).reshape(x.shape)
    w = _invert_coupling_gradient(interaction.coupling, -p - lam * gv)
    return x - w, p + lam * gv


def position_pair_step(x_prev, x, interaction, potential, lam: float):
    """One step of the position-pair shift (x_{i-1}, x_i) -> (x_i, x_{i+1})
    along equilibria; conjugate to the twist map by the Legendre transform."""
    _require_nn(interaction)
    x_prev = np.asarray(x_prev, dtype=float)
    x = np.asarray(x, dtype=float)
    gv = potential.gradient(x).reshape(x.shape)
    target = interaction.coupling.gradient(x_prev - x) - lam * gv
    w = _invert_coupling_gradient(interaction.coupling, target)
    return x, x - w


def legendre_transform(x, y, coupling):
    """(x_i, x_{i+1}) -> (x_{i+1}, p_{i+1}) with p = -grad I(x - y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return y, -coupling.gradient(x - y)


def legendre_bounds(coupling):
    """Singular-value bounds of the pair transform: with convexity bounds
    (eps, E), the differential satisfies sigma_max <= sqrt(1 + 4 E^2) and
    the inverse transform sqrt(1 + 4 / eps^2)."""
    eps, big = coupling.convexity_bounds
    return float(np.sqrt(1.0 + 4.0 * big**2)), float(np.sqrt(1.0 + 4.0 / eps**2))


def verify_orbit(u: Configuration, p: np.ndarray, interaction, potential,
                 lam: float) -> float:
    """Largest deviation between the twist-map image of (u_i, p_i) and
    (u_{i+1}, p_{i+1}) over interior window sites."""
    x = u.values[:-1]
    pp = p[:-1]
    y, pn = twist_map_step(x, pp, interaction, potential, lam)
    dev_x = np.linalg.norm(y - u.values[1:], axis=-1)
    dev_p = np.linalg.norm(pn - p[1:], axis=-1)
    return float(max(dev_x.max(), dev_p.max()))


@dataclass
class HyperbolicityCertificate:
    """Aggregate outcome of the linear-stability checks for one run."""

    lam: float
    cone: ConeParameters
    verdict: ConeVerdict
    splitting: SplittingReport | None = None
    legendre_sigma_bounds: tuple | None = None
    orbit_deviation: float | None = None
    warnings: list = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        ok = self.verdict.all_pass
        if self.splitting is not None:
            ok = ok and self.splitting.min_angle > 0.0
        return bool(ok)

    def to_json_dict(self) -> dict:
        return {
            "lam": self.lam,
            "cone": self.cone.to_json_dict(),
            "verdict": self.verdict.to_json_dict(),
            "splitting": (
                self.splitting.to_json_dict() if self.splitting else None
            ),
            "legendre_sigma_bounds": (
                list(self.legendre_sigma_bounds)
                if self.legendre_sigma_bounds
                else None
            ),
            "orbit_deviation": self.orbit_deviation,
            "all_pass": self.all_pass,
            "warnings": list(self.warnings),
        }


def orbit_to_csv(path, u: Configuration, p: np.ndarray):
    """Write site, position and momentum columns."""
    d = u.window.dimension
    cols = (
        ["site"]
        + [f"u_{k}" for k in range(d)]
        + [f"p_{k}" for k in range(d)]
    )
    p = np.asarray(p, dtype=float).reshape(len(u.values), d)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for site, uv, pv in zip(u.window.sites(), u.values, p):
            row = [str(int(site))] + [repr(float(v)) for v in uv] + [
                repr(float(v)) for v in pv
            ]
            fh.write(",".join(row) + "\n")
