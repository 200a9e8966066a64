"""Command-line driver.

Four subcommands cover the pipeline: ``certify`` builds a zero-set
certificate for a potential, ``solve`` runs the contraction to an
equilibrium, ``hyperbolicity`` checks cone conditions and the twist orbit
of a configuration, and ``sweep`` tabulates solves over a coupling /
rotation grid. All runs are driven by a JSON config file (strictly
validated; unknown keys are rejected) and write their artifacts into the
--out directory. Every artifact except manifest.json is byte-deterministic
for a fixed config and seed.

Exit codes: 0 success, 1 usage or config error, 2 certification failure,
3 no convergence, 4 inadmissible local-inverse target, 5 hyperbolicity
verdict failed.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import datetime
import hashlib
import json
import os
import sys

from . import __version__
from .errors import (
    CertificateError,
    CertificationError,
    ConfigError,
    ConvergenceError,
    ConvexityError,
    DomainError,
)
from .hyperbolicity import (
    HyperbolicityCertificate,
    cone_parameters,
    cone_splitting,
    legendre_bounds,
    momentum,
    orbit_to_csv,
    verify_cone_conditions,
    verify_orbit,
)
from .interactions import NearestNeighborInteraction, interaction_from_dict
from .lattice import (
    AnchorTail,
    Window,
    anchor_configuration,
    as_rotation,
    configuration_from_csv,
    configuration_to_csv,
)
from .potentials import (
    AubryCertificate,
    cosine_certificate,
    estimate_aubry,
    potential_from_dict,
)
from .solver import ContractionSolver, SolveParams, solve_equilibrium

_TOP_KEYS = {
    "seed",
    "potential",
    "interaction",
    "certificate",
    "certification",
    "solve",
    "hyperbolicity",
    "sweep",
}
_CERTIFICATION_KEYS = {
    "search_window",
    "grid_points",
    "zero_tol",
    "degeneracy_fraction",
    "safety",
    "expansion_fraction",
    "radius_samples",
    "covering_checks",
    "pair_checks",
}
_SOLVE_KEYS = {"lam", "rho", "half_width", "tol", "max_iter", "inner_tol"}
_HYP_KEYS = {
    "solution",
    "report",
    "lam",
    "rho",
    "half_width",
    "horizon",
    "splitting",
    "orbit_tol",
    "use_anchor_configuration",
}
_SWEEP_KEYS = {
    "lams",
    "rhos",
    "cases",
    "half_width",
    "tol",
    "max_iter",
    "hyperbolicity",
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _check_keys(block, allowed, where):
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")


def _require(block, key, where):
    if key not in block:
        raise ConfigError(f"missing required key '{key}' in {where}")
    return block[key]


def _load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    _check_keys(cfg, _TOP_KEYS, "config")
    return cfg


def _build_potential(cfg):
    block = cfg.get("potential", {"family": "cosine"})
    try:
        return potential_from_dict(block)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad potential block: {exc}") from exc


def _build_interaction(cfg):
    block = cfg.get("interaction", {"kind": "nearest-neighbor"})
    try:
        return interaction_from_dict(block)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad interaction block: {exc}") from exc


def _build_certificate(cfg, potential, seed):
    if "certificate" in cfg:
        block = cfg["certificate"]
        if isinstance(block, dict) and "path" in block:
            if set(block) != {"path"}:
                raise ConfigError(
                    "certificate block with 'path' takes no other keys"
                )
            try:
                with open(block["path"], encoding="utf-8") as fh:
                    block = json.load(fh)
            except OSError as exc:
                raise ConfigError(
                    f"cannot read certificate {block['path']}: {exc}"
                ) from exc
        try:
            return AubryCertificate.from_json_dict(block)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad certificate block: {exc}") from exc
    if "certification" in cfg:
        return _estimate_certificate(cfg["certification"], potential, seed)
    if cfg.get("potential", {"family": "cosine"}).get("family") == "cosine":
        return cosine_certificate()
    raise ConfigError(
        "no certificate: supply a 'certificate' or 'certification' block"
    )


def _estimate_certificate(block, potential, seed):
    _check_keys(block, _CERTIFICATION_KEYS, "certification")
    window = _require(block, "search_window", "certification")
    if (
        not isinstance(window, (list, tuple))
        or len(window) != 2
        or not all(isinstance(x, (int, float)) for x in window)
    ):
        raise ConfigError("certification.search_window must be [lo, hi]")
    kwargs = {k: v for k, v in block.items() if k != "search_window"}
    return estimate_aubry(potential, tuple(window), seed=seed, **kwargs)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(outdir, command, config_path, artifacts):
    digest = hashlib.sha256()
    with open(config_path, "rb") as fh:
        digest.update(fh.read())
    _write_json(
        os.path.join(outdir, "manifest.json"),
        {
            "command": command,
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "config_sha256": digest.hexdigest(),
            "artifacts": sorted(artifacts),
            "version": __version__,
        },
    )


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _seed(cfg, args):
    if args.seed is not None:
        return args.seed
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return seed


def _cmd_certify(args):
    cfg = _load_config(args.config)
    if "certification" not in cfg:
        raise ConfigError("certify requires a 'certification' block")
    potential = _build_potential(cfg)
    cert = _estimate_certificate(cfg["certification"], potential, _seed(cfg, args))
    outdir = _outdir(args)
    _write_json(os.path.join(outdir, "certificate.json"), cert.to_json_dict())
    _write_manifest(outdir, "certify", args.config, ["certificate.json"])
    print(
        f"certificate: r={cert.ball_radius:.6g} R={cert.covering_radius:.6g} "
        f"m={cert.expansion:.6g}"
    )
    return 0


def _solve_params(block):
    _check_keys(block, _SOLVE_KEYS, "solve")
    for key in ("lam", "rho", "half_width"):
        _require(block, key, "solve")
    kwargs = dict(block)
    kwargs["window"] = kwargs.pop("half_width")
    try:
        return SolveParams(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad solve block: {exc}") from exc


def _cmd_solve(args):
    cfg = _load_config(args.config)
    if "solve" not in cfg:
        raise ConfigError("solve requires a 'solve' block")
    potential = _build_potential(cfg)
    interaction = _build_interaction(cfg)
    cert = _build_certificate(cfg, potential, _seed(cfg, args))
    params = _solve_params(cfg["solve"])
    solver = ContractionSolver(interaction, potential, cert, params)
    u, report = solver.solve()
    outdir = _outdir(args)
    configuration_to_csv(u, os.path.join(outdir, "solution.csv"))
    _write_json(os.path.join(outdir, "certificate.json"), cert.to_json_dict())
    _write_json(
        os.path.join(outdir, "report.json"),
        {
            "command": "solve",
            "params": {
                "lam": params.lam,
                "rho": params.rho.rho.tolist(),
                "half_width": params.half_width,
                "tol": params.tol,
                "max_iter": params.max_iter,
                "inner_tol": params.inner_tol,
            },
            "potential": potential.to_dict(),
            "interaction": interaction.to_dict(),
            "report": report.to_json_dict(),
        },
    )
    _write_manifest(
        outdir,
        "solve",
        args.config,
        ["solution.csv", "certificate.json", "report.json"],
    )
    print(
        f"solved in {report.iterations} iterations, residual "
        f"{report.final_residual:.3e}, d(u, anchors) = "
        f"{report.distance_to_anchor:.6g}"
    )
    return 0


def _hyp_setting(hblock, sblock, key):
    if key in hblock:
        return hblock[key]
    if key in sblock:
        return sblock[key]
    raise ConfigError(
        f"hyperbolicity needs '{key}' (in the hyperbolicity or solve block)"
    )


def _cmd_hyperbolicity(args):
    cfg = _load_config(args.config)
    hblock = cfg.get("hyperbolicity", {})
    _check_keys(hblock, _HYP_KEYS, "hyperbolicity")
    sblock = cfg.get("solve", {})
    potential = _build_potential(cfg)
    interaction = _build_interaction(cfg)
    if not isinstance(interaction, NearestNeighborInteraction):
        raise ConfigError(
            "hyperbolicity analysis supports nearest-neighbor interactions only"
        )
    cert = _build_certificate(cfg, potential, _seed(cfg, args))
    warnings = []
    if hblock.get("use_anchor_configuration", False):
        lam = float(_hyp_setting(hblock, sblock, "lam"))
        rho = as_rotation(_hyp_setting(hblock, sblock, "rho"))
        half_width = int(_hyp_setting(hblock, sblock, "half_width"))
        u = anchor_configuration(
            rho, cert.sampler, cert.covering_radius, Window(half_width, rho.dimension)
        )
        source = "anchor-configuration"
        warnings.append(
            "evaluated at the anchor configuration, not a solved equilibrium"
        )
    elif "solution" in hblock:
        lam, rho = _solution_context(hblock, sblock)
        tail = AnchorTail(rho, cert.sampler, cert.covering_radius)
        try:
            u = configuration_from_csv(hblock["solution"], tail)
        except OSError as exc:
            raise ConfigError(
                f"cannot read solution {hblock['solution']}: {exc}"
            ) from exc
        source = "solution"
    else:
        if "solve" not in cfg:
            raise ConfigError(
                "hyperbolicity needs a 'solution' path, "
                "use_anchor_configuration, or a 'solve' block"
            )
        params = _solve_params(cfg["solve"])
        u, _ = solve_equilibrium(params, interaction, potential, cert)
        lam = params.lam
        source = "solve"
    verdict = verify_cone_conditions(u, interaction, potential, lam, cert)
    split = None
    if hblock.get("splitting", True):
        horizon = hblock.get("horizon")
        if horizon is None:
            horizon = min(20, max(u.window.half_width - 1, 1))
        try:
            split = cone_splitting(u, interaction, potential, lam, horizon=int(horizon))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    p = momentum(u, interaction, potential, lam)
    deviation = verify_orbit(u, p, interaction, potential, lam)
    orbit_tol = hblock.get("orbit_tol")
    if orbit_tol is None:
        base_tol = sblock.get("tol", 1e-10)
        orbit_tol = 10.0 * base_tol * (1.0 + lam * potential.hessian_sup_bound())
    orbit_pass = bool(deviation <= orbit_tol)
    report = HyperbolicityCertificate(
        lam=lam,
        cone=verdict.cone,
        verdict=verdict,
        splitting=split,
        legendre_sigma_bounds=legendre_bounds(interaction.coupling),
        orbit_deviation=deviation,
        warnings=warnings,
    )
    outdir = _outdir(args)
    payload = report.to_json_dict()
    payload.update(
        {"orbit_tol": float(orbit_tol), "orbit_pass": orbit_pass, "source": source}
    )
    _write_json(os.path.join(outdir, "hyperbolicity.json"), payload)
    orbit_to_csv(os.path.join(outdir, "orbit.csv"), u, p)
    _write_manifest(
        outdir, "hyperbolicity", args.config, ["hyperbolicity.json", "orbit.csv"]
    )
    ok = report.all_pass and orbit_pass
    print(
        f"cone conditions: {'pass' if verdict.all_pass else 'FAIL'} "
        f"(margin {verdict.margin:.4g}); orbit deviation {deviation:.3e} "
        f"{'<=' if orbit_pass else '>'} {orbit_tol:.3e}"
    )
    return 0 if ok else 5


def _solution_context(hblock, sblock):
    if "lam" in hblock or "rho" in hblock:
        lam = float(_hyp_setting(hblock, sblock, "lam"))
        rho = as_rotation(_hyp_setting(hblock, sblock, "rho"))
        return lam, rho
    report_path = hblock.get("report")
    if report_path is None:
        raise ConfigError(
            "hyperbolicity with a 'solution' path needs lam and rho, either "
            "inline or via a 'report' path"
        )
    try:
        with open(report_path, encoding="utf-8") as fh:
            rep = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read report {report_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"report {report_path} is not valid JSON") from exc
    try:
        params = rep["params"]
        return float(params["lam"]), as_rotation(params["rho"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(
            f"report {report_path} lacks solve parameters"
        ) from exc


def _sweep_case(payload):
    """Worker for one (lam, rho) cell; must stay importable for pickling."""
    (pot_d, int_d, cert_d, lam, rho, half_width, tol, max_iter,
     check_hyp) = payload
    potential = potential_from_dict(pot_d)
    interaction = interaction_from_dict(int_d)
    cert = AubryCertificate.from_json_dict(cert_d)
    row = {
        "lam": lam,
        "rho": rho,
        "status": "ok",
        "iterations": "",
        "final_residual": "",
        "contraction_factor": "",
        "distance_to_anchor": "",
        "distance_to_rotation": "",
        "hyperbolic_pass": "",
    }
    try:
        params = SolveParams(
            lam=lam, rho=rho, window=half_width, tol=tol, max_iter=max_iter
        )
        u, rep = solve_equilibrium(params, interaction, potential, cert)
    except DomainError:
        row["status"] = "domain-error"
        return row
    except ConvergenceError:
        row["status"] = "no-convergence"
        return row
    except (CertificateError, CertificationError):
        row["status"] = "certificate-error"
        return row
    row.update(
        iterations=rep.iterations,
        final_residual=repr(rep.final_residual),
        contraction_factor=repr(rep.contraction_factor),
        distance_to_anchor=repr(rep.distance_to_anchor),
        distance_to_rotation=repr(rep.distance_to_rotation),
    )
    if check_hyp:
        verdict = verify_cone_conditions(u, interaction, potential, lam, cert)
        p = momentum(u, interaction, potential, lam)
        dev = verify_orbit(u, p, interaction, potential, lam)
        orbit_tol = 10.0 * tol * (1.0 + lam * potential.hessian_sup_bound())
        row["hyperbolic_pass"] = str(
            bool(verdict.all_pass and dev <= orbit_tol)
        ).lower()
    return row


_SWEEP_COLUMNS = [
    "lam",
    "rho",
    "status",
    "iterations",
    "final_residual",
    "contraction_factor",
    "distance_to_anchor",
    "distance_to_rotation",
    "hyperbolic_pass",
]


def _sweep_payloads(cfg, args):
    block = cfg.get("sweep")
    if block is None:
        raise ConfigError("sweep requires a 'sweep' block")
    _check_keys(block, _SWEEP_KEYS, "sweep")
    if "cases" in block:
        if "lams" in block or "rhos" in block:
            raise ConfigError("sweep takes either 'cases' or 'lams'/'rhos'")
        cases = block["cases"]
        if not isinstance(cases, list) or not all(
            isinstance(c, (list, tuple)) and len(c) == 2 for c in cases
        ):
            raise ConfigError("sweep.cases must be a list of [lam, rho] pairs")
        pairs = [(float(lam), float(rho)) for lam, rho in cases]
    else:
        lams = _require(block, "lams", "sweep")
        rhos = _require(block, "rhos", "sweep")
        if not isinstance(lams, list) or not isinstance(rhos, list):
            raise ConfigError("sweep.lams and sweep.rhos must be lists")
        pairs = [(float(lam), float(rho)) for lam in lams for rho in rhos]
    if not pairs:
        raise ConfigError("sweep grid is empty")
    potential = _build_potential(cfg)
    interaction = _build_interaction(cfg)
    cert = _build_certificate(cfg, potential, _seed(cfg, args))
    half_width = int(block.get("half_width", 32))
    tol = float(block.get("tol", 1e-10))
    max_iter = int(block.get("max_iter", 200))
    check_hyp = bool(block.get("hyperbolicity", False))
    if check_hyp and not isinstance(interaction, NearestNeighborInteraction):
        raise ConfigError(
            "sweep hyperbolicity checks support nearest-neighbor interactions only"
        )
    pot_d = potential.to_dict()
    int_d = interaction.to_dict()
    cert_d = cert.to_json_dict()
    return [
        (pot_d, int_d, cert_d, lam, rho, half_width, tol, max_iter, check_hyp)
        for lam, rho in sorted(pairs)
    ]


def _cmd_sweep(args):
    cfg = _load_config(args.config)
    payloads = _sweep_payloads(cfg, args)
    workers = max(1, args.workers)
    if workers == 1:
        rows = [_sweep_case(p) for p in payloads]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_case, payloads))
    rows.sort(key=lambda r: (r["lam"], r["rho"]))
    outdir = _outdir(args)
    path = os.path.join(outdir, "sweep.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(_SWEEP_COLUMNS) + "\n")
        for row in rows:
            fh.write(
                ",".join(
                    repr(row[c]) if isinstance(row[c], float) else str(row[c])
                    for c in _SWEEP_COLUMNS
                )
                + "\n"
            )
    _write_manifest(outdir, "sweep", args.config, ["sweep.csv"])
    n_ok = sum(1 for r in rows if r["status"] == "ok")
    print(f"sweep: {n_ok}/{len(rows)} cases solved; table in {path}")
    return 0


def _build_parser():
    parser = _Parser(
        prog="antifk",
        description=(
            "equilibria of strongly coupled Frenkel-Kontorova chains: "
            "certify potentials, solve, check hyperbolicity, sweep"
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("certify", _cmd_certify, "estimate a zero-set certificate"),
        ("solve", _cmd_solve, "run the contraction to an equilibrium"),
        (
            "hyperbolicity",
            _cmd_hyperbolicity,
            "check cone conditions and the twist orbit",
        ),
        ("sweep", _cmd_sweep, "tabulate solves over a parameter grid"),
    ]
    for name, func, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--seed", type=int, default=None, help="override the config seed"
        )
        if name == "sweep":
            p.add_argument(
                "--workers", type=int, default=1, help="parallel worker count"
            )
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits for --help/--version (0) and usage errors (1)
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (CertificationError, CertificateError, ConvexityError) as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return 3
    except DomainError as exc:
        print(f"inadmissible target: {exc}", file=sys.stderr)
        return 4
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
