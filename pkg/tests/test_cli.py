import json
import subprocess
import sys

import numpy as np
import pytest

from antifk.cli import main


def write_config(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def solve_config(tmp_path, **overrides):
    solve = {"lam": 20.0, "rho": 1.0, "half_width": 12, "tol": 1e-10}
    solve.update(overrides)
    return write_config(
        tmp_path / "config.json",
        {"potential": {"family": "cosine"}, "solve": solve},
    )


class TestCertify:
    def test_reproduces_cosine_numbers(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "c.json",
            {
                "potential": {"family": "cosine"},
                "certification": {"search_window": [-10.0, 10.0]},
            },
        )
        out = tmp_path / "out"
        assert main(["certify", "--config", cfg, "--out", str(out)]) == 0
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["ball_radius"] == pytest.approx(np.pi / 4, rel=1e-6)
        assert cert["covering_radius"] == pytest.approx(np.pi / 2, rel=1e-6)
        assert cert["expansion"] == pytest.approx(np.sqrt(2) / 2, rel=1e-6)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "certify"
        assert "certificate.json" in manifest["artifacts"]

    def test_zero_free_window_exits_2(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.json",
            {
                "potential": {"family": "cosine"},
                "certification": {"search_window": [0.2, 0.8]},
            },
        )
        assert main(["certify", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


class TestSolve:
    def test_artifacts_and_exit(self, tmp_path):
        cfg = solve_config(tmp_path)
        out = tmp_path / "out"
        assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
        for name in ("solution.csv", "certificate.json", "report.json",
                     "manifest.json"):
            assert (out / name).exists()
        rep = json.loads((out / "report.json").read_text())
        assert rep["report"]["converged"]
        assert rep["report"]["final_residual"] <= 1e-10
        assert rep["params"]["half_width"] == 12
        lines = (out / "solution.csv").read_text().strip().split("\n")
        assert lines[0] == "site,u_0"
        assert len(lines) == 26

    def test_deterministic_output(self, tmp_path):
        cfg = solve_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["solve", "--config", cfg, "--out", str(a)]) == 0
        assert main(["solve", "--config", cfg, "--out", str(b)]) == 0
        for name in ("solution.csv", "certificate.json", "report.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_max_iter_exhaustion_exits_3(self, tmp_path):
        cfg = solve_config(tmp_path, max_iter=2)
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 3

    def test_weak_coupling_exits_4(self, tmp_path):
        cfg = solve_config(tmp_path, lam=0.5)
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 4

    def test_unknown_key_exits_1(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.json",
            {"potential": {"family": "cosine"},
             "solve": {"lam": 20.0, "rho": 1.0, "half_width": 8, "bogus": 1}},
        )
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 1

    def test_missing_config_file_exits_1(self, tmp_path):
        assert main(
            ["solve", "--config", str(tmp_path / "nope.json"),
             "--out", str(tmp_path / "o")]
        ) == 1

    def test_malformed_json_exits_1(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(
            ["solve", "--config", str(bad), "--out", str(tmp_path / "o")]
        ) == 1

    def test_bad_certificate_path_exits_1(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.json",
            {
                "potential": {"family": "cosine"},
                "certificate": {"path": str(tmp_path / "missing.json")},
                "solve": {"lam": 20.0, "rho": 1.0, "half_width": 8},
            },
        )
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 1

    def test_usage_error_exits_1(self):
        assert main(["solve"]) == 1
        assert main(["frobnicate", "--config", "x", "--out", "y"]) == 1


class TestHyperbolicity:
    def test_in_process_solve_passes(self, tmp_path):
        cfg = solve_config(tmp_path)
        out = tmp_path / "out"
        assert main(["hyperbolicity", "--config", cfg, "--out", str(out)]) == 0
        payload = json.loads((out / "hyperbolicity.json").read_text())
        assert payload["all_pass"] is True
        assert payload["orbit_pass"] is True
        assert payload["source"] == "solve"
        assert payload["cone"]["mu"] == pytest.approx(5 + 2 * np.sqrt(6))
        assert payload["legendre_sigma_bounds"] == [
            pytest.approx(np.sqrt(5.0)), pytest.approx(np.sqrt(5.0))
        ]
        lines = (out / "orbit.csv").read_text().strip().split("\n")
        assert lines[0] == "site,u_0,p_0"

    def test_anchor_configuration_fails_orbit(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.json",
            {
                "potential": {"family": "cosine"},
                "hyperbolicity": {
                    "use_anchor_configuration": True,
                    "lam": 20.0,
                    "rho": 1.0,
                    "half_width": 12,
                },
            },
        )
        out = tmp_path / "out"
        # anchors pass the cone check at lam = 20 but are not an orbit
        assert main(["hyperbolicity", "--config", cfg, "--out", str(out)]) == 5
        payload = json.loads((out / "hyperbolicity.json").read_text())
        assert payload["orbit_pass"] is False
        assert payload["source"] == "anchor-configuration"

    def test_solution_path_roundtrip(self, tmp_path):
        cfg = solve_config(tmp_path)
        solve_out = tmp_path / "sol"
        assert main(["solve", "--config", cfg, "--out", str(solve_out)]) == 0
        hyp_cfg = write_config(
            tmp_path / "h.json",
            {
                "potential": {"family": "cosine"},
                "hyperbolicity": {
                    "solution": str(solve_out / "solution.csv"),
                    "report": str(solve_out / "report.json"),
                },
            },
        )
        out = tmp_path / "hyp"
        assert main(["hyperbolicity", "--config", hyp_cfg, "--out", str(out)]) == 0
        payload = json.loads((out / "hyperbolicity.json").read_text())
        assert payload["source"] == "solution"
        assert payload["all_pass"] is True


class TestSweep:
    def sweep_config(self, tmp_path, **kw):
        block = {
            "lams": [20.0, 40.0],
            "rhos": [0.5, 1.0],
            "half_width": 8,
            "hyperbolicity": True,
        }
        block.update(kw)
        return write_config(
            tmp_path / "s.json",
            {"potential": {"family": "cosine"}, "sweep": block},
        )

    def test_grid_rows(self, tmp_path):
        cfg = self.sweep_config(tmp_path)
        out = tmp_path / "out"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
        lines = (out / "sweep.csv").read_text().strip().split("\n")
        assert lines[0].startswith("lam,rho,status")
        assert len(lines) == 5
        for row in lines[1:]:
            fields = row.split(",")
            assert fields[2] == "ok"
            assert fields[-1] == "true"

    def test_parallel_matches_serial(self, tmp_path):
        cfg = self.sweep_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["sweep", "--config", cfg, "--out", str(a),
                     "--workers", "1"]) == 0
        assert main(["sweep", "--config", cfg, "--out", str(b),
                     "--workers", "2"]) == 0
        assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()

    def test_case_list_with_failures(self, tmp_path):
        cfg = self.sweep_config(
            tmp_path, lams=None, rhos=None,
            cases=[[20.0, 1.0], [0.5, 1.0]],
        )
        # None entries must be dropped before writing
        payload = json.loads((tmp_path / "s.json").read_text())
        payload["sweep"] = {
            "cases": [[20.0, 1.0], [0.5, 1.0]],
            "half_width": 8,
        }
        cfg = write_config(tmp_path / "s.json", payload)
        out = tmp_path / "out"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
        lines = (out / "sweep.csv").read_text().strip().split("\n")
        statuses = [row.split(",")[2] for row in lines[1:]]
        assert statuses == ["domain-error", "ok"]

    def test_grid_and_cases_conflict(self, tmp_path):
        cfg = write_config(
            tmp_path / "s.json",
            {
                "potential": {"family": "cosine"},
                "sweep": {"cases": [[20.0, 1.0]], "lams": [20.0], "rhos": [1.0]},
            },
        )
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


class TestModuleEntry:
    def test_version_subprocess(self):
        proc = subprocess.run(
            [sys.executable, "-m", "antifk", "--version"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "antifk" in proc.stdout

    def test_manifest_records_config_hash(self, tmp_path):
        import hashlib

        cfg = solve_config(tmp_path)
        out = tmp_path / "out"
        main(["solve", "--config", cfg, "--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        digest = hashlib.sha256(open(cfg, "rb").read()).hexdigest()
        assert manifest["config_sha256"] == digest
        assert manifest["version"]
