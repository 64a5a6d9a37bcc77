# vim: set ai et ts=4 sw=4 tw=80:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT

"""Tests for the command line driver, its exit codes and artifacts"""

import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from yeeholtz.__about__ import __version__
from yeeholtz._io import read_raw
from yeeholtz.errors import ConfigurationError
from yeeholtz.grid import Domain, build_grid
from yeeholtz.yeeholtz import (
    EXIT_CONFIG,
    EXIT_NONCONVERGED,
    EXIT_OK,
    YeeHoltz,
    fit_exponent,
    waveguide_metric,
)


def _run(datadir, verb, config, *opts):
    """Run a verb on a config from the data dir, writing into out/"""
    out = Path(datadir) / "out"
    config = str(Path(datadir) / config)
    app = YeeHoltz([verb, "-c", config, "-o", str(out), *opts])
    return app.execute(), out


def _rows(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.reader(fh))


class TestArgs:
    """Command line parsing"""

    def test_version(self, capsys):
        """Test version string against version from __about.py__"""
        with pytest.raises(SystemExit) as exc:
            YeeHoltz(["--version"])

        assert __version__ in capsys.readouterr().out
        assert exc.value.code == 0

    @pytest.mark.parametrize(
        "args",
        [[], ["run"], ["solve", "-c", "x.toml"], ["run", "-c", "x", "--tol=0"]],
    )
    def test_usage_errors(self, args):
        """Missing verb or config and invalid values exit with status 2"""
        with pytest.raises(SystemExit) as exc:
            YeeHoltz(args)

        assert exc.value.code == 2

    def test_overrides(self, datadir):
        """Solver options override the config file"""
        app = YeeHoltz(
            [
                "run",
                "-c",
                str(Path(datadir) / "tiny.toml"),
                "--tol=1e-6",
                "--max-iters=7",
                "-j",
                "3",
                "-o",
                str(Path(datadir) / "o"),
            ]
        )
        app.setup()
        assert app.config.tolerance == 1e-6
        assert app.config.max_iters == 7
        assert app.config.threads == 3


class TestRun:
    """The run and multifreq verbs"""

    def test_artifacts(self, datadir):
        """A converged run writes fields, residuals and a summary"""
        code, out = _run(datadir, "run", "tiny.toml")
        assert code == EXIT_OK
        for name in (
            "config.json",
            "summary.json",
            "residuals.csv",
            "im_ez.vtk",
            "re_hx.vtk",
            "ez_normalized.vtk",
            "im_ez.bin",
            "im_ez.hdr",
        ):
            assert (out / name).is_file(), name
        summary = json.loads((out / "summary.json").read_text())
        assert summary["converged"]
        assert summary["method"] == "cg"
        assert summary["grid"]["cells"] == [6, 6]
        assert summary["metric"] > 0
        config = json.loads((out / "config.json").read_text())
        assert config["config_hash"] == summary["config_hash"]
        assert config["version"] == __version__
        rows = _rows(out / "residuals.csv")
        assert len(rows) == summary["iterations"] + 1

    def test_raw_field(self, datadir):
        """Raw fields carry their shape in the sidecar header"""
        _run(datadir, "run", "tiny.toml")
        ez, header = read_raw(Path(datadir) / "out" / "im_ez.bin")
        assert ez.shape == (7, 7)
        assert header["component"] == "ez"
        assert not ez[0, :].any()

    def test_config_snapshot_rerun(self, datadir):
        """The written config.json is itself a valid config"""
        code, out = _run(datadir, "run", "tiny.toml")
        assert code == EXIT_OK
        app = YeeHoltz(
            ["run", "-c", str(out / "config.json"), "-o", str(out / "again")]
        )
        app.setup()
        assert app.config.frequencies == (5.0,)

    def test_not_converged(self, datadir):
        """Running out of iterations exits with status 3"""
        code, out = _run(
            datadir, "run", "tiny.toml", "--tol=1e-14", "--max-iters=1"
        )
        assert code == EXIT_NONCONVERGED
        assert not json.loads((out / "summary.json").read_text())["converged"]

    def test_bad_config(self, datadir, caplog):
        """Config errors exit with status 2 and name the line"""
        code, _ = _run(datadir, "run", "bad.toml")
        assert code == EXIT_CONFIG
        assert "line 5" in caplog.text

    def test_missing_config(self, datadir):
        code, _ = _run(datadir, "run", "nope.toml")
        assert code == EXIT_CONFIG

    def test_multifreq(self, datadir):
        """One set of files per frequency"""
        code, out = _run(datadir, "multifreq", "multifreq.toml")
        assert code == EXIT_OK
        for omega in ("3", "6"):
            assert (out / f"w{omega}_im_ez.vtk").is_file()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["frequencies"] == [3.0, 6.0]

    def test_multifreq_needs_two(self, datadir):
        code, _ = _run(datadir, "multifreq", "tiny.toml")
        assert code == EXIT_CONFIG


class TestSweep:
    """Frequency sweeps"""

    def test_rows(self, datadir):
        """One CSV row per frequency, with the field metric"""
        code, out = _run(datadir, "sweep", "sweep.toml")
        assert code == EXIT_OK
        rows = _rows(out / "sweep.csv")
        assert rows[0] == [
            "omega",
            "iterations",
            "converged",
            "wave_solves",
            "seconds",
            "S",
        ]
        assert [float(r[0]) for r in rows[1:]] == [3.0, 5.0]
        assert all(r[2] == "True" for r in rows[1:])
        assert all(float(r[5]) > 0 for r in rows[1:])

    def test_empty(self, datadir):
        """An empty frequency list writes a header only CSV"""
        code, out = _run(datadir, "sweep", "sweep_empty.toml")
        assert code == EXIT_OK
        assert _rows(out / "sweep.csv") == [
            ["omega", "iterations", "converged", "wave_solves", "seconds"]
        ]
        summary = json.loads((out / "summary.json").read_text())
        assert summary["converged"] == 0


class TestVerify:
    """Operator and contraction checks on a small cavity"""

    def test_cavity(self, datadir):
        code, out = _run(datadir, "verify", "verify.toml")
        assert code == EXIT_OK
        report = (out / "verify.txt").read_text()
        assert "symmetric positive definite: PASS" in report
        assert "eigenvalue identity" in report
        assert "FAIL" not in report
        assert len(_rows(out / "eigenvalues.csv")) == 25 + 1
        assert len(_rows(out / "theorem.csv")) == 2


class TestConvergence:
    """Manufactured solution refinement"""

    def test_affine(self, datadir):
        """The affine field is exact on every grid"""
        code, out = _run(datadir, "convergence", "affine.toml")
        assert code == EXIT_OK
        rows = _rows(out / "errors.csv")
        assert rows[0] == ["points", "omega", "spacing", "max_error"]
        assert len(rows) == 3
        assert all(float(r[3]) < 1e-9 for r in rows[1:])


class TestWaveguideMetric:
    """Field strength over a rectangular strip"""

    @pytest.fixture
    def grid(self):
        return build_grid(Domain((0, 0), (1, 1), (10, 10)))

    def test_zero(self, grid):
        assert waveguide_metric(np.zeros((11, 11)), grid, (0, 0), (1, 1)) == 0

    @pytest.mark.parametrize(
        ("lower", "upper"),
        [
            ((0.2, 0.3), (0.4, 0.9)),
            ((0.22, 0.0), (0.47, 1.0)),
            ((0, 0), (1, 1)),
        ],
    )
    def test_unit_field(self, grid, lower, upper):
        """A unit field gives the square root of the strip area"""
        area = (upper[0] - lower[0]) * (upper[1] - lower[1])
        got = waveguide_metric(np.ones((11, 11)), grid, lower, upper)
        assert got == pytest.approx(math.sqrt(area))

    def test_outside(self, grid):
        with pytest.raises(ConfigurationError, match="outside"):
            waveguide_metric(np.ones((11, 11)), grid, (0.5, 0.5), (1.5, 1.0))


class TestExponent:
    """Power law fits of iteration counts"""

    def test_linear(self):
        assert fit_exponent([1.0, 2.0, 4.0], [3, 6, 12]) == pytest.approx(1.0)

    def test_too_few(self):
        assert math.isnan(fit_exponent([2.0], [10]))
