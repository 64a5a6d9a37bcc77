# vim: set ai et ts=4 sw=4 tw=80:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT

"""Tests for reading and validating run configurations"""

import json

import numpy as np
import pytest

from yeeholtz._config import load_config, locate
from yeeholtz.errors import ConfigurationError
from yeeholtz.filters import Quadrature
from yeeholtz.grid import Mode
from yeeholtz.timedomain import SourceMode

BASE = [
    "[domain]",
    "lower = [0.0, 0.0]",
    "upper = [1.0, 1.0]",
    "cells = [8, 8]",
    "",
    "[[source]]",
    'component = "ez"',
    "center = [0.5, 0.5]",
    "",
    "[solve]",
    "frequency = 5.0",
]


def _write(tmp_path, lines, name="run.toml"):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _error(tmp_path, lines, name="run.toml"):
    with pytest.raises(ConfigurationError) as err:
        load_config(_write(tmp_path, lines, name))
    return err.value


class TestDefaults:
    """A minimal config is completed with defaults"""

    def test_minimal(self, tmp_path):
        cfg = load_config(_write(tmp_path, BASE))
        assert cfg.dimension == 2
        assert cfg.cells == (8, 8)
        assert cfg.frequencies == (5.0,)
        assert cfg.tolerance == 1e-8
        assert cfg.max_iters == 500
        assert cfg.source_mode is SourceMode.SIN_EXACT
        assert cfg.quadrature is Quadrature.TRAPEZOID
        assert cfg.boundary.all_pec
        assert cfg.state_mode() is Mode.ENERGY_CONSERVING
        assert cfg.sources[0].kind == "gaussian"

    def test_gaussian_current(self, tmp_path):
        """The default Gaussian peaks at ω times the amplitude"""
        cfg = load_config(_write(tmp_path, BASE))
        grid = cfg.grid(5.0)
        (src,) = cfg.build_sources(grid)
        assert src.current["ez"][4, 4] == pytest.approx(5.0)
        assert src.current["ez"].max() == pytest.approx(5.0)

    def test_points_per_omega(self, tmp_path):
        """points_per_omega·⌈ω⌉ points per direction"""
        lines = [*BASE[:3], "points_per_omega = 4", *BASE[4:]]
        cfg = load_config(_write(tmp_path, lines))
        assert cfg.domain(5.5).cells == (23, 23)
        with pytest.raises(ConfigurationError, match="frequency"):
            cfg.domain()

    def test_snapshot_round_trip(self, tmp_path):
        """The JSON snapshot reads back to the same configuration"""
        cfg = load_config(_write(tmp_path, BASE))
        snap = cfg.snapshot()
        path = tmp_path / "config.json"
        path.write_text(json.dumps(snap), encoding="utf-8")
        again = load_config(path)
        assert again.snapshot() == snap
        assert again.frequencies == cfg.frequencies

    def test_hash_tracks_content(self, tmp_path):
        first = load_config(_write(tmp_path, BASE)).snapshot()
        other = load_config(
            _write(tmp_path, [*BASE, "periods = 2"], "other.toml")
        ).snapshot()
        assert first["config_hash"] != other["config_hash"]

    def test_override(self, tmp_path):
        """Command line values replace config values"""
        cfg = load_config(_write(tmp_path, BASE))
        cfg.override(tolerance=1e-6, max_iters=None, output=tmp_path / "o")
        assert cfg.tolerance == 1e-6
        assert cfg.max_iters == 500
        assert cfg.snapshot()["solve"]["tolerance"] == 1e-6
        assert cfg.snapshot()["output"]["directory"] == str(tmp_path / "o")
        with pytest.raises(ConfigurationError):
            cfg.override(tolerance=-1.0)


class TestLineNumbers:
    """Errors point at the offending line"""

    def test_unknown_key(self, tmp_path):
        err = _error(tmp_path, [*BASE, "tolerence = 1e-6"])
        assert err.line == 12
        assert str(err).startswith("line 12:")
        assert "tolerence" in str(err)

    def test_toml_syntax(self, tmp_path):
        lines = list(BASE)
        lines[2] = "upper = = [1.0, 1.0]"
        assert _error(tmp_path, lines).line == 3

    def test_json_syntax(self, tmp_path):
        lines = ["{", '  "domain": {', '    "lower": [0.0, 0.0],,', "  }", "}"]
        assert _error(tmp_path, lines, "run.json").line == 3

    def test_component(self, tmp_path):
        """2D grids only carry Ez"""
        lines = list(BASE)
        lines[6] = 'component = "ex"'
        assert _error(tmp_path, lines).line == 7

    def test_incommensurate(self, tmp_path):
        lines = [*BASE[:10], "frequencies = [5.5, 7.1]"]
        err = _error(tmp_path, lines)
        assert err.line == 11
        assert "common base" in str(err)

    def test_locate_array_of_tables(self):
        text = "\n".join(
            ["[[source]]", "kind = 'point'", "", "[[source]]", "kind = 'bad'"]
        )
        assert locate(text, "kind", "source", 1) == 5
        assert locate(text, None, "source", 1) == 4


class TestValidation:
    """Semantic checks before any compute"""

    @pytest.mark.parametrize(
        ("extra", "match"),
        [
            (["max_iters = 0"], "max_iters"),
            (["solver = 'bicgstab'"], "solver"),
            (["source_mode = 'square'"], "source_mode"),
            (["periods = 1.5"], "periods"),
            (["frequencies = [2.0]"], "either"),
        ],
    )
    def test_solve_section(self, tmp_path, extra, match):
        with pytest.raises(ConfigurationError, match=match):
            load_config(_write(tmp_path, [*BASE, *extra]))

    def test_cells_and_points(self, tmp_path):
        """Exactly one resolution rule"""
        lines = [*BASE[:4], "points_per_omega = 4", *BASE[4:]]
        assert "exactly one" in str(_error(tmp_path, lines))

    def test_missing_source(self, tmp_path):
        lines = [*BASE[:5], *BASE[9:]]
        assert "source" in str(_error(tmp_path, lines))

    def test_mur_needs_full(self, tmp_path):
        """Absorbing faces with an explicit interior-E state are refused"""
        lines = [
            *BASE,
            'mode = "energy-conserving"',
            "",
            "[boundary]",
            'default = "mur1"',
        ]
        err = _error(tmp_path, lines)
        assert "mur1" in str(err)
        assert err.line == 12

    def test_mur_auto_full(self, tmp_path):
        """With mode = "auto" open problems use the full state"""
        lines = [*BASE, "", "[boundary]", 'default = "mur1"', 'y_upper = "pec"']
        cfg = load_config(_write(tmp_path, lines))
        assert cfg.state_mode() is Mode.FULL
        assert cfg.boundary.mur_faces()

    def test_metric_outside(self, tmp_path):
        lines = [*BASE, "", "[metric]", "lower = [0.5, 0.5]", "upper = [2, 1]"]
        assert "outside" in str(_error(tmp_path, lines))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="Cannot read"):
            load_config(tmp_path / "nope.toml")

    def test_unknown_solution(self, tmp_path):
        lines = [*BASE[:6], 'kind = "manufactured"', 'solution = "cubic"']
        lines += BASE[9:]
        err = _error(tmp_path, lines)
        assert err.line == 8


class TestGeometry:
    """Regions and sources from the config"""

    def test_lattice(self, tmp_path):
        """Lattices expand into circles with skipped rows left out"""
        lines = [
            *BASE,
            "",
            "[[material.regions]]",
            'shape = "lattice"',
            "spacing = 0.2",
            "radius = 0.05",
            "rows = 4",
            "cols = 5",
            "origin = [0.1, 0.1]",
            "skip_rows = [2]",
            "eps = 8.9",
        ]
        cfg = load_config(_write(tmp_path, lines))
        regions = cfg.material.regions
        assert len(regions) == 15
        assert all(r.shape == "circle" and r.eps == 8.9 for r in regions)
        assert not cfg.material.uniform

    def test_pec_box(self, tmp_path):
        lines = [
            *BASE,
            "",
            "[[pec]]",
            "lower = [0.25, 0.25]",
            "upper = [0.5, 0.5]",
        ]
        cfg = load_config(_write(tmp_path, lines))
        grid = cfg.grid()
        assert grid.pec["ez"][2:5, 2:5].all()

    def test_line_source(self, tmp_path):
        """A line source is uniform on the nodes of its segment"""
        lines = [
            *BASE[:6],
            'kind = "line"',
            "lower = [0.0, 0.5]",
            "upper = [1.0, 0.5]",
            "scale_by_omega = false",
            "amplitude = 2.0",
            *BASE[9:],
        ]
        cfg = load_config(_write(tmp_path, lines))
        (src,) = cfg.build_sources(cfg.grid())
        ez = src.current["ez"]
        np.testing.assert_allclose(ez[:, 4], 2.0)
        assert ez.sum() == pytest.approx(2.0 * 9)

    def test_multi_frequency_sources(self, tmp_path):
        """Several frequencies force sin sources and one source per frequency"""
        lines = [
            *BASE[:10],
            "frequencies = [2.0, 6.0]",
            'source_mode = "sin-recursive"',
        ]
        cfg = load_config(_write(tmp_path, lines))
        sources = cfg.build_sources(cfg.grid())
        assert [s.omega for s in sources] == [2.0, 6.0]
        assert all(s.mode is SourceMode.SIN_EXACT for s in sources)

    def test_multi_frequency_mode_warning(self, tmp_path, caplog):
        """Replacing a configured source_mode is reported"""
        lines = [
            *BASE[:10],
            "frequencies = [2.0, 6.0]",
            'source_mode = "sin-recursive-modified"',
        ]
        cfg = load_config(_write(tmp_path, lines))
        cfg.build_sources(cfg.grid())
        assert 'source_mode = "sin-recursive-modified"' in caplog.text
        assert 'using "sin"' in caplog.text

    def test_single_frequency_mode_kept(self, tmp_path, caplog):
        lines = [*BASE, 'source_mode = "sin-recursive"']
        cfg = load_config(_write(tmp_path, lines))
        (src,) = cfg.build_sources(cfg.grid())
        assert src.mode is SourceMode.SIN_RECURSIVE
        assert "source_mode" not in caplog.text
