# vim: set ai et ts=4 sw=4 tw=80:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT

"""Tests for Yee grids, materials, PEC masks and state vectors"""

import numpy as np
import pytest

from yeeholtz.errors import ConfigurationError, ContractError
from yeeholtz.grid import (
    Domain,
    Grid2D,
    Grid3D,
    MaterialSpec,
    Mode,
    Region,
    apply_pec,
    build_grid,
    check_components,
    flatten,
    lattice,
    layout,
    unflatten,
)
from yeeholtz.timedomain import BoundarySpec, Condition


class TestDomain:
    """Validation and derived sizes of domains"""

    def test_spacing(self):
        """Spacing is extent over cell count per axis"""
        dom = Domain((-1, 0), (1, 0.5), (40, 10))
        assert dom.dim == 2
        assert dom.extent == (2.0, 0.5)
        assert dom.spacing == pytest.approx((0.05, 0.05))

    @pytest.mark.parametrize(
        ("lower", "upper", "cells"),
        [
            ((0, 0), (1, 0), (4, 4)),
            ((0, 0), (1, 1), (1, 4)),
            ((0, 0), (1, 1), (4, 4, 4)),
            ((0,), (1,), (4,)),
        ],
    )
    def test_invalid(self, lower, upper, cells):
        """Degenerate or unsupported domains are configuration errors"""
        with pytest.raises(ConfigurationError):
            Domain(lower, upper, cells)

    def test_faces(self):
        """2D domains have four faces, 3D domains six"""
        assert len(Domain((0, 0), (1, 1), (2, 2)).faces) == 4
        assert len(Domain((0, 0, 0), (1, 1, 1), (2, 2, 2)).faces) == 6


class TestGridLayout:
    """Staggered shapes and coordinates"""

    def test_shapes_2d(self, cavity):
        """Ez at nodes, Hx and Hy on cell edges"""
        assert isinstance(cavity, Grid2D)
        assert cavity.ez.shape == (13, 13)
        assert cavity.hx.shape == (13, 12)
        assert cavity.hy.shape == (12, 13)

    def test_shapes_3d(self):
        """Canonical Yee locations in 3D"""
        grid = build_grid(Domain((0, 0, 0), (1, 2, 3), (4, 5, 6)))
        assert isinstance(grid, Grid3D)
        assert grid.ex.shape == (4, 6, 7)
        assert grid.ey.shape == (5, 5, 7)
        assert grid.ez.shape == (5, 6, 6)
        assert grid.hx.shape == (5, 5, 6)
        assert grid.hy.shape == (4, 6, 6)
        assert grid.hz.shape == (4, 5, 7)

    def test_coordinates(self, cavity):
        """Hx sits half a cell up in y"""
        x, y = cavity.coordinates("hx")
        h = 1.0 / 12
        assert x[3, 0] == pytest.approx(3 * h)
        assert y[0, 0] == pytest.approx(0.5 * h)
        assert y[0, -1] == pytest.approx(1.0 - 0.5 * h)

    def test_zeros_like_shares_materials(self, cavity):
        """zeros_like gives fresh fields over the same materials"""
        cavity.ez[4, 4] = 1.0
        new = cavity.zeros_like()
        assert new.ez[4, 4] == 0.0
        assert new.eps is cavity.eps
        new.ez[5, 5] = 2.0
        assert cavity.ez[5, 5] == 0.0

    def test_check_components(self, cavity):
        """A 2D TM grid has no Ex"""
        check_components(cavity, ["ez"])
        with pytest.raises(ConfigurationError, match="ex"):
            check_components(cavity, ["ex"])


class TestPEC:
    """Rasterization of PEC faces and regions"""

    def test_faces_masked(self, cavity):
        """All four boundary node rows are masked, the interior is not"""
        mask = cavity.pec["ez"]
        assert mask[0, :].all()
        assert mask[-1, :].all()
        assert mask[:, 0].all()
        assert mask[:, -1].all()
        assert not mask[1:-1, 1:-1].any()

    def test_mur_faces_unmasked(self):
        """Faces with an absorbing condition are left free"""
        bnd = BoundarySpec.uniform(Condition.MUR1, 2)
        grid = build_grid(Domain((0, 0), (1, 1), (6, 6)), boundary=bnd)
        assert not grid.pec["ez"].any()

    def test_box_region(self, pec2d):
        """Closed box includes nodes on its edges"""
        box = Region("box", lower=(0.25, 0.25), upper=(0.5, 0.5), pec=True)
        grid = build_grid(Domain((0, 0), (1, 1), (8, 8)), None, [box], pec2d)
        mask = grid.pec["ez"][1:-1, 1:-1]
        assert mask.sum() == 9
        assert grid.pec["ez"][2:5, 2:5].all()

    def test_circle_touching_cells(self):
        """A small circle masks the four nodes of the cell containing it"""
        circle = Region("circle", center=(0.3, 0.3), radius=0.05, pec=True)
        grid = build_grid(Domain((0, 0), (1, 1), (5, 5)), pec_regions=[circle])
        mask = grid.pec["ez"][1:-1, 1:-1]
        assert mask.sum() == 4
        assert grid.pec["ez"][1:3, 1:3].all()

    def test_region_outside(self):
        """PEC regions must lie inside the domain"""
        box = Region("box", lower=(0.5, 0.5), upper=(1.5, 0.8), pec=True)
        with pytest.raises(ConfigurationError, match="outside"):
            build_grid(Domain((0, 0), (1, 1), (4, 4)), pec_regions=[box])

    def test_apply_pec_idempotent(self, cavity, rng):
        """Applying the mask twice changes nothing"""
        cavity.ez[...] = rng.standard_normal(cavity.ez.shape)
        apply_pec(cavity)
        once = cavity.ez.copy()
        apply_pec(cavity)
        np.testing.assert_array_equal(cavity.ez, once)
        assert not cavity.ez[0, :].any()


class TestMaterials:
    """Material sampling and region overrides"""

    def test_region_override(self):
        """Later regions override the background"""
        slab = Region("box", lower=(0.5, 0.0), upper=(1.0, 1.0), eps=4.0)
        mat = MaterialSpec(eps=1.0, mu=1.0, regions=(slab,))
        grid = build_grid(Domain((0, 0), (1, 1), (4, 4)), mat)
        assert grid.eps["ez"][0, 0] == 1.0
        assert grid.eps["ez"][3, 2] == 4.0
        assert not mat.uniform

    def test_callable(self):
        """Analytic materials are evaluated at the staggered points"""
        mat = MaterialSpec(eps=lambda x, y: 1.0 + x)
        grid = build_grid(Domain((0, 0), (1, 1), (4, 4)), mat)
        expected = 1 + np.linspace(0, 1, 5)
        np.testing.assert_allclose(grid.eps["ez"][:, 0], expected)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"shape": "box", "lower": (0, 0)},
            {"shape": "circle", "center": (0, 0), "radius": -1.0},
            {"shape": "hexagon"},
            {"shape": "box", "lower": (0, 0), "upper": (1, 1), "eps": -2.0},
        ],
    )
    def test_invalid_region(self, kwargs):
        """Malformed regions are configuration errors"""
        with pytest.raises(ConfigurationError):
            Region(**kwargs)

    def test_lattice_rows(self):
        """Skipped rows leave a line defect"""
        rods = lattice(1.0, 0.2, rows=3, cols=4, skip_rows=(1,), eps=8.9)
        assert len(rods) == 8
        assert {r.center[1] for r in rods} == {0.0, 2.0}
        assert all(r.eps == 8.9 for r in rods)


class TestStateVectors:
    """Flattening filtered fields into solver vectors"""

    def test_energy_conserving_size(self, cavity):
        """Only interior Ez locations participate"""
        assert layout(cavity, Mode.ENERGY_CONSERVING).size == 11 * 11

    def test_full_size(self):
        """Full mode adds every H location"""
        bnd = BoundarySpec.uniform(Condition.MUR1, 2)
        grid = build_grid(Domain((0, 0), (1, 1), (4, 5)), boundary=bnd)
        assert layout(grid, Mode.FULL).size == 5 * 6 + 5 * 5 + 4 * 6

    def test_unflatten_inverts_flatten(self, cavity, rng):
        """Participating entries survive, the rest is zeroed"""
        cavity.ez[...] = rng.standard_normal(cavity.ez.shape)
        cavity.hx[...] = 1.0
        vec = flatten(cavity, Mode.ENERGY_CONSERVING)
        work = cavity.zeros_like()
        unflatten(vec, work, Mode.ENERGY_CONSERVING)
        inner = (slice(1, -1), slice(1, -1))
        np.testing.assert_array_equal(work.ez[inner], cavity.ez[inner])
        assert not work.ez[0, :].any()
        assert not work.hx.any()

    def test_component_view(self, cavity):
        """Vector entries are grouped per component"""
        vec = flatten(cavity, Mode.ENERGY_CONSERVING)
        assert vec.component("ez").size == len(vec)

    def test_wrong_size(self, cavity):
        """A vector of the wrong length breaks the layout contract"""
        with pytest.raises(ContractError, match="entries"):
            unflatten(np.zeros(7), cavity, Mode.ENERGY_CONSERVING)

    def test_wrong_mode(self, cavity):
        """A vector built in one mode cannot be scattered in another"""
        vec = flatten(cavity, Mode.ENERGY_CONSERVING)
        with pytest.raises(ContractError, match="mode"):
            unflatten(vec, cavity, Mode.FULL)
