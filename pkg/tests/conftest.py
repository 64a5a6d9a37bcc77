# vim: set ai et ts=4 sw=4 tw=80:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT

"""Common fixtures"""

import shutil
from pathlib import Path

import numpy as np
import pytest

from yeeholtz.grid import Domain, build_grid
from yeeholtz.timedomain import BoundarySpec, Condition


@pytest.fixture
def pec2d():
    """Pytest fixture: BoundarySpec with PEC on all four faces"""
    return BoundarySpec.uniform(Condition.PEC, 2)


@pytest.fixture
def cavity(pec2d):
    """Pytest fixture: empty 12×12 cell PEC cavity on the unit square"""
    return build_grid(Domain((0, 0), (1, 1), (12, 12)), boundary=pec2d)


@pytest.fixture
def small_cavity(pec2d):
    """Pytest fixture: 8×8 cell PEC cavity, small enough for dense solves"""
    return build_grid(Domain((0, 0), (1, 1), (8, 8)), boundary=pec2d)


@pytest.fixture
def rng():
    """Pytest fixture: seeded random generator"""
    return np.random.default_rng(20240601)


@pytest.fixture
def gaussian():
    """Pytest fixture: current ω·exp(−a|x − c|²) at the Ez points of a grid"""

    def current(grid, omega, sharpness=40.0, center=(0.5, 0.5)):
        x, y = grid.coordinates("ez")[:2]
        r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2
        return {"ez": omega * np.exp(-sharpness * r2)}

    return current


@pytest.fixture
def datadir(tmp_path, request):
    """
    Pytest fixture: copy of the data folder named after the test module
    (tests/test_cli/ for test_cli.py) in a temporary directory, so configs
    are found wherever pytest runs from and outputs stay out of the tree
    """
    data = Path(request.module.__file__).with_suffix("")
    if data.is_dir():
        shutil.copytree(data, tmp_path, dirs_exist_ok=True)
    return tmp_path
