# vim:set et sw=4 ts=4:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT
#

"""
Run configuration: TOML (or JSON) parsing, validation with line numbers and
construction of grids, sources and filters from the parsed values
"""

import copy
import hashlib
import json
import logging as log
import math
import re
import tomllib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from yeeholtz.analysis import manufactured, manufactured_source
from yeeholtz.errors import ConfigurationError
from yeeholtz.filters import FilterSpec, Forcing, Quadrature
from yeeholtz.grid import (
    Domain,
    MaterialSpec,
    Mode,
    Region,
    build_grid,
    check_components,
    lattice,
)
from yeeholtz.timedomain import BoundarySpec, Condition, SourceMode, SourceSpec
from yeeholtz.waveholtz import METHODS

# Allowed keys per section, with defaults where one exists
DEFAULTS = {
    "domain": {
        "lower": None,
        "upper": None,
        "cells": None,
        "points_per_omega": None,
    },
    "material": {"eps": 1.0, "mu": 1.0, "regions": []},
    "boundary": {
        "default": "pec",
        "x_lower": None,
        "x_upper": None,
        "y_lower": None,
        "y_upper": None,
        "z_lower": None,
        "z_upper": None,
    },
    "solve": {
        "frequency": None,
        "frequencies": None,
        "periods": 1,
        "source_mode": "sin",
        "quadrature": "trapezoid",
        "mode": "auto",
        "solver": "auto",
        "tolerance": 1e-8,
        "max_iters": 500,
        "restart": 0,
    },
    "output": {"directory": "yeeholtz-out", "fields": True, "raw": True},
    "sweep": {
        "start": None,
        "stop": None,
        "step": 1.0,
        "frequencies": None,
        "workers": 1,
    },
    "metric": {"lower": None, "upper": None, "component": "ez"},
    "verify": {
        "frequencies": [],
        "random": 0,
        "range": None,
        "seed": 0,
        "assemble": True,
        "workers": 1,
    },
    "convergence": {
        "solution": "quartic",
        "resolutions": [20, 40, 80, 160],
        "frequencies": None,
        "combined": False,
        "tolerance": 1e-10,
    },
}

TOP_LEVEL = ("dimension", "source", "pec", *DEFAULTS)

REGION_KEYS = {
    "shape",
    "lower",
    "upper",
    "center",
    "radius",
    "eps",
    "mu",
    "spacing",
    "rows",
    "cols",
    "origin",
    "skip_rows",
}

SOURCE_KEYS = {
    "component",
    "kind",
    "center",
    "sharpness",
    "amplitude",
    "scale_by_omega",
    "lower",
    "upper",
    "solution",
    "frequency",
}

SOURCE_KINDS = ("gaussian", "point", "line", "manufactured")

TOML_LINE = re.compile(r"line (\d+)")


def locate(text, key, section=None, index=0):
    """
    Line number (1-based) of `key = ...` in `section` (the `index`th table
    of that name for arrays of tables), or of the section header itself
    """
    if not text:
        return None
    lines = text.splitlines()
    start = 0
    if section:
        header = re.compile(
            rf"^\s*\[\[?\s*{re.escape(section)}\s*\]\]?\s*$"
            rf"|^\s*\"{re.escape(section)}\"\s*:"
        )
        hits = [i for i, ln in enumerate(lines) if header.match(ln)]
        if len(hits) <= index:
            return None
        start = hits[index]
        if key is None:
            return start + 1
    pattern = re.compile(rf"^\s*\"?{re.escape(key)}\"?\s*[=:]")
    for i in range(start, len(lines)):
        if pattern.match(lines[i]):
            return i + 1
    return start + 1 if section else None


@dataclass
class SourceConfig:

    """One `[[source]]` entry"""

    component: str
    kind: str
    amplitude: float = 1.0
    scale_by_omega: bool = True
    center: tuple = None
    sharpness: float = 144.0
    lower: tuple = None
    upper: tuple = None
    solution: str = None
    frequency: float = None

    def drives(self, omega):
        return self.frequency is None or math.isclose(
            self.frequency, omega, rel_tol=1e-12
        )

    def current(self, grid, omega):
        """Spatial current density of this entry on `grid`"""
        coords = grid.coordinates(self.component)
        scale = self.amplitude * (omega if self.scale_by_omega else 1.0)
        if self.kind == "gaussian":
            r2 = sum((c - c0) ** 2 for c, c0 in zip(coords, self.center))
            return scale * np.exp(-self.sharpness * r2)
        if self.kind == "point":
            r2 = sum((c - c0) ** 2 for c, c0 in zip(coords, self.center))
            out = np.zeros(grid.shape(self.component))
            out[np.unravel_index(np.argmin(r2), r2.shape)] = scale
            return out
        # line (or any box shaped) source
        box = Region("box", lower=self.lower, upper=self.upper)
        tol = 1e-9 * min(grid.spacing)
        return scale * box.contains(*coords, tol=tol).astype(float)


@dataclass
class RunConfig:

    """Validated run configuration with defaults filled in"""

    dimension: int
    lower: tuple
    upper: tuple
    cells: tuple = None
    points_per_omega: int = None
    material: MaterialSpec = field(default_factory=MaterialSpec)
    pec_regions: tuple = ()
    boundary: BoundarySpec = None
    sources: list = field(default_factory=list)
    frequencies: tuple = ()
    periods: int = 1
    source_mode: SourceMode = SourceMode.SIN_EXACT
    quadrature: Quadrature = Quadrature.TRAPEZOID
    mode: str = "auto"
    solver: str = "auto"
    tolerance: float = 1e-8
    max_iters: int = 500
    restart: int = 0
    output: Path = Path("yeeholtz-out")
    threads: int = 1
    sections: dict = field(default_factory=dict)
    resolved: dict = field(default_factory=dict)
    path: Path = None

    @property
    def forcing(self):
        return Forcing(self.source_mode.forcing)

    def state_mode(self):
        """Energy conserving state for closed sin-forced problems"""
        if self.mode != "auto":
            return Mode(self.mode)
        if self.boundary.all_pec and self.forcing is Forcing.SIN:
            return Mode.ENERGY_CONSERVING
        return Mode.FULL

    def domain(self, omega=None):
        """Domain with explicit cells, or points_per_omega·⌈ω⌉ points"""
        if self.cells is not None:
            return Domain(self.lower, self.upper, self.cells)
        if omega is None:
            raise ConfigurationError(
                "A frequency is needed to resolve points_per_omega"
            )
        points = self.points_per_omega * math.ceil(omega)
        return Domain(self.lower, self.upper, (points - 1,) * self.dimension)

    def grid(self, omega=None):
        return build_grid(
            self.domain(omega), self.material, self.pec_regions, self.boundary
        )

    def filter_spec(self, frequencies=None, periods=None):
        return FilterSpec(
            tuple(frequencies or self.frequencies),
            periods or self.periods,
            self.quadrature,
            self.forcing,
            self.state_mode(),
        )

    def build_sources(self, grid, frequencies=None):
        """One SourceSpec per (entry, frequency) pair the entry drives"""
        freqs = tuple(frequencies or self.frequencies)
        mode = self.source_mode
        if len(freqs) > 1 and mode is not SourceMode.SIN_EXACT:
            log.warning(
                "source_mode = \"%s\" is not available for several"
                " frequencies; using \"%s\"",
                mode.value,
                SourceMode.SIN_EXACT.value,
            )
            mode = SourceMode.SIN_EXACT
        specs = []
        for omega in freqs:
            for entry in self.sources:
                if not entry.drives(omega):
                    continue
                if entry.kind == "manufactured":
                    problem = manufactured_source(
                        manufactured(entry.solution), grid, omega, mode
                    )
                    specs.append(problem.source.scaled(entry.amplitude))
                else:
                    specs.append(
                        SourceSpec(
                            {entry.component: entry.current(grid, omega)},
                            omega,
                            mode,
                        )
                    )
        return specs

    def snapshot(self):
        """Resolved configuration (defaults included) with its hash"""
        data = copy.deepcopy(self.resolved)
        data["output"]["directory"] = str(self.output)
        digest = hashlib.sha256(
            json.dumps(data, sort_keys=True).encode()
        ).hexdigest()
        return {**data, "config_hash": digest}

    def override(self, **kwargs):
        """Apply command line overrides that are not None"""
        keys = {
            "tolerance": ("solve", "tolerance"),
            "max_iters": ("solve", "max_iters"),
            "periods": ("solve", "periods"),
            "threads": (None, "threads"),
            "output": ("output", "directory"),
        }
        for name, val in kwargs.items():
            if val is None:
                continue
            setattr(self, name, Path(val) if name == "output" else val)
            section, key = keys[name]
            if section is None:
                self.resolved[key] = val
            else:
                self.resolved[section][key] = (
                    str(val) if name == "output" else val
                )
        if self.tolerance <= 0:
            raise ConfigurationError("Tolerance must be positive")
        if self.max_iters < 1:
            raise ConfigurationError("max-iters must be at least 1")
        if self.periods < 1:
            raise ConfigurationError("Period multiplier must be at least 1")
        if self.threads < 1:
            raise ConfigurationError("Thread count must be at least 1")
        return self


class _Parser:

    """Validation helpers that know how to report source lines"""

    def __init__(self, text):
        self.text = text

    def fail(self, msg, key=None, section=None, index=0):
        raise ConfigurationError(msg, locate(self.text, key, section, index))

    def section(self, data, name):
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            self.fail(f"'{name}' must be a table", name)
        allowed = DEFAULTS[name]
        for key in raw:
            if key not in allowed:
                self.fail(
                    f"Unknown key '{key}' in [{name}]; expected one of"
                    f" {', '.join(allowed)}",
                    key,
                    name,
                )
        return {**copy.deepcopy(allowed), **raw}

    def number(self, val, key, section, index=0, *, positive=True):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.fail(
                f"'{key}' must be a number, got {val!r}", key, section, index
            )
        if positive and not val > 0:
            self.fail(
                f"'{key}' must be positive, got {val}", key, section, index
            )
        return val

    def integer(self, val, key, section, minimum=1):
        if isinstance(val, bool) or not isinstance(val, int) or val < minimum:
            self.fail(
                f"'{key}' must be an integer ≥ {minimum}, got {val!r}",
                key,
                section,
            )
        return val

    def vector(self, val, key, section, dim, index=0):
        if not isinstance(val, list) or len(val) != dim:
            self.fail(
                f"'{key}' must be a list of {dim} numbers, got {val!r}",
                key,
                section,
                index,
            )
        for x in val:
            self.number(x, key, section, index, positive=False)
        return tuple(float(x) for x in val)

    def field(self, entry, key, section, idx, dim=None, default=None):
        """Number (or vector when dim is given) from an array-of-tables entry"""
        val = entry.get(key, default)
        if dim is None:
            return self.number(val, key, section, idx)
        return self.vector(val, key, section, dim, idx)

    def choice(self, val, key, section, options):
        if val not in options:
            self.fail(
                f"'{key}' must be one of {', '.join(options)}, got {val!r}",
                key,
                section,
            )
        return val

    def regions(self, entries, section, dim, *, pec):
        """Expand boxes, circles and lattices of a region list"""
        if not isinstance(entries, list):
            self.fail(f"'{section}' must be an array of tables", None, section)
        out = []
        for idx, entry in enumerate(entries):
            if not isinstance(entry, dict):
                self.fail(
                    f"Entry {idx} of '{section}' must be a table", None, section
                )
            for key in entry:
                if key not in REGION_KEYS:
                    self.fail(
                        f"Unknown region key '{key}'", key, section, idx
                    )
            shape = entry.get("shape", "box")
            eps = entry.get("eps")
            mu = entry.get("mu")
            if not pec and eps is None and mu is None:
                self.fail(
                    "Material regions need 'eps' or 'mu'", "shape", section, idx
                )
            try:
                if shape == "lattice":
                    if mu is not None:
                        self.fail(
                            "Lattices take 'eps' only", "mu", section, idx
                        )
                    out.extend(
                        lattice(
                            self.field(entry, "spacing", section, idx),
                            self.field(entry, "radius", section, idx),
                            self.integer(entry.get("rows"), "rows", section),
                            self.integer(entry.get("cols"), "cols", section),
                            tuple(entry.get("origin", (0.0, 0.0))),
                            tuple(entry.get("skip_rows", ())),
                            eps,
                            pec=pec,
                        )
                    )
                elif shape == "box":
                    out.append(
                        Region(
                            "box",
                            lower=self.field(entry, "lower", section, idx, dim),
                            upper=self.field(entry, "upper", section, idx, dim),
                            eps=eps,
                            mu=mu,
                            pec=pec,
                        )
                    )
                elif shape == "circle":
                    out.append(
                        Region(
                            "circle",
                            center=self.field(entry, "center", section, idx, 2),
                            radius=self.field(entry, "radius", section, idx),
                            eps=eps,
                            mu=mu,
                            pec=pec,
                        )
                    )
                else:
                    self.fail(
                        f"Unknown region shape '{shape}'", "shape", section, idx
                    )
            except ConfigurationError as err:
                if err.line is None:
                    err.line = locate(self.text, None, section, idx)
                raise
        return tuple(out)

    def sources(self, entries, dim):
        if not isinstance(entries, list) or not entries:
            self.fail("At least one [[source]] table is required", "source")
        out = []
        for idx, entry in enumerate(entries):
            for key in entry:
                if key not in SOURCE_KEYS:
                    self.fail(f"Unknown source key '{key}'", key, "source", idx)
            kind = entry.get("kind", "gaussian")
            if kind not in SOURCE_KINDS:
                self.fail(
                    f"Source kind must be one of {', '.join(SOURCE_KINDS)},"
                    f" got {kind!r}",
                    "kind",
                    "source",
                    idx,
                )
            src = SourceConfig(
                component=entry.get("component", "ez"),
                kind=kind,
                amplitude=self.number(
                    entry.get("amplitude", 1.0), "amplitude", "source", idx,
                    positive=False,
                ),
                scale_by_omega=bool(entry.get("scale_by_omega", True)),
                sharpness=self.number(
                    entry.get("sharpness", 144.0), "sharpness", "source", idx
                ),
                solution=entry.get("solution"),
                frequency=entry.get("frequency"),
            )
            if kind in ("gaussian", "point"):
                src.center = self.field(
                    entry, "center", "source", idx, dim, [0.0] * dim
                )
            elif kind == "line":
                src.lower = self.field(entry, "lower", "source", idx, dim)
                src.upper = self.field(entry, "upper", "source", idx, dim)
            elif dim != 2:  # noqa: PLR2004
                self.fail(
                    "Manufactured sources are 2D only", "kind", "source", idx
                )
            else:
                try:
                    manufactured(src.solution)
                except ConfigurationError as err:
                    self.fail(str(err), "solution", "source", idx)
            out.append(src)
        return out


def _load(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigurationError(
            f"Cannot read config file {path}: {err.strerror}"
        ) from err
    if path.suffix == ".json":
        try:
            return json.loads(text), text
        except json.JSONDecodeError as err:
            raise ConfigurationError(err.msg, err.lineno) from err
    try:
        return tomllib.loads(text), text
    except tomllib.TOMLDecodeError as err:
        match = TOML_LINE.search(str(err))
        raise ConfigurationError(
            str(err), int(match.group(1)) if match else None
        ) from err


def load_config(path):
    """Parse and validate a config file into a RunConfig"""
    data, text = _load(path)
    cfg = parse_config(data, text)
    cfg.path = Path(path)
    log.info("Read configuration from %s", path)
    return cfg


def parse_config(data, text=None):  # noqa: PLR0912, PLR0915
    """Validate a config dict (as read from TOML/JSON) into a RunConfig"""
    prs = _Parser(text)
    for key in data:
        if key not in (*TOP_LEVEL, "config_hash", "version", "threads"):
            prs.fail(f"Unknown top level key '{key}'", key)

    dom = prs.section(data, "domain")
    if dom["lower"] is None or dom["upper"] is None:
        prs.fail("[domain] needs 'lower' and 'upper'", None, "domain")
    if not isinstance(dom["lower"], list):
        prs.fail("'lower' must be a list of numbers", "lower", "domain")
    dim = data.get("dimension", len(dom["lower"]))
    prs.choice(dim, "dimension", None, (2, 3))
    lower = prs.vector(dom["lower"], "lower", "domain", dim)
    upper = prs.vector(dom["upper"], "upper", "domain", dim)
    cells = dom["cells"]
    ppw = dom["points_per_omega"]
    if (cells is None) == (ppw is None):
        prs.fail(
            "[domain] needs exactly one of 'cells' and 'points_per_omega'",
            None,
            "domain",
        )
    if cells is not None:
        if isinstance(cells, int):
            cells = [cells] * dim
        if not isinstance(cells, list) or len(cells) != dim:
            prs.fail(
                f"'cells' must be a list of {dim} integers", "cells", "domain"
            )
        cells = tuple(prs.integer(n, "cells", "domain", 2) for n in cells)
    else:
        ppw = prs.integer(ppw, "points_per_omega", "domain", 1)

    mat = prs.section(data, "material")
    eps = prs.number(mat["eps"], "eps", "material")
    mu = prs.number(mat["mu"], "mu", "material")
    material = MaterialSpec(
        eps, mu, prs.regions(mat["regions"], "material.regions", dim, pec=False)
    )
    pec_regions = prs.regions(data.get("pec", []), "pec", dim, pec=True)

    bnd = prs.section(data, "boundary")
    faces = {}
    conditions = [c.value for c in Condition]
    for face in Domain(lower, upper, (2,) * dim).faces:
        key = face if bnd[face] is not None else "default"
        cond = prs.choice(bnd[key], key, "boundary", conditions)
        faces[face] = Condition(cond)
    if dim == 2 and (bnd["z_lower"] or bnd["z_upper"]):  # noqa: PLR2004
        prs.fail("2D domains have no z faces", "z_lower", "boundary")
    boundary = BoundarySpec(faces)

    solve = prs.section(data, "solve")
    if solve["frequency"] is not None and solve["frequencies"] is not None:
        prs.fail(
            "Give either 'frequency' or 'frequencies'", "frequencies", "solve"
        )
    freqs = solve["frequencies"]
    if freqs is None:
        freqs = [] if solve["frequency"] is None else [solve["frequency"]]
    if not isinstance(freqs, list):
        prs.fail("'frequencies' must be a list", "frequencies", "solve")
    freqs = tuple(
        float(prs.number(w, "frequencies", "solve")) for w in freqs
    )
    periods = prs.integer(solve["periods"], "periods", "solve")
    source_mode = SourceMode(
        prs.choice(
            solve["source_mode"],
            "source_mode",
            "solve",
            [m.value for m in SourceMode],
        )
    )
    quadrature = Quadrature(
        prs.choice(
            solve["quadrature"],
            "quadrature",
            "solve",
            [q.value for q in Quadrature],
        )
    )
    mode = prs.choice(
        solve["mode"], "mode", "solve", ["auto", *(m.value for m in Mode)]
    )
    solver = prs.choice(solve["solver"], "solver", "solve", METHODS)
    tol = prs.number(solve["tolerance"], "tolerance", "solve")
    max_iters = prs.integer(solve["max_iters"], "max_iters", "solve")
    restart = prs.integer(solve["restart"], "restart", "solve", 0)

    sources = prs.sources(data.get("source", []), dim)

    out = prs.section(data, "output")
    sections = {
        name: prs.section(data, name)
        for name in ("sweep", "metric", "verify", "convergence")
    }
    for name, key in (("sweep", "workers"), ("verify", "workers")):
        prs.integer(sections[name][key], key, name)
    metric = sections["metric"]
    if (metric["lower"] is None) != (metric["upper"] is None):
        prs.fail("[metric] needs both 'lower' and 'upper'", None, "metric")
    if metric["lower"] is not None:
        strip = Region(
            "box",
            lower=prs.vector(metric["lower"], "lower", "metric", dim),
            upper=prs.vector(metric["upper"], "upper", "metric", dim),
        )
        if not strip.within(Domain(lower, upper, (2,) * dim)):
            prs.fail("Metric strip lies outside the domain", "lower", "metric")

    cfg = RunConfig(
        dimension=dim,
        lower=lower,
        upper=upper,
        cells=cells,
        points_per_omega=ppw,
        material=material,
        pec_regions=pec_regions,
        boundary=boundary,
        sources=sources,
        frequencies=freqs,
        periods=periods,
        source_mode=source_mode,
        quadrature=quadrature,
        mode=mode,
        solver=solver,
        tolerance=tol,
        max_iters=max_iters,
        restart=restart,
        output=Path(out["directory"]),
        threads=int(data.get("threads", 1)),
        sections=sections,
    )
    for entry in sources:
        try:
            check_components(_coarse_grid(cfg), [entry.component])
        except ConfigurationError as err:
            prs.fail(str(err), "component", "source")
    if freqs:
        try:
            cfg.filter_spec()
        except ConfigurationError as err:
            key = "frequencies" if len(freqs) > 1 else "frequency"
            prs.fail(str(err), key, "solve")
        if cfg.boundary.mur_faces() and cfg.state_mode() is not Mode.FULL:
            prs.fail(
                "Absorbing (mur1) faces need mode = \"full\"", "mode", "solve"
            )
    cfg.resolved = {
        "dimension": dim,
        "domain": {**dom, "lower": list(lower), "upper": list(upper)},
        "material": mat,
        "pec": data.get("pec", []),
        "boundary": bnd,
        "solve": {**solve, "frequencies": list(freqs), "frequency": None},
        "source": data.get("source", []),
        "output": out,
        "threads": cfg.threads,
        **sections,
    }
    return cfg


def _coarse_grid(cfg):
    """Coarse grid used to validate geometry before any compute"""
    domain = Domain(cfg.lower, cfg.upper, (2,) * cfg.dimension)
    return build_grid(domain, MaterialSpec(), (), cfg.boundary)
