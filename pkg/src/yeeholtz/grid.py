# vim:set et sw=4 ts=4:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT
#
"""
Staggered Yee grids: field storage, material sampling, PEC masks and the
mapping between filtered fields and flat solver vectors
"""

import copy
import enum
import logging as log
from dataclasses import dataclass
from typing import Callable, ClassVar, Mapping, Sequence, Union

import numpy as np

from yeeholtz.errors import ConfigurationError, ContractError

AXES = "xyz"

FACES_2D = ("x_lower", "x_upper", "y_lower", "y_upper")
FACES_3D = (*FACES_2D, "z_lower", "z_upper")

# Location of every field component inside a cell, in units of the spacing
STAGGER_2D = {
    "ez": (0.0, 0.0),
    "hx": (0.0, 0.5),
    "hy": (0.5, 0.0),
}

STAGGER_3D = {
    "ex": (0.5, 0.0, 0.0),
    "ey": (0.0, 0.5, 0.0),
    "ez": (0.0, 0.0, 0.5),
    "hx": (0.0, 0.5, 0.5),
    "hy": (0.5, 0.0, 0.5),
    "hz": (0.5, 0.5, 0.0),
}

# Relative tolerance (w.r.t. the smallest spacing) for closed-box inclusion
BOX_TOL = 1e-9

Coefficient = Union[float, Callable[..., np.ndarray]]


class Mode(enum.Enum):

    """Which fields make up the filtered state"""

    ENERGY_CONSERVING = "energy-conserving"
    FULL = "full"


@dataclass(frozen=True)
class Domain:

    """Axis aligned box [lower, upper] split into `cells` cells per axis"""

    lower: tuple
    upper: tuple
    cells: tuple

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(x) for x in self.lower))
        object.__setattr__(self, "upper", tuple(float(x) for x in self.upper))
        object.__setattr__(self, "cells", tuple(int(n) for n in self.cells))
        if not len(self.lower) == len(self.upper) == len(self.cells):
            raise ConfigurationError(
                "Domain corners and cell counts must have the same length"
            )
        if len(self.cells) not in (2, 3):
            raise ConfigurationError(
                f"Only 2D and 3D domains are supported, got {len(self.cells)}D"
            )
        for ax, lo, up, n in zip(AXES, self.lower, self.upper, self.cells):
            if not up > lo:
                raise ConfigurationError(
                    f"Upper corner ({up}) must exceed lower corner ({lo})"
                    f" along {ax}"
                )
            if n < 2:  # noqa: PLR2004
                raise ConfigurationError(
                    f"Need at least 2 cells along {ax}, got {n}"
                )

    @property
    def dim(self):
        return len(self.cells)

    @property
    def extent(self):
        return tuple(up - lo for lo, up in zip(self.lower, self.upper))

    @property
    def spacing(self):
        return tuple(e / n for e, n in zip(self.extent, self.cells))

    @property
    def faces(self):
        return FACES_2D if self.dim == 2 else FACES_3D  # noqa: PLR2004


@dataclass(frozen=True)
class Region:

    """
    Box or circle (z-aligned cylinder in 3D) carrying either a PEC flag or
    material values
    """

    shape: str = "box"
    lower: tuple = None
    upper: tuple = None
    center: tuple = None
    radius: float = None
    eps: float = None
    mu: float = None
    pec: bool = False

    def __post_init__(self):
        if self.shape == "box":
            if self.lower is None or self.upper is None:
                raise ConfigurationError("Box region needs 'lower' and 'upper'")
            if any(u < lo for lo, u in zip(self.lower, self.upper)):
                raise ConfigurationError(
                    f"Box region with upper {self.upper} below lower"
                    f" {self.lower}"
                )
        elif self.shape == "circle":
            if self.center is None or self.radius is None:
                raise ConfigurationError(
                    "Circle region needs 'center' and 'radius'"
                )
            if self.radius <= 0:
                raise ConfigurationError("Circle radius must be positive")
        else:
            raise ConfigurationError(f"Unknown region shape '{self.shape}'")
        for name in ("eps", "mu"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ConfigurationError(f"Region {name} must be positive")

    def contains(self, *coords, tol=0.0):
        """Pointwise inclusion test on (broadcastable) coordinate arrays"""
        if self.shape == "box":
            inside = np.ones(np.broadcast(*coords).shape, dtype=bool)
            for c, lo, up in zip(coords, self.lower, self.upper):
                inside &= (c >= lo - tol) & (c <= up + tol)
            return inside
        x, y = coords[0], coords[1]
        cx, cy = self.center[0], self.center[1]
        r2 = (x - cx) ** 2 + (y - cy) ** 2
        shape = np.broadcast(*coords).shape
        return np.broadcast_to(r2 <= self.radius**2, shape)

    def bounds(self, dim):
        """Bounding box of the region as (lower, upper)"""
        if self.shape == "box":
            return tuple(self.lower[:dim]), tuple(self.upper[:dim])
        lo = [self.center[0] - self.radius, self.center[1] - self.radius]
        up = [self.center[0] + self.radius, self.center[1] + self.radius]
        if dim == 3:  # noqa: PLR2004
            lo.append(-np.inf)
            up.append(np.inf)
        return tuple(lo), tuple(up)

    def within(self, domain):
        """True if the bounding box lies inside the domain"""
        tol = BOX_TOL * min(domain.spacing)
        lo, up = self.bounds(domain.dim)
        return all(
            (a >= dlo - tol or np.isinf(a)) and (b <= dup + tol or np.isinf(b))
            for a, b, dlo, dup in zip(lo, up, domain.lower, domain.upper)
        )


def lattice(  # noqa: PLR0913
    spacing,
    radius,
    rows,
    cols,
    origin=(0.0, 0.0),
    skip_rows=(),
    eps=None,
    *,
    pec=False,
):
    """
    Circles on a square lattice with lattice constant `spacing`, e.g. the rods
    of a photonic crystal; leaving out rows carves a line defect (waveguide)
    """
    return tuple(
        Region(
            shape="circle",
            center=(origin[0] + c * spacing, origin[1] + r * spacing),
            radius=radius,
            eps=eps,
            pec=pec,
        )
        for r in range(rows)
        if r not in skip_rows
        for c in range(cols)
    )


@dataclass(frozen=True)
class MaterialSpec:

    """Background permittivity/permeability plus ordered region overrides"""

    eps: Coefficient = 1.0
    mu: Coefficient = 1.0
    regions: tuple = ()

    def _sample(self, name, coords):
        base = getattr(self, name)
        shape = np.broadcast(*coords).shape
        if callable(base):
            vals = np.array(np.broadcast_to(base(*coords), shape), dtype=float)
        else:
            vals = np.full(shape, float(base))
        for region in self.regions:
            if (val := getattr(region, name)) is not None:
                vals[region.contains(*coords)] = val
        return vals

    def eps_at(self, *coords):
        """Permittivity evaluated at the given points"""
        return self._sample("eps", coords)

    def mu_at(self, *coords):
        """Permeability evaluated at the given points"""
        return self._sample("mu", coords)

    @property
    def uniform(self):
        """True for constant materials without region overrides"""
        return (
            not callable(self.eps)
            and not callable(self.mu)
            and not any(r.eps or r.mu for r in self.regions)
        )


def _touching(cell_mask, offsets):
    """
    Mark every field location lying on the closure of a marked cell; along
    axes where the location sits on cell faces it touches two cells
    """
    out = cell_mask
    for axis, off in enumerate(offsets):
        if off == 0:
            pad = [(0, 0)] * out.ndim
            pad[axis] = (1, 1)
            padded = np.pad(out, pad, constant_values=False)
            lo = [slice(None)] * out.ndim
            hi = [slice(None)] * out.ndim
            lo[axis] = slice(None, -1)
            hi[axis] = slice(1, None)
            out = padded[tuple(lo)] | padded[tuple(hi)]
    return out


def face_slice(face, ndim):
    """Index tuple selecting the boundary layer of an array on `face`"""
    axis = AXES.index(face[0])
    idx = [slice(None)] * ndim
    idx[axis] = 0 if face.endswith("lower") else -1
    return tuple(idx)


def tangential(component, face, stagger):
    """True if E component `component` lies on (is tangential to) `face`"""
    return stagger[component][AXES.index(face[0])] == 0


class YeeGrid:

    """
    Field storage shared by the 2D TM and 3D grids.

    Fields, permittivity (at E points), permeability (at H points) and PEC
    masks (at E points) live in dicts keyed by component name, e.g. "ez".
    """

    dim: ClassVar[int]
    STAGGER: ClassVar[Mapping[str, tuple]]
    E_COMPONENTS: ClassVar[tuple]
    H_COMPONENTS: ClassVar[tuple]

    def __init__(self, domain, material, pec_regions=(), pec_faces=()):
        """Initialise zero fields, sample materials and rasterize PEC"""
        if domain.dim != self.dim:
            raise ConfigurationError(
                f"{type(self).__name__} needs a {self.dim}D domain,"
                f" got {domain.dim}D"
            )
        for region in pec_regions:
            if not region.within(domain):
                raise ConfigurationError(
                    f"PEC region {region.shape} with bounds"
                    f" {region.bounds(domain.dim)} lies outside the domain"
                )
        unknown = set(pec_faces) - set(domain.faces)
        if unknown:
            raise ConfigurationError(f"Unknown boundary faces: {unknown}")

        self.domain = domain
        self.material = material
        self.spacing = domain.spacing
        self.pec_faces = frozenset(pec_faces)
        self.e = {c: np.zeros(self.shape(c)) for c in self.E_COMPONENTS}
        self.h = {c: np.zeros(self.shape(c)) for c in self.H_COMPONENTS}
        self.eps = {
            c: material.eps_at(*self.coordinates(c)) for c in self.E_COMPONENTS
        }
        self.mu = {
            c: material.mu_at(*self.coordinates(c)) for c in self.H_COMPONENTS
        }
        for name, coeff in (*self.eps.items(), *self.mu.items()):
            if not np.all(coeff > 0):
                raise ConfigurationError(
                    f"Material coefficient at {name} points must be positive"
                )
        self.pec = {
            c: self._rasterize(c, pec_regions) for c in self.E_COMPONENTS
        }
        self._layouts = {}
        log.debug(
            "%s grid with cells %s, spacing %s, %d masked E locations",
            type(self).__name__,
            domain.cells,
            self.spacing,
            sum(int(m.sum()) for m in self.pec.values()),
        )

    def shape(self, component):
        """Array shape of a field component"""
        return tuple(
            n + (1 if off == 0 else 0)
            for n, off in zip(self.domain.cells, self.STAGGER[component])
        )

    def coordinates(self, component):
        """Coordinate arrays (ij indexing) of a field component"""
        axes = [
            lo + (np.arange(n) + off) * d
            for lo, n, off, d in zip(
                self.domain.lower,
                self.shape(component),
                self.STAGGER[component],
                self.spacing,
            )
        ]
        return np.meshgrid(*axes, indexing="ij")

    def cell_centers(self):
        """Coordinate arrays of the cell centres"""
        axes = [
            lo + (np.arange(n) + 0.5) * d
            for lo, n, d in zip(
                self.domain.lower, self.domain.cells, self.spacing
            )
        ]
        return np.meshgrid(*axes, indexing="ij")

    def _rasterize(self, component, regions):
        mask = np.zeros(self.shape(component), dtype=bool)
        coords = self.coordinates(component)
        tol = BOX_TOL * min(self.spacing)
        centers = None
        for region in regions:
            if region.shape == "box":
                mask |= region.contains(*coords, tol=tol)
            else:
                if centers is None:
                    centers = self.cell_centers()
                mask |= _touching(
                    region.contains(*centers), self.STAGGER[component]
                )
        for face in self.pec_faces:
            if tangential(component, face, self.STAGGER):
                mask[face_slice(face, self.dim)] = True
        return mask

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def zeros_like(self):
        """New grid with zero fields sharing materials and masks"""
        new = copy.copy(self)
        new.e = {c: np.zeros_like(a) for c, a in self.e.items()}
        new.h = {c: np.zeros_like(a) for c, a in self.h.items()}
        return new

    def copy(self):
        """New grid with copied fields sharing materials and masks"""
        new = copy.copy(self)
        new.e = {c: a.copy() for c, a in self.e.items()}
        new.h = {c: a.copy() for c, a in self.h.items()}
        return new

    def clear(self):
        """Zero all fields in place"""
        for a in (*self.e.values(), *self.h.values()):
            a.fill(0.0)

    def max_wave_speed(self):
        """Conservative bound on 1/sqrt(εμ) over the grid"""
        eps_min = min(float(a.min()) for a in self.eps.values())
        mu_min = min(float(a.min()) for a in self.mu.values())
        return 1.0 / np.sqrt(eps_min * mu_min)


class Grid2D(YeeGrid):

    """2D TM grid: Ez at nodes, Hx at (i, j+1/2), Hy at (i+1/2, j)"""

    dim = 2
    STAGGER = STAGGER_2D
    E_COMPONENTS = ("ez",)
    H_COMPONENTS = ("hx", "hy")

    @property
    def ez(self):
        return self.e["ez"]

    @property
    def hx(self):
        return self.h["hx"]

    @property
    def hy(self):
        return self.h["hy"]


class Grid3D(YeeGrid):

    """3D grid with the six field components at canonical Yee locations"""

    dim = 3
    STAGGER = STAGGER_3D
    E_COMPONENTS = ("ex", "ey", "ez")
    H_COMPONENTS = ("hx", "hy", "hz")

    @property
    def ex(self):
        return self.e["ex"]

    @property
    def ey(self):
        return self.e["ey"]

    @property
    def ez(self):
        return self.e["ez"]

    @property
    def hx(self):
        return self.h["hx"]

    @property
    def hy(self):
        return self.h["hy"]

    @property
    def hz(self):
        return self.h["hz"]


def _pec_faces(domain, boundary):
    # No BoundarySpec means a closed PEC box
    if boundary is None:
        return domain.faces
    return boundary.pec_faces()


def build_grid_2d(domain, material=None, pec_regions=(), boundary=None):
    """
    Build a zero-initialised 2D TM grid; PEC faces of `boundary` and the
    given PEC regions are rasterized into the Ez mask
    """
    return Grid2D(
        domain,
        material or MaterialSpec(),
        tuple(pec_regions),
        _pec_faces(domain, boundary),
    )


def build_grid_3d(domain, material=None, pec_regions=(), boundary=None):
    """Build a zero-initialised 3D Yee grid"""
    return Grid3D(
        domain,
        material or MaterialSpec(),
        tuple(pec_regions),
        _pec_faces(domain, boundary),
    )


def build_grid(domain, material=None, pec_regions=(), boundary=None):
    """Build a 2D or 3D grid depending on the domain"""
    if domain.dim == 3:  # noqa: PLR2004
        return build_grid_3d(domain, material, pec_regions, boundary)
    return build_grid_2d(domain, material, pec_regions, boundary)


def apply_pec(grid):
    """Zero all masked E locations (idempotent)"""
    for c, mask in grid.pec.items():
        grid.e[c][mask] = 0.0


@dataclass(frozen=True, eq=False)
class Block:

    """Participating entries of one field component within a state vector"""

    component: str
    electric: bool
    shape: tuple
    index: np.ndarray
    offset: int

    @property
    def stop(self):
        return self.offset + self.index.size


@dataclass(frozen=True, eq=False)
class Layout:

    """Ordered blocks of a state vector, E components first then H"""

    mode: Mode
    blocks: tuple
    size: int

    def block(self, component):
        for b in self.blocks:
            if b.component == component:
                return b
        raise KeyError(component)


def layout(grid, mode):
    """
    Layout of the filtered unknowns: unmasked E locations, plus every H
    location in full mode. Entries are ordered by (component, k, j, i).
    """
    if (cached := grid._layouts.get(mode)) is not None:  # noqa: SLF001
        return cached
    blocks = []
    offset = 0
    for c in grid.E_COMPONENTS:
        index = np.flatnonzero(~grid.pec[c].ravel(order="F"))
        blocks.append(Block(c, True, grid.shape(c), index, offset))
        offset += index.size
    if mode is Mode.FULL:
        for c in grid.H_COMPONENTS:
            index = np.arange(int(np.prod(grid.shape(c))))
            blocks.append(Block(c, False, grid.shape(c), index, offset))
            offset += index.size
    lay = Layout(mode, tuple(blocks), offset)
    grid._layouts[mode] = lay  # noqa: SLF001
    log.debug("State layout (%s): %d unknowns", mode.value, offset)
    return lay


@dataclass(eq=False)
class StateVector:

    """Flat vector of filtered unknowns together with its layout"""

    values: np.ndarray
    layout: Layout

    def __len__(self):
        return self.values.size

    def component(self, name):
        """View of the entries belonging to one field component"""
        b = self.layout.block(name)
        return self.values[b.offset : b.stop]


def flatten(grid, mode):
    """Gather the participating field values into a StateVector"""
    lay = layout(grid, mode)
    values = np.empty(lay.size)
    for b in lay.blocks:
        src = (grid.e if b.electric else grid.h)[b.component]
        values[b.offset : b.stop] = src.ravel(order="F")[b.index]
    return StateVector(values, lay)


def unflatten(vector, grid, mode):
    """
    Scatter a state vector into the grid fields. Non-participating entries
    (masked E, and H in energy conserving mode) are set to zero.
    """
    lay = layout(grid, mode)
    if isinstance(vector, StateVector):
        if vector.layout.mode is not mode:
            raise ContractError(
                f"State vector built for {vector.layout.mode.value} mode"
                f" used in {mode.value} mode"
            )
        values = vector.values
    else:
        values = np.asarray(vector, dtype=float)
    if values.ndim != 1 or values.size != lay.size:
        raise ContractError(
            f"State vector has {values.size} entries, layout needs {lay.size}"
        )
    grid.clear()
    for b in lay.blocks:
        flat = np.zeros(int(np.prod(b.shape)))
        flat[b.index] = values[b.offset : b.stop]
        dest = (grid.e if b.electric else grid.h)[b.component]
        dest[...] = flat.reshape(b.shape, order="F")
    return grid


def as_values(vector):
    """Plain ndarray behind a StateVector or array-like"""
    if isinstance(vector, StateVector):
        return vector.values
    return np.asarray(vector, dtype=float)


def check_components(grid, names: Sequence[str]):
    """Raise ConfigurationError for component names the grid does not have"""
    if bad := [n for n in names if n not in grid.E_COMPONENTS]:
        raise ConfigurationError(
            f"{type(grid).__name__} has no E component(s) {', '.join(bad)};"
            f" expected one of {', '.join(grid.E_COMPONENTS)}"
        )
