# vim:set et sw=4 ts=4:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT
#
"""
Yee leapfrog kernels for the 2D TM and 3D Maxwell equations

    ε ∂E/∂t =  ∇×H − S(t) J
    μ ∂H/∂t = −∇×E

with E at integer and H at half-integer time levels.
"""

import enum
import functools
import logging as log
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from yeeholtz.errors import ConfigurationError, ContractError, DomainError
from yeeholtz.grid import (
    AXES,
    FACES_2D,
    FACES_3D,
    Mode,
    apply_pec,
    face_slice,
    tangential,
    unflatten,
)

# (c, a, b) such that (∇×F)_c = ∂_a F_b − ∂_b F_a
CYCLIC = (("x", "y", "z"), ("y", "z", "x"), ("z", "x", "y"))

# Safety factor applied to the Yee CFL limit
CFL_SAFETY = 0.9

# Minimum number of time steps per period of the highest frequency
MIN_STEPS_PER_PERIOD = 4

FACES = {2: FACES_2D, 3: FACES_3D}


class Condition(enum.Enum):

    """Boundary condition on one face of the domain"""

    PEC = "pec"
    MUR1 = "mur1"


class SourceMode(enum.Enum):

    """Temporal profile S(t) of a time-harmonic source"""

    SIN_EXACT = "sin"
    COS_EXACT = "cos"
    SIN_RECURSIVE = "sin-recursive"
    SIN_RECURSIVE_MODIFIED = "sin-recursive-modified"

    @property
    def forcing(self):
        return "cos" if self is SourceMode.COS_EXACT else "sin"


@dataclass(frozen=True)
class BoundarySpec:

    """Condition for every face, e.g. {"x_lower": Condition.PEC, ...}"""

    faces: Mapping[str, Condition]

    def __post_init__(self):
        names = set(self.faces)
        if names not in (set(FACES[2]), set(FACES[3])):
            dim = 3 if len(names) > 4 else 2  # noqa: PLR2004
            missing = set(FACES[dim]) - names
            extra = names - set(FACES[3])
            raise ConfigurationError(
                "Boundary must assign exactly one condition per face"
                + (f"; missing {sorted(missing)}" if missing else "")
                + (f"; unknown {sorted(extra)}" if extra else "")
            )
        object.__setattr__(
            self,
            "faces",
            {f: Condition(c) for f, c in self.faces.items()},
        )

    @classmethod
    def uniform(cls, condition, dim):
        """Same condition on all faces"""
        return cls({f: Condition(condition) for f in FACES[dim]})

    @property
    def dim(self):
        return 2 if len(self.faces) == 4 else 3  # noqa: PLR2004

    def pec_faces(self):
        return tuple(f for f, c in self.faces.items() if c is Condition.PEC)

    def mur_faces(self):
        return tuple(f for f, c in self.faces.items() if c is Condition.MUR1)

    @property
    def all_pec(self):
        return not self.mur_faces()


@dataclass(frozen=True, eq=False)
class SourceSpec:

    """Spatial current density per E component and its temporal profile"""

    current: Mapping[str, np.ndarray]
    omega: float
    mode: SourceMode = SourceMode.SIN_EXACT

    def __post_init__(self):
        if not self.omega > 0:
            raise ConfigurationError(
                f"Source frequency must be positive, got {self.omega}"
            )
        object.__setattr__(self, "mode", SourceMode(self.mode))
        current = {}
        for comp, arr in self.current.items():
            arr = np.asarray(arr)
            if np.iscomplexobj(arr):
                raise ConfigurationError(
                    f"Current density for {comp} must be real valued"
                )
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(
                    f"Current density for {comp} has non-finite values"
                )
            current[comp] = arr.astype(float)
        object.__setattr__(self, "current", current)

    def omega_bar(self, dt):
        """Modified drive frequency for this source at step size dt"""
        return modified_omega(self.omega, dt)

    def scaled(self, factor):
        """Same source with the current scaled by `factor`"""
        return SourceSpec(
            {c: factor * j for c, j in self.current.items()},
            self.omega,
            self.mode,
        )


def cfl_dt(grid):
    """Yee stability limit 1/(c_max √Σ1/Δx²)"""
    return 1.0 / (
        grid.max_wave_speed() * math.sqrt(sum(1.0 / d**2 for d in grid.spacing))
    )


@dataclass(frozen=True)
class TimeGrid:

    """Window [0, T] split into M equal steps"""

    final_time: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError(
                f"Need at least one time step, got {self.steps}"
            )
        if not self.final_time > 0:
            raise ConfigurationError(
                f"Final time must be positive, got {self.final_time}"
            )

    @property
    def dt(self):
        return self.final_time / self.steps

    def times(self):
        """The M + 1 integer time levels t^n"""
        return np.arange(self.steps + 1) * self.dt

    @classmethod
    def from_cfl(
        cls,
        grid,
        base_omega,
        periods=1,
        safety=CFL_SAFETY,
        max_omega=None,
    ):
        """
        Time grid spanning `periods` periods of `base_omega`. Every base
        period gets the same integer number of steps, chosen from the CFL
        limit and at least MIN_STEPS_PER_PERIOD per period of `max_omega`.
        """
        if periods < 1:
            raise ConfigurationError(
                f"Period multiplier must be at least 1, got {periods}"
            )
        base_period = 2.0 * math.pi / base_omega
        per_period = math.ceil(base_period / (safety * cfl_dt(grid)))
        if max_omega is not None:
            per_period = max(
                per_period,
                math.ceil(MIN_STEPS_PER_PERIOD * max_omega / base_omega),
            )
        tg = cls(periods * base_period, periods * per_period)
        log.info(
            "Time grid: T = %.6g, M = %d, Δt = %.4g (CFL limit %.4g)",
            tg.final_time,
            tg.steps,
            tg.dt,
            cfl_dt(grid),
        )
        return tg

    def check_cfl(self, grid):
        """Raise ConfigurationError if Δt exceeds the Yee CFL limit"""
        if self.dt > cfl_dt(grid) * (1 + 1e-12):
            raise ConfigurationError(
                f"Time step {self.dt:.4g} violates the CFL limit"
                f" {cfl_dt(grid):.4g}; increase the number of steps"
            )


def modified_omega(omega, dt):
    """ω̄ = (2/Δt) arcsin(ωΔt/2), so that sin(ω̄Δt/2)/(Δt/2) = ω"""
    arg = 0.5 * omega * dt
    if not arg > 0 or arg > 1 + 1e-12:
        raise DomainError(
            f"Modified frequency needs 0 < ωΔt ≤ 2, got ωΔt = {omega * dt:.6g}"
        )
    return 2.0 / dt * math.asin(min(arg, 1.0))


@functools.lru_cache(maxsize=64)
def amplitude_table(source, time_grid):
    """Amplitudes S^{n+1/2} for n = 0, ..., M-1"""
    dt = time_grid.dt
    steps = time_grid.steps
    omega = source.omega
    if source.mode is SourceMode.SIN_EXACT:
        table = np.sin(omega * (np.arange(steps) + 0.5) * dt)
    elif source.mode is SourceMode.COS_EXACT:
        table = np.cos(omega * (np.arange(steps) + 0.5) * dt)
    else:
        drive = (
            source.omega_bar(dt)
            if source.mode is SourceMode.SIN_RECURSIVE_MODIFIED
            else omega
        )
        # S^{1/2} = ωΔt/2, S^{n+1/2} = S^{n-1/2} + Δt ω cos(drive t^n)
        increments = dt * omega * np.cos(drive * np.arange(1, steps) * dt)
        table = np.concatenate(([0.0], np.cumsum(increments)))
        table += 0.5 * omega * dt
    table.setflags(write=False)
    return table


def source_amplitude(n, source, time_grid):
    """Multiplier S^{n+1/2} of the source term in the E update of step n"""
    if not 0 <= n < time_grid.steps:
        raise ContractError(
            f"Step {n} outside [0, {time_grid.steps - 1}]"
        )
    return float(amplitude_table(source, time_grid)[n])


def _axis(name):
    return AXES.index(name)


def _interior(grid, component):
    """Slices excluding boundary layers on faces the component lies on"""
    return tuple(
        slice(1, -1) if off == 0 else slice(None)
        for off in grid.STAGGER[component]
    )


def _trim(term, offsets, axis):
    """Restrict a difference term to the interior of an E component"""
    idx = tuple(
        slice(1, -1) if (k != axis and off == 0) else slice(None)
        for k, off in enumerate(offsets)
    )
    return term[idx]


def magnetic_rates(grid, e=None):
    """∂H/∂t = −(1/μ)∇×E at the H locations"""
    e = grid.e if e is None else e
    rates = {}
    for c, a, b in CYCLIC:
        name = f"h{c}"
        if name not in grid.h:
            continue
        curl = np.zeros(grid.shape(name))
        ia, ib = _axis(a), _axis(b)
        if f"e{b}" in e and ia < grid.dim:
            curl += np.diff(e[f"e{b}"], axis=ia) / grid.spacing[ia]
        if f"e{a}" in e and ib < grid.dim:
            curl -= np.diff(e[f"e{a}"], axis=ib) / grid.spacing[ib]
        rates[name] = -curl / grid.mu[name]
    return rates


def electric_rates(grid, h=None):
    """
    (1/ε)∇×H at the E locations; zero on boundary layers, which are owned by
    the boundary conditions
    """
    h = grid.h if h is None else h
    rates = {}
    for c, a, b in CYCLIC:
        name = f"e{c}"
        if name not in grid.e:
            continue
        offsets = grid.STAGGER[name]
        inner = _interior(grid, name)
        rate = np.zeros(grid.shape(name))
        ia, ib = _axis(a), _axis(b)
        if f"h{b}" in h and ia < grid.dim:
            rate[inner] += _trim(
                np.diff(h[f"h{b}"], axis=ia) / grid.spacing[ia], offsets, ia
            )
        if f"h{a}" in h and ib < grid.dim:
            rate[inner] -= _trim(
                np.diff(h[f"h{a}"], axis=ib) / grid.spacing[ib], offsets, ib
            )
        rate[inner] /= grid.eps[name][inner]
        rates[name] = rate
    return rates


def curl_curl(grid, e):
    """
    The positive semi-definite operator L_h E = −electric_rates(magnetic
    rates(E)), i.e. (1/ε)∇×(1/μ)∇×E on interior locations
    """
    rates = electric_rates(grid, magnetic_rates(grid, e))
    return {c: -r for c, r in rates.items()}


def init_h_half(grid, dt):
    """Replace H^0 by H^{−1/2} = H^0 − (Δt/2)·(−(1/μ)∇×E^0)"""
    for c, r in magnetic_rates(grid).items():
        grid.h[c] -= 0.5 * dt * r
    return grid


def advance_h(grid, dt):
    """H^{n−1/2} → H^{n+1/2}"""
    for c, r in magnetic_rates(grid).items():
        grid.h[c] += dt * r
    return grid


class SourceTerms:

    """Source terms Δt·J/ε on the E interiors with their amplitude tables"""

    def __init__(self, grid, sources, time_grid):
        self.dt = time_grid.dt
        self.terms = []
        for src in sources:
            amps = amplitude_table(src, time_grid)
            for comp, j in src.current.items():
                if comp not in grid.e:
                    raise ContractError(
                        f"Source drives {comp}, which the grid does not have"
                    )
                if j.shape != grid.shape(comp):
                    raise ContractError(
                        f"Current for {comp} has shape {j.shape},"
                        f" expected {grid.shape(comp)}"
                    )
                inner = _interior(grid, comp)
                self.terms.append(
                    (
                        comp,
                        inner,
                        self.dt * j[inner] / grid.eps[comp][inner],
                        amps,
                    )
                )

    def apply(self, grid, n):
        for comp, inner, term, amps in self.terms:
            grid.e[comp][inner] -= amps[n] * term


class MurBoundary:

    """
    First order Mur absorbing condition on the tangential E locations of
    every Mur face:

        E_b^{n+1} = E_nb^n + κ (E_nb^{n+1} − E_b^n),  κ = (cΔt − Δ)/(cΔt + Δ)
    """

    def __init__(self, grid, boundary, dt):
        self.entries = []
        for face in boundary.mur_faces():
            axis = _axis(face[0])
            spacing = grid.spacing[axis]
            for comp in grid.E_COMPONENTS:
                if not tangential(comp, face, grid.STAGGER):
                    continue
                bnd = face_slice(face, grid.dim)
                nbr = list(bnd)
                nbr[axis] = 1 if face.endswith("lower") else -2
                nbr = tuple(nbr)
                coords = grid.coordinates(comp)
                speed = 1.0 / np.sqrt(
                    grid.eps[comp][bnd] * grid.material.mu_at(*coords)[bnd]
                )
                kappa = (speed * dt - spacing) / (speed * dt + spacing)
                self.entries.append((comp, bnd, nbr, kappa))
        self._saved = []

    def save(self, grid):
        """Remember boundary and neighbour values at level n"""
        self._saved = [
            (grid.e[c][bnd].copy(), grid.e[c][nbr].copy())
            for c, bnd, nbr, _ in self.entries
        ]

    def apply(self, grid):
        """Set boundary values at level n + 1"""
        for (comp, bnd, nbr, kappa), (old_b, old_nb) in zip(
            self.entries, self._saved
        ):
            e = grid.e[comp]
            e[bnd] = old_nb + kappa * (e[nbr] - old_b)


def advance_e(grid, n, terms, mur=None):
    """E^n → E^{n+1} using H^{n+1/2} and the source amplitude S^{n+1/2}"""
    if mur is not None:
        mur.save(grid)
    for c, r in electric_rates(grid).items():
        grid.e[c] += terms.dt * r
    terms.apply(grid, n)
    if mur is not None:
        mur.apply(grid)
    apply_pec(grid)
    return grid


def _as_sources(sources):
    if sources is None:
        return ()
    if isinstance(sources, SourceSpec):
        return (sources,)
    return tuple(sources)


def _check_boundary(grid, boundary):
    if boundary.dim != grid.dim:
        raise ConfigurationError(
            f"{boundary.dim}D boundary used with a {grid.dim}D grid"
        )
    if missing := set(boundary.pec_faces()) - set(grid.pec_faces):
        raise ConfigurationError(
            f"PEC faces {sorted(missing)} are not masked on the grid; build the"
            " grid with the same boundary spec"
        )
    if extra := set(grid.pec_faces) & set(boundary.mur_faces()):
        raise ConfigurationError(
            f"Faces {sorted(extra)} are masked as PEC but configured as Mur"
        )


class Stepper:

    """
    Per-evolution state of the leapfrog update: boundary and CFL checks,
    source terms and Mur history, set up once and reused by every step
    """

    def __init__(self, grid, sources, time_grid, boundary):
        _check_boundary(grid, boundary)
        time_grid.check_cfl(grid)
        self.dt = time_grid.dt
        self.terms = SourceTerms(grid, _as_sources(sources), time_grid)
        self.mur = (
            MurBoundary(grid, boundary, self.dt)
            if boundary.mur_faces()
            else None
        )

    def __call__(self, grid, n, midway=None):
        """(E^n, H^{n−1/2}) → (E^{n+1}, H^{n+1/2}), `midway()` in between"""
        advance_h(grid, self.dt)
        if midway is not None:
            midway()
        return advance_e(grid, n, self.terms, self.mur)


def step_2d_tm(  # noqa: PLR0913
    grid, n, source, time_grid, boundary, *, stepper=None, midway=None
):
    """
    One leapfrog step of the 2D TM system: (E^n, H^{n−1/2}) →
    (E^{n+1}, H^{n+1/2}). Pass a Stepper to reuse its set up across steps.
    """
    if grid.dim != 2:  # noqa: PLR2004
        raise ContractError("step_2d_tm needs a 2D grid")
    stepper = stepper or Stepper(grid, source, time_grid, boundary)
    return stepper(grid, n, midway)


def step_3d(  # noqa: PLR0913
    grid, n, source, time_grid, boundary, *, stepper=None, midway=None
):
    """One leapfrog step of the full 3D system"""
    if grid.dim != 3:  # noqa: PLR2004
        raise ContractError("step_3d needs a 3D grid")
    stepper = stepper or Stepper(grid, source, time_grid, boundary)
    return stepper(grid, n, midway)


def evolve(  # noqa: PLR0913
    nu,
    grid,
    sources,
    time_grid,
    boundary,
    observer=None,
    mode=Mode.ENERGY_CONSERVING,
    *,
    with_h=False,
):
    """
    Evolve from initial data `nu` over [0, T].

    `observer(n, grid, h_avg)` is called at every level n = 0, ..., M with E^n
    in `grid.e`; with `with_h`, `h_avg` holds (H^{n+1/2} + H^{n−1/2})/2, using
    one extra H half update at n = M. A `nu` of None starts from rest.
    """
    stepper = Stepper(grid, sources, time_grid, boundary)
    if nu is None:
        grid.clear()
    else:
        unflatten(nu, grid, mode)
    apply_pec(grid)
    init_h_half(grid, stepper.dt)

    def observe(n, h_prev):
        if observer is None:
            return
        h_avg = None
        if with_h:
            h_avg = {c: 0.5 * (grid.h[c] + h_prev[c]) for c in grid.h}
        observer(n, grid, h_avg)

    def previous_h():
        if with_h:
            return {c: a.copy() for c, a in grid.h.items()}
        return None

    step = step_3d if grid.dim == 3 else step_2d_tm  # noqa: PLR2004
    for n in range(time_grid.steps):
        step(
            grid,
            n,
            sources,
            time_grid,
            boundary,
            stepper=stepper,
            midway=functools.partial(observe, n, previous_h()),
        )
    h_prev = previous_h()
    if with_h:
        advance_h(grid, stepper.dt)
    observe(time_grid.steps, h_prev)
    return grid


def yee_energy(grid, h_prev):
    """
    Staggered discrete energy Σ εE² + Σ μ H^{n+1/2}·H^{n−1/2}, with E^n and
    H^{n+1/2} in the grid and H^{n−1/2} in `h_prev`
    """
    electric = sum(float(np.sum(grid.eps[c] * e**2)) for c, e in grid.e.items())
    magnetic = sum(
        float(np.sum(grid.mu[c] * h * h_prev[c])) for c, h in grid.h.items()
    )
    return (electric + magnetic) * grid.cell_volume
