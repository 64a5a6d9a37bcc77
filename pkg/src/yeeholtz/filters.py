# vim:set et sw=4 ts=4:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT
#
"""
Time filters applied to an evolving solution: the waveholtz filter (plain
and modified trapezoid), per-frequency separation filters, transfer functions
and recovery of the complementary real/imaginary part
"""

import enum
import logging as log
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from yeeholtz.errors import ConfigurationError, QuadratureSingularityError
from yeeholtz.grid import Mode, flatten, unflatten
from yeeholtz.timedomain import (
    SourceMode,
    TimeGrid,
    electric_rates,
    evolve,
    magnetic_rates,
    modified_omega,
)

# Largest denominator tried when matching frequency ratios to fractions
MAX_RATIO_DENOMINATOR = 16

# Relative tolerance for frequencies being exact multiples of a base frequency
HARMONIC_RTOL = 1e-9

# Smallest admissible |cos(ω̄ t^n)| in the modified trapezoid rule
SINGULARITY_TOL = 1e-8


class Quadrature(enum.Enum):

    """Quadrature used to discretise the filter integral"""

    TRAPEZOID = "trapezoid"
    TRAPEZOID_MODIFIED = "trapezoid-modified"


class Forcing(enum.Enum):

    """Temporal form of the forcing the filter is paired with"""

    SIN = "sin"
    COS = "cos"


def harmonic_decomposition(frequencies):
    """
    Write every frequency as n_k ω_0 with positive integers n_k, returning
    (ω_0, (n_1, ...)) with ω_0 as large as possible
    """
    first = frequencies[0]
    ratios = []
    for omega in frequencies:
        ratio = Fraction(omega / first).limit_denominator(MAX_RATIO_DENOMINATOR)
        if abs(float(ratio) * first - omega) > HARMONIC_RTOL * omega:
            raise ConfigurationError(
                f"Frequencies {list(frequencies)} are not integer multiples"
                " of a"
                " common base frequency"
            )
        ratios.append(ratio)
    denom = math.lcm(*(r.denominator for r in ratios))
    multiples = [r.numerator * (denom // r.denominator) for r in ratios]
    common = math.gcd(*multiples)
    return common * first / denom, tuple(m // common for m in multiples)


@dataclass(frozen=True)
class FilterSpec:

    """Frequencies, window and quadrature of a waveholtz filter"""

    frequencies: tuple
    periods: int = 1
    quadrature: Quadrature = Quadrature.TRAPEZOID
    forcing: Forcing = Forcing.SIN
    mode: Mode = Mode.ENERGY_CONSERVING
    base_omega: float = field(init=False)
    harmonics: tuple = field(init=False)

    def __post_init__(self):
        freqs = tuple(float(w) for w in np.atleast_1d(self.frequencies))
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "quadrature", Quadrature(self.quadrature))
        object.__setattr__(self, "forcing", Forcing(self.forcing))
        object.__setattr__(self, "mode", Mode(self.mode))
        if not freqs:
            raise ConfigurationError("Need at least one frequency")
        if any(w <= 0 for w in freqs):
            raise ConfigurationError(f"Frequencies must be positive: {freqs}")
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ConfigurationError(
                f"Frequencies must be strictly increasing: {freqs}"
            )
        if self.periods < 1:
            raise ConfigurationError(
                f"Period multiplier must be at least 1, got {self.periods}"
            )
        if self.quadrature is Quadrature.TRAPEZOID_MODIFIED and (
            len(freqs) > 1 or self.forcing is not Forcing.SIN
        ):
            raise ConfigurationError(
                "The modified trapezoid rule needs a single frequency and sin"
                " forcing"
            )
        if len(freqs) > 1 and self.forcing is not Forcing.SIN:
            raise ConfigurationError(
                "Multi-frequency solves support sin forcing only"
            )
        if self.forcing is Forcing.COS and self.mode is not Mode.FULL:
            raise ConfigurationError(
                "Cos forcing needs the full (E and H) state"
            )
        base, harmonics = harmonic_decomposition(freqs)
        object.__setattr__(self, "base_omega", base)
        object.__setattr__(self, "harmonics", harmonics)

    @property
    def omega(self):
        """Frequency of a single frequency filter"""
        return self.frequencies[0]

    @property
    def base_period(self):
        return 2.0 * math.pi / self.base_omega

    @property
    def window(self):
        return self.periods * self.base_period

    def time_grid(self, grid):
        """CFL-limited time grid over the filter window"""
        return TimeGrid.from_cfl(
            grid,
            self.base_omega,
            self.periods,
            max_omega=self.frequencies[-1],
        )


def trapezoid_weights(steps):
    """η_0 = η_M = 1/2, η_n = 1 otherwise"""
    eta = np.ones(steps + 1)
    eta[0] = eta[-1] = 0.5
    return eta


def filter_weights(spec, time_grid):
    """
    Node weights (2Δt/T) η_n (Σ_k cos(ω_k t^n) − 1/4), times
    cos(ω t^n)/cos(ω̄ t^n) for the modified trapezoid rule
    """
    t = time_grid.times()
    kernel = sum(np.cos(w * t) for w in spec.frequencies) - 0.25
    if spec.quadrature is Quadrature.TRAPEZOID_MODIFIED:
        bar = np.cos(modified_omega(spec.omega, time_grid.dt) * t)
        if np.any(bad := np.abs(bar) < SINGULARITY_TOL):
            raise QuadratureSingularityError(
                f"cos(ω̄ t^n) vanishes at step {int(np.argmax(bad))} of the"
                f" modified quadrature; use {time_grid.steps + 1} steps"
                " instead"
            )
        kernel = kernel * np.cos(spec.omega * t) / bar
    scale = 2.0 * time_grid.dt / time_grid.final_time
    return scale * trapezoid_weights(time_grid.steps) * kernel


def separation_weights(omega, time_grid):
    """Weights of the cosine (Im) and sine (Re) filters for one frequency"""
    t = time_grid.times()
    base = (
        2.0
        * time_grid.dt
        / time_grid.final_time
        * trapezoid_weights(time_grid.steps)
    )
    return base * (np.cos(omega * t) - 0.25), base * np.sin(omega * t)


class FilterAccumulator:

    """
    Running weighted sums Σ_n w_n u^n of field snapshots, for one or more
    channels fed from the same snapshot. Usable directly as an `evolve`
    observer.
    """

    def __init__(self, grid, channels, *, with_h=False):
        """
        Initialise from a grid (for shapes) and a dict of per-node weight
        arrays keyed by channel name
        """
        self.channels = {name: np.asarray(w) for name, w in channels.items()}
        self.with_h = with_h
        self.steps = {len(w) - 1 for w in self.channels.values()}
        if len(self.steps) != 1:
            raise ConfigurationError("All channels need the same time grid")
        self.sums = {
            name: {
                "e": {c: np.zeros_like(a) for c, a in grid.e.items()},
                "h": (
                    {c: np.zeros_like(a) for c, a in grid.h.items()}
                    if with_h
                    else {}
                ),
            }
            for name in self.channels
        }

    def accumulate(self, n, e, h=None):
        """Add the weighted snapshot of level n"""
        for name, weights in self.channels.items():
            w = weights[n]
            if w == 0.0:
                continue
            sums = self.sums[name]
            for c, arr in e.items():
                sums["e"][c] += w * arr
            if self.with_h and h is not None:
                for c, arr in h.items():
                    sums["h"][c] += w * arr
        return self

    def __call__(self, n, grid, h_avg):
        self.accumulate(n, grid.e, h_avg)

    def fields(self, name="nu"):
        """Accumulated fields of a channel as {"e": {...}, "h": {...}}"""
        return self.sums[name]

    def to_grid(self, grid, name="nu"):
        """Write a channel into the fields of `grid`"""
        grid.clear()
        for c, a in self.sums[name]["e"].items():
            grid.e[c][...] = a
        for c, a in self.sums[name]["h"].items():
            grid.h[c][...] = a
        return grid

    def reset(self):
        for sums in self.sums.values():
            for part in sums.values():
                for a in part.values():
                    a.fill(0.0)


def beta_continuous(lam, omega, periods=1):
    """
    Transfer function (2/T)∫_0^T (cos ωt − 1/4) cos λt dt with T = N 2π/ω,
    written with sinc so that λ = ω needs no special casing
    """
    lam = np.asarray(lam, dtype=float)
    window = periods * 2.0 * math.pi / omega
    val = (
        np.sinc((omega - lam) * window / math.pi)
        + np.sinc((omega + lam) * window / math.pi)
        - 0.5 * np.sinc(lam * window / math.pi)
    )
    return float(val) if val.ndim == 0 else val


def beta_discrete(lam, omega, time_grid):
    """
    Trapezoid transfer function (2Δt/T) Σ_n η_n cos(λ t^n)(cos ω t^n − 1/4)
    """
    lam = np.asarray(lam, dtype=float)
    t = time_grid.times()
    weights = (
        2.0
        * time_grid.dt
        / time_grid.final_time
        * trapezoid_weights(time_grid.steps)
        * (np.cos(omega * t) - 0.25)
    )
    val = np.cos(np.multiply.outer(lam, t)) @ weights
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class ContractionBounds:

    """Upper bounds on the per-iteration contraction rate for a gap δ"""

    theorem: float
    lemma: float
    continuous: float


def contraction_bounds(delta):
    """Theorem bound max(1−0.3δ², 0.6), lemma bound max(1−0.3δ², 0.63) and
    the continuous estimate 1 − 6.33δ²"""
    d2 = delta * delta
    return ContractionBounds(
        theorem=max(1.0 - 0.3 * d2, 0.6),
        lemma=max(1.0 - 0.3 * d2, 0.63),
        continuous=1.0 - 6.33 * d2,
    )


@dataclass
class FrequencySolution:

    """Imaginary and real parts of the E and H fields at one frequency"""

    omega: float
    imag: dict
    real: dict

    def part(self, name):
        return self.imag if name == "im" else self.real


def _fields(grid):
    return {
        "e": {c: a.copy() for c, a in grid.e.items()},
        "h": {c: a.copy() for c, a in grid.h.items()},
    }


def recover_real(  # noqa: PLR0913
    nu,
    grid,
    omega,
    mode=Mode.ENERGY_CONSERVING,
    forcing=Forcing.SIN,
    sources=(),
):
    """
    Complementary part of a converged state by one application of the Yee
    curl operators.

    Sin forcing (state = Im part):
        Re E = (1/(εω)) ∇×Ĥ_0,  Re H = −(1/(μω)) ∇×Ê_0
    Cos forcing (state = Re part):
        Im E = −(1/(εω)) (∇×Ĥ_0 − J),  Im H = (1/(μω)) ∇×Ê_0

    Returns a FrequencySolution with both parts filled in.
    """
    work = grid.zeros_like()
    unflatten(nu, work, mode)
    state = _fields(work)
    e_rates = electric_rates(work)
    h_rates = magnetic_rates(work)
    if Forcing(forcing) is Forcing.SIN:
        other = {
            "e": {c: r / omega for c, r in e_rates.items()},
            "h": {c: r / omega for c, r in h_rates.items()},
        }
        return FrequencySolution(omega, state, other)

    current = {}
    for src in sources:
        for c, j in src.current.items():
            current[c] = current.get(c, 0.0) + j
    other_e = {}
    for c, r in e_rates.items():
        j_eps = np.zeros_like(r)
        if c in current:
            j_eps = current[c] / work.eps[c]
        inner = tuple(
            slice(1, -1) if off == 0 else slice(None)
            for off in work.STAGGER[c]
        )
        val = np.zeros_like(r)
        val[inner] = -(r[inner] - j_eps[inner]) / omega
        other_e[c] = val
    other = {
        "e": other_e,
        "h": {c: -r / omega for c, r in h_rates.items()},
    }
    return FrequencySolution(omega, other, state)


def separate_frequencies(  # noqa: PLR0913
    nu, grid, sources, spec, time_grid, boundary
):
    """
    Split a converged multi-frequency state into one FrequencySolution per
    frequency: evolve once over the base period 2π/ω_0 (at the solve's Δt)
    applying, per ω_k, the cosine filter (2/T)∫(cos ω_k t − 1/4)·u (Im part)
    and the sine filter (2/T)∫ sin ω_k t·u (Re part)
    """
    base = TimeGrid(spec.base_period, time_grid.steps // spec.periods)
    channels = {}
    for k, omega in enumerate(spec.frequencies):
        channels[f"im{k}"], channels[f"re{k}"] = separation_weights(omega, base)
    acc = FilterAccumulator(grid, channels, with_h=True)
    work = grid.zeros_like()
    log.info(
        "Separating %d frequencies over %d steps",
        len(spec.frequencies),
        base.steps,
    )
    evolve(nu, work, sources, base, boundary, acc, spec.mode, with_h=True)
    return [
        FrequencySolution(
            omega,
            _copy_fields(acc.fields(f"im{k}")),
            _copy_fields(acc.fields(f"re{k}")),
        )
        for k, omega in enumerate(spec.frequencies)
    ]


def _copy_fields(fields):
    return {
        part: {c: a.copy() for c, a in comps.items()}
        for part, comps in fields.items()
    }


def state_vector(fields, grid, mode):
    """Flatten {"e": ..., "h": ...} fields with the layout of `mode`"""
    work = grid.zeros_like()
    for c, a in fields["e"].items():
        work.e[c][...] = a
    for c, a in fields.get("h", {}).items():
        work.h[c][...] = a
    return flatten(work, mode)


def forcing_of(sources):
    """Filter forcing matching the temporal profile of the sources"""
    modes = {SourceMode(s.mode).forcing for s in sources}
    if len(modes) > 1:
        raise ConfigurationError("Sources mix sin and cos forcing")
    return Forcing(modes.pop()) if modes else Forcing.SIN
