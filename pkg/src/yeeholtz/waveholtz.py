# vim:set et sw=4 ts=4:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT
#
"""
The waveholtz iteration: the filter map Π on initial data, the linear system
(I − S)ν = Π0 and its fixed point, CG and GMRES solvers
"""

import copy
import csv
import logging as log
import math
import time
from dataclasses import dataclass, field

import numpy as np

from yeeholtz._krylov import conjugate_gradient, gmres
from yeeholtz.errors import ConfigurationError
from yeeholtz.filters import (
    FilterAccumulator,
    FilterSpec,
    Forcing,
    Quadrature,
    filter_weights,
    forcing_of,
    recover_real,
    separate_frequencies,
    state_vector,
)
from yeeholtz.grid import Mode, StateVector, as_values, layout
from yeeholtz.timedomain import SourceMode, SourceSpec, evolve

METHODS = ("auto", "fixed-point", "cg", "gmres")


@dataclass(frozen=True)
class IterationRecord:

    """One row of the residual history"""

    iteration: int
    residual: float
    wave_solves: int
    seconds: float


@dataclass
class SolveReport:

    """Result of a waveholtz solve"""

    nu: StateVector
    method: str
    tolerance: float
    converged: bool
    iterations: int
    history: list = field(default_factory=list)
    wall_time: float = 0.0
    wave_solves: int = 0
    final_residual: float = None
    solutions: list = field(default_factory=list)

    @property
    def residuals(self):
        return [rec.residual for rec in self.history]

    def write_csv(self, path):
        """Residual history as CSV"""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["iteration", "relative_residual", "wave_solves", "seconds"]
            )
            for rec in self.history:
                writer.writerow(
                    [
                        rec.iteration,
                        f"{rec.residual:.16e}",
                        rec.wave_solves,
                        f"{rec.seconds:.6f}",
                    ]
                )

    def summary(self):
        """Plain dict for JSON summaries"""
        return {
            "method": self.method,
            "converged": self.converged,
            "iterations": self.iterations,
            "tolerance": self.tolerance,
            "final_residual": self.final_residual,
            "wave_solves": self.wave_solves,
            "wall_time": self.wall_time,
            "unknowns": len(self.nu),
            "frequencies": [s.omega for s in self.solutions],
        }


class WaveHoltzOperator:

    """
    Filter map Π of a fixed problem set up. Every application of Π, S or
    I − S costs exactly one evolution over the filter window; Π0 is computed
    once and cached.
    """

    def __init__(  # noqa: PLR0913
        self,
        grid,
        sources,
        time_grid,
        boundary,
        filter_spec,
    ):
        """Validate the set up and precompute the filter weights"""
        self.grid = grid
        self.sources = (
            (sources,) if isinstance(sources, SourceSpec) else tuple(sources)
        )
        self.time_grid = time_grid
        self.boundary = boundary
        self.spec = filter_spec
        self.mode = filter_spec.mode
        self._validate()
        self.weights = filter_weights(filter_spec, time_grid)
        self.layout = layout(grid, self.mode)
        self.work = grid.zeros_like()
        self.wave_solves = 0
        self._rhs = None
        log.info(
            "Waveholtz operator: %d unknowns (%s), %d steps per application,"
            " frequencies %s",
            self.layout.size,
            self.mode.value,
            time_grid.steps,
            ", ".join(f"{w:g}" for w in filter_spec.frequencies),
        )

    def _validate(self):
        spec = self.spec
        if self.boundary.mur_faces() and self.mode is not Mode.FULL:
            raise ConfigurationError(
                "Absorbing (Mur) faces need the full (E and H) state"
            )
        if self.sources and forcing_of(self.sources) is not spec.forcing:
            raise ConfigurationError(
                f"Sources use {forcing_of(self.sources).value} forcing but"
                f" the filter expects {spec.forcing.value}"
            )
        for src in self.sources:
            if not any(
                math.isclose(src.omega, w, rel_tol=1e-12)
                for w in spec.frequencies
            ):
                raise ConfigurationError(
                    f"Source frequency {src.omega} is not one of the filter"
                    f" frequencies {spec.frequencies}"
                )
        if not math.isclose(
            self.time_grid.final_time, spec.window, rel_tol=1e-12
        ):
            raise ConfigurationError(
                f"Time grid spans {self.time_grid.final_time:.6g}, the filter"
                f" window is {spec.window:.6g}"
            )
        if self.time_grid.steps % spec.periods:
            raise ConfigurationError(
                f"{self.time_grid.steps} steps do not split evenly into"
                f" {spec.periods} periods"
            )
        self.time_grid.check_cfl(self.grid)

    @property
    def size(self):
        return self.layout.size

    @property
    def energy_conserving(self):
        """True when I − S is symmetric positive definite"""
        return (
            self.boundary.all_pec
            and self.mode is Mode.ENERGY_CONSERVING
            and self.spec.forcing is Forcing.SIN
            and self.spec.quadrature is Quadrature.TRAPEZOID
            and len(self.spec.frequencies) == 1
        )

    def fork(self):
        """Independent copy with its own work grid, sharing Π0"""
        new = copy.copy(self)
        new.work = self.grid.zeros_like()
        new.wave_solves = 0
        return new

    def zeros(self):
        return StateVector(np.zeros(self.size), self.layout)

    def _filtered(self, nu, sources):
        acc = FilterAccumulator(
            self.work, {"nu": self.weights}, with_h=self.mode is Mode.FULL
        )
        evolve(
            nu,
            self.work,
            sources,
            self.time_grid,
            self.boundary,
            acc,
            self.mode,
            with_h=self.mode is Mode.FULL,
        )
        self.wave_solves += 1
        return state_vector(acc.fields("nu"), self.work, self.mode)

    def apply_pi(self, nu):
        """Πν: evolve from ν with the forcing and filter the solution"""
        return self._filtered(nu, self.sources)

    def compute_rhs(self):
        """Π0, evolved once from rest and cached"""
        if self._rhs is None:
            self._rhs = self.apply_pi(self.zeros())
        return self._rhs

    def apply_s(self, nu):
        """Sν = Πν − Π0: the filtered evolution from ν without forcing"""
        return self._filtered(nu, ())

    def apply_i_minus_s(self, nu):
        """(I − S)ν = ν − Sν"""
        values = as_values(nu) - self.apply_s(nu).values
        return StateVector(values, self.layout)

    def _matvec(self, values):
        return self.apply_i_minus_s(values).values

    def _report(self, method, tol, result, history, start):
        return SolveReport(
            nu=StateVector(result[0], self.layout),
            method=method,
            tolerance=tol,
            converged=result[1],
            iterations=len(history),
            history=history,
            wall_time=time.perf_counter() - start,
            wave_solves=self.wave_solves,
            final_residual=result[2],
        )

    def _recorder(self, history, start):
        def record(iteration, residual):
            history.append(
                IterationRecord(
                    iteration,
                    residual,
                    self.wave_solves,
                    time.perf_counter() - start,
                )
            )

        return record

    def fixed_point_solve(self, tol, max_iters, nu0=None):
        """
        Iterate ν ← Πν from ν⁰ (zero by default) until
        ||Πν − ν||/||Π0|| ≤ tol
        """
        start = time.perf_counter()
        history = []
        record = self._recorder(history, start)
        rhs = self.compute_rhs()
        rhs_norm = np.linalg.norm(rhs.values)
        nu = self.zeros() if nu0 is None else StateVector(
            as_values(nu0).copy(), self.layout
        )
        if rhs_norm == 0.0 and nu0 is None:
            return self._report(
                "fixed-point", tol, (nu.values, True, 0.0), history, start
            )

        converged = False
        res = math.inf
        for it in range(1, max_iters + 1):
            # Π0 is the first iterate from rest
            new = rhs if (it == 1 and nu0 is None) else self.apply_pi(nu)
            res = float(
                np.linalg.norm(new.values - nu.values) / (rhs_norm or 1.0)
            )
            nu = new
            record(it, res)
            log.debug("Fixed point iteration %d: residual %.3e", it, res)
            if res <= tol:
                converged = True
                break
        if not converged:
            log.warning(
                "Fixed point iteration did not converge in %d iterations"
                " (residual %.3e); ω may be close to a resonance",
                max_iters,
                res,
            )
        return self._report(
            "fixed-point", tol, (nu.values, converged, res), history, start
        )

    def cg_solve(self, tol, max_iters):
        """Conjugate gradients on (I − S)ν = Π0"""
        if not self.energy_conserving:
            log.warning(
                "Conjugate gradients used on a set up that is not energy"
                " conserving; I − S may not be symmetric positive definite"
            )
        start = time.perf_counter()
        history = []
        result = conjugate_gradient(
            self._matvec,
            self.compute_rhs().values,
            tol,
            max_iters,
            callback=self._recorder(history, start),
        )
        return self._finish("cg", tol, result, history, start)

    def gmres_solve(self, tol, max_iters, restart=None):
        """GMRES (unrestarted by default) on (I − S)ν = Π0"""
        start = time.perf_counter()
        history = []
        result = gmres(
            self._matvec,
            self.compute_rhs().values,
            tol,
            max_iters,
            restart=restart,
            callback=self._recorder(history, start),
        )
        return self._finish("gmres", tol, result, history, start)

    def _finish(self, method, tol, result, history, start):
        if not result.converged:
            log.warning(
                "%s did not converge in %d iterations (residual %.3e)",
                method.upper(),
                result.iterations,
                result.true_residual,
            )
        return self._report(
            method,
            tol,
            (result.x, result.converged, result.true_residual),
            history,
            start,
        )

    def resolve_method(self, method):
        if method not in METHODS:
            raise ConfigurationError(
                f"Unknown solver '{method}', choose from {', '.join(METHODS)}"
            )
        if method == "auto":
            return "cg" if self.energy_conserving else "gmres"
        return method

    def solve(self, method="auto", tol=1e-8, max_iters=500, restart=None):
        """
        Solve with the given method and attach the per-frequency solutions
        (both parts) to the report
        """
        method = self.resolve_method(method)
        log.info("Solving with %s to tolerance %g", method, tol)
        if method == "cg":
            report = self.cg_solve(tol, max_iters)
        elif method == "gmres":
            report = self.gmres_solve(tol, max_iters, restart)
        else:
            report = self.fixed_point_solve(tol, max_iters)
        report.solutions = self.solutions(report.nu)
        report.wave_solves = self.wave_solves
        return report

    def solutions(self, nu):
        """Per-frequency solutions of a converged state"""
        if len(self.spec.frequencies) == 1:
            return [
                recover_real(
                    nu,
                    self.grid,
                    self.spec.omega,
                    self.mode,
                    self.spec.forcing,
                    self.sources,
                )
            ]
        solutions = separate_frequencies(
            nu,
            self.grid,
            self.sources,
            self.spec,
            self.time_grid,
            self.boundary,
        )
        self.wave_solves += 1
        return solutions


def solve_multi_frequency(  # noqa: PLR0913
    grid,
    frequencies,
    currents,
    boundary,
    tol=1e-8,
    *,
    periods=1,
    mode=Mode.ENERGY_CONSERVING,
    method="gmres",
    max_iters=500,
):
    """
    Solve for several commensurate frequencies at once: one Krylov solve with
    forcing Σ_k sin(ω_k t) J_k and the combined filter, followed by frequency
    separation. `currents` holds one current dict (or SourceSpec) per
    frequency.
    """
    if len(currents) != len(frequencies):
        raise ConfigurationError(
            f"Got {len(currents)} sources for {len(frequencies)} frequencies"
        )
    spec = FilterSpec(tuple(frequencies), periods, mode=mode)
    sources = [
        cur
        if isinstance(cur, SourceSpec)
        else SourceSpec(cur, omega, SourceMode.SIN_EXACT)
        for cur, omega in zip(currents, frequencies)
    ]
    time_grid = spec.time_grid(grid)
    operator = WaveHoltzOperator(grid, sources, time_grid, boundary, spec)
    return operator.solve(method, tol, max_iters)
