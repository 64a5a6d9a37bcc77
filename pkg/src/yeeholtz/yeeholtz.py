# vim: set ai et ts=4 sw=4:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT
#
"""yeeholtz command line driver"""

import logging as log
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from rich import print as richprint
from rich.live import Live
from rich.progress import Progress
from rich.spinner import Spinner
from rich.table import Table

from yeeholtz import analysis
from yeeholtz.__about__ import __version__
from yeeholtz._config import load_config
from yeeholtz._io import write_csv, write_json, write_raw, write_vtk
from yeeholtz._parse_args import parse_args
from yeeholtz.errors import (
    BreakdownError,
    ConfigurationError,
    ResonanceError,
    SizeGuardError,
    UnsupportedError,
    YeeHoltzError,
)
from yeeholtz.filters import FilterSpec, Forcing, beta_discrete
from yeeholtz.grid import Region
from yeeholtz.waveholtz import WaveHoltzOperator

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_INTERNAL = 4

# Errors caused by the requested set up rather than by the computation
SETUP_ERRORS = (
    ConfigurationError,
    ResonanceError,
    SizeGuardError,
    UnsupportedError,
)

# Tolerance on cavity eigenvalues predicted from the transfer function
EIGENVALUE_TOL = 1e-8

# Gap below which a randomly drawn frequency counts as resonant
MIN_RANDOM_GAP = 1e-3


def waveguide_metric(field, grid, lower, upper, component="ez"):
    """
    Field strength S = (∫ u² dx dy)^½ over the rectangle [lower, upper] by the
    midpoint rule, each node standing for its dual cell clipped to the strip
    """
    strip = Region("box", lower=tuple(lower), upper=tuple(upper))
    if not strip.within(grid.domain):
        raise ConfigurationError(
            f"Metric strip {tuple(lower)}–{tuple(upper)} lies outside the"
            " domain"
        )
    coords = grid.coordinates(component)
    weight = np.ones(grid.shape(component))
    for c, d, lo, up in zip(coords, grid.spacing, lower, upper):
        weight *= np.clip(
            np.minimum(c + d / 2, up) - np.maximum(c - d / 2, lo), 0.0, None
        )
    return float(np.sqrt(np.sum(weight * np.asarray(field) ** 2)))


def fit_exponent(omegas, iterations):
    """Slope of log(iterations) against log(ω); NaN with fewer than 2 points"""
    pairs = [(w, n) for w, n in zip(omegas, iterations) if n and n > 0]
    if len(pairs) < 2:  # noqa: PLR2004
        return math.nan
    w, n = np.log(np.array(pairs, dtype=float)).T
    return float(np.polyfit(w, n, 1)[0])


def _summary_msg(verb, converged, outdir):
    """Print summary line at end of run"""
    state = "[green]converged[/]" if converged else "[red]did not converge[/]"
    richprint(
        f"[cyan]Summary: [bold]{verb}[/] {state}; results in"
        f" [bold]{outdir}[/].[/]"
    )


class YeeHoltz:
    """
    Driver for the command line verbs: reads the configuration, runs solves,
    sweeps and verification studies, and writes their artifacts
    """

    def __init__(self, args):
        self.args = parse_args(args)
        log.basicConfig(
            format="[%(levelname)s] %(message)s",
            level=(
                (log.INFO // self.args.verbose)
                if self.args.verbose > 0
                else log.WARN
            ),
        )
        self.config = None
        self.outdir = None

    def setup(self):
        """Read and validate the configuration, create the output dir"""
        self.config = load_config(self.args.config).override(
            tolerance=self.args.tol,
            max_iters=self.args.max_iters,
            periods=self.args.periods,
            threads=self.args.threads,
            output=self.args.out,
        )
        self.outdir = self.config.output
        self.outdir.mkdir(parents=True, exist_ok=True)
        write_json(
            self.outdir / "config.json",
            {**self.config.snapshot(), "version": __version__},
        )

    def execute(self):
        """Run the requested verb and return the process exit code"""
        try:
            self.setup()
            return getattr(self, self.args.verb)()
        except SETUP_ERRORS as err:
            log.critical("%s: %s", self.args.config, err)
            return EXIT_CONFIG
        except BreakdownError as err:
            log.critical("%s", err)
            return EXIT_NONCONVERGED
        except YeeHoltzError as err:
            log.critical("Internal error: %s", err)
            return EXIT_INTERNAL
        except Exception as err:  # noqa: BLE001
            log.critical("Internal error: %s", err, exc_info=True)
            return EXIT_INTERNAL

    def _workers(self, section):
        if self.args.threads:
            return self.config.threads
        return self.config.sections[section]["workers"]

    def _operator(self, frequencies):
        """Waveholtz operator for the configured problem at `frequencies`"""
        cfg = self.config
        grid = cfg.grid(max(frequencies))
        spec = cfg.filter_spec(frequencies)
        return WaveHoltzOperator(
            grid,
            cfg.build_sources(grid, frequencies),
            spec.time_grid(grid),
            cfg.boundary,
            spec,
        )

    def _solve(self, operator, text="Solving"):
        cfg = self.config
        with Live(Spinner("dots2", text=text), transient=True):
            return operator.solve(
                cfg.solver, cfg.tolerance, cfg.max_iters, cfg.restart or None
            )

    def _primary(self, solution):
        """The part of a solution that the waveholtz state carries"""
        if self.config.forcing is Forcing.SIN:
            return solution.imag
        return solution.real

    def _write_fields(self, grid, solutions):
        out = self.config.resolved["output"]
        if not out["fields"]:
            return
        many = len(solutions) > 1
        for sol in solutions:
            prefix = f"w{sol.omega:g}_" if many else ""
            for part in ("im", "re"):
                fields = sol.part(part)
                for comp, data in (*fields["e"].items(), *fields["h"].items()):
                    stem = f"{prefix}{part}_{comp}"
                    write_vtk(self.outdir / f"{stem}.vtk", grid, comp, data)
                    if out["raw"]:
                        write_raw(self.outdir / f"{stem}.bin", grid, comp, data)
            if grid.dim == 2:  # noqa: PLR2004
                ez = self._primary(sol)["e"]["ez"]
                peak = np.max(np.abs(ez))
                write_vtk(
                    self.outdir / f"{prefix}ez_normalized.vtk",
                    grid,
                    "ez",
                    ez / peak if peak > 0 else ez,
                    name="ez_normalized",
                )

    def _metric(self, grid, solution):
        metric = self.config.sections["metric"]
        if metric["lower"] is None:
            return None
        comp = metric["component"]
        return waveguide_metric(
            self._primary(solution)["e"][comp],
            grid,
            metric["lower"],
            metric["upper"],
            comp,
        )

    def run(self):
        """Solve at the configured frequency (or frequencies)"""
        cfg = self.config
        if not cfg.frequencies:
            raise ConfigurationError("[solve] needs a frequency to run")
        operator = self._operator(cfg.frequencies)
        report = self._solve(
            operator, f"Solving at ω = {', '.join(map(str, cfg.frequencies))}"
        )
        grid = operator.grid
        self._write_fields(grid, report.solutions)
        report.write_csv(self.outdir / "residuals.csv")
        summary = {
            "version": __version__,
            "verb": self.args.verb,
            "config_hash": cfg.snapshot()["config_hash"],
            **report.summary(),
            "grid": {
                "cells": list(grid.domain.cells),
                "spacing": list(grid.spacing),
                "mode": operator.mode.value,
            },
            "time": {
                "steps": operator.time_grid.steps,
                "dt": operator.time_grid.dt,
                "window": operator.time_grid.final_time,
            },
        }
        if len(report.solutions) == 1:
            metric = self._metric(grid, report.solutions[0])
            if metric is not None:
                summary["metric"] = metric
        write_json(self.outdir / "summary.json", summary)

        richprint(
            f"[bold]{report.method.upper()}[/]: {report.iterations} iterations,"
            f" {report.wave_solves} wave solves, residual"
            f" {report.final_residual:.3e}, {report.wall_time:.2f} s"
        )
        _summary_msg(self.args.verb, report.converged, self.outdir)
        return EXIT_OK if report.converged else EXIT_NONCONVERGED

    def multifreq(self):
        """Solve several commensurate frequencies at once"""
        if len(self.config.frequencies) < 2:  # noqa: PLR2004
            raise ConfigurationError(
                "multifreq needs at least two frequencies in [solve]"
            )
        return self.run()

    def _sweep_frequencies(self):
        sweep = self.config.sections["sweep"]
        if sweep["frequencies"] is not None:
            return sorted(float(w) for w in sweep["frequencies"])
        if sweep["start"] is None or sweep["stop"] is None:
            raise ConfigurationError(
                "[sweep] needs 'frequencies' or 'start' and 'stop'"
            )
        if sweep["step"] <= 0:
            raise ConfigurationError("[sweep] step must be positive")
        count = math.floor(
            (sweep["stop"] - sweep["start"]) / sweep["step"] + 1e-9
        )
        return [sweep["start"] + k * sweep["step"] for k in range(count + 1)]

    def _sweep_entry(self, omega):
        try:
            operator = self._operator((omega,))
            cfg = self.config
            report = operator.solve(
                cfg.solver, cfg.tolerance, cfg.max_iters, cfg.restart or None
            )
        except YeeHoltzError as err:
            log.error("ω = %g failed: %s", omega, err)
            return {"omega": omega, "error": str(err)}
        return {
            "omega": omega,
            "iterations": report.iterations,
            "converged": report.converged,
            "wave_solves": report.wave_solves,
            "seconds": report.wall_time,
            "metric": self._metric(operator.grid, report.solutions[0]),
        }

    def sweep(self):
        """Iteration counts over a frequency range"""
        omegas = self._sweep_frequencies()
        for omega in omegas:
            self.config.filter_spec((omega,))
        workers = self._workers("sweep")
        rows = []
        with Progress(transient=True) as progress:
            task = progress.add_task("Sweeping", total=len(omegas))
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for row in pool.map(self._sweep_entry, omegas):
                    rows.append(row)
                    progress.advance(task)

        with_metric = self.config.sections["metric"]["lower"] is not None
        header = ["omega", "iterations", "converged", "wave_solves", "seconds"]
        if with_metric:
            header.append("S")
        table = Table(*header, title="Frequency sweep")
        lines = []
        for row in rows:
            vals = [
                row["omega"],
                row.get("iterations", ""),
                row.get("converged", False),
                row.get("wave_solves", ""),
                f"{row['seconds']:.3f}" if "seconds" in row else "",
            ]
            if with_metric:
                metric = row.get("metric")
                vals.append("" if metric is None else f"{metric:.6e}")
            lines.append(vals)
            table.add_row(*(str(v) for v in vals))
        write_csv(self.outdir / "sweep.csv", header, lines)

        ok = [r for r in rows if r.get("converged")]
        exponent = fit_exponent(
            [r["omega"] for r in ok], [r["iterations"] for r in ok]
        )
        write_json(
            self.outdir / "summary.json",
            {
                "version": __version__,
                "verb": "sweep",
                "frequencies": omegas,
                "converged": len(ok),
                "failed": len(rows) - len(ok),
                "exponent": exponent,
            },
        )
        if rows:
            richprint(table)
        richprint(f"Fitted iterations ∝ ω^{exponent:.2f}")
        all_ok = len(ok) == len(rows)
        _summary_msg("sweep", all_ok, self.outdir)
        return EXIT_OK if all_ok else EXIT_NONCONVERGED

    def _verify_frequencies(self, grid, time_grid_for):
        verify = self.config.sections["verify"]
        omegas = [float(w) for w in verify["frequencies"]]
        if not omegas and not verify["random"]:
            omegas = list(self.config.frequencies)
        if verify["random"]:
            bounds = verify["range"]
            if not bounds or len(bounds) != 2:  # noqa: PLR2004
                raise ConfigurationError(
                    "[verify] random frequencies need 'range = [lo, hi]'"
                )
            rng = np.random.default_rng(verify["seed"])
            lo, hi = verify["range"]
            drawn = []
            while len(drawn) < verify["random"]:
                omega = float(rng.uniform(lo, hi))
                spectrum = analysis.cavity_spectrum(grid, time_grid_for(omega))
                if spectrum.delta(omega) >= MIN_RANDOM_GAP:
                    drawn.append(omega)
            omegas.extend(drawn)
        if not omegas:
            raise ConfigurationError("[verify] has no frequencies to check")
        return omegas

    def verify(self):
        """Spectrum of the assembled operator and contraction rate checks"""
        cfg = self.config
        verify = cfg.sections["verify"]
        grid = cfg.grid(max(cfg.frequencies) if cfg.frequencies else None)

        def time_grid_for(omega):
            return FilterSpec((omega,), cfg.periods).time_grid(grid)

        lines = []
        passed = True
        if verify["assemble"] and cfg.frequencies:
            operator = self._operator(cfg.frequencies)
            with Live(
                Spinner("dots2", text="Assembling I − S"), transient=True
            ):
                dense = analysis.assemble_dense(
                    operator, workers=self._workers("verify")
                )
            report = analysis.spectrum_report(dense)
            write_csv(
                self.outdir / "eigenvalues.csv",
                ["index", "real", "imag"],
                [
                    (k, f"{np.real(v):.16e}", f"{np.imag(v):.16e}")
                    for k, v in enumerate(report.eigenvalues)
                ],
            )
            lines += [
                f"operator: {dense.provenance} ({dense.size} unknowns)",
                f"asymmetry: {report.symmetric_deviation:.3e}",
                f"eigenvalues: min {report.min:.6e}, max {report.max:.6e}",
                f"condition number: {report.condition:.6e}",
            ]
            if operator.energy_conserving:
                spd = report.symmetric and report.min > 0
                passed &= spd
                lines.append(f"symmetric positive definite: {_verdict(spd)}")
                lines += self._eigenvalue_identity(operator, report)

        rows = []
        if cfg.boundary.all_pec:
            try:
                analysis.cavity_spectrum(grid, time_grid_for(1.0))
            except UnsupportedError as err:
                log.warning("Skipping contraction rate checks: %s", err)
            else:
                for omega in self._verify_frequencies(grid, time_grid_for):
                    check = analysis.theorem1_check(
                        grid, omega, time_grid_for(omega)
                    )
                    rows.append(check)
                    passed &= check.passed
                    lines.append(
                        f"contraction at ω = {omega:.6g}: rate"
                        f" {check.measured_rate:.4f}, bound"
                        f" {check.lemma_bound:.4f}: {_verdict(check.passed)}"
                    )
        if rows:
            write_csv(
                self.outdir / "theorem.csv",
                [
                    "omega",
                    "delta",
                    "measured_rate",
                    "spectral_rate",
                    "lemma_bound",
                    "theorem_bound",
                    "continuous_estimate",
                    "hypothesis_holds",
                    "passed",
                ],
                [
                    (
                        f"{c.omega:.16g}",
                        f"{c.delta:.6e}",
                        f"{c.measured_rate:.6f}",
                        f"{c.spectral_rate:.6f}",
                        f"{c.lemma_bound:.6f}",
                        f"{c.theorem_bound:.6f}",
                        f"{c.continuous_estimate:.6f}",
                        c.hypothesis_holds,
                        c.passed,
                    )
                    for c in rows
                ],
            )
        (self.outdir / "verify.txt").write_text(
            "\n".join(lines) + "\n", encoding="utf-8"
        )
        for line in lines:
            richprint(line)
        _summary_msg("verify", passed, self.outdir)
        return EXIT_OK if passed else EXIT_NONCONVERGED

    def _eigenvalue_identity(self, operator, report):
        """Compare eigenvalues with 1 − β(λ̃) of the discrete cavity modes"""
        try:
            spectrum = analysis.cavity_spectrum(
                operator.grid, operator.time_grid
            )
        except UnsupportedError as err:
            log.info("No cavity spectrum to compare with: %s", err)
            return []
        predicted = np.sort(
            1.0
            - beta_discrete(
                spectrum.shifted, operator.spec.omega, operator.time_grid
            )
        )
        measured = np.sort(np.real(report.eigenvalues))
        if predicted.size != measured.size:
            return [
                f"eigenvalue identity: {measured.size} eigenvalues against"
                f" {predicted.size} cavity modes: {_verdict(False)}"
            ]
        gap = float(np.max(np.abs(predicted - measured)))
        return [
            f"eigenvalue identity: max deviation {gap:.3e}:"
            f" {_verdict(gap <= EIGENVALUE_TOL)}"
        ]

    def convergence(self):
        """Grid refinement study of a manufactured solution"""
        cfg = self.config
        conv = cfg.sections["convergence"]
        solution = analysis.manufactured(conv["solution"])
        frequencies = tuple(conv["frequencies"] or cfg.frequencies)
        if not frequencies:
            raise ConfigurationError("[convergence] needs frequencies")
        resolutions = sorted(int(p) for p in conv["resolutions"])
        if len(resolutions) < 2 or resolutions[0] < 3:  # noqa: PLR2004
            raise ConfigurationError(
                "[convergence] needs at least two resolutions of ≥ 3 points"
            )
        tol = self.args.tol or conv["tolerance"]
        start = time.perf_counter()
        with Progress(transient=True) as progress:
            task = progress.add_task(
                "Refining", total=len(resolutions) * len(frequencies)
            )
            table = analysis.convergence_study(
                solution,
                frequencies,
                resolutions,
                tol=tol,
                max_iters=cfg.max_iters,
                method="gmres" if cfg.solver == "auto" else cfg.solver,
                source_mode=cfg.source_mode,
                quadrature=cfg.quadrature,
                periods=cfg.periods,
                combined=conv["combined"],
                progress=lambda *_: progress.advance(task),
            )
        write_csv(
            self.outdir / "errors.csv",
            ["points", "omega", "spacing", "max_error"],
            [
                (p, f"{w:g}", f"{table.spacings[p]:.16e}", f"{err:.16e}")
                for (p, w), err in sorted(table.errors.items())
            ],
        )
        write_csv(
            self.outdir / "orders.csv",
            ["omega", "order"],
            [(f"{w:g}", f"{q:.4f}") for w, q in table.orders.items()],
        )
        write_json(
            self.outdir / "summary.json",
            {
                "version": __version__,
                "verb": "convergence",
                "solution": solution.name,
                "orders": {f"{w:g}": q for w, q in table.orders.items()},
                "wall_time": time.perf_counter() - start,
            },
        )
        out = Table("points", *(f"ω = {w:g}" for w in frequencies))
        for p in resolutions:
            out.add_row(
                str(p), *(f"{table.errors[p, w]:.3e}" for w in frequencies)
            )
        out.add_row(
            "order", *(f"{table.orders[w]:.2f}" for w in frequencies)
        )
        richprint(out)
        _summary_msg("convergence", True, self.outdir)
        return EXIT_OK


def _verdict(ok):
    return "PASS" if ok else "FAIL"


def main():
    """Run the verb given on the command line and exit with its status"""
    app = YeeHoltz(sys.argv[1:])
    sys.exit(app.execute())


if __name__ == "__main__":
    main()
