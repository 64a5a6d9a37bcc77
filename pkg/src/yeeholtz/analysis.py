# vim:set et sw=4 ts=4:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT
#
"""
Verification tools: dense assembly of I − S and its spectrum, the discrete
PEC cavity spectrum, contraction rate checks, manufactured solutions and
grid refinement studies
"""

import hashlib
import logging as log
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from yeeholtz.errors import (
    ConfigurationError,
    ResonanceError,
    SizeGuardError,
    UnsupportedError,
)
from yeeholtz.filters import (
    FilterSpec,
    FrequencySolution,
    Quadrature,
    beta_discrete,
    contraction_bounds,
)
from yeeholtz.grid import (
    Domain,
    Mode,
    StateVector,
    build_grid_2d,
    flatten,
    layout,
    unflatten,
)
from yeeholtz.timedomain import (
    BoundarySpec,
    Condition,
    SourceMode,
    SourceSpec,
    curl_curl,
    magnetic_rates,
)
from yeeholtz.waveholtz import WaveHoltzOperator, solve_multi_frequency

# Largest dense system assembled column by column
DENSE_GUARD = 20000

# Relative asymmetry below which the symmetric eigensolver is used
SYMMETRY_TOL = 1e-10

# Smallest admissible relative distance to a discrete resonance
RESONANCE_TOL = 1e-10

# Slack on the lemma bound when judging a measured contraction rate
RATE_SLACK = 0.02


@dataclass(frozen=True, eq=False)
class DenseOperator:

    """Assembled I − S with a hash of the set up it came from"""

    matrix: np.ndarray
    provenance: str

    @property
    def size(self):
        return self.matrix.shape[0]


def provenance(operator):
    """Short hash identifying an operator's set up"""
    spec = operator.spec
    key = repr(
        (
            operator.grid.domain,
            spec.frequencies,
            spec.periods,
            spec.quadrature.value,
            spec.forcing.value,
            spec.mode.value,
            operator.time_grid.steps,
            sorted((f, c.value) for f, c in operator.boundary.faces.items()),
        )
    )
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def assemble_dense(operator, dim=None, workers=1):
    """Assemble I − S column by column, column j being (I − S)e_j"""
    size = operator.size
    if dim is not None and dim != size:
        raise ConfigurationError(
            f"Requested dimension {dim} does not match {size} unknowns"
        )
    if size > DENSE_GUARD:
        raise SizeGuardError(
            f"{size} unknowns exceed the dense assembly limit of {DENSE_GUARD}"
        )
    matrix = np.empty((size, size))

    def columns(op, indices):
        for j in indices:
            unit = np.zeros(size)
            unit[j] = 1.0
            matrix[:, j] = op.apply_i_minus_s(unit).values
        return op.wave_solves

    log.info("Assembling %d columns with %d worker(s)", size, workers)
    chunks = [range(k, size, workers) for k in range(workers)]
    forks = [operator.fork() for _ in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        solves = sum(pool.map(columns, forks, chunks))
    operator.wave_solves += solves
    return DenseOperator(matrix, provenance(operator))


@dataclass
class SpectrumReport:

    """Eigenvalues and conditioning of an assembled operator"""

    eigenvalues: np.ndarray
    min: float
    max: float
    condition: float
    symmetric_deviation: float
    symmetric: bool


def spectrum_report(dense):
    """
    Full eigendecomposition of a dense operator; the symmetric solver is used
    when the relative asymmetry ||A − Aᵀ||∞/||A||∞ is below SYMMETRY_TOL
    """
    mat = dense.matrix if isinstance(dense, DenseOperator) else dense
    norm = np.linalg.norm(mat, np.inf)
    deviation = float(np.linalg.norm(mat - mat.T, np.inf) / (norm or 1.0))
    symmetric = deviation <= SYMMETRY_TOL
    if symmetric:
        eigs = scipy.linalg.eigvalsh(0.5 * (mat + mat.T))
        lo, hi = float(eigs[0]), float(eigs[-1])
        cond = hi / lo if lo > 0 else math.inf
    else:
        eigs = scipy.linalg.eigvals(mat)
        eigs = eigs[np.argsort(eigs.real)]
        lo, hi = float(eigs[0].real), float(eigs[-1].real)
        cond = float(np.linalg.cond(mat))
    return SpectrumReport(eigs, lo, hi, cond, deviation, symmetric)


@dataclass
class CavitySpectrum:

    """Discrete spectrum of L_h on a rectangular PEC cavity"""

    indices: np.ndarray
    continuous: np.ndarray
    discrete: np.ndarray
    shifted: np.ndarray

    def delta(self, omega):
        """Relative gap min_j |λ_j − ω|/ω"""
        return float(np.min(np.abs(self.discrete - omega)) / omega)


def _cavity_material(grid):
    if not grid.material.uniform:
        raise UnsupportedError(
            "Cavity spectra need constant permittivity and permeability"
        )
    if set(grid.pec_faces) != set(grid.domain.faces):
        raise UnsupportedError("Cavity spectra need PEC on every face")
    for comp, mask in grid.pec.items():
        inner = tuple(
            slice(1, -1) if off == 0 else slice(None)
            for off in grid.STAGGER[comp]
        )
        if mask[inner].any():
            raise UnsupportedError("Cavity spectra need an empty cavity")
    return float(grid.material.eps), float(grid.material.mu)


def _mode_indices(grid):
    """
    Mode indices, one row per eigenvalue. In 2D these are the interior Ez
    nodes. In 3D an index triple with all entries non-zero carries two
    polarisations and a static (gradient) mode, one with a single zero entry
    carries one polarisation.
    """
    start = 1 if grid.dim == 2 else 0  # noqa: PLR2004
    idx = np.stack(
        np.meshgrid(
            *(np.arange(start, n) for n in grid.domain.cells), indexing="ij"
        ),
        axis=-1,
    ).reshape(-1, grid.dim)
    if grid.dim == 2:  # noqa: PLR2004
        return idx, np.zeros(len(idx), dtype=bool)
    nonzero = np.count_nonzero(idx, axis=1)
    full = idx[nonzero == 3]  # noqa: PLR2004
    waves = np.concatenate([full, full, idx[nonzero == 2]])  # noqa: PLR2004
    return (
        np.concatenate([waves, full]),
        np.arange(len(waves) + len(full)) >= len(waves),
    )


def cavity_spectrum(grid, time_grid):
    """
    Eigenvalues λ² = Σ_axes (4/Δ²)sin²(kπΔ/2L) (divided by εμ) of L_h on a
    PEC rectangle or box, their continuum limits and the shifted values with
    sin(λ̃Δt/2)/(Δt/2) = λ. Static modes of a 3D box have λ = 0.
    """
    eps, mu = _cavity_material(grid)
    modes, static = _mode_indices(grid)
    lam2 = np.zeros(len(modes))
    cont2 = np.zeros(len(modes))
    for k, (d, length) in enumerate(zip(grid.spacing, grid.domain.extent)):
        wavenumber = modes[:, k] * math.pi / length
        lam2 += (2.0 / d * np.sin(0.5 * wavenumber * d)) ** 2
        cont2 += wavenumber**2
    lam2[static] = cont2[static] = 0.0
    discrete = np.sqrt(lam2 / (eps * mu))
    continuous = np.sqrt(cont2 / (eps * mu))
    dt = time_grid.dt
    shifted = 2.0 / dt * np.arcsin(np.clip(0.5 * discrete * dt, 0.0, 1.0))
    return CavitySpectrum(modes, continuous, discrete, shifted)


def mode_shape(grid, m, n):
    """Cavity eigenvector sin(mπx/Lx)sin(nπy/Ly) at the Ez nodes"""
    _cavity_material(grid)
    x, y = grid.coordinates("ez")[:2]
    (x0, y0), (lx, ly) = grid.domain.lower[:2], grid.domain.extent[:2]
    return np.sin(m * math.pi * (x - x0) / lx) * np.sin(
        n * math.pi * (y - y0) / ly
    )


def mode_fields(grid, m, n, p):
    """
    Divergence free eigenvector of L_h in a PEC box, with Ez = 0,
        Ex =  s_y cos(mπx/Lx) sin(nπy/Ly) sin(pπz/Lz)
        Ey = −s_x sin(mπx/Lx) cos(nπy/Ly) sin(pπz/Lz)
    where s = (2/Δ)sin(kπΔ/2L) on each axis; needs p ≥ 1 and (m, n) ≠ (0, 0)
    """
    _cavity_material(grid)
    if grid.dim != 3:  # noqa: PLR2004
        raise UnsupportedError("Vector cavity modes need a 3D grid")
    if p < 1 or m == n == 0:
        raise ConfigurationError(
            f"No cavity mode with Ez = 0 for indices ({m}, {n}, {p})"
        )
    lower, extent = grid.domain.lower, grid.domain.extent
    index = (m, n, p)
    s_x, s_y, _ = (
        2.0 / d * math.sin(k * math.pi * d / (2 * length))
        for k, d, length in zip(index, grid.spacing, extent)
    )

    def profile(comp, funcs):
        out = 1.0
        for f, k, c, lo, length in zip(
            funcs, index, grid.coordinates(comp), lower, extent
        ):
            out = out * f(k * math.pi * (c - lo) / length)
        return out

    return {
        "ex": s_y * profile("ex", (np.cos, np.sin, np.sin)),
        "ey": -s_x * profile("ey", (np.sin, np.cos, np.sin)),
        "ez": np.zeros(grid.shape("ez")),
    }


def mode_vector(grid, *index):
    """
    Normalised cavity eigenvector as an energy conserving state vector:
    `mode_shape` for (m, n) on 2D grids, `mode_fields` for (m, n, p) in 3D
    """
    work = grid.zeros_like()
    if grid.dim == 2:  # noqa: PLR2004
        work.e["ez"][...] = mode_shape(grid, *index)
    else:
        for comp, values in mode_fields(grid, *index).items():
            work.e[comp][...] = values
    vec = flatten(work, Mode.ENERGY_CONSERVING)
    vec.values /= np.linalg.norm(vec.values)
    return vec


def dense_reference(operator, dense=None):
    """ν^∞ from a dense LU solve of the assembled system"""
    if dense is None:
        dense = assemble_dense(operator)
    rhs = operator.compute_rhs().values
    return StateVector(scipy.linalg.solve(dense.matrix, rhs), operator.layout)


@dataclass
class TheoremCheck:

    """Measured fixed point contraction against the predicted bounds"""

    omega: float
    delta: float
    theorem_bound: float
    lemma_bound: float
    continuous_estimate: float
    spectral_rate: float
    measured_rate: float
    hypothesis_holds: bool
    passed: bool
    iterations: int
    errors: list = field(default_factory=list)


def rate_accepted(rate, lemma_bound):
    """
    A measured rate passes at most RATE_SLACK above the lemma bound, and only
    while it is a contraction
    """
    return rate < 1.0 and rate <= lemma_bound + RATE_SLACK


def cavity_operator(grid, omega, time_grid, source=None):
    """Energy conserving waveholtz operator for a PEC cavity"""
    periods = round(time_grid.final_time * omega / (2 * math.pi))
    if source is None:
        # Uniform current excites every mode symmetric about the centre
        source = SourceSpec({"ez": np.full(grid.shape("ez"), omega)}, omega)
    spec = FilterSpec((omega,), max(periods, 1))
    return WaveHoltzOperator(
        grid,
        source,
        time_grid,
        BoundarySpec.uniform(Condition.PEC, grid.dim),
        spec,
    )


def theorem1_check(  # noqa: PLR0913
    grid,
    omega,
    time_grid,
    source=None,
    *,
    max_iters=400,
    dense=None,
):
    """
    Compare the measured fixed point contraction rate on a PEC cavity with
    the bound max(1 − 0.3δ², 0.63), judged by `rate_accepted`. The rate is
    the largest ratio of successive errors against the dense solution. A
    violated step size hypothesis ωΔt ≤ min(δ, 1) is reported, not failed.
    """
    spectrum = cavity_spectrum(grid, time_grid)
    delta = spectrum.delta(omega)
    if delta < RESONANCE_TOL:
        raise ResonanceError(
            f"ω = {omega} coincides with a discrete cavity resonance"
            f" (δ = {delta:.2e})"
        )
    bounds = contraction_bounds(delta)
    hypothesis = omega * time_grid.dt <= min(delta, 1.0)
    if not hypothesis:
        log.warning(
            "Step size hypothesis ωΔt ≤ min(δ, 1) violated: ωΔt = %.3g,"
            " δ = %.3g",
            omega * time_grid.dt,
            delta,
        )
    operator = cavity_operator(grid, omega, time_grid, source)
    exact = dense_reference(operator, dense).values
    spectral = float(
        np.max(np.abs(beta_discrete(spectrum.shifted, omega, time_grid)))
    )

    e0 = float(np.linalg.norm(exact))
    if e0 == 0.0:
        raise ConfigurationError("The cavity source excites no mode")
    errors = [e0]
    nu = operator.zeros()
    rate = 0.0
    for it in range(1, max_iters + 1):
        nu = operator.compute_rhs() if it == 1 else operator.apply_pi(nu)
        err = float(np.linalg.norm(nu.values - exact))
        rate = max(rate, err / errors[-1])
        errors.append(err)
        if err < 1e-10 * e0:
            break
    passed = rate_accepted(rate, bounds.lemma)
    log.info(
        "ω = %g: δ = %.3g, measured rate %.4f, bound %.4f",
        omega,
        delta,
        rate,
        bounds.lemma,
    )
    return TheoremCheck(
        omega=omega,
        delta=delta,
        theorem_bound=bounds.theorem,
        lemma_bound=bounds.lemma,
        continuous_estimate=bounds.continuous,
        spectral_rate=spectral,
        measured_rate=rate,
        hypothesis_holds=hypothesis,
        passed=passed,
        iterations=len(errors) - 1,
        errors=errors,
    )


def _quartic(x, y):
    return 16.0 * x**2 * (x - 1) ** 2 * y**2 * (y - 1) ** 2


def _quartic_laplacian(x, y):
    p = lambda s: s**2 * (s - 1) ** 2  # noqa: E731
    pdd = lambda s: 12 * s**2 - 12 * s + 2  # noqa: E731
    return 16.0 * (pdd(x) * p(y) + p(x) * pdd(y))


@dataclass(frozen=True)
class ManufacturedSolution:

    """Exact Ez on the unit square with its Laplacian"""

    name: str
    value: Callable
    laplacian: Callable
    dirichlet: bool = False
    lower: tuple = (0.0, 0.0)
    upper: tuple = (1.0, 1.0)

    def domain(self, points):
        """Domain with `points` grid points per direction"""
        return Domain(self.lower, self.upper, (points - 1, points - 1))


MANUFACTURED = {
    "quartic": ManufacturedSolution("quartic", _quartic, _quartic_laplacian),
    "affine": ManufacturedSolution(
        "affine",
        lambda x, y: x + y,
        lambda x, y: np.zeros(np.broadcast(x, y).shape),
        dirichlet=True,
    ),
}


def manufactured(name):
    try:
        return MANUFACTURED[name]
    except KeyError:
        raise ConfigurationError(
            f"Unknown manufactured solution '{name}', choose from"
            f" {', '.join(MANUFACTURED)}"
        ) from None


@dataclass(frozen=True, eq=False)
class ManufacturedProblem:

    """Source, exact field and Dirichlet lift of a manufactured solution"""

    source: SourceSpec
    exact: np.ndarray
    lift: np.ndarray


def manufactured_source(
    solution, grid, omega, mode=SourceMode.SIN_EXACT
):
    """
    Current J = ε(ω²u + Δu)/ω whose frequency domain solution is u. With
    non-zero boundary data g the unknown becomes u − (0 ⊕ g) and J gains
    ε L_h(0 ⊕ g)/ω; g is written back onto the solution afterwards.
    """
    x, y = grid.coordinates("ez")
    exact = np.asarray(solution.value(x, y), dtype=float)
    eps = grid.eps["ez"]
    current = eps * (omega**2 * exact + solution.laplacian(x, y)) / omega
    lift = np.zeros_like(exact)
    if solution.dirichlet:
        lift[grid.pec["ez"]] = exact[grid.pec["ez"]]
        current = current + eps * curl_curl(grid, {"ez": lift})["ez"] / omega
    source = SourceSpec({"ez": current}, omega, mode)
    return ManufacturedProblem(source, exact, lift)


def manufactured_error(nu, grid, problem):
    """Max-norm Ez error of a solved state with the lift restored"""
    work = grid.zeros_like()
    unflatten(nu, work, Mode.ENERGY_CONSERVING)
    return float(np.max(np.abs(work.e["ez"] + problem.lift - problem.exact)))


def complex_reference_2d(grid, current, omega):
    """
    Dense complex frequency domain Yee solve on a PEC grid

        iωεÊ = ∇×Ĥ − J,  iωμĤ = −∇×Ê

    i.e. (ω² − L_h)Ê = iωJ/ε, returned as a FrequencySolution
    """
    if grid.dim != 2:  # noqa: PLR2004
        raise UnsupportedError("The complex reference solve is 2D only")
    if set(grid.pec_faces) != set(grid.domain.faces):
        raise UnsupportedError("The complex reference solve needs PEC faces")
    lay = layout(grid, Mode.ENERGY_CONSERVING)
    size = lay.size
    if size > DENSE_GUARD:
        raise SizeGuardError(f"{size} unknowns exceed {DENSE_GUARD}")
    work = grid.zeros_like()
    lh = np.empty((size, size))
    for j in range(size):
        unit = np.zeros(size)
        unit[j] = 1.0
        unflatten(unit, work, Mode.ENERGY_CONSERVING)
        work.e["ez"][...] = curl_curl(work, work.e)["ez"]
        lh[:, j] = flatten(work, Mode.ENERGY_CONSERVING).values
    work.clear()
    work.e["ez"][...] = current["ez"] / grid.eps["ez"]
    forcing = flatten(work, Mode.ENERGY_CONSERVING).values
    e_hat = scipy.linalg.solve(
        omega**2 * np.eye(size) - lh, 1j * omega * forcing
    )
    unflatten(e_hat.real, work, Mode.ENERGY_CONSERVING)
    re_e = work.e["ez"].copy()
    re_h = magnetic_rates(work)
    unflatten(e_hat.imag, work, Mode.ENERGY_CONSERVING)
    im_e = work.e["ez"].copy()
    im_h = magnetic_rates(work)
    # Ĥ = −i·magnetic_rates(Ê)/ω
    return FrequencySolution(
        omega,
        imag={"e": {"ez": im_e}, "h": {c: -r / omega for c, r in re_h.items()}},
        real={"e": {"ez": re_e}, "h": {c: r / omega for c, r in im_h.items()}},
    )


@dataclass
class ConvergenceTable:

    """Errors per (points, ω) and fitted orders per ω"""

    errors: dict
    orders: dict
    spacings: dict


def fit_order(spacings, errors, finest=3):
    """Least squares slope of log(error) against log(h) over the finest runs"""
    pairs = sorted(zip(spacings, errors))[:finest]
    if len(pairs) < 2 or any(e <= 0 for _, e in pairs):  # noqa: PLR2004
        return math.nan
    h, e = np.log(np.array(pairs)).T
    return float(np.polyfit(h, e, 1)[0])


def convergence_study(  # noqa: PLR0913
    solution,
    frequencies,
    resolutions,
    *,
    tol=1e-10,
    max_iters=500,
    method="gmres",
    source_mode=SourceMode.SIN_EXACT,
    quadrature=Quadrature.TRAPEZOID,
    periods=1,
    combined=False,
    progress=None,
):
    """
    Grid refinement study of a manufactured solution on PEC grids with
    `resolutions` points per direction. Frequencies are solved one at a time
    or, with `combined`, in a single multi-frequency solve.
    """
    errors = {}
    spacings = {}
    boundary = BoundarySpec.uniform(Condition.PEC, 2)
    for points in resolutions:
        grid = build_grid_2d(solution.domain(points), boundary=boundary)
        spacings[points] = max(grid.spacing)
        problems = [
            manufactured_source(
                solution,
                grid,
                w,
                SourceMode.SIN_EXACT if combined else source_mode,
            )
            for w in frequencies
        ]
        if combined:
            report = solve_multi_frequency(
                grid,
                frequencies,
                [p.source for p in problems],
                boundary,
                tol,
                periods=periods,
                method=method,
                max_iters=max_iters,
            )
            for w, prob, sol in zip(frequencies, problems, report.solutions):
                err = float(
                    np.max(np.abs(sol.imag["e"]["ez"] + prob.lift - prob.exact))
                )
                errors[points, w] = err
        else:
            for w, prob in zip(frequencies, problems):
                spec = FilterSpec((w,), periods, quadrature)
                op = WaveHoltzOperator(
                    grid, prob.source, spec.time_grid(grid), boundary, spec
                )
                report = op.solve(method, tol, max_iters)
                errors[points, w] = manufactured_error(report.nu, grid, prob)
        for w in frequencies:
            log.info(
                "%d points, ω = %g: max error %.3e",
                points,
                w,
                errors[points, w],
            )
            if progress is not None:
                progress(points, w, errors[points, w])
    orders = {
        w: fit_order(
            [spacings[p] for p in resolutions],
            [errors[p, w] for p in resolutions],
        )
        for w in frequencies
    }
    return ConvergenceTable(errors, orders, spacings)
