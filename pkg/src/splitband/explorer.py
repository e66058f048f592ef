"""Band diagrams, gap detection and small-window studies on top of the cell solver."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .analytic import BandCrossing, GapForecast, WaveguideGeometry, forecast_gap
from .mesh import CellMesh, MeshConfig, build_mesh
from .solver import EigenSolveError, assemble, solve_lowest

log = logging.getLogger(__name__)

DEFAULT_EPSILONS = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)
INV_PHI = (math.sqrt(5) - 1) / 2


class SweepError(RuntimeError):
    def __init__(self, k: float, cause: Exception):
        super().__init__(f"eigensolve failed at k={k!r}: {cause}")
        self.k = k
        self.cause = cause


class BracketError(ValueError):
    """The samples in a bracket do not enclose an interior extremum."""


def k_grid(count: int, symmetric: bool = True) -> np.ndarray:
    """Quasimomentum grid.

    ``symmetric``: ``count`` equispaced points in ``(-pi, pi]`` (contains 0
    and pi for even ``count``). Otherwise the half zone ``[0, pi]``, which
    suffices for gap work since band functions are even.
    """
    if count < 2:
        raise ValueError("need at least 2 grid points")
    if symmetric:
        j = np.arange(1, count + 1)
        return math.pi * (2.0 * j / count - 1.0)
    return np.linspace(0.0, math.pi, count)


class BandSolver:
    """Lowest band energies at ``(eps, k)`` on one shared node layout.

    The mesh carries vertices at every window tip in ``tips``, so any of
    those half-widths (and 0) can be evaluated without remeshing. Results
    go through ``cache`` (anything with ``get(payload)`` / ``put(payload,
    values)``); the mesh is only built on the first cache miss.
    """

    def __init__(
        self,
        geom: WaveguideGeometry,
        mesh_config: MeshConfig = MeshConfig(),
        tips: Sequence[float] = (),
        n_bands: int = 6,
        tol: float = 1e-10,
        cache=None,
    ):
        if n_bands < 1:
            raise ValueError("n_bands must be >= 1")
        self.geom = geom.with_window(0.0)
        self.mesh_config = mesh_config
        self.tips = tuple(sorted({float(t) for t in tips if t > 0}))
        self.n_bands = n_bands
        self.tol = tol
        self.cache = cache
        self.hits = 0
        self.misses = 0
        self._mesh: CellMesh | None = None
        self._windows: dict[float, CellMesh] = {}
        self._memo: dict[tuple[float, float], np.ndarray] = {}

    @property
    def mesh(self) -> CellMesh:
        if self._mesh is None:
            self._mesh = build_mesh(self.geom, self.mesh_config, tips=self.tips)
        return self._mesh

    def _window(self, eps: float) -> CellMesh:
        if eps not in self._windows:
            self._windows[eps] = self.mesh.with_window(eps)
        return self._windows[eps]

    def payload(self, eps: float, k: float) -> dict:
        g = self.geom
        return {
            "geometry": {"d": g.d_minus, "h": g.h, "d_plus": g.d_plus},
            "eps": float(eps),
            "k": float(k),
            "mesh": self.mesh_config.as_dict(),
            "tips": list(self.tips),
            "n_bands": self.n_bands,
            "tol": self.tol,
        }

    def energies(self, eps: float, k: float) -> np.ndarray:
        if eps > 0 and eps < self.geom.h and eps not in self.tips:
            raise ValueError(f"eps={eps} is not one of the meshed window tips {self.tips}")
        # A(-k) is the complex conjugate of A(k): same spectrum
        k = abs(float(k))
        if (eps, k) in self._memo:
            return self._memo[(eps, k)].copy()
        key = self.payload(eps, k) if self.cache is not None else None
        if key is not None:
            hit = self.cache.get(key)
            if hit is not None:
                self.hits += 1
                self._memo[(eps, k)] = np.asarray(hit, dtype=float)
                return self._memo[(eps, k)].copy()
        self.misses += 1
        form = assemble(self._window(eps), k)
        vals = solve_lowest(form, self.n_bands, tol=self.tol).eigenvalues
        if key is not None:
            self.cache.put(key, vals.tolist())
        self._memo[(eps, k)] = vals
        return vals.copy()

    def band(self, eps: float, index: int) -> Callable[[float], float]:
        """Band function ``k -> E_index(k)`` (0-based index)."""
        return lambda k: float(self.energies(eps, k)[index])


@dataclass
class BandDiagram:
    """Sorted band energies over a k-grid; ``energies[l, j] = E_{l+1}(k_j)``."""

    geometry: WaveguideGeometry
    eps: float
    k: np.ndarray
    energies: np.ndarray
    meta: list = field(default_factory=list)

    def __post_init__(self) -> None:
        self.k = np.asarray(self.k, dtype=float)
        self.energies = np.asarray(self.energies, dtype=float)
        if np.any(np.diff(self.k) <= 0):
            raise ValueError("k-grid must be strictly increasing")
        if self.energies.shape[1] != len(self.k):
            raise ValueError("energies must have one column per k")

    @property
    def n_bands(self) -> int:
        return self.energies.shape[0]

    def table(self) -> tuple[list[str], list[list[float]]]:
        header = ["k"] + [f"E_{l + 1}" for l in range(self.n_bands)]
        rows = [[float(k)] + self.energies[:, j].tolist() for j, k in enumerate(self.k)]
        return header, rows


def sweep(solver: BandSolver, eps: float, grid: Sequence[float]) -> BandDiagram:
    """One eigensolve per grid point; columns are independent."""
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= -math.pi) or np.any(grid > math.pi):
        raise ValueError("k-grid must lie in (-pi, pi]")
    if solver.n_bands < 2:
        raise ValueError("a band diagram needs at least 2 bands")
    cols = []
    for k in grid:
        try:
            cols.append(solver.energies(eps, k))
        except EigenSolveError as exc:
            raise SweepError(float(k), exc) from exc
    return BandDiagram(solver.geom.with_window(eps) if 0 < eps < solver.geom.h else solver.geom,
                       eps, grid, np.array(cols).T)


def reference_diagram(geom: WaveguideGeometry, grid: Sequence[float], n_bands: int) -> BandDiagram:
    """Band diagram of the decoupled strips from the closed-form dispersion laws."""
    from .solver import reference_spectrum

    grid = np.asarray(grid, dtype=float)
    cols = [reference_spectrum(geom, k, n_bands) for k in grid]
    return BandDiagram(geom.with_window(0.0), 0.0, grid, np.array(cols).T)


@dataclass(frozen=True)
class GapRecord:
    """Gap above band ``lower_band`` (1-based, as in ``E_1 <= E_2 <= ...``)."""

    lower_band: int
    alpha_l: float
    alpha_r: float
    k_l: float
    k_r: float
    refined: bool = False

    @property
    def width(self) -> float:
        return self.alpha_r - self.alpha_l

    @property
    def centre(self) -> float:
        return 0.5 * (self.alpha_l + self.alpha_r)


def sampling_tolerance(diagram: BandDiagram, band: int) -> float:
    """Bound on how far a band extremum can hide between grid points (0-based band)."""
    slopes = np.abs(np.diff(diagram.energies[band]) / np.diff(diagram.k))
    return 0.5 * float(slopes.max()) * float(np.diff(diagram.k).max())


def detect_gaps(
    diagram: BandDiagram,
    energy_window: tuple[float, float] | None = None,
    min_width: float | str = 0.0,
) -> list[GapRecord]:
    """Grid-level gaps between adjacent sorted bands.

    A gap is reported when ``max E_l < min E_{l+1}`` on the grid and the
    gap lies inside ``energy_window``. Bands that touch between grid
    points look like narrow gaps; ``min_width`` filters them, and
    ``"auto"`` uses the Lipschitz sampling bound of both bands.
    """
    lo, hi = energy_window if energy_window is not None else (-math.inf, math.inf)
    out = []
    for l in range(diagram.n_bands - 1):
        lower = diagram.energies[l]
        upper = diagram.energies[l + 1]
        i, j = int(np.argmax(lower)), int(np.argmin(upper))
        a, b = float(lower[i]), float(upper[j])
        if not a < b:
            continue
        if a < lo or b > hi:
            continue
        if min_width == "auto":
            need = sampling_tolerance(diagram, l) + sampling_tolerance(diagram, l + 1)
        else:
            need = float(min_width)
        if b - a <= need:
            continue
        out.append(GapRecord(l + 1, a, b, float(diagram.k[i]), float(diagram.k[j])))
    return out


def golden_section(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float,
    maximize: bool = False,
) -> tuple[float, float, int]:
    """Golden-section search on ``[a, b]``; returns ``(x, f(x), evaluations)``.

    ``x`` is the best point evaluated (the final midpoint included). The
    opening samples must show an interior extremum, else :class:`BracketError`.
    """
    if not a < b:
        raise ValueError("bracket must satisfy a < b")
    sgn = -1.0 if maximize else 1.0
    g = lambda x: sgn * f(x)  # noqa: E731
    fa, fb = g(a), g(b)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = g(c), g(d)
    evals = 4
    if min(fc, fd) > min(fa, fb):
        raise BracketError(
            f"samples on [{a}, {b}] are monotone; no interior {'maximum' if maximize else 'minimum'}"
        )
    best = min([(fa, a), (fb, b), (fc, c), (fd, d)])
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = g(c)
            best = min(best, (fc, c))
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = g(d)
            best = min(best, (fd, d))
        evals += 1
    mid = 0.5 * (a + b)
    fm = g(mid)
    evals += 1
    best = min(best, (fm, mid))
    return best[1], sgn * best[0], evals


def refine_extremum(
    band_fn: Callable[[float], float],
    k_bracket: tuple[float, float],
    tol_k: float = 1e-4,
    kind: str = "max",
) -> tuple[float, float]:
    """Locate the max (``kind="max"``) or min of a band function inside ``k_bracket``."""
    if tol_k < 1e-6:
        raise ValueError(f"tol_k must be >= 1e-6, got {tol_k}")
    if kind not in ("max", "min"):
        raise ValueError("kind must be 'max' or 'min'")
    a, b = k_bracket
    k, e, _ = golden_section(band_fn, a, b, tol_k, maximize=kind == "max")
    return k, e


def _grid_bracket(grid: np.ndarray, i: int) -> tuple[float, float] | None:
    if i == 0 or i == len(grid) - 1:
        return None
    return float(grid[i - 1]), float(grid[i + 1])


def refine_gap(
    solver: BandSolver, eps: float, diagram: BandDiagram, gap: GapRecord, tol_k: float = 1e-4
) -> GapRecord:
    """Golden-section refinement of both edges of a grid-level gap.

    Extrema sitting on the ends of the grid are left at grid level.
    """
    l = gap.lower_band - 1
    k_l, a_l = gap.k_l, gap.alpha_l
    k_r, a_r = gap.k_r, gap.alpha_r
    br = _grid_bracket(diagram.k, int(np.argmax(diagram.energies[l])))
    if br is not None:
        k, a = refine_extremum(solver.band(eps, l), br, tol_k, "max")
        if a >= a_l:
            k_l, a_l = k, a
    br = _grid_bracket(diagram.k, int(np.argmin(diagram.energies[l + 1])))
    if br is not None:
        k, a = refine_extremum(solver.band(eps, l + 1), br, tol_k, "min")
        if a <= a_r:
            k_r, a_r = k, a
    return GapRecord(gap.lower_band, a_l, a_r, k_l, k_r, True)


@dataclass(frozen=True)
class AsymptoticFit:
    """Least-squares fit ``v = c0 + c1 / |ln eps|``."""

    c0: float
    c1: float
    residual: float
    eps: tuple[float, ...]

    def predict(self, eps):
        return self.c0 + self.c1 / np.abs(np.log(eps))


def fit_inverse_log(points: Sequence[tuple[float, float]]) -> AsymptoticFit:
    pts = sorted((float(e), float(v)) for e, v in points)
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    eps = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(eps <= 0) or np.any(eps >= 1):
        raise ValueError("eps values must lie in (0, 1)")
    x = 1.0 / np.abs(np.log(eps))
    if np.ptp(x) == 0 or len(np.unique(x)) < 2:
        raise ValueError("degenerate input: need distinct |ln eps|")
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    res = float(np.linalg.norm(design @ coef - v))
    return AsymptoticFit(float(coef[0]), float(coef[1]), res, tuple(eps.tolist()))


@dataclass
class StudyRow:
    eps: float
    alpha_l: float
    alpha_r: float
    k_l: float
    k_r: float
    n_gaps: int
    lower_band: int

    @property
    def abs_ln_eps(self) -> float:
        return abs(math.log(self.eps))

    @property
    def found(self) -> bool:
        return not math.isnan(self.alpha_l)


@dataclass
class EpsilonStudy:
    crossing: BandCrossing
    forecast: GapForecast
    rows: list[StudyRow]
    fits: dict[str, AsymptoticFit]
    findings: list[str] = field(default_factory=list)

    SERIES = ("alpha_l", "alpha_r", "k_l", "k_r")

    def forecast_values(self) -> dict[str, tuple[float, float]]:
        """Forecast ``(intercept, slope)`` for each fitted series."""
        f = self.forecast
        sl, sr = f.edge_slopes
        kl, kr = f.extremum_slopes
        return {
            "alpha_l": (f.E0, sl),
            "alpha_r": (f.E0, sr),
            "k_l": (f.k0, kl),
            "k_r": (f.k0, kr),
        }

    def scaled_widths(self) -> list[float]:
        return [(r.alpha_r - r.alpha_l) * r.abs_ln_eps for r in self.rows if r.found]

    def table(self) -> tuple[list[str], list[list[float]]]:
        header = ["epsilon", "abs_ln_eps", "alpha_l", "alpha_r", "k_l", "k_r"]
        rows = [[r.eps, r.abs_ln_eps, r.alpha_l, r.alpha_r, r.k_l, r.k_r] for r in self.rows]
        return header, rows

    def fit_table(self) -> tuple[list[str], list[list]]:
        header = ["series", "c0", "c1", "residual", "forecast", "rel_error"]
        rows = []
        fc = self.forecast_values()
        for name in self.SERIES:
            if name not in self.fits:
                continue
            fit = self.fits[name]
            slope = fc[name][1]
            rows.append([name, fit.c0, fit.c1, fit.residual, slope, abs(fit.c1 - slope) / abs(slope)])
        return header, rows


def epsilon_study(
    solver: BandSolver,
    crossing: BandCrossing,
    eps_list: Sequence[float] = DEFAULT_EPSILONS,
    grid: Sequence[float] | None = None,
    energy_window: tuple[float, float] = (0.25, 2.25),
    tol_k: float = 1e-4,
) -> EpsilonStudy:
    """Gap edges and their quasimomenta for a decreasing list of window sizes."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    if any(not (0 < e < solver.geom.h) for e in eps_list):
        raise ValueError("eps values must lie in (0, h)")
    grid = k_grid(33, symmetric=False) if grid is None else np.asarray(grid, dtype=float)
    forecast = forecast_gap(crossing, solver.geom)
    rows, findings = [], []
    for eps in eps_list:
        diagram = sweep(solver, eps, grid)
        gaps = detect_gaps(diagram, energy_window)
        if not gaps:
            findings.append(f"no gap at eps={eps}: asymptotic regime not reached")
            rows.append(StudyRow(eps, math.nan, math.nan, math.nan, math.nan, 0, 0))
            continue
        dist = [abs(g.centre - crossing.E0) for g in gaps]
        best = int(np.argmin(dist))
        if dist.count(dist[best]) > 1:
            findings.append(f"tie between gaps at eps={eps}")
        gap = refine_gap(solver, eps, diagram, gaps[best], tol_k)
        log.info("eps=%g gap %s", eps, gap)
        rows.append(StudyRow(eps, gap.alpha_l, gap.alpha_r, abs(gap.k_l), abs(gap.k_r), len(gaps), gap.lower_band))
    fits = {}
    good = [r for r in rows if r.found]
    if len(good) >= 3:
        for name in EpsilonStudy.SERIES:
            fits[name] = fit_inverse_log([(r.eps, getattr(r, name)) for r in good])
    else:
        findings.append("fewer than 3 window sizes produced a gap; no fits")
    return EpsilonStudy(crossing, forecast, rows, fits, findings)


@dataclass
class ShiftBoundReport:
    eps: list[float]
    k: np.ndarray
    shifts: np.ndarray  # (eps, band, k): E^eps - E^0
    min_shift: float
    scaled_max: list[float]  # max over (band, k) of shift * |ln eps|, per eps
    bounded: bool
    nested_monotone: bool

    def table(self) -> tuple[list[str], list[list[float]]]:
        header = ["epsilon", "abs_ln_eps", "min_shift", "max_shift", "max_scaled_shift"]
        rows = []
        for i, e in enumerate(self.eps):
            s = self.shifts[i]
            rows.append([e, abs(math.log(e)), float(s.min()), float(s.max()), self.scaled_max[i]])
        return header, rows


def verify_shift_bound(
    solver: BandSolver,
    eps_list: Sequence[float] = DEFAULT_EPSILONS,
    grid: Sequence[float] | None = None,
    floor: float = -1e-10,
) -> ShiftBoundReport:
    """Compare coupled and decoupled bands on the solver's single node layout."""
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    grid = k_grid(33, symmetric=True) if grid is None else np.asarray(grid, dtype=float)
    base = np.array([solver.energies(0.0, k) for k in grid]).T
    shifts = []
    for e in eps_list:
        vals = np.array([solver.energies(e, k) for k in grid]).T
        shifts.append(vals - base)
    shifts = np.array(shifts)
    scaled = [float(shifts[i].max() * abs(math.log(e))) for i, e in enumerate(eps_list)]
    bounded = True
    if len(scaled) >= 4:
        bounded = max(scaled[-2:]) <= 1.5 * max(scaled[:2])
    # wider windows glue more nodes (smaller trial space): shifts grow with eps
    monotone = bool(np.all(np.diff(shifts, axis=0) <= -floor))
    return ShiftBoundReport(
        eps=eps_list,
        k=grid,
        shifts=shifts,
        min_shift=float(shifts.min()),
        scaled_max=scaled,
        bounded=bounded,
        nested_monotone=monotone,
    )
