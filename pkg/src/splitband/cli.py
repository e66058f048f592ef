"""Pipeline orchestration and the ``splitband`` command line."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import (
    BandCrossing,
    corollary_region_check,
    find_crossings,
    forecast_gap,
    identity_residuals,
)
from .config import ConfigError, RunConfig, from_dict
from .explorer import (
    BandSolver,
    detect_gaps,
    epsilon_study,
    k_grid,
    reference_diagram,
    refine_gap,
    sweep,
    verify_shift_bound,
)
from .io import ResultCache, canonical_json, emit_csv, emit_svg_band_diagram, render_band_svg

log = logging.getLogger(__name__)

CACHE_ENV = "SPLITBAND_CACHE_DIR"
MANIFEST = "manifest.json"
# dense grid for the closed-form diagram; costs nothing
ANALYTIC_POINTS = 257


class TaskError(RuntimeError):
    pass


@dataclass
class TaskRecord:
    name: str
    status: str = "ok"
    outputs: list[str] = field(default_factory=list)
    findings: list[str] = field(default_factory=list)
    error: str | None = None
    seconds: float = 0.0


@dataclass
class RunManifest:
    config_hash: str
    version: str
    config: dict
    tasks: list[TaskRecord]
    solver: dict
    total_seconds: float
    path: Path | None = None

    @property
    def ok(self) -> bool:
        return all(t.status == "ok" for t in self.tasks)

    def to_dict(self, root: Path) -> dict:
        files = {}
        for t in self.tasks:
            for rel in t.outputs:
                p = root / rel
                files[rel] = {"bytes": p.stat().st_size, "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "config": self.config,
            "tasks": [
                {"name": t.name, "status": t.status, "outputs": t.outputs, "findings": t.findings, "error": t.error}
                for t in self.tasks
            ],
            "files": files,
            "solver": self.solver,
            "timing": {"total_seconds": self.total_seconds, **{t.name: t.seconds for t in self.tasks}},
        }


def _tag(eps: float) -> str:
    return "0" if eps == 0 else format(eps, "g")


def eligible_crossings(cfg: RunConfig) -> list[BandCrossing]:
    """Crossings a gap forecast applies to: opposite slopes and ``d_plus = pi``."""
    if not math.isclose(cfg.geometry.d_plus, math.pi, rel_tol=0, abs_tol=1e-15):
        return []
    return [c for c in find_crossings(cfg.geometry) if abs(c.beta) < 1]


class Pipeline:
    """One run of the configured tasks over a shared solver and cache."""

    def __init__(self, cfg: RunConfig, cache_dir: str | os.PathLike | None = None):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        if cache_dir is None:
            cache_dir = os.environ.get(CACHE_ENV) or self.out / ".cache"
        self.cache = ResultCache(cache_dir) if cfg.cache else None
        self.solver = BandSolver(
            cfg.geometry,
            cfg.mesh,
            tips=cfg.epsilons,
            n_bands=cfg.bands,
            tol=cfg.eig_tol,
            cache=self.cache,
        )
        self.grid = k_grid(cfg.k_count, symmetric=cfg.k_symmetric)
        self._diagrams: dict[float, object] = {}
        self._refined: dict[float, list] = {}

    # -- helpers ---------------------------------------------------------
    def _csv(self, rec: TaskRecord, name: str, header, rows) -> None:
        emit_csv(header, rows, self.out / name)
        rec.outputs.append(name)

    def _diagram(self, eps: float):
        if eps not in self._diagrams:
            self._diagrams[eps] = sweep(self.solver, eps, self.grid)
        return self._diagrams[eps]

    def _gaps(self, eps: float) -> list:
        """Grid-level gaps refined by golden section; ones that close are dropped."""
        if eps not in self._refined:
            diagram = self._diagram(eps)
            out = []
            for g in detect_gaps(diagram, self.cfg.energy_window):
                g = refine_gap(self.solver, eps, diagram, g, self.cfg.k_tol)
                if g.width > 0:
                    out.append(g)
            self._refined[eps] = out
        return self._refined[eps]

    def _forecasts(self):
        return [forecast_gap(c, self.cfg.geometry) for c in eligible_crossings(self.cfg)]

    # -- tasks -----------------------------------------------------------
    def task_analytic(self, rec: TaskRecord) -> None:
        geom = self.cfg.geometry
        crossings = find_crossings(geom)
        header = [
            "n", "m", "k0", "E0", "zeta", "beta", "beta1", "beta2", "kappa", "kappa_exceeds_four",
            "tau_l", "tau_r", "sigma_l", "sigma_r", "slope_alpha_l", "slope_alpha_r", "scaled_width",
        ]  # fmt: skip
        rows = []
        for c in crossings:
            base = [c.n, c.m, c.k0, c.E0, c.zeta, c.beta, c.beta1, c.beta2, c.kappa, c.kappa_exceeds_four]
            if abs(c.beta) < 1 and math.isclose(geom.d_plus, math.pi, abs_tol=1e-15):
                f = forecast_gap(c, geom)
                base += [f.tau_l, f.tau_r, f.sigma_l, f.sigma_r, *f.edge_slopes, f.scaled_width]
            else:
                base += [math.nan] * 7
            rows.append(base)
            if c.kappa_exceeds_four:
                rec.findings.append(f"crossing (n={c.n}, m={c.m}): {c.kappa} bands cover E0, more than 4")
        self._csv(rec, "crossings.csv", header, rows)
        if not crossings:
            rec.findings.append("no crossing of ground-mode bands below the first excited transverse level")
        rec.findings.append(f"corollary region: {'inside' if corollary_region_check(geom.h, geom.d) else 'outside'}")

        grid = k_grid(ANALYTIC_POINTS - 1, symmetric=True)
        grid = np.concatenate([[-math.pi], grid])
        diagram = reference_diagram(geom, grid, self.cfg.bands)
        self._csv(rec, "bands_unperturbed.csv", *diagram.table())
        markers = [(s * c.k0, c.E0) for c in crossings for s in (1, -1)]
        render_band_svg(
            diagram.k,
            diagram.energies,
            self.out / "bands_unperturbed.svg",
            self.cfg.energy_window,
            markers=markers,
            title=f"decoupled bands, d={geom.d_minus:g}, h={geom.h:g}",
        )
        rec.outputs.append("bands_unperturbed.svg")

    def task_sweep(self, rec: TaskRecord) -> None:
        forecasts = self._forecasts()
        for eps in (0.0, *self.cfg.epsilons):
            diagram = self._diagram(eps)
            # no window, no gap: bands of the decoupled strips only touch
            gaps = self._gaps(eps) if eps > 0 else []
            stem = f"bands_eps_{_tag(eps)}"
            self._csv(rec, f"{stem}.csv", *diagram.table())
            emit_svg_band_diagram(diagram, gaps, forecasts, self.out / f"{stem}.svg", self.cfg.energy_window)
            rec.outputs.append(f"{stem}.svg")

    def task_gaps(self, rec: TaskRecord) -> None:
        forecasts = self._forecasts()
        header = [
            "epsilon", "lower_band", "alpha_l", "alpha_r", "k_l", "k_r", "width", "refined",
            "nearest_E0", "forecast_alpha_l", "forecast_alpha_r",
        ]  # fmt: skip
        rows = []
        for eps in self.cfg.epsilons:
            gaps = self._gaps(eps)
            if not gaps:
                rec.findings.append(f"no gap at eps={eps:g}")
            for g in gaps:
                near = [math.nan] * 3
                if forecasts:
                    dist = [abs(f.E0 - g.centre) for f in forecasts]
                    i = int(np.argmin(dist))
                    if dist.count(dist[i]) > 1:
                        rec.findings.append(f"eps={eps:g}: gap equidistant from several crossings")
                    f = forecasts[i]
                    near = [f.E0, float(f.edge(eps, "l")), float(f.edge(eps, "r"))]
                rows.append([eps, g.lower_band, g.alpha_l, g.alpha_r, g.k_l, g.k_r, g.width, g.refined, *near])
        self._csv(rec, "gaps.csv", header, rows)

    def task_study(self, rec: TaskRecord) -> None:
        crossings = eligible_crossings(self.cfg)
        lo, hi = self.cfg.energy_window
        crossings = [c for c in crossings if lo < c.E0 < hi]
        if not crossings:
            raise TaskError(
                "no eligible crossing: need two ground-mode bands crossing at 0 < k0 < pi "
                "below 9/4 with slopes of opposite sign (|beta| < 1) and d_plus = pi"
            )
        crossing = crossings[0]
        if len(crossings) > 1:
            rec.findings.append(f"{len(crossings)} eligible crossings; studying the lowest, E0={crossing.E0:.6g}")
        grid = self.grid if not self.cfg.k_symmetric else k_grid(self.cfg.k_count, symmetric=False)
        study = epsilon_study(
            self.solver,
            crossing,
            self.cfg.epsilons,
            grid=grid,
            energy_window=self.cfg.energy_window,
            tol_k=self.cfg.k_tol,
        )
        rec.findings.extend(study.findings)
        self._csv(rec, "study.csv", *study.table())
        self._csv(rec, "fits.csv", *study.fit_table())
        fc = study.forecast
        summary = {
            "crossing": {"n": crossing.n, "m": crossing.m, "k0": crossing.k0, "E0": crossing.E0},
            "forecast": {
                "tau_l": fc.tau_l,
                "tau_r": fc.tau_r,
                "sigma_l": fc.sigma_l,
                "sigma_r": fc.sigma_r,
                "scaled_width": fc.scaled_width,
            },
            "scaled_widths": study.scaled_widths(),
            "findings": study.findings,
        }
        self._json(rec, "study.json", summary)

    def task_verify(self, rec: TaskRecord) -> None:
        grid = k_grid(self.cfg.k_count, symmetric=True)
        report = verify_shift_bound(self.solver, self.cfg.epsilons, grid=grid)
        self._csv(rec, "shift_bound.csv", *report.table())
        if report.min_shift < -1e-10:
            rec.findings.append(f"negative shift {report.min_shift:.3e}")
        if not report.bounded:
            rec.findings.append("scaled shift grows as eps decreases")

        idents = {}
        rng = np.random.default_rng(20240601)
        t = rng.uniform(-5, 5, 64)
        for c in eligible_crossings(self.cfg):
            idents[f"n={c.n},m={c.m}"] = identity_residuals(c, self.cfg.geometry, t)
        worst = max((v for d in idents.values() for v in d.values()), default=0.0)
        doc = {
            "shift_bound": {
                "min_shift": report.min_shift,
                "scaled_max": report.scaled_max,
                "bounded": report.bounded,
                "nested_monotone": report.nested_monotone,
            },
            "identities": idents,
            "identity_max_error": worst,
        }
        self._json(rec, "identities.json", doc)
        if report.min_shift < -1e-10 or not report.bounded or worst > 1e-12:
            raise TaskError("verification failed: see identities.json")

    def _json(self, rec: TaskRecord, name: str, doc) -> None:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(json.loads(canonical_json(doc)), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        rec.outputs.append(name)

    # -- driver ----------------------------------------------------------
    def run(self) -> RunManifest:
        self.out.mkdir(parents=True, exist_ok=True)
        t_start = time.perf_counter()
        records = []
        for name in self.cfg.tasks:
            rec = TaskRecord(name)
            t0 = time.perf_counter()
            try:
                getattr(self, f"task_{name}")(rec)
            except Exception as err:  # recorded; later tasks still run
                rec.status = "failed"
                rec.error = f"{type(err).__name__}: {err}"
                log.debug("task %s failed\n%s", name, traceback.format_exc())
            rec.seconds = time.perf_counter() - t0
            records.append(rec)
        s = self.solver
        total = s.hits + s.misses
        solver = {
            "lookups": total,
            "fresh_solves": s.misses,
            "cache_hits": s.hits,
            "cache_hit_rate": (s.hits / total) if total else 1.0,
            "mesh": self.cfg.mesh.as_dict(),
        }
        manifest = RunManifest(
            config_hash=self.cfg.hash,
            version=__version__,
            config=self.cfg.document,
            tasks=records,
            solver=solver,
            total_seconds=time.perf_counter() - t_start,
        )
        path = self.out / MANIFEST
        path.write_text(json.dumps(manifest.to_dict(self.out), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        manifest.path = path
        return manifest


def run_pipeline(config: RunConfig, cache_dir=None) -> RunManifest:
    return Pipeline(config, cache_dir).run()


# --- command line ---------------------------------------------------------


def _load_document(args) -> dict:
    doc: dict = {}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"malformed JSON: {err}") from None
        if not isinstance(doc, dict):
            raise ConfigError("schema violation at <root>: config must be a JSON object")
    geom = dict(doc.get("geometry", {}))
    if args.d is not None:
        geom["d"] = args.d
    if args.h is not None:
        geom["h"] = args.h
    if geom or "geometry" in doc:
        doc["geometry"] = geom
    if args.eps:
        doc["epsilons"] = args.eps
    if args.out:
        doc["output_dir"] = args.out
    return doc


def _report(out: Path) -> int:
    path = out / MANIFEST
    if not path.exists():
        print(f"no manifest in {out}", file=sys.stderr)
        return 1
    m = json.loads(path.read_text(encoding="utf-8"))
    print(f"config {m['config_hash'][:12]}  version {m['version']}")
    for t in m["tasks"]:
        print(f"  {t['name']:<9} {t['status']:<7} {len(t['outputs'])} files")
        for f in t["findings"]:
            print(f"      - {f}")
        if t["error"]:
            print(f"      ! {t['error']}")
    s = m["solver"]
    print(f"lookups {s['lookups']}, fresh solves {s['fresh_solves']}, cache hit rate {s['cache_hit_rate']:.0%}")
    fits = out / "fits.csv"
    if fits.exists():
        print(fits.read_text(encoding="utf-8"), end="")
    return 0 if all(t["status"] == "ok" for t in m["tasks"]) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="splitband", description="Band gaps of two strips coupled by periodic windows.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "analytic": "crossings, forecasts and the decoupled band diagram",
        "sweep": "finite element band diagrams for each window size",
        "gaps": "detect and refine spectral gaps",
        "study": "window-size study with inverse-log fits",
        "verify": "eigenvalue shift bound and identity checks",
        "run": "all tasks listed in the config",
        "report": "summarise the manifest of a previous run",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", help="JSON run configuration")
        s.add_argument("--d", type=float, help="width of the narrower strip")
        s.add_argument("--h", type=float, help="half period")
        s.add_argument("--eps", type=float, nargs="+", help="window half-widths")
        s.add_argument("--out", help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "report":
        out = args.out
        if out is None and args.config:
            try:
                out = json.loads(Path(args.config).read_text(encoding="utf-8")).get("output_dir")
            except (OSError, json.JSONDecodeError, AttributeError):
                out = None
        return _report(Path(out or "splitband_out"))
    try:
        doc = _load_document(args)
        if args.command != "run":
            doc["tasks"] = [args.command]
        cfg = from_dict(doc)
    except ConfigError as err:
        print(f"config rejected: {err}", file=sys.stderr)
        return 2
    manifest = run_pipeline(cfg)
    for t in manifest.tasks:
        line = f"{t.name}: {t.status} ({t.seconds:.1f} s)"
        if t.error:
            line += f" - {t.error}"
        print(line)
    return 0 if manifest.ok else 1


if __name__ == "__main__":
    sys.exit(main())
