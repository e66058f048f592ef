"""Result cache, CSV tables and SVG band diagrams."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np


def canonical_json(obj) -> str:
    """Key-sorted, whitespace-free JSON; floats keep their shortest round-trip repr."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def content_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


class ResultCache:
    """Content-addressed store of eigenvalue lists, one JSON file per key."""

    def __init__(self, root):
        self.root = Path(root)

    def _path(self, payload) -> Path:
        key = content_hash(payload)
        return self.root / key[:2] / f"{key}.json"

    def get(self, payload):
        path = self._path(payload)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            record = json.load(fh)
        if record.get("payload") != json.loads(canonical_json(payload)):
            return None
        return record["values"]

    def put(self, payload, values) -> None:
        path = self._path(payload)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(canonical_json({"payload": payload, "values": list(values)}), encoding="utf-8")
        os.replace(tmp, path)


def format_number(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def emit_csv(header: Sequence[str], rows: Iterable[Sequence], path) -> Path:
    """Write a rectangular table: UTF-8, LF endings, 17 significant digits."""
    path = Path(path)
    rows = [list(r) for r in rows]
    width = len(header)
    for r in rows:
        if len(r) != width:
            raise ValueError(f"row has {len(r)} fields, header has {width}")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_number(v) for v in r])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# --- SVG ---------------------------------------------------------------------

_W, _H = 720, 480
_ML, _MR, _MT, _MB = 70, 20, 30, 55
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _nice_ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    span = hi - lo
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    x = start
    while x <= hi + 1e-12 * span:
        out.append(round(x, 12))
        x += step
    return out


def _pi_ticks(lo: float, hi: float) -> list[tuple[float, str]]:
    labels = {-4: "-π", -3: "-3π/4", -2: "-π/2", -1: "-π/4", 0: "0", 1: "π/4", 2: "π/2", 3: "3π/4", 4: "π"}
    out = []
    for q, lab in labels.items():
        x = q * math.pi / 4
        if lo - 1e-12 <= x <= hi + 1e-12:
            out.append((x, lab))
    return out


def render_band_svg(
    k: Sequence[float],
    energies: np.ndarray,
    path,
    energy_window: tuple[float, float],
    gaps: Sequence = (),
    reference_lines: dict[str, float] | None = None,
    markers: Sequence[tuple[float, float]] = (),
    title: str = "",
    dashed: Sequence[bool] | None = None,
) -> Path:
    """Self-contained SVG: one polyline per band, shaded gaps, labelled reference lines.

    ``gaps`` are objects with ``alpha_l``/``alpha_r``; ``reference_lines``
    maps a label to an energy drawn as a horizontal dashed line.
    """
    k = np.asarray(k, dtype=float)
    energies = np.atleast_2d(np.asarray(energies, dtype=float))
    if k.size == 0 or energies.size == 0:
        raise ValueError("empty diagram")
    e_lo, e_hi = energy_window
    k_lo, k_hi = float(k.min()), float(k.max())
    if k_hi == k_lo:
        k_hi = k_lo + 1.0
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def sx(x):
        return _ML + (x - k_lo) / (k_hi - k_lo) * pw

    def sy(e):
        return _MT + (e_hi - e) / (e_hi - e_lo) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        "<defs>",
        f'<clipPath id="plot"><rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}"/></clipPath>',
        "</defs>",
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{_W / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    parts.append('<g clip-path="url(#plot)">')
    for g in gaps:
        y0, y1 = sy(g.alpha_r), sy(g.alpha_l)
        parts.append(
            f'<rect class="gap" x="{_ML}" y="{y0:.3f}" width="{pw}" height="{max(y1 - y0, 0.5):.3f}" '
            'fill="#f2c94c" fill-opacity="0.45"/>'
        )
    for i, band in enumerate(energies):
        pts = " ".join(f"{sx(x):.3f},{sy(e):.3f}" for x, e in zip(k, band))
        dash = ' stroke-dasharray="6,4"' if dashed is not None and dashed[i] else ""
        parts.append(
            f'<polyline class="band" points="{pts}" fill="none" stroke="{_COLORS[i % len(_COLORS)]}" '
            f'stroke-width="1.6"{dash}/>'
        )
    for label, e in (reference_lines or {}).items():
        y = sy(e)
        parts.append(
            f'<line class="reference" x1="{_ML}" x2="{_ML + pw}" y1="{y:.3f}" y2="{y:.3f}" '
            'stroke="black" stroke-width="0.8" stroke-dasharray="3,3"/>'
        )
        parts.append(f'<text x="{_ML + pw - 4}" y="{y - 3:.3f}" text-anchor="end" font-size="11">{escape(label)}</text>')
    for x, e in markers:
        parts.append(f'<circle class="marker" cx="{sx(x):.3f}" cy="{sy(e):.3f}" r="4" fill="black"/>')
    parts.append("</g>")

    # axes
    parts.append(f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for x, lab in _pi_ticks(k_lo, k_hi):
        px = sx(x)
        parts.append(f'<line x1="{px:.3f}" x2="{px:.3f}" y1="{_MT + ph}" y2="{_MT + ph + 5}" stroke="black"/>')
        parts.append(f'<text x="{px:.3f}" y="{_MT + ph + 18}" text-anchor="middle" font-size="11">{lab}</text>')
    for e in _nice_ticks(e_lo, e_hi):
        py = sy(e)
        parts.append(f'<line x1="{_ML - 5}" x2="{_ML}" y1="{py:.3f}" y2="{py:.3f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{py + 4:.3f}" text-anchor="end" font-size="11">{e:g}</text>')
    parts.append(f'<text x="{_ML + pw / 2:.1f}" y="{_H - 12}" text-anchor="middle" font-size="13">quasimomentum k</text>')
    parts.append(
        f'<text x="16" y="{_MT + ph / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {_MT + ph / 2:.1f})">energy E</text>'
    )
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path


def emit_svg_band_diagram(diagram, gaps, forecasts, path, energy_window=None, title=None) -> Path:
    """SVG of a :class:`~splitband.explorer.BandDiagram` with its gaps.

    ``forecasts``: optional list of gap forecasts; each adds the crossing
    energy and, for ``eps > 0``, the two forecast edges as reference lines.
    """
    if energy_window is None:
        energy_window = (float(diagram.energies.min()), float(diagram.energies.max()))
    lines = {}
    for i, f in enumerate(forecasts or ()):
        tag = "" if len(forecasts) == 1 else f" #{i + 1}"
        lines[f"E0{tag}"] = f.E0
        if 0 < diagram.eps < 1:
            lines[f"alpha_l forecast{tag}"] = float(f.edge(diagram.eps, "l"))
            lines[f"alpha_r forecast{tag}"] = float(f.edge(diagram.eps, "r"))
    if title is None:
        title = f"d={diagram.geometry.d_minus:g}, h={diagram.geometry.h:g}, eps={diagram.eps:g}"
    return render_band_svg(
        diagram.k, diagram.energies, path, energy_window, gaps=gaps, reference_lines=lines, title=title
    )
