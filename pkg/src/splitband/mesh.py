"""Structured, graded triangulation of the period cell.

The two strips are meshed separately on a common set of vertical lines,
so every interface abscissa carries one node per strip. Which of those
pairs are glued (the window) is decided later by :class:`CellMesh`; the
node layout itself never depends on the window, which makes meshes for
different window widths nested finite element spaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .analytic import WaveguideGeometry

# relative tolerance for "same abscissa" decisions
_XTOL = 1e-12


@dataclass(frozen=True)
class MeshConfig:
    """Resolution of the cell mesh.

    ``n1`` uniform intervals over the period and ``n2`` per strip away from
    the interface; near the window the spacing follows a geometric grading
    with ratio ``grading`` down to a quarter of the smallest meshed window.
    """

    n1: int = 20
    n2: int = 8
    grading: float = 0.7
    order: int = 2

    def __post_init__(self) -> None:
        if self.n1 < 4 or self.n2 < 4:
            raise ValueError(f"resolution must be >= 4 in each direction, got ({self.n1}, {self.n2})")
        if not (0 < self.grading <= 1):
            raise ValueError(f"grading factor must lie in (0, 1], got {self.grading}")
        if self.order not in (1, 2):
            raise ValueError(f"element order must be 1 or 2, got {self.order}")

    def refined(self, factor: int) -> "MeshConfig":
        return MeshConfig(self.n1 * factor, self.n2 * factor, self.grading, self.order)

    def as_dict(self) -> dict:
        return {"n1": self.n1, "n2": self.n2, "grading": self.grading, "order": self.order}


def _local_size(x: float, core: float, coarse: float, grading: float) -> float:
    if grading >= 1 or core <= 0:
        return coarse
    return min(coarse, max(core, (1 / grading - 1) * abs(x)))


def graded_axis(
    lo: float,
    hi: float,
    n_uniform: int,
    core: float,
    grading: float,
    anchors: Iterable[float] = (),
) -> np.ndarray:
    """Sorted breakpoints on ``[lo, hi]``, geometrically graded towards 0.

    ``anchors`` are always kept (they are interface tips, 0, the ends);
    every nonzero anchor ``a`` gets neighbours no farther than ``|a|/4``.
    """
    coarse = (hi - lo) / n_uniform
    tol = _XTOL * (hi - lo)
    protected = {lo, hi}
    protected.update(a for a in anchors if lo - tol <= a <= hi + tol)
    if lo <= 0 <= hi:
        protected.add(0.0)
    pts = set(np.linspace(lo, hi, n_uniform + 1).tolist())
    if grading < 1 and core > 0:
        r = core
        while r < coarse:
            for s in (r, -r):
                if lo < s < hi:
                    pts.add(s)
            r /= grading
    keep_prot = np.array(sorted(protected))

    out = []
    for x in sorted(pts | protected):
        if x in protected:
            out.append(x)
            continue
        near = np.min(np.abs(keep_prot - x))
        if near < 0.1 * _local_size(x, core, coarse, grading):
            continue
        out.append(x)
    axis = np.array(sorted(set(out)))

    # tips need neighbours within |a|/4
    extra = []
    for a in protected:
        if a == 0 or a in (lo, hi):
            continue
        i = int(np.argmin(np.abs(axis - a)))
        lim = abs(a) / 4
        if i + 1 < len(axis) and axis[i + 1] - a > lim:
            extra.append(a + lim)
        if i > 0 and a - axis[i - 1] > lim:
            extra.append(a - lim)
    if extra:
        axis = np.array(sorted(set(axis.tolist()) | set(extra)))
    if np.any(np.diff(axis) <= tol):
        raise ValueError("grading produced degenerate elements")
    return axis


def _with_midpoints(axis: np.ndarray) -> np.ndarray:
    out = np.empty(2 * len(axis) - 1)
    out[0::2] = axis
    out[1::2] = 0.5 * (axis[:-1] + axis[1:])
    return out


def _strip_triangles(nx: int, ny: int, order: int, offset: int) -> np.ndarray:
    """Triangles of a tensor grid with ``nx x ny`` cells (vertex counts ``+1``).

    Node ``(i, j)`` of the (refined, for order 2) grid has index
    ``offset + j * width + i``. P2 local order: three vertices, then the
    midpoints of edges 01, 12, 20.
    """
    step = order
    width = nx * step + 1
    i, j = np.meshgrid(np.arange(nx) * step, np.arange(ny) * step, indexing="ij")
    i = i.ravel()
    j = j.ravel()

    def idx(di, dj):
        return offset + (j + dj) * width + (i + di)

    if order == 1:
        t1 = np.stack([idx(0, 0), idx(1, 0), idx(1, 1)], axis=1)
        t2 = np.stack([idx(0, 0), idx(1, 1), idx(0, 1)], axis=1)
    else:
        t1 = np.stack(
            [idx(0, 0), idx(2, 0), idx(2, 2), idx(1, 0), idx(2, 1), idx(1, 1)], axis=1
        )
        t2 = np.stack(
            [idx(0, 0), idx(2, 2), idx(0, 2), idx(1, 1), idx(1, 2), idx(0, 1)], axis=1
        )
    return np.concatenate([t1, t2], axis=0)


class CellMesh:
    """Triangulated period cell with a switchable window on the interface.

    Attributes are plain arrays: ``nodes`` (N, 2), ``elements`` (T, 3 or 6),
    ``iface_top`` / ``iface_bottom`` (node pairs on ``x2 = 0`` sorted by
    ``x1``), ``periodic_left`` / ``periodic_right`` (node pairs on
    ``x1 = -h`` and ``x1 = +h``), ``dirichlet`` (nodes on the outer lines).
    """

    def __init__(
        self,
        geom: WaveguideGeometry,
        config: MeshConfig,
        nodes: np.ndarray,
        elements: np.ndarray,
        x1_lines: np.ndarray,
        iface_top: np.ndarray,
        iface_bottom: np.ndarray,
        periodic_left: np.ndarray,
        periodic_right: np.ndarray,
        dirichlet: np.ndarray,
        tips: tuple[float, ...],
        window: float,
        store: dict | None = None,
    ):
        self.geom = geom
        self.config = config
        self.order = config.order
        self.nodes = nodes
        self.elements = elements
        self.x1_lines = x1_lines
        self.iface_top = iface_top
        self.iface_bottom = iface_bottom
        self.periodic_left = periodic_left
        self.periodic_right = periodic_right
        self.dirichlet = dirichlet
        self.tips = tips
        self.window = window
        # assembled matrices shared by all window variants of this layout
        self._store = {} if store is None else store

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def iface_x1(self) -> np.ndarray:
        return self.nodes[self.iface_top, 0]

    @property
    def shared(self) -> np.ndarray:
        """Mask over interface pairs that are glued (inside the closed window)."""
        h = self.geom.h
        if self.window >= h:
            return np.ones(len(self.iface_top), dtype=bool)
        if self.window <= 0:
            return np.zeros(len(self.iface_top), dtype=bool)
        return np.abs(self.iface_x1) <= self.window * (1 + 1e-9)

    def with_window(self, eps: float) -> "CellMesh":
        """Same nodes, window half-width ``eps``.

        ``eps`` must be 0, ``>= h`` (fully open interface) or one of the
        vertex abscissae so that the window ends on nodes.
        """
        h = self.geom.h
        if eps < 0:
            raise ValueError(f"window half-width must be >= 0, got {eps}")
        if 0 < eps < h:
            if np.min(np.abs(self.x1_lines - eps)) > _XTOL * h * 10:
                raise ValueError(f"eps={eps} is not a vertex abscissa of this mesh")
            geom = self.geom.with_window(eps)
        else:
            geom = self.geom.with_window(0.0)
        return CellMesh(
            geom,
            self.config,
            self.nodes,
            self.elements,
            self.x1_lines,
            self.iface_top,
            self.iface_bottom,
            self.periodic_left,
            self.periodic_right,
            self.dirichlet,
            self.tips,
            min(eps, h),
            self._store,
        )

    def tip_edge_lengths(self, tip: float) -> tuple[float, float]:
        """Lengths of the interface edges left and right of the vertex at ``tip``."""
        xs = self.x1_lines
        i = int(np.argmin(np.abs(xs - tip)))
        left = xs[i] - xs[i - 1] if i > 0 else math.inf
        right = xs[i + 1] - xs[i] if i + 1 < len(xs) else math.inf
        return float(left), float(right)

    def summary(self) -> dict:
        return {
            "nodes": int(self.n_nodes),
            "elements": int(len(self.elements)),
            "order": self.order,
            "x1_lines": int(len(self.x1_lines)),
            "window": self.window,
            "tips": list(self.tips),
        }

    def dump(self, path) -> None:
        """Plain-text dump: node table then element table."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# nodes {self.n_nodes}\n")
            for x, y in self.nodes:
                fh.write(f"{x:.17g} {y:.17g}\n")
            fh.write(f"# elements {len(self.elements)} order {self.order}\n")
            for row in self.elements:
                fh.write(" ".join(str(int(v)) for v in row) + "\n")


def build_mesh(
    geom: WaveguideGeometry,
    config: MeshConfig = MeshConfig(),
    tips: Sequence[float] | None = None,
) -> CellMesh:
    """Mesh the cell of ``geom`` with vertices at every window tip in ``tips``.

    ``tips`` defaults to the geometry's own window half-width; pass a list
    of half-widths to get one node layout usable for all of them.
    """
    h = geom.h
    if tips is None:
        tips = (geom.eps,) if geom.eps > 0 else ()
    tips = tuple(sorted({float(t) for t in tips if t > 0}))
    for t in tips:
        if t >= h:
            raise ValueError(f"window half-width {t} must be < h={h}")
    if geom.eps > 0 and geom.eps not in tips:
        tips = tuple(sorted(tips + (geom.eps,)))
    core = min(tips) / 4 if tips else 0.0
    grading = config.grading if tips else 1.0

    anchors = [s * t for t in tips for s in (1, -1)]
    x1 = graded_axis(-h, h, config.n1, core, grading, anchors)
    y_top = graded_axis(0.0, geom.d_plus, config.n2, core, grading)
    y_bot = graded_axis(-geom.d_minus, 0.0, config.n2, core, grading)

    order = config.order
    xs = _with_midpoints(x1) if order == 2 else x1
    yt = _with_midpoints(y_top) if order == 2 else y_top
    yb = _with_midpoints(y_bot) if order == 2 else y_bot
    nx = len(xs)

    def grid(ys):
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    top = grid(yt)
    bot = grid(yb)
    off = len(top)
    nodes = np.concatenate([top, bot], axis=0)
    elements = np.concatenate(
        [
            _strip_triangles(len(x1) - 1, len(y_top) - 1, order, 0),
            _strip_triangles(len(x1) - 1, len(y_bot) - 1, order, off),
        ]
    )

    cols = np.arange(nx)
    iface_top = cols  # row j = 0 of the top strip is x2 = 0
    iface_bottom = off + (len(yb) - 1) * nx + cols  # last row of the bottom strip

    rows_t = np.arange(len(yt))
    rows_b = np.arange(len(yb))
    periodic_left = np.concatenate([rows_t * nx, off + rows_b * nx])
    periodic_right = np.concatenate([rows_t * nx + nx - 1, off + rows_b * nx + nx - 1])
    dirichlet = np.concatenate([(len(yt) - 1) * nx + cols, off + cols])

    return CellMesh(
        geom,
        config,
        nodes,
        elements,
        x1,
        iface_top,
        iface_bottom,
        periodic_left,
        periodic_right,
        dirichlet,
        tips,
        geom.eps,
    )
