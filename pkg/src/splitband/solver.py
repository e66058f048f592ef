"""Finite element Bloch eigenproblem on the period cell.

The fiber form ``int |(i d1 - k/(2h)) u|^2 + |d2 u|^2`` is split as
``K + s C + s^2 B`` with ``s = k/(2h)``, so the k-independent pieces are
assembled once per mesh and only recombined per quasimomentum. The
window enters solely through the degree-of-freedom map (glued interface
pairs), periodicity through plain identification of the side nodes.
"""

from __future__ import annotations

import gc
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg  # noqa: F401  (sp.linalg.norm)
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import LinearOperator, eigs, splu

from .analytic import ModeIndex, WaveguideGeometry, transverse_energy, unperturbed_eigenvalue
from .mesh import CellMesh, MeshConfig, build_mesh


class EigenSolveError(RuntimeError):
    """Raised when the eigensolver does not meet its residual contract."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# --- reference element ------------------------------------------------------

# 6-point rule exact for degree 4 on the unit triangle (weights sum to 1/2)
_A, _WA = 0.445948490915965, 0.223381589678011
_B, _WB = 0.091576213509771, 0.109951743655322
_QP = np.array(
    [[_A, _A], [1 - 2 * _A, _A], [_A, 1 - 2 * _A], [_B, _B], [1 - 2 * _B, _B], [_B, 1 - 2 * _B]]
)
_QW = 0.5 * np.array([_WA, _WA, _WA, _WB, _WB, _WB])


def _basis(order: int, xi: np.ndarray, eta: np.ndarray):
    """Values (q, n) and gradients (q, 2, n) of the Lagrange basis."""
    l0, l1, l2 = 1 - xi - eta, xi, eta
    one = np.ones_like(xi)
    zero = np.zeros_like(xi)
    if order == 1:
        val = np.stack([l0, l1, l2], axis=1)
        g_xi = np.stack([-one, one, zero], axis=1)
        g_eta = np.stack([-one, zero, one], axis=1)
    else:
        val = np.stack(
            [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0],
            axis=1,
        )
        g_xi = np.stack(
            [-(4 * l0 - 1), 4 * l1 - 1, zero, 4 * (l0 - l1), 4 * l2, -4 * l2], axis=1
        )
        g_eta = np.stack(
            [-(4 * l0 - 1), zero, 4 * l2 - 1, -4 * l1, 4 * l1, 4 * (l0 - l2)], axis=1
        )
    return val, np.stack([g_xi, g_eta], axis=1)


def _reference_tables(order: int):
    val, grad = _basis(order, _QP[:, 0], _QP[:, 1])
    mass = np.einsum("q,qi,qj->ij", _QW, val, val)
    stiff = np.einsum("q,qai,qbj->abij", _QW, grad, grad)
    drift = np.einsum("q,qi,qaj->aij", _QW, val, grad)
    return mass, stiff, drift


def assemble_full(mesh: CellMesh) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """Unreduced ``(K, B, D)``: Laplacian stiffness, mass, ``D_ij = int phi_i d1 phi_j``.

    Cached on the mesh layout (shared by all window variants).
    """
    if "full" in mesh._store:
        return mesh._store["full"]
    mref, sref, dref = _reference_tables(mesh.order)
    el = mesh.elements
    p = mesh.nodes[el[:, :3]]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns d x / d xi
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(det <= 0):
        raise ValueError("mesh has degenerate or inverted elements")
    inv = np.linalg.inv(jac)  # inv[e, a, c] = d xi_a / d x_c
    metric = np.einsum("eac,ebc->eab", inv, inv)
    area = np.abs(det)
    ke = area[:, None, None] * np.einsum("eab,abij->eij", metric, sref)
    me = area[:, None, None] * mref[None]
    de = area[:, None, None] * np.einsum("ea,aij->eij", inv[:, :, 0], dref)

    n = mesh.n_nodes
    rows = np.repeat(el, el.shape[1], axis=1).ravel()
    cols = np.tile(el, (1, el.shape[1])).ravel()

    def build(vals):
        return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(n, n))

    out = (build(ke), build(me), build(de))
    mesh._store["full"] = out
    return out


def dof_map(mesh: CellMesh) -> tuple[np.ndarray, int]:
    """Map node -> reduced dof (``-1`` for Dirichlet nodes) and the dof count.

    Periodic side pairs and glued window pairs are merged as connected
    components; a component touching the outer lines is eliminated.
    """
    n = mesh.n_nodes
    shared = mesh.shared
    a = np.concatenate([mesh.periodic_right, mesh.iface_bottom[shared]])
    b = np.concatenate([mesh.periodic_left, mesh.iface_top[shared]])
    graph = sp.coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    dead = np.zeros(labels.max() + 1, dtype=bool)
    dead[labels[mesh.dirichlet]] = True
    alive = np.flatnonzero(~dead)
    renum = -np.ones(len(dead), dtype=np.int64)
    renum[alive] = np.arange(len(alive))
    return renum[labels], len(alive)


def _reduction(mesh: CellMesh) -> sp.csr_matrix:
    idx, m = dof_map(mesh)
    keep = np.flatnonzero(idx >= 0)
    return sp.csr_matrix((np.ones(len(keep)), (keep, idx[keep])), shape=(mesh.n_nodes, m))


def reduced_operators(mesh: CellMesh) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """``(K, G, B)`` after gluing and Dirichlet elimination, ``G = D^T - D``."""
    key = ("reduced", float(mesh.window))
    if key in mesh._store:
        return mesh._store[key]
    k_full, m_full, d_full = assemble_full(mesh)
    p = _reduction(mesh)
    pt = p.T.tocsr()
    kr = (pt @ k_full @ p).tocsr()
    br = (pt @ m_full @ p).tocsr()
    gr = (pt @ (d_full.T - d_full) @ p).tocsr()
    kr = 0.5 * (kr + kr.T)
    br = 0.5 * (br + br.T)
    gr = 0.5 * (gr - gr.T)
    out = (kr.tocsr(), gr.tocsr(), br.tocsr())
    mesh._store[key] = out
    return out


@dataclass(frozen=True)
class DiscreteBlochForm:
    """Hermitian pencil ``A(k) x = lambda B x`` on one mesh."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    k: float
    n_dof: int
    lower_bound: float = 0.0


def assemble(mesh: CellMesh, k: float) -> DiscreteBlochForm:
    kr, gr, br = reduced_operators(mesh)
    s = k / (2 * mesh.geom.h)
    a = (kr + (1j * s) * gr + (s * s) * br).tocsr()
    g = mesh.geom
    # gluing only shrinks the trial space, so the decoupled ground energy
    # of the wider strip bounds every window configuration from below
    floor = (math.pi / (2 * max(g.d_minus, g.d_plus))) ** 2
    return DiscreteBlochForm(A=a, B=br, k=float(k), n_dof=a.shape[0], lower_bound=floor)


@dataclass
class EigenSolveResult:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    eigenvectors: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def _residuals(a, b, vals, vecs) -> np.ndarray:
    """Normwise backward errors ``|A x - l B x| / ((|A|_1 + |l| |B|_1) |x|)``."""
    na = sp.linalg.norm(a, 1)
    nb = sp.linalg.norm(b, 1)
    out = np.empty(len(vals))
    for i, lam in enumerate(vals):
        x = vecs[:, i]
        r = a @ x - lam * (b @ x)
        out[i] = np.linalg.norm(r) / ((na + abs(lam) * nb) * np.linalg.norm(x))
    return out


def solve_lowest(
    form: DiscreteBlochForm,
    count: int,
    tol: float = 1e-10,
    sigma: float | None = None,
    dense_threshold: int = 2000,
    return_vectors: bool = False,
    max_restarts: int = 3,
) -> EigenSolveResult:
    """The ``count`` smallest eigenvalues of the pencil, ascending.

    Small systems are solved densely; otherwise shift-invert Arnoldi
    around ``sigma`` (default: just below the decoupled ground energy,
    which bounds the spectrum from below). Each pair must have a normwise
    backward error (see :func:`_residuals`) not above ``tol``.
    """
    n = form.n_dof
    if count < 1 or count >= n - 1:
        raise ValueError(f"count must be in [1, {n - 2}], got {count}")
    if not (1e-14 < tol < 1e-2):
        raise ValueError(f"tol must lie in (1e-14, 1e-2), got {tol}")
    a, b = form.A, form.B
    info: dict = {"n_dof": n}
    if n <= dense_threshold:
        vals, vecs = scipy.linalg.eigh(
            a.toarray(), b.toarray(), subset_by_index=[0, count - 1]
        )
        info["method"] = "dense"
    else:
        shift = 0.9 * form.lower_bound if sigma is None else sigma
        lu = splu((a - shift * b).tocsc().astype(complex))
        op = LinearOperator((n, n), matvec=lu.solve, dtype=complex)
        v0 = np.random.default_rng(12345).standard_normal(n) + 0j
        ncv = min(n - 1, max(2 * count + 1, 24))
        vals = vecs = None
        for attempt in range(max_restarts):
            try:
                vals, vecs = eigs(
                    a, k=count, M=b, sigma=shift, OPinv=op, v0=v0, ncv=ncv,
                    tol=tol * 1e-3, which="LM",
                )
                break
            except Exception as exc:  # ARPACK non-convergence
                info.setdefault("failures", []).append(repr(exc))
                ncv = min(n - 1, 2 * ncv)
        # ARPACK's wrapper leaves the factor and work arrays in reference
        # cycles; reclaim them now rather than at the next full collection
        del lu, op
        gc.collect(1)
        if vals is None:
            raise EigenSolveError("shift-invert iteration did not converge", info)
        info.update(method="shift-invert", sigma=shift, ncv=ncv)
        imag = float(np.max(np.abs(vals.imag)))
        info["max_imag"] = imag
        order = np.argsort(vals.real)
        vals = vals.real[order]
        vecs = vecs[:, order]
    res = _residuals(a, b, vals, vecs)
    info["max_residual"] = float(res.max())
    if np.any(res > tol):
        raise EigenSolveError(
            f"residual {res.max():.3e} exceeds tol {tol:.1e} at k={form.k}", info
        )
    return EigenSolveResult(
        eigenvalues=np.asarray(vals, dtype=float),
        residuals=res,
        eigenvectors=vecs if return_vectors else None,
        info=info,
    )


def _lowest_values(generate, count: int) -> np.ndarray:
    """Smallest ``count`` values of a family enumerated below growing caps."""
    cap = 1.0
    while True:
        vals = sorted(generate(cap))
        if len(vals) >= count:
            return np.array(vals[:count])
        cap *= 2.0


def reference_spectrum(geom: WaveguideGeometry, k: float, count: int) -> np.ndarray:
    """Smallest ``count`` eigenvalues of the decoupled cell (both strips merged)."""

    def below(cap):
        out = []
        for branch in ("plus", "minus"):
            p = 0
            while transverse_energy(geom, branch, p) <= cap:
                room = math.sqrt(cap - transverse_energy(geom, branch, p)) * 2 * geom.h
                m_lo = math.floor((-room - k) / (2 * math.pi))
                m_hi = math.ceil((room - k) / (2 * math.pi))
                for m in range(m_lo, m_hi + 1):
                    e = unperturbed_eigenvalue(geom, ModeIndex(branch, m, p), k)
                    if e <= cap:
                        out.append(e)
                p += 1
        return out

    return _lowest_values(below, count)


def open_window_spectrum(geom: WaveguideGeometry, k: float, count: int) -> np.ndarray:
    """Eigenvalues with the whole interface open: one Dirichlet strip of width ``d + d_plus``."""
    width = geom.d_minus + geom.d_plus

    def below(cap):
        out = []
        j = 1
        while (math.pi * j / width) ** 2 <= cap:
            base = (math.pi * j / width) ** 2
            room = math.sqrt(cap - base) * 2 * geom.h
            for m in range(math.floor((-room - k) / (2 * math.pi)), math.ceil((room - k) / (2 * math.pi)) + 1):
                e = ((k + 2 * math.pi * m) / (2 * geom.h)) ** 2 + base
                if e <= cap:
                    out.append(e)
            j += 1
        return out

    return _lowest_values(below, count)


@dataclass
class ConvergenceStudy:
    levels: list[int]
    n_dof: list[int]
    eigenvalues: np.ndarray  # (levels, count)
    reference: np.ndarray | None
    orders: np.ndarray  # (levels - 1 or levels - 2, count)

    def rows(self) -> list[dict]:
        out = []
        for i, lev in enumerate(self.levels):
            row = {"level": lev, "n_dof": self.n_dof[i], "eigenvalues": self.eigenvalues[i].tolist()}
            if self.reference is not None:
                row["errors"] = np.abs(self.eigenvalues[i] - self.reference).tolist()
            out.append(row)
        return out


def convergence_study(
    geom: WaveguideGeometry,
    eps: float,
    k: float,
    refinement_levels=(1, 2, 4),
    base: MeshConfig = MeshConfig(n1=8, n2=4, grading=1.0, order=2),
    count: int = 4,
    reference: np.ndarray | None = None,
) -> ConvergenceStudy:
    """Eigenvalues on successively refined meshes and observed orders.

    With ``eps = 0`` (or an explicit ``reference``) orders come from the
    error against the exact values; otherwise from Richardson triples.
    Orders are measured in powers of the mesh size.
    """
    levels = list(refinement_levels)
    if len(levels) < 3:
        raise ValueError("need at least 3 refinement levels")
    if eps >= geom.h:
        geom0 = geom.with_window(0.0)
    else:
        geom0 = geom.with_window(eps)
    vals, dofs = [], []
    for lev in levels:
        mesh = build_mesh(geom0, base.refined(lev))
        if eps >= geom.h:
            mesh = mesh.with_window(geom.h)
        form = assemble(mesh, k)
        r = solve_lowest(form, count)
        vals.append(r.eigenvalues)
        dofs.append(form.n_dof)
    vals = np.array(vals)
    if reference is None and eps == 0:
        reference = reference_spectrum(geom, k, count)
    ratios = np.array([levels[i + 1] / levels[i] for i in range(len(levels) - 1)])
    if reference is not None:
        err = np.abs(vals - reference[None, :])
        orders = np.log(err[:-1] / err[1:]) / np.log(ratios)[:, None]
    else:
        diff = np.abs(np.diff(vals, axis=0))
        orders = np.log(diff[:-1] / diff[1:]) / np.log(ratios[1:])[:, None]
    return ConvergenceStudy(levels, dofs, vals, reference, orders)
