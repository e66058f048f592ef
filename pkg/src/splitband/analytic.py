"""Closed-form band theory for two strips coupled through small periodic windows.

Unperturbed dispersion laws of the decoupled strips, enumeration of the
band crossings that open a gap once the windows are cut, and the
leading-order (in ``1/|ln eps|``) forecasts for the gap edges and for the
quasimomenta at which they are attained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

Branch = Literal["plus", "minus"]

#: Energies below this value only meet transverse ground modes (p = 0).
GROUND_MODE_CAP = 9.0 / 4.0


@dataclass(frozen=True)
class WaveguideGeometry:
    """Widths of the two strips, half-period of the windows and window half-width.

    The unit cell is ``(-h, h] x (-d_minus, d_plus)``; the upper strip is
    ``0 < x2 < d_plus`` and the lower one ``-d_minus < x2 < 0``.
    """

    d_minus: float
    half_period: float
    window_half_width: float = 0.0
    d_plus: float = math.pi

    def __post_init__(self) -> None:
        if not (self.d_minus > 0):
            raise ValueError(f"d > 0 violated (d={self.d_minus})")
        if not (self.d_minus < self.d_plus):
            raise ValueError(
                f"d < d_plus violated (d={self.d_minus}, d_plus={self.d_plus})"
            )
        if not (self.half_period > 0):
            raise ValueError(f"h > 0 violated (h={self.half_period})")
        eps = self.window_half_width
        if not (0 <= eps < self.half_period):
            raise ValueError(
                f"0 <= eps < h violated (eps={eps}, h={self.half_period})"
            )

    @property
    def d(self) -> float:
        return self.d_minus

    @property
    def h(self) -> float:
        return self.half_period

    @property
    def eps(self) -> float:
        return self.window_half_width

    @property
    def zeta(self) -> float:
        """Ratio ``d_plus / d_minus`` (equals ``pi / d`` in the normalized setting)."""
        return self.d_plus / self.d_minus

    def width(self, branch: Branch) -> float:
        if branch == "plus":
            return self.d_plus
        if branch == "minus":
            return self.d_minus
        raise ValueError(f"unknown branch {branch!r}")

    def with_window(self, eps: float) -> "WaveguideGeometry":
        return WaveguideGeometry(self.d_minus, self.half_period, eps, self.d_plus)


@dataclass(frozen=True)
class ModeIndex:
    branch: Branch
    m: int
    p: int = 0

    def __post_init__(self) -> None:
        if self.branch not in ("plus", "minus"):
            raise ValueError(f"unknown branch {self.branch!r}")
        if self.p < 0:
            raise ValueError(f"transverse index must be >= 0, got {self.p}")


def transverse_energy(geom: WaveguideGeometry, branch: Branch, p: int = 0) -> float:
    return (math.pi / geom.width(branch)) ** 2 * (p + 0.5) ** 2


def unperturbed_eigenvalue(geom: WaveguideGeometry, mode: ModeIndex, k):
    """Band function ``E^{+-}_{m,p}(k)`` of the decoupled strips.

    ``k`` may be a scalar or an array; no folding into the Brillouin zone
    is applied.
    """
    q = (np.asarray(k, dtype=float) + 2.0 * math.pi * mode.m) / (2.0 * geom.h)
    out = q * q + transverse_energy(geom, mode.branch, mode.p)
    return float(out) if np.ndim(out) == 0 else out


def band_slope(geom: WaveguideGeometry, mode: ModeIndex, k: float) -> float:
    """Derivative of the band function in ``k``."""
    return (k + 2.0 * math.pi * mode.m) / (2.0 * geom.h**2)


def evaluate_mode(
    geom: WaveguideGeometry, mode: ModeIndex, k: float, point: tuple[float, float]
) -> complex:
    """Eigenfunction of the decoupled strip ``mode.branch`` at ``point``.

    ``k`` does not enter the profile (the Bloch factor is carried by the
    shifted derivative of the fiber operator), it is accepted for symmetry
    with :func:`unperturbed_eigenvalue`.
    """
    x1, x2 = point
    if mode.branch == "plus" and not (0.0 <= x2 <= geom.d_plus):
        raise ValueError(f"point {point} is not in the upper strip")
    if mode.branch == "minus" and not (-geom.d_minus <= x2 <= 0.0):
        raise ValueError(f"point {point} is not in the lower strip")
    width = geom.width(mode.branch)
    if abs(abs(x2) - width) == 0.0:
        return 0j
    phase = np.exp(1j * math.pi * mode.m * x1 / geom.h)
    return complex(phase * math.cos(math.pi / width * (mode.p + 0.5) * abs(x2)))


def band_range(geom: WaveguideGeometry, mode: ModeIndex) -> tuple[float, float]:
    """Closed range of ``E^{+-}_{m,p}`` over ``k in [-pi, pi]``."""
    lo_q = 0.0 if mode.m == 0 else (2 * abs(mode.m) - 1) * math.pi / (2 * geom.h)
    hi_q = (2 * abs(mode.m) + 1) * math.pi / (2 * geom.h)
    base = transverse_energy(geom, mode.branch, mode.p)
    return lo_q**2 + base, hi_q**2 + base


def bands_containing(geom: WaveguideGeometry, energy: float) -> list[ModeIndex]:
    """All decoupled bands whose range contains ``energy``."""
    found = []
    for branch in ("plus", "minus"):
        p = 0
        while transverse_energy(geom, branch, p) <= energy:
            m = 0
            while True:
                lo_p, hi_p = band_range(geom, ModeIndex(branch, m, p))
                if lo_p > energy:
                    break
                if energy <= hi_p:
                    found.append(ModeIndex(branch, m, p))
                    if m != 0:
                        found.append(ModeIndex(branch, -m, p))
                m += 1
            p += 1
    return found


def count_bands_containing(geom: WaveguideGeometry, energy: float) -> int:
    """Spectral multiplicity counter: how many decoupled bands cover ``energy``."""
    return len(bands_containing(geom, energy))


@dataclass(frozen=True)
class BandCrossing:
    """Crossing of the plus band ``n`` and the minus band ``m`` (both p = 0) at ``k0``."""

    n: int
    m: int
    k0: float
    E0: float
    zeta: float
    beta: float
    beta1: float
    beta2: float
    kappa: int = 0

    @property
    def kappa_exceeds_four(self) -> bool:
        return self.kappa > 4


def _crossing_abscissa(geom: WaveguideGeometry, n: int, m: int) -> float:
    delta = transverse_energy(geom, "minus") - transverse_energy(geom, "plus")
    return geom.h**2 * delta / (math.pi * (n - m)) - math.pi * (n + m)


def make_crossing(geom: WaveguideGeometry, n: int, m: int, k0: float) -> BandCrossing:
    h = geom.h
    beta1 = (2 * math.pi * n + k0) / h
    beta2 = -(2 * math.pi * m + k0) / h
    E0 = unperturbed_eigenvalue(geom, ModeIndex("plus", n), k0)
    return BandCrossing(
        n=n,
        m=m,
        k0=k0,
        E0=E0,
        zeta=geom.zeta,
        beta=(math.pi * (m + n) + k0) / (math.pi * (n - m)),
        beta1=beta1,
        beta2=beta2,
        kappa=count_bands_containing(geom, E0),
    )


def find_crossings(
    geom: WaveguideGeometry, energy_cap: float | None = None
) -> list[BandCrossing]:
    """Interior crossings ``k0 in (0, pi)`` with opposite slopes below ``energy_cap``.

    The default cap is 9/4, lowered to the first excited transverse level
    when a wide upper strip brings it below that. Mirror crossings
    ``(-n, -m, -k0)`` are implied by evenness and not listed.
    """
    p1_floor = min(transverse_energy(geom, b, 1) for b in ("plus", "minus"))
    if energy_cap is None:
        energy_cap = min(GROUND_MODE_CAP, p1_floor)
    if energy_cap > p1_floor:
        raise ValueError(
            f"energy_cap={energy_cap} reaches p >= 1 bands (from {p1_floor}); "
            "only ground-mode crossings are supported"
        )
    if energy_cap <= 0:
        return []
    # |k0 + 2 pi j| / (2h) < sqrt(cap) with k0 in (0, pi)
    j_max = int(math.ceil((2 * geom.h * math.sqrt(energy_cap) + math.pi) / (2 * math.pi)))
    out = []
    for n in range(-j_max, j_max + 1):
        for m in range(-j_max, j_max + 1):
            if n == m:
                continue
            k0 = _crossing_abscissa(geom, n, m)
            if not (0.0 < k0 < math.pi):
                continue
            if not ((k0 + 2 * math.pi * n) * (k0 + 2 * math.pi * m) < 0):
                continue
            c = make_crossing(geom, n, m, k0)
            if c.E0 < energy_cap:
                out.append(c)
    out.sort(key=lambda c: (c.E0, c.n, c.m))
    return out


def _require_normalized(geom: WaveguideGeometry) -> None:
    if not math.isclose(geom.d_plus, math.pi, rel_tol=0, abs_tol=1e-15):
        raise ValueError("gap forecasts assume d_plus = pi")


def _require_beta(crossing: BandCrossing) -> None:
    if not abs(crossing.beta) < 1:
        raise ValueError(
            f"|beta| = {abs(crossing.beta)} >= 1: slopes at the crossing do not have opposite signs"
        )


@dataclass(frozen=True)
class GapForecast:
    """Leading-order gap forecast around one crossing."""

    E0: float
    k0: float
    h: float
    zeta: float
    beta: float
    tau_l: float
    tau_r: float
    sigma_l: float
    sigma_r: float

    def edge(self, eps, side: str = "l"):
        """``E0 - tau/(4 h |ln eps|)`` for the left (``"l"``) or right edge."""
        tau = self.tau_l if side == "l" else self.tau_r
        return self.E0 - tau / (4 * self.h * np.abs(np.log(eps)))

    def extremum_k(self, eps, side: str = "l"):
        sigma = self.sigma_l if side == "l" else self.sigma_r
        return self.k0 + sigma / np.log(eps)

    @property
    def edge_slopes(self) -> tuple[float, float]:
        """Coefficients of ``1/|ln eps|`` in the two edge asymptotics."""
        return -self.tau_l / (4 * self.h), -self.tau_r / (4 * self.h)

    @property
    def extremum_slopes(self) -> tuple[float, float]:
        """Coefficients of ``1/|ln eps|`` in the two extremum locations."""
        return -self.sigma_l, -self.sigma_r

    @property
    def scaled_width(self) -> float:
        """Limit of ``(alpha_r - alpha_l) |ln eps|``."""
        return math.sqrt(self.zeta * (1 - self.beta**2)) / self.h


def forecast_gap(crossing: BandCrossing, geom: WaveguideGeometry) -> GapForecast:
    _require_normalized(geom)
    _require_beta(crossing)
    zeta = math.pi / geom.d
    b = crossing.beta
    h = geom.h
    nm = crossing.n - crossing.m
    root = 2 * math.sqrt(zeta * (1 - b * b))
    rest = -b * (zeta - 1) - zeta - 1
    shift = b * h / (math.pi * nm) * math.sqrt(zeta / (1 - b * b))
    centre = (1 - zeta) * h / (2 * math.pi * nm)
    return GapForecast(
        E0=crossing.E0,
        k0=crossing.k0,
        h=h,
        zeta=zeta,
        beta=b,
        tau_l=root + rest,
        tau_r=-root + rest,
        sigma_l=-shift + centre,
        sigma_r=shift + centre,
    )


def coupling_matrix(crossing: BandCrossing, geom: WaveguideGeometry, t: float) -> np.ndarray:
    z = crossing.zeta
    return np.array(
        [[t * crossing.beta1 - 1.0, 1.0], [z, -z - t * crossing.beta2]], dtype=float
    )


def correction_roots(crossing: BandCrossing, t):
    """The pair ``(f1, f2)``; ``f1 >= f2`` everywhere."""
    t = np.asarray(t, dtype=float)
    z = crossing.zeta
    b1, b2 = crossing.beta1, crossing.beta2
    mean = t * (b1 - b2) - (z + 1)
    disc = np.sqrt((t * (b1 + b2) + z - 1) ** 2 + 4 * z)
    f1, f2 = mean + disc, mean - disc
    if f1.ndim == 0:
        return float(f1), float(f2)
    return f1, f2


def mu_corrections(crossing: BandCrossing, geom: WaveguideGeometry, t):
    """First-order eigenvalue corrections ``(mu1, mu2) = (f1, f2) / (4h)``."""
    f1, f2 = correction_roots(crossing, t)
    return f1 / (4 * geom.h), f2 / (4 * geom.h)


def mode_amplitudes(
    crossing: BandCrossing, geom: WaveguideGeometry, t: float, j: int
) -> np.ndarray:
    """Null vector of ``M - 2 h mu_j``, normalized so that its first entry is 1."""
    if j not in (1, 2):
        raise ValueError("j must be 1 or 2")
    mu = mu_corrections(crossing, geom, t)[j - 1]
    return np.array([1.0, 2 * geom.h * mu + 1 - t * crossing.beta1])


def correction_extrema(
    crossing: BandCrossing, geom: WaveguideGeometry
) -> tuple[float, float, float, float]:
    """``(t_min, t_max, f1(t_min), f2(t_max))``: global minimum of f1, maximum of f2."""
    _require_beta(crossing)
    b = crossing.beta
    z = crossing.zeta
    s = crossing.beta1 + crossing.beta2
    shift = 2 * b / s * math.sqrt(z / (1 - b * b))
    centre = (1 - z) / s
    t_min = -shift + centre
    t_max = shift + centre
    return t_min, t_max, correction_roots(crossing, t_min)[0], correction_roots(crossing, t_max)[1]


def perturbed_band_asymptote(
    crossing: BandCrossing, geom: WaveguideGeometry, eps: float, t: float, j: int
) -> float:
    """Leading-order eigenvalue at ``k = k0 + t/ln(eps)`` on branch ``j``."""
    if not (0 < eps < 1):
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if j not in (1, 2):
        raise ValueError("j must be 1 or 2")
    mu = mu_corrections(crossing, geom, t)[j - 1]
    return crossing.E0 + mu / math.log(eps)


def corollary_region_check(h: float, d: float) -> bool:
    """Sufficient condition on ``(h, d)`` for an eligible crossing with ``n = -1, m = 0``.

    Takes raw numbers so that boundary cases such as ``d = pi`` (no lower
    strip narrower than the upper one) can be asked about.
    """
    lower = math.pi / math.sqrt((2 * math.pi / h) ** 2 + 1)
    return h > math.pi / math.sqrt(2) and lower < d < math.pi


def inner_profile(xi1, xi2, side: int = 0):
    """Harmonic profile ``Re ln(z + sqrt(z^2 - 1))`` on the plane cut along ``|xi1| > 1``.

    The function vanishes on the opening ``[-1, 1]``, is odd in ``xi2`` and
    grows like ``+-(ln|xi| + ln 2)``. Points on the cut itself need
    ``side=+1`` or ``side=-1`` to select the one-sided limit.
    """
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    xi1, xi2 = np.broadcast_arrays(xi1, xi2)
    on_cut = (xi2 == 0) & (np.abs(xi1) > 1)
    if np.any(on_cut) and side == 0:
        raise ValueError("point on the cut |xi1| > 1, xi2 = 0 requires side=+1 or -1")
    sign = np.where(xi2 < 0, -1.0, 1.0)
    sign = np.where(on_cut, float(np.sign(side) or 1), sign)
    z = xi1 + 1j * np.abs(xi2)
    # upper half-plane branch: sqrt(z^2 - 1) = i sqrt(1 - z^2), principal root
    w = z + 1j * np.sqrt(1 - z * z)
    w = np.where(on_cut, np.abs(xi1) + np.sqrt(np.maximum(xi1 * xi1 - 1, 0.0)), w)
    out = sign * np.log(np.abs(w))
    out = np.where((xi2 == 0) & (np.abs(xi1) <= 1), 0.0, out)
    return float(out) if out.ndim == 0 else out


def identity_residuals(crossing: BandCrossing, geom: WaveguideGeometry, t) -> dict[str, float]:
    """Relative errors of the closed-form identities at one crossing.

    Keys: ``eig`` (spectrum of the coupling matrix against ``f/2`` over the
    sample ``t``), ``extrema`` (forecast ``sigma``/``tau`` against the
    extremum formulas), ``split`` (``tau_l - tau_r`` against
    ``4 sqrt(zeta (1 - beta^2))``), ``origin`` (``f1(0) = 0``,
    ``f2(0) = -2(zeta + 1)``).
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    f1, f2 = correction_roots(crossing, t)
    eig_err = 0.0
    for ti, a, b in zip(t, f1, f2):
        ev = np.sort(np.linalg.eigvals(coupling_matrix(crossing, geom, ti)).real)
        want = np.array([b, a]) / 2
        scale = max(np.max(np.abs(want)), 1.0)
        eig_err = max(eig_err, float(np.max(np.abs(ev - want)) / scale))
    fc = forecast_gap(crossing, geom)
    t_min, t_max, v_min, v_max = correction_extrema(crossing, geom)
    ext = max(
        abs(fc.sigma_l - t_min) / max(abs(t_min), 1.0),
        abs(fc.sigma_r - t_max) / max(abs(t_max), 1.0),
        abs(fc.tau_l - v_min) / max(abs(v_min), 1.0),
        abs(fc.tau_r - v_max) / max(abs(v_max), 1.0),
    )
    split_want = 4 * math.sqrt(crossing.zeta * (1 - crossing.beta**2))
    split = abs((fc.tau_l - fc.tau_r) - split_want) / split_want
    g1, g2 = correction_roots(crossing, 0.0)
    z = crossing.zeta
    origin = max(abs(g1), abs(g2 + 2 * (z + 1))) / (z + 1)
    return {"eig": eig_err, "extrema": float(ext), "split": float(split), "origin": float(origin)}
