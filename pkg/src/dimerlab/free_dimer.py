"""Exact solution of the non-interacting dimer model.

The model assigns activity t_r to edges of type r (t_4 = 1).  Its complex
edge amplitudes are

    K_1 = t_1,   K_2 = i t_2,   K_3 = -t_3,   K_4 = -i,

and the symbol of the weighted adjacency operator is

    mu(k) = t_1 + i t_2 e^{i k_1} - t_3 e^{i(k_1 + k_2)} - i e^{i k_2}
          = A(k_1) - C(k_1) e^{i k_2},

with A(th) = K_1 + K_2 e^{i th} and C(th) = i + t_3 e^{i th}.  The zeros of
mu lie where |A| = |C|, i.e.

    sin k_1 = s* := (t_1^2 + t_2^2 - 1 - t_3^2) / (2 (t_1 t_2 + t_3)),

so for |s*| < 1 there are exactly two transversal zeros p^+ (with
cos p^+_1 > 0) and p^- = (pi, pi) - p^+.

The infinite-volume inverse kernel

    g(x) = (2 pi)^-2 \int_{[-pi,pi]^2} e^{-i k x} / mu(k) dk

is evaluated by performing the k_2 integral exactly by residues; the
surviving k_1 integral runs over the arc where the relevant pole sits
inside (x_2 < 0) or outside (x_2 >= 0) the unit circle:

    g(x) = +(2 pi)^-1 \int_{p_1^-}^{p_1^+ + 2 pi} e^{-i th x_1} (C/A)^{x_2} / A dth    (x_2 >= 0)
    g(x) = -(2 pi)^-1 \int_{p_1^+}^{p_1^-}        e^{-i th x_1} (A/C)^{-x_2-1} / C dth (x_2 < 0)

Both integrands are smooth on their arcs for generic weights.  All
correlation functions reduce to products of g values:

    E[1_{b(x,r)}] = K_r g(v_r),
    E[1_{b(x,r)}; 1_{b(0,r')}] = -K_r K_{r'} g(x + v_r) g(v_{r'} - x).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import asin, pi

import numpy as np

from .errors import NonGenericWeights
from .lattice import EDGE_OFFSETS, Face, face_step
from .quadrature import integrate_1d

__all__ = [
    "Weights",
    "FermiData",
    "mu",
    "dmu",
    "fermi_points",
    "k_inverse",
    "g_v",
    "edge_density",
    "slope",
    "dimer_correlation",
    "height_variance_free",
    "free_variance_table",
    "MAX_VARIANCE_SEPARATION",
]

DEFAULT_TOL = 1e-10
MAX_VARIANCE_SEPARATION = 256


@dataclass(frozen=True)
class Weights:
    """Edge activities (t1, t2, t3); t4 is fixed to 1."""

    t1: float
    t2: float
    t3: float

    def __post_init__(self) -> None:
        if not (self.t1 > 0 and self.t2 > 0 and self.t3 > 0):
            raise ValueError("edge activities must be strictly positive")

    @property
    def t4(self) -> float:
        return 1.0

    def kasteleyn(self) -> dict[int, complex]:
        return {1: complex(self.t1), 2: 1j * self.t2,
                3: complex(-self.t3), 4: -1j}

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.t1, self.t2, self.t3)


def mu(w: Weights, k) -> complex:
    """The symbol mu(k); k is a pair (k1, k2), possibly of arrays."""
    k1, k2 = k
    return (w.t1 + 1j * w.t2 * np.exp(1j * k1)
            - w.t3 * np.exp(1j * (k1 + k2)) - 1j * np.exp(1j * k2))


def dmu(w: Weights, k) -> tuple[complex, complex]:
    """Gradient (d mu/d k1, d mu/d k2), in closed form."""
    k1, k2 = k
    e1 = np.exp(1j * k1)
    e12 = np.exp(1j * (k1 + k2))
    dk1 = -w.t2 * e1 - 1j * w.t3 * e12
    dk2 = np.exp(1j * k2) - 1j * w.t3 * e12
    return dk1, dk2


def _A(w: Weights, th):
    return w.t1 + 1j * w.t2 * np.exp(1j * th)


def _C(w: Weights, th):
    return 1j + w.t3 * np.exp(1j * th)


@dataclass(frozen=True)
class FermiData:
    """The two zeros of the symbol and the linearization at each.

    Labeling: cos(p_plus[0]) > 0.  The frame determinant
    Q = alpha_+ beta_- - alpha_- beta_+ is purely imaginary and nonzero for
    generic weights; |Q| = 2 |Im(alpha_+ conj(beta_+))|.
    """

    p_plus: tuple[float, float]
    p_minus: tuple[float, float]
    alpha_plus: complex
    alpha_minus: complex
    beta_plus: complex
    beta_minus: complex

    @property
    def Q(self) -> complex:
        return self.alpha_plus * self.beta_minus - self.alpha_minus * self.beta_plus

    def p(self, omega: int) -> tuple[float, float]:
        return self.p_plus if omega > 0 else self.p_minus

    def alpha(self, omega: int) -> complex:
        return self.alpha_plus if omega > 0 else self.alpha_minus

    def beta(self, omega: int) -> complex:
        return self.beta_plus if omega > 0 else self.beta_minus


def _sin_fermi(w: Weights) -> float:
    return (w.t1**2 + w.t2**2 - 1.0 - w.t3**2) / (2.0 * (w.t1 * w.t2 + w.t3))


@lru_cache(maxsize=4096)
def _fermi_cached(t1: float, t2: float, t3: float) -> FermiData:
    w = Weights(t1, t2, t3)
    s = _sin_fermi(w)
    if abs(s) >= 1.0 - 1e-12:
        raise NonGenericWeights(
            f"spectral circles tangent or disjoint for t={w.as_tuple()} "
            f"(sin k1 = {s:.6g})"
        )
    p1p = asin(s)
    p1m = pi - p1p
    points = []
    for k1 in (p1p, p1m):
        ratio = _A(w, k1) / _C(w, k1)
        k2 = float(np.angle(ratio))
        points.append((k1, k2))
    p_plus, p_minus = points
    residual = max(abs(mu(w, p_plus)), abs(mu(w, p_minus)))
    scale = w.t1 + w.t2 + w.t3 + 1.0
    if residual > 1e-12 * scale:
        raise NonGenericWeights(
            f"symbol zero residual {residual:.3e} too large for t={w.as_tuple()}"
        )
    ap, bp = dmu(w, p_plus)
    am, bm = dmu(w, p_minus)
    fd = FermiData(p_plus, p_minus, complex(ap), complex(am),
                   complex(bp), complex(bm))
    if abs(fd.Q) < 1e-8 * (abs(ap) * abs(bm) + abs(am) * abs(bp) + 1e-30):
        raise NonGenericWeights(
            f"zeros of the symbol are not transversal for t={w.as_tuple()}"
        )
    return fd


def fermi_points(w: Weights) -> FermiData:
    """Locate both zeros of mu and their gradients.

    Raises ``NonGenericWeights`` when the zeros are missing, tangential, or
    non-transversal.
    """
    return _fermi_cached(w.t1, w.t2, w.t3)


def _arcs(fd: FermiData) -> tuple[tuple[float, float], tuple[float, float]]:
    """(arc_plus, arc_minus): the k1 windows inside/outside resp."""
    p1p = fd.p_plus[0]
    p1m = fd.p_minus[0]
    return (p1p, p1m), (p1m, p1p + 2.0 * pi)


@lru_cache(maxsize=300000)
def _g_cached(t1: float, t2: float, t3: float, x1: int, x2: int,
              tol: float) -> complex:
    w = Weights(t1, t2, t3)
    fd = fermi_points(w)
    arc_plus, arc_minus = _arcs(fd)
    if x2 >= 0:
        def f(th):
            a = _A(w, th)
            c = _C(w, th)
            return np.exp(-1j * th * x1) * (c / a) ** x2 / a
        lo, hi = arc_minus
        sign = 1.0
    else:
        def f(th):
            a = _A(w, th)
            c = _C(w, th)
            return np.exp(-1j * th * x1) * (a / c) ** (-x2 - 1) / c
        lo, hi = arc_plus
        sign = -1.0
    res = integrate_1d(f, lo, hi, tol=tol)
    return sign * res.value / (2.0 * pi)


def k_inverse(w: Weights, x: tuple[int, int], tol: float = DEFAULT_TOL) -> complex:
    """Infinite-volume inverse kernel g(x) by the 1d residue route."""
    return _g_cached(w.t1, w.t2, w.t3, int(x[0]), int(x[1]), tol)


def g_v(w: Weights, r: int, tol: float = DEFAULT_TOL) -> complex:
    """g evaluated at the four edge offsets v_r.

    r in {1, 2, 4} use their dedicated single-arc forms

        g(v1) = (2 pi)^-1 \int_{p1^-}^{p1^+ + 2 pi} dth / (K1 + K2 e^{i th})
        g(v2) = (2 pi)^-1 \int_{p1^-}^{p1^+ + 2 pi} e^{i th} dth / (K1 + K2 e^{i th})
        g(v4) = (2 pi)^-1 \int_{p1^+}^{p1^-} dth / (K3 e^{i th} + K4)

    while g(v3) falls back to the general kernel.  g(v1), g(v3) are real
    and g(v2), g(v4) purely imaginary (so that every edge density
    K_r g(v_r) is real); this pattern is asserted by the test suite rather
    than assumed here.
    """
    fd = fermi_points(w)
    arc_plus, arc_minus = _arcs(fd)
    K = w.kasteleyn()
    if r == 1:
        res = integrate_1d(lambda th: 1.0 / (K[1] + K[2] * np.exp(1j * th)),
                           *arc_minus, tol=tol)
        return res.value / (2.0 * pi)
    if r == 2:
        res = integrate_1d(
            lambda th: np.exp(1j * th) / (K[1] + K[2] * np.exp(1j * th)),
            *arc_minus, tol=tol)
        return res.value / (2.0 * pi)
    if r == 4:
        res = integrate_1d(lambda th: 1.0 / (K[3] * np.exp(1j * th) + K[4]),
                           *arc_plus, tol=tol)
        return res.value / (2.0 * pi)
    if r == 3:
        return k_inverse(w, EDGE_OFFSETS[3], tol=tol)
    raise ValueError("edge type must be in {1, 2, 3, 4}")


def edge_density(w: Weights, r: int, tol: float = DEFAULT_TOL) -> float:
    """Probability that a given black site is covered by its type-r edge."""
    val = w.kasteleyn()[r] * g_v(w, r, tol=tol)
    if abs(val.imag) > 1e-9:
        raise AssertionError(f"edge density not real: {val!r}")
    d = float(val.real)
    if not 0.0 < d < 1.0:
        raise AssertionError(f"edge density out of (0,1): {d!r}")
    return d


def slope(w: Weights, tol: float = DEFAULT_TOL) -> tuple[float, float]:
    """Average height tilt (rho1, rho2) per unit physical step.

    Read off by applying the height-step rule to the two dual steps of each
    orientation: an East step crosses a type-4 edge with sigma=+1 from an
    even face and a type-2 edge with sigma=-1 from an odd face, so
    rho1 = (d4 - d2)/2; a North step gives rho2 = (d1 - d3)/2.
    """
    d = {r: edge_density(w, r, tol=tol) for r in (1, 2, 3, 4)}
    return ((d[4] - d[2]) / 2.0, (d[1] - d[3]) / 2.0)


def dimer_correlation(w: Weights, x: tuple[int, int], r: int, rp: int,
                      tol: float = DEFAULT_TOL) -> float:
    """Truncated two-point function E[1_{b(x,r)}; 1_{b(0,r')}].

    At a coinciding edge (x = 0, r = r') this is the indicator variance
    d (1 - d); otherwise the determinantal product
    -K_r K_{r'} g(x + v_r) g(v_{r'} - x), which in particular returns
    -d_r d_{r'} automatically whenever the two edges share a site.
    """
    x = (int(x[0]), int(x[1]))
    if x == (0, 0) and r == rp:
        d = edge_density(w, r, tol=tol)
        return d * (1.0 - d)
    K = w.kasteleyn()
    vr = EDGE_OFFSETS[r]
    vrp = EDGE_OFFSETS[rp]
    ga = k_inverse(w, (x[0] + vr[0], x[1] + vr[1]), tol=tol)
    gb = k_inverse(w, (vrp[0] - x[0], vrp[1] - x[1]), tol=tol)
    val = -K[r] * K[rp] * ga * gb
    if abs(val.imag) > 1e-10:
        raise AssertionError(f"correlation not real: {val!r}")
    return float(val.real)


def _variance_path(R: int) -> list[tuple[tuple[int, int], int, int]]:
    """Crossed edges (black site, type, sigma) of R East steps from (0,(0,0))."""
    here = Face(0, (0, 0))
    out = []
    for _ in range(R):
        edge, sigma, here = face_step(here, "E")
        out.append((edge.black, edge.rtype, sigma))
    return out


def free_variance_table(w: Weights, Rs, tol: float = DEFAULT_TOL) -> list[tuple[int, float]]:
    """Var[h(f) - h(f')] at horizontal separations R, exact double sums.

    The variance over a straight dual path is

        sum_{b,b'} sigma_b sigma_b' E[1_b; 1_{b'}],

    using exact correlations for every pair (diagonal pairs contribute the
    indicator variance).  All entries of ``Rs`` share one path prefix, so
    the kernel cache is reused across separations.  Capped at R <= 256.
    """
    Rs = sorted(set(int(R) for R in Rs))
    if Rs[0] < 1:
        raise ValueError("separations must be >= 1")
    if Rs[-1] > MAX_VARIANCE_SEPARATION:
        raise ValueError(f"separation capped at {MAX_VARIANCE_SEPARATION}")
    edges = _variance_path(Rs[-1])

    def corr(i: int, j: int) -> float:
        (bi, ri, _), (bj, rj, _) = edges[i], edges[j]
        dx = (bi[0] - bj[0], bi[1] - bj[1])
        return dimer_correlation(w, dx, ri, rj, tol=tol)

    out = []
    # incremental growth: var(R) = var(R-1) + 2 sum_{j<R-1} ss*corr + diag
    var = 0.0
    grown = 0
    for R in Rs:
        while grown < R:
            i = grown
            si = edges[i][2]
            acc = 0.0
            for j in range(i):
                acc += si * edges[j][2] * corr(i, j)
            var += 2.0 * acc + corr(i, i)
            grown += 1
        out.append((R, var))
    return out


def height_variance_free(w: Weights, R: int, tol: float = DEFAULT_TOL) -> float:
    """Variance of the height difference across R East steps (R >= 2)."""
    if R < 2:
        raise ValueError("R must be >= 2")
    return free_variance_table(w, [R], tol=tol)[0][1]
