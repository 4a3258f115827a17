"""Momentum-space reference computations.

Nothing here uses the position-space machinery or the ``quad`` module: the
integrals go through scipy's QUADPACK wrappers and scipy's own Bessel
functions, so agreement with ``deform`` is an independent check.

Conventions: C(x) = int d^4p/(2 pi)^4 e^{ipx} / (p^2 + m^2), and the 4D
plane-wave angular average is

    int_{S^3} dOmega e^{i q r cos psi} = 4 pi^2 J1(qr) / (qr),

which reduces radial Fourier transforms to

    int d^4q/(2 pi)^4 e^{iqx} F(|q|) = 1/(4 pi^2 r) int_0^inf q^2 J1(qr) F(q) dq.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, interpolate, special

INV_16PI2 = 1.0 / (16.0 * math.pi**2)


def subtracted_bubble(q2: float, m: float = 1.0) -> float:
    """int d^4p/(2pi)^4 [1/((p^2+m^2)((p+q)^2+m^2)) - 1/(p^2+m^2)^2].

    Feynman parametrisation turns this into
    -(1/16 pi^2) int_0^1 ln(1 + x(1-x) q^2/m^2) dx.
    """
    if q2 < 0:
        raise ValueError("q2 must be non-negative")
    if q2 == 0:
        return 0.0
    a = q2 / (m * m)
    # symmetric about x = 1/2; the log varies fastest near x ~ 1/a
    brk = [1.0 / a] if 1.0 / a < 0.5 else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(lambda x: math.log1p(x * (1 - x) * a), 0.0, 0.5, points=brk, epsabs=0.0, epsrel=1e-13, limit=200)
    return -2.0 * INV_16PI2 * val


def subtracted_bubble_closed(q2: float, m: float = 1.0) -> float:
    """Closed form of the Feynman integral, -(1/16pi^2)[beta ln((beta+1)/(beta-1)) - 2].

    beta = sqrt(1 + 4 m^2/q^2).  For q^2 << m^2 the bracket cancels to
    O(q^2/m^2) and relative accuracy degrades (about 1e-9 at q^2 = 1e-4 m^2);
    ``subtracted_bubble`` has no such loss.
    """
    if q2 == 0:
        return 0.0
    a = q2 / (m * m)
    beta = math.sqrt(1.0 + 4.0 / a)
    beta_m1 = (4.0 / a) / (beta + 1.0)  # beta - 1 without cancellation
    return -INV_16PI2 * (beta * math.log((beta + 1.0) / beta_m1) - 2.0)


def bubble_bruteforce(q2: float, m: float = 1.0, tol: float = 1e-10) -> float:
    """Direct 2D integral over |p| and the angle chi between p and q.

    d^4p = 4 pi sin^2(chi) dchi p^3 dp; independent of the Feynman trick.
    """
    q = math.sqrt(q2)
    m2 = m * m

    def inner(p):
        def g(chi):
            pq2 = p * p + q2 + 2 * p * q * math.cos(chi)
            return math.sin(chi) ** 2 * (1.0 / ((p * p + m2) * (pq2 + m2)) - 1.0 / (p * p + m2) ** 2)

        v, _ = integrate.quad(g, 0.0, math.pi, epsabs=0.0, epsrel=tol, limit=200)
        return 4 * math.pi * p**3 * v

    total = 0.0
    edges = [0.0, q, 2 * q + m, 10 * (q + m), 100 * (q + m)]
    with warnings.catch_warnings():
        # the subtracted integrand cancels to ~p^-3; QUADPACK flags roundoff there
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            if b > a:
                total += integrate.quad(inner, a, b, epsabs=0.0, epsrel=tol, limit=200)[0]
        total += integrate.quad(inner, edges[-1], np.inf, epsabs=0.0, epsrel=tol, limit=200)[0]
    return total / (2 * math.pi) ** 4


@dataclass(frozen=True)
class BubbleProfile:
    """Cubic-spline table of subtracted_bubble in log(q^2/m^2).

    Below the grid the small-q expansion -(q^2/m^2)/(96 pi^2) (1 - q^2/(10 m^2))
    is used; above it the large-q form -(1/16pi^2)(ln(q^2/m^2) - 2 + 2 m^2/q^2 ln(q^2/m^2) + 2 m^2/q^2).
    """

    mass: float
    log_q2_grid: np.ndarray
    values: np.ndarray

    @classmethod
    def build(cls, mass: float = 1.0, lo: float = 1e-6, hi: float = 1e10, points_per_decade: int = 40):
        n = int(round(math.log10(hi / lo) * points_per_decade)) + 1
        grid = np.linspace(math.log(lo), math.log(hi), n)
        vals = np.array([subtracted_bubble(math.exp(g) * mass * mass, mass) for g in grid])
        return cls(mass, grid, vals)

    @property
    def _spline(self):
        sp = self.__dict__.get("_sp")
        if sp is None:
            sp = interpolate.CubicSpline(self.log_q2_grid, self.values)
            object.__setattr__(self, "_sp", sp)
        return sp

    def __call__(self, q2):
        q2 = np.asarray(q2, dtype=float)
        a = q2 / self.mass**2
        out = np.empty_like(a)
        lo, hi = math.exp(self.log_q2_grid[0]), math.exp(self.log_q2_grid[-1])
        small = a < lo
        big = a > hi
        mid = ~(small | big)
        out[small] = -a[small] / (96 * math.pi**2) * (1 - a[small] / 10)
        la = np.log(np.where(big, a, 1.0))
        out[big] = -INV_16PI2 * (la[big] - 2 + 2 / a[big] * (la[big] + 1))
        out[mid] = self._spline(np.log(a[mid]))
        return out if out.ndim else float(out)


def angular_kernel(z):
    """int_{S^3} e^{i z cos psi} dOmega = 4 pi^2 J1(z)/z (2 pi^2 at z = 0)."""
    z = np.asarray(z, dtype=float)
    safe = np.where(z == 0, 1.0, z)
    return np.where(z == 0, 2 * math.pi**2, 4 * math.pi**2 * special.j1(safe) / safe)


def angular_kernel_direct(z: float) -> float:
    """The same average by 2D quadrature over (psi, theta); phi integrates to 2 pi."""
    val, _ = integrate.dblquad(
        lambda th, psi: math.sin(psi) ** 2 * math.sin(th) * math.cos(z * math.cos(psi)),
        0.0, math.pi, 0.0, math.pi, epsabs=1e-13, epsrel=1e-12,
    )
    return 2 * math.pi * val


def _wynn_epsilon(s: list[float]) -> list[float]:
    """Wynn's epsilon table; returns the even-column estimates along the last diagonal."""
    n = len(s)
    e_prev = [0.0] * (n + 1)
    e_cur = list(s)
    best = []
    for k in range(1, n):
        e_next = []
        for i in range(len(e_cur) - 1):
            d = e_cur[i + 1] - e_cur[i]
            if d == 0:
                e_next.append(math.inf)
            else:
                e_next.append(e_prev[i + 1] + 1.0 / d)
        e_prev, e_cur = e_cur, e_next
        if k % 2 == 0 and e_cur:
            best.append(e_cur[-1])
        if len(e_cur) < 2:
            break
    return best


def hankel_j1(func, r: float, n_zeros: int = 120, tol: float = 1e-11):
    """int_0^inf q^2 J1(qr) func(q) dq for slowly decaying func, as (value, err).

    Integrates exactly between consecutive zeros of J1(qr) and accelerates the
    partial sums with the epsilon algorithm.
    """
    zeros = np.concatenate([[0.0], special.jn_zeros(1, n_zeros)]) / r
    partial = []
    acc = 0.0
    for a, b in zip(zeros[:-1], zeros[1:]):
        v, _ = integrate.quad(lambda q: q * q * special.j1(q * r) * func(q), a, b, epsabs=0.0, epsrel=tol, limit=100)
        acc += v
        partial.append(acc)
    tail = partial[-40:]
    est = _wynn_epsilon(tail)
    est = [e for e in est if math.isfinite(e)]
    if len(est) < 2:
        return partial[-1], abs(partial[-1] - partial[-2])
    # spread of the last few extrapolants, floored at the segment tolerance
    spread = max(abs(e - est[-1]) for e in est[-3:])
    return est[-1], max(spread, tol * sum(abs(b - a) for a, b in zip([0.0] + partial[:-1], partial)))


_PROFILES: dict[float, BubbleProfile] = {}


def _profile(m: float) -> BubbleProfile:
    if m not in _PROFILES:
        _PROFILES[m] = BubbleProfile.build(m)
    return _PROFILES[m]


def momentum_space_C1_phi_phi3(x12, m: float = 1.0, *, exact_bubble: bool = False, return_error: bool = False):
    """First-order coefficient for (phi, phi^3) -> phi^2 from momentum space.

    -3 int d^4q/(2pi)^4 e^{iq x12} B(q^2)/(q^2+m^2), B the subtracted bubble,
    reduced to a J1 radial transform.  ``x12`` may be a 4-vector or |x12|.
    """
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(x12, dtype=float))))
    if not r > 0:
        raise ValueError("separation must be nonzero")
    if exact_bubble:
        bub = lambda q: subtracted_bubble_closed(q * q, m)  # noqa: E731
    else:
        prof = _profile(m)
        bub = lambda q: prof(q * q)  # noqa: E731
    val, err = hankel_j1(lambda q: bub(q) / (q * q + m * m), r)
    pref = -3.0 / (4 * math.pi**2 * r)
    return (pref * val, abs(pref) * err) if return_error else pref * val


def k0_check(x12, m: float = 1.0) -> float:
    """-(1/16 pi^2) K0(m|x12|) using scipy's Bessel function."""
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(x12, dtype=float))))
    return -INV_16PI2 * float(special.k0(m * r))
