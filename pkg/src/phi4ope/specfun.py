"""Modified Bessel functions K0, K1 and the massive Euclidean propagator in 4D.

The propagator is the Fourier transform of 1/(p^2 + m^2),

    C(x) = m K1(m|x|) / (4 pi^2 |x|),

and its derivatives follow from the radial identity
(1/z d/dz)^k [z^-1 K1(z)] = (-1)^k z^-(1+k) K_{1+k}(z).
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .core import DIM, DomainError, MultiIndex, order

EULER_GAMMA = 0.57721566490153286061
EULER_GAMMA_STR = "0.57721566490153286061"

MAX_DERIV_ORDER = 8

_SERIES_SPLIT = 2.0
_SERIES_TERMS = 30
_CF_MAXIT = 500
_EPS = 1e-16


def _check_positive(z: np.ndarray) -> None:
    if np.any(~(z > 0)):
        bad = z[~(z > 0)].ravel()[0]
        raise DomainError(f"Bessel K requires z > 0, got {bad}")


def _k01_series(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # power series about 0, z <= 2
    q = 0.25 * z * z
    lg = np.log(0.5 * z)
    term0 = np.ones_like(z)  # (z^2/4)^k / (k!)^2
    term1 = np.ones_like(z)  # (z^2/4)^k / (k! (k+1)!)
    i0 = np.zeros_like(z)
    i1 = np.zeros_like(z)
    s0 = np.zeros_like(z)
    s1 = np.zeros_like(z)
    harm = 0.0  # H_k
    for k in range(_SERIES_TERMS):
        if k > 0:
            harm += 1.0 / k
            term0 = term0 * q / (k * k)
            term1 = term1 * q / (k * (k + 1))
        psi_k1 = -EULER_GAMMA + harm  # psi(k+1)
        psi_k2 = psi_k1 + 1.0 / (k + 1)  # psi(k+2)
        i0 += term0
        i1 += term1
        s0 += term0 * harm
        s1 += term1 * (psi_k1 + psi_k2)
    i1 = 0.5 * z * i1
    k0 = -(lg + EULER_GAMMA) * i0 + s0
    k1 = 1.0 / z + lg * i1 - 0.25 * z * s1
    return k0, k1


def _k01_cf(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Steed's continued fraction (Temme's CF2) for order 0, x >= 2
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(x)
    q2 = np.ones_like(x)
    a1 = 0.25
    q = np.full_like(x, a1)
    c = a1
    a = -a1
    s = 1.0 + q * delh
    active = np.ones(x.shape, dtype=bool)
    for i in range(2, _CF_MAXIT):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q = q + c * qnew
        b = b + 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h = np.where(active, h + delh, h)
        dels = q * delh
        s = np.where(active, s + dels, s)
        active &= np.abs(dels) >= _EPS * np.abs(s)
        if not active.any():
            break
    h = a1 * h
    with np.errstate(under="ignore"):
        k0 = np.sqrt(np.pi / (2.0 * x)) * np.exp(-x) / s
    k1 = k0 * (x + 0.5 - h) / x
    return k0, k1


def bessel_k01(z) -> tuple[np.ndarray, np.ndarray]:
    """(K0(z), K1(z)) for z > 0, elementwise."""
    z = np.asarray(z, dtype=float)
    _check_positive(z)
    flat = z.ravel()
    k0 = np.empty_like(flat)
    k1 = np.empty_like(flat)
    small = flat <= _SERIES_SPLIT
    if small.any():
        k0[small], k1[small] = _k01_series(flat[small])
    big = ~small
    if big.any():
        k0[big], k1[big] = _k01_cf(flat[big])
    return k0.reshape(z.shape), k1.reshape(z.shape)


def bessel_k0(z):
    k0, _ = bessel_k01(z)
    return k0 if k0.ndim else float(k0)


def bessel_k1(z):
    _, k1 = bessel_k01(z)
    return k1 if k1.ndim else float(k1)


def bessel_kn(nmax: int, z) -> list[np.ndarray]:
    """[K0(z), ..., K_nmax(z)] by upward recurrence (stable for K)."""
    k0, k1 = bessel_k01(z)
    out = [k0, k1]
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore"):
        for n in range(1, nmax):
            out.append(out[n - 1] + (2.0 * n / z) * out[n])
    return out[: nmax + 1]


def _radius(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != DIM:
        raise ValueError(f"points must have {DIM} components, got shape {x.shape}")
    r = np.sqrt(np.einsum("...i,...i->...", x, x))
    if np.any(~(r > 0)):
        raise DomainError("propagator evaluated at zero separation")
    return r


def radial_profiles(r, m: float, kmax: int) -> list[np.ndarray]:
    """F_k(r) = ((1/r) d/dr)^k C(r) for k = 0..kmax."""
    if not m > 0:
        raise DomainError(f"mass must be positive, got {m}")
    z = m * np.asarray(r, dtype=float)
    ks = bessel_kn(kmax + 1, z)
    pref = m * m / (4.0 * math.pi**2)
    out = []
    with np.errstate(over="ignore", under="ignore"):
        for k in range(kmax + 1):
            out.append(pref * (-(m * m)) ** k * ks[k + 1] / z ** (k + 1))
    return out


def propagator(x, m: float = 1.0):
    """C(x) = int d^4p/(2pi)^4 e^{ipx} / (p^2 + m^2); depends on |x| only."""
    r = _radius(x)
    val = radial_profiles(r, m, 0)[0]
    return val if val.ndim else float(val)


@lru_cache(maxsize=None)
def derivative_structure(w: MultiIndex) -> tuple[tuple[int, MultiIndex, int], ...]:
    """d^w C(x) = sum coef * x^a * F_k(r), returned as (coef, a, k) triples.

    Built from d_mu [x^a F_k] = a_mu x^(a - e_mu) F_k + x^(a + e_mu) F_(k+1).
    """
    terms: dict[tuple[MultiIndex, int], int] = {((0, 0, 0, 0), 0): 1}
    for mu in range(DIM):
        for _ in range(w[mu]):
            new: dict[tuple[MultiIndex, int], int] = {}
            for (a, k), c in terms.items():
                if a[mu] > 0:
                    lower = list(a)
                    lower[mu] -= 1
                    key = (tuple(lower), k)
                    new[key] = new.get(key, 0) + c * a[mu]
                higher = list(a)
                higher[mu] += 1
                key = (tuple(higher), k + 1)
                new[key] = new.get(key, 0) + c
            terms = {kk: v for kk, v in new.items() if v}
    return tuple(sorted((c, a, k) for (a, k), c in terms.items()))


def propagator_deriv(x, m: float = 1.0, w: MultiIndex = (0, 0, 0, 0)):
    """Analytic partial derivative d^w C evaluated at x (shape (..., 4))."""
    w = tuple(int(c) for c in w)
    if order(w) > MAX_DERIV_ORDER:
        raise ValueError(f"derivative order {order(w)} exceeds cap {MAX_DERIV_ORDER}")
    x = np.asarray(x, dtype=float)
    r = _radius(x)
    struct = derivative_structure(w)
    kmax = max(k for _, _, k in struct)
    prof = radial_profiles(r, m, kmax)
    val = np.zeros_like(r)
    for c, a, k in struct:
        mono = np.ones_like(r)
        for mu in range(DIM):
            if a[mu]:
                mono = mono * x[..., mu] ** a[mu]
        val = val + c * mono * prof[k]
    return val if val.ndim else float(val)
