"""Integration over R^4 of functions with integrable point singularities.

The integrand is split with a smooth partition of unity.  Around each
singular centre x_i a C-infinity bump S_i (equal to 1 for |y - x_i| < rho/2,
0 beyond rho) selects the "ball" piece, which is integrated in hyperspherical
coordinates about x_i with the radial substitution r = rho t^3.  The rest,
f (1 - sum S_i), vanishes near every centre; it is integrated in
hyperspherical coordinates about the centroid, adaptively up to R_far
("shell"), and by Gauss-Laguerre beyond ("tail").

Angular rule on S^3: Gauss-Chebyshev (2nd kind) in cos(psi), Gauss-Legendre
in cos(theta), trapezoid in phi.  The rule is centrally symmetric, so parts
odd under y - x_i -> -(y - x_i) cancel exactly inside balls.  The polar axis
is aligned with the configuration, so integrands built from a pair of points
are resolved by the theta/phi rule at its lowest level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import DIM, min_pairwise_distance

SPHERE_AREA = 2.0 * math.pi**2

_PSI_LEVELS = (16, 24, 32, 48, 64, 96, 128, 192)
_THETA_LEVELS = (4, 6, 8, 12, 16, 24, 32)
_GL_ORDER = 12
_LAGUERRE_ORDERS = (40, 60)
_MAX_DEPTH = 40
_CHUNK = 262_144


class QuadratureError(ArithmeticError):
    """Non-finite integrand sample."""

    def __init__(self, message: str, y=None):
        self.y = None if y is None else np.asarray(y)
        super().__init__(message if y is None else f"{message} at y = {np.asarray(y).tolist()}")


@dataclass(frozen=True)
class NumericCoeff:
    value: float
    abs_error_estimate: float
    breakdown: dict[str, float] = field(default_factory=dict)
    converged: bool = True
    n_evals: int = 0
    method: str = "cubature"
    region_errors: dict[str, float] = field(default_factory=dict)

    def scaled(self, q: float) -> "NumericCoeff":
        return replace(
            self,
            value=self.value * q,
            abs_error_estimate=self.abs_error_estimate * abs(q),
            breakdown={k: v * q for k, v in self.breakdown.items()},
            region_errors={k: v * abs(q) for k, v in self.region_errors.items()},
        )


@dataclass(frozen=True)
class QuadPlan:
    """Region decomposition and tolerances for ``integrate_r4``."""

    centers: np.ndarray
    rho: float
    far_radius: float
    mass: float = 1.0
    rel_tol: float = 1e-4
    abs_tol: float = 0.0
    max_evals: int = 200_000_000
    excision: float = 0.0
    origin: np.ndarray | None = None

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float)).reshape(-1, DIM)
        object.__setattr__(self, "centers", c)
        if not self.rho > 0:
            raise ValueError("ball radius rho must be positive")
        if len(c) > 1 and not 2 * self.rho < min_pairwise_distance(c):
            raise ValueError("singular balls must be pairwise disjoint (rho < min distance / 2)")
        origin = c.mean(axis=0) if self.origin is None and len(c) else self.origin
        origin = np.zeros(DIM) if origin is None else np.asarray(origin, dtype=float)
        object.__setattr__(self, "origin", origin)
        if len(c) and not self.far_radius > np.max(np.linalg.norm(c - origin, axis=1)) + self.rho:
            raise ValueError("far radius must enclose all singular balls")
        if not 0 <= self.excision < self.rho:
            raise ValueError("excision radius must lie in [0, rho)")

    @classmethod
    def for_points(
        cls,
        points,
        mass: float = 1.0,
        rho_frac: float = 0.4,
        r_far: float | None = None,
        rel_tol: float = 1e-4,
        max_evals: int = 200_000_000,
        abs_tol: float = 0.0,
        excision: float = 0.0,
    ) -> "QuadPlan":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if len(pts) > 1:
            rho = rho_frac * min_pairwise_distance(pts)
            diam = float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1)))
        else:
            rho = rho_frac / mass
            diam = 0.0
        if r_far is None:
            r_far = diam + 8.0 / mass
        r_far = max(r_far, diam + 2 * rho)
        return cls(pts, rho, r_far, mass, rel_tol, abs_tol, max_evals, excision * rho)

    @property
    def diameter(self) -> float:
        c = self.centers
        if len(c) < 2:
            return 0.0
        return float(np.max(np.linalg.norm(c[:, None] - c[None], axis=-1)))

    def region_names(self) -> list[str]:
        return [f"ball[{i + 1}]" for i in range(len(self.centers))] + ["shell", "tail"]


# ---------------------------------------------------------------------------
# rules


def _smoothstep(tau):
    tau = np.clip(tau, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(tau > 0, np.exp(-1.0 / np.where(tau > 0, tau, 1.0)), 0.0)
        b = np.where(tau < 1, np.exp(-1.0 / np.where(tau < 1, 1.0 - tau, 1.0)), 0.0)
    return a / (a + b)


def bump(s, inner: float = 0.5):
    """C-infinity step: 1 for s <= inner, 0 for s >= 1."""
    s = np.asarray(s, dtype=float)
    return _smoothstep((1.0 - s) / (1.0 - inner))


def sphere_rule(n_psi: int, n_theta: int, n_phi: int | None = None):
    """Product rule on S^3: (unit vectors (M, 4), weights (M,)) with sum 2 pi^2.

    The last coordinate is cos(psi) (the polar axis).
    """
    n_phi = 2 * n_theta if n_phi is None else n_phi
    if n_phi % 2:
        raise ValueError("n_phi must be even for a centrally symmetric rule")
    k = np.arange(1, n_psi + 1)
    ang = k * math.pi / (n_psi + 1)
    tpsi = np.cos(ang)
    wpsi = math.pi / (n_psi + 1) * np.sin(ang) ** 2
    u, wu = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * math.pi * (np.arange(n_phi) + 0.5) / n_phi
    wphi = np.full(n_phi, 2 * math.pi / n_phi)
    T, U, P = np.meshgrid(tpsi, u, phi, indexing="ij")
    W = (wpsi[:, None, None] * wu[None, :, None] * wphi[None, None, :]).ravel()
    spsi = np.sqrt(1.0 - T**2)
    sth = np.sqrt(1.0 - U**2)
    omega = np.stack([spsi * sth * np.cos(P), spsi * sth * np.sin(P), spsi * U, T], axis=-1).reshape(-1, DIM)
    return omega, W


def frame(axis) -> np.ndarray:
    """Orthonormal 4x4 matrix whose last column is ``axis``."""
    a = np.asarray(axis, dtype=float)
    n = np.linalg.norm(a)
    a = np.eye(DIM)[-1] if n == 0 else a / n
    basis = [a] + [e for e in np.eye(DIM)]
    q, _ = np.linalg.qr(np.array(basis[: DIM + 1]).T[:, :DIM])
    q = q * np.sign(q[:, 0] @ a)
    return np.concatenate([q[:, 1:], q[:, :1]], axis=1)


_GL = np.polynomial.legendre.leggauss(_GL_ORDER)


class _Budget:
    def __init__(self, max_evals: int):
        self.max_evals = max_evals
        self.used = 0
        self.exhausted = False

    def take(self, n: int) -> bool:
        self.used += n
        if self.used > self.max_evals:
            self.exhausted = True
        return not self.exhausted


class _Region:
    """One radial-times-angular piece: int_a^b dr jac(r) sum_k W_k f(c + r E w_k) weight(y)."""

    def __init__(self, f, center, frame_, weight_fn, radius_map, budget, name):
        self.f = f
        self.center = np.asarray(center, dtype=float)
        self.frame = frame_
        self.weight_fn = weight_fn
        self.radius_map = radius_map  # t -> (r, dr/dt * r^3)
        self.budget = budget
        self.name = name
        self.levels = [0, 0]
        self._rules: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def rule(self, levels):
        key = tuple(levels)
        if key not in self._rules:
            nt = _THETA_LEVELS[key[1]]
            om, w = sphere_rule(_PSI_LEVELS[key[0]], nt)
            self._rules[key] = (om @ self.frame.T, w)
        return self._rules[key]

    def angular(self, t: np.ndarray, levels=None, absolute: bool = False) -> np.ndarray:
        """Jacobian-weighted angular integrals at parameter values t (of |f| if ``absolute``)."""
        om, w = self.rule(self.levels if levels is None else levels)
        r, jac = self.radius_map(t)
        out = np.zeros(len(t))
        self.budget.take(len(t) * len(w))
        rows = max(1, _CHUNK // len(w))
        for s in range(0, len(t), rows):
            rr = r[s : s + rows]
            y = self.center + rr[:, None, None] * om[None, :, :]
            flat = y.reshape(-1, DIM)
            wt = self.weight_fn(flat)
            vals = np.zeros(len(flat))
            live = wt != 0
            if live.any():
                fv = np.asarray(self.f(flat[live]), dtype=float)
                if not np.all(np.isfinite(fv)):
                    bad = flat[live][~np.isfinite(fv)][0]
                    raise QuadratureError("non-finite integrand sample", bad)
                vals[live] = (np.abs(fv) if absolute else fv) * wt[live]
            out[s : s + rows] = (vals.reshape(len(rr), len(w)) @ w) * jac[s : s + rows]
        return out


def _gl_panel(region: _Region, a: float, b: float, levels=None, absolute: bool = False) -> float:
    x, w = _GL
    t = 0.5 * (b - a) * x + 0.5 * (a + b)
    return 0.5 * (b - a) * float(region.angular(t, levels, absolute) @ w)


def _adaptive_radial(region: _Region, breaks, tol: float):
    """Whole-vs-halves adaptive Gauss-Legendre; returns (value, err, leaves)."""
    span = breaks[-1] - breaks[0]
    stack = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b > a:
            stack.append((a, b, _gl_panel(region, a, b), 0))
    leaves = []
    total = 0.0
    err = 0.0
    while stack:
        a, b, q, depth = stack.pop()
        mid = 0.5 * (a + b)
        ql = _gl_panel(region, a, mid)
        qr = _gl_panel(region, mid, b)
        diff = abs(q - (ql + qr))
        local = tol * (b - a) / span
        if diff <= max(local, 1e-15 * abs(ql + qr)) or depth >= _MAX_DEPTH or region.budget.exhausted:
            total += ql + qr
            err += diff
            leaves.extend([(a, mid), (mid, b)])
        else:
            stack.append((a, mid, ql, depth + 1))
            stack.append((mid, b, qr, depth + 1))
    return total, err, sorted(leaves)


def _leaf_sum(region: _Region, leaves, levels) -> float:
    x, w = _GL
    ts = []
    ws = []
    for a, b in leaves:
        ts.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    t = np.concatenate(ts)
    return float(region.angular(t, levels) @ np.concatenate(ws))


def _angular_refine(region: _Region, leaves, base_value: float, tol: float):
    """Raise psi / theta levels until refinements agree; returns (value, err)."""
    value = base_value
    while True:
        lp, lt = region.levels
        errs = []
        vals = []
        for lv in ((lp + 1, lt), (lp, lt + 1)):
            if lv[0] >= len(_PSI_LEVELS) or lv[1] >= len(_THETA_LEVELS):
                errs.append(0.0 if lv[0] >= len(_PSI_LEVELS) and lv[1] >= len(_THETA_LEVELS) else math.inf)
                vals.append(value)
                continue
            v = _leaf_sum(region, leaves, lv)
            vals.append(v)
            errs.append(abs(v - value))
        ep, et = errs
        if ep + et <= tol or region.budget.exhausted:
            refined = value + sum(v - value for v, e in zip(vals, errs) if math.isfinite(e))
            return refined, sum(e for e in errs if math.isfinite(e))
        if ep > tol / 2 and lp + 1 < len(_PSI_LEVELS):
            region.levels[0] += 1
        if et > tol / 2 and lt + 1 < len(_THETA_LEVELS):
            region.levels[1] += 1
        if region.levels == [lp, lt]:
            # both maxed, or only a maxed direction is failing
            if lp + 1 < len(_PSI_LEVELS):
                region.levels[0] += 1
            elif lt + 1 < len(_THETA_LEVELS):
                region.levels[1] += 1
            else:
                return value, ep + et
        value = _leaf_sum(region, leaves, region.levels)


def _principal_axis(centers: np.ndarray, origin: np.ndarray):
    if len(centers) < 2:
        return np.eye(DIM)[-1]
    d = centers - origin
    _, _, vt = np.linalg.svd(d)
    return vt[0]


def _build_regions(f, plan: QuadPlan, budget: _Budget, far_radius: float):
    c = plan.centers
    rho = plan.rho
    origin = plan.origin
    m = plan.mass
    regions = []

    def bump_i(i):
        return lambda y: bump(np.linalg.norm(y - c[i], axis=1) / rho)

    for i in range(len(c)):
        others = np.delete(c, i, axis=0)
        axis = (others[np.argmin(np.linalg.norm(others - c[i], axis=1))] - c[i]) if len(others) else np.eye(DIM)[-1]

        def rmap(t, rho=rho):
            r = rho * t**3
            return r, 3.0 * rho**4 * t**11

        regions.append(_Region(f, c[i], frame(axis), bump_i(i), rmap, budget, f"ball[{i + 1}]"))

    def outside(y):
        s = np.ones(len(y))
        for i in range(len(c)):
            s -= bump(np.linalg.norm(y - c[i], axis=1) / rho)
        s[np.abs(s) < 1e-300] = 0.0
        return s

    gframe = frame(_principal_axis(c, origin))

    def rmap_shell(r):
        return r, r**3

    regions.append(_Region(f, origin, gframe, outside, rmap_shell, budget, "shell"))

    def rmap_tail(s, R=far_radius):
        r = R + s / m
        with np.errstate(over="ignore"):
            return r, np.exp(s) * r**3 / m

    regions.append(_Region(f, origin, gframe, outside, rmap_tail, budget, "tail"))
    return regions


def _shell_breaks(plan: QuadPlan, far_radius: float):
    rho = plan.rho
    pts = {0.0, far_radius}
    for x in plan.centers:
        a = float(np.linalg.norm(x - plan.origin))
        for d in (-rho, -0.5 * rho, 0.0, 0.5 * rho, rho):
            pts.add(min(max(a + d, 0.0), far_radius))
    r = 1.0 / plan.mass
    while r < far_radius:
        pts.add(r)
        r *= 2.0
    return sorted(pts)


def _laguerre(region: _Region, n: int, levels=None, absolute: bool = False) -> float:
    s, w = np.polynomial.laguerre.laggauss(n)
    return float(region.angular(s, levels, absolute) @ w)


def integrate_r4(f, plan: QuadPlan) -> NumericCoeff:
    """Integrate f over R^4 following ``plan``.

    ``f`` maps an (M, 4) array of points to M values.  The error target is
    ``max(abs_tol, rel_tol * S)`` where S is a coarse estimate of the
    integral of |f|, which stays meaningful when regions or angles cancel.
    """
    budget = _Budget(plan.max_evals)
    far = plan.far_radius
    ball_breaks = [0.0, 0.5 ** (1 / 3), 1.0]
    for _attempt in range(4):
        regions = _build_regions(f, plan, budget, far)
        shell_breaks = _shell_breaks(plan, far)
        # coarse pass over |f| fixes the error scale
        scale = 0.0
        for reg in regions:
            if reg.name == "tail":
                scale += _laguerre(reg, _LAGUERRE_ORDERS[0], absolute=True)
            else:
                br = shell_breaks if reg.name == "shell" else ball_breaks
                scale += sum(_gl_panel(reg, a, b, absolute=True) for a, b in zip(br[:-1], br[1:]) if b > a)
        tol = max(plan.abs_tol, plan.rel_tol * scale, 1e-300)
        share = tol / len(regions)

        values: dict[str, float] = {}
        errors: dict[str, float] = {}
        for reg in regions:
            if reg.name == "tail":
                v = _laguerre(reg, _LAGUERRE_ORDERS[0])
                v2 = _laguerre(reg, _LAGUERRE_ORDERS[1])
                rad_err = abs(v2 - v)
                # angular check on the larger node set
                s2, w2 = np.polynomial.laguerre.laggauss(_LAGUERRE_ORDERS[1])
                val, ang_err = _angular_refine_nodes(reg, s2, w2, v2, share / 2)
            else:
                br = shell_breaks if reg.name == "shell" else ball_breaks
                v, rad_err, leaves = _adaptive_radial(reg, br, share / 2)
                val, ang_err = _angular_refine(reg, leaves, v, share / 2)
            values[reg.name] = val
            errors[reg.name] = rad_err + ang_err
        if errors["tail"] <= 0.1 * tol or budget.exhausted:
            break
        far *= 2.0
    value = math.fsum(values.values())
    floor = 64 * np.finfo(float).eps * sum(abs(v) for v in values.values())
    err = sum(errors.values()) + floor
    converged = bool(not budget.exhausted and err <= 2 * tol + floor)
    return NumericCoeff(value, err, values, converged, budget.used, "cubature", errors)


def _angular_refine_nodes(region: _Region, t, w, base_value, tol):
    leaves_sum = lambda lv: float(region.angular(t, lv) @ w)  # noqa: E731
    value = base_value
    while True:
        lp, lt = region.levels
        cand = []
        for lv in ((lp + 1, lt), (lp, lt + 1)):
            if lv[0] < len(_PSI_LEVELS) and lv[1] < len(_THETA_LEVELS):
                cand.append((lv, leaves_sum(lv)))
        errs = [abs(v - value) for _, v in cand]
        if not cand or sum(errs) <= tol or region.budget.exhausted:
            return value + sum(v - value for _, v in cand), sum(errs)
        best = max(zip(errs, [lv for lv, _ in cand]))[1]
        region.levels = list(best)
        value = leaves_sum(region.levels)


# ---------------------------------------------------------------------------
# Monte Carlo


def _uniform_s3(rng, shape):
    v = rng.standard_normal(tuple(np.atleast_1d(shape)) + (DIM,))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def mc_batch(f, centers, rho, origin, far_radius, mass: float, samples: int, rng, excision=0.0):
    """Independent importance-sampled estimates for a batch of B configurations.

    ``centers`` has shape (B, K, 4); ``rho``, ``far_radius`` and ``excision``
    are scalars or (B,) arrays; ``origin`` is (B, 4).  ``f`` receives points
    of shape (B, n, 4) and returns (B, n).  Returns (means, standard errors,
    region contributions of shape (B, K + 2)), regions ordered as balls,
    shell, tail.
    """
    c = np.asarray(centers, dtype=float)
    b, k, _ = c.shape
    n = samples
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (b,))[:, None]
    r0 = np.broadcast_to(np.asarray(excision, dtype=float), (b,))[:, None]
    far = np.broadcast_to(np.asarray(far_radius, dtype=float), (b,))[:, None]
    origin = np.asarray(origin, dtype=float)
    m = mass
    alpha_ball = 0.5 / k if k else 0.0
    alpha_far = 1.0 - alpha_ball * k
    comp = rng.choice(k + 1, size=(b, n), p=[alpha_ball] * k + [alpha_far])
    direction = _uniform_s3(rng, (b, n))
    r_ball = r0 + (rho - r0) * rng.random((b, n))
    r_far = rng.gamma(2.0, 1.0 / m, (b, n))
    anchor = np.concatenate([c, origin[:, None, :]], axis=1)  # (B, K+1, 4)
    base = np.take_along_axis(anchor, comp[:, :, None], axis=1)
    y = base + np.where(comp < k, r_ball, r_far)[:, :, None] * direction

    q = np.zeros((b, n))
    keep = np.ones((b, n), dtype=bool)
    region = np.full((b, n), k + 1)
    d0 = np.linalg.norm(y - origin[:, None, :], axis=-1)
    region[d0 <= far] = k
    for i in range(k):
        d = np.linalg.norm(y - c[:, i : i + 1, :], axis=-1)
        inside = (d >= r0) & (d <= rho)
        with np.errstate(divide="ignore"):
            q += np.where(inside, alpha_ball / ((rho - r0) * SPHERE_AREA * d**3), 0.0)
        keep &= (d >= r0) & (d > 0)
        region[d < rho] = i
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        q += alpha_far * m * m * np.exp(-m * d0) / (SPHERE_AREA * d0**2)

    with np.errstate(all="ignore"):
        fv = np.asarray(f(y), dtype=float).reshape(b, n)
    bad = keep & ~np.isfinite(fv)
    if bad.any():
        raise QuadratureError("non-finite integrand sample", y[bad][0])
    ratio = np.where(keep, fv, 0.0) / q
    means = ratio.mean(axis=1)
    stderr = ratio.std(axis=1, ddof=1) / math.sqrt(n) if n > 1 else np.full(b, math.inf)
    parts = np.stack([np.where(region == j, ratio, 0.0).sum(axis=1) / n for j in range(k + 2)], axis=1)
    return means, stderr, parts


def mc_integrate_r4(f, plan: QuadPlan, samples: int = 100_000, seed=0) -> NumericCoeff:
    """Importance-sampled Monte Carlo estimate with its standard error.

    Proposal mixture: for each centre, uniform radius in [excision, rho]
    (density ~ |y - x_i|^-3) with uniform direction; plus a Gamma(2, m)
    radius about the centroid for the bulk and the exponential tail.
    Points within ``plan.excision`` of a centre contribute zero.
    Deterministic for a fixed seed (an int or a tuple of ints).
    """
    rng = np.random.default_rng(seed)

    def fb(y):
        return np.asarray(f(y.reshape(-1, DIM)), dtype=float)

    _, stderr, parts = mc_batch(
        fb, plan.centers[None], plan.rho, plan.origin[None], plan.far_radius, plan.mass, samples, rng, plan.excision
    )
    breakdown = {name: float(v) for name, v in zip(plan.region_names(), parts[0])}
    value = math.fsum(breakdown.values())
    return NumericCoeff(value, float(stderr[0]), breakdown, True, samples, "mc")
