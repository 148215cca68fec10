"""Equilibrium measures of polynomial potentials and the outlier rate F_V.

Two routes to mu_V:

* one-cut: damped Newton on the endpoint equations of an interval
  [c - 2h, c + 2h], then the density polynomial A from `poly.v_to_a`.
* grid: projected-gradient minimization of the discretized weighted
  log-energy on a uniform cell grid; handles any number of cuts.

When the support is known exactly (one-cut, or the symmetric quartic), the
density is stored in closed form rho = |Q| sqrt|R| / (2 pi), R the product of
(x - endpoint) and Q the polynomial part of V' / sqrt(R) at infinity.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import toeplitz
from scipy.optimize import minimize_scalar

from .errors import ConvergenceError, NotOneCutError, ValidationError
from .measures import GridMeasure, SupportSet
from .poly import Polynomial, arcsine_moment, v_to_a, validate_potential

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- one-cut

class OneCutSolution(NamedTuple):
    support: SupportSet
    A: Polynomial
    measure: GridMeasure
    center: float
    halfwidth: float
    iterations: int


def _endpoint_residual(V: Polynomial, c: float, h: float):
    """Residuals and Jacobian of the two endpoint conditions in (c, h)."""
    dV = V.derivative()
    d2V = dV.derivative()
    W = dV.compose_affine(c, h)      # V'(c + h t)
    W2 = d2V.compose_affine(c, h)    # V''(c + h t)

    def nu(p: Polynomial, shift: int = 0) -> float:
        return sum(a * arcsine_moment(k + shift) for k, a in enumerate(p.coeffs))

    F = np.array([h * nu(W), h * nu(W, 1) - 2.0])
    tW2 = Polynomial((0.0,) + W2.coeffs) if W2.coeffs else Polynomial()
    # d/dc [h W] = h W2 ; d/dh [h W] = W + h t W2
    J = np.array([[h * nu(W2), nu(W) + h * nu(tW2)],
                  [h * nu(W2, 1), nu(W, 1) + h * nu(tW2, 1)]])
    return F, J


def _newton_endpoints(V: Polynomial, c: float, h: float, tol: float, maxiter: int):
    F, J = _endpoint_residual(V, c, h)
    res = np.max(np.abs(F))
    for it in range(maxiter):
        if res <= tol:
            return c, h, it, res
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-12:
            cn, hn = c + lam * step[0], h + lam * step[1]
            if hn > 0:
                Fn, Jn = _endpoint_residual(V, cn, hn)
                rn = np.max(np.abs(Fn))
                if rn < res:
                    break
            lam /= 2
        else:
            break
        c, h, F, J, res = cn, hn, Fn, Jn, rn
    return c, h, maxiter, res


def solve_one_cut(V: Polynomial, tol: float = 1e-12, maxiter: int = 60,
                  neg_tol: float = 1e-10, n_nodes: int = 4001) -> OneCutSolution:
    """Equilibrium measure under the one-interval hypothesis.

    Raises NotOneCutError when the resulting density polynomial A dips below
    -neg_tol on [-2, 2], and ConvergenceError if Newton stalls.
    """
    rep = validate_potential(V)
    d2 = rep.degree
    # pure-power scaling as the starting half-width
    h0 = (2.0 / (d2 * V.leading * arcsine_moment(d2))) ** (1.0 / d2)
    xs = np.linspace(-4 * h0, 4 * h0, 801)
    c_min = float(xs[np.argmin(V(xs))])
    best = None
    for c0, hs in ((0.0, 1.0), (c_min, 1.0), (0.0, 2.0), (c_min, 0.5), (0.0, 0.5), (c_min, 2.0)):
        c, h, it, res = _newton_endpoints(V, c0, h0 * hs, tol, maxiter)
        if best is None or res < best[3]:
            best = (c, h, it, res)
        if res <= tol:
            break
    c, h, it, res = best
    if not res <= tol:
        raise ConvergenceError(f"endpoint Newton did not converge (residual {res:.3e})")
    A = v_to_a(V.compose_affine(c, h))
    t = np.linspace(-2, 2, 4001)
    amin = float(np.min(A(t))) if A.coeffs else 0.0
    scale = max(1.0, float(np.max(np.abs(A(t))))) if A.coeffs else 1.0
    if amin < -neg_tol * scale:
        raise NotOneCutError("one-cut hypothesis violated: A < 0 on [-2, 2]",
                             A=A, center=c, halfwidth=h)
    support = SupportSet([(c - 2 * h, c + 2 * h)])
    Q = A.compose_affine(-c / h, 1.0 / h) * (1.0 / h ** 2)
    measure = GridMeasure.from_profile(support, Q, 1.0, n_nodes)
    return OneCutSolution(support, A, measure, c, h, it)


# ---------------------------------------------------- closed-form profiles

def sqrt_profile_polynomial(V: Polynomial, support: SupportSet) -> Polynomial:
    """Polynomial part of V'(z) / sqrt(R(z)) as z -> infinity."""
    dV = V.derivative()
    e = support.boundary
    M = support.M
    K = max(dV.degree - M, 0)
    # series of prod (1 - e_i w)^(-1/2) in w = 1/z
    s = np.zeros(K + 1)
    s[0] = 1.0
    k = np.arange(K + 1)
    base = np.array([math.comb(2 * j, j) / 4.0 ** j for j in range(K + 1)])
    for ei in e:
        s = np.convolve(s, base * ei ** k)[: K + 1]
    Q = np.zeros(K + 1)
    for p in range(K + 1):
        Q[p] = sum(dV[p + M + j] * s[j] for j in range(K + 1 - p))
    return Polynomial(Q)


def equilibrium_from_support(V: Polynomial, support: SupportSet,
                             n_nodes: int = 4001) -> GridMeasure:
    """Closed-form density for a potential whose support is known exactly."""
    Q = sqrt_profile_polynomial(V, support)
    return GridMeasure.from_profile(support, Q, 1.0, n_nodes)


@dataclass(frozen=True, eq=False)
class QuarticEquilibrium:
    """Two-cut data for V = x^4/4 - v x^2/2."""

    v: float
    support: SupportSet
    ell: tuple          # (l1, l2), roots of l^2 - v l + 1 = 0
    measure: GridMeasure

    @property
    def V(self) -> Polynomial:
        return quartic_potential(self.v)


def quartic_potential(v: float) -> Polynomial:
    return Polynomial([0.0, 0.0, -v / 2, 0.0, 0.25])


def quartic_equilibrium(v: float, n_nodes: int = 4001) -> QuarticEquilibrium:
    """Support [-a+, -a-] u [a-, a+] with a+- = sqrt(v +- 2), and coefficient limits."""
    if not v > 2:
        raise ValidationError("quartic two-cut regime needs v > 2")
    am, ap = math.sqrt(v - 2), math.sqrt(v + 2)
    support = SupportSet([(-ap, -am), (am, ap)])
    disc = math.sqrt(v * v - 4)
    ell = ((v - disc) / 2, (v + disc) / 2)
    mu = equilibrium_from_support(quartic_potential(v), support, n_nodes)
    return QuarticEquilibrium(v, support, ell, mu)


# ------------------------------------------------------------ grid solver

def _G(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    nz = u != 0
    out[nz] = u[nz] ** 2 / 2 * np.log(np.abs(u[nz])) - 0.75 * u[nz] ** 2
    return out


def log_kernel(n: int, h: float) -> np.ndarray:
    """Cell-pair averages of log|x - y| on a uniform grid of width h.

    Entry (i, j) is the exact mean of log|x - y| over x in cell i, y in cell j;
    the diagonal equals log h - 3/2.
    """
    k = np.arange(n) * h
    col = (_G(k + h) - 2 * _G(k) + _G(k - h)) / h ** 2
    return toeplitz(col)


def project_simplex(y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, len(y) + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(y - theta, 0.0)


@dataclass
class GridEnergyResult:
    x: np.ndarray
    h: float
    weights: np.ndarray
    energies: list = field(default_factory=list)
    gap: float = math.inf
    iterations: int = 0

    @property
    def energy(self) -> float:
        return self.energies[-1]


def grid_energy(V: Polynomial, x: np.ndarray, h: float, w: np.ndarray, L=None) -> float:
    """Discrete weighted log-energy sum V(x_i) w_i - w^T L w."""
    if L is None:
        L = log_kernel(len(x), h)
    return float(V(x) @ w - w @ (L @ w))


def minimize_grid_energy(V: Polynomial, domain, gridsize: int, tol: float = 1e-10,
                         maxiter: int = 20000) -> GridEnergyResult:
    """Projected gradient with Barzilai-Borwein steps and Armijo backtracking.

    The stopping rule is the Frank-Wolfe gap g.w - min(g) < tol, which bounds
    the distance to the optimal energy.
    """
    a, b = map(float, domain)
    if not (math.isfinite(a) and math.isfinite(b)) or not a < b:
        raise ValidationError("degenerate domain")
    if gridsize < 200:
        raise ValidationError("gridsize must be at least 200")
    n = int(gridsize)
    h = (b - a) / n
    x = a + h * (np.arange(n) + 0.5)
    L = log_kernel(n, h)
    Vx = V(x)
    w = np.full(n, 1.0 / n)
    g = Vx - 2 * (L @ w)
    e = float(Vx @ w - w @ (L @ w))
    res = GridEnergyResult(x, h, w, [e])
    step = 1.0
    for it in range(maxiter):
        gap = float(g @ w - g.min())
        res.gap, res.iterations = gap, it
        if gap < tol:
            break
        while True:
            gc = g - g @ w           # centered gradient: tangent to the simplex
            wn = project_simplex(w - step * gc)
            s = wn - w
            Ls = L @ s
            slope = float(gc @ s)
            dE = slope - float(s @ Ls)  # exact change of the quadratic energy
            if dE <= 1e-4 * slope:
                break
            step /= 2
            if step < 1e-30:
                raise ConvergenceError("grid energy line search stalled")
        gn = g - 2 * Ls
        y = gn - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else 2 * step
        w, g, e = wn, gn, e + dE
        res.energies.append(e)
    else:
        raise ConvergenceError(f"grid solver hit maxiter with gap {res.gap:.3e}")
    res.weights = w
    return res


def extract_support(x: np.ndarray, h: float, w: np.ndarray, rel_threshold: float = 1e-3,
                    min_run: int = 3) -> list:
    """Maximal runs of cells with density above rel_threshold * max, as index slices."""
    dens = w / h
    mask = dens > rel_threshold * dens.max()
    runs, i, n = [], 0, len(x)
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            if j - i + 1 >= min_run:
                runs.append((i, j))
            i = j + 1
        else:
            i += 1
    return runs


def grid_to_measure(res: GridEnergyResult, rel_threshold: float = 1e-3) -> GridMeasure:
    x, h, w = res.x, res.h, res.weights
    runs = extract_support(x, h, w, rel_threshold)
    if not runs:
        raise ConvergenceError("grid solution has empty support")
    intervals, nodes, dens = [], [], []
    for i, j in runs:
        l, r = x[i] - h / 2, x[j] + h / 2
        intervals.append((l, r))
        nodes.append(np.concatenate([[l], x[i:j + 1], [r]]))
        dens.append(np.concatenate([[0.0], w[i:j + 1] / h, [0.0]]))
    gm = GridMeasure.from_nodes(SupportSet(intervals), nodes, dens)
    return gm.scaled(1.0 / gm.mass)


def solve_grid(V: Polynomial, domain, gridsize: int, tol: float = 1e-10,
               maxiter: int = 20000) -> GridMeasure:
    """Equilibrium measure by direct energy minimization on a cell grid."""
    validate_potential(V)
    return grid_to_measure(minimize_grid_energy(V, domain, gridsize, tol, maxiter))


def support_bound(V: Polynomial) -> float:
    """Radius R with supp mu_V inside [-R, R], from a crude growth comparison."""
    validate_potential(V)
    xs = np.linspace(-50, 50, 20001)
    # V(x) - 2 log|x| exceeds min V + 2 log(2R) + slack outside the support
    base = float(np.min(V(xs)))
    for R in np.linspace(1.0, 50.0, 491):
        out = xs[np.abs(xs) >= R]
        if np.all(V(out) - 2 * np.log(np.abs(out)) > base + 2 * math.log(2 * R) + 1.0):
            return float(R)
    return 50.0


# ---------------------------------------------------- equilibrium bundle

@dataclass(frozen=True, eq=False)
class Equilibrium:
    """Everything downstream code needs about mu_V."""

    V: Polynomial
    measure: GridMeasure
    one_cut: bool
    A: Polynomial | None = None

    @property
    def support(self) -> SupportSet:
        return self.measure.support


def equilibrium_measure(V: Polynomial, method: str = "auto", gridsize: int = 1200,
                        domain=None) -> Equilibrium:
    """One-cut Newton when it applies, otherwise the grid solver."""
    validate_potential(V)
    if method in ("auto", "onecut"):
        try:
            sol = solve_one_cut(V)
            return Equilibrium(V, sol.measure, True, sol.A)
        except NotOneCutError:
            if method == "onecut":
                raise
    if method not in ("auto", "grid", "onecut"):
        raise ValidationError(f"unknown equilibrium method {method!r}")
    if domain is None:
        R = support_bound(V)
        domain = (-R, R)
    gm = solve_grid(V, domain, gridsize)
    return Equilibrium(V, gm, gm.support.M == 1)


# ------------------------------------------------- potentials and rates

def _segment_log_integral(x: np.ndarray, xn: np.ndarray, yn: np.ndarray) -> np.ndarray:
    """Exact integral of log|x - xi| against the piecewise-linear density."""
    def P0(u):
        au = np.abs(u)
        return np.where(au > 0, u * np.log(np.where(au > 0, au, 1.0)) - u, 0.0)

    def P1(u):
        au = np.abs(u)
        return np.where(au > 0, u * u / 2 * np.log(np.where(au > 0, au, 1.0)) - u * u / 4, 0.0)

    x0, x1 = xn[:-1], xn[1:]
    y0 = yn[:-1]
    slope = (yn[1:] - yn[:-1]) / (x1 - x0)
    out = np.empty(len(x))
    chunk = max(1, 4_000_000 // max(len(x0), 1))
    for s in range(0, len(x), chunk):
        xc = x[s:s + chunk, None]
        u0, u1 = x0 - xc, x1 - xc
        # density at xi = x + u is y0 + slope (x - x0) + slope u
        base = y0 + slope * (xc - x0)
        val = base * (P0(u1) - P0(u0)) + slope * (P1(u1) - P1(u0))
        out[s:s + chunk] = val.sum(axis=1)
    return out


def log_potential(mu: GridMeasure, x):
    """Integral of log|x - xi| d mu(xi), exact for the piecewise-linear node density."""
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros(xa.shape)
    if mu.mass > 0:
        for xn, yn in zip(mu.nodes, mu.densities):
            out += _segment_log_integral(xa, np.asarray(xn), np.asarray(yn))
    return float(out[0]) if np.ndim(x) == 0 else out


def effective_potential(V: Polynomial, mu: GridMeasure, x):
    """J_V(x) = V(x) - 2 int log|x - xi| d mu_V(xi)."""
    return V(x) - 2 * log_potential(mu, x)


def _refine_min(fun, lo: float, hi: float, x0: float, f0: float):
    if hi - lo <= 0:
        return x0, f0
    r = minimize_scalar(fun, bounds=(lo, hi), method="bounded",
                        options={"xatol": 1e-10 * max(1.0, abs(x0))})
    if r.fun < f0:
        return float(r.x), float(r.fun)
    return x0, f0


def _scan_segments(V, mu, I: SupportSet, include_support: bool, pad: float = 2.0,
                   pts: int = 801):
    """Grid of abscissae for minimizing J_V, extended until the tails rise."""
    lo, hi = I.left - pad, I.right + pad
    J = lambda t: effective_potential(V, mu, t)
    for _ in range(20):
        d = 1e-3 * (hi - lo)
        left_ok = J(lo) > J(lo + d)
        right_ok = J(hi) > J(hi - d)
        if left_ok and right_ok:
            break
        if not left_ok:
            lo -= pad
        if not right_ok:
            hi += pad
    segs = []
    if include_support:
        segs.append((lo, hi))
    else:
        edges = [lo] + [e for e in I.boundary] + [hi]
        for k in range(0, len(edges), 2):
            segs.append((edges[k], edges[k + 1]))
    return segs


def minimize_J(V: Polynomial, mu: GridMeasure, include_support: bool = True,
               pts: int = 801):
    """Global minimizer of J_V, over R or over the complement of Int(I).

    Returns (argmin, min, scan_x, scan_J) where the scan arrays cover the
    searched set (segment endpoints included).
    """
    I = mu.support
    J = lambda t: effective_potential(V, mu, t)
    segs = _scan_segments(V, mu, I, include_support)
    xs_all, js_all = [], []
    best = (math.nan, math.inf)
    for lo, hi in segs:
        if hi <= lo:
            continue
        xs = np.linspace(lo, hi, pts)
        js = J(xs)
        xs_all.append(xs)
        js_all.append(js)
        # refine around every discrete local minimum
        cand = [i for i in range(len(xs))
                if (i == 0 or js[i] <= js[i - 1]) and (i == len(xs) - 1 or js[i] <= js[i + 1])]
        for i in cand:
            a, b = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
            xm, fm = _refine_min(lambda t: float(J(t)), a, b, xs[i], float(js[i]))
            if fm < best[1]:
                best = (xm, fm)
    return best[0], best[1], np.concatenate(xs_all), np.concatenate(js_all)


class OutlierRate:
    """F_V(x) = J_V(x) - inf J_V off the interior of the support, +inf inside.

    The infimum is computed once and cached.
    """

    def __init__(self, V: Polynomial, mu: GridMeasure):
        self.V = V
        self.mu = mu
        self.argmin, self.j_min, _, _ = minimize_J(V, mu, include_support=True)

    def __call__(self, x):
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.full(xa.shape, math.inf)
        off = ~self.mu.support.interior(xa)
        if np.any(off):
            out[off] = np.maximum(effective_potential(self.V, self.mu, xa[off]) - self.j_min, 0.0)
        return float(out[0]) if np.ndim(x) == 0 else out


def rate_F(V: Polynomial, mu: GridMeasure, x):
    """Large-deviation cost of an outlier at x (math.inf on the open support)."""
    return OutlierRate(V, mu)(x)


@dataclass(frozen=True)
class A2Report:
    passed: bool
    global_min: float
    global_argmin: float
    boundary_value: float
    offending: float | None
    reason: str
    A3: str = "unchecked"


def check_A2(V: Polynomial, mu: GridMeasure, tol: float = 1e-6, resolution: float | None = None) -> A2Report:
    """Check that J_V restricted to the complement of Int(I) is minimal only on the boundary.

    Also rejects inputs where J_V dips below its boundary value inside I,
    which cannot happen for a genuine equilibrium pair.
    """
    I = mu.support
    Jb = effective_potential(V, mu, I.boundary)
    bval = float(np.min(Jb))
    gx, gmin, _, _ = minimize_J(V, mu, include_support=True)
    if gmin < bval - tol:
        return A2Report(False, gmin, gx, bval, gx,
                        "effective potential drops below its boundary value")
    cx, cmin, xs, js = minimize_J(V, mu, include_support=False, pts=2001)
    if resolution is None:
        resolution = 4 * max(np.max(np.diff(np.unique(xs))), 1e-6)
    far = I.boundary_distance(xs) > resolution
    bad = far & (js <= bval + tol)
    if I.boundary_distance(cx) > resolution and cmin <= bval + tol:
        return A2Report(False, gmin, gx, bval, cx, "minimum attained away from the boundary")
    if np.any(bad):
        k = int(np.argmin(np.where(bad, js, np.inf)))
        return A2Report(False, gmin, gx, bval, float(xs[k]),
                        "minimum attained away from the boundary")
    return A2Report(True, gmin, gx, bval, None, "ok")
