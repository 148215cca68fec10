"""Jacobi matrices: measure <-> coefficients, traces of V(T_N), seam terms.

Index conventions follow the usual 1-based notation in docstrings
(b_1..b_N on the diagonal, a_1..a_{N-1} off it); arrays are 0-based.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConvergenceError, ValidationError
from .measures import GridMeasure, MeasureModel, SupportSet, merge_atoms
from .poly import Polynomial


@dataclass(frozen=True, eq=False)
class JacobiSequence:
    """Recursion coefficients (b_1, a_1, b_2, ..., b_N)."""

    b: np.ndarray
    a: np.ndarray

    def __init__(self, b, a):
        b = np.array(b, dtype=float).ravel()
        a = np.array(a, dtype=float).ravel()
        if len(b) == 0:
            raise ValidationError("Jacobi sequence needs at least one diagonal entry")
        if len(a) != len(b) - 1:
            raise ValidationError("need len(a) == len(b) - 1")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(a))):
            raise ValidationError("Jacobi coefficients must be finite")
        if np.any(a < 0):
            raise ValidationError("off-diagonal coefficients must be nonnegative")
        b.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a", a)

    def __len__(self):
        return len(self.b)

    def truncate(self, N: int) -> "JacobiSequence":
        """Projection pi_N onto the first 2N - 1 coordinates."""
        if not 1 <= N <= len(self):
            raise ValidationError(f"cannot truncate length {len(self)} sequence to {N}")
        return JacobiSequence(self.b[:N], self.a[:N - 1])

    def matrix(self, N: int | None = None) -> np.ndarray:
        N = len(self) if N is None else N
        return np.diag(self.b[:N]) + np.diag(self.a[:N - 1], 1) + np.diag(self.a[:N - 1], -1)

    def swap_parity(self) -> "JacobiSequence":
        """Exchange a_{2k-1} and a_{2k} for every complete pair."""
        a = self.a.copy()
        m = len(a) // 2 * 2
        a[0:m:2], a[1:m:2] = self.a[1:m:2], self.a[0:m:2]
        return JacobiSequence(self.b, a)

    def to_json(self) -> dict:
        return {"b": self.b.tolist(), "a": self.a.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "JacobiSequence":
        try:
            return cls(d["b"], d["a"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed JacobiSequence JSON: {exc}") from exc

    @classmethod
    def free(cls, N: int) -> "JacobiSequence":
        return cls(np.zeros(N), np.ones(N - 1))


# ------------------------------------------------------ measure -> coeffs

def lanczos(x: np.ndarray, w: np.ndarray, N: int, breakdown_tol: float | None = None):
    """Lanczos on diag(x) started from sqrt(w), full reorthogonalization.

    Returns (b, a) of length k and k - 1 with k <= N (shorter on breakdown).
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    keep = w > 0
    x, w = x[keep], w[keep]
    if len(x) == 0:
        raise ValidationError("measure has no mass")
    w = w / w.sum()
    if breakdown_tol is None:
        breakdown_tol = 1e-12 * max(float(np.max(np.abs(x))), 1e-300)
    n = len(x)
    Q = np.empty((min(N, n), n))
    Q[0] = np.sqrt(w)
    b = np.empty(N)
    a = np.empty(max(N - 1, 0))
    for k in range(N):
        z = x * Q[k]
        b[k] = Q[k] @ z
        if k == N - 1:
            return b, a
        z -= b[k] * Q[k]
        if k > 0:
            z -= a[k - 1] * Q[k - 1]
        Qk = Q[:k + 1]
        for _ in range(2):
            z -= (Qk @ z) @ Qk
        ak = float(np.linalg.norm(z))
        if ak <= breakdown_tol or k + 1 >= n:
            return b[:k + 1], a[:k]
        a[k] = ak
        Q[k + 1] = z / ak
    return b, a


def measure_to_jacobi(mu, N: int, nodes_per_coefficient: int = 40) -> JacobiSequence:
    """First N recursion coefficients of mu (normalized internally).

    The ac part is discretized with nodes_per_coefficient * N composite
    Gauss-Legendre nodes per interval (in the angle variable), atoms enter
    as they are.  On Lanczos breakdown (finitely supported mu) the returned
    sequence is shorter than N.
    """
    if N < 1:
        raise ValidationError("N must be positive")
    if isinstance(mu, GridMeasure):
        mu = MeasureModel(mu)
    x, w = mu.discretize(max(nodes_per_coefficient * N, 200))
    b, a = lanczos(x, w, N)
    return JacobiSequence(b, np.maximum(a, 0.0))


# ------------------------------------------------------ coeffs -> measure

@njit(cache=True)
def _ql_first_row(d, e, maxit):
    # implicit QL with Wilkinson-type shift; z is the first row of the eigenvectors
    n = d.shape[0]
    z = np.zeros(n)
    z[0] = 1.0
    ok = True
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) + dd == dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > maxit:
                ok = False
                break
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            early = False
            while i >= l:
                f = s * e[i]
                bb = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    early = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * bb
                p = s * r
                d[i + 1] = g + p
                g = c * r - bb
                f = z[i + 1]
                z[i + 1] = s * z[i] + c * f
                z[i] = c * z[i] - s * f
                i -= 1
            if early:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
        if not ok:
            break
    return d, z, ok


@njit(cache=True)
def _twisted_first_components(b, a, lam):
    # eigenvector of T - lam I from the twisted LDL^T / UDU^T factorization;
    # components come out as products of multipliers, so tiny ones keep
    # their relative accuracy
    n = b.shape[0]
    w = np.empty(lam.shape[0])
    dp = np.empty(n)
    dm = np.empty(n)
    z = np.empty(n)
    tiny = 1e-300
    for k in range(lam.shape[0]):
        mu = lam[k]
        dp[0] = b[0] - mu
        for i in range(n - 1):
            if abs(dp[i]) < tiny:
                dp[i] = tiny
            dp[i + 1] = b[i + 1] - mu - a[i] * a[i] / dp[i]
        dm[n - 1] = b[n - 1] - mu
        for i in range(n - 2, -1, -1):
            if abs(dm[i + 1]) < tiny:
                dm[i + 1] = tiny
            dm[i] = b[i] - mu - a[i] * a[i] / dm[i + 1]
        r = 0
        best = np.inf
        for i in range(n):
            g = abs(dp[i] + dm[i] - (b[i] - mu))
            if g < best:
                best = g
                r = i
        z[r] = 1.0
        for i in range(r - 1, -1, -1):
            z[i] = -(a[i] / dp[i]) * z[i + 1]
        for i in range(r, n - 1):
            z[i + 1] = -(a[i] / dm[i + 1]) * z[i]
        # normalize by the largest component first to avoid overflow
        big = 0.0
        for i in range(n):
            if abs(z[i]) > big:
                big = abs(z[i])
        s = 0.0
        for i in range(n):
            s += (z[i] / big) ** 2
        w[k] = (z[0] / big) ** 2 / s
    return w


def tridiagonal_spectrum(r: JacobiSequence, maxit: int = 30, refine: bool = True):
    """Eigenvalues (ascending) and squared first eigenvector components.

    Eigenvalues and first-row components come from implicit QL.  With
    refine=True the weights are recomputed from twisted factorizations at
    the QL eigenvalues, which keeps exponentially small weights accurate
    in the relative sense (needed to invert the map back to coefficients).
    """
    d = np.array(r.b, dtype=float)
    e = np.zeros(len(d))
    e[:-1] = r.a
    lam, z, ok = _ql_first_row(d, e, maxit)
    if not ok:
        raise ConvergenceError("QL iteration did not converge")
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    if refine and len(lam) > 1:
        w = _twisted_first_components(np.array(r.b, dtype=float), np.array(r.a, dtype=float), lam)
    else:
        w = z[order] ** 2
    return lam, w / w.sum()


def jacobi_to_measure(r: JacobiSequence) -> MeasureModel:
    """Spectral measure of T_N at e_1: atoms at eigenvalues, weights u_k(1)^2."""
    if len(r) > 1 and np.any(r.a <= 0):
        raise ValidationError("off-diagonal coefficients must be positive")
    lam, w = tridiagonal_spectrum(r)
    # distinct eigenvalues are guaranteed for a_k > 0; guard exact ties from rounding
    if np.any(np.diff(lam) <= 0):
        return MeasureModel(None, merge_atoms(lam, w))
    return MeasureModel(None, list(zip(lam, w)))


def free_tail_m(r: JacobiSequence, z):
    """m(z) = int dmu(t)/(t - z) for r continued by the free tail (b = 0, a = 1).

    Backward continued fraction m_k = 1/(b_k - z - a_k^2 m_{k+1}) started
    from the free m-function; a_n = 1 links the last stored entry to the tail.
    """
    z = np.asarray(z, dtype=complex)
    s = np.sqrt(z - 2) * np.sqrt(z + 2)        # branch with s ~ z at infinity
    m = (-z + s) / 2
    a2 = np.concatenate([np.asarray(r.a, dtype=float) ** 2, [1.0]])
    for k in range(len(r) - 1, -1, -1):
        m = 1.0 / (r.b[k] - z - a2[k] * m)
    return m


def perturbed_free_measure(r: JacobiSequence, n_nodes: int = 4001, extra: int = 2000,
                           gap: float = 1e-6) -> MeasureModel:
    """Spectral measure of the infinite Jacobi matrix equal to r followed by b = 0, a = 1.

    The ac part on [-2, 2] is Im m(x + i0)/pi from the exact continued
    fraction.  Eigenvalues outside [-2, 2] and their weights are read off a
    truncation padded with `extra` free entries (their errors decay like
    exp(-2 extra acosh(|x|/2))).
    """
    if len(r) > 1 and np.any(r.a <= 0):
        raise ValidationError("off-diagonal coefficients must be positive")
    big = JacobiSequence(np.concatenate([r.b, np.zeros(extra)]),
                         np.concatenate([r.a, np.ones(extra)]))
    lam, w = tridiagonal_spectrum(big)
    out = np.abs(lam) > 2 + gap
    atoms = merge_atoms(lam[out], w[out]) if np.any(out) else ()
    ac_mass = 1.0 - float(np.sum(w[out]))
    # Chebyshev points; end values zeroed (the density may blow up at +-2 at resonance)
    x = -2 * np.cos(np.linspace(0, np.pi, n_nodes))
    dens = np.zeros(n_nodes)
    dens[1:-1] = np.imag(free_tail_m(r, x[1:-1] + 0j)) / np.pi
    dens = np.maximum(dens, 0.0)
    ac = GridMeasure.from_nodes(SupportSet([(-2.0, 2.0)]), [x], [dens])
    ac = ac.scaled(ac_mass / ac.mass)
    return MeasureModel(ac, atoms)


# ------------------------------------------------------------------ traces

def trace_powers(b: np.ndarray, a: np.ndarray, jmax: int) -> np.ndarray:
    """tr(T^j) for j = 0..jmax using banded products (no dense matrices)."""
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    N = len(b)
    W = jmax + 1
    # band[o + W, i] = P[i, i + o]; zero outside the matrix
    band = np.zeros((2 * W + 1, N))
    band[W] = 1.0
    pad = W + 2
    bp = np.zeros(N + 2 * pad)
    bp[pad:pad + N] = b
    ap = np.zeros(N + 2 * pad)
    ap[pad:pad + N - 1] = a
    i = np.arange(N)
    out = np.empty(jmax + 1)
    out[0] = N
    for j in range(1, jmax + 1):
        new = np.zeros_like(band)
        for o in range(-j, j + 1):
            col = i + o + pad
            acc = band[o + W] * bp[col]
            if o - 1 >= -W:
                acc = acc + band[o - 1 + W] * ap[col - 1]
            if o + 1 <= W:
                acc = acc + band[o + 1 + W] * ap[col]
            valid = (i + o >= 0) & (i + o < N)
            new[o + W] = np.where(valid, acc, 0.0)
        band = new
        out[j] = band[W].sum()
    return out


def trace_poly(r: JacobiSequence, N: int, V: Polynomial) -> float:
    """tr V(T_N) with T_N the leading N x N block of r."""
    if not 1 <= N <= len(r):
        raise ValidationError(f"N = {N} outside 1..{len(r)}")
    if not V.coeffs:
        return 0.0
    t = trace_powers(r.b[:N], r.a[:N - 1], V.degree)
    return float(np.dot(V.coeffs, t))


def _window(r: JacobiSequence, lo: int, hi: int):
    # 1-based inclusive window of b, with a_lo..a_{hi-1}
    return r.b[lo - 1:hi].copy(), r.a[lo - 1:hi - 1].copy()


def _check_window(r: JacobiSequence, N: int, d: int, name: str):
    if N < 1:
        raise ValidationError("N must be positive")
    if N + d > len(r):
        raise ValidationError(f"window extends beyond available sequence {name} "
                              f"(need index {N + d}, have {len(r)})")


def boundary_coupling(r: JacobiSequence, rV: JacobiSequence, N: int, V: Polynomial) -> float:
    """Seam term M of the decomposition of tr V(T_n) - tr V(T_n^V) at index N.

    A is the leading N-block of r (or rV for A-hat), B the rest of r.  The
    value [tr V(A+B) - tr V(A)] - [tr V(Ahat+B) - tr V(Ahat)] only involves
    closed walks through the seam, so it is evaluated on the window
    [N - d, N + d] with d = deg V / 2.
    """
    d = max(V.degree, 0) // 2
    _check_window(r, N, d, "r")
    _check_window(rV, N, d, "rV")
    if d <= 1:
        return 0.0
    lo, hi = max(1, N - d), N + d
    k = np.arange(lo, hi + 1)
    ka = k[:-1]
    br, ar = _window(r, lo, hi)
    bv, av = _window(rV, lo, hi)
    inA_b, inA_a = k <= N, ka <= N - 1
    bB, aB = np.where(inA_b, 0.0, br), np.where(inA_a, 0.0, ar)
    bA, aA = np.where(inA_b, br, 0.0), np.where(inA_a, ar, 0.0)
    bH, aH = np.where(inA_b, bv, 0.0), np.where(inA_a, av, 0.0)
    c = np.array(V.coeffs)
    c[0] = 0.0  # identity terms cancel

    def tv(bb, aa):
        return float(np.dot(c, trace_powers(bb, aa, V.degree)))

    return (tv(bA + bB, aA + aB) - tv(bA, aA)) - (tv(bH + bB, aH + aB) - tv(bH, aH))


def m_plus(r: JacobiSequence, rV: JacobiSequence, N: int, d: int) -> float:
    """Sum of |b_k - b_k^V| and |a_k - a_k^V| over the window around N."""
    _check_window(r, N, d, "r")
    _check_window(rV, N, d, "rV")
    lo, hi = max(1, N - d), N + d
    db = np.abs(r.b[lo - 1:hi] - rV.b[lo - 1:hi]).sum()
    da = np.abs(r.a[lo - 1:hi - 1] - rV.a[lo - 1:hi - 1]).sum()
    return float(db + da)


def coupling_constant(K: float, V: Polynomial) -> float:
    """C(K, V) = sum_j |c_j| j 3^j max(1, K)^(j-1), a walk-counting bound."""
    Kp = max(1.0, float(K))
    return float(sum(abs(c) * j * 3.0 ** j * Kp ** (j - 1) for j, c in enumerate(V.coeffs) if j > 0))
