"""Both sides of the sum rules, the gem conditions, and outlier bookkeeping.

Coefficient side:  U_N = tr V(T_N) - tr V(T_N^V) - 2 sum_{k<N} log(a_k / a_k^V).
Spectral side:     K(mu_V | mu) + sum of F_V over eigenvalues outside supp mu_V.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import (Equilibrium, OutlierRate, equilibrium_measure, quartic_equilibrium,
                          quartic_potential)
from .errors import NumericalError, ValidationError
from .jacobi import (JacobiSequence, boundary_coupling, coupling_constant, m_plus,
                     measure_to_jacobi, trace_powers)
from .measures import GridMeasure, MeasureModel, SupportSet, merge_atoms
from .poly import Polynomial, validate_potential

KL_FLOOR = 1e-300


# -------------------------------------------------------- coefficient side

def coefficient_sides(r: JacobiSequence, rV: JacobiSequence, V: Polynomial, N_max: int,
                      jobs: int = 1) -> np.ndarray:
    """U_1, ..., U_{N_max} (math.inf from the first N with a nonpositive a_k)."""
    if N_max > min(len(r), len(rV)):
        raise ValidationError("sequences shorter than N_max")
    c = np.array(V.coeffs)

    def tr(seq, N):
        return float(np.dot(c, trace_powers(seq.b[:N], seq.a[:N - 1], V.degree)))

    def one(N):
        return tr(r, N) - tr(rV, N)

    Ns = range(1, N_max + 1)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            traces = np.array(list(ex.map(one, Ns)))
    else:
        traces = np.array([one(N) for N in Ns])
    a, aV = r.a[:N_max - 1], rV.a[:N_max - 1]
    bad = (a <= 0) | (aV <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(bad, 0.0, np.log(np.where(bad, 1.0, a / np.where(bad, 1.0, aV))))
    cum = np.concatenate([[0.0], np.cumsum(logs)])
    U = traces - 2 * cum
    first_bad = np.nonzero(bad)[0]
    if len(first_bad):
        U[first_bad[0] + 1:] = math.inf
    return U


def coefficient_side(r: JacobiSequence, rV: JacobiSequence, V: Polynomial, N: int) -> float:
    """U_N for a single N; +inf if some a_k (k < N) is not positive."""
    return float(coefficient_sides(r, rV, V, N)[-1])


# ------------------------------------------------------- outlier encoding

@dataclass(frozen=True, eq=False)
class OutlierEncoding:
    """Rows i = 1..2M of outlier positions zeta and weights gamma, depth J.

    Row 2m-1 collects atoms left of l_m (down to the previous gap midpoint),
    row 2m atoms right of r_m (up to the next midpoint, inclusive); each row
    is ordered by decreasing distance to the support and padded with the
    adjacent endpoint and weight 0.
    """

    zeta: np.ndarray
    gamma: np.ndarray
    support: SupportSet

    @property
    def depth(self) -> int:
        return self.zeta.shape[1]

    def check(self) -> None:
        """Assert the row, ordering and padding invariants."""
        I = self.support
        ends = I.boundary
        th = I.midpoints
        M = I.M
        for i in range(2 * M):
            z, g = self.zeta[i], self.gamma[i]
            m = i // 2
            if i % 2 == 0:
                lo = -math.inf if m == 0 else th[m - 1]
                hi = ends[2 * m]
                ok = np.all((z <= hi) & ((z > lo) if m > 0 else True))
            else:
                lo = ends[2 * m + 1]
                hi = math.inf if m == M - 1 else th[m]
                ok = np.all((z >= lo) & (z <= hi))
            if not ok:
                raise AssertionError(f"row {i + 1} has entries outside its region")
            dist = I.distance(z)
            if np.any(np.diff(dist) > 0):
                raise AssertionError(f"row {i + 1} not ordered by distance")
            on_bd = dist == 0
            if np.any(on_bd != (g == 0)):
                raise AssertionError(f"row {i + 1}: zero weight must coincide with boundary padding")
            strict = ~on_bd[:-1]
            if np.any(np.diff(dist)[strict] == 0):
                raise AssertionError(f"row {i + 1}: ordering must be strict off the boundary")


def encode_outliers(mu: MeasureModel, I: SupportSet, J: int) -> OutlierEncoding:
    """Arrange the atoms of mu outside I into 2M ordered rows of depth J."""
    if J < 1:
        raise ValidationError("depth J must be positive")
    M = I.M
    ends = I.boundary
    th = I.midpoints
    rows = [[] for _ in range(2 * M)]
    for x, g in mu.outliers(I):
        if x < ends[0]:
            rows[0].append((x, g))
            continue
        if x > ends[-1]:
            rows[2 * M - 1].append((x, g))
            continue
        # gap index m (0-based): r_m < x < l_{m+1}
        m = int(np.nonzero(ends[1::2] < x)[0][-1])
        if x <= th[m]:
            rows[2 * m + 1].append((x, g))
        else:
            rows[2 * m + 2].append((x, g))
    zeta = np.empty((2 * M, J))
    gamma = np.zeros((2 * M, J))
    for i in range(2 * M):
        m = i // 2
        pad = ends[2 * m] if i % 2 == 0 else ends[2 * m + 1]
        # farthest from the support first
        row = sorted(rows[i], key=lambda t: -abs(t[0] - pad))[:J]
        zeta[i] = pad
        for j, (x, g) in enumerate(row):
            zeta[i, j] = x
            gamma[i, j] = g
    return OutlierEncoding(zeta, gamma, I)


def decode_theta(muI, enc: OutlierEncoding) -> MeasureModel:
    """mu_I plus atoms at every slot with positive weight (equal positions merged)."""
    if isinstance(muI, GridMeasure):
        base_ac, base_atoms = muI, ()
    elif isinstance(muI, MeasureModel):
        base_ac, base_atoms = muI.ac, muI.atoms
    elif muI is None:
        base_ac, base_atoms = None, ()
    else:
        raise ValidationError("mu_I must be a GridMeasure or MeasureModel")
    pos = [x for x, _ in base_atoms] + list(enc.zeta.ravel())
    wts = [g for _, g in base_atoms] + list(enc.gamma.ravel())
    return MeasureModel(base_ac, merge_atoms(pos, wts))


# ---------------------------------------------------------- spectral side

def kl_reversed(muV: GridMeasure, mu: MeasureModel, n_quad: int = 4000) -> float:
    """K(mu_V | mu) = -int log f d mu_V with f = d mu_ac / d mu_V.

    Returns math.inf when mu has no ac part or f vanishes (below KL_FLOOR)
    on a set of positive mu_V mass.
    """
    if isinstance(mu, GridMeasure):
        mu = MeasureModel(mu)
    if mu.ac is None or mu.ac.mass <= 0:
        return math.inf
    x, w = muV.quadrature(n_quad)
    pos = w > 0
    x, w = x[pos], w[pos]
    rhoV = muV.density(x)
    f = mu.ac.density(x) / rhoV
    if np.any(f <= KL_FLOOR):
        return math.inf
    return max(0.0, float(-np.dot(w, np.log(f)) / w.sum()))


def ac_mass_outside(mu: MeasureModel, I: SupportSet, tol: float = 1e-9) -> float:
    if mu.ac is None:
        return 0.0
    x, w = mu.ac.quadrature(2000)
    return float(w[~I.contains(x, tol * max(1.0, I.radius))].sum())


def in_S1(mu: MeasureModel, I: SupportSet, tol: float = 1e-12) -> bool:
    """True when the ac part of mu lives on I (atoms anywhere are allowed)."""
    return ac_mass_outside(mu, I) <= tol


@dataclass(frozen=True)
class SpectralSide:
    kl: float
    outlier_sum: float
    total: float
    outliers: tuple
    tail_bound: float = 0.0
    in_S1: bool = True


def spectral_components(mu: MeasureModel, V: Polynomial, muV: GridMeasure,
                        I: SupportSet | None = None, rate: OutlierRate | None = None,
                        n_quad: int = 4000) -> SpectralSide:
    """Reversed KL, outlier sum, and their total (math.inf outside S_1(I)).

    Outlier lists are finite, so the tail beyond the last stored outlier is
    empty and its bound is reported as 0.
    """
    I = muV.support if I is None else I
    if rate is None:
        rate = OutlierRate(V, muV)
    outs = mu.outliers(I)
    F = float(sum(rate(x) for x, _ in outs))
    kl = kl_reversed(muV, mu, n_quad)
    s1 = in_S1(mu, I)
    total = kl + F if s1 else math.inf
    return SpectralSide(kl, F, total, outs, 0.0, s1)


def spectral_side(mu: MeasureModel, V: Polynomial, muV: GridMeasure,
                  I: SupportSet | None = None, rate: OutlierRate | None = None) -> float:
    return spectral_components(mu, V, muV, I, rate).total


def smooth_spectral_measure(mu: MeasureModel, I: SupportSet, edge_tol: float = 1e-6) -> MeasureModel:
    """Turn a finitely supported spectral measure into ac part plus outliers.

    Eigenvalues within edge_tol of I are bulk: each carries its weight over
    the cell between the midpoints to its neighbours (cells end at the
    interval edges).  The rest stay atoms.
    """
    lam, w = mu.positions, mu.weights
    bulk = I.contains(lam, edge_tol)
    atoms = [(x, g) for x, g, b in zip(lam, w, bulk) if not b]
    nodes, dens, ivs = [], [], []
    for l, r in I.intervals:
        sel = (lam >= l - edge_tol) & (lam <= r + edge_tol)
        x = np.clip(lam[sel], l, r)
        g = w[sel]
        if len(x) < 2:
            atoms.extend(zip(lam[sel], g))
            continue
        mids = (x[1:] + x[:-1]) / 2
        edges = np.concatenate([[l], mids, [r]])
        rho = g / np.diff(edges)
        xn = np.concatenate([[l], x, [r]])
        yn = np.concatenate([[rho[0]], rho, [rho[-1]]])
        keep = np.concatenate([[True], np.diff(xn) > 0])
        xn, yn = xn[keep], yn[keep]
        trap = float(np.sum(0.5 * (yn[1:] + yn[:-1]) * np.diff(xn)))
        yn = yn * (g.sum() / trap)
        ivs.append((l, r))
        nodes.append(xn)
        dens.append(yn)
    ac = GridMeasure.from_nodes(SupportSet(ivs), nodes, dens) if ivs else None
    return MeasureModel(ac, merge_atoms([x for x, _ in atoms], [g for _, g in atoms]))


def lieb_thirring_sum(mu: MeasureModel, I: SupportSet, power: float = 1.5) -> float:
    """Sum of d(lambda, I)^power over the outliers of mu."""
    return float(sum(I.distance(x) ** power for x, _ in mu.outliers(I)))


# ------------------------------------------------------------------ report

VERDICTS = ("converged-equal", "corridor-consistent", "diverged", "spectral-infinite")


@dataclass(eq=False)
class SumRuleReport:
    N: np.ndarray
    U: np.ndarray
    boundary_terms: np.ndarray
    m_plus: np.ndarray
    corridor: np.ndarray
    spectral_kl: float
    outlier_sum: float
    spectral_total: float
    verdict: str
    one_cut: bool
    C: float
    tol_eq: float
    notes: dict = field(default_factory=dict)

    @property
    def residual(self) -> np.ndarray:
        """Measured U_N - spectral_total (not claimed to equal any remainder term)."""
        return self.U - self.spectral_total

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "U_N", "M", "M_plus", "corridor"])
        for row in zip(self.N, self.U, self.boundary_terms, self.m_plus, self.corridor):
            w.writerow([int(row[0])] + [f"{float(v):.17g}" for v in row[1:]])
        return buf.getvalue()

    def to_json(self) -> dict:
        def fl(v):
            return None if not math.isfinite(v) else float(v)
        return {"N": self.N.tolist(), "U": [fl(v) for v in self.U],
                "boundary_terms": self.boundary_terms.tolist(),
                "m_plus": self.m_plus.tolist(), "corridor": self.corridor.tolist(),
                "spectral_kl": fl(self.spectral_kl), "outlier_sum": fl(self.outlier_sum),
                "spectral_total": fl(self.spectral_total), "verdict": self.verdict,
                "one_cut": self.one_cut, "C": self.C, "tol_eq": self.tol_eq,
                "notes": self.notes}


def _check_compact(mu: MeasureModel, K: float):
    if mu.atoms and np.max(np.abs(mu.positions)) > K:
        raise ValidationError("measure has atoms outside [-K, K]")
    if mu.ac is not None and mu.ac.support.radius > K:
        raise ValidationError("measure has ac support outside [-K, K]")


def verify_sum_rule(mu: MeasureModel, V: Polynomial, N_max: int, K: float,
                    equilibrium: Equilibrium | None = None, tol_eq: float = 5e-3,
                    divergence_threshold: float = 10.0, tail_fraction: float = 0.25,
                    jobs: int = 1, rate: OutlierRate | None = None) -> SumRuleReport:
    """Compare U_N (N <= N_max) against the spectral side and classify the outcome."""
    rep = validate_potential(V)
    d = rep.d
    if not mu.normalized:
        raise ValidationError("measure must be normalized")
    _check_compact(mu, K)
    eq = equilibrium if equilibrium is not None else equilibrium_measure(V)
    muV = eq.measure
    I = muV.support
    n = N_max + d
    r = measure_to_jacobi(mu, n)
    if len(r) < n:
        raise NumericalError(f"coefficient computation broke down at length {len(r)} < {n}")
    rV = measure_to_jacobi(muV, n)
    U = coefficient_sides(r, rV, V, N_max, jobs)
    Ns = np.arange(1, N_max + 1)
    bt = np.array([boundary_coupling(r, rV, N, V) for N in Ns])
    mp = np.array([m_plus(r, rV, N, d) for N in Ns])
    C = coupling_constant(K, V)
    corridor = C * mp
    spec = spectral_components(mu, V, muV, I, rate)
    t0 = min(int((1 - tail_fraction) * N_max), N_max - 2) if N_max > 2 else 0
    tail = U[t0:]
    one_cut = I.M == 1
    notes = {"tail_start": int(t0 + 1)}
    if not math.isfinite(spec.total):
        grows = (not np.all(np.isfinite(tail))) or float(np.max(tail)) > divergence_threshold
        verdict = "spectral-infinite" if grows else "diverged"
    elif one_cut:
        cauchy = float(np.max(np.abs(tail - U[-1])))
        notes["cauchy_tail"] = cauchy
        ok = abs(U[-1] - spec.total) <= tol_eq and cauchy <= tol_eq
        verdict = "converged-equal" if ok else "diverged"
    else:
        width = float(np.max(corridor[t0:]))
        lo = float(np.min(tail)) - width - tol_eq
        hi = float(np.max(tail)) + width + tol_eq
        notes["corridor_window"] = [lo, hi]
        verdict = "corridor-consistent" if lo <= spec.total <= hi else "diverged"
    return SumRuleReport(Ns, U, bt, mp, corridor, spec.kl, spec.outlier_sum, spec.total,
                         verdict, one_cut, C, tol_eq, notes)


# --------------------------------------------------------------------- gem

@dataclass(frozen=True)
class GemReport:
    in_S1: bool
    outlier_sum: float
    outliers_finite: bool
    kl: float
    quasi_szego: bool
    sup_U: float
    coefficient_bounded: bool
    threshold: float

    @property
    def spectral_finite(self) -> bool:
        return self.in_S1 and self.outliers_finite and self.quasi_szego

    @property
    def consistent(self) -> bool:
        return self.coefficient_bounded == self.spectral_finite


def gem_check(mu: MeasureModel, V: Polynomial, N_max: int = 400, threshold: float = 10.0,
              equilibrium: Equilibrium | None = None, rate: OutlierRate | None = None) -> GemReport:
    """Evaluate the three spectral finiteness conditions and the coefficient bound.

    Finite-N stand-in: a condition counts as finite when the corresponding
    quantity stays below `threshold`.
    """
    validate_potential(V)
    if not mu.normalized:
        raise ValidationError("measure must be normalized")
    eq = equilibrium if equilibrium is not None else equilibrium_measure(V)
    muV = eq.measure
    I = muV.support
    spec = spectral_components(mu, V, muV, I, rate)
    r = measure_to_jacobi(mu, N_max)
    if len(r) < N_max:
        # finitely supported measure: coefficients stop, U_N is not defined beyond
        sup_U = math.inf
    else:
        rV = measure_to_jacobi(muV, N_max)
        U = coefficient_sides(r, rV, V, N_max)
        sup_U = float(np.max(U))
    return GemReport(in_S1=spec.in_S1, outlier_sum=spec.outlier_sum,
                     outliers_finite=spec.outlier_sum < threshold, kl=spec.kl,
                     quasi_szego=spec.kl < threshold, sup_U=sup_U,
                     coefficient_bounded=sup_U < threshold, threshold=threshold)


# ---------------------------------------------------------------- quartic

def _f(ell: float, v: float) -> float:
    # per-step increment of U along a period-2 tail, as a function of a^2
    return 0.5 * ell * ell - v * ell - math.log(ell)


def pseudorate_gap(v: float, odd_limit: str = "smaller") -> float:
    """Limit of U_{2N} - U_{2N-1} for the parity-swapped quartic sequence.

    Equals f(abar) - f(a) with f(x) = x^4/2 - v x^2 - 2 log x, where a is the
    limit of the odd-index coefficients of mu_V.  With odd_limit="smaller"
    a^2 = l1 and abar^2 = l2 (value -5.2789... at v = 3); "larger" flips the
    sign.
    """
    if not v > 2:
        raise ValidationError("pseudorate gap needs v > 2")
    disc = math.sqrt(v * v - 4)
    l1, l2 = (v - disc) / 2, (v + disc) / 2
    if odd_limit == "smaller":
        return _f(l2, v) - _f(l1, v)
    if odd_limit == "larger":
        return _f(l1, v) - _f(l2, v)
    raise ValidationError("odd_limit must be 'smaller' or 'larger'")


def odd_limit_of(rV: JacobiSequence, upto: int | None = None) -> str:
    """Which root the odd-index a_k^2 of a period-2 sequence approach."""
    a = rV.a if upto is None else rV.a[:upto]
    m = len(a) // 2 * 2
    odd, even = a[0:m:2], a[1:m:2]
    k = max(1, len(odd) // 4)
    return "larger" if np.mean(odd[-k:]) > np.mean(even[-k:]) else "smaller"


@dataclass(eq=False)
class QuarticDemo:
    v: float
    N: int
    rV: JacobiSequence
    r_swapped: JacobiSequence
    U: np.ndarray
    parity_gaps: np.ndarray      # U_{2k} - U_{2k-1}, k = 1..N//2
    odd_limit: str
    predicted_gap: float
    spec_label_gap: float
    ell: tuple

    @property
    def finite_N_gap(self) -> float:
        return float(self.parity_gaps[-1])

    @property
    def oscillation(self) -> np.ndarray:
        """|U_N - U_{N-1}| for N = 2..N."""
        return np.abs(np.diff(self.U))


def quartic_alternation(v: float = 3.0, N: int = 300, equilibrium=None) -> QuarticDemo:
    """U_N for the parity-swapped coefficients of the two-cut quartic mu_V."""
    eq = equilibrium if equilibrium is not None else quartic_equilibrium(v)
    V = quartic_potential(v)
    rV = measure_to_jacobi(eq.measure, N + 2)
    r = rV.swap_parity()
    U = coefficient_sides(r, rV, V, N)
    ks = np.arange(1, N // 2 + 1)
    gaps = U[2 * ks - 1] - U[2 * ks - 2]
    lab = odd_limit_of(rV)
    return QuarticDemo(v, N, rV, r, U, gaps, lab, pseudorate_gap(v, lab),
                       pseudorate_gap(v, "smaller"), eq.ell)
