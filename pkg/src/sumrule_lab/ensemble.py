"""Sampling the log-gas and its tridiagonal (Jacobi coefficient) description.

Samplers
--------
eigen-mcmc      single-site random-walk Metropolis on the eigenvalues
jacobi-mcmc     single-site Metropolis on (b, a), a moved in log-scale
gaussian-exact  independent draws of the tridiagonal model for V = x^2/2

Random numbers are drawn in blocks from a numpy Generator seeded by the
config and consumed by compiled kernels, so a given config reproduces the
same chain bit for bit.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy import stats

from .equilibrium import equilibrium_measure
from .errors import SamplerCollapse, ValidationError
from .jacobi import JacobiSequence, jacobi_to_measure, lanczos, trace_poly
from .measures import GridMeasure, MeasureModel, merge_atoms
from .poly import Polynomial, validate_potential

log = logging.getLogger(__name__)

SAMPLERS = ("eigen-mcmc", "jacobi-mcmc", "gaussian-exact")


@dataclass(frozen=True)
class EnsembleConfig:
    n: int
    beta: float
    V: Polynomial
    sampler: str = "eigen-mcmc"
    steps: int = 200_000
    burn_in: int = 50_000
    step_scale: float = 0.5
    seed: int = 0
    debug: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("n must be at least 2")
        if not self.beta > 0:
            raise ValidationError("beta must be positive")
        if self.sampler not in SAMPLERS:
            raise ValidationError(f"unknown sampler {self.sampler!r}")
        if not self.steps > self.burn_in >= 0:
            raise ValidationError("need steps > burn_in >= 0")
        if not self.step_scale > 0:
            raise ValidationError("step_scale must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        validate_potential(self.V)

    @property
    def beta_prime(self) -> float:
        return self.beta / 2

    @property
    def thin(self) -> int:
        return 10 * self.n

    @classmethod
    def from_json(cls, d: dict) -> "EnsembleConfig":
        try:
            V = Polynomial.from_json(d["potential"] if "potential" in d else d["V"])
            return cls(n=int(d["n"]), beta=float(d["beta"]), V=V,
                       sampler=d.get("sampler", "eigen-mcmc"), steps=int(d.get("steps", 200_000)),
                       burn_in=int(d.get("burn_in", 50_000)),
                       step_scale=float(d.get("step_scale", 0.5)), seed=int(d.get("seed", 0)),
                       debug=bool(d.get("debug", False)))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed ensemble config: {exc}") from exc

    def to_json(self) -> dict:
        return {"n": self.n, "beta": self.beta, "potential": self.V.to_json(),
                "sampler": self.sampler, "steps": self.steps, "burn_in": self.burn_in,
                "step_scale": self.step_scale, "seed": int(self.seed), "debug": self.debug}


@dataclass
class ChainResult:
    """Retained states plus chain statistics; iterates over the states."""

    samples: list
    acceptance_rate: float
    step_scale: float
    burn_in_acceptance: float = math.nan
    checks: int = 0

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, k):
        return self.samples[k]


# ------------------------------------------------------------- log targets

@njit(cache=True)
def _horner(c, x):
    out = 0.0
    for k in range(c.shape[0] - 1, -1, -1):
        out = out * x + c[k]
    return out


def log_target_eigen(lam: np.ndarray, cfg: EnsembleConfig) -> float:
    """-n beta' sum V(lam) + beta sum_{i<j} log|lam_i - lam_j| (unnormalized)."""
    lam = np.asarray(lam, dtype=float)
    diff = np.abs(lam[:, None] - lam[None, :])
    iu = np.triu_indices(len(lam), 1)
    return float(-cfg.n * cfg.beta_prime * np.sum(cfg.V(lam)) + cfg.beta * np.sum(np.log(diff[iu])))


def log_target_jacobi(b: np.ndarray, a: np.ndarray, cfg: EnsembleConfig) -> float:
    """Log density of the coefficient law w.r.t. Lebesgue measure in (b, a)."""
    n, bp = cfg.n, cfg.beta_prime
    k = np.arange(1, n)
    ck = 1 - k / n - 1 / (n * cfg.beta)
    tr = trace_poly(JacobiSequence(b, a), n, cfg.V)
    return float(-n * bp * (tr - 2 * np.sum(ck * np.log(a))))


@njit(cache=True)
def _delta_eigen(lam, i, y, nbp, beta, Vc):
    # log target change when lam[i] moves to y
    x = lam[i]
    d = -nbp * (_horner(Vc, y) - _horner(Vc, x))
    s = 0.0
    for j in range(lam.shape[0]):
        if j != i:
            dy = abs(y - lam[j])
            if dy == 0.0:
                return -np.inf
            s += math.log(dy) - math.log(abs(x - lam[j]))
    return d + beta * s


@njit(cache=True)
def _window_trace(b, a, lo, hi, Vc):
    # sum_j c_j tr(W^j) for the principal window lo..hi (inclusive, 0-based)
    m = hi - lo + 1
    W = np.zeros((m, m))
    for i in range(m):
        W[i, i] = b[lo + i]
        if i + 1 < m:
            W[i, i + 1] = a[lo + i]
            W[i + 1, i] = a[lo + i]
    P = np.eye(m)
    tot = 0.0
    for j in range(1, Vc.shape[0]):
        P = P @ W
        t = 0.0
        for i in range(m):
            t += P[i, i]
        tot += Vc[j] * t
    return tot


@njit(cache=True)
def _delta_jacobi(b, a, coord, new, nbp, ck, Vc, d):
    # log acceptance ratio for moving one coordinate; coord < n means b[coord],
    # otherwise a[coord - n] (proposed in log scale, Jacobian included)
    n = b.shape[0]
    if coord < n:
        k = coord
        lo = max(0, k - d)
        hi = min(n - 1, k + d)
        old_tr = _window_trace(b, a, lo, hi, Vc)
        old = b[k]
        b[k] = new
        new_tr = _window_trace(b, a, lo, hi, Vc)
        b[k] = old
        return -nbp * (new_tr - old_tr), new_tr - old_tr
    k = coord - n
    lo = max(0, k - d + 1)
    hi = min(n - 1, k + d)
    old_tr = _window_trace(b, a, lo, hi, Vc)
    old = a[k]
    a[k] = new
    new_tr = _window_trace(b, a, lo, hi, Vc)
    a[k] = old
    dlog = math.log(new) - math.log(old)
    return -nbp * (new_tr - old_tr - 2.0 * ck[k] * dlog) + dlog, new_tr - old_tr


@njit(cache=True)
def _eigen_block(lam, sites, normals, logu, sigma, nbp, beta, Vc):
    acc = 0
    for t in range(sites.shape[0]):
        i = sites[t]
        y = lam[i] + sigma * normals[t]
        dl = _delta_eigen(lam, i, y, nbp, beta, Vc)
        if logu[t] < dl:
            lam[i] = y
            acc += 1
    return acc


@njit(cache=True)
def _jacobi_block(b, a, coords, normals, logu, sigma, nbp, ck, Vc, d, tr):
    acc = 0
    n = b.shape[0]
    for t in range(coords.shape[0]):
        c = coords[t]
        if c < n:
            new = b[c] + sigma * normals[t]
        else:
            new = a[c - n] * math.exp(sigma * normals[t])
        dl, dtr = _delta_jacobi(b, a, c, new, nbp, ck, Vc, d)
        if logu[t] < dl:
            if c < n:
                b[c] = new
            else:
                a[c - n] = new
            tr += dtr
            acc += 1
    return acc, tr


# ------------------------------------------------------------------ chains

def _seed(cfg: EnsembleConfig) -> np.random.Generator:
    return np.random.default_rng(int(cfg.seed))


def equilibrium_quantiles(V: Polynomial, n: int) -> np.ndarray:
    """Points at the (k - 1/2)/n quantiles of mu_V."""
    mu = equilibrium_measure(V).measure
    xs = np.concatenate([np.linspace(l, r, 4001) for l, r in mu.support.intervals])
    F = mu.cdf(xs)
    q = (np.arange(n) + 0.5) / n
    keep = np.concatenate([[True], np.diff(F) > 0])
    return np.interp(q, F[keep], xs[keep])


def _adapt(sigma: float, rate: float, target: float = 0.35) -> float:
    return float(np.clip(sigma * math.exp(2.0 * (rate - target)), 1e-8, 1e3))


def _run_blocks(cfg, kernel, ncoord, sigma0, record, check=None):
    """Shared driver: burn-in with adaptation, then frozen steps with thinning."""
    rng = _seed(cfg)
    thin = cfg.thin
    sigma = sigma0
    burn_acc, burn_tot, checks = 0, 0, 0
    done = 0
    while done < cfg.burn_in:
        m = min(thin, cfg.burn_in - done)
        acc = kernel(rng, m, sigma)
        burn_acc += acc
        burn_tot += m
        sigma = _adapt(sigma, acc / m)
        done += m
        if check is not None:
            check()
            checks += 1
    samples, acc_tot, tot = [], 0, 0
    while done + thin <= cfg.steps:
        acc_tot += kernel(rng, thin, sigma)
        tot += thin
        done += thin
        samples.append(record())
        if check is not None:
            check()
            checks += 1
    rate = acc_tot / tot if tot else math.nan
    if tot and rate < 0.01:
        raise SamplerCollapse(f"acceptance rate {rate:.4f} below 1% after adaptation")
    return ChainResult(samples, rate, sigma, burn_acc / burn_tot if burn_tot else math.nan, checks)


def sample_eigenvalues(cfg: EnsembleConfig, init: np.ndarray | None = None) -> ChainResult:
    """Random-walk Metropolis for the eigenvalue log-gas; states sorted ascending."""
    if cfg.sampler != "eigen-mcmc":
        raise ValidationError("sample_eigenvalues needs sampler = eigen-mcmc")
    n = cfg.n
    lam = np.array(equilibrium_quantiles(cfg.V, n) if init is None else init, dtype=float)
    Vc = np.array(cfg.V.coeffs)
    nbp, beta = n * cfg.beta_prime, cfg.beta

    def kernel(rng, m, sigma):
        sites = rng.integers(0, n, size=m)
        normals = rng.standard_normal(m)
        logu = np.log(rng.random(m))
        return _eigen_block(lam, sites, normals, logu, sigma, nbp, beta, Vc)

    return _run_blocks(cfg, kernel, n, cfg.step_scale / math.sqrt(n), lambda: np.sort(lam))


def _jacobi_init(cfg: EnsembleConfig):
    lam = equilibrium_quantiles(cfg.V, cfg.n)
    b, a = lanczos(lam, np.full(cfg.n, 1.0 / cfg.n), cfg.n)
    return np.array(b), np.array(a)


def sample_jacobi(cfg: EnsembleConfig) -> ChainResult:
    """Metropolis on the coefficient law; traces updated on local windows."""
    if cfg.sampler != "jacobi-mcmc":
        raise ValidationError("sample_jacobi needs sampler = jacobi-mcmc")
    n = cfg.n
    b, a = _jacobi_init(cfg)
    Vc = np.array(cfg.V.coeffs)
    d = cfg.V.degree // 2
    k = np.arange(1, n)
    ck = 1 - k / n - 1 / (n * cfg.beta)
    nbp = n * cfg.beta_prime
    state = {"tr": trace_poly(JacobiSequence(b, a), n, cfg.V)}

    def kernel(rng, m, sigma):
        coords = rng.integers(0, 2 * n - 1, size=m)
        normals = rng.standard_normal(m)
        logu = np.log(rng.random(m))
        acc, state["tr"] = _jacobi_block(b, a, coords, normals, logu, sigma, nbp, ck, Vc, d,
                                         state["tr"])
        return acc

    def check():
        full = trace_poly(JacobiSequence(b, a), n, cfg.V)
        if abs(full - state["tr"]) > 1e-9 * max(1.0, abs(full)):
            raise AssertionError(f"incremental trace drifted: {state['tr']} vs {full}")

    return _run_blocks(cfg, kernel, 2 * n - 1, cfg.step_scale / math.sqrt(n),
                       lambda: JacobiSequence(b.copy(), a.copy()),
                       check if cfg.debug else None)


def sample_gaussian_exact(cfg: EnsembleConfig, count: int | None = None) -> list:
    """Independent tridiagonal draws for V = x^2/2.

    b_k ~ N(0, 2 / (n beta)) and a_k ~ chi_{beta (n - k)} / sqrt(n beta),
    the exact law of the coefficient density for the Gaussian potential.
    """
    if cfg.sampler != "gaussian-exact":
        raise ValidationError("sample_gaussian_exact needs sampler = gaussian-exact")
    if tuple(cfg.V.coeffs) != (0.0, 0.0, 0.5):
        raise ValidationError("gaussian-exact sampler requires V = x^2/2")
    rng = _seed(cfg)
    n, beta = cfg.n, cfg.beta
    count = cfg.steps - cfg.burn_in if count is None else count
    df = beta * (n - np.arange(1, n))
    out = []
    for _ in range(count):
        b = rng.standard_normal(n) * math.sqrt(2.0 / (n * beta))
        a = np.sqrt(rng.chisquare(df)) / math.sqrt(n * beta)
        out.append(JacobiSequence(b, a))
    return out


def sample_weights(n: int, beta: float, seed) -> tuple:
    """Dirichlet(beta', ..., beta') weights via normalized Gamma(beta', 1/(beta' n)) draws."""
    if n < 1 or not beta > 0:
        raise ValidationError("need n >= 1 and beta > 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bp = beta / 2
    omega = rng.gamma(bp, 1.0 / (bp * n), size=n)
    return omega / omega.sum(), omega


def assemble_spectral(lam, w) -> MeasureModel:
    """Atomic measure sum w_k delta_{lam_k} (coincident points merged)."""
    lam = np.asarray(lam, dtype=float)
    w = np.asarray(w, dtype=float)
    if lam.shape != w.shape:
        raise ValidationError("positions and weights must have equal length")
    return MeasureModel(None, merge_atoms(lam, w))


def run_sampler(cfg: EnsembleConfig) -> list:
    """Run the configured sampler and return one MeasureModel per retained state."""
    if cfg.sampler == "eigen-mcmc":
        res = sample_eigenvalues(cfg)
        rng = np.random.default_rng([int(cfg.seed), 1])
        return [assemble_spectral(lam, sample_weights(cfg.n, cfg.beta, rng)[0]) for lam in res]
    if cfg.sampler == "jacobi-mcmc":
        return [jacobi_to_measure(r) for r in sample_jacobi(cfg)]
    return [jacobi_to_measure(r) for r in sample_gaussian_exact(cfg)]


# ------------------------------------------------------------- diagnostics

@dataclass
class DiagnosticsReport:
    ks: float
    ks_pvalue: float
    n_points: int
    rightmost: np.ndarray
    rightmost_hist: tuple
    rightmost_near_edge: float
    gap_fraction: float | None
    edge: float
    notes: dict = field(default_factory=dict)

    @property
    def gap_applicable(self) -> bool:
        return self.gap_fraction is not None


def empirical_diagnostics(samples, muV: GridMeasure, edge_window: float = 0.15,
                          gap_margin: float = 0.1, bins: int = 30) -> DiagnosticsReport:
    """Pooled KS distance to mu_V, rightmost-point statistics, and gap occupancy."""
    pts = []
    for s in samples:
        if isinstance(s, MeasureModel):
            pts.append(s.positions)
        elif isinstance(s, JacobiSequence):
            pts.append(jacobi_to_measure(s).positions)
        else:
            pts.append(np.asarray(s, dtype=float))
    if len(pts) < 10:
        raise ValidationError("diagnostics need at least 10 samples")
    pooled = np.concatenate(pts)
    ks = stats.kstest(pooled, lambda x: muV.cdf(x))
    right = np.array([p.max() for p in pts])
    edge = muV.support.right
    hist = np.histogram(right, bins=bins)
    near = float(np.mean(np.abs(right - edge) <= edge_window))
    I = muV.support
    gap = None
    if I.M > 1:
        in_gap = np.zeros(len(pooled), dtype=bool)
        for (_, r0), (l1, _) in zip(I.intervals, I.intervals[1:]):
            in_gap |= (pooled > r0 + gap_margin) & (pooled < l1 - gap_margin)
        gap = float(in_gap.mean())
    return DiagnosticsReport(float(ks.statistic), float(ks.pvalue), len(pooled), right,
                             (hist[0], hist[1]), near, gap, edge)
