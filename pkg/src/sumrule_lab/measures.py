"""Measure containers: support sets, gridded densities, and ac + atoms models."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .poly import Polynomial


@dataclass(frozen=True)
class SupportSet:
    """Finite union of disjoint closed intervals, ordered left to right."""

    intervals: tuple

    def __init__(self, intervals: Sequence[Sequence[float]]):
        iv = tuple((float(l), float(r)) for l, r in intervals)
        if not iv:
            raise ValidationError("support needs at least one interval")
        for l, r in iv:
            if not (math.isfinite(l) and math.isfinite(r)) or not l < r:
                raise ValidationError(f"bad interval [{l}, {r}]")
        for (_, r0), (l1, _) in zip(iv, iv[1:]):
            if not r0 < l1:
                raise ValidationError("support intervals must be disjoint and ordered")
        object.__setattr__(self, "intervals", iv)

    @property
    def M(self) -> int:
        return len(self.intervals)

    @property
    def left(self) -> float:
        return self.intervals[0][0]

    @property
    def right(self) -> float:
        return self.intervals[-1][1]

    @property
    def midpoints(self) -> np.ndarray:
        """Gap midpoints theta_m = (r_m + l_{m+1}) / 2."""
        return np.array([(self.intervals[m][1] + self.intervals[m + 1][0]) / 2
                         for m in range(self.M - 1)])

    @property
    def boundary(self) -> np.ndarray:
        return np.array([e for iv in self.intervals for e in iv])

    @property
    def radius(self) -> float:
        return max(abs(self.left), abs(self.right))

    def contains(self, x, tol: float = 0.0):
        """Closed membership, optionally fattened by tol."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for l, r in self.intervals:
            out |= (x >= l - tol) & (x <= r + tol)
        return out

    def interior(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for l, r in self.intervals:
            out |= (x > l) & (x < r)
        return out

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        d = np.full(x.shape, np.inf)
        for l, r in self.intervals:
            d = np.minimum(d, np.maximum(0.0, np.maximum(l - x, x - r)))
        return d

    def boundary_distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.min(np.abs(x[..., None] - self.boundary), axis=-1)

    def to_json(self) -> list:
        return [list(iv) for iv in self.intervals]


def _trapezoid(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x))) if len(x) > 1 else 0.0


def gauss_legendre_panels(n: int, panel: int = 20):
    """Composite Gauss-Legendre rule on [0, 1] with ceil(n / panel) panels."""
    npan = max(1, -(-n // panel))
    t, w = np.polynomial.legendre.leggauss(panel)
    t = (t + 1) / 2
    w = w / 2
    left = np.arange(npan) / npan
    x = (left[:, None] + t[None, :] / npan).ravel()
    wx = np.tile(w / npan, npan)
    return x, wx


def sqrt_poly_density(x, endpoints: Sequence[float], Q: Polynomial, scale: float = 1.0):
    """scale * |Q(x)| * sqrt|prod (x - e_i)| / (2 pi) on the support, zero elsewhere.

    The modulus accounts for the branch of the square root flipping sign
    from one interval to the next.
    """
    x = np.asarray(x, dtype=float)
    e = np.asarray(endpoints, dtype=float)
    inside = np.zeros(x.shape, dtype=bool)
    for l, r in zip(e[0::2], e[1::2]):
        inside |= (x >= l) & (x <= r)
    R = np.ones_like(x)
    for ei in e:
        R = R * (x - ei)
    q = np.abs(Q(x)) if Q.coeffs else np.zeros_like(x)
    out = np.where(inside, scale * q * np.sqrt(np.abs(R)) / (2 * np.pi), 0.0)
    return out


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Density sampled on per-interval grids of a SupportSet.

    Between nodes the density is linear.  `mass` is the trapezoid mass of the
    nodes.  An optional `profile` records a closed form
    {"kind": "sqrt_poly", "endpoints", "Q", "scale"}; when present it is used
    for density evaluation and quadrature instead of interpolation.
    """

    support: SupportSet
    nodes: tuple
    densities: tuple
    mass: float
    profile: dict | None = None

    def __post_init__(self):
        if len(self.nodes) != self.support.M or len(self.densities) != self.support.M:
            raise ValidationError("need one node grid per support interval")
        tot = 0.0
        for (l, r), x, y in zip(self.support.intervals, self.nodes, self.densities):
            if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
                raise ValidationError("node and density arrays must be 1-d, equal length, >= 2")
            if np.any(np.diff(x) <= 0):
                raise ValidationError("nodes must be strictly increasing")
            if x[0] < l - 1e-12 * max(1, abs(l)) or x[-1] > r + 1e-12 * max(1, abs(r)):
                raise ValidationError("nodes must lie inside their interval")
            if np.any(~np.isfinite(y)) or np.any(y < 0):
                raise ValidationError("densities must be finite and nonnegative")
            tot += _trapezoid(x, y)
        if abs(tot - self.mass) > 1e-9 * max(1.0, abs(self.mass)):
            raise ValidationError(f"mass {self.mass} disagrees with trapezoid mass {tot}")

    @classmethod
    def from_nodes(cls, support: SupportSet, nodes, densities, profile=None) -> "GridMeasure":
        nodes = tuple(np.asarray(x, dtype=float).copy() for x in nodes)
        densities = tuple(np.asarray(y, dtype=float).copy() for y in densities)
        for arr in nodes + densities:
            arr.setflags(write=False)
        mass = sum(_trapezoid(x, y) for x, y in zip(nodes, densities))
        return cls(support, nodes, densities, mass, profile)

    @classmethod
    def from_profile(cls, support: SupportSet, Q: Polynomial, scale: float = 1.0,
                     n_nodes: int = 4001) -> "GridMeasure":
        """Sample a sqrt-polynomial density on Chebyshev-Lobatto nodes."""
        prof = {"kind": "sqrt_poly", "endpoints": [float(e) for e in support.boundary],
                "Q": list(Q.coeffs), "scale": float(scale)}
        k = np.arange(n_nodes)
        nodes, dens = [], []
        for l, r in support.intervals:
            c, h = (l + r) / 2, (r - l) / 2
            x = c - h * np.cos(np.pi * k / (n_nodes - 1))
            x[0], x[-1] = l, r
            nodes.append(x)
            dens.append(sqrt_poly_density(x, prof["endpoints"], Q, scale))
        # match the node trapezoid mass to the closed-form mass
        probe = cls.from_nodes(support, nodes, dens, prof)
        _, w = probe.quadrature(4000)
        exact, trap = float(w.sum()), probe.mass
        if trap > 0:
            dens = [y * (exact / trap) for y in dens]
        return cls.from_nodes(support, nodes, dens, prof)

    @property
    def has_profile(self) -> bool:
        return self.profile is not None

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self.profile is not None:
            p = self.profile
            return sqrt_poly_density(x, p["endpoints"], Polynomial(p["Q"]), p["scale"])
        out = np.zeros(x.shape)
        for (l, r), xn, yn in zip(self.support.intervals, self.nodes, self.densities):
            m = (x >= xn[0]) & (x <= xn[-1])
            out[m] = np.interp(x[m], xn, yn)
        return out

    def quadrature(self, n_per_interval: int = 2000):
        """Nodes and weights (density included) for integrating against the measure.

        Uses x = c - h cos(theta) on each interval with a composite
        Gauss-Legendre rule in theta; square-root edges become smooth.
        """
        u, wu = gauss_legendre_panels(n_per_interval)
        th = np.pi * u
        xs, ws = [], []
        for l, r in self.support.intervals:
            c, h = (l + r) / 2, (r - l) / 2
            x = c - h * np.cos(th)
            w = np.pi * wu * h * np.sin(th)
            xs.append(x)
            ws.append(w)
        x = np.concatenate(xs)
        w = np.concatenate(ws) * self.density(x)
        if self.profile is None:
            # renormalize so the rule reproduces the stored trapezoid mass
            tot = w.sum()
            if tot > 0:
                w = w * (self.mass / tot)
        return x, w

    def integrate(self, f, n_per_interval: int = 2000) -> float:
        x, w = self.quadrature(n_per_interval)
        return float(np.dot(w, f(x)))

    def cdf(self, x, normalized: bool = True):
        """Cumulative mass up to x from the piecewise-linear node density."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        # each interval adds its partial mass to points inside, full mass beyond
        for xn, yn in zip(self.nodes, self.densities):
            seg = 0.5 * (yn[1:] + yn[:-1]) * np.diff(xn)
            cum = np.concatenate([[0.0], np.cumsum(seg)])
            inside = (x > xn[0]) & (x < xn[-1])
            if np.any(inside):
                xi = x[inside]
                j = np.clip(np.searchsorted(xn, xi) - 1, 0, len(xn) - 2)
                dx = xi - xn[j]
                slope = (yn[j + 1] - yn[j]) / (xn[j + 1] - xn[j])
                out[inside] += cum[j] + yn[j] * dx + 0.5 * slope * dx * dx
            out[x >= xn[-1]] += cum[-1]
        if normalized and self.mass > 0:
            out = out / self.mass
        return out

    def scaled(self, s: float) -> "GridMeasure":
        if s < 0:
            raise ValidationError("scale factor must be nonnegative")
        prof = None
        if self.profile is not None:
            prof = dict(self.profile)
            prof["scale"] = prof["scale"] * s
        return GridMeasure.from_nodes(self.support, self.nodes,
                                      [y * s for y in self.densities], prof)

    def to_json(self) -> dict:
        d = {"intervals": self.support.to_json(),
             "nodes": [x.tolist() for x in self.nodes],
             "densities": [y.tolist() for y in self.densities],
             "mass": self.mass}
        if self.profile is not None:
            d["profile"] = self.profile
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GridMeasure":
        try:
            support = SupportSet(d["intervals"])
            nodes, dens = d["nodes"], d["densities"]
            if nodes and not isinstance(nodes[0], list):
                nodes, dens = [nodes], [dens]
            gm = cls.from_nodes(support, nodes, dens, d.get("profile"))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed GridMeasure JSON: {exc}") from exc
        if "mass" in d and abs(gm.mass - float(d["mass"])) > 1e-9 * max(1.0, gm.mass):
            raise ValidationError("stored mass disagrees with trapezoid mass")
        return gm


def merge_atoms(positions, weights) -> tuple:
    """Sum weights at identical positions, drop zero weights, sort by position."""
    acc: dict = {}
    for x, g in zip(positions, weights):
        g = float(g)
        if g < 0:
            raise ValidationError("atom weights must be nonnegative")
        if g == 0:
            continue
        acc[float(x)] = acc.get(float(x), 0.0) + g
    return tuple(sorted(acc.items()))


@dataclass(frozen=True, eq=False)
class MeasureModel:
    """Absolutely continuous part (optional) plus finitely many atoms."""

    ac: GridMeasure | None
    atoms: tuple = ()
    normalized: bool = field(default=False)

    def __init__(self, ac: GridMeasure | None = None, atoms=(), normalized: bool | None = None):
        at = tuple(sorted((float(x), float(g)) for x, g in atoms))
        for x, g in at:
            if not (math.isfinite(x) and math.isfinite(g)):
                raise ValidationError("atoms must be finite")
            if g <= 0:
                raise ValidationError("atom weights must be positive")
        xs = [x for x, _ in at]
        if len(set(xs)) != len(xs):
            raise ValidationError("atom positions must be distinct")
        object.__setattr__(self, "ac", ac)
        object.__setattr__(self, "atoms", at)
        is_norm = abs(self.total_mass - 1.0) <= 1e-9
        if normalized and not is_norm:
            raise ValidationError(f"measure flagged normalized but has mass {self.total_mass}")
        object.__setattr__(self, "normalized", is_norm)

    @property
    def ac_mass(self) -> float:
        return self.ac.mass if self.ac is not None else 0.0

    @property
    def total_mass(self) -> float:
        return self.ac_mass + sum(g for _, g in self.atoms)

    @property
    def positions(self) -> np.ndarray:
        return np.array([x for x, _ in self.atoms])

    @property
    def weights(self) -> np.ndarray:
        return np.array([g for _, g in self.atoms])

    def outliers(self, I: SupportSet) -> tuple:
        """Atoms lying outside the closed support I."""
        return tuple((x, g) for x, g in self.atoms if not I.contains(x))

    def discretize(self, n_per_interval: int = 2000):
        """Quadrature nodes of the ac part plus the atoms verbatim."""
        xs, ws = [], []
        if self.ac is not None and self.ac.mass > 0:
            x, w = self.ac.quadrature(n_per_interval)
            keep = w > 0
            xs.append(x[keep])
            ws.append(w[keep])
        if self.atoms:
            xs.append(self.positions)
            ws.append(self.weights)
        if not xs:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(xs), np.concatenate(ws)

    def moments(self, kmax: int, n_per_interval: int = 2000) -> np.ndarray:
        x, w = self.discretize(n_per_interval)
        return np.array([np.dot(w, x ** k) for k in range(kmax + 1)])

    def normalize(self) -> "MeasureModel":
        tot = self.total_mass
        if tot <= 0:
            raise ValidationError("cannot normalize a zero measure")
        ac = self.ac.scaled(1.0 / tot) if self.ac is not None else None
        return MeasureModel(ac, [(x, g / tot) for x, g in self.atoms])

    def to_json(self) -> dict:
        return {"ac": self.ac.to_json() if self.ac is not None else None,
                "atoms": [[x, g] for x, g in self.atoms],
                "normalized": self.normalized}

    @classmethod
    def from_json(cls, d: dict) -> "MeasureModel":
        try:
            ac = GridMeasure.from_json(d["ac"]) if d.get("ac") is not None else None
            atoms = [(float(x), float(g)) for x, g in d.get("atoms", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed MeasureModel JSON: {exc}") from exc
        return cls(ac, atoms, normalized=bool(d.get("normalized", False)) or None)
