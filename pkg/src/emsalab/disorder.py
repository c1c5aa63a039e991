"""Single-site distributions, reproducible potentials and finite-volume Anderson Hamiltonians."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .lattice import BoundaryData, Region, boundary
from .rng import site_uniforms

MAX_SITES = 4096

FAMILIES = ("uniform", "power_alpha", "table_cdf")


class SizeError(ValueError):
    """Region exceeds the dense-matrix size cap."""


@dataclass(frozen=True)
class DisorderSpec:
    """Hölder-continuous single-site law, sampled by inverse CDF.

    ``alpha`` and ``holder_K`` satisfy S_mu(t) <= K t^alpha on [0, 1] where
    S_mu is the concentration function.
    """

    family: str
    params: tuple = field(default=())
    alpha: float = 1.0
    holder_K: float = 1.0
    support: tuple[float, float] = (0.0, 1.0)

    @classmethod
    def uniform(cls, a: float, b: float) -> "DisorderSpec":
        if not b > a:
            raise ValueError("uniform(a, b) needs b > a")
        a, b = float(a), float(b)
        return cls("uniform", (a, b), 1.0, 1.0 / (b - a), (a, b))

    @classmethod
    def power_alpha(cls, alpha: float, scale: float = 1.0) -> "DisorderSpec":
        """CDF (t/scale)^alpha on [0, scale]; concentrated at 0 with exponent alpha."""
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not scale > 0:
            raise ValueError("scale must be positive")
        return cls("power_alpha", (float(alpha), float(scale)), float(alpha),
                   float(scale) ** -alpha, (0.0, float(scale)))

    @classmethod
    def table_cdf(cls, x, F) -> "DisorderSpec":
        """Piecewise-linear CDF through the points (x_i, F_i)."""
        x = np.asarray(x, dtype=float)
        F = np.asarray(F, dtype=float)
        if x.shape != F.shape or x.ndim != 1 or len(x) < 2:
            raise ValueError("table_cdf needs matching 1-d x and F with >= 2 points")
        if np.any(np.diff(x) < 0) or np.any(np.diff(F) < 0):
            raise ValueError("table_cdf x and F must be non-decreasing")
        if np.any((np.diff(x) == 0) & (np.diff(F) > 0)):
            raise ValueError("table_cdf has an atom (jump in F); discrete laws are not Hölder continuous")
        if F[0] != 0.0 or F[-1] != 1.0:
            raise ValueError("table_cdf must run from F=0 to F=1")
        keep = np.diff(x) > 0
        slopes = np.diff(F)[keep] / np.diff(x)[keep]
        return cls("table_cdf", (tuple(x.tolist()), tuple(F.tolist())), 1.0,
                   float(slopes.max()), (float(x[0]), float(x[-1])))

    @classmethod
    def from_json(cls, data: dict) -> "DisorderSpec":
        fam = data.get("family")
        if fam == "uniform":
            return cls.uniform(data["a"], data["b"])
        if fam == "power_alpha":
            return cls.power_alpha(data["alpha"], data.get("scale", 1.0))
        if fam == "table_cdf":
            return cls.table_cdf(data["x"], data["F"])
        if fam in ("bernoulli", "discrete"):
            raise ValueError(f"{fam} disorder is not Hölder continuous and is not supported")
        raise ValueError(f"unknown disorder family {fam!r}")

    def to_json(self) -> dict:
        if self.family == "uniform":
            return {"family": "uniform", "a": self.params[0], "b": self.params[1]}
        if self.family == "power_alpha":
            return {"family": "power_alpha", "alpha": self.params[0], "scale": self.params[1]}
        return {"family": "table_cdf", "x": list(self.params[0]), "F": list(self.params[1])}

    @property
    def wegner_constant(self) -> float:
        """K~ = 2K for alpha = 1, 8 * 2^alpha * K otherwise."""
        if self.alpha == 1.0:
            return 2.0 * self.holder_K
        return 8.0 * 2.0**self.alpha * self.holder_K

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if self.family == "uniform":
            a, b = self.params
            return a + (b - a) * u
        if self.family == "power_alpha":
            alpha, scale = self.params
            return scale * u ** (1.0 / alpha)
        x, F = self.params
        return np.interp(u, F, x)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "uniform":
            a, b = self.params
            return np.clip((t - a) / (b - a), 0.0, 1.0)
        if self.family == "power_alpha":
            alpha, scale = self.params
            return np.clip(t / scale, 0.0, 1.0) ** alpha
        x, F = self.params
        return np.interp(t, x, F, left=0.0, right=1.0)

    def concentration(self, t: float) -> float:
        """S_mu(t) = sup_a mu[a, a + t], evaluated exactly."""
        if t < 0:
            raise ValueError("t must be non-negative")
        if self.family == "uniform":
            a, b = self.params
            return min(t / (b - a), 1.0)
        if self.family == "power_alpha":
            alpha, scale = self.params
            return min((t / scale) ** alpha, 1.0)
        # a -> F(a+t) - F(a) is piecewise linear with kinks at x_i and x_i - t
        x = np.asarray(self.params[0])
        cand = np.concatenate([x, x - t])
        return float(np.max(self.cdf(cand + t) - self.cdf(cand)))

    def holder_bound(self, t: float) -> float:
        return self.holder_K * t**self.alpha


@dataclass(frozen=True, eq=False)
class PotentialSample:
    region: Region
    values: np.ndarray
    seed: int
    sample_index: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(self.region.dim)] + ["value"])
        for site, v in zip(self.region.sites.tolist(), self.values):
            w.writerow(site + [repr(float(v))])
        return buf.getvalue()


def sample_potentials(r: Region, d: DisorderSpec, seed: int, indices) -> np.ndarray:
    """Potentials for many sample indices at once, shape (len(indices), |r|)."""
    u = site_uniforms(r.sites, seed, np.atleast_1d(np.asarray(indices, dtype=np.int64)))
    return d.ppf(u)


def sample_potential(r: Region, d: DisorderSpec, seed: int, index: int) -> PotentialSample:
    """i.i.d. values omega_x keyed by (seed, index, x)."""
    vals = d.ppf(site_uniforms(r.sites, seed, int(index)))
    vals.setflags(write=False)
    return PotentialSample(r, vals, int(seed), int(index))


def _check_size(n: int) -> None:
    if n > MAX_SITES:
        raise SizeError(f"region has {n} sites; dense matrices are capped at {MAX_SITES}")


@lru_cache(maxsize=256)
def _hopping_cached(region: Region) -> np.ndarray:
    n = len(region)
    _check_size(n)
    T = np.zeros((n, n))
    i, j = region.neighbor_pairs()
    T[i, j] = -1.0
    T[j, i] = -1.0
    T.setflags(write=False)
    return T


def hopping(region: Region) -> np.ndarray:
    """-Delta restricted to the region (zero diagonal, -1 between neighbours)."""
    return _hopping_cached(region)


def _values(r: Region, v) -> np.ndarray:
    if isinstance(v, PotentialSample):
        if v.region != r:
            raise ValueError("potential sample was drawn for a different region")
        vals = v.values
    else:
        vals = np.asarray(v, dtype=float)
    if vals.shape != (len(r),):
        raise ValueError(f"potential has shape {vals.shape}, region has {len(r)} sites")
    return vals


def hamiltonian(r: Region, v) -> np.ndarray:
    """Dense H_Theta = -Delta_Theta + V on l^2(Theta), in site order."""
    vals = _values(r, v)
    H = hopping(r).copy()
    H[np.diag_indices(len(r))] = vals
    return H


def coupling(theta: Region, bd: BoundaryData) -> np.ndarray:
    """Gamma on l^2(theta): -1 on both orientations of every boundary edge."""
    n = len(theta)
    G = np.zeros((n, n))
    i = theta.locate(bd.edges_in)
    j = theta.locate(bd.edges_out)
    G[i, j] = -1.0
    G[j, i] = -1.0
    return G


def decompose_check(theta: Region, phi: Region, v) -> float:
    """max |H_Theta - (H_Phi (+) H_{Theta\\Phi} + Gamma)| entrywise."""
    vals = _values(theta, v)
    bd = boundary(phi, theta)
    rest = theta.difference(phi)
    H = hamiltonian(theta, vals)
    split = np.zeros_like(H)
    for part in (phi, rest):
        if len(part) == 0:
            continue
        idx = theta.locate(part.sites)
        split[np.ix_(idx, idx)] = hamiltonian(part, vals[idx])
    split += coupling(theta, bd)
    return float(np.max(np.abs(H - split))) if H.size else 0.0
