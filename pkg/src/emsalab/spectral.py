"""Complete eigensystems of finite-volume operators and spectral-distance queries."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .lattice import Region

RESIDUAL_TOL = 1e-10


class ConvergenceError(RuntimeError):
    def __init__(self, residual: float, bound: float):
        super().__init__(f"eigenpair residual {residual:.3e} exceeds {bound:.3e}")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class Eigensystem:
    """Orthonormal eigenpairs, ascending, repeated by multiplicity.

    ``vectors[:, j]`` is the eigenvector for ``values[j]``; rows follow the
    region's site order.
    """

    region: Region
    values: np.ndarray
    vectors: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    @property
    def pairs(self):
        return [(self.vectors[:, j], float(self.values[j])) for j in range(len(self))]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "value"])
        for j, v in enumerate(self.values):
            w.writerow([j, format(float(v), ".17g")])
        return buf.getvalue()

    def vectors_bytes(self) -> bytes:
        """Little-endian float64, row-major, row j = eigenvector j over the sites."""
        return np.ascontiguousarray(self.vectors.T, dtype="<f8").tobytes()

    @staticmethod
    def vectors_from_bytes(data: bytes, n: int) -> np.ndarray:
        return np.frombuffer(data, dtype="<f8").reshape(n, n).T.copy()


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the first non-negligible component of each column positive."""
    v = np.asarray(vectors)
    mag = np.abs(v)
    thresh = 1e-12 * mag.max(axis=-2, keepdims=True)
    first = np.argmax(mag > thresh, axis=-2)
    lead = np.take_along_axis(v, first[..., None, :], axis=-2)
    return v * np.where(lead < 0, -1.0, 1.0)


def eigensystem(H: np.ndarray, region: Region) -> Eigensystem:
    """Full eigendecomposition with residual verification."""
    H = np.asarray(H, dtype=float)
    n = len(region)
    if H.shape != (n, n):
        raise ValueError(f"matrix shape {H.shape} does not match region with {n} sites")
    if not np.array_equal(H, H.T):
        raise ValueError("matrix is not symmetric")
    if n == 0:
        return Eigensystem(region, np.zeros(0), np.zeros((0, 0)))
    w, V = np.linalg.eigh(H)
    V = fix_signs(V)
    scale = 1.0 + np.linalg.norm(H, 2)
    res = np.linalg.norm(H @ V - V * w, axis=0).max()
    if not res <= RESIDUAL_TOL * scale:
        raise ConvergenceError(float(res), RESIDUAL_TOL * scale)
    w.setflags(write=False)
    V.setflags(write=False)
    return Eigensystem(region, w, V)


def eigh_batch(Hs: np.ndarray, vectors: bool = True):
    """Stacked symmetric decompositions, shape (B, n, n).  No residual checks."""
    if vectors:
        w, V = np.linalg.eigh(Hs)
        return w, fix_signs(V)
    return np.linalg.eigvalsh(Hs)


def spectral_dist(lam: float, values) -> float:
    """min |lam - nu| over the list; +inf when empty."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.inf
    return float(np.min(np.abs(v - lam)))


def spectral_gap(a, b) -> float:
    """dist between two finite spectra; +inf if either is empty."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        return math.inf
    pos = np.clip(np.searchsorted(a, b), 1, a.size - 1) if a.size > 1 else np.zeros(b.size, int)
    d = np.abs(a[pos] - b)
    if a.size > 1:
        d = np.minimum(d, np.abs(a[pos - 1] - b))
    return float(d.min())


def _bounds(J) -> tuple[float, float]:
    if hasattr(J, "lo"):
        return J.lo, J.hi
    lo, hi = J
    return float(lo), float(hi)


def sigma_in(values, J) -> np.ndarray:
    """Eigenvalues strictly inside the open interval J, multiplicity kept."""
    lo, hi = _bounds(J)
    v = np.asarray(values, dtype=float)
    return v[(v > lo) & (v < hi)]
