"""Lattice geometry on Z^d: boxes, relative boundaries, interiors and suitable covers.

Distances are sup-norm (``|x|_inf``) throughout; adjacency is Euclidean
distance one.  Sites of every region are kept in lexicographic order and all
matrices built downstream use that order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

# relative tolerance for real-arithmetic comparisons in box/cover construction
RTOL = 1e-12


def _snap_tol(*scales: float) -> float:
    return RTOL * max(1.0, *(abs(s) for s in scales))


def _unique_rows(s: np.ndarray) -> np.ndarray:
    # lexsort is much faster than np.unique(axis=0) for integer rows
    if len(s) > 1:
        s = s[np.lexsort(s.T[::-1])]
        keep = np.ones(len(s), dtype=bool)
        keep[1:] = np.any(s[1:] != s[:-1], axis=1)
        s = s[keep]
    return np.ascontiguousarray(s)


@dataclass(frozen=True, eq=False)
class Region:
    """A finite subset of Z^d with lexicographically ordered sites."""

    sites: np.ndarray
    dim: int

    def __post_init__(self):
        s = np.asarray(self.sites, dtype=np.int64).reshape(-1, self.dim)
        if len(s):
            s = _unique_rows(s)
        s.setflags(write=False)
        object.__setattr__(self, "sites", s)

    @classmethod
    def from_sites(cls, sites: Iterable[Sequence[int]], dim: int | None = None) -> "Region":
        arr = np.asarray(sites if isinstance(sites, np.ndarray) else list(sites), dtype=np.int64)
        if dim is None:
            if arr.ndim == 1 and arr.size:
                dim = 1
            elif arr.ndim == 2:
                dim = arr.shape[1]
            else:
                raise ValueError("cannot infer dimension of an empty site list")
        return cls(arr.reshape(-1, dim), dim)

    @classmethod
    def empty(cls, dim: int) -> "Region":
        return cls(np.zeros((0, dim), dtype=np.int64), dim)

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return (tuple(int(v) for v in row) for row in self.sites)

    def __contains__(self, site) -> bool:
        return bool(self.locate(np.asarray(site, dtype=np.int64).reshape(1, self.dim))[0] >= 0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Region):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.sites, other.sites)

    def __hash__(self):
        return hash((self.dim, self.sites.tobytes()))

    def __repr__(self) -> str:
        return f"Region(dim={self.dim}, n={len(self)})"

    @cached_property
    def _keys(self) -> np.ndarray:
        # sites are sorted lexicographically, so a structured view is sorted too
        return np.ascontiguousarray(self.sites).view([("", np.int64)] * self.dim).ravel()

    def locate(self, points) -> np.ndarray:
        """Row index of each point in ``sites``, or -1 when absent."""
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.int64).reshape(-1, self.dim))
        if len(self) == 0 or len(pts) == 0:
            return np.full(len(pts), -1, dtype=np.int64)
        keys = pts.view([("", np.int64)] * self.dim).ravel()
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, len(self) - 1)
        hit = self._keys[pos] == keys
        return np.where(hit, pos, -1)

    def issubset(self, other: "Region") -> bool:
        return self.dim == other.dim and bool(np.all(other.locate(self.sites) >= 0))

    def union(self, other: "Region") -> "Region":
        return Region(np.vstack([self.sites, other.sites]), self.dim)

    def difference(self, other: "Region") -> "Region":
        return Region(self.sites[other.locate(self.sites) < 0], self.dim)

    def intersection(self, other: "Region") -> "Region":
        return Region(self.sites[other.locate(self.sites) >= 0], self.dim)

    def isdisjoint(self, other: "Region") -> bool:
        return not np.any(other.locate(self.sites) >= 0)

    def diameter(self) -> float:
        """Sup-norm diameter; 0 for a single site, -inf when empty."""
        if len(self) == 0:
            return -math.inf
        return float(np.max(self.sites.max(axis=0) - self.sites.min(axis=0)))

    def neighbor_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Index pairs (i, j), i < j, of sites at Euclidean distance one."""
        rows, cols = [], []
        for axis in range(self.dim):
            shifted = self.sites.copy()
            shifted[:, axis] += 1
            j = self.locate(shifted)
            i = np.nonzero(j >= 0)[0]
            rows.append(i)
            cols.append(j[i])
        return np.concatenate(rows), np.concatenate(cols)

    def is_connected(self) -> bool:
        n = len(self)
        if n <= 1:
            return n == 1
        i, j = self.neighbor_pairs()
        adj = coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
        ncomp, _ = connected_components(adj, directed=False)
        return ncomp == 1

    def to_json(self) -> dict:
        return {"dim": self.dim, "sites": self.sites.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "Region":
        return cls(np.asarray(data["sites"], dtype=np.int64).reshape(-1, data["dim"]), int(data["dim"]))


def sup_dist(points, target: Region) -> np.ndarray:
    """Sup-norm distance from each point to the nearest site of ``target``.

    ``+inf`` when ``target`` is empty (dist(y, {}) = +inf).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, target.dim)
    if len(target) == 0:
        return np.full(len(pts), math.inf)
    dist, _ = cKDTree(target.sites).query(pts, p=np.inf)
    return np.asarray(dist, dtype=np.float64)


@dataclass(frozen=True)
class BoxSpec:
    """The box Lambda_L(x) = {y in Z^d : |y - x|_inf <= L/2}, x in R^d."""

    center: tuple[float, ...]
    side: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "side", float(self.side))

    @classmethod
    def centered(cls, side: float, dim: int, center: float = 0.0) -> "BoxSpec":
        return cls((float(center),) * dim, side)

    @property
    def dim(self) -> int:
        return len(self.center)

    def axis_ranges(self) -> list[tuple[int, int]]:
        half = self.side / 2.0
        out = []
        for c in self.center:
            tol = _snap_tol(c, self.side)
            out.append((math.ceil(c - half - tol), math.floor(c + half + tol)))
        return out

    @cached_property
    def sites(self) -> Region:
        return box_sites(self)

    def contains_box(self, other: "BoxSpec") -> bool:
        """Real containment Lambda^R_other within Lambda^R_self (with tolerance)."""
        tol = _snap_tol(self.side, *self.center)
        return all(
            abs(a - b) + other.side / 2.0 <= self.side / 2.0 + tol
            for a, b in zip(other.center, self.center)
        )

    def to_json(self) -> dict:
        return {"center": list(self.center), "side": self.side}

    @classmethod
    def from_json(cls, data: dict) -> "BoxSpec":
        return cls(tuple(data["center"]), data["side"])


def box_sites(b: BoxSpec) -> Region:
    """All lattice points of Lambda_L(x), lexicographically ordered."""
    if b.side <= 0:
        raise ValueError("box side must be positive")
    axes = [np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in b.axis_ranges()]
    if any(len(a) == 0 for a in axes):
        return Region.empty(b.dim)
    grid = np.meshgrid(*axes, indexing="ij")
    return Region(np.stack([g.ravel() for g in grid], axis=1), b.dim)


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Boundary of phi relative to theta: edge pairs plus exterior/interior site sets."""

    edges_in: np.ndarray   # u in phi
    edges_out: np.ndarray  # v in theta \ phi, |u - v| = 1
    exterior: Region
    interior: Region

    @property
    def edge_pairs(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        return [
            (tuple(int(x) for x in u), tuple(int(x) for x in v))
            for u, v in zip(self.edges_in, self.edges_out)
        ]

    def __len__(self) -> int:
        return len(self.edges_in)


def _require_subset(phi: Region, theta: Region) -> None:
    if phi.dim != theta.dim:
        raise ValueError("regions have different dimensions")
    if not phi.issubset(theta):
        raise ValueError("phi must be a subset of theta")


def boundary(phi: Region, theta: Region) -> BoundaryData:
    """Edge boundary of ``phi`` relative to ``theta`` with its two site sets."""
    _require_subset(phi, theta)
    us, vs = [], []
    for axis in range(phi.dim):
        for step in (-1, 1):
            nb = phi.sites.copy()
            nb[:, axis] += step
            mask = (theta.locate(nb) >= 0) & (phi.locate(nb) < 0)
            us.append(phi.sites[mask])
            vs.append(nb[mask])
    u = np.concatenate(us) if us else np.zeros((0, phi.dim), dtype=np.int64)
    v = np.concatenate(vs) if vs else np.zeros((0, phi.dim), dtype=np.int64)
    if len(u):
        order = np.lexsort(np.hstack([u, v])[:, ::-1].T)
        u, v = u[order], v[order]
    u.setflags(write=False)
    v.setflags(write=False)
    return BoundaryData(u, v, Region(v, phi.dim), Region(u, phi.dim))


def interior(phi: Region, theta: Region, t: float) -> Region:
    """Phi^{Theta,t}: sites of phi at sup-distance > floor(t) from theta \\ phi."""
    _require_subset(phi, theta)
    if t < 1:
        raise ValueError("interior depth t must be >= 1")
    rest = theta.difference(phi)
    keep = sup_dist(phi.sites, rest) > math.floor(t)
    return Region(phi.sites[keep], phi.dim)


def interior_layer(phi: Region, theta: Region, t: float) -> Region:
    """The complement phi \\ Phi^{Theta,t}."""
    return phi.difference(interior(phi, theta, t))


def depth(y, phi: Region, theta: Region) -> float:
    """R_Theta(y): sup-distance from y to the interior boundary of phi in theta."""
    if y not in phi:
        raise ValueError("y must belong to phi")
    inner = boundary(phi, theta).interior
    return float(sup_dist(np.asarray(y).reshape(1, -1), inner)[0])


def depths(phi: Region, theta: Region) -> np.ndarray:
    """R_Theta(y) for every site of phi, in site order."""
    return sup_dist(phi.sites, boundary(phi, theta).interior)


class CoverError(ValueError):
    """No admissible spacing parameter exists for the requested cover."""


@dataclass(frozen=True, eq=False)
class Cover:
    """Suitable ell-cover of a box.

    Centers are ``x0 + spacing * j`` for integer index vectors ``j`` in
    ``[-k, k]^d``; ``spacing = rho * ell**varsigma = (L - ell) / (2k)``.
    Combinatorial queries work on the integer indices, which keeps them exact.
    """

    parent: BoxSpec
    child_side: float
    varsigma: float
    rho: float
    k: int
    k_ell: int
    index: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.parent.dim

    @property
    def spacing(self) -> float:
        return (self.parent.side - self.child_side) / (2 * self.k)

    @cached_property
    def centers(self) -> np.ndarray:
        c = np.asarray(self.parent.center) + self.spacing * self.index
        c.setflags(write=False)
        return c

    def __len__(self) -> int:
        return len(self.index)

    @property
    def disjoint_threshold(self) -> float:
        return self.k_ell * self.spacing

    def child(self, i: int) -> BoxSpec:
        return BoxSpec(tuple(self.centers[i]), self.child_side)

    def children(self) -> list[BoxSpec]:
        return [self.child(i) for i in range(len(self))]

    def index_dist(self) -> np.ndarray:
        """Pairwise sup-norm distances between centers in units of the spacing."""
        diff = self.index[:, None, :] - self.index[None, :, :]
        return np.abs(diff).max(axis=-1)

    def disjoint_matrix(self) -> np.ndarray:
        return self.index_dist() >= self.k_ell

    def to_json(self) -> dict:
        return {
            "parent": self.parent.to_json(),
            "child_side": self.child_side,
            "varsigma": self.varsigma,
            "rho": self.rho,
            "k": self.k,
            "k_ell": self.k_ell,
            "spacing": self.spacing,
            "centers": self.centers.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Cover":
        return suitable_cover(BoxSpec.from_json(data["parent"]), data["child_side"], data["varsigma"])


def suitable_cover(parent: BoxSpec, ell: float, varsigma: float) -> Cover:
    """The suitable ell-cover of ``parent`` (maximal rho in [1/2, 1])."""
    L = parent.side
    if not 0 < varsigma < 1:
        raise ValueError("varsigma must lie in (0, 1)")
    if not 0 < ell < L:
        raise ValueError(f"child side {ell} must satisfy 0 < ell < L = {L}")
    base = (L - ell) / (2.0 * ell**varsigma)  # rho * k
    tol = RTOL
    # rho = base / k in [1/2, 1]  <=>  base <= k <= 2 base; maximal rho = smallest k
    k = max(1, math.ceil(base * (1 - tol)))
    rho = base / k
    if not (0.5 * (1 - tol) <= rho <= 1 + tol):
        tried = {kk: base / kk for kk in range(1, max(2, math.ceil(2 * base)) + 2)}
        raise CoverError(
            f"no rho in [1/2, 1] of the form (L-ell)/(2 ell^varsigma k): "
            f"L={L}, ell={ell}, varsigma={varsigma}, candidates {tried}"
        )
    spacing = (L - ell) / (2 * k)
    ratio = ell / spacing
    k_ell = math.floor(ratio * (1 + tol)) + 1
    axes = [np.arange(-k, k + 1, dtype=np.int64)] * parent.dim
    grid = np.meshgrid(*axes, indexing="ij")
    index = np.stack([g.ravel() for g in grid], axis=1)
    index.setflags(write=False)
    return Cover(parent, float(ell), float(varsigma), rho, k, k_ell, index)


def cover_disjoint(a, b, c: Cover) -> bool:
    """True iff the real child boxes at centers a and b do not intersect."""
    d = float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))
    return d >= c.disjoint_threshold * (1 - RTOL)
