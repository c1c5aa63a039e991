"""Localization certificates and numerical checks of the deterministic lemmas.

Exact statements (the boundary estimate for eigenfunctions away from the
spectrum of a subregion) are hard-asserted.  The decay lemmas for localizing
boxes and buffered subsets only hold "for sufficiently large scales"; their
checks run in monitoring mode and report ratios rather than pass/fail.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .exponents import ExponentSet, floor_pow
from .lattice import BoxSpec, Cover, Region, boundary, depths, interior
from .spectral import Eigensystem, sigma_in, spectral_dist, spectral_gap

NORM_TOL = 1e-8
DEFAULT_CD = 1.0


@dataclass(frozen=True)
class EnergyInterval:
    """Open interval I(E, A) = (E - A, E + A)."""

    E: float
    A: float
    # (A, L, kappa) of the interval this one was expanded from, so that
    # shrinking back with the same (L, kappa) is exact rather than off by an ulp
    _origin: tuple | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("interval radius must be positive")

    @property
    def lo(self) -> float:
        return self.E - self.A

    @property
    def hi(self) -> float:
        return self.E + self.A

    def contains(self, t):
        t = np.asarray(t, dtype=float)
        return (t > self.lo) & (t < self.hi)

    def h(self, t):
        return h_eval(self, t)

    def shrink(self, L: float, kappa: float) -> "EnergyInterval":
        if self._origin is not None and self._origin[1:] == (L, kappa):
            return EnergyInterval(self.E, self._origin[0])
        return EnergyInterval(self.E, self.A * (1 - L**-kappa))

    def expand(self, L: float, kappa: float) -> "EnergyInterval":
        return EnergyInterval(self.E, self.A / (1 - L**-kappa), (self.A, L, kappa))

    def to_json(self) -> dict:
        return {"E": self.E, "A": self.A}


def h_eval(I: EnergyInterval, t):
    """h((t - E)/A) with h(s) = 1 - s^2 on (-1, 1) and 0 elsewhere."""
    s = (np.asarray(t, dtype=float) - I.E) / I.A
    out = np.where(np.abs(s) < 1, 1 - s * s, 0.0)
    return float(out) if out.ndim == 0 else out


def shrink_expand(I: EnergyInterval, L: float, kappa: float) -> tuple[EnergyInterval, EnergyInterval]:
    if not L > 1:
        raise ValueError("L must exceed 1")
    return I.shrink(L, kappa), I.expand(L, kappa)


def rate_cap(A: float, d: int) -> float:
    """Upper admissible decay rate 1/2 log(1 + A/(4d))."""
    return 0.5 * math.log1p(A / (4 * d))


def rate_floor(L: float, kappa_prime: float) -> float:
    return L**-kappa_prime


@lru_cache(maxsize=128)
def _sup_dist_matrix(region: Region) -> np.ndarray:
    s = region.sites
    D = np.abs(s[:, None, :] - s[None, :, :]).max(axis=-1).astype(float)
    D.setflags(write=False)
    return D


def _neglog_abs(v: np.ndarray) -> np.ndarray:
    a = np.abs(v)
    with np.errstate(divide="ignore"):
        return -np.log(a)


def _check_normalized(V: np.ndarray) -> None:
    norms = np.linalg.norm(V, axis=0)
    if np.any(np.abs(norms - 1) > NORM_TOL):
        raise ValueError(f"vector is not normalized (norm {norms[np.argmax(np.abs(norms - 1))]:.12g})")


def _margins_at(neglog: np.ndarray, D: np.ndarray, far: np.ndarray, rates: np.ndarray, centers: np.ndarray):
    """Margin of each column j for its own center index centers[j]."""
    Dc = D[centers]            # (k, n)
    farc = far[centers]
    terms = neglog.T - rates[:, None] * Dc
    terms = np.where(farc, terms, np.inf)
    return terms.min(axis=1)


def _best_center(neglog_col: np.ndarray, D: np.ndarray, far: np.ndarray, rate: float):
    terms = neglog_col[None, :] - rate * D
    terms = np.where(far, terms, np.inf)
    m = terms.min(axis=1)
    j = int(np.argmax(m))
    return j, float(m[j])


def is_localized(phi, x, m: float, L: float, tau: float, region: Region) -> tuple[bool, float]:
    """(x, m)-localization: |phi(y)| <= exp(-m |y - x|) whenever |y - x| >= floor(L^tau).

    Returns the verdict and the margin min(-log|phi(y)| - m |y - x|) over the
    tested sites (+inf when none are tested).
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (len(region),):
        raise ValueError("vector length does not match region")
    _check_normalized(phi[:, None])
    xi = region.locate(np.asarray(x).reshape(1, -1))[0]
    if xi < 0:
        raise ValueError("center must lie in the region")
    Ltau = floor_pow(L, tau)
    D = _sup_dist_matrix(region)
    far = D >= Ltau
    margin = float(_margins_at(_neglog_abs(phi)[:, None], D, far, np.array([m]), np.array([xi]))[0])
    return margin >= -NORM_TOL, margin


@dataclass(frozen=True, eq=False)
class LocalizationCertificate:
    """Per-eigenpair centers, demanded rates and margins for one box."""

    side: float
    m: float
    interval: EnergyInterval
    sub_interval: EnergyInterval | None
    values: np.ndarray
    centers: np.ndarray     # (n, d) lattice sites
    rates: np.ndarray
    margins: np.ndarray
    passed: np.ndarray
    rate_ok: bool
    rate_bounds: tuple[float, float]

    @property
    def localized(self) -> bool:
        """Every eigenvector found a center (rate bounds ignored)."""
        return bool(np.all(self.passed))

    @property
    def overall(self) -> bool:
        return self.rate_ok and self.localized

    @property
    def reason(self) -> str:
        if not self.rate_ok:
            return "rate-bounds"
        return "ok" if self.localized else "not-localized"

    def rows(self) -> list[dict]:
        hv = h_eval(self.interval, self.values)
        return [
            {
                "index": j,
                "nu": float(self.values[j]),
                "h_I": float(np.atleast_1d(hv)[j]),
                "center": [int(c) for c in self.centers[j]],
                "rate": float(self.rates[j]),
                "margin": float(self.margins[j]),
                "pass": bool(self.passed[j]),
            }
            for j in range(len(self.values))
        ]

    def to_json(self) -> dict:
        return {
            "side": self.side,
            "m": self.m,
            "interval": self.interval.to_json(),
            "sub_interval": None if self.sub_interval is None else self.sub_interval.to_json(),
            "rate_bounds": list(self.rate_bounds),
            "rate_ok": self.rate_ok,
            "overall": self.overall,
            "reason": self.reason,
            "eigenpairs": self.rows(),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "nu", "h_I", "center", "margin", "pass"])
        for r in self.rows():
            w.writerow([r["index"], format(r["nu"], ".17g"), format(r["h_I"], ".17g"),
                        " ".join(map(str, r["center"])), format(r["margin"], ".17g"), int(r["pass"])])
        return buf.getvalue()


def localization_margins(values, vectors, region: Region, rates, Ltau: int):
    """Centers and margins for each column, argmax first then exhaustive search."""
    V = np.asarray(vectors)
    n = V.shape[1]
    D = _sup_dist_matrix(region)
    far = D >= Ltau
    neglog = _neglog_abs(V)
    centers = np.argmax(np.abs(V), axis=0)
    margins = _margins_at(neglog, D, far, rates, centers)
    for j in np.nonzero(margins < -NORM_TOL)[0]:
        cj, mj = _best_center(neglog[:, j], D, far, rates[j])
        if mj > margins[j]:
            centers[j], margins[j] = cj, mj
    return centers, margins


def certify_box(
    es: Eigensystem,
    I: EnergyInterval,
    m: float,
    exps: ExponentSet,
    J: EnergyInterval | None = None,
    *,
    side: float,
) -> LocalizationCertificate:
    """Decide whether the box of side ``side`` is (m, I)- or (m, J, I)-localizing."""
    region = es.region
    d = region.dim
    B = I.A if J is None else J.A
    lo, hi = rate_floor(side, exps.kappa_prime), rate_cap(B, d)
    rate_ok = lo <= m <= hi
    _check_normalized(es.vectors)
    rates = m * np.atleast_1d(h_eval(I, es.values))
    if J is not None:
        rates = rates * J.contains(es.values)
    centers, margins = localization_margins(es.values, es.vectors, region, rates, floor_pow(side, exps.tau))
    return LocalizationCertificate(
        side=float(side),
        m=float(m),
        interval=I,
        sub_interval=J,
        values=np.asarray(es.values),
        centers=region.sites[centers],
        rates=rates,
        margins=margins,
        passed=margins >= -NORM_TOL,
        rate_ok=bool(rate_ok),
        rate_bounds=(lo, hi),
    )


def max_localizing_m(es: Eigensystem, I: EnergyInterval, exps: ExponentSet, *, side: float,
                     J: EnergyInterval | None = None, resolution: float = 1e-4) -> float:
    """Largest admissible m (to ``resolution``) for which certify_box passes; 0 if none."""
    d = es.region.dim
    lo = rate_floor(side, exps.kappa_prime)
    hi = rate_cap(I.A if J is None else J.A, d)

    def ok(m):
        return certify_box(es, I, m, exps, J, side=side).overall

    if lo > hi or not ok(lo):
        return 0.0
    if ok(hi):
        return hi
    a, b = lo, hi
    while b - a > resolution:
        mid = 0.5 * (a + b)
        if ok(mid):
            a = mid
        else:
            b = mid
    return a


def r_separated(vals_a, vals_b, R: float, beta: float) -> bool:
    """dist(sigma_a, sigma_b) >= exp(-R^beta); vacuous for empty spectra."""
    return spectral_gap(vals_a, vals_b) >= math.exp(-(R**beta))


def family_r_separated(items, R: float, beta: float):
    """Check R-separation for every disjoint pair of (region, spectrum) items.

    Returns (ok, (i, j)) with the first violating pair, or (True, None).
    """
    items = list(items)
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            (ri, vi), (rj, vj) = items[i], items[j]
            if not ri.isdisjoint(rj):
                continue
            if not r_separated(vi, vj, R, beta):
                return False, (i, j)
    return True, None


@dataclass(frozen=True, eq=False)
class BufferedSubset:
    """A union of cover boxes swallowing a cluster of bad boxes, with its buffer boxes."""

    region: Region
    parent: BoxSpec
    ell: float
    core: tuple[int, ...]       # Phi: bad centers (cover indices)
    hull: tuple[int, ...]       # Phi~: centers within k_ell spacings of Phi
    buffer: tuple[int, ...]     # G: exterior G1-boundary of Phi~
    buffer_centers: np.ndarray
    diameter: float
    violations: tuple[str, ...] = field(default=())

    def to_json(self) -> dict:
        return {
            "region": self.region.to_json(),
            "core": list(self.core),
            "hull": list(self.hull),
            "buffer": list(self.buffer),
            "buffer_centers": np.asarray(self.buffer_centers).tolist(),
            "diameter": self.diameter,
            "violations": list(self.violations),
        }


def _cover_indices(bad, cover: Cover) -> list[int]:
    arr = np.asarray(bad)
    if arr.size == 0:
        return []
    if arr.dtype.kind in "iu" and arr.ndim == 1:
        return sorted(int(v) for v in arr)
    pts = np.asarray(bad, dtype=float).reshape(-1, cover.dim)
    j = np.rint((pts - np.asarray(cover.parent.center)) / cover.spacing).astype(np.int64)
    out = []
    for p, jj in zip(pts, j):
        hit = np.nonzero(np.all(cover.index == jj, axis=1))[0]
        if len(hit) == 0 or not np.allclose(cover.centers[hit[0]], p, rtol=0, atol=1e-9 * max(1, cover.parent.side)):
            raise ValueError(f"{p.tolist()} is not a cover center")
        out.append(int(hit[0]))
    return sorted(out)


def _components(nodes: list[int], adj: np.ndarray) -> list[list[int]]:
    if not nodes:
        return []
    sub = adj[np.ix_(nodes, nodes)]
    _, labels = connected_components(coo_matrix(sub), directed=False)
    comps: dict[int, list[int]] = {}
    for node, lab in zip(nodes, labels):
        comps.setdefault(int(lab), []).append(node)
    return sorted(comps.values(), key=lambda c: c[0])


def _union_of_children(cover: Cover, idx) -> Region:
    if len(idx) == 0:
        return Region.empty(cover.dim)
    return Region.from_sites(np.concatenate([cover.child(int(a)).sites.sites for a in idx]))


def buffered_violations(bs: BufferedSubset, cover: Cover, exps: ExponentSet) -> list[str]:
    """Structural checks of a buffered subset (the localizing requirement is probabilistic and excluded)."""
    out = []
    parent_sites = cover.parent.sites
    if not bs.region.is_connected():
        out.append("not-connected")
    union = _union_of_children(cover, bs.hull)
    if union != bs.region or not bs.region.issubset(parent_sites):
        out.append("not-union-of-boxes")
    ell_tt = floor_pow(bs.ell, exps.tau_tilde)
    inner = boundary(bs.region, parent_sites).interior
    covered = np.zeros(len(inner), dtype=bool)
    for a in bs.buffer:
        child = cover.child(a)
        if not (cover.parent.contains_box(child) and child.sites.issubset(parent_sites)):
            out.append(f"buffer-box-outside-parent:{a}")
        if len(inner):
            deep = interior(child.sites, parent_sites, max(ell_tt, 1))
            covered |= deep.locate(inner.sites) >= 0
    if not np.all(covered):
        out.append(f"boundary-not-shielded:{int((~covered).sum())}")
    if bs.diameter > 6 * bs.ell * len(bs.core):
        out.append("diameter-bound")
    return out


def build_buffered(bad_centers, cover: Cover, exps: ExponentSet) -> list[BufferedSubset]:
    """Buffered subsets around G2-clusters of pairwise disjoint bad boxes."""
    bad = _cover_indices(bad_centers, cover)
    if not bad:
        return []
    ID = cover.index_dist()
    k = cover.k_ell
    sub = ID[np.ix_(bad, bad)]
    if np.any((sub < k) & ~np.eye(len(bad), dtype=bool)):
        raise ValueError("bad centers must be pairwise disjoint")
    g2 = (ID >= k) & (ID <= 3 * k - 1)
    out = []
    for comp in _components(bad, g2):
        hull = np.nonzero(ID[:, comp].min(axis=1) <= k)[0]
        not_hull = np.setdiff1d(np.arange(len(cover)), hull)
        buf = not_hull[ID[np.ix_(not_hull, hull)].min(axis=1) <= k - 1] if len(not_hull) else not_hull
        region = _union_of_children(cover, hull)
        bs = BufferedSubset(
            region=region,
            parent=cover.parent,
            ell=cover.child_side,
            core=tuple(comp),
            hull=tuple(int(a) for a in hull),
            buffer=tuple(int(a) for a in buf),
            buffer_centers=cover.centers[buf],
            diameter=region.diameter(),
        )
        out.append(bs)
    hulls = [np.asarray(b.hull) for b in out]
    family_bad = []
    for r in range(len(out)):
        for s in range(r + 1, len(out)):
            if ID[np.ix_(hulls[r], hulls[s])].min() < k:
                family_bad.append(f"hulls-too-close:{r},{s}")
    return [
        BufferedSubset(**{**b.__dict__, "violations": tuple(buffered_violations(b, cover, exps) + family_bad)})
        for b in out
    ]


@dataclass(frozen=True)
class OutbadResult:
    holds: bool
    skipped: bool
    eta: float
    bound: float
    worst_ratio: float
    worst_site: tuple | None
    witness: tuple | None


def _outbad_core(psi, lam, H, theta: Region, phi: Region, eta: float):
    d = theta.dim
    n = len(theta)
    bd = boundary(phi, theta)
    ext = theta.locate(bd.exterior.sites)
    inn = theta.locate(phi.sites)
    hnorm = float(np.abs(H).sum(axis=1).max()) if n else 0.0
    # eta only needs to lower-bound the true distance; back off by the eigenvalue error scale
    eta_eff = eta - 10 * n * np.finfo(float).eps * (1 + hnorm)
    return bd, ext, inn, hnorm, eta_eff, d


def verify_outbad(psi, lam: float, phi: Region, theta: Region, eta: float, H) -> OutbadResult:
    """|psi(y)| <= 2d/eta |ext|^(1/2) max_ext |psi| for all y in phi, given dist(lam, sigma(H_phi)) >= eta.

    ``H`` is H_theta; H_phi is its restriction.  The comparison allows a
    relative slack of 1e-8 plus the residual of the supplied pair divided by
    eta, so roundoff in a computed eigenpair cannot masquerade as a violation.
    """
    psi = np.asarray(psi, dtype=float)
    H = np.asarray(H, dtype=float)
    bd, ext, inn, hnorm, eta_eff, d = _outbad_core(psi, lam, H, theta, phi, eta)
    sub = H[np.ix_(inn, inn)]
    dist = spectral_dist(lam, np.linalg.eigvalsh(sub)) if len(inn) else math.inf
    if not (eta > 0 and dist >= eta and eta_eff > 0):
        return OutbadResult(True, True, eta, math.inf, 0.0, None, None)
    if len(ext) == 0:
        return OutbadResult(True, True, eta, 0.0, 0.0, None, None)
    ext_abs = np.abs(psi[ext])
    w = int(np.argmax(ext_abs))
    bound = 2 * d / eta_eff * math.sqrt(len(ext)) * ext_abs[w]
    resid = float(np.linalg.norm(H @ psi - lam * psi))
    allowed = bound * (1 + 1e-8) + resid / eta_eff
    vals = np.abs(psi[inn])
    ratios = vals / allowed if allowed > 0 else np.where(vals > 0, np.inf, 0.0)
    i = int(np.argmax(ratios))
    return OutbadResult(
        holds=bool(ratios[i] <= 1.0),
        skipped=False,
        eta=eta,
        bound=bound,
        worst_ratio=float(ratios[i]),
        worst_site=tuple(int(v) for v in phi.sites[i]),
        witness=tuple(int(v) for v in bd.exterior.sites[w]),
    )


def outbad_sweep(H, es: Eigensystem, phi: Region) -> dict:
    """verify_outbad for every eigenpair of H_theta with eta = dist(lam, sigma(H_phi)).

    Vectorized over eigenpairs; returns counts of checked, skipped and
    violating pairs and the worst ratio.
    """
    theta = es.region
    H = np.asarray(H, dtype=float)
    V, lams = es.vectors, es.values
    bd, ext, inn, hnorm, _, d = _outbad_core(None, None, H, theta, phi, 0.0)
    n = len(theta)
    sub_vals = np.linalg.eigvalsh(H[np.ix_(inn, inn)])
    eta = np.abs(lams[:, None] - sub_vals[None, :]).min(axis=1)
    eta_eff = eta - 10 * n * np.finfo(float).eps * (1 + hnorm)
    skip = (eta_eff <= 0) | (len(ext) == 0)
    ext_max = np.abs(V[ext]).max(axis=0) if len(ext) else np.zeros(len(lams))
    resid = np.linalg.norm(H @ V - V * lams, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = 2 * d / eta_eff * math.sqrt(max(len(ext), 1)) * ext_max
        allowed = bound * (1 + 1e-8) + resid / eta_eff
        worst = np.abs(V[inn]).max(axis=0) / allowed
    worst = np.where(skip, 0.0, np.nan_to_num(worst, nan=0.0, posinf=np.inf))
    return {
        "checked": int((~skip).sum()),
        "skipped": int(skip.sum()),
        "violations": int((worst > 1.0).sum()),
        "worst_ratio": float(worst.max()) if len(worst) else 0.0,
    }


@dataclass(frozen=True)
class DecayReport:
    """Monitoring output for an asymptotic decay lemma."""

    skipped: bool
    gates: dict
    max_ratio: float
    n_tested: int
    worst_site: tuple | None
    m3: float
    C_d: float
    threshold: float

    def to_json(self) -> dict:
        return {
            "skipped": self.skipped,
            "gates": dict(self.gates),
            "max_ratio": self.max_ratio,
            "n_tested": self.n_tested,
            "worst_site": None if self.worst_site is None else list(self.worst_site),
            "m3": self.m3,
            "C_d": self.C_d,
            "threshold": self.threshold,
        }


def m3_rate(m: float, ell: float, exps: ExponentSet, C_d: float = DEFAULT_CD) -> float:
    return m * (1 - C_d * ell ** (-(1 - exps.tau) / 2))


def _ratio(num: np.ndarray, den: np.ndarray):
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(num == 0, 0.0, num / den)
    return np.where(np.isnan(r), np.inf, r)


def verify_decay_lemma(psi, lam: float, box: BoxSpec, theta: Region, es_box: Eigensystem,
                       I: EnergyInterval, m: float, exps: ExponentSet,
                       C_d: float = DEFAULT_CD) -> DecayReport:
    """Ratio of |psi(y)| to exp(-m3 h_I(lam) R(y)) max_ext|psi| deep inside a localizing box."""
    psi = np.asarray(psi, dtype=float)
    ell = box.side
    sites = box.sites
    if not sites.issubset(theta):
        raise ValueError("box must lie inside theta")
    L = ell**exps.gamma
    m3 = m3_rate(m, ell, exps, C_d)
    gap = 0.5 * math.exp(-(L**exps.beta))
    gates = {
        "lambda_in_I_ell": bool(I.shrink(ell, exps.kappa).contains(lam)),
        "spectral_distance": spectral_dist(lam, sigma_in(es_box.values, I)) >= gap,
        "box_localizing": certify_box(es_box, I, m, exps, side=ell).overall,
    }
    if not all(gates.values()):
        return DecayReport(True, gates, 0.0, 0, None, m3, C_d, gap)
    tested = interior(sites, theta, max(floor_pow(ell, exps.tau_tilde), 1))
    if len(tested) == 0:
        return DecayReport(False, gates, 0.0, 0, None, m3, C_d, gap)
    R = depths(sites, theta)[sites.locate(tested.sites)]
    ext = boundary(sites, theta).exterior
    ext_max = float(np.abs(psi[theta.locate(ext.sites)]).max()) if len(ext) else 0.0
    den = np.exp(-m3 * h_eval(I, lam) * R) * ext_max
    ratios = _ratio(np.abs(psi[theta.locate(tested.sites)]), den)
    i = int(np.argmax(ratios))
    return DecayReport(False, gates, float(ratios[i]), len(tested),
                       tuple(int(v) for v in tested.sites[i]), m3, C_d, gap)


def verify_buffer_lemma(psi, lam: float, ups: BufferedSubset, cover: Cover, H_parent,
                        I: EnergyInterval, m: float, exps: ExponentSet,
                        C_d: float = DEFAULT_CD, box_esystems=None) -> DecayReport:
    """Ratio of |psi(y)| on a buffered subset to exp(-(m3/2) h_I(lam) ell_tt) times the buffer-boundary maximum.

    ``H_parent`` is H on the parent box of the cover; subregion operators are
    its restrictions.  ``box_esystems`` optionally maps buffer indices to
    precomputed eigensystems.
    """
    from .spectral import eigensystem

    psi = np.asarray(psi, dtype=float)
    H_parent = np.asarray(H_parent, dtype=float)
    parent = cover.parent.sites
    ell = ups.ell
    L = cover.parent.side
    m3 = m3_rate(m, ell, exps, C_d)
    gap = 0.5 * math.exp(-(L**exps.beta))

    def restricted(region):
        idx = parent.locate(region.sites)
        return H_parent[np.ix_(idx, idx)]

    ups_vals = np.linalg.eigvalsh(restricted(ups.region)) if len(ups.region) else np.zeros(0)
    box_gap_ok, boxes_loc = True, True
    for a in ups.buffer:
        child = cover.child(a).sites
        es = (box_esystems or {}).get(a) or eigensystem(restricted(child), child)
        box_gap_ok &= spectral_dist(lam, sigma_in(es.values, I)) >= gap
        boxes_loc &= certify_box(es, I, m, exps, side=ell).overall
    gates = {
        "lambda_in_I_ell": bool(I.shrink(ell, exps.kappa).contains(lam)),
        "proper_subset": len(ups.region) < len(parent),
        "ups_spectral_distance": spectral_dist(lam, sigma_in(ups_vals, I)) >= gap,
        "buffer_spectral_distance": bool(box_gap_ok),
        "buffer_localizing": bool(boxes_loc),
    }
    ell_tt = floor_pow(ell, exps.tau_tilde)
    threshold = math.exp(-(m3 / 2) * h_eval(I, lam) * ell_tt)
    if not all(gates.values()):
        return DecayReport(True, gates, 0.0, 0, None, m3, C_d, threshold)
    wit = Region.empty(parent.dim)
    for a in ups.buffer:
        wit = wit.union(boundary(cover.child(a).sites, parent).exterior)
    wit_max = float(np.abs(psi[parent.locate(wit.sites)]).max()) if len(wit) else 0.0
    vals = np.abs(psi[parent.locate(ups.region.sites)])
    ratios = _ratio(vals, np.full(len(vals), threshold * wit_max))
    i = int(np.argmax(ratios))
    return DecayReport(False, gates, float(ratios[i]), len(vals),
                       tuple(int(v) for v in ups.region.sites[i]), m3, C_d, threshold)
