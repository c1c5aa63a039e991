"""Monte Carlo estimates for the probabilistic inputs of the multiscale analysis,
the single induction step from scale ell to L = ell^gamma, and the scale recursion.

Samples are processed in fixed-size chunks keyed by sample index, so the
counters that come back are independent of how many worker threads ran them.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .certificates import (
    EnergyInterval,
    build_buffered,
    certify_box,
    family_r_separated,
    rate_cap,
    rate_floor,
)
from .disorder import MAX_SITES, DisorderSpec, SizeError, hopping, sample_potentials
from .exponents import ExponentSet, floor_pow, scale_sequence, validate
from .lattice import BoxSpec, Cover, Region, suitable_cover
from .spectral import Eigensystem, eigh_batch, fix_signs

CHUNK = 64


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("EMSA_THREADS", "1")))
    except ValueError:
        return 1


def _chunks(n: int, size: int = CHUNK):
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def _run(fn, n: int, threads: int | None, size: int = CHUNK) -> list:
    """Apply fn(start, stop) over fixed chunks; results in chunk order."""
    parts = _chunks(n, size)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(parts) <= 1:
        return [fn(a, b) for a, b in parts]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda p: fn(*p), parts))


def _merge(counts: list[dict]) -> dict:
    out: dict = {}
    for c in counts:
        for k, v in c.items():
            out[k] = out.get(k, 0) + v
    return out


def _batch_hamiltonians(region: Region, V: np.ndarray) -> np.ndarray:
    Hs = np.broadcast_to(hopping(region), (V.shape[0], len(region), len(region))).copy()
    i = np.arange(len(region))
    Hs[:, i, i] = V
    return Hs


@dataclass(frozen=True)
class McReport:
    """Empirical frequency of an event against its theoretical bound."""

    n_samples: int
    n_hits: int
    bound_p: float
    skips: dict = field(default_factory=dict)
    label: str = ""

    @property
    def empirical_p(self) -> float:
        return self.n_hits / self.n_samples if self.n_samples else 0.0

    @property
    def sigma3(self) -> float:
        """3 * sqrt(p(1-p)/n), the binomial half-width used for acceptance."""
        if not self.n_samples:
            return 0.0
        p = self.empirical_p
        return 3.0 * math.sqrt(p * (1 - p) / self.n_samples)

    def within_bound(self) -> bool:
        return self.empirical_p <= self.bound_p + self.sigma3

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "n_samples": self.n_samples,
            "n_hits": self.n_hits,
            "empirical_p": self.empirical_p,
            "bound_p": self.bound_p,
            "sigma3": self.sigma3,
            "skips": dict(self.skips),
        }


def wegner_mc(region: Region, E: float, eta: float, disorder: DisorderSpec, n: int, seed: int,
              threads: int | None = None) -> McReport:
    """Frequency of dist(E, sigma(H_region)) <= eta against K~ eta^alpha |region|."""
    if not eta > 0:
        raise ValueError("eta must be positive")

    def work(a, b):
        V = sample_potentials(region, disorder, seed, np.arange(a, b))
        w = eigh_batch(_batch_hamiltonians(region, V), vectors=False)
        return {"hits": int((np.abs(w - E).min(axis=1) <= eta).sum())}

    c = _merge(_run(work, n, threads, 512))
    bound = disorder.wegner_constant * eta**disorder.alpha * len(region)
    return McReport(n, c.get("hits", 0), bound, label="wegner")


def separation_mc(region_a: Region, region_b: Region, R: float, beta: float, disorder: DisorderSpec,
                  n: int, seed: int, threads: int | None = None) -> McReport:
    """Frequency of the two regions failing to be R-separated against K~ e^(-alpha R^beta) |A||B|."""
    if not region_a.isdisjoint(region_b):
        raise ValueError("regions must be disjoint")
    thresh = math.exp(-(R**beta))
    both = region_a.union(region_b)
    ia, ib = both.locate(region_a.sites), both.locate(region_b.sites)

    def work(a, b):
        V = sample_potentials(both, disorder, seed, np.arange(a, b))
        wa = eigh_batch(_batch_hamiltonians(region_a, V[:, ia]), vectors=False)
        wb = eigh_batch(_batch_hamiltonians(region_b, V[:, ib]), vectors=False)
        gap = np.abs(wa[:, :, None] - wb[:, None, :]).min(axis=(1, 2))
        return {"hits": int((gap < thresh).sum())}

    c = _merge(_run(work, n, threads, 512))
    bound = disorder.wegner_constant * thresh**disorder.alpha * len(region_a) * len(region_b)
    return McReport(n, c.get("hits", 0), bound, label="separation")


def _check_cap(region: Region) -> None:
    if len(region) > MAX_SITES:
        raise SizeError(f"region has {len(region)} sites; cap is {MAX_SITES}")


def p_localizing_mc(L: float, x, I: EnergyInterval, m: float, exps: ExponentSet, disorder: DisorderSpec,
                    n: int, seed: int, *, d: int = 1, J: EnergyInterval | None = None,
                    threads: int | None = None) -> McReport:
    """Frequency with which Lambda_L(x) is (m, I)-localizing (or (m, J, I) when J is given)."""
    lo = rate_floor(L, exps.kappa_prime)
    if m < lo:
        raise ValueError(f"m={m} is below the rate floor L^-kappa' = {lo}")
    center = tuple(float(c) for c in np.broadcast_to(np.asarray(x, dtype=float), (d,)))
    box = BoxSpec(center, float(L))
    region = box.sites
    _check_cap(region)

    def work(a, b):
        V = sample_potentials(region, disorder, seed, np.arange(a, b))
        w, U = eigh_batch(_batch_hamiltonians(region, V))
        hits = 0
        for j in range(b - a):
            es = Eigensystem(region, w[j], U[j])
            hits += certify_box(es, I, m, exps, J, side=L).overall
        return {"hits": hits}

    c = _merge(_run(work, n, threads))
    return McReport(n, c.get("hits", 0), 1 - math.exp(-(L**exps.zeta)), label="p_localizing")


def _conflicts(idx: list[int], cover: Cover) -> list[int]:
    """Bitmask adjacency of the non-disjointness graph on the listed centers."""
    D = cover.index_dist()[np.ix_(idx, idx)]
    clash = (D < cover.k_ell) & ~np.eye(len(idx), dtype=bool)
    return [sum(1 << int(j) for j in np.nonzero(row)[0]) for row in clash]


def _mis_exact(adj: list[int]) -> int:
    """Maximum independent set as a bitmask, by branch and bound on bitsets."""
    n = len(adj)
    best = [0, 0]  # size, mask

    def grow(cand: int, chosen: int, size: int):
        # vertices with no remaining conflicts are always taken
        while cand:
            free = 0
            c = cand
            while c:
                v = (c & -c).bit_length() - 1
                c &= c - 1
                if adj[v] & cand == 0:
                    free |= 1 << v
            if not free:
                break
            chosen |= free
            size += bin(free).count("1")
            cand &= ~free
        if size + bin(cand).count("1") <= best[0]:
            return
        if not cand:
            best[0], best[1] = size, chosen
            return
        # branch on the candidate with most conflicts
        c, v, deg = cand, -1, -1
        while c:
            u = (c & -c).bit_length() - 1
            c &= c - 1
            du = bin(adj[u] & cand).count("1")
            if du > deg:
                v, deg = u, du
        grow(cand & ~adj[v] & ~(1 << v), chosen | (1 << v), size + 1)
        grow(cand & ~(1 << v), chosen, size)

    grow((1 << n) - 1, 0, 0)
    return best[1]


def _mis_greedy(adj: list[int]) -> int:
    n = len(adj)
    cand, chosen = (1 << n) - 1, 0
    while cand:
        v = min((u for u in range(n) if cand >> u & 1), key=lambda u: (bin(adj[u] & cand).count("1"), u))
        chosen |= 1 << v
        cand &= ~adj[v] & ~(1 << v)
    return chosen


EXACT_LIMIT = 64


def max_disjoint_family(bad_flags, cover: Cover) -> tuple[list[int], bool]:
    """A maximum family of pairwise disjoint bad boxes (cover indices) and an exactness flag.

    Exact for up to EXACT_LIMIT bad boxes; beyond that a greedy maximal
    family is returned, which is only a lower bound on the maximum.
    """
    flags = np.asarray(bad_flags, dtype=bool)
    if flags.shape != (len(cover),):
        raise ValueError("need one flag per cover center")
    idx = [int(i) for i in np.nonzero(flags)[0]]
    if not idx:
        return [], True
    adj = _conflicts(idx, cover)
    exact = len(idx) <= EXACT_LIMIT
    mask = _mis_exact(adj) if exact else _mis_greedy(adj)
    return [idx[j] for j in range(len(idx)) if mask >> j & 1], exact


def max_disjoint_bad(bad_flags, cover: Cover) -> int:
    return len(max_disjoint_family(bad_flags, cover)[0])


STEP_COLUMNS = (
    "sample", "n_bad", "max_disjoint_bad", "exact", "event_B_N", "n_clusters", "n_buffered",
    "buffered_violations", "diam_ok", "buffer_localizing", "event_S", "event_S_full",
    "s_lambda_ok", "conclusion_rate_ok", "conclusion_localized", "conclusion",
)


@dataclass(frozen=True)
class StepReport:
    """Per-sample events of the induction step and their frequencies."""

    params: dict
    rows: tuple[dict, ...]

    @property
    def n(self) -> int:
        return len(self.rows)

    def frequency(self, *cols: str) -> float:
        """Joint frequency of the named boolean columns (None counts as false)."""
        if not self.rows:
            return 0.0
        return sum(all(r[c] is True for c in cols) for r in self.rows) / self.n

    def conditional(self, target: str, *given: str) -> float | None:
        k = sum(all(r[c] is True for c in given) for r in self.rows)
        if k == 0:
            return None
        return sum(all(r[c] is True for c in given + (target,)) for r in self.rows) / k

    def summary(self) -> dict:
        events = ("event_B_N", "event_S", "buffer_localizing", "conclusion_rate_ok",
                  "conclusion_localized", "conclusion")
        out = {f"p_{e}": self.frequency(e) for e in events}
        out["p_B_and_S"] = self.frequency("event_B_N", "event_S")
        out["p_B_and_S_and_conclusion"] = self.frequency("event_B_N", "event_S", "conclusion")
        out["p_conclusion_given_B_and_S"] = self.conditional("conclusion", "event_B_N", "event_S")
        out["p_localized_given_B_and_S"] = self.conditional("conclusion_localized", "event_B_N", "event_S")
        out["total_buffered_violations"] = sum(r["buffered_violations"] for r in self.rows)
        out["all_exact"] = all(r["exact"] for r in self.rows)
        return out

    def to_json(self) -> dict:
        return {"params": dict(self.params), "summary": self.summary(), "samples": list(self.rows)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(STEP_COLUMNS)
        for r in self.rows:
            w.writerow(["" if r[c] is None else (int(r[c]) if isinstance(r[c], bool) else r[c])
                        for c in STEP_COLUMNS])
        return buf.getvalue()


def _candidate_hulls(cover: Cover, N: int) -> list[np.ndarray] | None:
    """Hulls of every G2-connected set of at most N centers (None when N > 2)."""
    if N > 2:
        return None
    ID = cover.index_dist()
    k = cover.k_ell
    sets = [[a] for a in range(len(cover))]
    if N == 2:
        a, b = np.nonzero(np.triu((ID >= k) & (ID <= 3 * k - 1)))
        sets += [[int(i), int(j)] for i, j in zip(a, b)]
    return [np.nonzero(ID[:, s].min(axis=1) <= k)[0] for s in sets]


def induction_step(ell: float, I: EnergyInterval, m: float, exps: ExponentSet, disorder: DisorderSpec,
                   n: int, seed: int, *, d: int = 1, C_d: float = 1.0,
                   threads: int | None = None) -> StepReport:
    """Run the scale-ell to scale-L induction experiment on n disorder samples."""
    report = validate(exps)
    if not report.passed:
        raise ValueError(f"exponent set fails {report.failures()[0]}")
    L = ell**exps.gamma
    parent = BoxSpec.centered(L, d)
    psites = parent.sites
    _check_cap(psites)
    cover = suitable_cover(parent, ell, exps.varsigma)
    N = floor_pow(ell, (exps.gamma - 1) * exps.zeta_tilde)
    M = m * (1 - C_d * ell**-exps.varrho)
    I_ell = I.shrink(ell, exps.kappa)
    children = [cover.child(a).sites for a in range(len(cover))]
    child_idx = [psites.locate(c.sites) for c in children]
    cand_hulls = _candidate_hulls(cover, N)
    params = {
        "ell": ell, "L": L, "d": d, "N": N, "m": m, "M": M, "C_d": C_d,
        "I": I.to_json(), "I_ell": I_ell.to_json(), "n": n, "seed": seed,
        "cover": {"k": cover.k, "k_ell": cover.k_ell, "rho": cover.rho, "n_centers": len(cover)},
        "child_rate_bounds": [rate_floor(ell, exps.kappa_prime), rate_cap(I.A, d)],
        "conclusion_rate_bounds": [rate_floor(L, exps.kappa_prime), rate_cap(I_ell.A, d)],
    }

    def sample(index: int, V: np.ndarray) -> dict:
        H = hopping(psites).copy()
        H[np.diag_indices(len(psites))] = V

        def sub_values(idx):
            return np.linalg.eigvalsh(H[np.ix_(idx, idx)])

        good = np.zeros(len(cover), dtype=bool)
        child_vals = []
        for a, idx in enumerate(child_idx):
            w, U = np.linalg.eigh(H[np.ix_(idx, idx)])
            es = Eigensystem(children[a], w, fix_signs(U))
            good[a] = certify_box(es, I, m, exps, side=ell).overall
            child_vals.append(w)
        members, exact = max_disjoint_family(~good, cover)
        event_B = len(members) <= N
        buffered = build_buffered(members, cover, exps)
        covered = set()
        for b in buffered:
            covered.update(b.hull)
        G = [a for a in range(len(cover)) if a not in covered]
        family = [(children[a], child_vals[a]) for a in G]
        family += [(b.region, sub_values(psites.locate(b.region.sites))) for b in buffered]
        event_S, _ = family_r_separated(family, L, exps.beta)

        event_S_full = None
        if cand_hulls is not None:
            full = [(children[a], child_vals[a]) for a in range(len(cover))]
            for h in cand_hulls:
                reg = Region.from_sites(np.concatenate([children[a].sites for a in h]), d)
                full.append((reg, sub_values(psites.locate(reg.sites))))
            event_S_full, _ = family_r_separated(full, L, exps.beta)

        w, U = np.linalg.eigh(H)
        es_L = Eigensystem(psites, w, fix_signs(U))
        half = 0.5 * math.exp(-(L**exps.beta))
        lam_in = es_L.values[I_ell.contains(es_L.values)]
        s_lambda_ok = all(
            any(np.abs(vals - lam).min() <= half for _, vals in family if len(vals)) for lam in lam_in
        )
        cert = certify_box(es_L, I, M, exps, I_ell, side=L)
        return {
            "sample": index,
            "n_bad": int((~good).sum()),
            "max_disjoint_bad": len(members),
            "exact": bool(exact),
            "event_B_N": bool(event_B),
            "n_clusters": len(buffered),
            "n_buffered": int(sum(len(b.region) for b in buffered)),
            "buffered_violations": int(sum(len(b.violations) for b in buffered)),
            "diam_ok": all(b.diameter <= 6 * ell * len(b.core) for b in buffered),
            "buffer_localizing": bool(all(good[a] for b in buffered for a in b.buffer)),
            "event_S": bool(event_S),
            "event_S_full": event_S_full,
            "s_lambda_ok": bool(s_lambda_ok),
            "conclusion_rate_ok": cert.rate_ok,
            "conclusion_localized": cert.localized,
            "conclusion": cert.overall,
        }

    def work(a, b):
        V = sample_potentials(psites, disorder, seed, np.arange(a, b))
        return [sample(a + j, V[j]) for j in range(b - a)]

    rows = [r for part in _run(work, n, threads, 8) for r in part]
    return StepReport(params, tuple(rows))


@dataclass(frozen=True)
class RecursionState:
    k: int
    L: float
    A: float
    m: float
    I: EnergyInterval

    def to_json(self) -> dict:
        return {"k": self.k, "L": self.L, "A": self.A, "m": self.m, "I": self.I.to_json()}


@dataclass(frozen=True)
class RecursionResult:
    states: tuple[RecursionState, ...]
    A_inf: float
    m_inf: float
    tail_A: float
    tail_m: float
    terms: int
    sandwich_ok: bool
    overflowed: bool

    def to_json(self) -> dict:
        return {
            "states": [s.to_json() for s in self.states],
            "A_inf": self.A_inf,
            "m_inf": self.m_inf,
            "tail_bound_A": self.tail_A,
            "tail_bound_m": self.tail_m,
            "terms": self.terms,
            "sandwich_ok": self.sandwich_ok,
            "overflowed": self.overflowed,
        }


def _infinite_product(log_x0: float, gamma: float, coef: float, tol: float, max_terms: int = 10_000):
    """prod_{j>=0} (1 - coef * exp(log_x0 * gamma^j)) with a geometric tail bound on -log of the rest.

    Returns (product, tail bound, terms used).
    """
    if coef == 0:
        return 1.0, 0.0, 0
    logp = 0.0
    for j in range(max_terms):
        x = coef * math.exp(log_x0 * gamma**j)
        if x >= 1:
            raise ValueError(f"factor {j} is non-positive (1 - {x})")
        # remaining terms shrink at least geometrically with ratio x_j^(gamma-1)
        r = math.exp((gamma - 1) * log_x0 * gamma**j)
        tail = x / ((1 - x) * (1 - r)) if r < 1 else math.inf
        if tail < tol:
            return math.exp(logp), tail, j
        logp += math.log1p(-x)
    raise RuntimeError("infinite product did not converge")


def recursion(L0: float, A0: float, m0: float, exps: ExponentSet, C_d: float = 1.0, k_max: int = 5,
              tol: float = 1e-10, *, d: int = 1, E: float = 0.0) -> RecursionResult:
    """Scales, interval radii and rates across the multiscale recursion, with their limits."""
    if not L0 > 1:
        raise ValueError("L0 must exceed 1")
    if not (A0 > 0 and m0 > 0):
        raise ValueError("A0 and m0 must be positive")
    if C_d < 0:
        raise ValueError("C_d must be non-negative")
    if C_d * L0**-exps.varrho >= 1:
        raise ValueError(f"C_d L0^-varrho = {C_d * L0**-exps.varrho} >= 1; rate factors vanish")
    scales = scale_sequence(L0, exps.gamma, k_max)
    states, A, m = [], A0, m0
    for k, Lk in enumerate(scales.values):
        states.append(RecursionState(k, Lk, A, m, EnergyInterval(E, A)))
        A = A * (1 - Lk**-exps.kappa)
        m = m * (1 - C_d * Lk**-exps.varrho)
    logL0 = math.log(L0)
    pA, tA, nA = _infinite_product(-exps.kappa * logL0, exps.gamma, 1.0, tol)
    pm, tm, nm = _infinite_product(-exps.varrho * logL0, exps.gamma, C_d, tol)
    A_inf, m_inf = A0 * pA, m0 * pm
    sandwich = L0 ** (-exps.gamma * exps.kappa_prime) <= m_inf < rate_cap(A_inf, d)
    return RecursionResult(tuple(states), A_inf, m_inf, tA, tm, max(nA, nm), bool(sandwich), scales.overflowed)


def between_scales(L: float, result: RecursionResult, k: int, exps: ExponentSet, disorder: DisorderSpec,
                   n: int, seed: int, *, d: int = 1, threads: int | None = None) -> McReport:
    """p_localizing_mc at L in [L_k, L_{k+1}) against the (m_k, I_k, I_{k-1}) target."""
    st = result.states
    if not 1 <= k < len(st) - 1:
        raise ValueError(f"k must lie in [1, {len(st) - 2}]")
    if not st[k].L <= L < st[k + 1].L:
        raise ValueError(f"L={L} is outside [L_k, L_k+1) = [{st[k].L}, {st[k + 1].L})")
    return p_localizing_mc(L, 0.0, st[k - 1].I, st[k].m, exps, disorder, n, seed, d=d, J=st[k].I,
                           threads=threads)
