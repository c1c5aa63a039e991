"""Exponent schedule for the multiscale analysis and the scale sequence L_{k+1} = L_k^gamma.

Validation rows come in three kinds:

* ``selection`` -- the independent constraints one actually chooses exponents
  against (the primary chain plus the kappa and varsigma conditions);
* ``consequence`` -- relations that follow from the selection rows (the
  expanded chain, the tilde exponents, positivity of varrho).  They are
  re-checked numerically but can only fail when some selection row fails;
* ``info`` -- reported, never enforced (kappa <= varrho).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import NamedTuple

SELECTION = "selection"
CONSEQUENCE = "consequence"
INFO = "info"


class InfeasibleExponents(ValueError):
    pass


@dataclass(frozen=True)
class ExponentSet:
    xi: float
    zeta: float
    beta: float
    tau: float
    gamma: float
    kappa: float
    kappa_prime: float
    varsigma: float

    @property
    def zeta_tilde(self) -> float:
        return (self.zeta + self.beta) / 2

    @property
    def tau_tilde(self) -> float:
        return (1 + self.tau) / 2

    @property
    def varrho_terms(self) -> tuple[float, float, float]:
        return (
            self.kappa,
            (1 - self.tau) / 2,
            self.gamma * self.tau - (self.gamma - 1) * self.zeta_tilde - 1,
        )

    @property
    def varrho(self) -> float:
        return min(self.varrho_terms)

    def to_json(self) -> dict:
        out = asdict(self)
        out["derived"] = {
            "zeta_tilde": self.zeta_tilde,
            "tau_tilde": self.tau_tilde,
            "varrho": self.varrho,
        }
        return out

    @classmethod
    def from_json(cls, data: dict) -> "ExponentSet":
        return cls(**{f.name: float(data[f.name]) for f in fields(cls)})


@dataclass(frozen=True)
class Check:
    id: str
    relation: str
    lhs: float
    rhs: float
    passed: bool
    kind: str

    @property
    def margin(self) -> float:
        """Slack rhs - lhs (negative when the relation fails)."""
        return self.rhs - self.lhs


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.kind != INFO)

    def failures(self, kind: str | None = None) -> list[str]:
        return [
            c.id for c in self.checks
            if not c.passed and c.kind != INFO and (kind is None or c.kind == kind)
        ]

    def __getitem__(self, check_id: str) -> Check:
        for c in self.checks:
            if c.id == check_id:
                return c
        raise KeyError(check_id)

    def rows(self) -> list[dict]:
        return [
            {
                "id": c.id,
                "relation": c.relation,
                "kind": c.kind,
                "lhs": c.lhs,
                "rhs": c.rhs,
                "margin": c.margin,
                "pass": c.passed,
            }
            for c in self.checks
        ]


def _lt(cid, rel, lhs, rhs, kind):
    return Check(cid, rel, float(lhs), float(rhs), bool(lhs < rhs), kind)


def _le(cid, rel, lhs, rhs, kind):
    return Check(cid, rel, float(lhs), float(rhs), bool(lhs <= rhs), kind)


def validate(e: ExponentSet) -> ValidationReport:
    vals = [getattr(e, f.name) for f in fields(e)]
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("all exponents must be finite")
    xi, zeta, beta, tau, gamma = e.xi, e.zeta, e.beta, e.tau, e.gamma
    kappa, kprime, vs = e.kappa, e.kappa_prime, e.varsigma
    zt, tt, vr = e.zeta_tilde, e.tau_tilde, e.varrho
    sqrt_ratio = math.sqrt(zeta / xi) if xi > 0 and zeta >= 0 else math.inf
    gap = tau - gamma * beta
    # ratio (1-beta)/(tau-beta); only meaningful for tau > beta
    ratio = (1 - beta) / (tau - beta) if tau > beta else math.inf

    S, C = SELECTION, CONSEQUENCE
    checks = [
        _lt("xi_positive", "0 < xi", 0.0, xi, S),
        _lt("xi_lt_zeta", "xi < zeta", xi, zeta, S),
        _lt("zeta_lt_beta", "zeta < beta", zeta, beta, S),
        _lt("gamma_gt_one", "1 < gamma", 1.0, gamma, S),
        # xi gamma^2 < zeta is the division-free form of gamma < sqrt(zeta/xi)
        Check("gamma_lt_sqrt_ratio", "gamma < sqrt(zeta/xi)", gamma, sqrt_ratio,
              bool(xi * gamma**2 < zeta), S),
        _lt("tau_gt_gamma_beta", "gamma*beta < tau", gamma * beta, tau, S),
        _lt("tau_gt_mixed", "((gamma-1)*beta+1)/gamma < tau",
            ((gamma - 1) * beta + 1) / gamma, tau, S),
        _lt("tau_lt_one", "tau < 1", tau, 1.0, S),
        _lt("kappa_positive", "0 < kappa", 0.0, kappa, S),
        _le("kappa_prime_nonneg", "0 <= kappa'", 0.0, kprime, S),
        _lt("kappa_sum_lt_gap", "kappa + kappa' < tau - gamma*beta", kappa + kprime, gap, S),
        _lt("varsigma_positive", "0 < varsigma", 0.0, vs, S),
        _le("varsigma_le_bound", "varsigma <= 1 - varrho", vs, 1 - vr, S),
        # consequences
        _lt("beta_lt_inv_gamma", "beta < 1/gamma", beta, 1 / gamma, C),
        _lt("xi_lt_xi_gamma_sq", "xi < xi*gamma^2", xi, xi * gamma**2, C),
        _lt("beta_lt_tau_over_gamma", "beta < tau/gamma", beta, tau / gamma, C),
        _lt("inv_gamma_lt_tau", "1/gamma < tau", 1 / gamma, tau, C),
        _lt("one_lt_ratio", "1 < (1-beta)/(tau-beta)", 1.0, ratio, C),
        _lt("ratio_lt_gamma", "(1-beta)/(tau-beta) < gamma", ratio, gamma, C),
        _lt("gamma_lt_tau_over_beta", "gamma < tau/beta", gamma,
            tau / beta if beta > 0 else math.inf, C),
        _lt("zeta_lt_zeta_tilde", "zeta < zeta~", zeta, zt, C),
        _lt("zeta_tilde_lt_beta", "zeta~ < beta", zt, beta, C),
        _lt("tau_lt_tau_tilde", "tau < tau~", tau, tt, C),
        _lt("tau_tilde_lt_one", "tau~ < 1", tt, 1.0, C),
        _lt("mixed_zeta_tilde_lt_beta", "(gamma-1)zeta~+1 < (gamma-1)beta+1",
            (gamma - 1) * zt + 1, (gamma - 1) * beta + 1, C),
        _lt("mixed_beta_lt_gamma_tau", "(gamma-1)beta+1 < gamma*tau",
            (gamma - 1) * beta + 1, gamma * tau, C),
        _lt("kappa_lt_one", "kappa < 1", kappa, 1.0, C),
        _lt("kappa_prime_lt_one", "kappa' < 1", kprime, 1.0, C),
        _lt("varrho_positive", "0 < varrho", 0.0, vr, C),
        _lt("varrho_lt_one", "varrho < 1", vr, 1.0, C),
        _le("kappa_le_varrho", "kappa <= varrho", kappa, vr, INFO),
    ]
    return ValidationReport(tuple(checks))


_OVERRIDABLE = {"gamma", "beta", "tau", "kappa", "kappa_prime", "varsigma"}


def derive(xi: float, zeta: float, overrides: dict | None = None) -> ExponentSet:
    """Pick a full exponent set for given 0 < xi < zeta < 1.

    Unspecified exponents are placed at midpoints of their admissible ranges,
    each computed from the (possibly overridden) upstream values.
    """
    overrides = dict(overrides or {})
    unknown = set(overrides) - _OVERRIDABLE
    if unknown:
        raise ValueError(f"cannot override {sorted(unknown)}")
    if not 0 < xi:
        raise InfeasibleExponents("0 < xi violated")
    if not xi < zeta:
        raise InfeasibleExponents("xi < zeta violated")
    if not zeta < 1:
        raise InfeasibleExponents("zeta < 1 violated")

    # gamma must stay below sqrt(zeta/xi) and below 1/zeta (room for beta)
    gamma = overrides.get("gamma", (1 + min(math.sqrt(zeta / xi), 1 / zeta)) / 2)
    beta = overrides.get("beta", (zeta + 1 / gamma) / 2)
    tau_lo = max(gamma * beta, ((gamma - 1) * beta + 1) / gamma)
    if "tau" not in overrides and not tau_lo < 1:
        raise InfeasibleExponents(f"tau interval ({tau_lo}, 1) is empty")
    tau = overrides.get("tau", (tau_lo + 1) / 2)
    gap = tau - gamma * beta
    kappa = overrides.get("kappa", gap / 4)
    kappa_prime = overrides.get("kappa_prime", gap / 4)
    e = ExponentSet(xi, zeta, beta, tau, gamma, kappa, kappa_prime, varsigma=0.5)
    varsigma = overrides.get("varsigma", (1 - e.varrho) / 2)
    e = replace(e, varsigma=varsigma)
    report = validate(e)
    if not report.passed:
        raise InfeasibleExponents(f"constraint {report.failures()[0]} violated")
    return e


class Scales(NamedTuple):
    values: list[float]
    overflowed: bool


OVERFLOW_LIMIT = 1e300


def scale_sequence(L0: float, gamma: float, kmax: int) -> Scales:
    """L_k = L0^(gamma^k) for k = 0..kmax, stopping early past 1e300."""
    if not L0 > 1:
        raise ValueError("L0 must exceed 1")
    if not gamma > 1:
        raise ValueError("gamma must exceed 1")
    log_limit = math.log(OVERFLOW_LIMIT)
    out = []
    for k in range(kmax + 1):
        logL = gamma**k * math.log(L0)
        if logL > log_limit:
            return Scales(out, True)
        out.append(L0 ** (gamma**k))
    return Scales(out, False)


def floor_pow(L: float, p: float) -> int:
    """floor(L^p), snapping values within 1e-12 of an integer."""
    if L < 1:
        raise ValueError("floor_pow requires L >= 1")
    v = L**p
    r = round(v)
    if abs(v - r) <= 1e-12 * max(1.0, v):
        return int(r)
    return math.floor(v)
