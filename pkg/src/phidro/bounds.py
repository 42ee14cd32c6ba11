"""Hard two-point instances and evaluable sample-complexity formulas.

All logarithms are natural unless written ``log2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from .divergence import DivergenceSpec, Growth, Kind, phi_array, phi_value, growth_inverse
from .errors import AssumptionViolated, EpsTooLarge, POutOfRange
from .risk import FiniteInstance, _solve_primal, primal_value

# (G, L_thr) with phi(x)/x <= G for every x >= L_thr.
_SLOPE_TABLE = {
    Kind.VARIATION: (1.0, 1.0),
    Kind.BURG: (1.0, 1.0),
    Kind.NEYMAN: (2.0, 2.0),
    Kind.HELLINGER: (1.0, 1.0),
    Kind.ESS_SUP: (1.0, 1.0),
}


@dataclass(frozen=True)
class SublinearConstants:
    G: float
    Lthr: float
    r: float
    p_max: float
    k: float

    def to_dict(self) -> dict[str, float]:
        return {"G": self.G, "Lthr": self.Lthr, "r": self.r, "p_max": self.p_max, "k": self.k}


@dataclass(frozen=True)
class HardInstance:
    instance: FiniteInstance
    guarantee: float
    le_cam_n: int

    def to_dict(self) -> dict[str, Any]:
        out = self.instance.to_dict()
        out.update(guarantee=self.guarantee, le_cam_n=self.le_cam_n)
        return out


def _slope_bound(spec: DivergenceSpec) -> tuple[float, float]:
    if spec.kind is Kind.CRESSIE_READ:
        return max(1.0, 1.0 / (1.0 - spec.k)), 1.0
    return _SLOPE_TABLE[spec.kind]


def certify_slope(spec: DivergenceSpec, G: float, Lthr: float, points: int = 2000) -> bool:
    """Check phi(x)/x <= G on a log grid of [Lthr, 1e9]."""
    grid = np.geomspace(Lthr, 1e9, points)
    return bool(np.all(phi_array(spec, grid) / grid <= G + 1e-12))


def sublinear_constants(spec: DivergenceSpec, tau: float) -> SublinearConstants:
    """Constants of the two-point lower-bound construction for a sublinear divergence."""
    if spec.growth_class is not Growth.SUBLINEAR:
        raise ValueError(f"{spec.label} does not have sublinear growth")
    if not tau > 0.0:
        raise ValueError("tau must be positive")
    if not spec.satisfies_interior_assumption:
        raise AssumptionViolated(f"{spec.label}: no neighbourhood of 1 inside dom(phi)")
    G, Lthr = _slope_bound(spec)
    if not certify_slope(spec, G, Lthr):
        raise AssumptionViolated(f"{spec.label}: slope bound G={G} fails on [{Lthr}, 1e9]")

    def worst(r: float) -> float:
        return max(phi_value(spec, 1.0 - r), phi_value(spec, 1.0 + r))

    cap = min(tau / (2.0 * G), 1.0, spec.interior_radius)
    if worst(cap) <= tau / 2.0:
        r = cap
    else:
        lo, hi = 0.0, cap
        while hi - lo > 1e-15 * cap:
            mid = 0.5 * (lo + hi)
            if worst(mid) <= tau / 2.0:
                lo = mid
            else:
                hi = mid
        r = lo
    if r <= 0.0:
        raise AssumptionViolated(f"{spec.label}: no radius r > 0 keeps phi(1 +- r) <= tau/2")
    return SublinearConstants(G=G, Lthr=Lthr, r=r, p_max=r / Lthr, k=tau / (G * r))


def sublinear_witness(consts: SublinearConstants, p: float) -> tuple[float, float]:
    """Feasible density (zeta_1, zeta_2) certifying R(X) >= r on the two-point instance."""
    return consts.r / p, (1.0 - consts.r) / (1.0 - p)


def witness_residuals(spec: DivergenceSpec, tau: float, consts: SublinearConstants, p: float) -> tuple[float, float]:
    """(mean residual, divergence excess) of :func:`sublinear_witness`."""
    z1, z2 = sublinear_witness(consts, p)
    mean = abs(p * z1 + (1.0 - p) * z2 - 1.0)
    div = p * phi_value(spec, z1) + (1.0 - p) * phi_value(spec, z2)
    return mean, max(0.0, div - tau)


def sublinear_hard_instance(spec: DivergenceSpec, tau: float, p: float) -> HardInstance:
    consts = sublinear_constants(spec, tau)
    if not 0.0 < p <= consts.p_max:
        raise POutOfRange(f"p={p!r} outside (0, p_max={consts.p_max!r}]")
    inst = FiniteInstance((1.0, 0.0), (p, 1.0 - p), 1.0, tau, spec)
    return HardInstance(inst, consts.r, int(math.floor(1.0 / (2.0 * p))))


def _require_growing(spec: DivergenceSpec) -> None:
    if spec.growth_class is Growth.SUBLINEAR:
        raise ValueError(f"{spec.label} has sublinear growth; sample complexity can be made arbitrarily large")


def superlinear_hard_instance(spec: DivergenceSpec, tau: float, B: float, eps: float) -> HardInstance:
    """Two-point instance with R(X) >= eps that is hard to tell from a point mass at 0."""
    _require_growing(spec)
    if not (tau > 0.0 and B >= 1.0 and eps > 0.0):
        raise ValueError("need tau > 0, B >= 1 and eps > 0")
    level = growth_inverse(spec, tau * B / (2.0 * eps))
    q = eps / B
    p = q / level
    if not 0.0 < p <= 0.5 or q >= 1.0:
        raise EpsTooLarge(f"p(eps)={p!r} is not in (0, 1/2]")
    top = p * phi_value(spec, q / p)
    rest = phi_value(spec, (1.0 - q) / (1.0 - p))
    if top > 0.5 * tau * (1.0 + 1e-9) or rest > 0.5 * tau:
        raise EpsTooLarge(f"feasibility conditions fail at eps={eps!r}: {top!r}, {rest!r} vs tau/2={tau / 2!r}")
    inst = FiniteInstance((B, 0.0), (p, 1.0 - p), B, tau, spec)
    return HardInstance(inst, eps, int(math.floor(level * B / (2.0 * eps))))


def hard_instance(
    spec: DivergenceSpec,
    tau: float,
    *,
    p: float | None = None,
    eps: float | None = None,
    B: float = 1.0,
) -> HardInstance:
    """Dispatch on growth class: sublinear specs take ``p``, the others ``eps`` and ``B``."""
    if spec.growth_class is Growth.SUBLINEAR:
        if p is None or eps is not None:
            raise ValueError(f"{spec.label} is sublinear: give p (and not eps)")
        return sublinear_hard_instance(spec, tau, p)
    if eps is None or p is not None:
        raise ValueError(f"{spec.label} is not sublinear: give eps and B (and not p)")
    return superlinear_hard_instance(spec, tau, B, eps)


def le_cam_bound(p: float, n: int) -> float:
    """(1 - p)^n / 2: failure probability floor for the two-point pair."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be a probability")
    return 0.5 * (1.0 - p) ** n


def two_point_risk(spec: DivergenceSpec, tau: float, B: float, p: float) -> float:
    """R(p) for payoffs (B, 0) with P(omega_1) = p."""
    if p <= 0.0:
        return 0.0
    return primal_value(FiniteInstance((B, 0.0), (p, 1.0 - p), B, tau, spec))


def quadratic_lb_p_bar(spec: DivergenceSpec, tau: float, B: float) -> float:
    """Largest p <= 1/2 with R(p) <= B/2 on the (B, 0) two-point family, by bisection."""
    if two_point_risk(spec, tau, B, 0.5) <= 0.5 * B:
        return 0.5
    lo, hi = 0.0, 0.5
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if two_point_risk(spec, tau, B, mid) <= 0.5 * B:
            lo = mid
        else:
            hi = mid
    return lo


def sample_lower_bound(spec: DivergenceSpec, tau: float, B: float, eps: float) -> float:
    _require_growing(spec)
    return max(growth_inverse(spec, tau * B / (2.0 * eps)) * B / (2.0 * eps), B * B / (eps * eps))


# ---------------------------------------------------------------------------
# upper bounds


@dataclass(frozen=True)
class DualConstants:
    """Truncation level and the derived Lipschitz / boundedness constants at accuracy eps."""

    L: float
    lambda_lo: float
    Lbar: float
    M: float


def dual_constants(spec: DivergenceSpec | None, tau: float, B: float, eps: float, level: float | None = None) -> DualConstants:
    """``L = g^{-1}(32 B tau / eps)`` (or ``level``), ``lambda_lo = eps/(8 tau)``,
    ``Lbar = L + 1 + 2(1+L)B/lambda_lo + tau`` and ``M = (3 + 2L)B``."""
    L = growth_inverse(spec, 32.0 * B * tau / eps) if level is None else level
    lam = eps / (8.0 * tau)
    return DualConstants(L=L, lambda_lo=lam, Lbar=L + 1.0 + 2.0 * (1.0 + L) * B / lam + tau, M=(3.0 + 2.0 * L) * B)


@dataclass(frozen=True)
class LipschitzConstants:
    mu_modulus: float
    lambda_modulus: float
    bound: float


def lipschitz_constants(L: float, B: float, tau: float, lambda_lo: float) -> LipschitzConstants:
    """Moduli of the truncated dual integrand on ``[lambda_lo, 2B/tau] x [-B, B]``."""
    return LipschitzConstants(L + 1.0, 2.0 * (1.0 + L) * B / lambda_lo + tau, (3.0 + 2.0 * L) * B)


def untruncated_level(spec: DivergenceSpec, B: float, lambda_lo: float) -> float:
    """Cap above which truncation no longer changes the restricted dual: ``g^{-1}(4B/lambda_lo)``."""
    return growth_inverse(spec, 4.0 * B / lambda_lo)


def instance_truncation_level(inst: FiniteInstance, eps: float) -> float:
    """Smallest L >= 1 with ``E_P[zeta* - L]_+ <= eps/8`` for the exact optimal density.

    Densities that tie (kinks) resolve to the primal solver's deterministic choice.
    """
    _, zeta, sup, _ = _solve_primal(inst)
    target = eps / 8.0

    def tail(level: float) -> float:
        return float(np.dot(sup.ps, np.maximum(zeta - level, 0.0)))

    lo, hi = 1.0, max(1.0, float(zeta.max()))
    if tail(lo) <= target:
        return 1.0
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if tail(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


class BoundMode(str, Enum):
    HOEFFDING = "hoeffding"
    BERNSTEIN = "bernstein"
    INCREMENT = "increment"


def _check_inputs(tau: float, B: float, eps: float, delta: float) -> None:
    if not (tau > 0.0 and B > 0.0):
        raise ValueError("tau and B must be positive")
    if not 0.0 < eps <= B:
        raise ValueError("eps must lie in (0, B]")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")


def hoeffding_sample_size(c: DualConstants, tau: float, B: float, eps: float, delta: float) -> float:
    log_term = math.log(256.0 * B**2 * c.Lbar**2 / (tau * eps**2 * delta))
    return 128.0 * c.M**2 * log_term / eps**2


def bernstein_sample_size(c: DualConstants, tau: float, B: float, eps: float, delta: float) -> float:
    log_term = math.log(256.0 * B**2 * c.Lbar / (eps**2 * tau * delta))
    return 2048.0 * c.M * B * log_term / eps**2 + 32.0 * c.M * log_term / eps


def expectation_sample_size(spec: DivergenceSpec, tau: float, B: float, eps: float) -> float:
    """Samples after which ``R - eps <= E[R_n] <= R`` (no confidence level)."""
    c = dual_constants(spec, tau, B, eps)
    return 512.0 * c.M**2 * math.log(8192.0 * B**3 * c.Lbar**2 / (tau * eps**3)) / eps**2


def _sup_m_eps(spec: DivergenceSpec, tau: float, B: float, eps: float, points: int = 200) -> float:
    """sup over eps' in [eps, B] of M(eps') * eps' on a log grid refined until stable to 0.1%."""

    def grid_sup(k: int) -> float:
        grid = np.geomspace(eps, B, k) if B > eps else np.array([eps])
        return max((3.0 + 2.0 * growth_inverse(spec, 32.0 * B * tau / e)) * B * e for e in grid)

    best = grid_sup(points)
    while points < 12800:
        points *= 2
        refined = grid_sup(points)
        if abs(refined - best) <= 1e-3 * abs(best):
            return max(best, refined)
        best = refined
    return best


def increment_sample_size(spec: DivergenceSpec, tau: float, B: float, eps: float, delta: float) -> float:
    c = dual_constants(spec, tau, B, eps)
    ratio = math.log2(B / eps)
    rounds = max(1, math.ceil(ratio))
    log_term = math.log(1024.0 * B**2 * max(1.0, ratio) ** 2 * c.Lbar**2 / (tau * eps**2 * delta))
    sup_term = _sup_m_eps(spec, tau, B, eps)
    return float(4096.0 * sup_term * log_term * rounds**2 / eps**2 + 32.0 * c.M * log_term * rounds / eps)


def sample_upper_bound(
    spec: DivergenceSpec,
    tau: float,
    B: float,
    eps: float,
    delta: float,
    mode: BoundMode | str = BoundMode.INCREMENT,
    level: float | None = None,
) -> float:
    """Sample size sufficient for ``|R_n - R| <= eps`` with probability ``1 - delta``.

    ``level`` replaces the growth-based truncation level by an instance-dependent
    one (see :func:`instance_truncation_level`); it applies to the Hoeffding and
    Bernstein modes and lifts the superlinear requirement.
    """
    mode = BoundMode(mode)
    _check_inputs(tau, B, eps, delta)
    if level is None:
        _require_growing(spec)
    elif mode is BoundMode.INCREMENT:
        raise ValueError("an explicit truncation level applies to hoeffding/bernstein only")
    if mode is BoundMode.INCREMENT:
        return increment_sample_size(spec, tau, B, eps, delta)
    c = dual_constants(spec, tau, B, eps, level)
    if mode is BoundMode.HOEFFDING:
        return hoeffding_sample_size(c, tau, B, eps, delta)
    return bernstein_sample_size(c, tau, B, eps, delta)


def bernstein_width(M: float, mean_bound: float, n: int, delta: float) -> float:
    """Two-sided Bernstein deviation width for a variable in [0, M]."""
    if not (M > 0.0 and mean_bound >= 0.0 and n >= 1 and 0.0 < delta < 1.0):
        raise ValueError("need M > 0, mean_bound >= 0, n >= 1 and delta in (0, 1)")
    log_term = math.log(2.0 / delta)
    return 4.0 * (math.sqrt(M * mean_bound * log_term / n) + M * log_term / n)
