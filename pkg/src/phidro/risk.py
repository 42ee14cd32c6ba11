"""Worst-case expectations over phi-divergence balls on finite nominal measures.

Two independent routes are provided:

* a primal route that builds an optimal density directly: two-point
  bisection, greedy allocation for the piecewise-linear divergences and a
  multiplier path for the smooth ones;
* the dual route ``inf_{lam, mu} lam*tau + mu + E_P[(lam*phi)^*(X - mu)]``
  minimized by nested golden-section search over the box
  ``[lambda_lo, 2B/tau] x [-B, B]``.

:func:`worst_case_expectation` runs both and reports the gap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

import numpy as np
from scipy.optimize import brentq

from .divergence import (
    DivergenceSpec,
    Kind,
    conjugate_array,
    phi_array,
    truncated_conjugate_array,
    unit_conjugate,
)
from .errors import GapTooLarge

DEFAULT_TOL = 1e-9
MAX_ITER = 200
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class FiniteInstance:
    """Nominal measure ``sum_i p_i delta_{x_i}`` with payoff bound ``B`` and radius ``tau``."""

    x: tuple[float, ...]
    p: tuple[float, ...]
    B: float
    tau: float
    spec: DivergenceSpec

    def __post_init__(self) -> None:
        x = tuple(float(v) for v in self.x)
        p = tuple(float(v) for v in self.p)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)
        if len(x) == 0 or len(x) != len(p):
            raise ValueError("instance needs at least one atom and matching x/p lengths")
        if not all(math.isfinite(v) for v in x + p):
            raise ValueError("atom values and probabilities must be finite")
        if min(p) < 0.0:
            raise ValueError("probabilities must be nonnegative")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {math.fsum(p)!r}, not 1")
        if not (self.B > 0.0 and math.isfinite(self.B)):
            raise ValueError("B must be positive and finite")
        if max(abs(v) for v in x) > self.B:
            raise ValueError("payoffs must satisfy |x_i| <= B")
        if not (self.tau >= 0.0 and math.isfinite(self.tau)):
            raise ValueError("tau must be nonnegative and finite")

    @classmethod
    def from_atoms(cls, atoms: Sequence[tuple[float, float]], B: float, tau: float, spec: DivergenceSpec) -> "FiniteInstance":
        return cls(tuple(a[0] for a in atoms), tuple(a[1] for a in atoms), B, tau, spec)

    @property
    def m(self) -> int:
        return len(self.x)

    def expectation(self) -> float:
        return math.fsum(xi * pi for xi, pi in zip(self.x, self.p))

    def with_payoffs(self, x: Sequence[float], B: float | None = None) -> "FiniteInstance":
        return FiniteInstance(tuple(x), self.p, self.B if B is None else B, self.tau, self.spec)

    def to_dict(self) -> dict[str, Any]:
        return {
            "atoms": [{"x": xi, "p": pi} for xi, pi in zip(self.x, self.p)],
            "B": self.B,
            "tau": self.tau,
            "divergence": self.spec.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FiniteInstance":
        if not isinstance(data, dict):
            raise ValueError("instance must be a JSON object")
        missing = {"atoms", "B", "tau", "divergence"} - set(data)
        if missing:
            raise ValueError(f"instance is missing fields: {sorted(missing)}")
        atoms = data["atoms"]
        if not isinstance(atoms, list) or not all(isinstance(a, dict) and {"x", "p"} <= set(a) for a in atoms):
            raise ValueError("atoms must be a list of {'x': ..., 'p': ...} objects")
        return cls(
            tuple(float(a["x"]) for a in atoms),
            tuple(float(a["p"]) for a in atoms),
            float(data["B"]),
            float(data["tau"]),
            DivergenceSpec.from_dict(data["divergence"]),
        )


class DualStatus(str, Enum):
    CONVERGED = "converged"
    BOX_BOUNDARY = "box_boundary"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class DualPoint:
    lam: float
    mu: float
    value: float
    status: DualStatus

    def to_dict(self) -> dict[str, Any]:
        return {"lambda": self.lam, "mu": self.mu, "value": self.value, "status": self.status.value}


@dataclass(frozen=True)
class RiskReport:
    primal: float
    dual: float
    density: tuple[float, ...]
    gap: float
    tolerance: float
    mean_residual: float
    divergence_excess: float
    method: str
    dual_point: DualPoint | None = field(default=None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "primal": self.primal,
            "dual": self.dual,
            "density": list(self.density),
            "gap": self.gap,
            "tolerance": self.tolerance,
            "mean_residual": self.mean_residual,
            "divergence_excess": self.divergence_excess,
            "method": self.method,
            "dual_point": None if self.dual_point is None else self.dual_point.to_dict(),
        }


# ---------------------------------------------------------------------------
# support handling


@dataclass(frozen=True)
class _Support:
    xs: np.ndarray  # distinct payoffs, ascending
    ps: np.ndarray  # merged probabilities
    index: np.ndarray  # original atom -> merged atom, -1 for p = 0


def _support(inst: FiniteInstance) -> _Support:
    x = np.asarray(inst.x)
    p = np.asarray(inst.p)
    keep = p > 0.0
    xs, inv = np.unique(x[keep], return_inverse=True)
    ps = np.bincount(inv, weights=p[keep], minlength=len(xs))
    ps = ps / ps.sum()
    index = np.full(len(x), -1)
    index[keep] = inv
    return _Support(xs, ps, index)


def _expand(sup: _Support, zeta: np.ndarray) -> tuple[float, ...]:
    out = np.where(sup.index >= 0, zeta[np.maximum(sup.index, 0)], 0.0)
    return tuple(float(v) for v in out)


# ---------------------------------------------------------------------------
# primal solvers; each returns (value, density over the merged support)


def _two_point(spec: DivergenceSpec, xs: np.ndarray, ps: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    # q = mass the alternative puts on the larger payoff; feasible q form an interval around p.
    p = float(ps[1])

    def div(q: float) -> float:
        return float(p * phi_array(spec, q / p) + (1.0 - p) * phi_array(spec, (1.0 - q) / (1.0 - p)))

    if div(1.0) <= tau:
        q = 1.0
    else:
        lo, hi = p, 1.0
        for _ in range(MAX_ITER):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if div(mid) <= tau:
                lo = mid
            else:
                hi = mid
        q = lo
    zeta = np.array([(1.0 - q) / (1.0 - p), q / p])
    return float(xs[0] + (xs[1] - xs[0]) * q), zeta


def _greedy_cvar(spec: DivergenceSpec, xs: np.ndarray, ps: np.ndarray) -> tuple[float, np.ndarray]:
    q = np.zeros_like(ps)
    remaining = 1.0
    for i in range(len(xs) - 1, -1, -1):
        take = min(ps[i] / spec.alpha, remaining)
        q[i] = take
        remaining -= take
        if remaining <= 0.0:
            break
    return float(np.dot(q, xs)), q / ps


def _greedy_variation(xs: np.ndarray, ps: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    # Move mass tau/2 from the lowest payoffs onto the highest one.
    q = ps.copy()
    budget = min(0.5 * tau, 1.0 - ps[-1])
    q[-1] += budget
    for i in range(len(xs) - 1):
        take = min(q[i], budget)
        q[i] -= take
        budget -= take
        if budget <= 0.0:
            break
    return float(np.dot(q, xs)), q / ps


def _normalized_density(spec: DivergenceSpec, xs: np.ndarray, ps: np.ndarray, lam: float) -> np.ndarray:
    """Density maximizing the Lagrangian at multiplier ``lam``, scaled to mean one."""
    if spec.kind is Kind.KL:
        w = np.exp((xs - xs[-1]) / lam)
        return w / np.dot(ps, w)

    def mass(mu: float) -> float:
        _, arg = unit_conjugate(spec, (xs - mu) / lam)
        total = float(np.dot(ps, arg))
        return 0.5 if total == math.inf else total / (1.0 + total) - 0.5

    lo, hi = float(xs[0]), float(xs[-1])
    if mass(hi) >= 0.0:
        mu = hi
    else:
        mu = brentq(mass, lo, hi, xtol=1e-15 * (1.0 + abs(lo) + abs(hi)), rtol=4 * np.finfo(float).eps, maxiter=MAX_ITER)
    _, zeta = unit_conjugate(spec, (xs - mu) / lam)
    if not np.all(np.isfinite(zeta)):
        # mu landed on the domain edge of the conjugate: the top atom absorbs the remaining mass
        zeta = np.where(np.isfinite(zeta), zeta, 0.0)
        zeta[-1] = max(0.0, (1.0 - np.dot(ps[:-1], zeta[:-1])) / ps[-1])
    return zeta / np.dot(ps, zeta)


def _multiplier_path(spec: DivergenceSpec, xs: np.ndarray, ps: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    top = np.zeros_like(ps)
    top[-1] = 1.0 / ps[-1]
    if float(np.dot(ps, phi_array(spec, top))) <= tau:
        return float(xs[-1]), top

    def excess(t: float) -> float:
        zeta = _normalized_density(spec, xs, ps, math.exp(t))
        d = float(np.dot(ps, phi_array(spec, zeta))) - tau
        return 1.0 if d == math.inf else d / (1.0 + abs(d))

    span = float(xs[-1] - xs[0])
    t_hi = math.log(span / tau + 1.0)
    while excess(t_hi) > 0.0:
        t_hi += 1.0
    t_lo = t_hi - 1.0
    while excess(t_lo) <= 0.0:
        t_lo -= 1.0
        if t_lo < -700.0:
            # The ball already admits the fully concentrated density up to rounding.
            return float(xs[-1]), top
    t = brentq(excess, t_lo, t_hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=MAX_ITER)
    zeta = _normalized_density(spec, xs, ps, math.exp(t))
    d = float(np.dot(ps, phi_array(spec, zeta)))
    if d > tau:
        # Mixing toward the constant density keeps the mean and, by convexity, scales the divergence.
        zeta = 1.0 + (tau / d) * (zeta - 1.0)
    return float(np.dot(ps * zeta, xs)), zeta


def _solve_primal(inst: FiniteInstance) -> tuple[float, np.ndarray, _Support, str]:
    sup = _support(inst)
    xs, ps, spec, tau = sup.xs, sup.ps, inst.spec, inst.tau
    if len(xs) == 1 or tau == 0.0:
        return float(np.dot(ps, xs)), np.ones_like(ps), sup, "trivial"
    if spec.kind is Kind.ESS_SUP:
        zeta = np.zeros_like(ps)
        zeta[-1] = 1.0 / ps[-1]
        return float(xs[-1]), zeta, sup, "ess_sup"
    if len(xs) == 2:
        value, zeta = _two_point(spec, xs, ps, tau)
        return value, zeta, sup, "two_point"
    if spec.kind is Kind.CVAR:
        value, zeta = _greedy_cvar(spec, xs, ps)
        return value, zeta, sup, "greedy"
    if spec.kind is Kind.VARIATION:
        value, zeta = _greedy_variation(xs, ps, tau)
        return value, zeta, sup, "greedy"
    value, zeta = _multiplier_path(spec, xs, ps, tau)
    return value, zeta, sup, "multiplier_path"


def primal_value(inst: FiniteInstance) -> float:
    """Worst-case expectation from the primal route only (no duality check)."""
    return _solve_primal(inst)[0]


# ---------------------------------------------------------------------------
# dual route


def _dual_value(spec: DivergenceSpec, xs, ps, tau: float, lam: float, mu: float, L: float | None) -> float:
    if L is None:
        conj, _ = conjugate_array(spec, lam, xs - mu)
    else:
        conj, _ = truncated_conjugate_array(spec, lam, xs - mu, L)
    if np.any(conj == math.inf):
        return math.inf
    return lam * tau + mu + float(np.dot(ps, conj))


def dual_objective(inst: FiniteInstance, lam: float, mu: float, L: float | None = None) -> float:
    """``lam*tau + mu + E_P[(lam*phi)^*(X - mu)]``, or the phi_L version when ``L`` is given."""
    if lam < 0.0:
        raise ValueError("lambda must be nonnegative")
    sup = _support(inst)
    return _dual_value(inst.spec, sup.xs, sup.ps, inst.tau, lam, mu, L)


def _golden_min(f, a: float, b: float, width: float) -> tuple[float, float, bool]:
    """Golden-section minimization of a convex extended-valued function.

    Ties go to the left unless both probes are infinite (the infinite region of
    the dual objective sits at small mu).  Endpoints are checked at the end.
    """
    lo0, hi0 = a, b
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    converged = False
    for _ in range(MAX_ITER):
        if b - a <= width:
            converged = True
            break
        if fc < fd or (fc == fd and fc != math.inf):
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    candidates = [(fc, c), (fd, d), (f(lo0), lo0), (f(hi0), hi0)]
    best = min(candidates, key=lambda t: (t[0], t[1]))
    return best[1], best[0], converged


def default_lambda_lo(inst: FiniteInstance, tol: float) -> float:
    """Lower end of the multiplier box keeping the restriction bias below tol/2."""
    return min(max(1e-12, tol / (2.0 * inst.tau)), 2.0 * inst.B / inst.tau)


def dual_minimize(inst: FiniteInstance, lambda_lo: float | None = None, tol: float = DEFAULT_TOL, L: float | None = None) -> DualPoint:
    """Minimize the dual objective over ``[lambda_lo, 2B/tau] x [-B, B]``.

    The objective is jointly convex; the outer search runs over lambda and the
    inner over mu, each bracketed to width ``tol * 1e-3`` (relative to the
    axis scale).  The returned value overestimates R(X) (or R_L(X)) by at most
    ``lambda_lo * tau`` plus the search error.
    """
    if inst.tau <= 0.0:
        raise ValueError("dual_minimize requires tau > 0")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    lam_hi = 2.0 * inst.B / inst.tau
    if lambda_lo is None:
        lambda_lo = 0.0 if (L is not None or inst.spec.domain_upper < math.inf) else default_lambda_lo(inst, tol)
    if not 0.0 <= lambda_lo <= lam_hi:
        raise ValueError(f"lambda_lo must lie in [0, {lam_hi:g}]")
    if lambda_lo == 0.0 and L is None and inst.spec.domain_upper == math.inf and inst.spec.kind is not Kind.ESS_SUP:
        raise ValueError("lambda_lo must be positive for divergences with unbounded domain")
    sup = _support(inst)
    spec, xs, ps, tau, B = inst.spec, sup.xs, sup.ps, inst.tau, inst.B
    mu_width = 1e-3 * tol * B
    lam_width = 1e-3 * tol * max(1.0, lam_hi)
    inner_ok = [True]

    def inner(lam: float) -> tuple[float, float]:
        mu, val, ok = _golden_min(lambda mu: _dual_value(spec, xs, ps, tau, lam, mu, L), -B, B, mu_width)
        inner_ok[0] &= ok
        return mu, val

    cache: dict[float, tuple[float, float]] = {}

    def outer(lam: float) -> float:
        if lam not in cache:
            cache[lam] = inner(lam)
        return cache[lam][1]

    lam, value, ok = _golden_min(outer, lambda_lo, lam_hi, lam_width)
    mu = cache[lam][0]
    if not (ok and inner_ok[0]):
        status = DualStatus.MAX_ITER
    elif lam_hi - lam <= lam_width and lam_hi > lambda_lo:
        status = DualStatus.BOX_BOUNDARY
    else:
        status = DualStatus.CONVERGED
    return DualPoint(lam, mu, value, status)


# ---------------------------------------------------------------------------
# public oracles


def worst_case_expectation(inst: FiniteInstance, tol: float = DEFAULT_TOL) -> RiskReport:
    """R(X) with an optimal density, the dual value and feasibility residuals.

    Raises :class:`GapTooLarge` when the primal and dual routes disagree by
    more than ``10 * tol``.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    value, zeta, sup, method = _solve_primal(inst)
    ps = sup.ps
    mean_residual = abs(float(np.dot(ps, zeta)) - 1.0)
    excess = max(0.0, float(np.dot(ps, phi_array(inst.spec, zeta))) - inst.tau)
    if method == "trivial":
        point, dual = None, value
    else:
        point = dual_minimize(inst, tol=tol)
        dual = point.value
    gap = abs(value - dual)
    if gap > 10.0 * tol:
        raise GapTooLarge(f"primal {value!r} and dual {dual!r} differ by {gap:.3g} > {10 * tol:.3g}")
    return RiskReport(value, dual, _expand(sup, zeta), gap, tol, mean_residual, excess, method, point)


def truncated_risk(inst: FiniteInstance, L: float, tol: float = DEFAULT_TOL) -> float:
    """R_L(X): the worst case over densities bounded by ``L``, computed by the dual route."""
    if L < 1.0:
        raise ValueError("truncation level L must be >= 1")
    if inst.tau == 0.0:
        return inst.expectation()
    sup = _support(inst)
    if len(sup.xs) == 1:
        return float(sup.xs[0])
    return dual_minimize(inst, lambda_lo=0.0, tol=tol, L=L).value
