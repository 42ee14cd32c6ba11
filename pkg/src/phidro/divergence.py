"""phi-divergence calculus for a closed catalog of divergence functions.

Values live in the extended reals: plain floats where ``math.inf`` stands for
``+inf``.  NaN is never returned; an operation that would produce one raises
:class:`~phidro.errors.IndeterminateForm`.

Conjugates use the convention ``(lam*phi)^*(y) = sup_x x*y - lam*phi(x)``.  At
``lam = 0`` this is the support function of the closure of ``dom(phi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np
from scipy.special import xlogy

from .errors import GrowthUnbounded, IndeterminateForm, NonConvergence

#: Points beyond this magnitude are treated as infinite by every numeric search.
CAP = 1e12

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class Kind(str, Enum):
    KL = "kl"
    CVAR = "cvar"
    CRESSIE_READ = "cressie_read"
    VARIATION = "variation"
    BURG = "burg"
    NEYMAN = "neyman"
    HELLINGER = "hellinger"
    ESS_SUP = "ess_sup"


class Growth(str, Enum):
    SUBLINEAR = "sublinear"
    SUPERLINEAR = "superlinear"
    INDICATOR = "indicator"


@dataclass(frozen=True)
class DivergenceSpec:
    """A catalog entry.  ``alpha`` is used by CVaR only, ``k`` by Cressie-Read only."""

    kind: Kind
    alpha: float | None = None
    k: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.CVAR:
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ValueError(f"cvar requires alpha in (0, 1), got {self.alpha!r}")
            object.__setattr__(self, "alpha", float(self.alpha))
        elif self.alpha is not None:
            raise ValueError(f"alpha is not a parameter of {self.kind.value}")
        if self.kind is Kind.CRESSIE_READ:
            if self.k is None or not math.isfinite(self.k) or self.k in (-1.0, 0.0, 1.0):
                raise ValueError(f"cressie_read requires a finite k outside {{-1, 0, 1}}, got {self.k!r}")
            object.__setattr__(self, "k", float(self.k))
        elif self.k is not None:
            raise ValueError(f"k is not a parameter of {self.kind.value}")

    # constructors -------------------------------------------------------
    @classmethod
    def kl(cls) -> "DivergenceSpec":
        return cls(Kind.KL)

    @classmethod
    def cvar(cls, alpha: float) -> "DivergenceSpec":
        return cls(Kind.CVAR, alpha=alpha)

    @classmethod
    def cressie_read(cls, k: float) -> "DivergenceSpec":
        return cls(Kind.CRESSIE_READ, k=k)

    @classmethod
    def variation(cls) -> "DivergenceSpec":
        return cls(Kind.VARIATION)

    @classmethod
    def burg(cls) -> "DivergenceSpec":
        return cls(Kind.BURG)

    @classmethod
    def neyman(cls) -> "DivergenceSpec":
        return cls(Kind.NEYMAN)

    @classmethod
    def hellinger(cls) -> "DivergenceSpec":
        return cls(Kind.HELLINGER)

    @classmethod
    def ess_sup(cls) -> "DivergenceSpec":
        return cls(Kind.ESS_SUP)

    # derived attributes ---------------------------------------------------
    @property
    def domain_upper(self) -> float:
        """Supremum of dom(phi)."""
        return 1.0 / self.alpha if self.kind is Kind.CVAR else math.inf

    @property
    def growth_class(self) -> Growth:
        return classify_growth(self)

    @property
    def is_piecewise_linear(self) -> bool:
        return self.kind in (Kind.CVAR, Kind.VARIATION, Kind.ESS_SUP)

    @property
    def interior_radius(self) -> float:
        """Largest delta <= 1 with [1-delta, 1+delta] inside the closure of int dom(phi)."""
        return min(1.0, self.domain_upper - 1.0)

    @property
    def satisfies_interior_assumption(self) -> bool:
        return self.interior_radius > 0.0

    @property
    def label(self) -> str:
        if self.kind is Kind.CVAR:
            return f"cvar(alpha={self.alpha:g})"
        if self.kind is Kind.CRESSIE_READ:
            return f"cressie_read(k={self.k:g})"
        return self.kind.value

    # serialization --------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        params: dict[str, float] = {}
        if self.alpha is not None:
            params["alpha"] = self.alpha
        if self.k is not None:
            params["k"] = self.k
        return {"name": self.kind.value, "params": params}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DivergenceSpec":
        if not isinstance(data, dict) or "name" not in data:
            raise ValueError("divergence must be an object with a 'name' field")
        try:
            kind = Kind(data["name"])
        except ValueError:
            names = ", ".join(k.value for k in Kind)
            raise ValueError(f"unknown divergence {data['name']!r} (expected one of {names})") from None
        params = dict(data.get("params") or {})
        allowed = {Kind.CVAR: {"alpha"}, Kind.CRESSIE_READ: {"k"}}.get(kind, set())
        extra = set(params) - allowed
        if extra:
            raise ValueError(f"unexpected parameters for {kind.value}: {sorted(extra)}")
        return cls(kind, **{key: float(val) for key, val in params.items()})


CATALOG_NAMES = tuple(k.value for k in Kind)


def parse_divergence(value: str | dict[str, Any]) -> DivergenceSpec:
    """Accept ``"name"``, ``"name:key=val[,key=val]"`` or a ``{"name", "params"}`` object."""
    if isinstance(value, dict):
        return DivergenceSpec.from_dict(value)
    if not isinstance(value, str) or not value.strip():
        raise ValueError(f"cannot parse divergence {value!r}")
    name, _, rest = value.strip().partition(":")
    params: dict[str, float] = {}
    for item in filter(None, (part.strip() for part in rest.split(","))):
        key, eq, raw = item.partition("=")
        if not eq:
            raise ValueError(f"divergence parameter {item!r} is not of the form key=value")
        try:
            params[key.strip()] = float(raw)
        except ValueError:
            raise ValueError(f"divergence parameter {key.strip()!r} is not a number: {raw!r}") from None
    return DivergenceSpec.from_dict({"name": name.strip(), "params": params})


def classify_growth(spec: DivergenceSpec) -> Growth:
    if spec.kind is Kind.KL or (spec.kind is Kind.CRESSIE_READ and spec.k > 1.0):
        return Growth.SUPERLINEAR
    if spec.kind is Kind.CVAR:
        return Growth.INDICATOR
    return Growth.SUBLINEAR


# ---------------------------------------------------------------------------
# extended-real helpers


def ext_add(a: float, b: float) -> float:
    if (a == math.inf and b == -math.inf) or (a == -math.inf and b == math.inf):
        raise IndeterminateForm("inf - inf")
    return a + b


def ext_mul(a: float, b: float) -> float:
    """Product with the convex-analysis convention ``0 * inf = 0``."""
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


# ---------------------------------------------------------------------------
# phi


def phi_array(spec: DivergenceSpec, x) -> np.ndarray:
    """Vectorized phi; +inf outside the domain."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, math.inf)
    ok = x >= 0.0
    if spec.kind is Kind.CVAR:
        out[ok & (x <= spec.domain_upper)] = 0.0
        return out
    if spec.kind is Kind.ESS_SUP:
        out[ok] = 0.0
        return out
    xs = x[ok]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if spec.kind is Kind.KL:
            val = xlogy(xs, xs) - xs + 1.0
        elif spec.kind is Kind.VARIATION:
            val = np.abs(xs - 1.0)
        elif spec.kind is Kind.BURG:
            val = np.where(xs > 0.0, -np.log(xs) + xs - 1.0, math.inf)
        elif spec.kind is Kind.NEYMAN:
            val = np.where(xs > 0.0, (xs - 1.0) ** 2 / xs, math.inf)
        elif spec.kind is Kind.HELLINGER:
            val = (np.sqrt(xs) - 1.0) ** 2
        else:
            k = spec.k
            if k < 0.0:
                val = np.where(xs > 0.0, (xs**k - k * xs + k - 1.0) / (k * (k - 1.0)), math.inf)
            else:
                val = (xs**k - k * xs + k - 1.0) / (k * (k - 1.0))
    out[ok] = val
    return out


def phi_value(spec: DivergenceSpec, x: float) -> float:
    if x == 1.0:
        return 0.0
    return float(phi_array(spec, x))


# ---------------------------------------------------------------------------
# conjugates


def unit_conjugate(spec: DivergenceSpec, s) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ``phi^*(s)`` and its smallest maximizer, elementwise.

    The maximizer is ``inf`` where the supremum is approached only as x -> inf.
    No cap is applied here.
    """
    s = np.asarray(s, dtype=float)
    inf = np.full(s.shape, math.inf)
    kind = spec.kind
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if kind is Kind.KL:
            return np.expm1(s), np.exp(s)
        if kind is Kind.CVAR:
            return np.maximum(s, 0.0) / spec.alpha, np.where(s > 0.0, spec.domain_upper, 0.0)
        if kind is Kind.ESS_SUP:
            return np.where(s <= 0.0, 0.0, inf), np.where(s <= 0.0, 0.0, inf)
        if kind is Kind.VARIATION:
            val = np.where(s <= -1.0, -1.0, np.where(s <= 1.0, s, inf))
            arg = np.where(s <= -1.0, 0.0, np.where(s <= 1.0, 1.0, inf))
            return val, arg
        below = s < 1.0
        r = np.where(below, 1.0 - s, 1.0)
        if kind is Kind.BURG:
            return np.where(below, -np.log(r), inf), np.where(below, 1.0 / r, inf)
        if kind is Kind.HELLINGER:
            return np.where(below, s / r, inf), np.where(below, 1.0 / (r * r), inf)
        if kind is Kind.NEYMAN:
            sq = np.sqrt(r)
            val = np.where(below, 2.0 - 2.0 * sq, np.where(s == 1.0, 2.0, inf))
            return val, np.where(below, 1.0 / sq, inf)
        # Cressie-Read: stationary point x = (1 + (k-1) s)^(1/(k-1)).
        k = spec.k
        t = (k - 1.0) * s
        interior = t > -1.0
        lt = np.log1p(np.where(interior, t, 0.0))
        val = np.expm1(k / (k - 1.0) * lt) / k
        arg = np.exp(lt / (k - 1.0))
        if k > 1.0:
            return np.where(interior, val, -1.0 / k), np.where(interior, arg, 0.0)
        edge = (t == -1.0) & (k < 0.0)
        return (
            np.where(interior, val, np.where(edge, -1.0 / k, inf)),
            np.where(interior, arg, inf),
        )


def conjugate_array(spec: DivergenceSpec, lam: float, y) -> tuple[np.ndarray, np.ndarray]:
    """``(lam*phi)^*(y)`` and the smallest maximizer.

    Values whose maximizer exceeds :data:`CAP` are reported as ``+inf``, except
    for the bounded conjugates (Neyman, Cressie-Read with k < 0), whose
    supremum may be approached only as x -> inf but stays finite.
    """
    y = np.asarray(y, dtype=float)
    if lam < 0.0:
        raise ValueError("lambda must be nonnegative")
    if lam == 0.0:
        upper = spec.domain_upper
        with np.errstate(invalid="ignore"):
            val = np.where(y > 0.0, y * upper, 0.0)
        arg = np.where(y > 0.0, upper, 0.0)
    else:
        val, arg = unit_conjugate(spec, y / lam)
        val = lam * val
    if not _bounded_conjugate(spec):
        val = np.where(arg > CAP, math.inf, val)
    return val, arg


def _bounded_conjugate(spec: DivergenceSpec) -> bool:
    return spec.kind is Kind.NEYMAN or (spec.kind is Kind.CRESSIE_READ and spec.k < 0.0)


def conjugate(spec: DivergenceSpec, lam: float, y: float) -> float:
    """Closed-form ``(lam*phi)^*(y)``; see :func:`conjugate_array` for the cap rule."""
    return float(conjugate_array(spec, lam, y)[0])


def truncated_conjugate_array(spec: DivergenceSpec, lam: float, y, L: float) -> tuple[np.ndarray, np.ndarray]:
    """``(lam*phi_L)^*(y)``, i.e. the supremum restricted to ``[0, L]``, with its maximizer."""
    if L < 1.0:
        raise ValueError("truncation level L must be >= 1")
    y = np.asarray(y, dtype=float)
    if lam == 0.0:
        top = min(L, spec.domain_upper)
        xhat = np.where(y > 0.0, top, 0.0)
        return xhat * y, xhat
    # Concave maximand: clipping the smallest unconstrained maximizer into [0, L] is optimal.
    _, arg = unit_conjugate(spec, y / lam)
    xhat = np.minimum(arg, L)
    return xhat * y - lam * phi_array(spec, xhat), xhat


def truncated_conjugate(spec: DivergenceSpec, lam: float, y: float, L: float) -> float:
    return float(truncated_conjugate_array(spec, lam, y, L)[0])


def _golden_max(h, a: float, b: float, tol: float, max_iter: int) -> tuple[float, float]:
    """Maximize a concave function on [a, b]; returns (argmax, value)."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    hc, hd = h(c), h(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(c)):
            break
        if hc >= hd:
            b, d, hd = d, c, hc
            c = b - _INV_PHI * (b - a)
            hc = h(c)
        else:
            a, c, hc = c, d, hd
            d = a + _INV_PHI * (b - a)
            hd = h(d)
    else:
        raise NonConvergence(f"golden-section did not reach width {tol:g} in {max_iter} iterations")
    best = max((hc, c), (hd, d), (h(a), a), (h(b), b))
    return best[1], best[0]


def conjugate_numeric(spec: DivergenceSpec, lam: float, y: float, tol: float = 1e-10, max_iter: int = 500) -> float:
    """Numeric ``(lam*phi)^*(y)`` from phi values alone.

    Doubling bracket up to :data:`CAP`, then golden-section search on the
    concave maximand.  Returns ``+inf`` if the maximand is still increasing at
    the cap.
    """
    if lam <= 0.0:
        raise ValueError("lambda must be positive")
    if tol <= 0.0:
        raise ValueError("tol must be positive")

    def h(x: float) -> float:
        v = phi_value(spec, x)
        return -math.inf if v == math.inf else x * y - lam * v

    upper = spec.domain_upper
    if upper < math.inf:
        hi = upper
    else:
        hi = 1.0
        while h(2.0 * hi) > h(hi):
            hi *= 2.0
            if 2.0 * hi > CAP:
                # Compare against the half cap, with a margin set by the rounding noise of
                # the two terms at CAP: a bounded maximand creeping toward its supremum
                # gains less than that, an unbounded one (any positive slope) gains more.
                noise = 64.0 * np.finfo(float).eps * (CAP * abs(y) + lam * phi_value(spec, CAP))
                if h(CAP) - h(0.5 * CAP) > noise:
                    return math.inf
                hi = CAP / 2.0
                break
        hi = 2.0 * hi
    _, value = _golden_max(h, 0.0, hi, tol, max_iter)
    return value


# ---------------------------------------------------------------------------
# growth function


def growth_value(spec: DivergenceSpec, x: float) -> float:
    """``g(x) = inf_{x' >= x} phi(x')/x'`` for ``x >= 1``.

    Every catalog entry has phi(x)/x nondecreasing on [1, inf), so the
    infimum sits at ``x' = x``.
    """
    if x < 1.0:
        raise ValueError("growth function is defined on [1, inf)")
    return phi_value(spec, x) / x


def growth_value_numeric(spec: DivergenceSpec, x: float, points: int = 4000) -> float:
    """Grid infimum of phi(x')/x' over x' in [x, CAP]; an oracle for :func:`growth_value`."""
    if x < 1.0:
        raise ValueError("growth function is defined on [1, inf)")
    grid = np.geomspace(x, max(CAP, 2.0 * x), points)
    return float(np.min(phi_array(spec, grid) / grid))


def growth_inverse(spec: DivergenceSpec, y: float) -> float:
    """Least ``x >= 1`` with ``g(x) >= y``, to relative precision 1e-12."""
    if not y > 0.0:
        raise ValueError("growth_inverse requires y > 0")
    if spec.kind is Kind.CVAR:
        return spec.domain_upper
    hi = 2.0
    while growth_value(spec, hi) < y:
        if hi >= CAP:
            raise GrowthUnbounded(f"g(x) < {y:g} for all x <= {CAP:g} ({spec.label})")
        hi = min(2.0 * hi, CAP)
    lo = hi / 2.0 if hi > 2.0 else 1.0
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if growth_value(spec, mid) >= y:
            hi = mid
        else:
            lo = mid
    return hi
