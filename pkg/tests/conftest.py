import math

import numpy as np
import pytest

from phidro.divergence import DivergenceSpec, phi_array
from phidro.risk import FiniteInstance

CATALOG = {
    "kl": DivergenceSpec.kl(),
    "cvar-0.1": DivergenceSpec.cvar(0.1),
    "cvar-0.5": DivergenceSpec.cvar(0.5),
    "cr-2": DivergenceSpec.cressie_read(2.0),
    "cr-1.5": DivergenceSpec.cressie_read(1.5),
    "cr-3": DivergenceSpec.cressie_read(3.0),
    "cr-0.5": DivergenceSpec.cressie_read(0.5),
    "cr-neg0.5": DivergenceSpec.cressie_read(-0.5),
    "variation": DivergenceSpec.variation(),
    "burg": DivergenceSpec.burg(),
    "neyman": DivergenceSpec.neyman(),
    "hellinger": DivergenceSpec.hellinger(),
    "ess_sup": DivergenceSpec.ess_sup(),
}

SUPERLINEAR = {k: v for k, v in CATALOG.items() if k in ("kl", "cr-2", "cr-1.5", "cr-3")}


@pytest.fixture(params=list(CATALOG), ids=list(CATALOG))
def spec(request):
    return CATALOG[request.param]


def normalized(p):
    p = np.asarray(p, dtype=float)
    p = p / p.sum()
    top = int(np.argmax(p))
    p[top] = 0.0
    p[top] = 1.0 - math.fsum(p)
    return p


def random_instance(rng, spec, m=None, B=None, tau=None, full_support=False):
    m = int(rng.integers(1, 11)) if m is None else m
    B = float(rng.uniform(0.5, 3.0)) if B is None else B
    tau = float(rng.uniform(0.01, 2.0)) if tau is None else tau
    x = rng.uniform(-B, B, m)
    w = rng.dirichlet(np.ones(m))
    if not full_support and m > 2 and rng.random() < 0.2:
        w[rng.integers(m)] = 0.0
    return FiniteInstance(tuple(x), tuple(normalized(w)), B, tau, spec)


def brute_force_risk(inst, points=801, rounds=6):
    """Grid-and-zoom search over q_i = p_i * zeta_i for instances with m <= 3 atoms."""
    x = np.asarray(inst.x)
    p = np.asarray(inst.p)
    keep = p > 0
    x, p = x[keep], p[keep]
    m = len(x)
    assert m <= 3

    def feasible(q):
        with np.errstate(divide="ignore", invalid="ignore"):
            z = q / p[:, None]
        div = (p[:, None] * phi_array(inst.spec, z)).sum(axis=0)
        return np.all(q >= 0, axis=0) & (div <= inst.tau)

    if m == 1:
        return float(x[0])
    lo = np.zeros(m - 1)
    hi = np.ones(m - 1)
    best, best_q = -math.inf, None
    for _ in range(rounds):
        axes = [np.linspace(lo[i], hi[i], points if m == 2 else int(math.sqrt(points * 400))) for i in range(m - 1)]
        mesh = np.meshgrid(*axes, indexing="ij")
        free = np.stack([g.ravel() for g in mesh])
        q = np.hstack([np.vstack([free, 1.0 - free.sum(axis=0)]), p[:, None]])
        ok = feasible(q)
        if not ok.any():
            break
        vals = np.where(ok, x @ q, -math.inf)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, best_q = float(vals[i]), q[:, i]
        width = (hi - lo) / 8.0
        lo = np.clip(best_q[:-1] - width, 0.0, 1.0)
        hi = np.clip(best_q[:-1] + width, 0.0, 1.0)
    return best


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines):
            terminalreporter.write_line(line)
