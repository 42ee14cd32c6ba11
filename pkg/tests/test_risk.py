import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phidro.divergence import DivergenceSpec, growth_inverse, phi_array
from phidro.errors import GapTooLarge
from phidro.risk import (
    DualStatus,
    FiniteInstance,
    dual_minimize,
    dual_objective,
    primal_value,
    truncated_risk,
    worst_case_expectation,
)

from conftest import CATALOG, brute_force_risk, random_instance

CVAR_INST = FiniteInstance((1.0, 0.0), (0.05, 0.95), 1.0, 0.5, DivergenceSpec.cvar(0.1))
KL_INST = FiniteInstance((1.0, 0.0), (0.5, 0.5), 1.0, 0.1, DivergenceSpec.kl())


def kl_two_point_q(tau):
    """Bisection on q log(2q) + (1-q) log(2(1-q)) = tau over q in [1/2, 1]."""
    lo, hi = 0.5, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * math.log(2 * mid) + (1 - mid) * math.log(2 * (1 - mid)) <= tau:
            lo = mid
        else:
            hi = mid
    return lo


class TestFiniteInstance:
    def test_validation(self):
        spec = DivergenceSpec.kl()
        with pytest.raises(ValueError):
            FiniteInstance((1.0,), (0.9,), 1.0, 0.1, spec)
        with pytest.raises(ValueError):
            FiniteInstance((2.0,), (1.0,), 1.0, 0.1, spec)
        with pytest.raises(ValueError):
            FiniteInstance((0.5, 0.5), (1.2, -0.2), 1.0, 0.1, spec)
        with pytest.raises(ValueError):
            FiniteInstance((), (), 1.0, 0.1, spec)

    def test_json_round_trip(self):
        data = CVAR_INST.to_dict()
        assert data["atoms"][0] == {"x": 1.0, "p": 0.05}
        assert data["divergence"] == {"name": "cvar", "params": {"alpha": 0.1}}
        assert FiniteInstance.from_dict(data) == CVAR_INST


class TestDualObjective:
    def test_cvar_at_origin(self):
        assert dual_objective(CVAR_INST, 0.0, 0.0) == pytest.approx(0.5)

    def test_mu_at_B_bounds_expectation(self, spec):
        rng = np.random.default_rng(1)
        inst = random_instance(rng, spec, m=5)
        for lam in (0.1, 1.0, 5.0):
            assert dual_objective(inst, lam, inst.B) >= lam * inst.tau + inst.expectation() - 1e-12

    def test_identity_at_zero(self):
        inst = FiniteInstance((0.0, 0.0), (0.5, 0.5), 1.0, 0.0, DivergenceSpec.kl())
        assert dual_objective(inst, 1.0, 0.0) == 0.0

    def test_weak_duality(self, spec):
        rng = np.random.default_rng(2)
        for _ in range(5):
            inst = random_instance(rng, spec)
            r = primal_value(inst)
            for lam, mu in rng.uniform([0.01, -inst.B], [2 * inst.B / inst.tau, inst.B], (20, 2)):
                assert dual_objective(inst, lam, mu) >= r - 1e-9


class TestDualMinimize:
    def test_cvar(self):
        pt = dual_minimize(CVAR_INST, lambda_lo=0.0)
        assert pt.value == pytest.approx(0.5, abs=1e-8)
        assert pt.status is DualStatus.CONVERGED

    def test_kl_two_point(self):
        assert dual_minimize(KL_INST, lambda_lo=1e-6).value == pytest.approx(kl_two_point_q(0.1), abs=1e-6)

    def test_tiny_tau(self, spec):
        rng = np.random.default_rng(3)
        inst = random_instance(rng, spec, m=4, tau=1e-12)
        if spec.kind.value in ("cvar", "ess_sup"):
            # indicator constraints ignore tau, so the ball does not shrink
            wide = FiniteInstance(inst.x, inst.p, inst.B, 1.0, spec)
            assert dual_minimize(inst).value == pytest.approx(primal_value(wide), abs=1e-6)
        else:
            assert dual_minimize(inst).value == pytest.approx(inst.expectation(), abs=1e-6)

    def test_box(self, spec):
        rng = np.random.default_rng(4)
        inst = random_instance(rng, spec, m=4, full_support=True)
        pt = dual_minimize(inst)
        if pt.status is DualStatus.CONVERGED:
            assert 0.0 <= pt.lam <= 2 * inst.B / inst.tau + 1e-12
            assert -inst.B - 1e-12 <= pt.mu <= inst.B + 1e-12

    def test_zero_floor_needs_bounded_domain(self):
        with pytest.raises(ValueError):
            dual_minimize(KL_INST, lambda_lo=0.0)


class TestWorstCase:
    def test_examples(self):
        var = FiniteInstance((1.0, 0.0), (0.001, 0.999), 1.0, 0.5, DivergenceSpec.variation())
        assert worst_case_expectation(var).primal == pytest.approx(0.251, abs=1e-12)
        ess = FiniteInstance((-1.0, 0.5), (0.3, 0.7), 1.0, 0.7, DivergenceSpec.ess_sup())
        assert worst_case_expectation(ess).primal == 0.5
        assert worst_case_expectation(KL_INST).primal == pytest.approx(kl_two_point_q(0.1), abs=1e-10)
        assert worst_case_expectation(CVAR_INST).primal == pytest.approx(0.5, abs=1e-12)
        assert round(worst_case_expectation(KL_INST).primal, 3) == 0.720

    def test_tau_zero(self, spec):
        inst = random_instance(np.random.default_rng(5), spec, m=6, tau=0.0)
        assert worst_case_expectation(inst).primal == pytest.approx(inst.expectation(), abs=1e-15)

    def test_report_invariants(self, spec):
        rng = np.random.default_rng(6)
        for _ in range(10):
            inst = random_instance(rng, spec)
            rep = worst_case_expectation(inst)
            z = np.asarray(rep.density)
            p = np.asarray(inst.p)
            assert rep.gap <= 10 * rep.tolerance
            assert np.all(z >= 0)
            assert abs(p @ z - 1.0) <= 1e-8
            support = p > 0
            assert (p[support] * phi_array(inst.spec, z[support])).sum() <= inst.tau + 1e-8
            assert float(np.dot(inst.x, p * z)) == pytest.approx(rep.primal, abs=1e-9)

    def test_zero_probability_atoms_ignored(self, spec):
        inst = FiniteInstance((1.0, -0.5, 0.2), (0.0, 0.6, 0.4), 1.0, 0.3, spec)
        dropped = FiniteInstance((-0.5, 0.2), (0.6, 0.4), 1.0, 0.3, spec)
        assert primal_value(inst) == pytest.approx(primal_value(dropped), abs=1e-12)
        assert worst_case_expectation(inst).primal <= 0.2 + 1e-12

    def test_brute_force_small_m(self, spec):
        rng = np.random.default_rng(7)
        for m in (1, 2, 2, 3, 3, 3):
            inst = random_instance(rng, spec, m=m, full_support=True)
            assert primal_value(inst) == pytest.approx(brute_force_risk(inst), abs=1e-4)

    def test_gap_error_type(self):
        assert issubclass(GapTooLarge, Exception)


@st.composite
def instances(draw):
    spec = draw(st.sampled_from(list(CATALOG.values())))
    m = draw(st.integers(1, 6))
    B = draw(st.floats(0.5, 3.0))
    x = draw(st.lists(st.floats(-1.0, 1.0), min_size=m, max_size=m))
    w = draw(st.lists(st.floats(0.05, 1.0), min_size=m, max_size=m))
    tau = draw(st.floats(0.01, 2.0))
    p = np.asarray(w) / sum(w)
    p[-1] = 1.0 - math.fsum(p[:-1])
    return FiniteInstance(tuple(B * v for v in x), tuple(p), B, tau, spec)


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(instances(), st.floats(-1.0, 1.0))
    def test_translation_equivariance(self, inst, c):
        shifted = FiniteInstance(tuple(v + c for v in inst.x), inst.p, inst.B + abs(c), inst.tau, inst.spec)
        assert primal_value(shifted) == pytest.approx(primal_value(inst) + c, abs=2e-9)

    @settings(max_examples=60, deadline=None)
    @given(instances(), st.floats(0.1, 10.0))
    def test_positive_homogeneity(self, inst, c):
        scaled = FiniteInstance(tuple(v * c for v in inst.x), inst.p, inst.B * c, inst.tau, inst.spec)
        assert primal_value(scaled) == pytest.approx(c * primal_value(inst), abs=2e-9 * max(1.0, c))

    @settings(max_examples=60, deadline=None)
    @given(instances(), st.floats(0.0, 2.0))
    def test_monotone_in_tau(self, inst, extra):
        bigger = FiniteInstance(inst.x, inst.p, inst.B, inst.tau + extra, inst.spec)
        assert primal_value(bigger) >= primal_value(inst) - 1e-9

    @settings(max_examples=60, deadline=None)
    @given(instances())
    def test_sandwich(self, inst):
        r = primal_value(inst)
        top = max(x for x, p in zip(inst.x, inst.p) if p > 0)
        assert inst.expectation() - 1e-9 <= r <= top + 1e-9

    @settings(max_examples=30, deadline=None)
    @given(instances())
    def test_primal_equals_dual(self, inst):
        rep = worst_case_expectation(inst)
        assert rep.gap <= 1e-8


class TestTruncatedRisk:
    def test_inactive_truncation(self, spec):
        rng = np.random.default_rng(8)
        inst = random_instance(rng, spec, m=4, full_support=True)
        rep = worst_case_expectation(inst)
        L = max(1.0, max(rep.density)) * (1 + 1e-9)
        if math.isfinite(L):
            assert truncated_risk(inst, L) == pytest.approx(rep.primal, abs=1e-8)

    def test_L_one_gives_expectation(self, spec):
        inst = random_instance(np.random.default_rng(9), spec, m=5, full_support=True)
        assert truncated_risk(inst, 1.0) == pytest.approx(inst.expectation(), abs=1e-9)

    def test_kl_sandwich(self):
        eps = 0.01
        L = growth_inverse(DivergenceSpec.kl(), 2 * KL_INST.B * KL_INST.tau / eps)
        r = primal_value(KL_INST)
        assert r - eps - 1e-9 <= truncated_risk(KL_INST, L) <= r + 1e-9

    def test_monotone_in_L(self):
        values = [truncated_risk(KL_INST, L) for L in (1.0, 1.1, 1.3, 1.6, 2.0)]
        assert all(b >= a - 1e-10 for a, b in zip(values, values[1:]))

    def test_rejects_small_L(self):
        with pytest.raises(ValueError):
            truncated_risk(KL_INST, 0.5)
