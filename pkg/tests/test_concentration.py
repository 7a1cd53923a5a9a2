"""Concentration of partially entangled pairs, the bootstrap and the two-copy filter."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from fermode.errors import LayoutError, StateError
from fermode.fock import product_state
from fermode.locc import enumerate_branches, validate_script
from fermode.protocols import concentration as conc
from fermode.protocols.emode import EModeParams, emode_state
from fermode.resources import is_perfect_emode


class TestCombinatorics:
    def test_extractable(self):
        assert [conc.extractable(4, m) for m in range(5)] == [0, 2, 2, 2, 0]
        assert conc.extractable(12, 6) == 9  # C(12, 6) = 924

    def test_colex_order(self):
        assert conc.colex_subsets(4, 2) == [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)]

    def test_codeword_msb_first(self):
        assert conc.codeword(6, 3) == (1, 1, 0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=2, max_value=12), st.floats(min_value=0.01, max_value=0.99))
    def test_number_law_is_binomial(self, N, beta2):
        params = EModeParams.from_alpha2(1 - beta2)
        np.testing.assert_allclose(conc.number_distribution(N, params), binom.pmf(range(N + 1), N, beta2), atol=1e-14)

    def test_realized_below_nominal(self):
        params = EModeParams.from_alpha2(0.5)
        for N in range(2, 13):
            assert conc.realized_yield(N, params) <= conc.expected_yield(N, params) + 1e-15

    def test_yield_bounded_by_entropy(self):
        for a2 in (0.5, 0.7):
            params = EModeParams.from_alpha2(a2)
            for N in range(2, 13):
                assert conc.expected_yield(N, params) <= params.entropy()


class TestProtocol:
    @pytest.mark.parametrize("N", [2, 3, 4, 5])
    @pytest.mark.parametrize("beta2", [0.3, 0.5])
    def test_every_branch_is_exact(self, N, beta2):
        params = EModeParams.from_alpha2(1 - beta2)
        reports = conc.concentration_branches(N, params)
        dist = conc.measured_distribution(reports, N)
        np.testing.assert_allclose(dist, conc.number_distribution(N, params), atol=1e-12)
        for r in reports:
            assert r.ancilla_intact
            assert len(r.extracted) == r.k
            for pair in r.extracted:
                assert is_perfect_emode(r.trial.final_state, *pair)
        assert conc.enumerated_yield(reports, N) == pytest.approx(conc.expected_yield(N, params))

    def test_index_failure_probability(self):
        # N = 3, m = 1: C = 3, keep 2 of 3 placements
        params = EModeParams.from_alpha2(0.5)
        reports = conc.concentration_branches(3, params)
        m1 = [r for r in reports if r.m == 1]
        ok = sum(r.probability for r in m1 if r.success)
        assert ok == pytest.approx(3 * 0.125 * 2 / 3)

    def test_script_validates(self):
        for N in (2, 4, 6):
            assert validate_script(conc.concentration_script(N), conc.concentration_layout(N)) == []

    def test_ancilla_required(self):
        with pytest.raises(StateError):
            conc.concentrate(4, EModeParams.from_alpha2(0.6), 0, ancilla=None)

    def test_without_ancilla_parity_mismatch_breaks_pairs(self):
        # running the same relabelling with the ancilla replaced by empty modes
        N = 3
        params = EModeParams.from_alpha2(0.5)
        layout = conc.concentration_layout(N)
        pairs = [emode_state(params, layout.spec(conc.alice_mode(i)), layout.spec(conc.bob_mode(i))) for i in range(N)]
        bare = product_state(layout, *pairs)
        good = 0.0
        for t in enumerate_branches(conc.concentration_script(N), bare):
            k = conc.extractable(N, t.registers["number"])
            if t.registers.get("index", 0) == 0 and k and all(
                is_perfect_emode(t.final_state, conc.alice_mode(i), conc.bob_mode(i)) for i in range(k)
            ):
                good += t.probability
        assert good < 1.0 - conc.number_distribution(N, params)[[0, N]].sum() - 1e-6

    def test_sampled_run(self):
        r = conc.concentrate(4, EModeParams.from_alpha2(0.6), 3)
        assert r.N == 4 and 0 <= r.m <= 4
        d = r.to_dict()
        assert set(d) >= {"m", "k", "p_m", "extracted", "ancilla_intact"}

    def test_dual_rail_ancilla(self):
        params = EModeParams.from_alpha2(0.5)
        reports = conc.concentration_branches(3, params, ancilla="dual-rail")
        assert sum(r.probability for r in reports) == pytest.approx(1.0)
        intact = [r for r in reports if r.ancilla_intact]
        assert intact

    @pytest.mark.parametrize("N", [1, 13])
    def test_range(self, N):
        with pytest.raises(LayoutError):
            conc.check_n_range(N)


class TestBootstrapAndFilter:
    @pytest.mark.parametrize("alpha2", [0.5, 0.6, 0.7, 0.8, 0.9])
    def test_bootstrap_attempt_probability(self, alpha2):
        params = EModeParams.from_alpha2(alpha2)
        p = conc.bootstrap_success_probability(2, params)
        assert p == pytest.approx(2 * alpha2 * (1 - alpha2), abs=1e-12)

    def test_more_attempts_help(self):
        params = EModeParams.from_alpha2(0.7)
        q = 2 * 0.7 * 0.3
        assert conc.bootstrap_success_probability(4, params) == pytest.approx(1 - (1 - q) ** 2, abs=1e-12)

    def test_bootstrap_resource_is_dual_rail(self):
        params = EModeParams.from_alpha2(0.6, 0.4)
        result = None
        for seed in range(50):
            result = conc.bootstrap_emode(2, params, seed)
            if result.success:
                break
        assert result is not None and result.success
        ok, state = result
        assert ok
        resource = conc.dual_rail_resource(result)
        amps = {k: abs(v) for k, v in resource.to_dict().items() if abs(v) > 1e-12}
        assert set(amps) == {"1001", "0110"}
        assert all(a == pytest.approx(1 / math.sqrt(2)) for a in amps.values())

    def test_failed_bootstrap_has_no_resource(self):
        params = EModeParams.from_alpha2(0.9)
        for seed in range(100):
            result = conc.bootstrap_emode(2, params, seed)
            if not result.success:
                with pytest.raises(StateError):
                    conc.dual_rail_resource(result)
                assert result.resource_modes is None
                return
        pytest.fail("no failed attempt in 100 seeds")

    @pytest.mark.parametrize("alpha2", [0.5, 0.6, 0.7, 0.8, 0.9])
    def test_filter_reaches_bound(self, alpha2):
        params = EModeParams.from_alpha2(alpha2)
        p = conc.filter_extraction_probability(2, params)
        bound = 1 - (2 * alpha2 - 1) ** 2
        assert p <= bound + 1e-9
        assert p == pytest.approx(bound, abs=1e-9)
        assert conc.bootstrap_success_probability(2, params) == pytest.approx(bound / 2, abs=1e-12)
