"""Occupation-basis states and operators checked against a dense Jordan-Wigner oracle."""

from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import jw_create, make_layout, oracle_parity, partial_trace_front
from fermode.errors import LayoutError, OperatorError, StateError
from fermode.fock import (
    LinearOperator,
    MixedState,
    PureState,
    SystemLayout,
    add_ancilla,
    apply_mode_op,
    apply_operator,
    basis_state,
    boson,
    dump_state,
    embed_local_unitary,
    fermion,
    fidelity,
    load_state,
    measure,
    mode_operator,
    number_operator,
    product_state,
    reduced_density_matrix,
    superpose,
    trace_distance,
    transfer_mode,
    von_neumann_entropy,
)


def _anti(x, y):
    return x @ y + y @ x


class TestModeOperators:
    @pytest.mark.parametrize("n", range(1, 9))
    def test_creation_matches_oracle(self, n):
        kinds = "f" * n
        layout = make_layout(kinds)
        for j in range(n):
            got = mode_operator(layout, f"m{j}", "create").to_dense(layout)
            np.testing.assert_allclose(got, jw_create(kinds, j), atol=1e-12)

    @pytest.mark.parametrize("n", range(1, 9))
    def test_canonical_anticommutation_exhaustive(self, n):
        layout = make_layout("f" * n)
        dim = layout.dimension
        cdag = [mode_operator(layout, f"m{j}", "create").to_dense(layout) for j in range(n)]
        c = [m.conj().T for m in cdag]
        eye = np.eye(dim)
        for i, j in itertools.product(range(n), repeat=2):
            np.testing.assert_allclose(_anti(c[i], cdag[j]), eye * (i == j), atol=1e-12)
            np.testing.assert_allclose(_anti(c[i], c[j]), 0, atol=1e-12)
            np.testing.assert_allclose(_anti(cdag[i], cdag[j]), 0, atol=1e-12)

    @pytest.mark.parametrize("kinds", ["fb", "bf", "fbf", "bfbf", "ffbb"])
    def test_bosons_commute_with_everything(self, kinds):
        layout = make_layout(kinds)
        ops = {j: mode_operator(layout, f"m{j}", "create").to_dense(layout) for j in range(len(kinds))}
        for j, k in enumerate(kinds):
            np.testing.assert_allclose(ops[j], jw_create(kinds, j), atol=1e-12)
        for i, j in itertools.combinations(range(len(kinds)), 2):
            x, y = ops[i], ops[j]
            if "b" in (kinds[i], kinds[j]):
                np.testing.assert_allclose(x @ y - y @ x, 0, atol=1e-12)
                np.testing.assert_allclose(x.conj().T @ y - y @ x.conj().T, 0, atol=1e-12)

    def test_hard_core_boson_capped_at_one(self):
        layout = make_layout("b")
        state = basis_state(layout, "1")
        assert apply_mode_op(state, "m0", "create").is_zero

    def test_creation_string_sign(self):
        # c1^dag c0^dag |00> = -|11> in the layout-order creation basis
        layout = make_layout("ff")
        vac = basis_state(layout, "00")
        out = apply_mode_op(apply_mode_op(vac, "m0", "create"), "m1", "create")
        assert out.amplitude("11") == pytest.approx(-1.0)

    def test_number_operator(self):
        layout = make_layout("fff")
        n1 = number_operator(layout, "m1").to_dense(layout)
        c = jw_create("fff", 1)
        np.testing.assert_allclose(n1, c @ c.conj().T, atol=1e-12)

    def test_unknown_kind_rejected(self):
        with pytest.raises(OperatorError):
            mode_operator(make_layout("f"), "m0", "sideways")


class TestLayout:
    def test_duplicate_label(self):
        with pytest.raises(LayoutError):
            SystemLayout([fermion("a", "A"), fermion("a", "B")])

    def test_empty_layout(self):
        with pytest.raises(LayoutError):
            SystemLayout([])

    def test_party_modes_and_dimension(self):
        layout = make_layout("fbf", "ABA")
        assert layout.dimension == 8
        assert layout.party_modes("A") == ("m0", "m2")
        assert layout.parties == ("A", "B")
        with pytest.raises(LayoutError):
            layout.party_modes("C")

    def test_occupation_validation(self):
        layout = make_layout("ff")
        with pytest.raises(StateError):
            basis_state(layout, (2, 0))
        with pytest.raises(StateError):
            basis_state(layout, "011")


class TestStates:
    def test_zero_superposition_rejected(self):
        layout = make_layout("f")
        s = basis_state(layout, "1")
        with pytest.raises(StateError):
            superpose([(1.0, s), (-1.0, s)])

    def test_unnormalized_rejected(self):
        layout = make_layout("f")
        with pytest.raises(StateError):
            PureState(layout, [0], [2.0])

    def test_product_state_matches_creation_polynomial(self):
        layout = make_layout("ff", "AB")
        a = basis_state(SystemLayout([layout.spec("m1")]), "1")
        b = basis_state(SystemLayout([layout.spec("m0")]), "1")
        # factor order m1 then m0: c1^dag c0^dag |0> = -|11>
        out = product_state(layout, a, b)
        assert out.amplitude("11") == pytest.approx(-1.0)

    def test_overlapping_factors_rejected(self):
        layout = make_layout("ff")
        f = basis_state(SystemLayout([layout.spec("m0")]), "0")
        with pytest.raises(LayoutError):
            product_state(layout, f, f)

    def test_measure_born_rule(self, rng):
        layout = make_layout("f")
        s = PureState.from_vector(layout, np.array([0.6, 0.8]))
        n = number_operator(layout, "m0")
        counts = [measure(s, n, rng).outcome for _ in range(2000)]
        assert abs(np.mean(counts) - 0.64) < 0.04

    def test_transfer_keeps_amplitudes(self):
        layout = make_layout("ff", "AA")
        s = PureState.from_vector(layout, np.array([0, 1, 1, 0]) / np.sqrt(2))
        moved = transfer_mode(s, "m1", "A")
        np.testing.assert_allclose(moved.to_vector(), s.to_vector())
        layout2 = make_layout("ff", "AB")
        s2 = PureState.from_vector(layout2, np.array([0, 1, 1, 0]) / np.sqrt(2))
        moved = transfer_mode(s2, "m1", "A")
        assert moved.layout.party_modes("A") == ("m0", "m1")

    def test_add_ancilla_preserves_reduced_state(self):
        layout = make_layout("ff", "AB")
        s = PureState.from_vector(layout, np.array([0, 0.6, 0.8, 0]))
        new_layout, t = add_ancilla(s, fermion("anc", "A"), occupancy=1)
        assert new_layout.labels == ("m0", "anc", "m1")
        rho_before = reduced_density_matrix(s, ("m0", "m1"))
        rho_after = reduced_density_matrix(t, ("m0", "m1"))
        np.testing.assert_allclose(rho_after, rho_before, atol=1e-12)
        assert reduced_density_matrix(t, ("anc",))[1, 1].real == pytest.approx(1.0)


class TestReducedStates:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=2, max_value=5), st.integers(min_value=0, max_value=2**32 - 1))
    def test_front_modes_match_plain_partial_trace(self, n, seed):
        gen = np.random.default_rng(seed)
        kinds = "".join(gen.choice(["f", "b"], size=n))
        layout = make_layout(kinds)
        v = gen.standard_normal(1 << n) + 1j * gen.standard_normal(1 << n)
        v /= np.linalg.norm(v)
        s = PureState.from_vector(layout, v)
        keep = int(gen.integers(1, n))
        rho = reduced_density_matrix(s, [f"m{i}" for i in range(keep)])
        np.testing.assert_allclose(rho, partial_trace_front(v, keep, n), atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_local_expectations_agree_with_global(self, seed):
        gen = np.random.default_rng(seed)
        kinds = "ffbf"
        layout = make_layout(kinds)
        # global parity-definite state so the reduced state is physical
        v = gen.standard_normal(16) + 1j * gen.standard_normal(16)
        v[np.real(np.diag(oracle_parity(kinds))) < 0] = 0
        v /= np.linalg.norm(v)
        s = PureState.from_vector(layout, v)
        keep = ("m1", "m3")
        rho = reduced_density_matrix(s, keep, order=keep)
        m = gen.standard_normal((4, 4)) + 1j * gen.standard_normal((4, 4))
        h = m + m.conj().T
        # only parity-even local observables are meaningful under the SSR
        h[np.ix_([0, 3], [1, 2])] = 0
        h[np.ix_([1, 2], [0, 3])] = 0
        op = LinearOperator.on(layout, keep, h)
        full = op.to_dense(layout)
        assert np.vdot(v, full @ v).real == pytest.approx(np.trace(rho @ h).real, abs=1e-10)

    def test_entropy_of_bell_pair(self):
        layout = make_layout("ff", "AB")
        s = PureState.from_vector(layout, np.array([0, 1, 1, 0]) / np.sqrt(2))
        assert von_neumann_entropy(reduced_density_matrix(s, ("m0",))) == pytest.approx(1.0)

    def test_trace_distance_orthogonal(self):
        assert trace_distance(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == pytest.approx(1.0)

    def test_order_argument_must_match(self):
        layout = make_layout("ff")
        with pytest.raises(LayoutError):
            reduced_density_matrix(basis_state(layout, "00"), ("m0",), order=("m1",))


class TestEmbedding:
    def test_phased_permutation(self):
        layout = make_layout("ff")
        u = embed_local_unitary(layout, "A", {"01": (-1.0, "10"), "10": "01"})
        assert u.is_unitary()
        out = apply_operator(basis_state(layout, "01"), u)
        assert out.amplitude("10") == pytest.approx(-1.0)

    def test_non_bijection_rejected(self):
        with pytest.raises(OperatorError):
            embed_local_unitary(make_layout("ff"), "A", {"01": "10"}, fill_identity=True)

    def test_foreign_modes_rejected(self):
        with pytest.raises(OperatorError):
            embed_local_unitary(make_layout("ff", "AB"), "A", {"01": "10"}, modes=("m0", "m1"))

    def test_support_order_is_only_a_relabelling(self):
        layout = make_layout("fff")
        m = np.zeros((4, 4), dtype=complex)
        m[3, 0] = m[0, 3] = 1.0  # |00> <-> |11> on (m0, m2)
        forward = LinearOperator.on(layout, ("m0", "m2"), m).to_dense(layout)
        backward = LinearOperator.on(layout, ("m2", "m0"), m).to_dense(layout)
        # in the swapped order |11> carries an exchange sign
        np.testing.assert_allclose(forward, -backward, atol=1e-12)


class TestSerialization:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=1, max_value=5), st.integers(min_value=0, max_value=2**32 - 1))
    def test_pure_round_trip_exact(self, n, seed):
        gen = np.random.default_rng(seed)
        kinds = "".join(gen.choice(["f", "b"], size=n))
        layout = make_layout(kinds, "".join(gen.choice(["A", "B"], size=n)))
        v = gen.standard_normal(1 << n) + 1j * gen.standard_normal(1 << n)
        s = PureState.from_vector(layout, v / np.linalg.norm(v))
        back = load_state(dump_state(s))
        assert back.layout == s.layout
        np.testing.assert_array_equal(back.to_vector(), s.to_vector())

    def test_mixed_round_trip(self):
        layout = make_layout("ff", "AB")
        a = basis_state(layout, "01")
        b = basis_state(layout, "10")
        mixed = MixedState([(0.25, a), (0.75, b)])
        back = load_state(dump_state(mixed))
        assert isinstance(back, MixedState)
        assert [p for p, _ in back.ensemble] == [0.25, 0.75]
        assert fidelity(back.ensemble[1][1], b) == pytest.approx(1.0)

    def test_wrong_format_rejected(self):
        with pytest.raises(StateError):
            load_state('{"format": "other", "version": 1}')


def test_bosonic_and_fermionic_pairs_have_same_amplitudes():
    fl = SystemLayout([fermion("a", "A"), fermion("b", "B")])
    bl = SystemLayout([boson("a", "A"), boson("b", "B")])
    vec = np.array([0, 1, 1, 0]) / np.sqrt(2)
    np.testing.assert_allclose(PureState.from_vector(fl, vec).to_vector(), PureState.from_vector(bl, vec).to_vector())
