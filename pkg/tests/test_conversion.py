"""Reference-catalysed conversion between bosonic and fermionic e-modes."""

from __future__ import annotations

import numpy as np
import pytest

from fermode.errors import LayoutError, StateError
from fermode.fock import MixedState, reduced_density_matrix, trace_distance
from fermode.protocols import conversion as cv
from fermode.resources import is_perfect_emode
from fermode.ssr import check_ssr_operator

REFERENCES = list(cv.ReferenceKind)


@pytest.mark.parametrize("ref", REFERENCES)
def test_boson_to_fermion_is_exact(ref):
    layout, (slot,) = cv.conversion_layout()
    before = cv.boson_input(layout, ref)
    after = cv.convert_boson_fermion(before, "boson->fermion")
    check = cv.check_conversion(before, after, ref)
    assert check.passed
    assert check.fidelity >= 1 - 1e-9
    assert check.reference_distance <= 1e-9
    assert check.fermion_emode


@pytest.mark.parametrize("ref", REFERENCES)
def test_reverse_direction_recovers_input(ref):
    layout, _ = cv.conversion_layout()
    start = cv.boson_input(layout, ref)
    there = cv.convert_boson_fermion(start, cv.Direction.BOSON_TO_FERMION)
    back = cv.convert_boson_fermion(there, cv.Direction.FERMION_TO_BOSON)
    assert cv.state_fidelity(start, back) >= 1 - 1e-9


@pytest.mark.parametrize("ref", REFERENCES)
def test_reference_is_reusable(ref):
    layout, slots = cv.conversion_layout(rounds=2)
    state = cv.boson_input(layout, ref, slots)
    refs = ("r_A", "r_B")
    initial_ref = reduced_density_matrix(state, refs, order=refs)
    for slot in slots:
        state = cv.convert_boson_fermion(state, "boson->fermion", slot)
    for slot in slots:
        assert is_perfect_emode(state, slot.ancilla_a, slot.ancilla_b)
    assert trace_distance(initial_ref, reduced_density_matrix(state, refs, order=refs)) <= 1e-9


def test_mixed_reference_is_a_mixture():
    layout, _ = cv.conversion_layout()
    ref = cv.reference_state("mixed", layout.spec("r_A"), layout.spec("r_B"))
    assert isinstance(ref, MixedState)
    rho = reduced_density_matrix(ref, ("r_A", "r_B"), order=("r_A", "r_B"))
    np.testing.assert_allclose(rho, cv.separable_decomposition(), atol=1e-12)


def test_mixed_reference_is_separable():
    # the w-average of product states reproduces the equal phi+/psi+ mixture
    rho = cv.separable_decomposition()
    assert np.trace(rho).real == pytest.approx(1.0)
    partial_transpose = rho.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)
    assert np.linalg.eigvalsh(partial_transpose).min() >= -1e-12


def test_unitaries_respect_ssr():
    layout, _ = cv.conversion_layout()
    ua, ub = cv.conversion_unitaries(layout)
    assert check_ssr_operator(ua) and check_ssr_operator(ub)
    assert ua.party == "A" and ub.party == "B"


def test_wrong_direction_rejected():
    layout, _ = cv.conversion_layout()
    with pytest.raises(StateError):
        cv.convert_boson_fermion(cv.boson_input(layout, "x0"), "fermion->boson")


def test_target_shape_matches_output():
    layout, _ = cv.conversion_layout()
    target = cv.fermion_target(layout, "x1")
    back = cv.convert_boson_fermion(target, "fermion->boson")
    assert cv.state_fidelity(back, cv.boson_input(layout, "x1")) >= 1 - 1e-9


def test_reference_must_be_shared():
    layout, _ = cv.conversion_layout()
    with pytest.raises(LayoutError):
        cv.reference_state("x0", layout.spec("r_A"), layout.spec("f_A"))


def test_layout_needs_a_slot():
    with pytest.raises(ValueError):
        cv.conversion_layout(0)
