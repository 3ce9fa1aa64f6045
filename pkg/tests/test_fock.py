"""Truncated occupation basis: ordering, ranking, ladder maps."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polaron_effmass.errors import CapacityError, DomainError
from polaron_effmass.fock import (apply_annihilation, apply_creation,
                                  enumerate_basis)
from polaron_effmass.model import build_mode_grid


@pytest.mark.parametrize("m,n", [(1, 0), (1, 5), (2, 3), (3, 4), (5, 2)])
def test_dimension_is_binomial(m, n):
    assert enumerate_basis(m, n).dim == math.comb(m + n, n)


def test_graded_lex_order():
    basis = enumerate_basis(2, 2)
    expected = [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]
    assert [basis.state(i) for i in range(basis.dim)] == expected
    assert basis.state(0) == (0, 0)  # vacuum first


def test_totals_are_nondecreasing_and_states_unique():
    basis = enumerate_basis(4, 3)
    assert np.all(np.diff(basis.totals) >= 0)
    seen = {tuple(row) for row in basis.occupations}
    assert len(seen) == basis.dim


def test_index_of_inverts_state():
    basis = enumerate_basis(3, 4)
    for i in range(basis.dim):
        assert basis.index_of(basis.state(i)) == i
    with pytest.raises(DomainError):
        basis.index_of((5, 0, 0))  # total exceeds n_max
    with pytest.raises(DomainError):
        basis.index_of((1, 1))     # wrong mode count


def test_creation_maps_match_ladder_action():
    basis = enumerate_basis(3, 3)
    for s in range(basis.dim):
        occ = basis.state(s)
        for mode in range(3):
            target = basis.creation_index[s, mode]
            out = apply_creation(occ, mode, basis.n_max)
            if out is None:
                assert target == -1
                assert basis.creation_amp[s, mode] == 0.0
            else:
                new_occ, amp = out
                assert target == basis.index_of(new_occ)
                assert basis.creation_amp[s, mode] == pytest.approx(amp)
                back, down_amp = apply_annihilation(new_occ, mode)
                assert back == occ
                assert down_amp == pytest.approx(amp)


def test_annihilate_vacuum_mode_returns_none():
    assert apply_annihilation((0, 1), 0) is None
    out = apply_annihilation((0, 2), 1)
    assert out == ((0, 1), pytest.approx(math.sqrt(2.0)))


def test_field_momenta_and_frequency_sums():
    grid = build_mode_grid(dk=1.0, uv_cutoff=1.0, ir_cutoff=0.5)  # {-1, +1}
    basis = enumerate_basis(grid.size, 2)
    omegas = np.array([1.0, 3.0])
    mom = basis.field_momenta(grid)
    freq = basis.frequency_sums(omegas)
    for i in range(basis.dim):
        occ = np.asarray(basis.state(i), dtype=float)
        assert mom[i, 0] == pytest.approx(occ @ grid.momenta[:, 0])
        assert freq[i] == pytest.approx(occ @ omegas)
    with pytest.raises(DomainError):
        basis.frequency_sums(np.array([1.0]))


def test_permute_modes_realizes_parity():
    grid = build_mode_grid(dk=0.5, uv_cutoff=1.0)
    basis = enumerate_basis(grid.size, 2)
    sigma = basis.permute_modes(grid.parity_permutation())
    mom = basis.field_momenta(grid)
    assert np.allclose(mom[sigma], -mom)
    # involution: applying parity twice is the identity
    assert np.array_equal(sigma[sigma], np.arange(basis.dim))


def test_capacity_error_before_allocation():
    with pytest.raises(CapacityError):
        enumerate_basis(40, 12, capacity=10_000)


def test_basis_guards():
    with pytest.raises(DomainError):
        enumerate_basis(0, 2)
    with pytest.raises(DomainError):
        enumerate_basis(2, -1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 4), st.data())
def test_rank_roundtrip_property(m, n, data):
    basis = enumerate_basis(m, n)
    idx = data.draw(st.integers(0, basis.dim - 1))
    assert basis.index_of(basis.state(idx)) == idx
