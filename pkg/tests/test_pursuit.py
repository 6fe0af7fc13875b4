"""The shared Gram-domain pursuit: correctness against dense oracles,
backend parity, and edge cases."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slrfr._pursuit_cy import gram_pursuit_impl as compiled_impl
from slrfr._pursuit_py import gram_pursuit_impl as python_impl
from slrfr.errors import InvalidArgumentError
from slrfr.pursuit import BACKEND, PursuitResult, SparseCode, gram_pursuit

from helpers import random_unit_dictionary


def make_instance(rng, dim, n_atoms):
    D = random_unit_dictionary(rng, dim, n_atoms)
    y = rng.standard_normal(dim)
    return D, y, D.T @ y, D.T @ D, float(y @ y)


class TestAgainstDenseLeastSquares:
    def test_selected_coefficients_match_lstsq(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            D, y, g0, G, e0 = make_instance(rng, 24, 16)
            res = gram_pursuit(g0, G, e0, 5)
            sub = D[:, res.order]
            ref, *_ = np.linalg.lstsq(sub, y, rcond=None)
            assert np.allclose(res.coeffs, ref, atol=1e-9)
            # final energy equals the dense squared residual
            resid = y - sub @ res.coeffs
            assert abs(res.final_energy - resid @ resid) < 1e-9

    def test_energy_path_matches_prefix_refits(self):
        rng = np.random.default_rng(1)
        D, y, g0, G, e0 = make_instance(rng, 20, 12)
        res = gram_pursuit(g0, G, e0, 6)
        assert res.energies[0] == pytest.approx(e0)
        for k in range(1, res.n_selected + 1):
            sub = D[:, res.order[:k]]
            coef, *_ = np.linalg.lstsq(sub, y, rcond=None)
            resid = y - sub @ coef
            assert abs(res.energies[k] - resid @ resid) < 1e-9

    def test_exact_sparse_signal_recovered(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            D = random_unit_dictionary(rng, 30, 10)
            support = rng.choice(10, size=2, replace=False)
            coeffs = rng.standard_normal(2) + np.sign(rng.standard_normal(2))
            y = D[:, support] @ coeffs
            e0 = float(y @ y)
            res = gram_pursuit(D.T @ y, D.T @ D, e0, 2)
            # well-separated random atoms: greedy finds the planted support
            if set(res.order) == set(support):
                assert res.final_energy < 1e-10 * (1.0 + e0)


class TestStoppingRules:
    def test_stops_on_zero_signal(self):
        rng = np.random.default_rng(3)
        D = random_unit_dictionary(rng, 10, 6)
        res = gram_pursuit(np.zeros(6), D.T @ D, 0.0, 3)
        assert res.n_selected == 0
        assert res.energies.tolist() == [0.0]

    def test_stops_when_energy_below_tol(self):
        rng = np.random.default_rng(4)
        D = random_unit_dictionary(rng, 12, 8)
        y = D[:, 3] * 2.0
        res = gram_pursuit(D.T @ y, D.T @ D, float(y @ y), 5)
        # after the exact atom, energy hits ~0 and selection stops
        assert res.n_selected == 1
        assert res.order[0] == 3

    def test_energy_floor_at_zero(self):
        rng = np.random.default_rng(5)
        D = random_unit_dictionary(rng, 16, 10)
        y = D[:, [1, 7]] @ np.array([1.5, -0.5])
        res = gram_pursuit(D.T @ y, D.T @ D, float(y @ y), 4)
        assert np.all(res.energies >= 0.0)

    def test_max_atoms_respected(self):
        rng = np.random.default_rng(6)
        _, _, g0, G, e0 = make_instance(rng, 40, 20)
        res = gram_pursuit(g0, G, e0, 7)
        assert res.n_selected <= 7
        assert len(set(res.order.tolist())) == res.n_selected


class TestValidation:
    def test_rejects_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            gram_pursuit(np.zeros(3), np.eye(4), 1.0, 1)

    def test_rejects_bad_max_atoms(self):
        with pytest.raises(InvalidArgumentError):
            gram_pursuit(np.zeros(3), np.eye(3), 1.0, 0)
        with pytest.raises(InvalidArgumentError):
            gram_pursuit(np.zeros(3), np.eye(3), 1.0, 4)

    def test_rejects_nonfinite(self):
        g0 = np.array([1.0, np.inf, 0.0])
        with pytest.raises(InvalidArgumentError):
            gram_pursuit(g0, np.eye(3), 1.0, 1)

    def test_negative_energy_clamped(self):
        rng = np.random.default_rng(7)
        D = random_unit_dictionary(rng, 8, 4)
        y = rng.standard_normal(8)
        res = gram_pursuit(D.T @ y, D.T @ D, -1e-9, 2)
        assert res.energies[0] == 0.0

    def test_readonly_inputs_accepted(self):
        rng = np.random.default_rng(8)
        _, _, g0, G, e0 = make_instance(rng, 12, 6)
        g0.flags.writeable = False
        G.flags.writeable = False
        res = gram_pursuit(g0, G, e0, 3)
        assert res.n_selected >= 1


class TestBackendParity:
    def test_both_backends_importable(self):
        assert BACKEND in ("compiled", "python")

    def test_identical_outputs_across_backends(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            n_atoms = int(rng.integers(2, 40))
            dim = n_atoms + int(rng.integers(1, 30))
            max_atoms = int(rng.integers(1, min(n_atoms, 10) + 1))
            _, _, g0, G, e0 = make_instance(rng, dim, n_atoms)
            o1, c1, e1, r1 = python_impl(g0.copy(), G.copy(), e0, max_atoms, 1e-12, 1e-8)
            o2, c2, e2, r2 = compiled_impl(g0.copy(), G.copy(), e0, max_atoms, 1e-12, 1e-8)
            assert np.array_equal(o1, o2)
            assert np.allclose(c1, c2, atol=1e-10)
            assert np.allclose(e1, e2, atol=1e-9)
            assert r1 == r2

    def test_gram_ties_break_identically(self):
        # duplicate atoms force correlation ties; both backends take the
        # first maximum
        D = np.zeros((4, 3))
        D[:, 0] = [1.0, 0.0, 0.0, 0.0]
        D[:, 1] = [1.0, 0.0, 0.0, 0.0]
        D[:, 2] = [0.0, 1.0, 0.0, 0.0]
        y = np.array([2.0, 1.0, 0.0, 0.0])
        g0, G, e0 = D.T @ y, D.T @ D, float(y @ y)
        o1, *_ = python_impl(g0.copy(), G.copy(), e0, 2, 1e-12, 1e-8)
        o2, *_ = compiled_impl(g0.copy(), G.copy(), e0, 2, 1e-12, 1e-8)
        assert o1[0] == 0 and o2[0] == 0


class TestRidgeFallback:
    def test_singular_refit_triggers_ridge_not_failure(self):
        # a rank-1 Gram with slightly unequal correlations forces the
        # pursuit to select both (dependent) atoms; the two-atom refit is
        # singular and must fall back to the ridge. e0 = 2 leaves residual
        # energy after the first atom so selection continues.
        G = np.ones((2, 2))
        g0 = np.array([1.0, 1.0 - 1e-9])
        res = gram_pursuit(g0, G, 2.0, 2)
        assert res.n_selected == 2
        assert res.ridged
        assert np.all(np.isfinite(res.coeffs))
        assert np.all(np.isfinite(res.energies))


class TestSparseCode:
    def test_from_pursuit_sorts_support(self):
        res = PursuitResult(
            order=np.array([5, 1, 3], dtype=np.int64),
            coeffs=np.array([0.5, -1.0, 2.0]),
            energies=np.array([4.0, 2.0, 1.0, 0.5]),
            ridged=False,
        )
        code = SparseCode.from_pursuit(res, 8)
        assert code.support.tolist() == [1, 3, 5]
        assert code.values.tolist() == [-1.0, 2.0, 0.5]

    def test_dense_expansion(self):
        res = PursuitResult(
            order=np.array([2], dtype=np.int64),
            coeffs=np.array([3.0]),
            energies=np.array([9.0, 0.0]),
            ridged=False,
        )
        dense = SparseCode.from_pursuit(res, 4).dense()
        assert dense.tolist() == [0.0, 0.0, 3.0, 0.0]

    def test_rejects_unsorted_support(self):
        with pytest.raises(InvalidArgumentError):
            SparseCode(4, np.array([2, 1], dtype=np.int64), np.array([1.0, 2.0]))

    def test_rejects_out_of_range_support(self):
        with pytest.raises(InvalidArgumentError):
            SparseCode(2, np.array([3], dtype=np.int64), np.array([1.0]))


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 100_000),
    n_atoms=st.integers(2, 24),
    extra_dim=st.integers(1, 16),
    max_atoms=st.integers(1, 6),
)
def test_energy_path_non_increasing_property(seed, n_atoms, extra_dim, max_atoms):
    rng = np.random.default_rng(seed)
    D = random_unit_dictionary(rng, n_atoms + extra_dim, n_atoms)
    y = rng.standard_normal(n_atoms + extra_dim)
    res = gram_pursuit(D.T @ y, D.T @ D, float(y @ y), min(max_atoms, n_atoms))
    assert np.all(np.diff(res.energies) <= 1e-9)
    assert np.all(res.energies >= 0.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_backend_parity_property(seed):
    rng = np.random.default_rng(seed)
    n_atoms = int(rng.integers(2, 20))
    dim = n_atoms + int(rng.integers(1, 12))
    D = random_unit_dictionary(rng, dim, n_atoms)
    y = rng.standard_normal(dim)
    g0, G, e0 = D.T @ y, D.T @ D, float(y @ y)
    max_atoms = int(rng.integers(1, n_atoms + 1))
    o1, c1, e1, _ = python_impl(g0.copy(), G.copy(), e0, max_atoms, 1e-12, 1e-8)
    o2, c2, e2, _ = compiled_impl(g0.copy(), G.copy(), e0, max_atoms, 1e-12, 1e-8)
    assert np.array_equal(o1, o2)
    assert np.allclose(c1, c2, atol=1e-10)
    assert np.allclose(e1, e2, atol=1e-9)
