import numpy as np
import pytest
import scipy.sparse as sps

from qrc.errors import DimensionMismatch, IndexOutOfRange, NotPositiveDefinite
from qrc.sparse import (SymSparse, TripletList, factor_spd, fill_reducing_order, matvec,
                        nested_dissection, quad_form, solve_rhs, triplets_to_sym)


def random_spd(rng, n, density=0.3):
    a = sps.random(n, n, density=density, random_state=np.random.RandomState(rng.integers(2**31)))
    a = (a + a.T).toarray()
    return a + (np.abs(a).sum(axis=1).max() + 1.0) * np.eye(n)


class TestTriplets:
    def test_mirrored_entry(self):
        t = TripletList(3)
        t.add(0, 2, 1.5)
        m = triplets_to_sym(t)
        assert m.todense()[0, 2] == 1.5 and m.todense()[2, 0] == 1.5

    def test_duplicates_sum(self):
        t = TripletList(2)
        for _ in range(3):
            t.add(1, 1, 2.0)
        assert triplets_to_sym(t).todense()[1, 1] == 6.0

    def test_lower_and_upper_fold_together(self):
        t = TripletList(2)
        t.add(0, 1, 1.0)
        t.add(1, 0, 2.0)
        assert triplets_to_sym(t).todense()[0, 1] == 3.0

    def test_block_matches_dense_scatter(self, rng):
        dofs = np.array([[0, 2, 3], [3, 1, 0]])
        local = rng.standard_normal((2, 3, 3))
        local = local + local.transpose(0, 2, 1)
        t = TripletList(4)
        t.add_block(dofs, local)
        ref = np.zeros((4, 4))
        for d, loc in zip(dofs, local):
            ref[np.ix_(d, d)] += loc
        np.testing.assert_allclose(triplets_to_sym(t).todense(), ref, atol=1e-14)

    @pytest.mark.parametrize("i,j", [(3, 0), (0, -1), (5, 5)])
    def test_index_out_of_range(self, i, j):
        t = TripletList(3)
        t.add(i, j, 1.0)
        with pytest.raises(IndexOutOfRange):
            triplets_to_sym(t)


class TestSymSparse:
    def test_from_dense_roundtrip(self, rng):
        a = random_spd(rng, 12)
        m = SymSparse.from_dense(a)
        np.testing.assert_array_equal(m.todense(), a)
        assert m.shape == (12, 12)

    def test_matvec_and_quad_form(self, rng):
        a = random_spd(rng, 15)
        m = SymSparse.from_dense(a)
        x = rng.standard_normal(15)
        np.testing.assert_allclose(matvec(m, x), a @ x, rtol=1e-13)
        assert quad_form(m, x) == pytest.approx(x @ a @ x, rel=1e-13)

    def test_matvec_dimension_check(self):
        m = SymSparse.from_dense(np.eye(3))
        with pytest.raises(DimensionMismatch):
            matvec(m, np.ones(4))

    def test_add_and_scale(self, rng):
        a, b = random_spd(rng, 6), random_spd(rng, 6)
        ma, mb = SymSparse.from_dense(a), SymSparse.from_dense(b)
        np.testing.assert_allclose((ma + mb.scaled(0.5)).todense(), a + 0.5 * b)


class TestFactor:
    def test_hand_computed_2x2(self):
        f = factor_spd(SymSparse.from_dense(np.array([[4.0, 2.0], [2.0, 3.0]])),
                       perm=np.arange(2))
        np.testing.assert_allclose(f.L_dense(), [[1.0, 0.0], [0.5, 1.0]])
        np.testing.assert_allclose(f.D, [4.0, 2.0])

    def test_indefinite_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            factor_spd(SymSparse.from_dense(np.array([[1.0, 2.0], [2.0, 1.0]])))

    def test_singular_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            factor_spd(SymSparse.from_dense(np.array([[1.0, 1.0], [1.0, 1.0]])))

    @pytest.mark.parametrize("method", ["nd", "rcm", "natural"])
    @pytest.mark.parametrize("n", [1, 7, 40, 150])
    def test_solve_accuracy(self, rng, method, n):
        a = random_spd(rng, n, density=min(1.0, 5.0 / n))
        m = SymSparse.from_dense(a)
        f = factor_spd(m, perm=fill_reducing_order(m, method))
        b = rng.standard_normal(n)
        x = solve_rhs(f, b)
        assert np.linalg.norm(a @ x - b) <= 1e-12 * np.linalg.norm(b) * np.linalg.cond(a)

    def test_reconstruction(self, rng):
        a = random_spd(rng, 30)
        f = factor_spd(SymSparse.from_dense(a))
        L = f.L_dense()
        P = np.eye(30)[f.perm]
        np.testing.assert_allclose(L @ np.diag(f.D) @ L.T, P @ a @ P.T, atol=1e-11)

    def test_solve_does_not_mutate(self, rng):
        a = random_spd(rng, 10)
        f = factor_spd(SymSparse.from_dense(a))
        b = rng.standard_normal(10)
        keep = b.copy()
        solve_rhs(f, b)
        np.testing.assert_array_equal(b, keep)

    def test_factor_arrays_read_only(self):
        f = factor_spd(SymSparse.from_dense(np.eye(3)))
        with pytest.raises(ValueError):
            f.D[0] = 2.0


class TestOrdering:
    def test_nested_dissection_is_permutation(self):
        g = sps.diags([1, 1, 1], [-1, 0, 1], shape=(500, 500)).tocsr()
        p = nested_dissection(g, leaf_size=16)
        np.testing.assert_array_equal(np.sort(p), np.arange(500))

    def test_grid_fill_is_reduced(self):
        n = 30
        lap1 = sps.diags([-1, 2, -1], [-1, 0, 1], shape=(n, n))
        a = (sps.kron(lap1, sps.eye(n)) + sps.kron(sps.eye(n), lap1)).toarray()
        m = SymSparse.from_dense(a)
        nd = factor_spd(m, perm=fill_reducing_order(m, "nd")).nnz_l
        nat = factor_spd(m, perm=fill_reducing_order(m, "natural")).nnz_l
        assert nd < nat

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            fill_reducing_order(SymSparse.from_dense(np.eye(2)), "amd")
