import math

import numpy as np
import pytest

from lioufock.basis import (CapacityError, OccupationVector, SectorConstraint,
                            UnsupportedConstraintError, enumerate_basis,
                            occupation_balance, sector_size_formula, trace_weight,
                            two_level_coherence_sector, zero_occupation)
from lioufock.scenarios import lambda_sector


def ell_constraint(M=2):
    return occupation_balance(M, (0, 1), (1, 0))


class TestEnumeration:
    def test_single_particle_two_levels(self):
        sector = enumerate_basis(2, 1)
        assert len(sector) == 4
        got = {tuple(int(c) for c in row) for row in sector.counts}
        assert got == {(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1)}

    def test_two_particles_two_levels(self):
        assert len(enumerate_basis(2, 2)) == 10            # binomial(5, 2)

    @pytest.mark.parametrize("M", [1, 2, 3])
    @pytest.mark.parametrize("N", range(7))
    def test_unconstrained_count_is_binomial(self, M, N):
        sector = enumerate_basis(M, N)
        assert len(sector) == math.comb(N + M * M - 1, N)

    def test_lexicographic_order_and_index(self):
        sector = enumerate_basis(2, 3)
        rows = [tuple(int(c) for c in r) for r in sector.counts]
        assert rows == sorted(rows)
        for k, row in enumerate(rows):
            assert sector.index_of(np.array(row)) == k
        assert sector.index_of(np.array([3, 1, 0, 0])) == -1   # wrong total

    def test_sums_and_constraints_hold(self):
        cons = [ell_constraint()]
        sector = enumerate_basis(2, 6, cons)
        assert (sector.counts.sum(axis=1) == 6).all()
        assert (sector.counts[:, 1] == sector.counts[:, 2]).all()

    def test_constrained_subset_of_unconstrained(self):
        full = {tuple(int(c) for c in r) for r in enumerate_basis(2, 4).counts}
        constrained = {tuple(int(c) for c in r)
                       for r in enumerate_basis(2, 4, [ell_constraint()]).counts}
        assert constrained < full

    def test_ell_sector_count_n100(self):
        sector = enumerate_basis(2, 100, [ell_constraint()])
        assert len(sector) == 2601                          # floor((N+2)^2 / 4)

    def test_capacity_guard(self):
        with pytest.raises(CapacityError):
            enumerate_basis(4, 100, capacity=1000)
        # the guard can be disabled or raised
        assert len(enumerate_basis(2, 12, capacity=None)) == math.comb(15, 3)

    def test_nonzero_target_balance(self):
        # coherence-imbalance sector n01 - n10 = 1
        sector = enumerate_basis(2, 3, [occupation_balance(2, (0, 1), (1, 0), 1)])
        assert all(int(r[1]) - int(r[2]) == 1 for r in sector.counts)
        assert len(sector) > 0

    def test_empty_sector_unsatisfiable(self):
        con = SectorConstraint((1, 0, 0, 0), -1)
        assert len(enumerate_basis(2, 2, [con])) == 0

    def test_general_constraint_filter(self):
        # n00 + 2 n11 = 3 has no tie/zero structure, exercises the filter path
        con = SectorConstraint((1, 0, 0, 2), 3)
        sector = enumerate_basis(2, 3, [con])
        assert all(int(r[0]) + 2 * int(r[3]) == 3 for r in sector.counts)
        full = enumerate_basis(2, 3)
        expect = sum(1 for r in full.counts if int(r[0]) + 2 * int(r[3]) == 3)
        assert len(sector) == expect

    def test_n_zero(self):
        sector = enumerate_basis(3, 0)
        assert len(sector) == 1
        assert tuple(sector.counts[0]) == (0,) * 9


class TestSizeFormulas:
    @pytest.mark.parametrize("N", [1, 2, 5, 10, 40, 100])
    def test_two_level_sector(self, N):
        formula = sector_size_formula(2, N, [ell_constraint()])
        assert formula == (N + 2) ** 2 // 4
        assert formula == len(enumerate_basis(2, N, [ell_constraint()]))

    @pytest.mark.parametrize("N", [1, 2, 3, 7, 12, 40])
    def test_cascade_sectors_match_enumeration(self, N):
        no_auger = lambda_sector(N, auger=False)
        assert len(no_auger) == (N + 2) * (N + 4) * (2 * N + 3) // 24
        assert len(no_auger) == sector_size_formula(3, N, no_auger.constraints)
        with_auger = lambda_sector(N, auger=True)
        assert len(with_auger) == (N + 2) * (N + 4) * (N * N + 6 * N + 6) // 48
        assert len(with_auger) == sector_size_formula(4, N, with_auger.constraints)

    def test_reference_values(self):
        no_auger = lambda_sector(1, False).constraints
        assert sector_size_formula(3, 100, no_auger) == 89726
        assert sector_size_formula(4, 10, lambda_sector(1, True).constraints) == 581
        assert sector_size_formula(2, 1, [ell_constraint()]) == 2

    def test_unconstrained_binomial(self):
        assert sector_size_formula(3, 8) == math.comb(8 + 8, 8)

    def test_unsupported_constraints(self):
        con = SectorConstraint((1, 0, 0, 2), 3)
        with pytest.raises(UnsupportedConstraintError):
            sector_size_formula(2, 3, [con])


class TestTraceWeight:
    def test_examples(self):
        assert trace_weight(OccupationVector((1, 0, 0, 1))) == pytest.approx(math.sqrt(2))
        assert trace_weight(OccupationVector((0, 1, 1, 0))) == 0.0
        assert trace_weight(OccupationVector((5, 0, 0, 0))) == 1.0

    def test_square_is_multinomial(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            M = rng.integers(1, 4)
            N = rng.integers(0, 9)
            parts = rng.multinomial(N, np.ones(M) / M)
            counts = np.zeros((M, M), dtype=int)
            np.fill_diagonal(counts, parts)
            w = trace_weight(OccupationVector(tuple(counts.reshape(-1))))
            assert w > 0
            assert round(w ** 2) == pytest.approx(w ** 2, abs=1e-9)
            expect = math.factorial(N)
            for p in parts:
                expect //= math.factorial(p)
            assert w ** 2 == pytest.approx(expect, rel=1e-12)

    def test_large_n_uses_log_gamma(self):
        w = trace_weight(OccupationVector((30, 0, 0, 40)))
        expect = math.sqrt(math.factorial(70) / (math.factorial(30) * math.factorial(40)))
        assert w == pytest.approx(expect, rel=1e-12)


class TestSectorStructure:
    def test_transpose_permutation(self):
        sector = enumerate_basis(2, 3)
        perm = sector.transpose_permutation()
        M = sector.levels
        for k in range(len(sector)):
            a = sector.counts[k].reshape(M, M)
            b = sector.counts[perm[k]].reshape(M, M)
            assert (a.T == b).all()

    def test_transpose_rejected_off_balance(self):
        sector = enumerate_basis(2, 2, [occupation_balance(2, (0, 1), (1, 0), 1)])
        with pytest.raises(ValueError):
            sector.transpose_permutation()

    def test_diagonal_mask(self):
        sector = two_level_coherence_sector(3)
        mask = sector.diagonal_mask()
        for k in np.flatnonzero(mask):
            assert sector.counts[k, 1] == 0 and sector.counts[k, 2] == 0

    def test_vector_access(self):
        sector = enumerate_basis(2, 2)
        v = sector.vector(0)
        assert v.particles == 2
        assert v.levels == 2
        assert sector.index_of(v) == 0
        assert v.transposed().counts == tuple(
            int(c) for c in sector.counts[sector.transpose_permutation()[0]])
