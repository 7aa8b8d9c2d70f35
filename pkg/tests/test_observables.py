import math

import numpy as np
import pytest

from lioufock import dynamics, states, superops
from lioufock.basis import enumerate_basis, two_level_coherence_sector
from lioufock.observables import (KBodySpec, emission_intensity, expectation,
                                  identity_operator, j12_supervector, one_body,
                                  operator_to_coefficients, population)


def finite_difference_coefficients(spec, sector, step=1e-5):
    """Numerical derivatives of F({n}) = prod lambda_pq^{n_pq} at lambda = delta.

    Central differences along each listed index, one order per pair; order-2
    terms use the mixed / repeated second-difference stencils.  Independent of
    the combinatorial evaluation path.
    """
    M = sector.levels
    out = np.zeros(len(sector), dtype=complex)

    def f_of(lam, counts):
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(counts > 0, lam[np.newaxis, :] ** counts, 1.0)
        return vals.prod(axis=1)

    delta = np.eye(M).reshape(-1)
    for pairs, element in spec.terms.items():
        cols = [p * M + q for (p, q) in pairs]
        if len(cols) == 1:
            c = cols[0]
            lp, lm = delta.copy(), delta.copy()
            lp[c] += step
            lm[c] -= step
            d = (f_of(lp, sector.counts) - f_of(lm, sector.counts)) / (2 * step)
        elif len(cols) == 2 and cols[0] != cols[1]:
            a, b = cols
            acc = np.zeros(len(sector))
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                lam = delta.copy()
                lam[a] += sa * step
                lam[b] += sb * step
                acc = acc + sa * sb * f_of(lam, sector.counts)
            d = acc / (4 * step * step)
        elif len(cols) == 2:
            c = cols[0]
            lp, l0, lm = delta.copy(), delta.copy(), delta.copy()
            lp[c] += step
            lm[c] -= step
            d = (f_of(lp, sector.counts) - 2 * f_of(l0, sector.counts)
                 + f_of(lm, sector.counts)) / (step * step)
        else:
            raise NotImplementedError
        out = out + element * d
    return out


class TestOperatorCoefficients:
    def test_lowering_operator_support(self):
        sector = enumerate_basis(2, 3)
        op = j12_supervector(sector)
        for k in range(len(sector)):
            ng, n01, n10, ne = (int(c) for c in sector.counts[k])
            expect = 1.0 if (n01 == 1 and n10 == 0) else 0.0
            assert op.values[k] == expect

    def test_lowering_operator_sizes(self):
        assert np.count_nonzero(j12_supervector(enumerate_basis(2, 1)).values) == 1
        assert np.count_nonzero(j12_supervector(enumerate_basis(2, 3)).values) == 3

    def test_diagonal_counting_operator(self):
        sector = enumerate_basis(2, 4)
        op = operator_to_coefficients(one_body(1, 1), sector)
        mask = sector.diagonal_mask()
        assert np.array_equal(op.values[mask].real, sector.counts[mask, 3])
        assert np.abs(op.values[~mask]).max() == 0.0

    def test_two_body_identity_pair_count(self):
        N = 4
        sector = enumerate_basis(2, N)
        terms = {((p, p), (q, q)): 1.0 for p in range(2) for q in range(2)}
        op = operator_to_coefficients(KBodySpec(2, terms), sector)
        mask = sector.diagonal_mask()
        assert np.allclose(op.values[mask], N * (N - 1))

    @pytest.mark.parametrize("terms,K", [
        ({((0, 1),): 1.0}, 1),
        ({((1, 1),): 2.0, ((0, 0),): -0.5}, 1),
        ({((0, 1), (1, 0)): 1.0}, 2),
        ({((1, 1), (1, 1)): 1.0}, 2),
        ({((0, 1), (0, 1)): 1.0}, 2),
    ])
    def test_against_finite_differences(self, terms, K):
        sector = enumerate_basis(2, 3)
        spec = KBodySpec(K, terms)
        got = operator_to_coefficients(spec, sector).values
        ref = finite_difference_coefficients(spec, sector)
        assert np.abs(got - ref).max() < 1e-5

    def test_order_exceeds_particles(self):
        sector = enumerate_basis(2, 1)
        with pytest.raises(ValueError):
            operator_to_coefficients(KBodySpec(2, {((0, 0), (1, 1)): 1.0}), sector)


class TestExpectation:
    def test_identity_is_trace(self):
        sector = enumerate_basis(2, 3)
        rho = states.pure_uncorrelated((0.6, 0.8), sector)
        assert expectation(identity_operator(sector), rho) == pytest.approx(1.0)

    def test_population_of_mixture(self):
        sector = enumerate_basis(2, 6)
        rho = states.mixed_uncorrelated((0.5, 0.5), sector)
        op = operator_to_coefficients(one_body(1, 1), sector)
        assert expectation(op, rho).real == pytest.approx(3.0)
        assert population(1, rho) == pytest.approx(0.5)

    def test_dicke_excitation_count(self):
        sector = enumerate_basis(2, 3)
        rho = states.dicke_state(2, sector)
        op = operator_to_coefficients(one_body(1, 1), sector)
        assert expectation(op, rho) == pytest.approx(2.0)

    def test_hermitian_spec_gives_real_value(self):
        rng = np.random.default_rng(5)
        sector = enumerate_basis(2, 3)
        c = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        rho = states.pure_uncorrelated(c / np.linalg.norm(c), sector)
        spec = KBodySpec(1, {((0, 1),): 0.3 + 1j, ((1, 0),): 0.3 - 1j,
                             ((1, 1),): 2.0})
        assert spec.is_hermitian()
        val = expectation(operator_to_coefficients(spec, sector), rho)
        assert abs(val.imag) < 1e-10

    def test_sector_mismatch(self):
        with pytest.raises(ValueError):
            expectation(identity_operator(enumerate_basis(2, 2)),
                        states.mixed_uncorrelated((1, 0), enumerate_basis(2, 3)))

    def test_population_sums_to_one(self):
        sector = enumerate_basis(3, 4)
        rho = states.mixed_uncorrelated((0.2, 0.3, 0.5), sector)
        assert sum(population(q, rho) for q in range(3)) == pytest.approx(1.0)


class TestConventionScale:
    def test_identity_matches_trace_weights(self):
        from lioufock.basis import trace_weight
        from lioufock.observables import operator_norm_convention_scale

        sector = enumerate_basis(2, 3)
        scale = operator_norm_convention_scale(sector)
        for k in range(len(sector)):
            w = trace_weight(sector.vector(k))
            if w > 0:                       # diagonal labels: scale = trace weight
                assert scale[k] == pytest.approx(w, rel=1e-12)

    def test_round_trip_between_conventions(self):
        sector = enumerate_basis(2, 4)
        from lioufock.observables import operator_norm_convention_scale

        scale = operator_norm_convention_scale(sector)
        rng = np.random.default_rng(1)
        coeffs = rng.standard_normal(len(sector))
        assert np.allclose(coeffs * scale / scale, coeffs)


class TestEmissionIntensity:
    def test_fully_inverted_equals_n(self):
        N = 7
        sector = two_level_coherence_sector(N)
        rho = states.mixed_uncorrelated((0.0, 1.0), sector)
        assert emission_intensity(rho) == pytest.approx(N)

    def test_single_atom_decay_law(self):
        sector = two_level_coherence_sector(1)
        liouv = superops.assemble(
            superops.collective_lowering_dissipator(2, 1, 0, 1.0), sector)
        rho0 = states.mixed_uncorrelated((0.0, 1.0), sector)
        grid = np.linspace(0.3, 5.0, 9)
        snaps = dynamics.evolve(liouv, rho0,
                                dynamics.IntegratorConfig(output_grid=grid))
        for t, s in zip(grid, snaps):
            assert emission_intensity(s) == pytest.approx(math.exp(-t), abs=1e-8)

    def test_matches_generating_function_route(self):
        # J_11 + sum_pq sigma-pair route vs the direct coherence-sum formula
        N = 4
        sector = enumerate_basis(2, N)
        liouv = superops.assemble(
            superops.collective_lowering_dissipator(2, 1, 0, 1.0), sector)
        rho0 = states.pure_uncorrelated((math.sqrt(0.3), math.sqrt(0.7)), sector)
        snaps = dynamics.evolve(liouv, rho0, dynamics.IntegratorConfig(
            output_grid=np.linspace(0.2, 3.0, 5)))
        spec = KBodySpec(2, {((1, 0), (0, 1)): 1.0})
        upper = operator_to_coefficients(one_body(1, 1), sector)
        for s in snaps:
            via_ops = expectation(upper, s) \
                + expectation(operator_to_coefficients(spec, sector), s)
            assert abs(via_ops.real - emission_intensity(s)) < 1e-10
            assert abs(via_ops.imag) < 1e-10
