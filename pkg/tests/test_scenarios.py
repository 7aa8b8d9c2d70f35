import math

import numpy as np
import pytest

from lioufock import dynamics, oracle, scenarios, states, superops
from lioufock.basis import enumerate_basis
from lioufock.scenarios import (CompactEmissionParams, LambdaParams,
                                TavisCummingsParams, lambda_sector, run_compact,
                                run_lambda, run_tavis_cummings,
                                steady_state_matrix, steady_state_population,
                                tcm_composite_sector, tcm_liouvillian)


class TestCompact:
    def test_single_atom_relaxes_exponentially(self):
        res = run_compact(CompactEmissionParams(N=1, p2=1.0, t_max=5.0, points=26))
        assert abs(res.p2[-1] - math.exp(-5.0)) < 1e-6
        assert abs(res.intensity[0] - 1.0) < 1e-9

    def test_initial_intensity_is_n(self):
        res = run_compact(CompactEmissionParams(N=12, p2=1.0, t_max=0.5, points=6))
        assert res.intensity[0] == pytest.approx(12.0, abs=1e-9)

    def test_long_time_population_matches_catalan_sum(self):
        res = run_compact(CompactEmissionParams(N=10, p2=0.5, t_max=50.0, points=26))
        assert abs(res.p2[-1] - steady_state_population(10, 0.5)) < 1e-6

    def test_sector_size(self):
        res = run_compact(CompactEmissionParams(N=9, p2=1.0, t_max=1.0, points=3))
        assert len(res.sector) == (9 + 2) ** 2 // 4


class TestSteadyState:
    def test_single_atom_empty_sum(self):
        assert steady_state_population(1, 0.7) == 0.0

    def test_reference_value(self):
        assert steady_state_population(2, 0.5) == pytest.approx(0.125)

    @pytest.mark.parametrize("p2", [0.0, 1.0])
    def test_pure_initial_states_relax_completely(self, p2):
        assert steady_state_population(8, p2) == 0.0

    def test_ground_state_matrix_for_p2_zero(self):
        rho = steady_state_matrix(5, 0.0)
        k = rho.sector.index_of(np.array([5, 0, 0, 0]))
        assert rho.values[k] == pytest.approx(1.0)
        assert np.count_nonzero(rho.values) == 1

    @pytest.mark.parametrize("N,p2", [(2, 0.5), (6, 0.2), (13, 0.8), (20, 0.5)])
    def test_matrix_is_stationary(self, N, p2):
        rho = steady_state_matrix(N, p2)
        liouv = scenarios.compact_liouvillian(N)
        assert states.trace(rho) == pytest.approx(1.0, abs=1e-10)
        assert np.abs(liouv.constant_part @ rho.values).max() < 1e-10

    @pytest.mark.parametrize("N,p2", [(4, 0.2), (11, 0.5)])
    def test_long_time_integration_matches_matrix(self, N, p2):
        target = steady_state_matrix(N, p2)
        liouv = scenarios.compact_liouvillian(N)
        rho0 = states.mixed_uncorrelated((1 - p2, p2), liouv.sector)
        snap = dynamics.evolve(liouv, rho0, dynamics.IntegratorConfig(
            output_grid=[50.0]))[0]
        assert np.abs(snap.values - target.values).max() < 1e-6

    def test_trapped_population_equals_coherence_sum(self):
        # N p2_ss = -sum of single-coherence-pair steady coefficients
        N, p2 = 8, 0.4
        rho = steady_state_matrix(N, p2)
        sec = rho.sector
        mask = (sec.counts[:, 1] == 1) & (sec.counts[:, 2] == 1)
        lhs = N * steady_state_population(N, p2)
        assert lhs == pytest.approx(-float(rho.values[mask].real.sum()), rel=1e-10)


class TestLambda:
    def test_no_pump_nothing_happens(self):
        params = LambdaParams(N=5, auger_rate=0.0, pump_area=0.0, t_max=3.0,
                              points=7)
        res = run_lambda(params)
        assert np.allclose(res.populations["neutral"], 1.0, atol=1e-8)
        assert np.abs(res.intensity).max() < 1e-8
        assert res.emitted_photons == pytest.approx(0.0, abs=1e-8)

    def test_basis_sizes_match_formulas(self):
        res0 = run_lambda(LambdaParams(N=6, auger_rate=0.0, t_max=0.5, points=3))
        assert len(res0.sector) == (6 + 2) * (6 + 4) * (2 * 6 + 3) // 24
        res1 = run_lambda(LambdaParams(N=6, auger_rate=2.0, t_max=0.5, points=3))
        assert len(res1.sector) == (6 + 2) * (6 + 4) * (36 + 36 + 6) // 48

    def test_populations_sum_to_one(self):
        res = run_lambda(LambdaParams(N=8, auger_rate=3.0, t_max=4.0, points=11))
        total = sum(res.populations.values())
        assert np.abs(total - 1.0).max() < 1e-6

    def test_auger_suppresses_emission_small_n(self):
        base = dict(N=12, t_max=5.0, points=26)
        r0 = run_lambda(LambdaParams(auger_rate=0.0, **base))
        r5 = run_lambda(LambdaParams(auger_rate=5.0, **base))
        assert r0.emitted_photons > 0
        assert r5.emitted_photons < r0.emitted_photons

    def test_matches_oracle_with_pump(self):
        # N=2 cascade with time-dependent pump against the full-space oracle
        params = LambdaParams(
            N=2, auger_rate=1.5, pump_area=4.0, pump_center=1.0, pump_width=0.4,
            t_max=3.0, points=7,
            integrator=dynamics.IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12),
            keep_states=True)
        res = run_lambda(params)
        M = 4
        space = oracle.FullSpace(M, 2)
        pump = np.zeros((M, M, M, M))
        pump[2, 0, 2, 0] = 1.0
        auger = np.zeros((M, M, M, M))
        auger[3, 2, 3, 2] = params.auger_rate
        L_pump = space.standard_dissipator(pump)
        L_const = (space.standard_dissipator(auger)
                   + space.collective_decay(2, 1, 1.0)).tocsr()

        sector = res.sector
        probs = [1.0, 0.0, 0.0, 0.0]
        rho0_full = space.embed(states.mixed_uncorrelated(probs, enumerate_basis(M, 2)))

        def rhs(t, y):
            return L_const @ y + params.pump_envelope(t) * (L_pump @ y)

        bound = float(np.abs(L_const).sum(axis=1).max()
                      + 4.0 * np.abs(L_pump).sum(axis=1).max())
        snaps = dynamics.integrate(rhs, 0.0, rho0_full, res.times,
                                   params.integrator,
                                   spectral_bound=lambda t: bound)
        worst = 0.0
        for s_engine, f in zip(res.states, snaps):
            proj = space.project(f, enumerate_basis(M, 2))
            for k in range(len(sector)):
                j = proj.sector.index_of(sector.counts[k])
                worst = max(worst, abs(proj.values[j] - s_engine.values[k]))
        assert worst < 1e-8


class TestTavisCummings:
    def test_vacuum_rabi_oscillation(self):
        params = TavisCummingsParams(
            N=1, p2=1.0, photons=("vacuum",), t_max=6.0, points=61,
            integrator=dynamics.IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12))
        res = run_tavis_cummings(params)
        assert np.abs(res.p2 - np.cos(res.times) ** 2).max() < 1e-7

    def test_conserved_quantities(self):
        params = TavisCummingsParams(N=4, p2=0.6, photons=("fock", 3),
                                     t_max=8.0, points=33)
        res = run_tavis_cummings(params)
        assert np.abs(res.excitation_mean - res.excitation_mean[0]).max() < 1e-9
        assert np.abs(res.asymmetry_mean).max() < 1e-9
        assert np.abs(res.sector_trace_sum - 1.0).max() < 1e-9

    def test_fock_truncation_is_exact_bound(self):
        params = TavisCummingsParams(N=3, photons=("fock", 2))
        assert params.n_max() == 5

    def test_coherent_field_normalized(self):
        params = TavisCummingsParams(N=2, photons=("coherent", 4.0))
        mat = scenarios.field_matrix(params)
        assert np.trace(mat).real == pytest.approx(1.0, abs=1e-12)
        assert np.abs(mat - mat.conj().T).max() < 1e-15

    def test_monolithic_matches_sector_decomposition(self):
        # linearity: one big composite grid vs the conserved-sector pieces
        N, n_ph = 2, 1
        params = TavisCummingsParams(
            N=N, p2=0.7, photons=("fock", n_ph), t_max=3.0, points=7,
            integrator=dynamics.IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13),
            keep_states=True)
        res = run_tavis_cummings(params)
        atomic = enumerate_basis(2, N)
        n_max = params.n_max()
        mono = tcm_composite_sector(atomic, n_max, excitation=None)
        mat = tcm_liouvillian(mono)
        rho_at = states.mixed_uncorrelated((0.3, 0.7), atomic)
        f_mat = scenarios.field_matrix(params)
        y0 = np.zeros(len(mono), dtype=complex)
        for k in range(len(atomic)):
            for nl in range(n_max + 1):
                for nr in range(n_max + 1):
                    row = mono.lookup(np.array([k]), np.array([nl]), np.array([nr]))[0]
                    y0[row] = rho_at.values[k] * f_mat[nl, nr]
        bound = float(np.abs(mat).sum(axis=1).max())
        snaps = dynamics.integrate(lambda t, y: mat @ y, 0.0, y0, res.times,
                                   params.integrator,
                                   spectral_bound=lambda t: bound)
        worst = 0.0
        for j, y in enumerate(snaps):
            rebuilt = np.zeros((len(atomic), n_max + 1, n_max + 1), dtype=complex)
            for key, (comp, traj) in res.states.items():
                v = traj[j]
                for r in range(len(comp)):
                    rebuilt[comp.atomic_idx[r], comp.n_left[r], comp.n_right[r]] += v[r]
            dense = np.zeros_like(rebuilt)
            for r in range(len(mono)):
                dense[mono.atomic_idx[r], mono.n_left[r], mono.n_right[r]] = y[r]
            worst = max(worst, np.abs(rebuilt - dense).max())
        assert worst < 1e-9

    def test_monolithic_operator_block_structure(self):
        # entries never couple labels with different conserved excitations
        atomic = enumerate_basis(2, 2)
        comp = tcm_composite_sector(atomic, 3, excitation=None)
        mat = tcm_liouvillian(comp).tocoo()
        lexc = atomic.counts[:, 2] + atomic.counts[:, 3]
        rexc = atomic.counts[:, 1] + atomic.counts[:, 3]
        e_l = lexc[comp.atomic_idx] + comp.n_left
        e_r = rexc[comp.atomic_idx] + comp.n_right
        assert (e_l[mat.row] == e_l[mat.col]).all()
        assert (e_r[mat.row] == e_r[mat.col]).all()

    def test_coherent_truncation_policy(self):
        params = TavisCummingsParams(N=2, photons=("coherent", 9.0))
        assert params.n_max() == math.ceil(9.0 + 8 * 3.0) + 2

    def test_bad_field_kind_rejected(self):
        with pytest.raises(ValueError):
            TavisCummingsParams(N=1, photons=("squeezed", 1))
