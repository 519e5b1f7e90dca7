import math

import mpmath
import numpy as np
import pytest

from cnslab.control import build_moment_system, synthesize_control, verify_terminal
from cnslab.errors import DomainError, RankDeficient
from cnslab.evolution import ObservationChannel, observation_signal
from cnslab.fields import EigenExpansion, SpectralField
from cnslab.kernels import kernel_inner, signal_energy_exact
from cnslab.spectrum import build_slice


def _random_mean_zero(rng, dim, N, content=None):
    content = content or N
    c = np.zeros((2 * N + 1, dim), dtype=complex)
    for n in range(1, content + 1):
        c[n + N] = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        c[-n + N] = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return SpectralField(dim=dim, N=N, coeffs=c)


class TestBuildMomentSystem:
    def test_zero_initial_state(self, nondegenerate_barotropic):
        slice_ = build_slice(nondegenerate_barotropic, 4)
        system = build_moment_system(SpectralField.zeros(2, 4), ObservationChannel.DENSITY, 2.0, slice_, 2)
        assert np.all(system.targets == 0.0)

    def test_row_count_two_per_mode(self, nondegenerate_barotropic):
        slice_ = build_slice(nondegenerate_barotropic, 2)
        field = SpectralField.single_mode(1, np.array([1.0, 0.5]), 2)
        system = build_moment_system(field, ObservationChannel.DENSITY, 2.0, slice_, 1)
        # two rows (dim 2) for each of the modes +-1 in the truncation
        assert len(system.rows) == 4
        assert len([r for r in system.rows if r.n == 1]) == 2

    def test_degenerate_kernels_flagged(self, uc_failing_barotropic):
        slice_ = build_slice(uc_failing_barotropic, 2)
        rng = np.random.default_rng(0)
        field = _random_mean_zero(rng, 2, 2)
        system = build_moment_system(field, ObservationChannel.DENSITY, 8.0, slice_, 1)
        assert system.rank_deficiency_groups
        i, j = system.rank_deficiency_groups[0]
        assert {system.rows[i].n, system.rows[j].n} == {-1, 1}

    def test_below_critical_watermark(self, nondegenerate_barotropic):
        slice_ = build_slice(nondegenerate_barotropic, 2)
        field = SpectralField.single_mode(1, np.array([1.0, 0.0]), 2)
        fast = build_moment_system(field, ObservationChannel.DENSITY, 3.0, slice_, 1)
        slow = build_moment_system(field, ObservationChannel.DENSITY, 8.0, slice_, 1)
        assert fast.below_critical_time
        assert not slow.below_critical_time


class TestSynthesizeControl:
    def test_zero_targets_zero_control(self, nondegenerate_barotropic):
        slice_ = build_slice(nondegenerate_barotropic, 4)
        system = build_moment_system(SpectralField.zeros(2, 4), ObservationChannel.DENSITY, 2.0, slice_, 2)
        solution = synthesize_control(system)
        assert solution.control_norm == 0.0
        assert solution.residual == 0.0
        assert np.all(solution(np.linspace(0, 2, 7)) == 0.0)

    def test_single_eigenfunction_density(self, nondegenerate_barotropic):
        slice_ = build_slice(nondegenerate_barotropic, 16)
        from cnslab.spectrum import MatrixKind, _symbol

        # forward eigenfunction of mode 2
        M = _symbol(nondegenerate_barotropic, 2, MatrixKind.FORWARD)
        vals, vecs = np.linalg.eig(M)
        field = SpectralField.single_mode(2, vecs[:, 0], 16)
        system = build_moment_system(field, ObservationChannel.DENSITY, 8.0, slice_, 8)
        solution = synthesize_control(system)
        assert solution.residual <= 1e-8

    def test_residual_matches_recomputation(self, nondegenerate_barotropic):
        # recompute ||A x - m|| / ||m|| from scratch at the solver's precision
        # (double-precision Gram entries cannot resolve residuals this small)
        from cnslab.control import _gram_mp, _targets_mp

        slice_ = build_slice(nondegenerate_barotropic, 8)
        rng = np.random.default_rng(1)
        field = _random_mean_zero(rng, 2, 8, content=4)
        system = build_moment_system(field, ObservationChannel.DENSITY, 8.0, slice_, 4)
        solution = synthesize_control(system)
        with mpmath.workdps(solution.solve_dps):
            G = _gram_mp(system)
            m = mpmath.matrix(_targets_mp(system))
            x = mpmath.matrix(solution.coefficients_mp)
            r = G * x - m
            recomputed = float(mpmath.norm(r) / mpmath.norm(m))
        assert abs(recomputed - solution.residual) <= 1e-12 * max(1.0, solution.residual) + 1e-30

    def test_rank_deficient_raises_on_uc_failure(self, uc_failing_barotropic):
        slice_ = build_slice(uc_failing_barotropic, 2)
        rng = np.random.default_rng(2)
        field = _random_mean_zero(rng, 2, 2)
        system = build_moment_system(field, ObservationChannel.DENSITY, 8.0, slice_, 1)
        with pytest.raises(RankDeficient):
            synthesize_control(system)

    def test_consistent_duplicate_rows_are_dropped(self, uc_failing_barotropic):
        # data orthogonal to the obstruction: both coincident rows carry zero
        # targets, so the duplicate is redundant rather than contradictory
        slice_ = build_slice(uc_failing_barotropic, 2)
        field = SpectralField.single_mode(2, np.array([0.3, -0.1 + 0.2j]), 2)
        system = build_moment_system(field, ObservationChannel.DENSITY, 8.0, slice_, 1)
        solution = synthesize_control(system)
        assert solution.residual <= 1e-10

    def test_jordan_chain_rows_round_trip(self, unit_barotropic):
        # the n0 = 2 Jordan block contributes (T-t)^j kernels; null control
        # through the generalized rows still closes
        slice_ = build_slice(unit_barotropic, 8)
        rng = np.random.default_rng(9)
        field = _random_mean_zero(rng, 2, 8, content=4)
        system = build_moment_system(field, ObservationChannel.DENSITY, 8.0, slice_, 4)
        chain_rows = [r for r in system.rows if r.level > 0]
        assert len(chain_rows) == 2
        assert all([t.degree for t in r.kernel] == [0, 1] for r in chain_rows)
        solution = synthesize_control(system)
        record = verify_terminal(field, solution, system, slice_, 8)
        assert solution.residual <= 1e-8
        assert record.in_truncation_residual <= 1e-6

    def test_cost_blowup_below_critical_time(self, nondegenerate_barotropic):
        slice_ = build_slice(nondegenerate_barotropic, 12)
        rng = np.random.default_rng(3)
        norms = {}
        for N in (4, 8):
            field = _random_mean_zero(rng, 2, 12, content=N)
            for T in (3.0, 8.0):
                system = build_moment_system(field, ObservationChannel.DENSITY, T, slice_, N)
                norms[(N, T)] = synthesize_control(system).control_norm
        ratio_small = norms[(4, 3.0)] / norms[(4, 8.0)]
        ratio_large = norms[(8, 3.0)] / norms[(8, 8.0)]
        assert ratio_small >= 10.0
        assert ratio_large >= 10.0 * ratio_small


class TestVerifyTerminal:
    def test_zero_everything(self, nondegenerate_barotropic):
        slice_ = build_slice(nondegenerate_barotropic, 4)
        field = SpectralField.zeros(2, 4)
        system = build_moment_system(field, ObservationChannel.DENSITY, 2.0, slice_, 2)
        solution = synthesize_control(system)
        record = verify_terminal(field, solution, system, slice_, 4)
        assert record.in_truncation_residual == 0.0
        assert all(v == 0.0 for v in record.spillover.values())

    def test_round_trip_density_and_velocity(self, nondegenerate_barotropic):
        slice_ = build_slice(nondegenerate_barotropic, 16)
        rng = np.random.default_rng(4)
        field = _random_mean_zero(rng, 2, 16, content=8)
        for channel in (ObservationChannel.DENSITY, ObservationChannel.VELOCITY):
            system = build_moment_system(field, channel, 8.0, slice_, 8)
            solution = synthesize_control(system)
            record = verify_terminal(field, solution, system, slice_, 16)
            assert solution.residual <= 1e-8
            assert record.in_truncation_residual <= 1e-6

    def test_parabolic_spillover_decays_past_spike_scale(self, nondegenerate_barotropic):
        # the synthesized control carries a terminal spike (last-moment action
        # on the fast parabolic modes), so the forced parabolic spill first
        # grows up to the spike's spectral scale and then decays with |n|
        slice_ = build_slice(nondegenerate_barotropic, 40)
        rng = np.random.default_rng(5)
        field = _random_mean_zero(rng, 2, 40, content=8)
        system = build_moment_system(field, ObservationChannel.DENSITY, 8.0, slice_, 8)
        solution = synthesize_control(system)
        record = verify_terminal(field, solution, system, slice_, 40)
        parabolic = {n: record.per_row_residuals[(n, 1, 0)] for n in (28, 32, 36, 40)}
        assert parabolic[40] < parabolic[32] < parabolic[28]
        assert all(np.isfinite(v) for v in record.spillover.values())

    def test_perturbed_control_detected(self, nondegenerate_barotropic):
        slice_ = build_slice(nondegenerate_barotropic, 8)
        rng = np.random.default_rng(6)
        field = _random_mean_zero(rng, 2, 8, content=4)
        system = build_moment_system(field, ObservationChannel.DENSITY, 8.0, slice_, 4)
        solution = synthesize_control(system)
        solution.coefficients_mp = [1.1 * x for x in solution.coefficients_mp]
        record = verify_terminal(field, solution, system, slice_, 8)
        assert record.in_truncation_residual >= 1e-2

    def test_window_must_cover_truncation(self, nondegenerate_barotropic):
        slice_ = build_slice(nondegenerate_barotropic, 8)
        field = SpectralField.single_mode(1, np.array([1.0, 0.0]), 8)
        system = build_moment_system(field, ObservationChannel.DENSITY, 8.0, slice_, 4)
        solution = synthesize_control(system)
        with pytest.raises(DomainError):
            verify_terminal(field, solution, system, slice_, 2)


class TestDualityExactness:
    def test_moment_integrals_match_energy_cross_terms(self, nondegenerate_barotropic):
        # the closed-form pairing used by the Gram equals the bilinear
        # expansion of the observation energy on matching signals
        slice_ = build_slice(nondegenerate_barotropic, 4)
        rng = np.random.default_rng(7)
        coeffs = {n: rng.normal(size=2) + 1j * rng.normal(size=2) for n in slice_.modes}
        expansion = EigenExpansion(dim=2, coefficients=coeffs)
        T = 5.0
        signal = observation_signal(expansion, slice_, ObservationChannel.DENSITY, T)
        from cnslab.kernels import KernelTerm

        row = [KernelTerm(coef=t.coefficient, rate=t.rate, degree=t.poly_degree) for t in signal.terms]
        assert kernel_inner(row, row, T).real == pytest.approx(signal_energy_exact(signal.terms, T), rel=1e-10)

    def test_minimum_norm_property(self, nondegenerate_barotropic):
        # grid oracle: any constraint-preserving perturbation (orthogonal to
        # every kernel) strictly increases the control's L2 norm
        slice_ = build_slice(nondegenerate_barotropic, 4)
        rng = np.random.default_rng(8)
        field = _random_mean_zero(rng, 2, 4, content=2)
        T = 8.0
        system = build_moment_system(field, ObservationChannel.DENSITY, T, slice_, 2)
        solution = synthesize_control(system)

        nodes, weights = np.polynomial.legendre.leggauss(400)
        ts = 0.5 * T * (nodes + 1.0)
        ws = 0.5 * T * weights
        p_vals = solution(ts)
        k_vals = np.array(
            [
                sum(
                    term.coef * (T - ts) ** term.degree * np.exp(term.rate * (T - ts))
                    for term in row.kernel
                )
                for row in system.rows
            ]
        )
        norm_p_sq = float(np.sum(ws * np.abs(p_vals) ** 2))
        assert math.sqrt(norm_p_sq) == pytest.approx(solution.control_norm, rel=1e-6)
        for _ in range(5):
            e_vals = rng.normal(size=ts.size) + 1j * rng.normal(size=ts.size)
            # enforce the constraints: integral h(t) k_l(t) dt = 0 for all l
            A = (k_vals * ws) @ k_vals.conj().T
            b = (k_vals * ws) @ e_vals
            coef = np.linalg.lstsq(A, b, rcond=None)[0]
            h_vals = e_vals - np.tensordot(coef, np.conj(k_vals), axes=1)
            scale_sq = float(np.sum(ws * np.abs(h_vals) ** 2))
            leak = np.max(np.abs((k_vals * ws) @ h_vals))
            assert leak <= 1e-7 * max(math.sqrt(scale_sq), 1.0)
            perturbed = float(np.sum(ws * np.abs(p_vals + h_vals) ** 2))
            # <p, h> = 0 because p lies in the conjugate-kernel span, so the
            # perturbation energy adds in full
            assert perturbed > norm_p_sq + 0.5 * scale_sq

    def test_truncation_zeroing(self, nondegenerate_barotropic):
        slice_ = build_slice(nondegenerate_barotropic, 12)
        rng = np.random.default_rng(9)
        field = _random_mean_zero(rng, 2, 12, content=6)
        system = build_moment_system(field, ObservationChannel.DENSITY, 8.0, slice_, 6)
        solution = synthesize_control(system)
        record = verify_terminal(field, solution, system, slice_, 12)
        assert record.in_truncation_residual <= 1e-6
