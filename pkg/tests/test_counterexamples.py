import math

import numpy as np
import pytest

from cnslab.counterexamples import (
    BumpSpec,
    bump_coefficients,
    degenerate_uc_witness,
    pn_filter,
    pn_value,
    regularity_gap_witness,
    small_time_witness,
)
from cnslab.errors import DomainError, NotDegenerate, SupportError
from cnslab.evolution import ObservationChannel
from cnslab.fields import SpectralField
from cnslab.spectrum import build_slice

TWO_PI = 2.0 * math.pi


class TestPnFilter:
    def test_small_values(self):
        assert pn_value(1, 2.0) == 3.0
        assert pn_value(1, -2.0) == 3.0
        assert pn_value(2, 3.0) == 40.0

    def test_annihilation_exact(self):
        rng = np.random.default_rng(0)
        c = rng.normal(size=(17, 1)) + 1j * rng.normal(size=(17, 1))
        c[8] = 0.0
        field = SpectralField(dim=1, N=8, coeffs=c)
        out = pn_filter(field, 3)
        for n in range(-3, 4):
            assert np.all(out.coeff(n) == 0.0)
        for n in (4, -5, 7):
            assert np.all(out.coeff(n) == c[n + 8] * pn_value(3, float(n)))

    def test_requires_mean_zero(self):
        c = np.zeros((5, 1), dtype=complex)
        c[2] = 1.0
        field = SpectralField(dim=1, N=2, coeffs=c, mean_zero=False)
        with pytest.raises(DomainError):
            pn_filter(field, 1)


class TestBump:
    def test_support_and_smooth_tail(self):
        spec = BumpSpec(x_left=3.2, x_right=5.8)
        coeffs, tail = bump_coefficients(spec, cutoff=96)
        assert tail <= 1e-8
        # the stored series is mean-removed, so off the support window the
        # reconstruction sits at the constant removed mean, flat to spectral
        # accuracy
        field = SpectralField(dim=1, N=96, coeffs=coeffs.reshape(-1, 1))
        xs = np.linspace(0.2, 2.4, 40)
        vals = field.sample(xs)[:, 0]
        peak = np.max(np.abs(field.sample(np.linspace(3.3, 5.7, 100))[:, 0]))
        assert np.max(np.abs(vals - vals[0])) <= 1e-5 * peak
        assert np.max(np.abs(vals.imag)) <= 1e-10 * peak

    def test_seeded_windows_shift_center_only(self):
        base = BumpSpec(x_left=3.0, x_right=5.5, seed=None)
        jittered = BumpSpec(x_left=3.0, x_right=5.5, seed=3, jitter=0.1)
        l0, r0 = base.realized_window()
        l1, r1 = jittered.realized_window()
        assert (r1 - l1) == pytest.approx(r0 - l0, rel=1e-12)
        assert l1 != l0


class TestSmallTimeWitness:
    def test_quotient_decay_slope(self, nondegenerate_barotropic):
        report = small_time_witness(
            nondegenerate_barotropic, 3.0, [8, 12, 16, 24], BumpSpec(x_left=3.2, x_right=5.8)
        )
        assert report.slope <= -1.7
        quotients = [report.table[N][0] for N in (8, 12, 16, 24)]
        assert quotients[-1] < quotients[0]

    def test_transport_gap_shrinks(self, nondegenerate_barotropic):
        report = small_time_witness(
            nondegenerate_barotropic, 3.0, [8, 16], BumpSpec(x_left=3.2, x_right=5.8)
        )
        assert report.transport_gap[16] < report.transport_gap[8]

    def test_support_error(self, nondegenerate_barotropic):
        with pytest.raises(SupportError):
            small_time_witness(
                nondegenerate_barotropic, 3.0, [4], BumpSpec(x_left=0.5, x_right=2.0)
            )

    def test_requires_small_time(self, nondegenerate_barotropic):
        with pytest.raises(DomainError):
            small_time_witness(
                nondegenerate_barotropic, 8.0, [4], BumpSpec(x_left=3.2, x_right=5.8)
            )

    def test_slope_stable_across_seeds(self, nondegenerate_barotropic):
        slopes = []
        for seed in (1, 2, 3):
            spec = BumpSpec(x_left=3.3, x_right=5.7, seed=seed, jitter=0.08)
            slopes.append(
                small_time_witness(nondegenerate_barotropic, 3.0, [8, 12, 16, 24], spec).slope
            )
        assert max(slopes) - min(slopes) < 0.2


class TestDegenerateWitness:
    def test_barotropic_coincidence(self, uc_failing_barotropic):
        slice_ = build_slice(uc_failing_barotropic, 3)
        record = degenerate_uc_witness(uc_failing_barotropic, ObservationChannel.DENSITY, slice_)
        assert record.max_observation <= 1e-10 * record.observation_scale
        assert record.min_state_norm > 1e-3 * (abs(record.C) + abs(record.D))

    def test_nonbarotropic_shared_eigenvalue(self, shared_eigenvalue_nonbarotropic):
        slice_ = build_slice(shared_eigenvalue_nonbarotropic, 2)
        record = degenerate_uc_witness(shared_eigenvalue_nonbarotropic, ObservationChannel.DENSITY, slice_)
        assert set(record.modes) == {-1, 1}
        assert record.value == pytest.approx(-1.0, abs=1e-10)
        assert record.max_observation <= 1e-9 * record.observation_scale
        assert record.min_state_norm > 0.0

    def test_not_degenerate(self, nondegenerate_barotropic):
        slice_ = build_slice(nondegenerate_barotropic, 6)
        with pytest.raises(NotDegenerate):
            degenerate_uc_witness(nondegenerate_barotropic, ObservationChannel.DENSITY, slice_)


class TestRegularityGap:
    def test_velocity_slopes(self, nondegenerate_barotropic):
        for s, target in ((0.0, -2.0), (0.5, -1.0)):
            record = regularity_gap_witness(
                nondegenerate_barotropic, ObservationChannel.VELOCITY, s, [4, 8, 16, 32]
            )
            assert abs(record.slope - target) <= 0.3
            assert max(record.scaled_table.values()) / min(record.scaled_table.values()) < 3.0

    def test_temperature_channel_three_field(self, generic_nonbarotropic):
        # the leading terms of the third eigenvector component cancel
        # (lambda0 * omega_bar = R * theta_bar), so the temperature
        # observation of hyperbolic modes decays like 1/n^2 and the gap
        # steepens to -(4 - 2s)
        record = regularity_gap_witness(
            generic_nonbarotropic, ObservationChannel.TEMPERATURE, 0.0, [4, 8, 16, 32]
        )
        assert abs(record.slope + 4.0) <= 0.4

    def test_order_one_rejected(self, nondegenerate_barotropic):
        with pytest.raises(DomainError):
            regularity_gap_witness(nondegenerate_barotropic, ObservationChannel.VELOCITY, 1.0, [4, 8])

    def test_density_channel_rejected(self, nondegenerate_barotropic):
        with pytest.raises(DomainError):
            regularity_gap_witness(nondegenerate_barotropic, ObservationChannel.DENSITY, 0.0, [4, 8])
