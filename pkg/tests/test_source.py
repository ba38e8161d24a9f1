import numpy as np
import pytest

from roughscatter.medium import MediumConfig
from roughscatter.source import (LateralGrid, SourceProfile, TimeGrid, band_energy, evaluate_time,
                                 inverse_scaled_transform, inverse_temporal_transform, inverse_unscaled_transform,
                                 make_default_profile, propagating_mode_check, scaled_transform, temporal_transform,
                                 unscaled_transform)

REF = MediumConfig(1.5, 1.0, 1.0, 2.0, (0.6, 0.0))


@pytest.fixture(scope="module")
def profile():
    return make_default_profile()


def test_temporal_spectrum_matches_closed_form(profile):
    w = profile.time.omegas
    num = profile.temporal_spectrum()
    ref = profile.temporal_envelope_spectrum(w)
    assert np.max(np.abs(num - ref)) / np.max(np.abs(ref)) < 1e-12
    peak = w[np.argmax(np.abs(num))]
    assert abs(peak - 2 * np.pi) <= profile.time.domega


def test_lateral_spectrum_matches_closed_form(profile):
    k1, k2 = profile.grid.kappa_mesh()
    ref = profile.lateral_envelope_spectrum(k1, k2)
    assert np.max(np.abs(profile.lateral_spectrum() - ref)) < 1e-10 * np.max(ref)


def test_temporal_round_trip_and_evaluation(profile):
    f = profile.temporal_samples()
    spec = temporal_transform(f, profile.time)
    assert np.max(np.abs(inverse_temporal_transform(spec, profile.time) - f)) < 1e-12
    s = profile.time.s[::37]
    val = evaluate_time(spec[:, None], profile.time.omegas, profile.time.domega, s)
    assert np.max(np.abs(val - f[::37])) < 1e-12


def test_full_transforms_round_trip():
    time, grid = TimeGrid(32, 0.3), LateralGrid(16, 8, 0.5, 0.7)
    rng = np.random.default_rng(0)
    f = rng.standard_normal((32, 16, 8))
    spec, w, k1, k2 = unscaled_transform(f, time, grid)
    assert w.shape == (32,) and k1.shape == (16,) and k2.shape == (8,)
    assert np.allclose(inverse_unscaled_transform(spec, time, grid), f, atol=1e-12)
    spec = scaled_transform(f, time, grid, 1e-3)[0]
    assert np.allclose(inverse_scaled_transform(spec, time, grid, 1e-3), f, atol=1e-12)


def test_band_energy_two_routes(profile):
    be = band_energy(profile)
    assert np.max(np.abs(be.spectral - be.spatial)) <= 1e-8 * np.max(be.spatial)


def test_zero_source_has_zero_spectrum(profile):
    zero = SourceProfile(profile.omega_c, profile.bandwidth, 1.0, profile.time, profile.grid, amplitude=0.0)
    assert not np.any(zero.temporal_spectrum())


def test_propagating_margin_reference_value():
    ok, margin = propagating_mode_check(None, REF, 1e-3, q_max=2.0)
    assert margin == pytest.approx(1 - (np.sqrt(1e-3) * 3 + 0.9), rel=1e-12)
    assert margin == pytest.approx(0.00513, abs=5e-6)
    assert ok
    assert not propagating_mode_check(None, REF, 1e-3, q_max=3.0)[0]


def test_propagating_check_is_monotone(profile):
    margins = [propagating_mode_check(profile, REF, e)[1] for e in (1e-2, 1e-3, 1e-4)]
    assert margins == sorted(margins)


def test_invalid_profiles_rejected():
    with pytest.raises(ValueError):
        make_default_profile(omega_c=1.0, bandwidth=0.5)
    with pytest.raises(ValueError, match="under-resolves"):
        SourceProfile(2 * np.pi, 1 / 3, 1.0, TimeGrid(64, 0.4), LateralGrid.square(16, 0.5))
