import mpmath as mp
import numpy as np
import pytest

from roughscatter.medium import (DomainError, MediumConfig, ScaleRegime, expansion_remainder, expansion_terms,
                                 flat_mode_scattering, observation_geometry, paraxial_matrix, paraxial_matrix_forms,
                                 paraxial_matrix_inverse, reflection_transmission_coefficients, vertical_slowness,
                                 vertical_slowness_eps)

REF = MediumConfig(1.5, 1.0, 1.0, 2.0, (0.6, 0.0))
mp.mp.dps = 50


def slowness_mp(c, k, eps=1):
    c = mp.mpf(c)
    return mp.sqrt(1 - mp.mpf(eps) * c ** 2 * sum(mp.mpf(v) ** 2 for v in k)) / c


def test_vertical_slowness_reference_values():
    assert vertical_slowness(MediumConfig(1, 1, 1, 2), 0) == 1.0
    assert vertical_slowness(REF, 0) == pytest.approx(float(slowness_mp(1.5, (0.6, 0))), rel=1e-15)
    assert vertical_slowness(REF, 0) == pytest.approx(0.290593, abs=5e-7)
    assert vertical_slowness(REF, 1) == pytest.approx(0.8, rel=1e-15)


def test_finite_eps_slowness_limits():
    assert vertical_slowness_eps(REF, 0, (0, 0), 1e-3) == pytest.approx(1 / 1.5)
    assert vertical_slowness_eps(REF, 1, (3.0, 1.0), 1e-14) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(DomainError):
        vertical_slowness_eps(REF, 0, (30.0, 0), 1e-3)


def test_expansion_remainder_matches_high_precision_difference():
    q = np.array([1.0, 0.0])
    for eps in (1e-3, 1e-4, 1e-5):
        k = [mp.mpf(1) + mp.mpf(0.6) / mp.sqrt(mp.mpf(eps)), mp.mpf(0)]
        exact = slowness_mp(1.5, k, eps) / mp.mpf(eps)
        s0 = slowness_mp(1.5, (0.6, 0))
        A = mp.mpf(1) / (mp.mpf(1.5) ** 3 * s0 ** 3)
        three = s0 / eps - mp.mpf(0.6) / (mp.sqrt(mp.mpf(eps)) * s0) - mp.mpf(1.5) * A / 2
        assert expansion_remainder(REF, 0, q, eps) == pytest.approx(float(exact - three), rel=1e-10)
        # the three-term sum itself is the same algebra as the oracle
        assert expansion_terms(REF, 0, q, eps) == pytest.approx(float(three), rel=1e-14)


def test_paraxial_matrix_reference_and_forms():
    a, b = paraxial_matrix_forms(REF, 0)
    assert np.allclose(a, b, rtol=1e-13, atol=0)
    A = paraxial_matrix(REF, 0).matrix
    assert np.allclose(np.diag(A), [12.07451231, 2.29415734], rtol=1e-9)
    assert A[0, 1] == 0
    assert np.allclose(np.diag(paraxial_matrix_inverse(REF, 0).matrix), [0.08281908, 0.43588989], rtol=1e-8)
    assert np.allclose(paraxial_matrix(MediumConfig(1, 1, 1, 2), 0).matrix, np.eye(2))


def test_paraxial_inverse_random_oblique():
    rng = np.random.default_rng(3)
    for _ in range(100):
        c0 = rng.uniform(0.5, 2)
        k = rng.uniform(-0.6, 0.6, 2) / c0
        cfg = MediumConfig(c0, c0 * rng.uniform(0.2, 1), 1, 2, tuple(k))
        for j in (0, 1):
            prod = paraxial_matrix(cfg, j).matrix @ paraxial_matrix_inverse(cfg, j).matrix
            assert np.max(np.abs(prod - np.eye(2))) < 1e-12


def test_coefficients():
    R, T = reflection_transmission_coefficients(REF)
    assert R == pytest.approx(-0.4670914028401905, rel=1e-14)
    assert T == pytest.approx(0.8842090371585118, rel=1e-14)
    assert R * R + T * T == pytest.approx(1, abs=1e-15)
    R, T = reflection_transmission_coefficients(MediumConfig(1.2, 1.2, 1, 2, (0.3, 0.1)))
    assert (R, T) == (0.0, 1.0)


def test_mode_scattering_limit_and_energy():
    R, T = reflection_transmission_coefficients(REF)
    eps = 1e-3
    tr, ref = flat_mode_scattering(REF, np.array(REF.k0) / np.sqrt(eps), eps)
    assert ref == pytest.approx(R, rel=1e-13)
    assert tr == pytest.approx(T, rel=1e-13)
    rng = np.random.default_rng(0)
    k = rng.uniform(-3, 3, (200, 2))
    tr, ref = flat_mode_scattering(REF, k, 1e-2)
    assert np.max(np.abs(tr ** 2 + ref ** 2 - 1)) < 1e-14


def test_observation_geometry():
    g = observation_geometry(REF)
    assert np.allclose(g.x_obs_ref, [4.1295, 0], atol=5e-5)
    assert g.t_obs_ref == pytest.approx(3.0589, abs=5e-5)
    assert np.degrees(g.theta_inc) == pytest.approx(np.degrees(np.arcsin(0.9)), abs=1e-12)
    assert np.degrees(g.theta_tr0) == pytest.approx(36.86989765, abs=1e-7)
    g0 = observation_geometry(MediumConfig(1.5, 1, 1, 2))
    assert g0.theta_inc == g0.theta_tr0 == 0
    assert g0.t_obs_ref == pytest.approx(2 / 1.5)


@pytest.mark.parametrize("kwargs", [dict(c0=1, c1=2, z_int=1, z_tr=2), dict(c0=1, c1=1, z_int=2, z_tr=1),
                                    dict(c0=1.5, c1=1, z_int=1, z_tr=2, k0=(0.7, 0)),
                                    dict(c0=-1, c1=1, z_int=1, z_tr=2)])
def test_invalid_configs_rejected(kwargs):
    with pytest.raises(DomainError, match="invariant"):
        MediumConfig(**kwargs)


def test_scale_regime():
    r = ScaleRegime(1e-3, 0.75)
    assert r.lateral_ratio == pytest.approx(1e-3 ** 0.25)
    assert r.roughness_ratio == pytest.approx(1e-3 ** 0.25)
    with pytest.raises(DomainError):
        ScaleRegime(1e-3, 0.4)
