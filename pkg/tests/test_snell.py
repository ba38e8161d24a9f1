import numpy as np
import pytest

from roughscatter.medium import MediumConfig, observation_geometry
from roughscatter.snell import (SnellQuery, generalized_angle, generalized_angle_sine, generalized_angle_tangent,
                                grating_equation, grating_order, incidence_config, normal_incidence_angle,
                                small_roughness_expansion, xi_factor)

REF = MediumConfig(1.5, 1.0, 1.0, 2.0, (0.6, 0.0))


def test_xi_factor():
    assert xi_factor(SnellQuery("reflection", (0, 0), 0.1, REF)) == pytest.approx(0.27778, abs=5e-6)


def test_reference_angles():
    q = SnellQuery("reflection", (0.5, 0), 0.1, REF)
    # arbitrary-precision evaluation of the sine form
    assert np.degrees(generalized_angle(q)) == pytest.approx(71.393528546068846, abs=1e-9)
    assert np.degrees(generalized_angle(q)) == pytest.approx(71.40, abs=1e-2)
    assert abs(generalized_angle_sine(q) - generalized_angle_tangent(q)) <= 1e-12
    cfg = incidence_config(np.pi / 4, 1.5, 1.0)
    theta = generalized_angle(SnellQuery("transmission", (0, 0), 1.0, cfg))
    assert np.degrees(theta) == pytest.approx(28.13, abs=5e-3)


def test_zero_slowness_gives_classical_angles():
    geo = observation_geometry(REF)
    assert generalized_angle(SnellQuery("reflection", (0, 0), 0.3, REF)) == geo.theta_inc
    assert generalized_angle(SnellQuery("transmission", (0, 0), 0.3, REF)) == pytest.approx(geo.theta_tr0, abs=1e-15)


def test_normal_incidence():
    cfg = MediumConfig(1.5, 1.0, 1.0, 2.0)
    assert np.degrees(normal_incidence_angle("reflection", cfg, (2, 0), 0.1)) == pytest.approx(16.70, abs=5e-3)
    assert normal_incidence_angle("reflection", cfg, (0, 0), 0.1) == 0
    # limit of the oblique law as k0 shrinks, with p along k0 and across it
    for p in ((0.4, 0.0), (0.0, 0.4)):
        tiny = MediumConfig(1.5, 1.0, 1.0, 2.0, (1e-7, 0.0))
        a = generalized_angle(SnellQuery("reflection", p, 0.1, tiny))
        assert a == pytest.approx(normal_incidence_angle("reflection", cfg, p, 0.1), abs=1e-6)


def test_large_slowness_stays_below_grazing():
    for side in ("reflection", "transmission"):
        theta = generalized_angle(SnellQuery(side, (40.0, 0), 1.0, REF))
        assert 0 < theta < np.pi / 2


def test_monotone_along_incidence():
    th = [generalized_angle(SnellQuery("reflection", (r, 0), 0.1, REF)) for r in np.linspace(0, 3, 31)]
    assert np.all(np.diff(th) > 0)


def test_small_roughness_expansion_is_second_order():
    rng = np.random.default_rng(4)
    for _ in range(20):
        p = rng.uniform(-1, 1, 2)
        ratios = [small_roughness_expansion(SnellQuery("reflection", p, r, REF)).scaled_error
                  for r in 0.02 * 2.0 ** -np.arange(4)]
        assert max(ratios) / min(ratios) <= 4


def test_expansion_perpendicular_slowness_has_no_first_order_term():
    rep = small_roughness_expansion(SnellQuery("reflection", (0, 0.5), 0.01, REF))
    assert rep.theta_approx == pytest.approx(observation_geometry(REF).theta_inc)


def test_grating_equation():
    assert grating_equation(0.5, 2.0, np.radians(30), 0) == pytest.approx(np.radians(30))
    assert np.degrees(grating_equation(0.5, 2.0, np.radians(30), 1)) == pytest.approx(48.59, abs=5e-3)


def test_grating_limit_of_generalized_law():
    r = 1e-4
    p = np.array([0.3, 0.1])
    theta = generalized_angle(SnellQuery("reflection", p, r, REF))
    grating = grating_equation(r, 1.0, observation_geometry(REF).theta_inc, grating_order(REF, p))
    assert abs(theta - grating) <= 10 * r ** 2


def test_query_validation():
    with pytest.raises(ValueError):
        SnellQuery("reflection", (np.nan, 0), 0.1, REF)
    with pytest.raises(ValueError):
        SnellQuery("reflection", (0, 0), 1.5, REF)
