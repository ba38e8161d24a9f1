"""Classical and generalized Snell laws for speckle scattered by a rough interface.

A speckle component scattered with lateral slowness ``p`` leaves the
interface at the angle ``theta(p)`` obtained by stretching the tangent of
the classical angle, ``tan(theta) = tan(theta0) * sqrt(Xi)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .medium import DomainError, MediumConfig, observation_geometry


@dataclass(frozen=True)
class SnellQuery:
    """Scattering direction query.

    Parameters
    ----------
    side : {'reflection', 'transmission'}
    p : array_like
        Scattering slowness 2-vector.
    roughness_ratio : float
        ``eps**(1 - gamma)`` in (0, 1].
    cfg : MediumConfig
    """

    side: str
    p: tuple
    roughness_ratio: float
    cfg: MediumConfig

    def __post_init__(self):
        if self.side not in ("reflection", "transmission"):
            raise ValueError("side must be 'reflection' or 'transmission'")
        p = tuple(float(v) for v in np.asarray(self.p, dtype=float).ravel())
        if len(p) != 2 or not np.all(np.isfinite(p)):
            raise ValueError("p must be a finite 2-vector")
        object.__setattr__(self, "p", p)
        if not (0 < self.roughness_ratio <= 1):
            raise ValueError("roughness ratio must lie in (0, 1]")


def _angles(q: SnellQuery):
    geo = observation_geometry(q.cfg)
    theta0 = geo.theta_inc if q.side == "reflection" else geo.theta_tr0
    return geo.theta_inc, theta0


def xi_factor(q: SnellQuery) -> float:
    """Stretch factor ``eps**(1-gamma) c0^2 / sin^2(theta_inc)``.

    The incidence angle enters for both sides.
    """
    theta_inc, _ = _angles(q)
    if np.hypot(*q.cfg.k0) == 0:
        raise DomainError("normal incidence: use normal_incidence_angle")
    return q.roughness_ratio * q.cfg.c0 ** 2 / np.sin(theta_inc) ** 2


def stretch_factor(q: SnellQuery) -> float:
    """Tangent stretch ``Xi`` so that ``tan(theta) = tan(theta0) sqrt(Xi)``."""
    theta_inc, theta0 = _angles(q)
    xi = xi_factor(q)
    k = np.array(q.cfg.k0)
    p = np.array(q.p)
    along = p @ k
    across = p @ np.array([-k[1], k[0]])
    return (1 + xi * along / np.cos(theta0) ** 2) ** 2 + (xi * across) ** 2


def generalized_angle_sine(q: SnellQuery) -> float:
    """Scattered angle from the sine form.

    Raises
    ------
    DomainError
        If the sine reaches 1; the value is reported, never clamped.
    """
    _, theta0 = _angles(q)
    big = stretch_factor(q)
    s0 = np.sin(theta0)
    sine = s0 * np.sqrt(big / (1 + s0 * s0 * (big - 1)))
    if sine >= 1:
        raise DomainError(f"scattered direction is not propagating (sin = {sine:.6g})")
    return float(np.arcsin(sine))


def generalized_angle_tangent(q: SnellQuery) -> float:
    """Scattered angle from the tangent form ``tan(theta0) sqrt(Xi)``."""
    _, theta0 = _angles(q)
    return float(np.arctan(np.tan(theta0) * np.sqrt(stretch_factor(q))))


def generalized_angle(q: SnellQuery, atol: float = 1e-10) -> float:
    """Generalized Snell angle in radians, cross-checked between both forms."""
    a = generalized_angle_sine(q)
    b = generalized_angle_tangent(q)
    if abs(a - b) > atol:
        raise ArithmeticError(f"sine and tangent forms disagree by {abs(a - b):.3e} rad")
    return a


def normal_incidence_angle(side: str, cfg: MediumConfig, p, roughness_ratio: float) -> float:
    """Scattered angle ``arctan(eps**(1-gamma) c_j |p|)`` at normal incidence."""
    if np.hypot(*cfg.k0) != 0:
        raise DomainError("normal_incidence_angle requires k0 = 0")
    c = cfg.c0 if side == "reflection" else cfg.c1
    return float(np.arctan(roughness_ratio * c * np.hypot(*np.asarray(p, dtype=float))))


@dataclass(frozen=True)
class ExpansionReport:
    """First-order angle approximation and its error."""

    theta_exact: float
    theta_approx: float
    theta_approx_tangent: float
    error: float
    scaled_error: float


def small_roughness_expansion(q: SnellQuery) -> ExpansionReport:
    """First-order expansion of the generalized angle in ``eps**(1-gamma)``.

    The angle itself moves as ``theta0 + r c_j (p.k0_hat) / cos(theta0)``;
    the tangent moves by ``r c_j (p.k0_hat) / cos^3(theta0)``. Both are
    reported, the angle form is the one whose error is second order.
    ``scaled_error`` is ``|theta - theta_approx| / (r^2 |p|^2)``.
    """
    _, theta0 = _angles(q)
    k = np.array(q.cfg.k0)
    kn = np.hypot(*k)
    if kn == 0:
        raise DomainError("expansion requires oblique incidence")
    c = q.cfg.c0 if q.side == "reflection" else q.cfg.c1
    r = q.roughness_ratio
    along = np.array(q.p) @ (k / kn)
    exact = generalized_angle(q)
    approx = theta0 + r * c * along / np.cos(theta0)
    approx_tan = np.arctan(np.tan(theta0) + r * c * along / np.cos(theta0) ** 3)
    err = abs(exact - approx)
    pp = float(np.dot(q.p, q.p))
    scaled = err / (r * r * pp) if pp > 0 else 0.0
    return ExpansionReport(exact, float(approx), float(approx_tan), float(err), float(scaled))


def grating_equation(wavelength: float, period: float, theta_inc: float, m: float) -> float:
    """Diffraction angle ``arcsin(sin(theta_inc) + m wavelength / period)``."""
    sine = np.sin(theta_inc) + m * wavelength / period
    if abs(sine) > 1:
        raise DomainError(f"evanescent diffraction order (sin = {sine:.6g})")
    return float(np.arcsin(sine))


def grating_order(cfg: MediumConfig, p) -> float:
    """Equivalent grating order ``c0 p.k0_hat`` of scattering slowness ``p``.

    With period equal to the correlation length, ``wavelength / period``
    is the roughness ratio and the generalized law reduces to the grating
    equation at first order.
    """
    k = np.array(cfg.k0)
    return float(cfg.c0 * (np.asarray(p, dtype=float) @ (k / np.hypot(*k))))


def incidence_config(theta_inc: float, c0: float, c1: float, z_int: float = 1.0, z_tr: float = 2.0) -> MediumConfig:
    """Medium with incidence angle ``theta_inc`` along the first lateral axis."""
    return MediumConfig(c0, c1, z_int, z_tr, (np.sin(theta_inc) / c0, 0.0))


__all__ = [
    "SnellQuery", "xi_factor", "stretch_factor", "generalized_angle", "generalized_angle_sine",
    "generalized_angle_tangent", "normal_incidence_angle", "small_roughness_expansion",
    "ExpansionReport", "grating_equation", "grating_order", "incidence_config",
]
