"""Two-layer medium: slownesses, paraxial matrices and ray geometry.

All quantities are closed forms in double precision. Media are indexed
``j = 0`` (upper layer, holds the source) and ``j = 1`` (lower layer).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MATRIX_RTOL = 1e-12


class DomainError(ValueError):
    """Raised when an input leaves the propagating (pre-critical) regime."""


@dataclass(frozen=True)
class MediumConfig:
    """Layered medium with a source at depth 0.

    Parameters
    ----------
    c0, c1 : float
        Wave speeds above and below the interface.
    z_int : float
        Depth of the mean interface below the source.
    z_tr : float
        Depth of the observation plane for the transmitted wave.
    k0 : tuple of float
        Incident lateral slowness vector.
    allow_slower_lower : bool
        Accept ``c1 > c0`` when ``|k0| < 1/c1``. This configuration is
        outside the supported range and is only meant for experiments.
    """

    c0: float
    c1: float
    z_int: float
    z_tr: float
    k0: tuple = (0.0, 0.0)
    allow_slower_lower: bool = False

    def __post_init__(self):
        k0 = tuple(float(v) for v in np.asarray(self.k0, dtype=float).ravel())
        if len(k0) != 2:
            raise DomainError("k0 must be a 2-vector")
        object.__setattr__(self, "k0", k0)
        if not (self.c0 > 0 and self.c1 > 0):
            raise DomainError("invariant violated: c0 > 0 and c1 > 0")
        if self.c1 > self.c0 and not self.allow_slower_lower:
            raise DomainError("invariant violated: c1 <= c0 (faster lower medium is unsupported)")
        if not (0 < self.z_int < self.z_tr):
            raise DomainError("invariant violated: 0 < z_int < z_tr")
        kn = np.hypot(*k0)
        if self.c0 * kn >= 1:
            raise DomainError("invariant violated: |k0| < 1/c0 (critical or evanescent incidence)")
        if self.c1 * kn >= 1:
            raise DomainError("invariant violated: |k0| < 1/c1 (transmitted wave is evanescent)")

    @property
    def k0_vec(self) -> np.ndarray:
        return np.array(self.k0)

    def speed(self, j: int) -> float:
        if j not in (0, 1):
            raise ValueError("medium index must be 0 or 1")
        return self.c0 if j == 0 else self.c1


@dataclass(frozen=True)
class ScaleRegime:
    """Scale parameter ``epsilon`` and correlation exponent ``gamma``.

    The beam width is ``sqrt(eps)``, the roughness amplitude ``eps`` and the
    correlation length ``eps**gamma``.
    """

    epsilon: float
    gamma: float

    def __post_init__(self):
        if not (0 < self.epsilon < 1):
            raise DomainError("invariant violated: epsilon in (0, 1)")
        if not (0.5 <= self.gamma <= 1):
            raise DomainError("invariant violated: gamma in [1/2, 1]")

    @property
    def beam_width(self) -> float:
        return np.sqrt(self.epsilon)

    @property
    def amplitude(self) -> float:
        return self.epsilon

    @property
    def corr_length(self) -> float:
        return self.epsilon ** self.gamma

    @property
    def roughness_ratio(self) -> float:
        """Wavelength over correlation length, ``eps**(1 - gamma)``."""
        return self.epsilon ** (1 - self.gamma)

    @property
    def lateral_ratio(self) -> float:
        """Correlation length in beam-width units, ``eps**(gamma - 1/2)``."""
        return self.epsilon ** (self.gamma - 0.5)


@dataclass(frozen=True)
class ParaxialMatrix:
    """Symmetric 2x2 matrix of the lateral paraxial operator in medium ``j``."""

    matrix: np.ndarray = field(repr=False)
    j: int = 0

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def vertical_slowness(cfg: MediumConfig, j: int) -> float:
    """Vertical slowness ``sqrt(1 - c_j^2 |k0|^2) / c_j`` of the incident direction."""
    c = cfg.speed(j)
    arg = 1.0 - c * c * float(np.dot(cfg.k0_vec, cfg.k0_vec))
    if arg <= 0:
        raise DomainError(f"critical incidence in medium {j}: c_j|k0| >= 1")
    return np.sqrt(arg) / c


def vertical_slowness_eps(cfg: MediumConfig, j: int, k, eps: float):
    """Vertical slowness ``sqrt(1 - eps c_j^2 |k|^2) / c_j`` of lateral mode ``k``.

    ``k`` may be an array with trailing dimension 2.
    """
    c = cfg.speed(j)
    k = np.asarray(k, dtype=float)
    arg = 1.0 - eps * c * c * np.sum(k * k, axis=-1)
    if np.any(arg <= 0):
        raise DomainError(f"evanescent mode in medium {j}")
    return np.sqrt(arg) / c


def _slowness_pieces(cfg, j, q, eps):
    c = cfg.speed(j)
    s = vertical_slowness(cfg, j)
    q = np.asarray(q, dtype=float)
    kq = q @ cfg.k0_vec
    qq = np.sum(q * q, axis=-1)
    se = np.sqrt(eps)
    # 1 - eps c^2 |k|^2 = c^2 s^2 (1 + x)
    x = -(2 * se * kq + eps * qq) / (s * s)
    if np.any(1 + x <= 0):
        raise DomainError(f"evanescent mode in medium {j}")
    return c, s, kq, qq, se, x


def expansion_terms(cfg: MediumConfig, j: int, q, eps: float):
    """Three-term expansion of ``s_j^eps(q + k0/sqrt(eps)) / eps``.

    Returns the sum ``s_j/eps - k0.q/(sqrt(eps) s_j) - c_j q^T A_j q / 2``.
    """
    c = cfg.speed(j)
    s = vertical_slowness(cfg, j)
    q = np.asarray(q, dtype=float)
    A = paraxial_matrix(cfg, j).matrix
    quad = np.einsum("...i,ij,...j->...", q, A, q)
    return s / eps - (q @ cfg.k0_vec) / (np.sqrt(eps) * s) - 0.5 * c * quad


def expansion_remainder(cfg: MediumConfig, j: int, q, eps: float):
    """Remainder of the three-term slowness expansion, computed without cancellation.

    With ``y = sqrt(1+x) - 1`` the exact value is
    ``(s/eps) y^2 (x + 2y)/8`` plus the explicit polynomial tail of the
    quadratic term.
    """
    c, s, kq, qq, se, x = _slowness_pieces(cfg, j, q, eps)
    y = x / (1 + np.sqrt(1 + x))
    cubic = (s / eps) * y * y * (x + 2 * y) / 8
    tail = -se * kq * qq / (2 * s ** 3) - eps * qq * qq / (8 * s ** 3)
    return cubic + tail


def paraxial_matrix_forms(cfg: MediumConfig, j: int):
    """Both algebraic forms of ``A_j`` evaluated independently."""
    c = cfg.speed(j)
    k1, k2 = cfg.k0
    kk = k1 * k1 + k2 * k2
    pre = (1 - c * c * kk) ** -1.5
    form1 = pre * np.array([[1 - c * c * k2 * k2, c * c * k1 * k2],
                            [c * c * k1 * k2, 1 - c * c * k1 * k1]])
    s = vertical_slowness(cfg, j)
    kperp = np.array([-k2, k1])
    form2 = (np.eye(2) - c * c * np.outer(kperp, kperp)) / (c ** 3 * s ** 3)
    return form1, form2


def _rel_frob(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b))


def paraxial_matrix(cfg: MediumConfig, j: int) -> ParaxialMatrix:
    """Paraxial matrix ``A_j``; both closed forms must agree to 1e-12."""
    form1, form2 = paraxial_matrix_forms(cfg, j)
    err = _rel_frob(form1, form2)
    if err > MATRIX_RTOL:
        raise ArithmeticError(f"paraxial matrix forms disagree (rel {err:.3e})")
    return ParaxialMatrix(form2, j)


def paraxial_matrix_inverse(cfg: MediumConfig, j: int) -> ParaxialMatrix:
    """Closed-form inverse ``c_j s_j (I - c_j^2 k0 k0^T)``."""
    c = cfg.speed(j)
    s = vertical_slowness(cfg, j)
    k = cfg.k0_vec
    inv = c * s * (np.eye(2) - c * c * np.outer(k, k))
    A = paraxial_matrix(cfg, j).matrix
    err = np.linalg.norm(A @ inv - np.eye(2))
    if err > MATRIX_RTOL * np.linalg.cond(A):
        raise ArithmeticError(f"A_j A_j^-1 deviates from identity ({err:.3e})")
    return ParaxialMatrix(inv, j)


def reflection_transmission_coefficients(cfg: MediumConfig):
    """Flat-interface coefficients ``(R, T)`` with ``R^2 + T^2 = 1``."""
    s0 = vertical_slowness(cfg, 0)
    s1 = vertical_slowness(cfg, 1)
    R = (s0 - s1) / (s0 + s1)
    T = 2 * np.sqrt(s0 * s1) / (s0 + s1)
    return R, T


def flat_mode_scattering(cfg: MediumConfig, k, eps: float):
    """Transmission and reflection ratios ``(1/tau_+, tau_-/tau_+)`` of mode ``k``.

    ``tau_pm = (sqrt(s0/s1) +- sqrt(s1/s0))/2`` with the finite-``eps``
    slownesses. At ``k = k0/sqrt(eps)`` the ratios equal ``(T, R)`` for any
    ``eps``. The field-level transmission factor is ``tr * sqrt(s0/s1)``.
    """
    s0 = vertical_slowness_eps(cfg, 0, k, eps)
    s1 = vertical_slowness_eps(cfg, 1, k, eps)
    r = np.sqrt(s0 / s1)
    tau_p = 0.5 * (r + 1 / r)
    tau_m = 0.5 * (r - 1 / r)
    return 1 / tau_p, tau_m / tau_p


@dataclass(frozen=True)
class ObservationGeometry:
    """Classical ray geometry of the incident, reflected and transmitted beams."""

    x_int: np.ndarray
    x_obs_ref: np.ndarray
    t_obs_ref: float
    x_obs_tr: np.ndarray
    t_obs_tr: float
    theta_inc: float
    theta_ref0: float
    theta_tr0: float


def observation_geometry(cfg: MediumConfig) -> ObservationGeometry:
    """Impact point, specular observation points/times and Snell angles."""
    s0 = vertical_slowness(cfg, 0)
    s1 = vertical_slowness(cfg, 1)
    k = cfg.k0_vec
    kn = float(np.hypot(*k))
    dz = cfg.z_tr - cfg.z_int
    x_int = k * cfg.z_int / s0
    theta_inc = float(np.arctan2(kn, s0))
    theta_tr0 = float(np.arctan2(kn, s1))
    return ObservationGeometry(
        x_int=x_int,
        x_obs_ref=2 * x_int,
        t_obs_ref=2 * cfg.z_int / (cfg.c0 ** 2 * s0),
        x_obs_tr=x_int + k * dz / s1,
        t_obs_tr=cfg.z_int / (cfg.c0 ** 2 * s0) + dz / (cfg.c1 ** 2 * s1),
        theta_inc=theta_inc,
        theta_ref0=theta_inc,
        theta_tr0=theta_tr0,
    )
