"""Specular predictions, speckle extraction and speckle statistics.

Closed forms assume the Gaussian source of :mod:`roughscatter.source`:
after paraxial propagation a Gaussian lateral envelope stays Gaussian,
``r^2 / sqrt(det M) exp(-Y^T M^-1 Y / 2)`` with ``M = r^2 I + i B / w``,
where ``B`` sums ``z_j c_j A_j`` over the legs travelled.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .interface import InterfaceModel, InterfaceRealization, ScatteringDistribution
from .medium import (MediumConfig, ScaleRegime, paraxial_matrix, paraxial_matrix_inverse,
                     reflection_transmission_coefficients, vertical_slowness)
from .solver import ExtrapolationError, WaveField, specular_frame
from .source import LateralGrid, SourceProfile, band_energy, evaluate_time

# ---------------------------------------------------------------------------
# Closed-form specular wavefronts


def _side_params(side: str, cfg: MediumConfig):
    R, T = reflection_transmission_coefficients(cfg)
    s0, s1 = vertical_slowness(cfg, 0), vertical_slowness(cfg, 1)
    A0 = paraxial_matrix(cfg, 0).matrix
    if side == "reflection":
        return R / 2, 2 * s0, 2 * cfg.z_int * cfg.c0 * A0
    if side == "transmission":
        A1 = paraxial_matrix(cfg, 1).matrix
        dz = cfg.z_tr - cfg.z_int
        return T / 2 * np.sqrt(s0 / s1), s0 - s1, cfg.z_int * cfg.c0 * A0 + dz * cfg.c1 * A1
    raise ValueError("side must be 'reflection' or 'transmission'")


def gaussian_beam(r: float, B: np.ndarray, w, y1, y2) -> np.ndarray:
    """Propagated Gaussian envelope ``r^2 / sqrt(det M) exp(-Y^T M^-1 Y / 2)``.

    ``w`` has shape ``(n,)``; output has shape ``(n,) + broadcast(y1, y2)``.
    The square root of ``det M`` is the product of principal roots of
    its eigenvalues, which is the continuous branch from ``M = r^2 I``.
    """
    w = np.atleast_1d(np.asarray(w, dtype=float))
    lam, vec = np.linalg.eigh(B)
    y1, y2 = np.broadcast_arrays(np.asarray(y1, float), np.asarray(y2, float))
    u1 = vec[0, 0] * y1 + vec[1, 0] * y2
    u2 = vec[0, 1] * y1 + vec[1, 1] * y2
    shp = (-1,) + (1,) * y1.ndim
    m1 = (r * r + 1j * lam[0] / w).reshape(shp)
    m2 = (r * r + 1j * lam[1] / w).reshape(shp)
    return r * r / (np.sqrt(m1) * np.sqrt(m2)) * np.exp(-0.5 * (u1 * u1 / m1 + u2 * u2 / m2))


def flat_specular_spectrum(side: str, profile: SourceProfile, cfg: MediumConfig, w, y1, y2) -> np.ndarray:
    """Closed-form flat-interface spectrum per frequency at lateral points."""
    pref, _, B = _side_params(side, cfg)
    w = np.atleast_1d(np.asarray(w, dtype=float))
    ft = profile.temporal_envelope_spectrum(w)
    y1 = np.asarray(y1, float)
    return pref * ft.reshape((-1,) + (1,) * y1.ndim) * gaussian_beam(profile.beam_width, B, w, y1, y2)


def _legendre_nodes(profile: SourceProfile, s_span: float, floor: float = 1e-17, per_panel: int = 24):
    """Composite Gauss-Legendre nodes over the band extended to ``floor``."""
    half = profile.bandwidth * np.sqrt(2 * np.log(1 / floor))
    lo = max(profile.omega_c - half, 1e-12)
    hi = profile.omega_c + half
    panels = int(np.ceil((hi - lo) * (s_span + 4 * profile.tau) / 12)) + 4
    x, wt = np.polynomial.legendre.leggauss(per_panel)
    edges = np.linspace(lo, hi, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
    weights = (0.5 * (b - a) * wt).ravel()
    return nodes, weights


def _time_quadrature(spec_fn, profile, s, y1, y2, chunk: int = 4096):
    """``(1/pi) Re int_0^inf exp(-i w s) F(w, Y) dw`` at points ``(s, Y)``."""
    s, y1, y2 = np.broadcast_arrays(np.asarray(s, float), np.asarray(y1, float), np.asarray(y2, float))
    shape = s.shape
    s, y1, y2 = s.ravel(), y1.ravel(), y2.ravel()
    span = float(np.max(np.abs(s))) if s.size else 0.0
    nodes, weights = _legendre_nodes(profile, span)
    out = np.empty(s.size)
    for i in range(0, s.size, chunk):
        sl = slice(i, i + chunk)
        F = spec_fn(nodes, y1[sl], y2[sl])
        ph = np.exp(-1j * np.multiply.outer(nodes, s[sl]))
        out[sl] = np.real(np.sum((weights[:, None] * F) * ph, axis=0)) / np.pi
    return out.reshape(shape)


def flat_specular_wavefront(side: str, profile: SourceProfile, cfg: MediumConfig, s, y1, y2) -> np.ndarray:
    """Flat-interface specular wavefront in its moving frame by direct quadrature."""
    return _time_quadrature(lambda w, a, b: flat_specular_spectrum(side, profile, cfg, w, a, b),
                            profile, s, y1, y2)


def damping_factor(side: str, cfg: MediumConfig, model: InterfaceModel, w) -> np.ndarray:
    """Coherent damping ``phi_V(tau w)`` of the specular spectrum."""
    _, tau, _ = _side_params(side, cfg)
    return model.characteristic_function(tau * np.asarray(w, dtype=float))


def travel_time_kernel(side: str, cfg: MediumConfig, model: InterfaceModel, s) -> np.ndarray:
    """Density of the random travel-time shift ``tau V`` (reflection: ``2 s0 V``)."""
    _, tau, _ = _side_params(side, cfg)
    return model.marginal_density(np.asarray(s, dtype=float) / tau) / abs(tau)


def homogenized_specular_prediction(side: str, profile: SourceProfile, cfg: MediumConfig, model: InterfaceModel,
                                    s, y1, y2, method: str = "filter", nodes: int = 64) -> np.ndarray:
    """Effective specular wavefront when the roughness is much finer than the beam.

    ``method='filter'`` damps each frequency by ``phi_V(tau w)``;
    ``method='convolution'`` convolves the flat wavefront in ``s`` with
    the travel-time density using Gauss-Hermite nodes (Gaussian marginal).
    """
    if method == "filter":
        def spec(w, a, b):
            d = damping_factor(side, cfg, model, w)
            return d[:, None] * flat_specular_spectrum(side, profile, cfg, w, a, b)
        return _time_quadrature(spec, profile, s, y1, y2)
    if method != "convolution":
        raise ValueError("method must be 'filter' or 'convolution'")
    if model.marginal != "gaussian":
        raise NotImplementedError("convolution route implemented for Gaussian marginals")
    _, tau, _ = _side_params(side, cfg)
    spread = abs(tau) * model.sigma
    s, y1, y2 = np.broadcast_arrays(np.asarray(s, float), np.asarray(y1, float), np.asarray(y2, float))
    if spread == 0:
        return flat_specular_wavefront(side, profile, cfg, s, y1, y2)
    x, wt = np.polynomial.hermite.hermgauss(nodes)
    shifts = np.sqrt(2) * spread * x
    ss = s[None] - shifts.reshape((-1,) + (1,) * s.ndim)
    vals = flat_specular_wavefront(side, profile, cfg, ss, y1[None], y2[None])
    return np.tensordot(wt, vals, axes=(0, 0)) / np.sqrt(np.pi)


def _fresnel_kernel_1d(lam: float, beta: float, u: np.ndarray) -> np.ndarray:
    """One factor of the separable Fresnel kernel for eigenvalue ``lam`` of ``A``."""
    return np.exp(1j * u * u / (2 * beta * lam)) / np.sqrt(2j * np.pi * beta * lam)


def _trig_interpolation_matrix(n: int, d: float, y: np.ndarray) -> np.ndarray:
    """Matrix mapping samples on a centred periodic grid to their trigonometric interpolant at ``y``."""
    k = 2 * np.pi * np.fft.fftfreq(n, d)
    if n % 2 == 0:
        k = np.delete(k, n // 2)  # unpaired Nyquist term would make the interpolant complex
    y0 = (np.arange(n) - n // 2) * d
    E = np.exp(1j * np.outer(y, k)) / n
    return E @ np.exp(-1j * np.outer(k, y0))


def _support_halfwidth(r: float, b: float, omegas: np.ndarray, floor: float) -> float:
    """Half-width where a propagated Gaussian beam falls below ``floor`` of its peak, over all frequencies."""
    var = (r ** 4 + (b / omegas) ** 2) / r ** 2
    return float(np.sqrt(2 * np.log(1 / floor) * var.max()))


def random_specular_prediction(profile: SourceProfile, cfg: MediumConfig, realization: InterfaceRealization,
                               out_grid: LateralGrid, regime: ScaleRegime | None = None,
                               side: str = "reflection", floor: float = 1e-12,
                               safety: float = 0.6) -> WaveField:
    """Specular wavefront for roughness on the beam scale, by direct quadrature.

    The incident beam is evaluated in closed form at the interface
    (beam units, origin at the impact point), multiplied by
    ``exp(i w tau V)`` and carried to the observation plane with the
    real-space Fresnel kernel
    ``exp(i u^T A^-1 u / 2 beta) / (2 pi i beta sqrt(det A))``,
    ``beta = z c / w``. The kernel is separable along the eigenvectors of
    ``A``; the grids must be aligned with them (``k0`` along an axis).

    The quadrature runs over the support of the incident beam (down to
    ``floor``) on a grid fine enough to resolve the kernel chirp over the
    output window plus the phase-screen bandwidth. The realization is
    trigonometrically interpolated onto that grid.

    ``meta['interface_norm2']`` holds the interface-plane norm per
    frequency, which the exact propagator preserves.
    """
    if regime is not None and abs(regime.gamma - 0.5) > 1e-12:
        raise ValueError("random specular prediction applies at gamma = 1/2")
    eta = 1.0 if regime is None else regime.lateral_ratio
    pref, tau, _ = _side_params(side, cfg)
    A0 = paraxial_matrix(cfg, 0).matrix
    if side == "reflection":
        j2, z2, A2 = 0, cfg.z_int, A0
    else:
        j2, z2, A2 = 1, cfg.z_tr - cfg.z_int, paraxial_matrix(cfg, 1).matrix
    for A in (A0, A2):
        if abs(A[0, 1]) > 1e-14 * np.max(np.abs(A)):
            raise NotImplementedError("direct quadrature needs k0 along a grid axis")
    bins = profile.band_bins()
    w_all = profile.time.omegas[bins]
    c2 = cfg.speed(j2)
    r = profile.beam_width
    g0 = realization.grid.scaled(eta)
    V0 = np.asarray(realization.values, float)
    B1 = cfg.z_int * cfg.c0 * A0

    # screen bandwidth from the largest phase gradient
    k1, k2 = g0.kappa_mesh()
    Vh = np.fft.fft2(V0)
    grad = max(np.max(np.abs(np.fft.ifft2(1j * k1 * Vh))), np.max(np.abs(np.fft.ifft2(1j * k2 * Vh))))
    band = w_all.max() * abs(tau) * grad + np.sqrt(2 * np.log(1 / floor)) / r

    axes = []
    for ax, (gy, oy, n, d) in enumerate(((g0.y1, out_grid.y1, g0.n1, g0.d1), (g0.y2, out_grid.y2, g0.n2, g0.d2))):
        half = _support_halfwidth(r, B1[ax, ax], w_all, floor)
        if half > -gy[0] or half > gy[-1]:
            raise ValueError("incident beam support exceeds the realization grid")
        span = half + max(abs(oy[0]), abs(oy[-1]))
        chirp = span * w_all.max() / (z2 * c2 * A2[ax, ax])
        h = safety * np.pi / (chirp + band)
        m = int(np.ceil(half / h))
        y = np.arange(-m, m + 1) * h
        axes.append((y, h, _trig_interpolation_matrix(n, d, y)))
    (y1, h1, E1), (y2, h2, E2) = axes
    V = np.real(E1 @ V0 @ E2.T)
    out = np.empty((len(bins),) + out_grid.shape, dtype=complex)
    norm2 = np.empty(len(bins))
    for k, w in enumerate(w_all):
        inc = profile.temporal_envelope_spectrum(w) * gaussian_beam(r, B1, np.array([w]), y1[:, None], y2[None])[0]
        g = inc * np.exp(1j * w * tau * V)
        norm2[k] = np.sum(np.abs(g) ** 2) * h1 * h2
        beta = z2 * c2 / w
        K1 = _fresnel_kernel_1d(A2[0, 0], beta, out_grid.y1[:, None] - y1[None])
        K2 = _fresnel_kernel_1d(A2[1, 1], beta, out_grid.y2[:, None] - y2[None])
        out[k] = pref * (K1 @ g @ K2.T) * h1 * h2
    meta = {"side": side, "interface_norm2": norm2 * pref * pref, "seed": realization.seed,
            "quadrature_shape": (y1.size, y2.size)}
    frame = specular_frame(cfg, regime.epsilon if regime else 1e-3, side)
    return WaveField(out, bins, profile.time, out_grid, "space", 0.0 if side == "reflection" else cfg.z_tr,
                     frame, meta)


# ---------------------------------------------------------------------------
# Speckle frames and kernels


@dataclass(frozen=True)
class SpeckleWindow:
    """Sampling pattern of a speckle observation.

    Parameters
    ----------
    sbar : float
        Large-scale time offset.
    ybar : tuple
        Large-scale lateral offset.
    y : tuple
        Beam-scale lateral offset.
    s_tilde : array_like
        Fine time offsets.
    y_tilde : array_like, shape (m, 2)
        Fine lateral offsets.
    side : {'reflection', 'transmission'}
    """

    sbar: float
    ybar: tuple
    y: tuple = (0.0, 0.0)
    s_tilde: np.ndarray = field(default_factory=lambda: np.zeros(1))
    y_tilde: np.ndarray = field(default_factory=lambda: np.zeros((1, 2)))
    side: str = "reflection"

    def lab_points(self, cfg: MediumConfig, regime: ScaleRegime):
        """Lab coordinates ``(t, x1, x2)``, shape ``(len(s_tilde), len(y_tilde))``."""
        frame = specular_frame(cfg, regime.epsilon, self.side)
        eps, g = regime.epsilon, regime.gamma
        big, beam, fine = eps ** (1 - g), np.sqrt(eps), eps ** g
        yt = np.atleast_2d(np.asarray(self.y_tilde, float))
        st = np.atleast_1d(np.asarray(self.s_tilde, float))
        k = np.array(frame.k0)
        x1 = frame.x0[0] + big * self.ybar[0] + beam * self.y[0] + fine * yt[:, 0]
        x2 = frame.x0[1] + big * self.ybar[1] + beam * self.y[1] + fine * yt[:, 1]
        t = (frame.t0 + big * (k @ np.asarray(self.ybar, float)) + beam * (k @ np.asarray(self.y, float))
             + fine * (yt @ k))
        t = t[None, :] + eps ** (2 * (1 - g)) * self.sbar + eps * st[:, None]
        return t, np.broadcast_to(x1, t.shape), np.broadcast_to(x2, t.shape)

    def prefactor(self, regime: ScaleRegime) -> float:
        return regime.epsilon ** (1 - 2 * regime.gamma)


def extract_speckle(field: WaveField, cfg: MediumConfig, regime: ScaleRegime, window: SpeckleWindow) -> np.ndarray:
    """Scaled speckle samples, shape ``(len(s_tilde), len(y_tilde))``."""
    if regime.gamma <= 0.5:
        raise ValueError("speckle scaling requires gamma > 1/2")
    if field.frame is None:
        raise ValueError("field has no lab-frame map")
    t, x1, x2 = window.lab_points(cfg, regime)
    s, Y1, Y2 = field.frame.from_lab(t, x1, x2)
    return window.prefactor(regime) * field.sample(s, Y1, Y2)


class CorrelationAccumulator:
    """Associative reduction of sample products over realizations.

    ``add`` takes complex or real sample vectors; ``merge`` combines
    partial accumulators in any order.
    """

    def __init__(self, n: int):
        self.n = 0
        self.sum = np.zeros(n)
        self.prod = np.zeros((n, n))
        self.per_realization = []

    def add(self, x, keep: bool = False):
        x = np.real(np.ravel(x))
        self.n += 1
        self.sum += x
        p = np.outer(x, x)
        self.prod += p
        if keep:
            self.per_realization.append(p)
        return self

    def merge(self, other: "CorrelationAccumulator") -> "CorrelationAccumulator":
        out = CorrelationAccumulator(len(self.sum))
        out.n = self.n + other.n
        out.sum = self.sum + other.sum
        out.prod = self.prod + other.prod
        out.per_realization = self.per_realization + other.per_realization
        return out

    @property
    def correlation(self) -> np.ndarray:
        return self.prod / self.n

    @property
    def intensity(self) -> np.ndarray:
        return np.diag(self.correlation).copy()


def empirical_correlation(samples) -> np.ndarray:
    """Ensemble mean of ``S_i S_j`` over realizations (first axis)."""
    a = np.asarray(samples)
    a = a.reshape(a.shape[0], -1).real
    return a.T @ a / a.shape[0]


def raised_cosine(x, width: float) -> np.ndarray:
    """Unit-mass raised-cosine window of full support ``[-width, width]``."""
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < width, (1 + np.cos(np.pi * x / width)) / (2 * width), 0.0)


def speckle_offsets(side: str, cfg: MediumConfig, p):
    """Lateral and temporal offsets ``(y_p, s_p)`` of speckle scattered with slowness ``p``."""
    p = np.asarray(p, dtype=float)
    if side == "reflection":
        z, j = cfg.z_int, 0
    else:
        z, j = cfg.z_tr - cfg.z_int, 1
    A = paraxial_matrix(cfg, j).matrix
    y = z * cfg.speed(j) * (p @ A.T)
    return y, 0.5 * np.sum(p * y, axis=-1)


@dataclass(frozen=True)
class Ellipse:
    """Ellipse ``{y : y^T M y = level}`` with semi-axes along ``directions`` columns."""

    semi_axes: np.ndarray
    directions: np.ndarray
    angle: float

    def points(self, n: int = 181) -> np.ndarray:
        th = np.linspace(0, 2 * np.pi, n)
        circ = np.stack([self.semi_axes[0] * np.cos(th), self.semi_axes[1] * np.sin(th)])
        return (self.directions @ circ).T


def ellipse_support(side: str, cfg: MediumConfig, sbar: float) -> Ellipse:
    """Large-scale support ``{ybar : ybar^T A^-1 ybar = 2 z c sbar}`` of the speckle at ``sbar``."""
    if sbar < 0:
        raise ValueError("sbar must be non-negative")
    if side == "reflection":
        z, j = cfg.z_int, 0
    else:
        z, j = cfg.z_tr - cfg.z_int, 1
    Ainv = paraxial_matrix_inverse(cfg, j).matrix
    lam, vec = np.linalg.eigh(Ainv)
    axes = np.sqrt(2 * z * cfg.speed(j) * sbar / lam)
    return Ellipse(axes, vec, float(np.arctan2(vec[1, 0], vec[0, 0])))


@dataclass
class SpeckleKernel:
    """Limit correlation of speckle at large-scale offset ``ybar``.

    For reflection

        C(sbar, ybar, st, yt) = delta(sbar - ybar^T A^-1 ybar / 2 z c)
            * R^2 c^2 s0^4 / (4 (2 pi)^3 z^2)
            * int exp(-i w (st - ybar^T A^-1 yt / z c)) |Psi|_2^2(w) D(w, p(ybar)) w^2 dw

    with ``p(ybar) = A^-1 ybar / (z c)`` and ``D`` the continuous part of the
    scattering distribution at ``v = 2 s0``. The transmitted kernel uses
    ``v = s0 - s1``, medium 1 and the prefactor ``T^2 c1^2 s0 s1^3 / (4 (2 pi)^3 dz^2)``.
    """

    side: str
    cfg: MediumConfig
    model: InterfaceModel
    profile: SourceProfile
    omegas: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    band: np.ndarray = field(repr=False)

    @property
    def _geom(self):
        cfg = self.cfg
        s0, s1 = vertical_slowness(cfg, 0), vertical_slowness(cfg, 1)
        R, T = reflection_transmission_coefficients(cfg)
        if self.side == "reflection":
            z, c, j = cfg.z_int, cfg.c0, 0
            v = 2 * s0
            pref = R * R * c * c * s0 ** 4 / (4 * (2 * np.pi) ** 3 * z * z)
        else:
            z, c, j = cfg.z_tr - cfg.z_int, cfg.c1, 1
            v = s0 - s1
            pref = T * T * c * c * s0 * s1 ** 3 / (4 * (2 * np.pi) ** 3 * z * z)
        return z, c, paraxial_matrix_inverse(cfg, j).matrix, v, pref

    def arrival(self, ybar) -> np.ndarray:
        """Support ``sbar = ybar^T A^-1 ybar / (2 z c)``."""
        z, c, Ainv, _, _ = self._geom
        yb = np.asarray(ybar, float)
        return np.einsum("...i,ij,...j->...", yb, Ainv, yb) / (2 * z * c)

    def slowness(self, ybar) -> np.ndarray:
        z, c, Ainv, _, _ = self._geom
        return np.asarray(ybar, float) @ Ainv.T / (z * c)

    def density(self, ybar) -> np.ndarray:
        """Continuous scattering density per kernel frequency at ``p(ybar)``, shape ``(n_w,) + ybar.shape[:-1]``."""
        _, _, _, v, _ = self._geom
        p = self.slowness(ybar)
        sd = [ScatteringDistribution(v, w, 0.0, np.zeros(2), np.zeros(2), np.zeros((2, 2)), model=self.model)
              for w in self.omegas]
        return np.stack([d.density_at(p[..., 0], p[..., 1]) for d in sd])

    def profile_weight(self, ybar) -> np.ndarray:
        """Time-integrated kernel (coefficient of the delta) at ``st = yt = 0``."""
        return self.evaluate_integrated(ybar, np.zeros(1), np.zeros((1, 2)))[..., 0, 0]

    def evaluate_integrated(self, ybar, s_tilde, y_tilde) -> np.ndarray:
        """Kernel integrated over ``sbar`` (delta removed).

        Returns shape ``ybar.shape[:-1] + (len(s_tilde), len(y_tilde))``.
        """
        z, c, Ainv, v, pref = self._geom
        yb = np.atleast_2d(np.asarray(ybar, float))
        st = np.atleast_1d(np.asarray(s_tilde, float))
        yt = np.atleast_2d(np.asarray(y_tilde, float))
        D = self.density(yb)
        w = self.omegas
        base = self.weights * self.band * w * w
        lag = (yb @ Ainv) @ yt.T / (z * c)
        arg = st[None, :, None] - lag[:, None, :]
        out = np.empty((yb.shape[0], st.size, yt.shape[0]))
        for i in range(yb.shape[0]):
            ph = np.exp(-1j * np.multiply.outer(w, arg[i]))
            out[i] = 2 * np.real(np.tensordot(base * D[:, i], ph, axes=(0, 0)))
        out *= pref
        return out.reshape(np.asarray(ybar).shape[:-1] + (st.size, yt.shape[0]))

    def windowed(self, window: ProbeWindow, grid: LateralGrid, regime: ScaleRegime,
                 chunk: int = 4096) -> np.ndarray:
        """Kernel integrated over ``sbar`` and averaged with the probe window on the same nodes.

        Counterpart of :func:`windowed_correlation`; shape ``(len(lags), len(shifts))``.
        The window sum is taken per frequency before the lag phases are applied.
        """
        z, c, Ainv, _, pref = self._geom
        _, _, yb1, yb2 = window.nodes(grid, regime)
        W = window.weights(grid, regime).ravel()
        Y1, Y2 = np.meshgrid(yb1, yb2, indexing="ij")
        ybar = np.stack([Y1.ravel(), Y2.ravel()], axis=-1)
        yt = window.y_tilde(grid, regime)
        w = self.omegas
        inner = np.zeros((w.size, yt.shape[0]), dtype=complex)
        for lo in range(0, ybar.shape[0], chunk):
            yb = ybar[lo:lo + chunk]
            D = self.density(yb) * W[lo:lo + chunk]
            lag = (yb @ Ainv) @ yt.T / (z * c)
            for k, wk in enumerate(w):
                inner[k] += D[k] @ np.exp(1j * wk * lag)
        base = self.weights * self.band * w * w
        ph = np.exp(-1j * np.multiply.outer(np.atleast_1d(window.lags), w))
        return 2 * pref * np.real(ph @ (base[:, None] * inner))

    def evaluate(self, sbar, ybar, s_tilde, y_tilde, width: float) -> np.ndarray:
        """Kernel with the delta in ``sbar`` replaced by a raised cosine of half-width ``width``."""
        moll = raised_cosine(np.asarray(sbar, float) - self.arrival(ybar), width)
        return moll[..., None, None] * self.evaluate_integrated(ybar, s_tilde, y_tilde)


def kernel_C(side: str, cfg: MediumConfig, model: InterfaceModel, profile: SourceProfile,
             n_nodes: int | None = None) -> SpeckleKernel:
    """Closed-form speckle correlation kernel.

    The frequency integral runs over the source band with the same bins as
    the simulator (rectangle rule, spacing ``domega``); ``n_nodes``
    instead selects Gauss-Legendre nodes over the band.
    """
    if n_nodes is None:
        be = band_energy(profile)
        bins = profile.band_bins()
        w = be.omegas[bins]
        weights = np.full(w.size, profile.time.domega)
        band = be.spectral[bins]
    else:
        lo, hi = profile.band
        x, wt = np.polynomial.legendre.leggauss(n_nodes)
        w = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        weights = 0.5 * (hi - lo) * wt
        r = profile.beam_width
        # |Psi|_2^2 of the Gaussian profile: |T(w)|^2 * pi r^2
        band = np.abs(profile.temporal_envelope_spectrum(w)) ** 2 * np.pi * r * r
    return SpeckleKernel(side, cfg, model, profile, w, weights, band)


@dataclass(frozen=True)
class ProbeWindow:
    """Raised-cosine window in the large-scale offset around a probe.

    Parameters
    ----------
    center : tuple
        Probe offset ``ybar`` (large-scale units).
    halfwidth : float
        Half-width of the separable raised cosine in ``ybar``.
    shifts : array_like of int, shape (m, 2)
        Fine offsets ``y_tilde`` in output-grid steps; ``y_tilde = steps d / eta``.
    lags : array_like
        Fine time lags ``s_tilde``.
    """

    center: tuple
    halfwidth: float
    shifts: np.ndarray
    lags: np.ndarray

    def nodes(self, grid: LateralGrid, regime: ScaleRegime):
        """Grid indices and ``ybar`` values of the window support on a beam-unit grid."""
        eta = regime.lateral_ratio
        idx = []
        for c, y, n in ((self.center[0], grid.y1, grid.n1), (self.center[1], grid.y2, grid.n2)):
            sel = np.nonzero(np.abs(eta * y - c) < self.halfwidth)[0]
            if sel.size == 0:
                raise ValueError("window is narrower than the grid spacing")
            idx.append(sel)
        return idx[0], idx[1], eta * grid.y1[idx[0]], eta * grid.y2[idx[1]]

    def weights(self, grid: LateralGrid, regime: ScaleRegime) -> np.ndarray:
        """Quadrature weights ``W(ybar) dybar`` on the window nodes."""
        _, _, yb1, yb2 = self.nodes(grid, regime)
        eta = regime.lateral_ratio
        w1 = raised_cosine(yb1 - self.center[0], self.halfwidth) * eta * grid.d1
        w2 = raised_cosine(yb2 - self.center[1], self.halfwidth) * eta * grid.d2
        return np.outer(w1, w2)

    def y_tilde(self, grid: LateralGrid, regime: ScaleRegime) -> np.ndarray:
        sh = np.atleast_2d(np.asarray(self.shifts))
        return sh * np.array([grid.d1, grid.d2]) / regime.lateral_ratio


def windowed_correlation(field: WaveField, regime: ScaleRegime, window: ProbeWindow) -> np.ndarray:
    """Time-integrated, window-averaged speckle correlation of one realization.

    Returns, for every lag and shift,
    ``int W(ybar - center) int S(sbar, ybar, st, yt) S(sbar, ybar, 0, 0) dsbar dybar``,
    evaluated per frequency by Parseval:
    ``eps^(1-2 gamma) (1/pi) Re sum_w U(w, Y + eta yt) conj(U(w, Y)) exp(-i w st) dw``.
    Shape ``(len(lags), len(shifts))``.
    """
    f = field.to_space()
    i1, i2, _, _ = window.nodes(f.grid, regime)
    W = window.weights(f.grid, regime)
    sh = np.atleast_2d(np.asarray(window.shifts, int))
    lags = np.atleast_1d(np.asarray(window.lags, float))
    base = f.data[:, i1[:, None], i2[None, :]]
    cross = np.empty((len(f.bins), sh.shape[0]), dtype=complex)
    for m, (a, b) in enumerate(sh):
        if (i1[0] + a < 0 or i1[-1] + a >= f.grid.n1 or i2[0] + b < 0 or i2[-1] + b >= f.grid.n2):
            raise ExtrapolationError("shifted window exceeds the simulated grid")
        moved = f.data[:, (i1 + a)[:, None], (i2 + b)[None, :]]
        cross[:, m] = np.sum(W * moved * np.conj(base), axis=(1, 2))
    ph = np.exp(-1j * np.multiply.outer(lags, f.omegas))
    amp = regime.epsilon ** (1 - 2 * regime.gamma)
    return amp * f.time.domega / np.pi * np.real(ph @ cross)


def arrival_intensity(fields, regime: ScaleRegime, index: tuple, s: np.ndarray) -> np.ndarray:
    """Ensemble-mean scaled intensity ``E S^2`` at a grid node over native times ``s``."""
    amp = regime.epsilon ** (1 - 2 * regime.gamma)
    acc = np.zeros(len(s))
    n = 0
    for f in fields:
        f = f.to_space()
        spec = f.data[:, index[0], index[1]]
        u = evaluate_time(spec[:, None], f.omegas, f.time.domega, s)
        acc += (amp * u) ** 2
        n += 1
    return acc / n


def smoothed_peak(sbar: np.ndarray, intensity: np.ndarray, width: float) -> float:
    """Location of the maximum of the intensity convolved with the raised cosine of half-width ``width``."""
    ds = sbar[1] - sbar[0]
    k = np.arange(-int(np.ceil(width / ds)), int(np.ceil(width / ds)) + 1) * ds
    sm = np.convolve(intensity, raised_cosine(k, width) * ds, mode="same")
    return float(sbar[np.argmax(sm)])


# ---------------------------------------------------------------------------
# Statistical tests


@dataclass
class MomentReport:
    """Per-probe and pooled moment statistics of standardized samples."""

    n: int
    mean_z: np.ndarray
    skew: np.ndarray
    skew_se: np.ndarray
    kurtosis: np.ndarray
    kurtosis_se: np.ndarray
    pooled_mean_z: float
    pooled_skew_z: float
    pooled_kurtosis_z: float
    threshold: float = 3.0

    @property
    def mean_pass(self) -> bool:
        return abs(self.pooled_mean_z) <= self.threshold

    @property
    def odd_pass(self) -> bool:
        return abs(self.pooled_skew_z) <= self.threshold

    @property
    def kurtosis_pass(self) -> bool:
        return abs(self.pooled_kurtosis_z) <= self.threshold

    @property
    def passed(self) -> bool:
        return self.mean_pass and self.odd_pass and self.kurtosis_pass

    def as_dict(self) -> dict:
        return {"n": self.n, "pooled_mean_z": self.pooled_mean_z, "pooled_skew_z": self.pooled_skew_z,
                "pooled_kurtosis_z": self.pooled_kurtosis_z, "mean_pass": self.mean_pass,
                "odd_pass": self.odd_pass, "kurtosis_pass": self.kurtosis_pass,
                "max_abs_mean_z": float(np.max(np.abs(self.mean_z))),
                "kurtosis": self.kurtosis.tolist(), "kurtosis_se": self.kurtosis_se.tolist()}


def _leave_one_out(x: np.ndarray):
    """Per-column sample skewness and kurtosis, and their leave-one-row-out values."""
    n = x.shape[0]
    d = x - x.mean(axis=0)
    D = [np.sum(d ** p, axis=0) for p in (2, 3, 4)]
    skew = np.sqrt(n) * D[1] / D[0] ** 1.5
    kur = n * D[2] / D[0] ** 2
    # leave-one-out central sums, expanded about the full mean
    delta = -d / (n - 1)
    T1, T2, T3, T4 = -d, D[0] - d ** 2, D[1] - d ** 3, D[2] - d ** 4
    s2 = T2 - 2 * delta * T1 + (n - 1) * delta ** 2
    s3 = T3 - 3 * delta * T2 + 3 * delta ** 2 * T1 - (n - 1) * delta ** 3
    s4 = T4 - 4 * delta * T3 + 6 * delta ** 2 * T2 - 4 * delta ** 3 * T1 + (n - 1) * delta ** 4
    return skew, kur, np.sqrt(n - 1) * s3 / s2 ** 1.5, (n - 1) * s4 / s2 ** 2


def _jackknife_se(loo: np.ndarray) -> np.ndarray:
    n = loo.shape[0]
    return np.sqrt((n - 1) / n * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))


def gaussianity_test(samples, threshold: float = 3.0) -> MomentReport:
    """Mean, third-moment and kurtosis checks of real speckle probes.

    Parameters
    ----------
    samples : array_like, shape (n_realizations, n_probes)

    Notes
    -----
    Per probe: the mean in units of its standard error, the sample
    skewness and the kurtosis, with jackknife standard errors over
    realizations. Each statistic is averaged over probes and its error
    bar is taken from the realization-to-realization scatter of that
    average, so probes may be correlated with each other.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, m = x.shape
    if n < 100:
        raise ValueError("at least 100 realizations are required")
    sd = x.std(axis=0, ddof=1)
    mean_z = x.mean(axis=0) / (sd / np.sqrt(n))
    t = np.mean(x / sd, axis=1)
    pooled_mean_z = float(t.mean() / (t.std(ddof=1) / np.sqrt(n)))
    skew, kur, skew_loo, kur_loo = _leave_one_out(x)
    skew_se, kse = _jackknife_se(skew_loo), _jackknife_se(kur_loo)
    # expected sample kurtosis of a Gaussian with n samples
    kexp = 3 * (n - 1) / (n + 1)
    # pooled before standardizing: the error bars correlate with the estimates,
    # so averaging per-probe z-scores would be biased
    skew_z = float(np.mean(skew) / _jackknife_se(skew_loo.mean(axis=1)))
    kur_z = float((np.mean(kur) - kexp) / _jackknife_se(kur_loo.mean(axis=1)))
    return MomentReport(n, mean_z, skew, skew_se, kur, kse, pooled_mean_z, skew_z, kur_z, threshold)


@dataclass
class IndependenceReport:
    correlation: float
    se: float
    z: float
    applicable: bool = True
    threshold: float = 3.0

    @property
    def passed(self) -> bool:
        return (not self.applicable) or abs(self.z) <= self.threshold


def independence_test(a, b, threshold: float = 3.0) -> IndependenceReport:
    """Normalized cross-correlation of two speckle probes across realizations.

    ``a`` and ``b`` have the realization index on the first axis; extra
    axes are pooled pairs, which need not be independent of each other.
    Returns not-applicable when a probe has no fluctuation.
    """
    a = np.asarray(a, float).reshape(np.shape(a)[0], -1)
    b = np.asarray(b, float).reshape(np.shape(b)[0], -1)
    if a.shape[0] < 100:
        raise ValueError("at least 100 realizations are required")
    va, vb = np.mean(a * a, axis=0), np.mean(b * b, axis=0)
    if np.all(va == 0) or np.all(vb == 0):
        return IndependenceReport(0.0, 0.0, 0.0, False, threshold)
    # per-realization normalized products, averaged over pairs; the error bar
    # comes from their scatter across realizations
    t = np.mean(a * b / np.sqrt(va * vb), axis=1)
    n = a.shape[0]
    r = float(t.mean())
    se = float(t.std(ddof=1) / np.sqrt(n))
    return IndependenceReport(r, se, r / se, True, threshold)


@dataclass
class SelfAveragingReport:
    epsilons: list
    variances: list

    @property
    def monotone(self) -> bool:
        """Variance decreases as epsilon decreases."""
        order = np.argsort(self.epsilons)[::-1]
        v = np.asarray(self.variances)[order]
        return bool(np.all(np.diff(v) <= 0))


def self_averaging_test(functionals: dict) -> SelfAveragingReport:
    """Variance of single-realization functionals across an epsilon ladder.

    ``functionals`` maps epsilon to the per-realization values.
    """
    if len(functionals) < 2:
        raise ValueError("need at least two values of epsilon")
    eps = sorted(functionals)
    var = [float(np.var(np.asarray(functionals[e], float), ddof=1)) if len(functionals[e]) > 1 else 0.0
           for e in eps]
    return SelfAveragingReport(eps, var)
