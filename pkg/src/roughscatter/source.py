"""Pulsed beam sources, sampling grids and Fourier conventions.

Conventions
-----------
Temporal transform ``F(w) = int f(s) exp(+i w s) ds``.
Lateral transform ``G(kappa) = int F(y) exp(-i kappa.y) dy``.
The unscaled transform of a profile evaluated at lateral slowness ``q`` is
``G(w, w q)``; its inversion carries the weight ``w^2 dw dq`` which on the
``kappa = w q`` grid equals ``dw dkappa``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .medium import MediumConfig

NEGLIGIBLE = 1e-8


@dataclass(frozen=True)
class TimeGrid:
    """Uniform periodic time grid ``s_j = (j - n//2) dt`` with even ``n``."""

    n: int
    dt: float

    def __post_init__(self):
        if self.n % 2 or self.n < 2:
            raise ValueError("time grid size must be even")
        if self.dt <= 0:
            raise ValueError("time step must be positive")

    @property
    def s(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dt

    @property
    def domega(self) -> float:
        return 2 * np.pi / (self.n * self.dt)

    @property
    def omegas(self) -> np.ndarray:
        """Non-negative frequencies of the real transform."""
        return np.arange(self.n // 2 + 1) * self.domega

    @property
    def nyquist(self) -> float:
        return np.pi / self.dt


@dataclass(frozen=True)
class LateralGrid:
    """Periodic 2D lateral grid ``y_i = (i - n//2) d`` per axis."""

    n1: int
    n2: int
    d1: float
    d2: float

    def __post_init__(self):
        if min(self.n1, self.n2) < 2 or min(self.d1, self.d2) <= 0:
            raise ValueError("invalid lateral grid")

    @classmethod
    def square(cls, n: int, d: float) -> "LateralGrid":
        return cls(n, n, d, d)

    @property
    def shape(self):
        return (self.n1, self.n2)

    @property
    def cell(self) -> float:
        return self.d1 * self.d2

    @property
    def extent(self):
        return (self.n1 * self.d1, self.n2 * self.d2)

    @property
    def y1(self) -> np.ndarray:
        return (np.arange(self.n1) - self.n1 // 2) * self.d1

    @property
    def y2(self) -> np.ndarray:
        return (np.arange(self.n2) - self.n2 // 2) * self.d2

    def mesh(self):
        return np.meshgrid(self.y1, self.y2, indexing="ij")

    def wavenumbers(self):
        """Angular wavenumbers in FFT order."""
        return (2 * np.pi * sfft.fftfreq(self.n1, self.d1),
                2 * np.pi * sfft.fftfreq(self.n2, self.d2))

    def kappa_mesh(self):
        k1, k2 = self.wavenumbers()
        return np.meshgrid(k1, k2, indexing="ij")

    @property
    def dkappa(self):
        return (2 * np.pi / (self.n1 * self.d1), 2 * np.pi / (self.n2 * self.d2))

    def scaled(self, f: float) -> "LateralGrid":
        return LateralGrid(self.n1, self.n2, self.d1 * f, self.d2 * f)

    def forward(self, a: np.ndarray, workers: int = 1) -> np.ndarray:
        """Lateral transform of centred samples, output in FFT order."""
        a = sfft.ifftshift(a, axes=(-2, -1))
        return sfft.fft2(a, axes=(-2, -1), workers=workers) * self.cell

    def inverse(self, a: np.ndarray, workers: int = 1) -> np.ndarray:
        """Inverse of :meth:`forward`."""
        out = sfft.ifft2(a, axes=(-2, -1), workers=workers) / self.cell
        return sfft.fftshift(out, axes=(-2, -1))


def temporal_transform(f: np.ndarray, time: TimeGrid) -> np.ndarray:
    """``int f(s) exp(i w s) ds`` on the non-negative frequencies of ``time``.

    ``f`` is real with time on the first axis.
    """
    n = time.n
    spec = np.conj(sfft.rfft(f, axis=0)) * time.dt
    sign = (-1.0) ** np.arange(n // 2 + 1)
    return spec * sign.reshape((-1,) + (1,) * (f.ndim - 1))


def inverse_temporal_transform(spec: np.ndarray, time: TimeGrid, start: int = 0) -> np.ndarray:
    """Real field ``(1/pi) Re sum_k F_k exp(-i w_k s) dw`` from non-negative bins.

    ``spec`` holds consecutive bins ``start, start+1, ...``; the real field
    is the Hermitian extension to negative frequencies.
    """
    n = time.n
    full = np.zeros((n // 2 + 1,) + spec.shape[1:], dtype=complex)
    k = np.arange(start, start + spec.shape[0])
    sign = (-1.0) ** k
    full[k] = np.conj(spec) * sign.reshape((-1,) + (1,) * (spec.ndim - 1))
    if start == 0:
        full[0] = full[0].real
    return sfft.irfft(full, n=n, axis=0) / time.dt


def evaluate_time(spec: np.ndarray, omegas: np.ndarray, domega: float, s) -> np.ndarray:
    """Exact trigonometric evaluation of the real field at arbitrary times.

    ``spec`` has frequency on the first axis; ``s`` broadcasts against the
    remaining axes.
    """
    s = np.asarray(s, dtype=float)
    phase = np.exp(-1j * np.multiply.outer(omegas, s))
    return (domega / np.pi) * np.real(np.sum(spec * phase, axis=0))


@dataclass(frozen=True)
class SourceProfile:
    """Separable modulated Gaussian pulse ``cos(w_c s) exp(-s^2/2tau^2) exp(-|y|^2/2r^2)``.

    Parameters
    ----------
    omega_c : float
        Carrier angular frequency.
    bandwidth : float
        Spectral standard deviation ``1/tau`` of the temporal envelope.
    beam_width : float
        Lateral Gaussian radius ``r`` in beam-width units.
    time, grid : TimeGrid, LateralGrid
        Sampling grids in the beam frame.
    amplitude : float
        Overall scale (0 gives the zero source).
    threshold : float
        Relative level below which the spectrum is declared negligible.
    """

    omega_c: float
    bandwidth: float
    beam_width: float
    time: TimeGrid
    grid: LateralGrid
    amplitude: float = 1.0
    threshold: float = NEGLIGIBLE
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.bandwidth <= 0 or self.beam_width <= 0:
            raise ValueError("bandwidth and beam width must be positive")
        if self.omega_c <= 3 * self.bandwidth:
            raise ValueError("carrier frequency must exceed 3x the bandwidth")
        lo, hi = self.band
        if hi + 4 * self.bandwidth > self.time.nyquist:
            raise ValueError("time step under-resolves the source band")

    @property
    def tau(self) -> float:
        return 1.0 / self.bandwidth

    @property
    def band(self):
        """Frequency interval where the temporal spectrum exceeds the threshold."""
        half = self.bandwidth * np.sqrt(2 * np.log(1 / self.threshold))
        return self.omega_c - half, self.omega_c + half

    def band_bins(self) -> np.ndarray:
        """Indices of non-negative frequency bins inside the band."""
        lo, hi = self.band
        w = self.time.omegas
        return np.nonzero((w >= lo) & (w <= hi))[0]

    @property
    def kappa_max(self) -> float:
        """Lateral wavenumber above which the spectrum is negligible."""
        return np.sqrt(2 * np.log(1 / self.threshold)) / self.beam_width

    @property
    def q_max(self) -> float:
        """Largest lateral slowness with non-negligible joint spectrum."""
        lo, hi = self.band
        w = np.linspace(lo, hi, 4001)[1:-1]
        t = self.temporal_envelope_spectrum(w)
        t = t / self.temporal_envelope_spectrum(np.array([self.omega_c]))[0]
        kap = np.sqrt(2 * np.log(np.maximum(t, self.threshold) / self.threshold)) / self.beam_width
        return float(np.max(kap / w))

    def temporal_samples(self) -> np.ndarray:
        s = self.time.s
        return self.amplitude * np.cos(self.omega_c * s) * np.exp(-0.5 * (s * self.bandwidth) ** 2)

    def lateral_envelope(self, y1, y2) -> np.ndarray:
        return np.exp(-0.5 * (np.asarray(y1) ** 2 + np.asarray(y2) ** 2) / self.beam_width ** 2)

    def lateral_samples(self) -> np.ndarray:
        return self.lateral_envelope(*self.grid.mesh())

    def samples(self) -> np.ndarray:
        """Full ``(time, y1, y2)`` sample array."""
        return self.temporal_samples()[:, None, None] * self.lateral_samples()[None]

    def temporal_envelope_spectrum(self, w) -> np.ndarray:
        """Closed-form temporal spectrum ``int cos(w_c s) exp(-s^2/2tau^2) exp(i w s) ds``."""
        w = np.asarray(w, dtype=float)
        tau = self.tau
        c = self.amplitude * tau * np.sqrt(2 * np.pi) / 2
        return c * (np.exp(-0.5 * ((w - self.omega_c) * tau) ** 2)
                    + np.exp(-0.5 * ((w + self.omega_c) * tau) ** 2))

    def lateral_envelope_spectrum(self, k1, k2) -> np.ndarray:
        r = self.beam_width
        return 2 * np.pi * r * r * np.exp(-0.5 * r * r * (np.asarray(k1) ** 2 + np.asarray(k2) ** 2))

    def temporal_spectrum(self) -> np.ndarray:
        """Sampled temporal spectrum on the non-negative frequency bins."""
        return temporal_transform(self.temporal_samples(), self.time)

    def lateral_spectrum(self) -> np.ndarray:
        """Sampled lateral spectrum in FFT order."""
        return self.grid.forward(self.lateral_samples())

    def norm(self) -> float:
        """Grid L2 norm of the profile."""
        t = self.temporal_samples()
        g = self.lateral_samples()
        return float(np.sqrt(np.sum(t * t) * self.time.dt * np.sum(g * g) * self.grid.cell))

    def spectral_grid(self) -> "SpectralGrid":
        bins = self.band_bins()
        k1, k2 = self.grid.wavenumbers()
        return SpectralGrid(self.time.omegas[bins], bins, k1, k2, self.time.domega, self.grid.dkappa,
                            self.time.nyquist, (np.pi / self.grid.d1, np.pi / self.grid.d2))


@dataclass(frozen=True)
class SpectralGrid:
    """Band frequencies and lateral wavenumbers of a sampled source.

    The lateral slowness at frequency ``w`` is ``q = kappa / w``, so the
    q-spacing is ``dkappa / w``. ``omega_nyquist`` and ``kappa_nyquist``
    record the resolution limits of the underlying sampling.
    """

    omegas: np.ndarray
    bins: np.ndarray
    kappa1: np.ndarray
    kappa2: np.ndarray
    domega: float
    dkappa: tuple
    omega_nyquist: float
    kappa_nyquist: tuple

    def q_spacing(self, w: float):
        return (self.dkappa[0] / abs(w), self.dkappa[1] / abs(w))


def make_default_profile(omega_c: float = 2 * np.pi, bandwidth: float = 1 / 3, beam_params=None,
                         time: TimeGrid | None = None) -> SourceProfile:
    """Modulated Gaussian pulse with Gaussian lateral envelope.

    Parameters
    ----------
    omega_c, bandwidth : float
        Carrier and spectral standard deviation; ``omega_c > 3 bandwidth``.
    beam_params : dict, optional
        ``width`` (lateral radius, default 1), ``n`` (grid size, default
        256), ``d`` (spacing, default 0.4).
    time : TimeGrid, optional
        Defaults to a grid spanning 33 envelope widths with at least
        three samples per period of the highest band frequency.
    """
    bp = {"width": 1.0, "n": 256, "d": 0.4}
    bp.update(beam_params or {})
    if omega_c <= 3 * bandwidth:
        raise ValueError("carrier frequency must exceed 3x the bandwidth")
    if time is None:
        half = bandwidth * np.sqrt(2 * np.log(1 / NEGLIGIBLE))
        dt = np.pi / (1.5 * (omega_c + half + 4 * bandwidth))
        n = int(2 * np.ceil(33 / bandwidth / dt / 2))
        time = TimeGrid(n, dt)
    n = bp["n"]
    grid = LateralGrid(n, bp.get("n2", n), bp["d"], bp.get("d2", bp["d"]))
    return SourceProfile(omega_c, bandwidth, bp["width"], time, grid)


@dataclass(frozen=True)
class BandEnergy:
    """Lateral energy per frequency computed two independent ways."""

    omegas: np.ndarray
    spectral: np.ndarray
    spatial: np.ndarray

    def total(self, domega: float) -> float:
        """``int E(w) dw / 2pi`` over both signs of ``w`` (Hermitian pairing)."""
        e = self.spectral
        return float((e[0] + 2 * np.sum(e[1:])) * domega / (2 * np.pi))


def band_energy(profile: SourceProfile) -> BandEnergy:
    """``(w^2 / (2pi)^2) int |Psi(w, q)|^2 dq`` and ``int |int e^{iws} Psi ds|^2 dx``.

    The spectral route applies the slowness-space quadrature weight
    ``w^2 dq1 dq2 = dkappa1 dkappa2`` to the sampled lateral spectrum; the
    spatial route sums the temporally transformed samples in physical
    space. Both are returned on the non-negative frequency bins.
    """
    w = profile.time.omegas
    ft = profile.temporal_spectrum()
    g = profile.lateral_spectrum()
    dk1, dk2 = profile.grid.dkappa
    lat_spec = np.empty_like(w)
    sumg = np.sum(np.abs(g) ** 2)
    for i, wi in enumerate(w):
        if wi == 0:
            weight = dk1 * dk2
        else:
            weight = wi * wi * (dk1 / wi) * (dk2 / wi)
        lat_spec[i] = weight * sumg / (2 * np.pi) ** 2
    env = profile.lateral_samples()
    lat_space = np.sum(env * env) * profile.grid.cell
    a = np.abs(ft) ** 2
    return BandEnergy(w, a * lat_spec, a * lat_space)


def propagating_mode_check(profile: SourceProfile | None, cfg: MediumConfig, eps: float,
                           q_max: float | None = None):
    """Whether every non-negligible mode propagates in the upper medium.

    Returns ``(ok, margin)`` with ``margin = 1 - (sqrt(eps) c0 q_max + c0 |k0|)``.
    """
    if q_max is None:
        q_max = profile.q_max
    margin = 1 - (np.sqrt(eps) * cfg.c0 * q_max + cfg.c0 * np.hypot(*cfg.k0))
    return bool(margin > 0), float(margin)


def unscaled_transform(samples: np.ndarray, time: TimeGrid, grid: LateralGrid):
    """Unscaled transform ``int int f(s,y) exp(i w (s - q.y)) ds dy`` on the full grid.

    Returns ``(spec, omegas, kappa1, kappa2)`` with all axes in FFT order,
    negative frequencies included. ``spec[w, kappa]`` is the transform at
    ``q = kappa / w``.
    """
    a = sfft.ifftshift(samples, axes=(0, 1, 2))
    spec = sfft.ifft(a, axis=0) * time.n
    spec = sfft.fft2(spec, axes=(1, 2))
    spec *= time.dt * grid.cell
    w = 2 * np.pi * sfft.fftfreq(time.n, time.dt)
    k1, k2 = grid.wavenumbers()
    return spec, w, k1, k2


def inverse_unscaled_transform(spec: np.ndarray, time: TimeGrid, grid: LateralGrid) -> np.ndarray:
    """``(2pi)^-3 int int F exp(-i w (s - q.y)) w^2 dw dq`` on the sampling grid.

    The weight ``w^2 dq`` is applied explicitly per frequency with
    ``dq = dkappa / |w|``; at ``w = 0`` the slowness grid degenerates and
    the limiting weight ``dkappa`` is used.
    """
    w = 2 * np.pi * sfft.fftfreq(time.n, time.dt)
    dk1, dk2 = grid.dkappa
    weights = np.where(w == 0, dk1 * dk2, w * w * (dk1 / np.where(w == 0, 1, np.abs(w)))
                       * (dk2 / np.where(w == 0, 1, np.abs(w))))
    dw = time.domega
    a = spec * (weights * dw)[:, None, None]
    a = sfft.ifft2(a, axes=(1, 2)) * (grid.n1 * grid.n2)
    a = sfft.fft(a, axis=0)
    a = sfft.fftshift(a, axes=(0, 1, 2)) / (2 * np.pi) ** 3
    return a


def scaled_transform(samples: np.ndarray, time: TimeGrid, grid: LateralGrid, eps: float):
    """Scaled transform ``int int f(t,x) exp(i w (t/eps - k.x/sqrt(eps))) dt dx``.

    ``samples`` live on a lab grid (``time`` in lab time, ``grid`` in lab
    length). Returns ``(spec, omegas, kappa1, kappa2)`` where the lateral
    wavenumber is ``k = kappa / w``.
    """
    spec, w, k1, k2 = unscaled_transform(samples, TimeGrid(time.n, time.dt / eps),
                                         grid.scaled(1 / np.sqrt(eps)))
    return eps * eps * spec, w, k1, k2


def inverse_scaled_transform(spec: np.ndarray, time: TimeGrid, grid: LateralGrid, eps: float) -> np.ndarray:
    """``((2pi)^3 eps^2)^-1 int int F exp(-i w (t/eps - k.x/sqrt(eps))) w^2 dw dk``."""
    return inverse_unscaled_transform(spec / (eps * eps), TimeGrid(time.n, time.dt / eps),
                                      grid.scaled(1 / np.sqrt(eps)))
