"""Split-step paraxial solver for beams reflected or transmitted by a rough interface.

Fields are stored per positive frequency over a 2D lateral grid in the
moving frame of the beam they describe. A field at frequency ``w`` and
lateral position ``Y`` (beam-width units) represents the lab-frame wave

    u(t, x) = U((t - t0 - k0.(x - x0)) / eps, (x - x0) / sqrt(eps))

so carrier oscillations at ``1/eps`` are never sampled. Negative
frequencies are implied by Hermitian symmetry of the real field.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft, ndimage

from .interface import InterfaceRealization
from .medium import (DomainError, MediumConfig, ScaleRegime, flat_mode_scattering, observation_geometry,
                     paraxial_matrix, reflection_transmission_coefficients, vertical_slowness,
                     vertical_slowness_eps)
from .source import (LateralGrid, SourceProfile, TimeGrid, evaluate_time, inverse_temporal_transform,
                     propagating_mode_check)

FOOTPRINT_TOL = 1e-6


class ResolutionError(RuntimeError):
    """Grid too coarse for the requested simulation."""


class FootprintError(RuntimeError):
    """Beam energy reaches the edge of the interface grid."""


class ExtrapolationError(ValueError):
    """Requested samples lie outside the simulated grid."""


@dataclass(frozen=True)
class FrameMap:
    """Affine map between moving-frame coordinates ``(s, Y)`` and lab ``(t, x)``.

    ``x = x0 + sqrt(eps) Y`` and ``t = t0 + k0.(x - x0) + eps s``.
    """

    t0: float
    x0: tuple
    k0: tuple
    eps: float
    tag: str = "lab"

    def to_lab(self, s, y1, y2):
        se = np.sqrt(self.eps)
        x1 = self.x0[0] + se * np.asarray(y1)
        x2 = self.x0[1] + se * np.asarray(y2)
        t = self.t0 + self.k0[0] * (x1 - self.x0[0]) + self.k0[1] * (x2 - self.x0[1]) + self.eps * np.asarray(s)
        return t, x1, x2

    def from_lab(self, t, x1, x2):
        se = np.sqrt(self.eps)
        d1 = np.asarray(x1) - self.x0[0]
        d2 = np.asarray(x2) - self.x0[1]
        s = (np.asarray(t) - self.t0 - self.k0[0] * d1 - self.k0[1] * d2) / self.eps
        return s, d1 / se, d2 / se


def specular_frame(cfg: MediumConfig, eps: float, side: str = "reflection") -> FrameMap:
    """Frame centred on the classical specular observation point and time."""
    geo = observation_geometry(cfg)
    if side == "reflection":
        return FrameMap(float(geo.t_obs_ref), tuple(geo.x_obs_ref), cfg.k0, eps, "specular-reflected")
    if side == "transmission":
        return FrameMap(float(geo.t_obs_tr), tuple(geo.x_obs_tr), cfg.k0, eps, "specular-transmitted")
    raise ValueError("side must be 'reflection' or 'transmission'")


@dataclass
class WaveField:
    """Complex field per positive frequency on a lateral grid.

    Attributes
    ----------
    data : ndarray, shape (n_omega, n1, n2)
        Spectral samples; lateral axes are positions (``domain='space'``,
        centred) or wavenumbers (``domain='wavenumber'``, FFT order).
    bins : ndarray of int
        Indices of ``data``'s frequencies in ``time.omegas`` (contiguous).
    time : TimeGrid
        Grid on which the real time-domain field is reconstructed.
    grid : LateralGrid
    domain : {'space', 'wavenumber'}
    depth : float
        Depth plane of the samples.
    frame : FrameMap or None
        Lab-frame map; ``None`` for the source (beam) frame.
    """

    data: np.ndarray = field(repr=False)
    bins: np.ndarray
    time: TimeGrid
    grid: LateralGrid
    domain: str = "space"
    depth: float = 0.0
    frame: FrameMap | None = None
    meta: dict = field(default_factory=dict)

    @property
    def omegas(self) -> np.ndarray:
        return self.time.omegas[self.bins]

    def with_data(self, data, **kw) -> "WaveField":
        return replace(self, data=data, meta=dict(self.meta), **kw)

    def to_space(self) -> "WaveField":
        if self.domain == "space":
            return self
        return self.with_data(self.grid.inverse(self.data), domain="space")

    def to_wavenumber(self) -> "WaveField":
        if self.domain == "wavenumber":
            return self
        return self.with_data(self.grid.forward(self.data), domain="wavenumber")

    def spectral_norms(self) -> np.ndarray:
        """Lateral L2 norm squared per frequency."""
        a = np.sum(np.abs(self.data) ** 2, axis=(1, 2))
        if self.domain == "space":
            return a * self.grid.cell
        dk1, dk2 = self.grid.dkappa
        return a * dk1 * dk2 / (2 * np.pi) ** 2

    def energy(self) -> float:
        """Squared L2 norm of the real field over ``(s, Y)``."""
        return float(np.sum(self.spectral_norms()) * self.time.domega / np.pi)

    def time_samples(self) -> np.ndarray:
        """Real field on ``time.s`` times the lateral grid."""
        return inverse_temporal_transform(self.to_space().data, self.time, start=int(self.bins[0]))

    def sample(self, s, y1, y2, check: bool = True) -> np.ndarray:
        """Real field at arbitrary native coordinates.

        Separable cubic-spline interpolation in ``Y`` per frequency, then
        exact trigonometric summation in ``s``.
        """
        f = self.to_space()
        s, y1, y2 = np.broadcast_arrays(np.asarray(s, float), np.asarray(y1, float), np.asarray(y2, float))
        g = f.grid
        i1 = y1 / g.d1 + g.n1 // 2
        i2 = y2 / g.d2 + g.n2 // 2
        if check and (np.any(i1 < 0) or np.any(i1 > g.n1 - 1) or np.any(i2 < 0) or np.any(i2 > g.n2 - 1)):
            raise ExtrapolationError("window exceeds the simulated lateral grid")
        coords = np.stack([i1.ravel(), i2.ravel()])
        vals = np.empty((len(self.bins), coords.shape[1]), dtype=complex)
        for k, plane in enumerate(f.data):
            re = ndimage.map_coordinates(plane.real, coords, order=3, mode="grid-wrap")
            im = ndimage.map_coordinates(plane.imag, coords, order=3, mode="grid-wrap")
            vals[k] = re + 1j * im
        out = evaluate_time(vals, self.omegas, self.time.domega, s.ravel())
        return out.reshape(s.shape)

    def edge_fraction(self, width: float = 1 / 16) -> float:
        """Fraction of energy within ``width`` of the grid boundary (space domain)."""
        f = self.to_space()
        n1, n2 = f.grid.shape
        w1, w2 = max(1, int(n1 * width)), max(1, int(n2 * width))
        e = np.sum(np.abs(f.data) ** 2, axis=0)
        tot = e.sum()
        if tot == 0:
            return 0.0
        inner = e[w1:n1 - w1, w2:n2 - w2].sum()
        return float((tot - inner) / tot)


def _quadratic_form(cfg: MediumConfig, j: int, grid: LateralGrid) -> np.ndarray:
    """``c_j kappa^T A_j kappa / 2`` on the FFT-ordered wavenumber grid."""
    A = paraxial_matrix(cfg, j).matrix
    k1, k2 = grid.kappa_mesh()
    return 0.5 * cfg.speed(j) * (A[0, 0] * k1 * k1 + 2 * A[0, 1] * k1 * k2 + A[1, 1] * k2 * k2)


def propagate(field: WaveField, cfg: MediumConfig, j: int, z: float, direction: int = 1) -> WaveField:
    """Paraxial propagation over distance ``z`` in medium ``j``.

    Multiplies each mode by ``exp(-+ i w z c_j q^T A_j q / 2)`` with
    ``q = kappa / w``; ``direction=+1`` is forward propagation.
    """
    if field.domain != "wavenumber":
        raise ValueError("propagate needs the wavenumber representation")
    if z < 0:
        raise ValueError("propagation distance must be non-negative")
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    Q = _quadratic_form(cfg, j, field.grid)
    out = np.empty_like(field.data)
    for k, w in enumerate(field.omegas):
        out[k] = field.data[k] * np.exp(-1j * direction * z * Q / w)
    return field.with_data(out)


@dataclass(frozen=True)
class PhaseScreen:
    """Unit-modulus multiplier ``exp(i w tau V)`` of an interface realization."""

    values: np.ndarray = field(repr=False)
    tau: float

    def multiplier(self, w: float) -> np.ndarray:
        return np.exp(1j * (w * self.tau) * self.values)


def screen_grid(grid: LateralGrid, regime: ScaleRegime) -> LateralGrid:
    """Interface grid (correlation-length units) matching a beam-unit grid."""
    return grid.scaled(1 / regime.lateral_ratio)


def _check_screen(field: WaveField, realization: InterfaceRealization, regime: ScaleRegime, strict: bool):
    eta = regime.lateral_ratio
    g, r = field.grid, realization.grid
    if r.shape != g.shape or not np.allclose([r.d1 * eta, r.d2 * eta], [g.d1, g.d2], rtol=1e-9):
        raise ValueError("realization grid does not match the field grid in correlation-length units")
    if strict and max(r.d1, r.d2) > 1 / 8 * (1 + 1e-12):
        raise ResolutionError(f"interface sampled at {max(r.d1, r.d2):.3g} correlation lengths (need <= 1/8)")
    frac = field.edge_fraction()
    if frac > FOOTPRINT_TOL:
        raise FootprintError(f"beam energy fraction {frac:.2e} at the interface grid edge")


def apply_phase_screen(field: WaveField, realization: InterfaceRealization, tau: float, regime: ScaleRegime,
                       strict: bool = True) -> WaveField:
    """Multiply by ``exp(i w tau V(x / eps^gamma))`` at the interface plane.

    The realization grid must be the field grid expressed in correlation
    lengths (see :func:`screen_grid`).
    """
    if field.domain != "space":
        raise ValueError("phase screens act on the physical lateral representation")
    _check_screen(field, realization, regime, strict)
    screen = PhaseScreen(realization.values, tau)
    out = np.empty_like(field.data)
    for k, w in enumerate(field.omegas):
        out[k] = field.data[k] * screen.multiplier(w)
    return field.with_data(out)


def _lowpass_spectrum(f: np.ndarray, fine: LateralGrid, out: LateralGrid, factor: tuple):
    """Low-pass a fine-grid field to the output Nyquist limit and zero-pad onto ``out``.

    Only the retained wavenumber rows are transformed along the second
    axis. Returns the output spectrum and the discarded energy fraction.
    """
    m1, m2 = factor
    nc1, nc2 = fine.n1 // m1, fine.n2 // m2
    i1 = np.r_[0:nc1 // 2, fine.n1 - nc1 // 2:fine.n1]
    i2 = np.r_[0:nc2 // 2, fine.n2 - nc2 // 2:fine.n2]
    h = sfft.fft(sfft.ifftshift(f), axis=0)[i1]
    Gc = sfft.fft(h, axis=1)[:, i2] * fine.cell
    tot = np.sum(np.abs(f) ** 2) * fine.cell
    kept = np.sum(np.abs(Gc) ** 2) * (2 * np.pi / (fine.n1 * fine.d1)) * (2 * np.pi / (fine.n2 * fine.d2)) / (2 * np.pi) ** 2
    lost = 1 - kept / tot if tot > 0 else 0.0
    coarse = LateralGrid(nc1, nc2, out.d1, out.d2)
    fc = coarse.inverse(Gc)
    big = np.zeros(out.shape, dtype=Gc.dtype)
    o1, o2 = out.n1 // 2 - nc1 // 2, out.n2 // 2 - nc2 // 2
    big[o1:o1 + nc1, o2:o2 + nc2] = fc
    return out.forward(big), lost


class SplitStepSimulator:
    """Reflected or transmitted field for many interface realizations.

    The incident field at the interface is computed once. Each call to
    :meth:`run` applies a phase screen and propagates the second leg.

    Parameters
    ----------
    profile : SourceProfile
    cfg : MediumConfig
    regime : ScaleRegime
    side : {'reflection', 'transmission'}
    out_grid : LateralGrid, optional
        Observation grid. Its spacings must be integer multiples of the
        interface grid spacings and its extent at least as large. The
        scattered spectrum is low-passed to the output Nyquist limit and
        the discarded energy is reported in ``meta['discarded']``.
    dtype : numpy dtype
        Complex working precision.
    strict : bool
        Enforce the interface sampling rule (8 points per correlation length).
    cache_bytes : int
        Memory budget for precomputed second-leg propagators (0 disables).
    """

    def __init__(self, profile: SourceProfile, cfg: MediumConfig, regime: ScaleRegime,
                 side: str = "reflection", out_grid: LateralGrid | None = None,
                 dtype=np.complex128, strict: bool = True, cache_bytes: int = 2 ** 30):
        ok, margin = propagating_mode_check(profile, cfg, regime.epsilon)
        if not ok:
            raise DomainError(f"source generates non-propagating modes (margin {margin:.3g})")
        self.profile, self.cfg, self.regime, self.side = profile, cfg, regime, side
        self.strict = strict
        self.dtype = dtype
        self.bins = profile.band_bins()
        self.omegas = profile.time.omegas[self.bins]
        grid = profile.grid
        R, T = reflection_transmission_coefficients(cfg)
        s0, s1 = vertical_slowness(cfg, 0), vertical_slowness(cfg, 1)
        if side == "reflection":
            self.tau, self.prefactor, j2, z2 = 2 * s0, R / 2, 0, cfg.z_int
        elif side == "transmission":
            self.tau, self.prefactor, j2, z2 = s0 - s1, T / 2 * np.sqrt(s0 / s1), 1, cfg.z_tr - cfg.z_int
        else:
            raise ValueError("side must be 'reflection' or 'transmission'")
        ft = profile.temporal_spectrum()[self.bins]
        gl = profile.lateral_spectrum()
        inc = WaveField((ft[:, None, None] * gl[None]).astype(dtype), self.bins, profile.time, grid,
                        "wavenumber", 0.0, None)
        inc = propagate(inc, cfg, 0, cfg.z_int).to_space()
        inc.depth = cfg.z_int
        self.incident = inc
        self.out_grid = grid if out_grid is None else out_grid
        self.factor = None
        if out_grid is not None:
            m1, m2 = out_grid.d1 / grid.d1, out_grid.d2 / grid.d2
            if abs(m1 - round(m1)) > 1e-9 or abs(m2 - round(m2)) > 1e-9:
                raise ValueError("output spacing must be an integer multiple of the interface spacing")
            m1, m2 = int(round(m1)), int(round(m2))
            if grid.n1 % (2 * m1) or grid.n2 % (2 * m2):
                raise ValueError("interface grid size must be divisible by twice the decimation factor")
            if out_grid.n1 < grid.n1 // m1 or out_grid.n2 < grid.n2 // m2:
                raise ValueError("output grid must cover the interface grid")
            self.factor = (m1, m2)
        self.Q2 = _quadratic_form(cfg, j2, self.out_grid)
        self.z2 = z2
        self._propagators = None
        if cache_bytes and len(self.omegas) * self.Q2.size * np.dtype(dtype).itemsize <= cache_bytes:
            self._propagators = [np.exp(-1j * z2 * self.Q2 / w).astype(dtype) for w in self.omegas]
        self.frame = specular_frame(cfg, regime.epsilon, side)
        self.depth = 0.0 if side == "reflection" else cfg.z_tr

    def screen_grid(self) -> LateralGrid:
        return screen_grid(self.profile.grid, self.regime)

    def run(self, realization: InterfaceRealization | None = None) -> WaveField:
        inc = self.incident
        if realization is not None:
            _check_screen(inc, realization, self.regime, self.strict)
            screen = PhaseScreen(realization.values, self.tau)
        out = np.empty((len(self.bins),) + self.out_grid.shape, dtype=self.dtype)
        lost = np.zeros(len(self.bins))
        if realization is not None:
            # bins are uniformly spaced: advance the screen by one frequency step per bin
            mult = screen.multiplier(self.omegas[0])
            step = screen.multiplier(self.profile.time.domega)
        for k, w in enumerate(self.omegas):
            f = inc.data[k]
            if realization is not None:
                if k:
                    mult *= step
                    if k % 64 == 0:
                        mult = screen.multiplier(w)
                f = f * mult.astype(self.dtype, copy=False)
            if self.factor is not None:
                G, lost[k] = _lowpass_spectrum(f, self.profile.grid, self.out_grid, self.factor)
            else:
                G = self.profile.grid.forward(f)
            if self._propagators is not None:
                G = G * self._propagators[k]
            else:
                G = G * np.exp(-1j * self.z2 * self.Q2 / w)
            out[k] = self.prefactor * self.out_grid.inverse(G)
        meta = {"side": self.side, "discarded": lost, "seed": None if realization is None else realization.seed}
        return WaveField(out, self.bins, self.profile.time, self.out_grid, "space", self.depth, self.frame, meta)


def simulate_reflected(profile: SourceProfile, cfg: MediumConfig, regime: ScaleRegime,
                       realization: InterfaceRealization | None = None, **kw) -> WaveField:
    """Leading-order reflected field at the source plane in its specular frame.

    ``realization=None`` is the flat interface.
    """
    return SplitStepSimulator(profile, cfg, regime, "reflection", **kw).run(realization)


def simulate_transmitted(profile: SourceProfile, cfg: MediumConfig, regime: ScaleRegime,
                         realization: InterfaceRealization | None = None, **kw) -> WaveField:
    """Leading-order transmitted field at depth ``z_tr`` in its specular frame."""
    return SplitStepSimulator(profile, cfg, regime, "transmission", **kw).run(realization)


def window_specular(field: WaveField, cfg: MediumConfig, regime: ScaleRegime, s, y1, y2,
                    yt1=0.0, yt2=0.0, frame: FrameMap | None = None) -> np.ndarray:
    """Wavefront observed around a specular point in its moving frame.

    Samples the lab field at ``x = x0 + sqrt(eps) y + eps^gamma yt`` and
    ``t = t0 + sqrt(eps) k0.y + eps^gamma k0.yt + eps s``.

    Parameters
    ----------
    field : WaveField
        Simulated field with a lab-frame map.
    s, y1, y2, yt1, yt2 : array_like
        Broadcastable window coordinates.
    frame : FrameMap, optional
        Observation frame; defaults to the field's own specular frame.
    """
    if field.frame is None:
        raise ValueError("field has no lab-frame map")
    frame = field.frame if frame is None else frame
    eps = regime.epsilon
    se, eg = np.sqrt(eps), regime.corr_length
    k = frame.k0
    y1, y2, yt1, yt2, s = np.broadcast_arrays(*(np.asarray(a, float) for a in (y1, y2, yt1, yt2, s)))
    x1 = frame.x0[0] + se * y1 + eg * yt1
    x2 = frame.x0[1] + se * y2 + eg * yt2
    t = frame.t0 + k[0] * (x1 - frame.x0[0]) + k[1] * (x2 - frame.x0[1]) + eps * s
    sn, Y1, Y2 = field.frame.from_lab(t, x1, x2)
    return field.sample(sn, Y1, Y2)


def unwindow(field: WaveField, cfg: MediumConfig, regime: ScaleRegime, frame: FrameMap, s, Y1, Y2) -> tuple:
    """Window coordinates (with zero fine offset) of native field coordinates."""
    t, x1, x2 = field.frame.to_lab(s, Y1, Y2)
    return frame.from_lab(t, x1, x2)


@dataclass(frozen=True)
class JumpResiduals:
    """Relative residuals of the interface and source conditions."""

    source_jump: float
    source_derivative: float
    interface_value: float
    interface_derivative: float
    source_profile: float

    def max(self) -> float:
        return max(self.source_jump, self.source_derivative, self.interface_value,
                   self.interface_derivative, self.source_profile)


def _rel(a, scale):
    m = np.max(np.abs(scale)) if np.size(scale) else 0.0
    return float(np.max(np.abs(a)) / m) if m > 0 else float(np.max(np.abs(a), initial=0.0))


def jump_condition_check(profile: SourceProfile, cfg: MediumConfig, eps: float,
                         floor: float = 1e-15) -> JumpResiduals:
    """Check the modal solution of the flat two-layer problem.

    For every propagating mode the amplitudes of the down-going source
    wave, the up-going waves and the transmitted wave are built from the
    sampled source spectrum; the fields just above and below the source
    plane and the interface are then compared. The source jump, inverted
    back to the time domain, must reproduce the profile. Frequencies whose
    temporal spectrum is below ``floor`` times its peak are skipped.
    """
    time, grid = profile.time, profile.grid
    ft_all = profile.temporal_spectrum()
    mag = np.abs(ft_all)
    keep = np.nonzero(mag >= floor * mag.max())[0] if mag.max() > 0 else np.array([], dtype=int)
    keep = keep[keep > 0]
    gl = profile.lateral_spectrum()
    k1, k2 = grid.kappa_mesh()
    z = cfg.z_int
    se = np.sqrt(eps)
    e2 = eps * eps
    res = dict(sj=0.0, sd=0.0, iv=0.0, idr=0.0)
    scale = dict(sj=0.0, sd=0.0, iv=0.0, idr=0.0)
    if len(keep) == 0:
        return JumpResiduals(0.0, 0.0, 0.0, 0.0, 0.0)
    bins = np.arange(keep[0], keep[-1] + 1)
    jump = np.zeros((len(bins),) + grid.shape, dtype=complex)
    for i, b in enumerate(bins):
        wi = time.omegas[b]
        psi = ft_all[b] * gl
        kx = k1 / wi + cfg.k0[0] / se
        ky = k2 / wi + cfg.k0[1] / se
        kk = kx * kx + ky * ky
        prop = (eps * cfg.c0 ** 2 * kk < 1) & (eps * cfg.c1 ** 2 * kk < 1)
        if not np.any(prop):
            continue
        kv = np.stack([kx[prop], ky[prop]], axis=-1)
        a_s0 = vertical_slowness_eps(cfg, 0, kv, eps)
        a_s1 = vertical_slowness_eps(cfg, 1, kv, eps)
        p = psi[prop]
        tr, ref = flat_mode_scattering(cfg, kv, eps)
        ph = np.exp(1j * wi * a_s0 * z / eps)
        half = e2 * np.sqrt(wi * a_s0) / 2 * p
        a0 = half * ph
        b_ref = ref * a0
        a_tr = tr * a0
        b0 = -half + b_ref * ph
        n0, n1 = np.sqrt(wi * a_s0), np.sqrt(wi * a_s1)
        u_below = b0 / n0
        u_above = (a0 / ph + b_ref * ph) / n0
        du_below = -1j * wi * a_s0 / eps * b0 / n0
        du_above = 1j * wi * a_s0 / eps * (a0 / ph - b_ref * ph) / n0
        ui_above = (a0 + b_ref) / n0
        ui_below = a_tr / n1
        dui_above = 1j * wi * a_s0 / eps * (a0 - b_ref) / n0
        dui_below = 1j * wi * a_s1 / eps * a_tr / n1
        for key, r, sc in (("sj", u_above - u_below - e2 * p, e2 * p),
                           ("sd", du_above - du_below, wi * a_s0 / eps * e2 * p),
                           ("iv", ui_above - ui_below, ui_above),
                           ("idr", dui_above - dui_below, dui_above)):
            res[key] = max(res[key], float(np.max(np.abs(r), initial=0.0)))
            scale[key] = max(scale[key], float(np.max(np.abs(sc), initial=0.0)))
        plane = np.zeros(grid.shape, dtype=complex)
        plane[prop] = (u_above - u_below) / e2
        jump[i] = grid.inverse(plane)
    out = {k: (res[k] / scale[k] if scale[k] > 0 else res[k]) for k in res}
    back = inverse_temporal_transform(jump, time, start=int(bins[0]))
    ref = profile.samples()
    src = _rel(back - ref, ref)
    return JumpResiduals(out["sj"], out["sd"], out["iv"], out["idr"], src)
