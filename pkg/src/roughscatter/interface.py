"""Stationary random interface elevation: synthesis, marginal statistics and scattering distribution.

Lengths here are in units of the correlation length. The default model is
a Gaussian field with covariance ``sigma^2 exp(-|y|^2 / 2 rho^2)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import fft as sfft
from scipy.interpolate import RegularGridInterpolator
from scipy.special import gammaln

from .source import LateralGrid

SPECTRAL_TOL = 1e-10


def _gaussian_cf(u, sigma):
    return np.exp(-0.5 * (np.asarray(u, dtype=float) * sigma) ** 2) + 0j


def _gaussian_pdf(v, sigma):
    v = np.asarray(v, dtype=float)
    return np.exp(-0.5 * (v / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))


# Marginal laws: name -> (characteristic function, density). New laws only
# need closed forms here; synthesis of non-Gaussian fields is not provided.
MARGINALS = {"gaussian": (_gaussian_cf, _gaussian_pdf)}


@dataclass(frozen=True)
class InterfaceModel:
    """Statistical model of the elevation field.

    Parameters
    ----------
    sigma : float
        Marginal standard deviation.
    correlation : {'gaussian', 'custom'}
        Correlation family. ``'custom'`` uses ``covariance_fn``.
    radius : float
        Correlation radius of the Gaussian family.
    marginal : str
        Key of :data:`MARGINALS`.
    covariance_fn : callable, optional
        ``R(y1, y2)`` for the custom family; checked for positive
        definiteness on every synthesis grid.
    """

    sigma: float = 1.0
    correlation: str = "gaussian"
    radius: float = 1.0
    marginal: str = "gaussian"
    covariance_fn: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.correlation not in ("gaussian", "custom"):
            raise ValueError(f"unknown correlation family {self.correlation!r}")
        if self.correlation == "custom" and self.covariance_fn is None:
            raise ValueError("custom correlation requires covariance_fn")
        if self.radius <= 0:
            raise ValueError("correlation radius must be positive")
        if self.marginal not in MARGINALS:
            raise ValueError(f"unknown marginal law {self.marginal!r}")

    @property
    def is_gaussian(self) -> bool:
        return self.correlation == "gaussian" and self.marginal == "gaussian"

    def covariance(self, y1, y2) -> np.ndarray:
        if self.correlation == "custom":
            return np.asarray(self.covariance_fn(y1, y2), dtype=float)
        r2 = (np.asarray(y1) ** 2 + np.asarray(y2) ** 2) / self.radius ** 2
        return self.sigma ** 2 * np.exp(-0.5 * r2)

    def spectral_density(self, k1, k2) -> np.ndarray:
        """``int R(y) exp(-i k.y) dy`` for the Gaussian family."""
        if self.correlation != "gaussian":
            raise NotImplementedError("closed-form spectral density only for the Gaussian family")
        rho = self.radius
        return 2 * np.pi * rho * rho * self.sigma ** 2 * np.exp(
            -0.5 * rho * rho * (np.asarray(k1) ** 2 + np.asarray(k2) ** 2))

    def characteristic_function(self, u) -> np.ndarray:
        return MARGINALS[self.marginal][0](u, self.sigma)

    def marginal_density(self, v) -> np.ndarray:
        return MARGINALS[self.marginal][1](v, self.sigma)

    def increment_cf(self, a: float, y1, y2) -> np.ndarray:
        """``E exp(i a (V(y) - V(0)))`` for a Gaussian field."""
        if self.marginal != "gaussian":
            raise NotImplementedError("increment law only for Gaussian fields")
        return np.exp(-a * a * (self.sigma ** 2 - self.covariance(y1, y2))) + 0j


@dataclass(frozen=True)
class InterfaceRealization:
    """Elevation samples on a periodic grid (correlation-length units).

    The grid origin corresponds to the point where the incident beam hits
    the interface; stationarity makes this shift immaterial statistically.
    """

    values: np.ndarray = field(repr=False)
    grid: LateralGrid
    seed: tuple | None = None
    model: InterfaceModel | None = None

    @classmethod
    def constant(cls, h: float, grid: LateralGrid) -> "InterfaceRealization":
        return cls(np.full(grid.shape, float(h)), grid, None, None)


def realization_seed(master: int, index: int) -> np.random.SeedSequence:
    """Independent stream for realization ``index`` of a master seed."""
    return np.random.SeedSequence(int(master), spawn_key=(int(index),))


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, tuple):
        return realization_seed(*seed)
    return np.random.SeedSequence(int(seed))


def circulant_eigenvalues(model: InterfaceModel, grid: LateralGrid) -> np.ndarray:
    """Eigenvalues of the periodic covariance matrix on ``grid``.

    Raises
    ------
    ValueError
        If the covariance is not positive definite on the grid.
    """
    c = model.covariance(*grid.mesh())
    lam = sfft.fft2(sfft.ifftshift(c)).real
    top = max(np.max(lam), 0.0)
    if top > 0 and np.min(lam) < -SPECTRAL_TOL * top:
        raise ValueError("covariance is not positive definite on this grid "
                         f"(min eigenvalue {np.min(lam):.3e})")
    return np.clip(lam, 0, None)


def synthesize(model: InterfaceModel, grid: LateralGrid, seed, eigenvalues: np.ndarray | None = None
               ) -> InterfaceRealization:
    """Gaussian field with the periodic covariance of ``model`` on ``grid``.

    Uses circulant embedding: the covariance of the output equals the
    model covariance at minimal-image lags exactly.
    """
    ss = _seed_sequence(seed)
    key = (int(ss.entropy), tuple(int(k) for k in ss.spawn_key))
    if model.sigma == 0:
        return InterfaceRealization(np.zeros(grid.shape), grid, key, model)
    if model.marginal != "gaussian":
        raise NotImplementedError("spectral synthesis yields Gaussian marginals only")
    lam = circulant_eigenvalues(model, grid) if eigenvalues is None else eigenvalues
    rng = np.random.default_rng(ss)
    white = rng.standard_normal(grid.shape)
    v = sfft.ifft2(np.sqrt(lam) * sfft.fft2(white)).real
    return InterfaceRealization(v, grid, key, model)


def empirical_covariance(realizations) -> np.ndarray:
    """Ensemble and lateral average of ``V(x+y) V(x)``, centred lags."""
    acc = None
    for r in realizations:
        f = sfft.fft2(r.values)
        c = sfft.ifft2(np.abs(f) ** 2).real / r.values.size
        acc = c if acc is None else acc + c
    return sfft.fftshift(acc / len(realizations))


def characteristic_function(model: InterfaceModel, u) -> np.ndarray:
    """Characteristic function of the marginal law."""
    return model.characteristic_function(u)


def characteristic_function_mc(samples, u):
    """Monte Carlo estimate of ``E exp(i u V)`` with its standard error."""
    samples = np.ravel(samples)
    z = np.exp(1j * np.multiply.outer(np.atleast_1d(u), samples))
    est = z.mean(axis=-1)
    se = np.sqrt((np.var(z.real, axis=-1, ddof=1) + np.var(z.imag, axis=-1, ddof=1)) / samples.size)
    return est, se


def pulse_shaping_kernel(model: InterfaceModel, s0: float, s) -> np.ndarray:
    """Travel-time density ``f_V(s / 2 s0) / (2 s0)`` of the specular pulse."""
    if model.sigma == 0:
        raise ValueError("flat interface: the kernel is a Dirac mass")
    return model.marginal_density(np.asarray(s, dtype=float) / (2 * s0)) / (2 * s0)


@dataclass(frozen=True)
class PGrid:
    """Centred square grid of lateral slownesses ``p = (i - n//2) dp``."""

    n: int
    dp: float

    @property
    def p(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dp


@dataclass(frozen=True)
class ScatteringDistribution:
    """Atom at ``p = 0`` plus a sampled continuous density."""

    v: float
    omega: float
    atom: float
    p1: np.ndarray = field(repr=False)
    p2: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    mass: float = 0.0
    imag_residual: float = 0.0
    density_se: np.ndarray | None = field(default=None, repr=False)
    atom_se: float | None = None
    model: InterfaceModel | None = field(default=None, repr=False)

    @property
    def dp(self):
        return (self.p1[1] - self.p1[0], self.p2[1] - self.p2[0])

    @property
    def peak(self) -> float:
        return float(np.max(self.density))

    def density_at(self, p1, p2) -> np.ndarray:
        """Continuous density at arbitrary slownesses.

        Uses the exact series for Gaussian fields and cubic interpolation
        of the sampled density otherwise.
        """
        if self.model is not None and self.model.is_gaussian:
            return gaussian_density(self.model, self.v, self.omega, p1, p2)
        interp = RegularGridInterpolator((self.p1, self.p2), self.density, method="cubic",
                                         bounds_error=False, fill_value=0.0)
        p1, p2 = np.broadcast_arrays(p1, p2)
        return interp(np.stack([p1, p2], axis=-1))


def gaussian_density(model: InterfaceModel, v: float, omega: float, p1, p2, tol: float = 1e-17):
    """Continuous density for Gaussian covariance and marginal, by series.

    ``exp(-a^2) sum_n a^(2n)/n! * (2 pi rho^2 / n) exp(-rho^2 w^2 |p|^2 / 2n)``
    with ``a = w v sigma``.
    """
    a2 = (omega * v * model.sigma) ** 2
    rho = model.radius
    pp = (np.asarray(p1, dtype=float) ** 2 + np.asarray(p2, dtype=float) ** 2) * (rho * omega) ** 2
    out = np.zeros(np.broadcast(pp).shape)
    if a2 == 0:
        return out
    n = 1
    while True:
        logc = -a2 + n * np.log(a2) - gammaln(n + 1)
        coef = np.exp(logc) * 2 * np.pi * rho * rho / n
        out = out + coef * np.exp(-pp / (2 * n))
        if coef < tol * max(out.max(), 1e-300) and n > a2:
            break
        n += 1
    return out


def scattering_distribution(model: InterfaceModel, v: float, omega: float, p_grid: PGrid
                            ) -> ScatteringDistribution:
    """Scattering distribution from the closed-form increment law.

    ``g(y) = E exp(i w v (V(y) - V(0)))`` splits into the constant
    ``|phi(w v)|^2`` (atom of weight ``(2 pi)^2 |phi|^2 / w^2``) and a
    decaying part whose Fourier transform at ``w p`` is the density.
    """
    if omega == 0:
        raise ValueError("omega must be non-zero")
    n, dp = p_grid.n, p_grid.dp
    dy = 2 * np.pi / (n * abs(omega) * dp)
    ygrid = LateralGrid.square(n, dy)
    a = omega * v
    g_inf = abs(model.characteristic_function(a)) ** 2
    atom = (2 * np.pi) ** 2 * g_inf / omega ** 2
    if model.sigma == 0 or v == 0:
        dens = np.zeros((n, n))
        resid = 0.0
    else:
        h = model.increment_cf(a, *ygrid.mesh()) - g_inf
        edge = max(np.max(np.abs(h[0])), np.max(np.abs(h[:, 0])))
        if edge > 1e-6:
            warnings.warn(f"increment law not decayed at grid edge ({edge:.2e}); aliasing risk",
                          RuntimeWarning, stacklevel=2)
        spec = sfft.fftshift(ygrid.forward(h))
        # p = kappa / omega; flip for negative omega so the grid stays increasing
        if omega < 0:
            spec = spec[::-1, ::-1]
        dens = spec.real
        resid = float(np.max(np.abs(spec.imag)))
    mass = atom + float(np.sum(dens) * dp * dp)
    return ScatteringDistribution(v, omega, atom, p_grid.p, p_grid.p, dens, mass, resid, model=model)


def _block_mean(a: np.ndarray, b: int) -> np.ndarray:
    """Average ``b x b`` blocks centred on the centre index and its multiples of ``b``."""
    if b == 1:
        return a
    n1, n2 = a.shape
    out = []
    for n, axis in ((n1, 0), (n2, 1)):
        c = n // 2
        jmin = -((c - b // 2) // b)
        jmax = (n - 1 - c - b // 2) // b
        out.append((c + np.arange(jmin, jmax + 1) * b - b // 2))
    s1, s2 = out
    res = np.empty((len(s1), len(s2)))
    for i, a1 in enumerate(s1):
        rows = a[a1:a1 + b]
        for j, a2 in enumerate(s2):
            res[i, j] = rows[:, a2:a2 + b].mean()
    return res


def _block_centres(p: np.ndarray, b: int) -> np.ndarray:
    if b == 1:
        return p
    n = len(p)
    c = n // 2
    jmin = -((c - b // 2) // b)
    jmax = (n - 1 - c - b // 2) // b
    return p[c + np.arange(jmin, jmax + 1) * b]


def bin_distribution(sd: ScatteringDistribution, b: int) -> ScatteringDistribution:
    """Average the density over ``b x b`` blocks (``b`` odd, centred on ``p = 0``)."""
    if b % 2 == 0:
        raise ValueError("block size must be odd")
    dens = _block_mean(sd.density, b)
    se = None
    if sd.density_se is not None:
        se = np.sqrt(_block_mean(sd.density_se ** 2, b)) / b
    return ScatteringDistribution(sd.v, sd.omega, sd.atom, _block_centres(sd.p1, b), _block_centres(sd.p2, b),
                                  dens, sd.mass, sd.imag_residual, se, sd.atom_se, sd.model)


def scattering_distribution_mc(realizations, v: float, omega: float, bin_size: int = 1
                               ) -> ScatteringDistribution:
    """Empirical scattering distribution from realizations on a common grid.

    The density at ``w p = kappa != 0`` is the ensemble-mean periodogram of
    ``exp(i w v V)``, which is the Fourier transform of the laterally
    averaged increment law. The atom uses the unbiased pair estimator
    ``sum_{i != j} m_i conj(m_j) / (N (N - 1))`` of ``|E exp(i w v V)|^2``.
    The p-grid is the realization grid's dual, ``p = kappa / w``.
    """
    realizations = list(realizations)
    if len(realizations) < 2:
        raise ValueError("at least two realizations are required")
    grid = realizations[0].grid
    npts = grid.n1 * grid.n2
    area = npts * grid.cell
    a = omega * v
    means = []
    acc = np.zeros(grid.shape)
    acc2 = np.zeros(grid.shape)
    for r in realizations:
        z = np.exp(1j * a * r.values)
        f = sfft.fft2(z)
        per = grid.cell / npts * np.abs(f) ** 2
        means.append(f[0, 0] / npts)
        acc += per
        acc2 += per * per
    nr = len(realizations)
    m = np.array(means)
    tot = np.sum(m)
    g_inf = float(((abs(tot) ** 2 - np.sum(np.abs(m) ** 2)) / (nr * (nr - 1))).real)
    # jackknife standard error of the pair estimator
    loo = []
    for i in range(nr):
        t = tot - m[i]
        s2 = np.sum(np.abs(m) ** 2) - abs(m[i]) ** 2
        loo.append((abs(t) ** 2 - s2) / ((nr - 1) * (nr - 2)) if nr > 2 else g_inf)
    loo = np.array(loo).real
    g_se = float(np.sqrt((nr - 1) / nr * np.sum((loo - loo.mean()) ** 2))) if nr > 2 else float("nan")
    mean = acc / nr
    var = np.maximum(acc2 / nr - mean * mean, 0) * nr / max(nr - 1, 1)
    se = np.sqrt(var / nr)
    mean[0, 0] -= area * g_inf
    dens = sfft.fftshift(mean)
    se = sfft.fftshift(se)
    if omega < 0:
        dens = dens[::-1, ::-1]
        se = se[::-1, ::-1]
    k1, k2 = grid.wavenumbers()
    p1 = sfft.fftshift(k1) / abs(omega)
    p2 = sfft.fftshift(k2) / abs(omega)
    dp1, dp2 = p1[1] - p1[0], p2[1] - p2[0]
    atom = (2 * np.pi) ** 2 * g_inf / omega ** 2
    atom_se = (2 * np.pi) ** 2 * g_se / omega ** 2
    mass = atom + float(np.sum(dens) * dp1 * dp2)
    sd = ScatteringDistribution(v, omega, atom, p1, p2, dens, mass, 0.0, se, atom_se,
                                realizations[0].model)
    return bin_distribution(sd, bin_size) if bin_size > 1 else sd


def mixing_diagnostic(realizations, r_values, u_values=(0.5, 1.0, 2.0)) -> np.ndarray:
    """Largest empirical correlation of ``exp(i u V)`` at lateral separation ``r``.

    Separations are along either grid axis and are applied by a Fourier
    shift, so they need not be multiples of the spacing. Degenerate
    (constant) fields give 0.
    """
    realizations = list(realizations)
    grid = realizations[0].grid
    k1, k2 = grid.wavenumbers()
    out = []
    for r in np.atleast_1d(r_values):
        best = 0.0
        for u in u_values:
            zs = [np.exp(1j * u * x.values) for x in realizations]
            m = np.mean([z.mean() for z in zs])
            var = np.mean([np.mean(np.abs(z - m) ** 2) for z in zs])
            if var < 1e-24:
                continue
            for kk, ax in ((k1, 0), (k2, 1)):
                ph = np.exp(1j * kk * r).reshape((-1, 1) if ax == 0 else (1, -1))
                cov = 0j
                for z in zs:
                    d = z - m
                    shifted = sfft.ifft2(sfft.fft2(d) * ph)
                    cov += np.mean(shifted * np.conj(d))
                best = max(best, abs(cov / len(zs)) / var)
        out.append(best)
    return np.array(out)


def symmetrize_lags(c: np.ndarray) -> np.ndarray:
    """Average a centred lag array over the eight symmetries of a square grid.

    Valid for isotropic models sampled with equal spacings; the centre
    index is the zero lag.
    """
    n1, n2 = c.shape
    if n1 != n2 or n1 % 2:
        raise ValueError("symmetrization needs an even square lag array")
    # re-centre so that zero lag sits in the middle of an odd array
    core = c[1:, 1:]
    acc = np.zeros_like(core)
    for k in range(4):
        r = np.rot90(core, k)
        acc += r + r.T
    out = c.copy()
    out[1:, 1:] = acc / 8
    return out
