"""Population bookkeeping over the inhomogeneous line and absorption readout.

Ions are grouped into classes by their optical center frequency (one class
per grid bin). Each class carries a population in each of the three ground
hyperfine levels; an ion of center ``c`` in level ``g`` absorbs at
``c + excited_offsets[e] - ground_offsets[g]`` for every excited level ``e``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .materials import Material

DEFAULT_BIN_WIDTH = 0.05
DEFAULT_LASER_FWHM = 2.0
# readout kernel is truncated at this many FWHM on each side
KERNEL_RADIUS_FWHM = 20.0
MAX_BINS = 10_000_000


class SpectralEdgeError(ValueError):
    """A frequency needs ion classes that lie outside the simulated window."""


@dataclass(frozen=True)
class GridSpec:
    window_lo: float
    window_hi: float
    bin_width: float = DEFAULT_BIN_WIDTH

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin_width must be > 0")
        if not self.window_lo < self.window_hi:
            raise ValueError("window_lo must be < window_hi")
        if self.n_bins > MAX_BINS:
            raise ValueError(f"grid has {self.n_bins} bins, limit is {MAX_BINS}")

    @property
    def n_bins(self):
        return int(math.ceil((self.window_hi - self.window_lo) / self.bin_width - 1e-9))

    @property
    def centers(self):
        return self.window_lo + (np.arange(self.n_bins) + 0.5) * self.bin_width

    def index(self, freq):
        """Bin index containing ``freq`` (may fall outside 0..n_bins-1).

        A frequency on a bin edge belongs to the upper bin, also after rounding.
        """
        x = (np.asarray(freq, dtype=float) - self.window_lo) / self.bin_width
        return np.floor(x + 1e-9).astype(np.int64)


@dataclass
class SpectralState:
    material: Material
    grid: GridSpec
    pop: np.ndarray  # (n_isotopes, n_bins, 3)
    weight: np.ndarray  # (n_isotopes, n_bins)

    def copy(self):
        return SpectralState(self.material, self.grid, self.pop.copy(), self.weight.copy())

    def conservation_error(self):
        return float(np.max(np.abs(self.pop.sum(axis=2) - self.weight)))


@dataclass
class AbsorptionTrace:
    freqs: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.freqs.shape != self.alpha.shape:
            raise ValueError("freqs and alpha must have the same length")

    def to_csv(self):
        lines = ["freq_mhz,alpha_rel"]
        lines += [f"{f:.9g},{a:.9g}" for f, a in zip(self.freqs, self.alpha)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text):
        rows = text.strip().splitlines()
        if rows[0].strip() != "freq_mhz,alpha_rel":
            raise ValueError("unexpected trace header")
        data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]]).reshape(-1, 2)
        return cls(data[:, 0], data[:, 1])


def profile_weight(material, freqs):
    """Relative inhomogeneous profile at MHz offsets ``freqs`` (1 at line center)."""
    freqs = np.asarray(freqs, dtype=float)
    if material.profile_shape == "flat":
        return np.ones_like(freqs)
    fwhm = material.inhom_fwhm * 1e3
    return np.exp(-4.0 * math.log(2.0) * (freqs / fwhm) ** 2)


def new_state(material, grid):
    """Thermal state: every class spread evenly over the three ground levels."""
    prof = profile_weight(material, grid.centers)
    weight = np.array([iso.abundance * prof for iso in material.isotopes])
    pop = np.repeat(weight[:, :, None] / 3.0, 3, axis=2)
    return SpectralState(material, grid, pop, weight)


def lorentz_kernel(fwhm, bin_width, radius_fwhm=KERNEL_RADIUS_FWHM):
    """Lorentzian sampled on the bin grid, truncated and normalized to unit sum."""
    half = int(math.ceil(radius_fwhm * fwhm / bin_width))
    x = np.arange(-half, half + 1) * bin_width
    k = 1.0 / (1.0 + (2.0 * x / fwhm) ** 2)
    return k / k.sum()


def _smoothed_pop(state, fwhm):
    if fwhm <= 0:
        return state.pop, 0
    kern = lorentz_kernel(fwhm, state.grid.bin_width)
    half = len(kern) // 2
    sm = fftconvolve(state.pop, kern[None, :, None], mode="same", axes=1)
    return sm, half


def absorption_spectrum(state, freqs, fwhm=DEFAULT_LASER_FWHM):
    """Relative absorption at ``freqs`` (MHz).

    ``fwhm`` is the Lorentzian probe width; ``fwhm=0`` returns the intrinsic
    (unsmoothed) absorption of the ion classes. An unburned flat line reads 1.
    """
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    pops, half = _smoothed_pop(state, fwhm)
    n = state.grid.n_bins
    alpha = np.zeros_like(freqs)
    for k, iso in enumerate(state.material.isotopes):
        for g in range(3):
            for e in range(3):
                off = iso.excited_offsets[e] - iso.ground_offsets[g]
                idx = state.grid.index(freqs - off)
                if idx.min() < half or idx.max() > n - 1 - half:
                    raise SpectralEdgeError(
                        f"readout at {freqs.min():.6g}..{freqs.max():.6g} MHz needs ion classes outside "
                        f"the window {state.grid.window_lo:.6g}..{state.grid.window_hi:.6g} MHz")
                alpha += pops[k, idx, g]
    return AbsorptionTrace(freqs, alpha / 3.0)


def scan_freqs(grid, lo, hi):
    """Readout points from ``lo`` to ``hi`` spaced by the bin width."""
    n = max(2, int(round((hi - lo) / grid.bin_width)) + 1)
    return np.linspace(lo, hi, n)


def _merge(values, tol):
    out = []
    for v in sorted(values):
        if not out or v - out[-1] > tol:
            out.append(v)
    return tuple(out)


def hole_antihole_offsets(iso, tol=1e-6):
    """Offsets of side-holes and anti-holes produced by burning at a single frequency.

    Every ground/excited combination is assumed to be burned. Accepts an
    :class:`Isotope` or a :class:`Material` (union over its isotopes).
    """
    if isinstance(iso, Material):
        side, anti = set(), set()
        for i in iso.isotopes:
            s, a = hole_antihole_offsets(i, tol)
            side.update(s)
            anti.update(a)
        return _merge(side, tol), _merge(anti, tol)
    exc = np.asarray(iso.excited_offsets)
    gnd = np.asarray(iso.ground_offsets)
    ediff = (exc[None, :] - exc[:, None]).ravel()
    gdiff = (gnd[:, None] - gnd[None, :])[~np.eye(3, dtype=bool)]
    side = [float(d) for d in ediff if abs(d) > tol]
    anti = [float(d) for d in np.add.outer(ediff, gdiff).ravel() if abs(d) > tol]
    return _merge(side, tol), _merge(anti, tol)
