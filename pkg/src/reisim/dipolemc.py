"""Monte Carlo statistics of dipole-dipole frequency shifts.

A probe ion sits at the origin. Excited perturbers form a Poisson point
process of density ``excited_density`` inside a sphere (radius
``volume_radius``) with a small hole of radius ``exclusion_radius`` around
the probe. Each perturber shifts the probe transition by the static
dipole-dipole energy

    dE = L * |mu|^2 / (4 pi eps eps0 r^3) * (m1.m2 - 3 (m1.r)(r.m2))

with the local-field factor ``L = ((eps + 2) / 3) ** local_field_power``,
and the probe shift is the sum over perturbers, divided by h.

Random numbers come from Philox streams keyed by ``(seed, block)`` with a
fixed block size, so results do not depend on how blocks are spread over
worker processes.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np
from scipy import constants
from scipy.optimize import curve_fit

from .io import dumps

BLOCK = 8192
N_HIST_BINS = 2001
HIST_HALF_RANGE = 20.0  # in robust widths
DEFAULT_EXCLUSION = 0.35e-9  # m
DEFAULT_MEAN_COUNT = 64.0  # mean perturbers per sampling sphere
ISOTROPIC_MEAN_ABS_ANGULAR = 0.5 * (1.0 + math.asinh(math.sqrt(3.0)) / (2.0 * math.sqrt(3.0)))
FIXED_AXIS_MEAN_ABS_ANGULAR = 4.0 / (3.0 * math.sqrt(3.0))


class LorentzianFitError(ValueError):
    pass


@dataclass(frozen=True)
class DipoleParams:
    epsilon: float
    delta_mu: float
    orientation_model: str = "isotropic_random"
    excited_density: float = 0.0
    exclusion_radius: float = DEFAULT_EXCLUSION
    volume_radius: float = 50e-9
    local_field_power: int = 1
    pinned_position: tuple = None  # test mode: one perturber at this r vector (m)

    def __post_init__(self):
        if self.orientation_model not in ("isotropic_random", "fixed_axis"):
            raise ValueError(f"unknown orientation model {self.orientation_model!r}")
        if not self.excited_density >= 0:
            raise ValueError("excited_density must be >= 0")
        if not 0 < self.exclusion_radius < self.volume_radius:
            raise ValueError("need 0 < exclusion_radius < volume_radius")
        if self.local_field_power not in (1, 2):
            raise ValueError("local_field_power must be 1 or 2")
        if self.epsilon < 1 or self.delta_mu < 0:
            raise ValueError("need epsilon >= 1 and delta_mu >= 0")
        if self.pinned_position is not None:
            r = tuple(float(x) for x in self.pinned_position)
            if len(r) != 3 or math.sqrt(sum(x * x for x in r)) < self.exclusion_radius:
                raise ValueError("pinned_position must be a 3-vector outside the exclusion radius")
            object.__setattr__(self, "pinned_position", r)

    @property
    def coupling(self):
        """Prefactor of the angular factor / r^3 in Hz m^3."""
        lf = ((self.epsilon + 2.0) / 3.0) ** self.local_field_power
        unit = lf / (4.0 * math.pi * self.epsilon * constants.epsilon_0 * constants.h)
        return (self.delta_mu * self.delta_mu) * unit

    @property
    def mean_count(self):
        shell = self.volume_radius ** 3 - self.exclusion_radius ** 3
        return self.excited_density * (4.0 * math.pi / 3.0) * shell

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return DipoleParams(**d)

    def to_dict(self):
        return asdict(self)


def auto_volume_radius(density, exclusion_radius=DEFAULT_EXCLUSION, mean_count=DEFAULT_MEAN_COUNT):
    """Sphere radius holding ``mean_count`` perturbers on average."""
    if density <= 0:
        return 100.0 * exclusion_radius
    r = (3.0 * mean_count / (4.0 * math.pi * density)) ** (1.0 / 3.0)
    return max(r, 4.0 * exclusion_radius)


def params_for(material, density, exclusion_radius=DEFAULT_EXCLUSION, mean_count=DEFAULT_MEAN_COUNT,
               volume_radius=None, local_field_power=1):
    if volume_radius is None:
        volume_radius = auto_volume_radius(density, exclusion_radius, mean_count)
    return DipoleParams(material.epsilon, material.delta_mu, material.orientation_model,
                        density, exclusion_radius, volume_radius, local_field_power)


def pair_shift(mu1_dir, mu2_dir, r_vec, params):
    """Frequency shift (Hz) of ion 1 caused by the dipole change of ion 2 at ``r_vec``."""
    m1 = np.asarray(mu1_dir, dtype=float)
    m2 = np.asarray(mu2_dir, dtype=float)
    r = np.asarray(r_vec, dtype=float)
    for name, v in (("mu1_dir", m1), ("mu2_dir", m2)):
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ValueError(f"{name} must be a unit vector")
    dist = float(np.linalg.norm(r))
    if dist < params.exclusion_radius:
        raise ValueError(f"separation {dist:.3e} m is inside the exclusion radius")
    rhat = r / dist
    ang = m1 @ m2 - 3.0 * (m1 @ rhat) * (rhat @ m2)
    return params.coupling * ang / dist ** 3


def _unit_vectors(rng, n):
    z = 2.0 * rng.random(n) - 1.0
    phi = 2.0 * math.pi * rng.random(n)
    s = np.sqrt(1.0 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def _block_rng(seed, block):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def _block_geometric_sums(params, seed, block, n):
    """Per-trial sum of angular / r^3 for ``n`` trials of one block (m^-3)."""
    rng = _block_rng(seed, block)
    iso = params.orientation_model == "isotropic_random"
    zhat = np.array([0.0, 0.0, 1.0])
    probe = _unit_vectors(rng, n) if iso else np.broadcast_to(zhat, (n, 3))
    if params.pinned_position is not None:
        counts = np.ones(n, dtype=np.int64)
        r = np.asarray(params.pinned_position)
        dist = math.sqrt(float(r @ r))
        rhat = np.broadcast_to(r / dist, (n, 3))
        radius = np.full(n, dist)
    else:
        counts = rng.poisson(params.mean_count, n)
        total = int(counts.sum())
        t_ex = params.exclusion_radius / params.volume_radius
        u = rng.random(total)
        t = np.cbrt(t_ex ** 3 + u * (1.0 - t_ex ** 3))
        radius = params.volume_radius * t
        rhat = _unit_vectors(rng, total)
    total = int(counts.sum())
    pert = _unit_vectors(rng, total) if iso else np.broadcast_to(zhat, (total, 3))
    owner = np.repeat(np.arange(n), counts)
    m1 = probe[owner]
    ang = np.einsum("ij,ij->i", m1, pert) - 3.0 * np.einsum("ij,ij->i", m1, rhat) * np.einsum("ij,ij->i", rhat, pert)
    contrib = ang / (radius * radius * radius)
    return np.bincount(owner, weights=contrib, minlength=n)


def _blocks(trials):
    nb = (trials + BLOCK - 1) // BLOCK
    return [(b, min(BLOCK, trials - b * BLOCK)) for b in range(nb)]


def _run_block(args):
    params, seed, block, n = args
    return _block_geometric_sums(params, seed, block, n)


def sample_shifts(params, trials, seed, workers=1):
    """Probe frequency shifts in Hz, one per trial."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if params.excited_density == 0 and params.pinned_position is None:
        return np.zeros(trials)
    jobs = [(params, seed, b, n) for b, n in _blocks(trials)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_block, jobs))
    else:
        parts = [_run_block(j) for j in jobs]
    return params.coupling * np.concatenate(parts)


@dataclass
class DisplacementHistogram:
    bin_edges: np.ndarray  # MHz
    counts: np.ndarray
    trials: int
    seed: int
    params: DipoleParams = None

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def bin_width(self):
        return float(self.bin_edges[1] - self.bin_edges[0])


def histogram_shifts(shifts_mhz, trials, seed, params=None, n_bins=N_HIST_BINS, half_range=None):
    """Histogram with overflow folded into the outermost bins (counts always sum to ``trials``).

    Without ``half_range`` the range is +/-20 robust widths, the width being
    the median |shift| of the first 1 % of trials (the HWHM for a Lorentzian).
    """
    shifts_mhz = np.asarray(shifts_mhz, dtype=float)
    if half_range is None:
        pilot = shifts_mhz[: max(1, int(math.ceil(0.01 * len(shifts_mhz))))]
        width = float(np.median(np.abs(pilot)))
        half_range = HIST_HALF_RANGE * width if width > 0 else 1.0
    edges = np.linspace(-half_range, half_range, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, shifts_mhz, side="right") - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins).astype(np.int64)
    return DisplacementHistogram(edges, counts, int(trials), int(seed), params)


def sample_displacement(params, trials, seed, workers=1):
    """Sample D(dnu) and return it as a histogram (shifts in MHz)."""
    shifts = sample_shifts(params, trials, seed, workers) * 1e-6
    return histogram_shifts(shifts, trials, seed, params)


@dataclass(frozen=True)
class LorentzianFit:
    center: float  # MHz
    fwhm: float  # MHz
    amplitude: float  # peak probability density, 1/MHz
    rms_residual: float  # relative to the peak
    center_err: float = 0.0

    def __post_init__(self):
        if not self.fwhm > 0:
            raise LorentzianFitError("fit returned a non-positive width")


def lorentzian(x, amplitude, center, fwhm):
    return amplitude / (1.0 + ((x - center) / (0.5 * fwhm)) ** 2)


def fit_lorentzian(hist):
    """Least-squares Lorentzian through the bin densities (edge bins excluded).

    An unweighted fit is refined with Poisson weights taken from the fitted
    model; weights from the observed counts would bias the width low, since
    sparse tail bins that fluctuate down get the most weight.
    """
    if hist.trials < 1000:
        raise LorentzianFitError(f"need at least 1000 trials, got {hist.trials}")
    counts = hist.counts[1:-1]
    x = hist.centers[1:-1]
    if np.count_nonzero(counts) < 10:
        raise LorentzianFitError("histogram is degenerate (fewer than 10 non-empty bins)")
    norm = hist.trials * hist.bin_width
    y = counts / norm
    peak = float(y.max())
    i = int(np.argmax(y))
    above = x[y >= peak / 2]
    w0 = max(float(above.max() - above.min()), 2 * hist.bin_width)
    try:
        p0, _ = curve_fit(lorentzian, x, y, p0=(peak, float(x[i]), w0), maxfev=20000)
        sigma = np.sqrt(np.maximum(lorentzian(x, *p0) * norm, 1.0)) / norm
        popt, pcov = curve_fit(lorentzian, x, y, p0=p0, sigma=sigma, absolute_sigma=True, maxfev=20000)
    except RuntimeError as err:
        raise LorentzianFitError(str(err)) from None
    amp, center, fwhm = popt
    resid = y - lorentzian(x, *popt)
    rms = float(np.sqrt(np.mean(resid ** 2)) / amp)
    err = float(np.sqrt(pcov[1, 1])) if np.isfinite(pcov[1, 1]) else float("inf")
    return LorentzianFit(float(center), float(abs(fwhm)), float(amp), rms, err)


def analytic_fwhm(params):
    """Dilute-limit Lorentzian FWHM (MHz) of D(dnu) for a continuum of dipoles.

    For shifts ~ a/r^3 the characteristic function is exp(-gamma |k|) with
    gamma = (2 pi^2 / 3) rho C <|a|>; the exclusion sphere and finite
    sampling volume are ignored.
    """
    mean_abs = (ISOTROPIC_MEAN_ABS_ANGULAR if params.orientation_model == "isotropic_random"
                else FIXED_AXIS_MEAN_ABS_ANGULAR)
    return 2.0 * (2.0 * math.pi ** 2 / 3.0) * params.excited_density * params.coupling * mean_abs * 1e-6


def excited_fraction(material, lo, hi, saturation=0.5):
    """Fraction of all dopant ions excited when ``lo..hi`` (MHz from line center) is saturated."""
    if not 0.0 <= saturation <= 1.0:
        raise ValueError("saturation must be in [0, 1]")
    if hi < lo:
        raise ValueError("interval must have lo <= hi")
    fwhm = material.inhom_fwhm * 1e3
    if material.profile_shape == "flat":
        if lo < -fwhm / 2 or hi > fwhm / 2:
            raise ValueError(f"interval {lo}..{hi} MHz exceeds the {fwhm:g} MHz line")
        return saturation * (hi - lo) / fwhm
    sigma = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    if lo < -5 * sigma or hi > 5 * sigma:
        raise ValueError(f"interval {lo}..{hi} MHz exceeds the line")
    cdf = lambda v: 0.5 * (1.0 + math.erf(v / (sigma * math.sqrt(2.0))))
    return saturation * (cdf(hi) - cdf(lo))


def broadened_hole_fwhm(hole_fwhm, displacement_fwhm):
    """A Lorentzian hole convolved with a Lorentzian D(dnu): widths add."""
    if hole_fwhm < 0 or displacement_fwhm < 0:
        raise ValueError("widths must be >= 0")
    return hole_fwhm + displacement_fwhm


def broadening_vs_bandwidth(material, bandwidths, saturation=0.5, trials=100_000, seed=0,
                            workers=1, mean_count=DEFAULT_MEAN_COUNT, exclusion_radius=DEFAULT_EXCLUSION,
                            local_field_power=1, return_fits=False):
    """Fitted D(dnu) FWHM (MHz) against excited bandwidth (MHz) centered on the line."""
    if len(bandwidths) == 0:
        raise ValueError("need at least one bandwidth")
    out, fits = [], []
    for bw in bandwidths:
        rho = excited_fraction(material, -bw / 2, bw / 2, saturation) * material.dopant_density
        if rho == 0:
            out.append((float(bw), 0.0))
            fits.append(None)
            continue
        p = params_for(material, rho, exclusion_radius, mean_count, local_field_power=local_field_power)
        fit = fit_lorentzian(sample_displacement(p, trials, seed, workers))
        out.append((float(bw), fit.fwhm))
        fits.append(fit)
    return (out, fits) if return_fits else out


def broadening_slope(curve):
    """Least-squares slope through the origin in kHz of FWHM per MHz of bandwidth."""
    bw = np.array([c[0] for c in curve])
    fw = np.array([c[1] for c in curve])
    if not np.any(bw > 0):
        raise ValueError("curve has no positive bandwidth")
    return float((bw @ fw) / (bw @ bw) * 1e3)


@dataclass(frozen=True)
class Calibration:
    delta_mu: float
    observed_slope: float
    reference_delta_mu: float
    reference_slope: float
    iterations: int
    note: str = "effective moment fitted to an observed broadening slope; not a measured value"


def calibrate_mu(material, observed_slope, trials=100_000, seed=0, bandwidths=(100.0,),
                 saturation=0.5, workers=1, rel_tol=1e-10, **kw):
    """Effective |delta_mu| (C m) whose broadening slope equals ``observed_slope`` (kHz/MHz).

    One Monte Carlo curve is run at the material's moment; the width scales
    exactly as |mu|^2, so the bisection runs on the rescaled slope.
    """
    if not observed_slope > 0:
        raise ValueError("observed_slope must be > 0")
    mu_ref = material.delta_mu if material.delta_mu > 0 else 1e-31
    ref = material.replace(delta_mu=mu_ref)
    curve = broadening_vs_bandwidth(ref, bandwidths, saturation, trials, seed, workers, **kw)
    s_ref = broadening_slope(curve)
    if not s_ref > 0:
        raise ValueError("reference slope is zero; cannot bracket the moment")

    def slope(mu):
        return s_ref * (mu / mu_ref) ** 2

    lo, hi = 0.0, mu_ref
    for _ in range(400):
        if slope(hi) >= observed_slope:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise ValueError("could not bracket the observed slope")
    it = 0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if slope(mid) < observed_slope:
            lo = mid
        else:
            hi = mid
        it += 1
    mu = 0.5 * (lo + hi)
    return Calibration(mu, float(observed_slope), mu_ref, s_ref, it)


def delayed_broadening(params, t, mode, t1, static_fwhm=None):
    """D(dnu) FWHM (MHz) at time ``t`` (ms) after the perturber excitation.

    ``burn_before_perturb``: the excited perturbers decay with T1, so the
    perturbing density is rho exp(-t/T1). ``burn_during_perturb``: the hole
    is burned while the perturbers are excited, and it widens as they decay,
    rho (1 - exp(-t/T1)). The width follows the linear density law.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    full = analytic_fwhm(params) if static_fwhm is None else static_fwhm
    decayed = math.exp(-t / t1)
    if mode == "burn_before_perturb":
        return full * decayed
    if mode == "burn_during_perturb":
        return full * (1.0 - decayed)
    raise ValueError(f"unknown mode {mode!r}")


def histogram_to_json(hist, fit=None, **extra):
    doc = {
        "seed": hist.seed,
        "trials": hist.trials,
        "params": hist.params.to_dict() if hist.params is not None else None,
        "bin_edges_mhz": hist.bin_edges,
        "counts": hist.counts,
    }
    if fit is not None:
        doc["fit"] = {"center_mhz": fit.center, "fwhm_mhz": fit.fwhm,
                      "amplitude": fit.amplitude, "rms_residual": fit.rms_residual}
    doc.update(extra)
    return dumps(doc)


def curve_to_csv(curve):
    return "bandwidth_mhz,fwhm_mhz\n" + "".join(f"{b:.9g},{f:.9g}\n" for b, f in curve)
