"""Optical pumping of hyperfine populations by burn, scan and readout pulses.

Each repetition of a pulse is split into ``ceil(duration / t1_optical)``
relaxation steps. In one step a resonant level ``g`` of an ion class loses
the fraction ``p = 1 - exp(-s * rate * X_g)`` of its population, where
``X_g`` is the laser exposure (Lorentzian line shape, time-weighted over
the scan, truncated beyond ``cutoff``). The excited ions then relax into
the ground levels with the material's branching ratios. Excited-state
population is never stored.
"""

import math
from dataclasses import dataclass, asdict

import numpy as np

from .io import dumps
from .materials import load_material
from .spectrum import (
    DEFAULT_BIN_WIDTH,
    DEFAULT_LASER_FWHM,
    KERNEL_RADIUS_FWHM,
    GridSpec,
    SpectralEdgeError,
    absorption_spectrum,
    new_state,
    scan_freqs,
)

KINDS = ("burn_fixed", "burn_scan", "readout_scan")


@dataclass(frozen=True)
class PumpConfig:
    laser_fwhm: float = DEFAULT_LASER_FWHM  # MHz, pump line shape
    cutoff: float = 1.0  # MHz, pump kernel is zero beyond this detuning
    rate: float = 2.0  # 1/ms, pump rate at zero detuning for strength 1
    readout_fwhm: float = DEFAULT_LASER_FWHM
    steady_tol: float = 1e-9
    max_scans: int = 10_000
    feasible_residual: float = 1e-3

    def kernel(self, detuning):
        d = np.asarray(detuning, dtype=float)
        k = 1.0 / (1.0 + (2.0 * d / self.laser_fwhm) ** 2)
        # grid and scan points often sit exactly at the cutoff; keep that
        # decision independent of rounding
        return np.where(np.abs(d) <= self.cutoff + 1e-9, k, 0.0)


DEFAULT_CONFIG = PumpConfig()


@dataclass(frozen=True)
class Pulse:
    kind: str
    freqs: tuple = ()  # burn_fixed: laser frequencies, applied simultaneously
    ranges: tuple = ()  # scans: ((lo, hi), ...), swept simultaneously
    duration: float = 1.0  # ms, per repetition and per range
    repetitions: int = 1
    strength: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown pulse kind {self.kind!r}")
        object.__setattr__(self, "freqs", tuple(float(f) for f in self.freqs))
        object.__setattr__(self, "ranges", tuple((float(a), float(b)) for a, b in self.ranges))
        if self.kind == "burn_fixed":
            if not self.freqs or self.ranges:
                raise ValueError("burn_fixed needs frequencies and no ranges")
        else:
            if not self.ranges or self.freqs:
                raise ValueError(f"{self.kind} needs ranges and no fixed frequencies")
            for lo, hi in self.ranges:
                if not lo < hi:
                    raise ValueError(f"scan range {lo}..{hi}: lo must be < hi")
        if self.kind == "readout_scan":
            if len(self.ranges) != 1:
                raise ValueError("a readout scans exactly one range")
            object.__setattr__(self, "strength", 0.0)
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if int(self.repetitions) != self.repetitions or self.repetitions < 1:
            raise ValueError("repetitions must be an integer >= 1")
        object.__setattr__(self, "repetitions", int(self.repetitions))
        if not self.strength >= 0:
            raise ValueError("strength must be >= 0")

    @property
    def extent(self):
        vals = list(self.freqs) + [f for r in self.ranges for f in r]
        return min(vals), max(vals)


def burn_fixed(*freqs, duration, repeat=1, strength=1.0):
    return Pulse("burn_fixed", freqs=freqs, duration=duration, repetitions=repeat, strength=strength)


def burn_scan(*ranges, duration, repeat=1, strength=1.0):
    return Pulse("burn_scan", ranges=ranges, duration=duration, repetitions=repeat, strength=strength)


def readout(lo, hi, duration=0.2):
    return Pulse("readout_scan", ranges=((lo, hi),), duration=duration)


@dataclass(frozen=True)
class PulseSequence:
    material: str
    pulses: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))

    @property
    def readouts(self):
        return [p for p in self.pulses if p.kind == "readout_scan"]


def _level_extents(material):
    gmax = max(iso.ground_offsets[2] for iso in material.isotopes)
    emax = max(iso.excited_offsets[2] for iso in material.isotopes)
    return gmax, emax


def grid_for(material, lo, hi, bin_width=DEFAULT_BIN_WIDTH, config=DEFAULT_CONFIG):
    """Smallest window holding every ion class that can absorb anywhere in lo..hi."""
    gmax, emax = _level_extents(material)
    margin = KERNEL_RADIUS_FWHM * config.readout_fwhm + config.cutoff + 4 * bin_width
    a = math.floor((lo - emax - margin) / bin_width) * bin_width
    b = math.ceil((hi + gmax + margin) / bin_width) * bin_width
    return GridSpec(a, b, bin_width)


def grid_for_sequence(material, seq, bin_width=DEFAULT_BIN_WIDTH, config=DEFAULT_CONFIG):
    if not seq.pulses:
        raise ValueError("sequence has no pulses")
    lo = min(p.extent[0] for p in seq.pulses)
    hi = max(p.extent[1] for p in seq.pulses)
    return grid_for(material, lo, hi, bin_width, config)


def _check_edges(state, pulse, config):
    gmax, emax = _level_extents(state.material)
    lo, hi = pulse.extent
    g = state.grid
    if lo - emax - config.cutoff < g.window_lo or hi + gmax + config.cutoff > g.window_hi:
        raise SpectralEdgeError(
            f"pulse at {lo:.6g}..{hi:.6g} MHz reaches ion classes outside the window "
            f"{g.window_lo:.6g}..{g.window_hi:.6g} MHz")


def _scan_exposure(f, lo, hi, duration, bin_width, config):
    """Time-integrated kernel (ms) seen by transitions at ``f`` during one sweep of lo..hi."""
    n = max(2, int(round((hi - lo) / bin_width)) + 1)
    step = (hi - lo) / (n - 1)
    dt = duration / n
    near = np.rint((f - lo) / step).astype(np.int64)
    reach = int(math.ceil(config.cutoff / step)) + 1
    out = np.zeros_like(f)
    for m in range(-reach, reach + 1):
        j = near + m
        ok = (j >= 0) & (j < n)
        out += np.where(ok, config.kernel(f - (lo + j * step)), 0.0)
    return out * dt


def exposure(state, pulse, config=DEFAULT_CONFIG):
    """Exposure X[isotope, bin, ground level] of one repetition of ``pulse`` (ms)."""
    c = state.grid.centers
    out = np.zeros(state.pop.shape)
    if pulse.kind == "readout_scan":
        return out
    for k, iso in enumerate(state.material.isotopes):
        for g in range(3):
            for e in range(3):
                f = c + (iso.excited_offsets[e] - iso.ground_offsets[g])
                if pulse.kind == "burn_fixed":
                    for nu in pulse.freqs:
                        out[k, :, g] += config.kernel(f - nu) * pulse.duration
                else:
                    for lo, hi in pulse.ranges:
                        out[k, :, g] += _scan_exposure(f, lo, hi, pulse.duration,
                                                       state.grid.bin_width, config)
    return out


def substeps(material, pulse):
    return max(1, int(math.ceil(pulse.duration / material.t1_optical - 1e-9)))


def step_matrices(state, pulse, config=DEFAULT_CONFIG):
    """Per-class 3x3 column-stochastic maps of one repetition, restricted to pumped classes.

    Returns ``(active, M)`` where ``active`` is a boolean mask over
    (isotope, bin) and ``M`` has shape (n_active, 3, 3).
    """
    x = exposure(state, pulse, config)
    nsub = substeps(state.material, pulse)
    active = (x > 0).any(axis=2)
    xa = x[active]
    scale = pulse.strength * config.rate / nsub
    with np.errstate(invalid="ignore"):
        p = np.where(xa > 0, -np.expm1(-scale * xa), 0.0)
    b = np.asarray(state.material.branching)
    one = np.eye(3)[None] * (1.0 - p)[:, None, :] + b[None, :, None] * p[:, None, :]
    return active, _matrix_power(one, nsub)


def _matrix_power(m, n):
    result = None
    base = m
    while n:
        if n & 1:
            result = base if result is None else base @ result
        n >>= 1
        if n:
            base = base @ base
    return result


def _propagate(pop_active, m, n):
    """Apply ``m`` ``n`` times to population vectors (binary powering)."""
    v = pop_active[..., None]
    base = m
    while n:
        if n & 1:
            v = base @ v
        n >>= 1
        if n:
            base = base @ base
    return v[..., 0]


def apply_pulse(state, pulse, config=DEFAULT_CONFIG):
    """Apply ``pulse`` and return ``(new_state, trace_or_None)``.

    Readout pulses leave the populations untouched and return the
    absorption over the scanned range.
    """
    _check_edges(state, pulse, config)
    if pulse.kind == "readout_scan":
        lo, hi = pulse.ranges[0]
        trace = absorption_spectrum(state, scan_freqs(state.grid, lo, hi), config.readout_fwhm)
        return state, trace
    new = state.copy()
    if pulse.strength == 0:
        return new, None
    active, m = step_matrices(state, pulse, config)
    if active.any():
        new.pop[active] = _propagate(state.pop[active], m, pulse.repetitions)
    return new, None


def run_sequence(state, seq, config=DEFAULT_CONFIG):
    """Run every pulse of ``seq`` in order; returns ``(final_state, traces)``."""
    traces = []
    for pulse in seq.pulses:
        state, trace = apply_pulse(state, pulse, config)
        if trace is not None:
            traces.append(trace)
    return state, traces


def simulate(seq, material=None, bin_width=DEFAULT_BIN_WIDTH, config=DEFAULT_CONFIG):
    """Build a fresh state sized for ``seq`` and run it."""
    mat = load_material(material if material is not None else seq.material)
    grid = grid_for_sequence(mat, seq, bin_width, config)
    return run_sequence(new_state(mat, grid), seq, config)


# --- qubit preparation -------------------------------------------------------


@dataclass(frozen=True)
class QubitLayout:
    """Frequencies of the prepared structure for one isotope's target class."""

    isotope: int
    well_width: float
    peak_width: float
    aux: float
    q0: float
    q1: float

    def wells(self):
        return [(self.q0 - self.well_width / 2, self.q0 + self.well_width / 2),
                (self.q1 - self.well_width / 2, self.q1 + self.well_width / 2)]


def qubit_layout(material, well_width, peak_width, isotope=0, excited=0):
    k = material.isotope_index(isotope)
    iso = material.isotopes[k]
    pos = {role: iso.excited_offsets[excited] - iso.ground_offsets[iso.level(role)]
           for role in ("aux", "q0", "q1")}
    return QubitLayout(k, float(well_width), float(peak_width), pos["aux"], pos["q0"], pos["q1"])


def qubit_program(material, well_width, peak_width, isotope=0, empty_scans=60,
                  funnel_scans=150, cleanup_scans=20, scan_duration=2.0, readout_duration=0.2,
                  ref=None):
    """Three-phase preparation: empty both wells, funnel aux and q0 into q1, read out.

    The funnel phase ends with ``cleanup_scans`` sweeps of the q0 well alone,
    which clears ions that were still in transit through q0 when the aux
    pumping stopped.
    """
    if not (well_width > 0 and peak_width > 0):
        raise ValueError("well and peak widths must be > 0")
    if not peak_width < well_width:
        raise ValueError("peak_width must be smaller than well_width")
    lay = qubit_layout(material, well_width, peak_width, isotope)
    w0, w1 = lay.wells()
    peak = (lay.aux - peak_width / 2, lay.aux + peak_width / 2)
    lo = min(w0[0], w1[0], peak[0]) - well_width / 2
    hi = max(w0[1], w1[1], peak[1]) + well_width / 2
    pulses = (
        burn_scan(w0, w1, duration=scan_duration, repeat=empty_scans),
        burn_scan(peak, w0, duration=scan_duration, repeat=funnel_scans),
        burn_scan(w0, duration=scan_duration, repeat=cleanup_scans),
        readout(lo, hi, duration=readout_duration),
    )
    name = ref if ref is not None else f"builtin:{material.name}"
    return PulseSequence(name, pulses), lay


def prepare_qubit(material, well_width, peak_width, isotope=0, bin_width=DEFAULT_BIN_WIDTH,
                  config=DEFAULT_CONFIG, **program):
    """Run the preparation program; returns ``(state, readout_trace)``."""
    material = load_material(material)
    seq, _ = qubit_program(material, well_width, peak_width, isotope, **program)
    state, traces = simulate(seq, material, bin_width, config)
    return state, traces[-1]


def preparation_metrics(state, layout, config=DEFAULT_CONFIG):
    """Well floor and funneling efficiency of a prepared state.

    ``well_residual`` is the largest intrinsic absorption inside both wells,
    leaving out the peak region around q1 and one kernel cutoff at each well
    edge, where the scan's pumping rolls off. ``peak_fraction`` is the share
    of the target classes (centers within half a peak width of zero) that
    sits in q1.
    """
    grid = state.grid
    excl = layout.peak_width / 2 + config.cutoff + grid.bin_width
    f = np.concatenate([scan_freqs(grid, lo + config.cutoff, hi - config.cutoff)
                        for lo, hi in layout.wells()])
    f = f[np.abs(f - layout.q1) > excl]
    floor = absorption_spectrum(state, f, fwhm=0.0).alpha
    iso = state.material.isotopes[layout.isotope]
    c = grid.centers
    target = np.abs(c) <= layout.peak_width / 2
    q1 = iso.level("q1")
    frac = state.pop[layout.isotope, target, q1].sum() / state.weight[layout.isotope, target].sum()
    return {"well_residual": float(floor.max()), "peak_fraction": float(frac)}


# --- steady-state well emptying -----------------------------------------------


@dataclass(frozen=True)
class FeasibilityReport:
    material: str
    well_width_mhz: float
    separation_mhz: float
    feasible: bool
    residual: float
    scans_used: int
    converged: bool = True

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return dumps(self.to_dict())


def well_centers(material, separation, isotope=0):
    """Centers of the q0 and q1 wells for ``separation`` (q1 placed on its own side of q0)."""
    iso = material.isotope(isotope)
    q0 = -iso.ground_offsets[iso.level("q0")]
    q1_side = iso.ground_offsets[iso.level("q0")] - iso.ground_offsets[iso.level("q1")]
    return q0, q0 + math.copysign(separation, q1_side if q1_side != 0 else 1.0)


def _absorbing_classes(state, freqs):
    """Mask over (isotope, bin) of the classes read by an intrinsic readout at ``freqs``."""
    mask = np.zeros(state.pop.shape[:2], dtype=bool)
    for k, iso in enumerate(state.material.isotopes):
        for g in range(3):
            for e in range(3):
                mask[k, state.grid.index(freqs - (iso.excited_offsets[e] - iso.ground_offsets[g]))] = True
    return mask


def well_feasibility(material, well_width, separation, isotope=0, bin_width=DEFAULT_BIN_WIDTH,
                     config=DEFAULT_CONFIG, scan_duration=2.0, return_state=False):
    """Scan both wells until the well floor stops changing and report it.

    Steady state means one further scan changes no population of the ion
    classes absorbing inside the wells by more than ``config.steady_tol``.
    Classes that only see the tail of the pump kernel outside the wells can
    take longer to settle, but they never enter the residual. After
    ``config.max_scans`` scans the probe gives up and reports the residual
    as infeasible. A zero width is the empty interval and always feasible.
    """
    material = load_material(material)
    if well_width < 0 or not separation > 0:
        raise ValueError("need well_width >= 0 and separation > 0")
    c0, c1 = well_centers(material, separation, isotope)
    if well_width == 0:
        report = FeasibilityReport(material.name, 0.0, float(separation), True, 0.0, 0, True)
        return (report, None) if return_state else report
    wells = [(c - well_width / 2, c + well_width / 2) for c in (c0, c1)]
    pulse = burn_scan(*wells, duration=scan_duration)
    grid = grid_for(material, min(c0, c1) - well_width, max(c0, c1) + well_width, bin_width, config)
    state = new_state(material, grid)
    _check_edges(state, pulse, config)
    freqs = np.concatenate([scan_freqs(grid, lo, hi) for lo, hi in wells])
    active, m = step_matrices(state, pulse, config)
    watch = _absorbing_classes(state, freqs)[active]
    v = state.pop[active]
    scans, chunk, converged = 0, 1, False
    power = m
    while True:
        nxt = (m[watch] @ v[watch][..., None])[..., 0]
        if np.max(np.abs(nxt - v[watch]), initial=0.0) < config.steady_tol:
            converged = True
            break
        if scans >= config.max_scans:
            break
        # advance by m^chunk, doubling the chunk each round
        take = min(chunk, config.max_scans - scans)
        v = (power @ v[..., None])[..., 0] if take == chunk else _propagate(v, m, take)
        scans += take
        chunk *= 2
        power = power @ power
    state.pop[active] = v
    residual = float(absorption_spectrum(state, freqs, fwhm=0.0).alpha.max())
    report = FeasibilityReport(material.name, float(well_width), float(separation),
                               bool(converged and residual < config.feasible_residual),
                               residual, int(scans), converged)
    return (report, state) if return_state else report


def max_feasible_width(material, separation, isotope=0, step=0.1, upper=None,
                       bin_width=DEFAULT_BIN_WIDTH, config=DEFAULT_CONFIG):
    """Largest feasible well width on a ``step`` grid (binary search; feasibility is monotone)."""
    material = load_material(material)
    hi = int(math.floor((upper if upper is not None else separation) / step + 1e-9))
    lo = 0  # width lo*step known feasible (zero width is trivially empty)
    reports = {}

    def ok(k):
        r = well_feasibility(material, k * step, separation, isotope, bin_width, config)
        reports[k] = r
        return r.feasible

    if hi >= 1 and ok(hi):
        return hi * step, reports
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo * step, reports
