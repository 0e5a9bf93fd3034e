"""Selecting mutually controlling ions by their frequency shifts.

Two qubits are two narrow frequency channels. Exciting all ions of the
control channel shifts each target ion by the summed dipole-dipole
interaction; target ions that move by no more than ``threshold`` are moved
to the auxiliary level. The roles are then swapped over the survivors.
"""

from dataclasses import dataclass, field

import numpy as np

from . import dipolemc
from .dipolemc import DEFAULT_EXCLUSION, DEFAULT_MEAN_COUNT
from .io import dumps, sig9

DEFAULT_SATURATION = 1.0  # every ion in the control interval is excited


def entangleable_fraction(material, control_bandwidth, threshold, trials=100_000, seed=0, workers=1,
                          mean_count=DEFAULT_MEAN_COUNT, exclusion_radius=DEFAULT_EXCLUSION,
                          local_field_power=1):
    """Fraction of probe ions shifted by more than ``threshold`` MHz when the control band is excited."""
    if not threshold > 0:
        raise ValueError("threshold must be > 0")
    if not control_bandwidth > 0:
        raise ValueError("control_bandwidth must be > 0")
    rho = dipolemc.excited_fraction(material, -control_bandwidth / 2, control_bandwidth / 2,
                                    DEFAULT_SATURATION) * material.dopant_density
    p = dipolemc.params_for(material, rho, exclusion_radius, mean_count, local_field_power=local_field_power)
    shifts = dipolemc.sample_shifts(p, trials, seed, workers)
    return float(np.count_nonzero(np.abs(shifts) > threshold * 1e6) / trials)


@dataclass
class IonSample:
    id: int
    qubit: str  # "target" or "control"
    shift_under_control: float  # MHz, under the partner's excitation at the time of selection
    retained: bool
    level: str  # q0, q1 or aux

    def __post_init__(self):
        if self.retained and self.level == "aux":
            raise ValueError("a retained ion cannot sit in the auxiliary level")


@dataclass
class DistillReport:
    threshold: float
    control_bandwidth: float
    fraction_retained_target: float
    fraction_retained_control: float
    mutual: bool
    pass1_fraction: float
    pass2_fraction: float
    n_ions_per_qubit: int
    trials: int
    seed: int = None
    flagged: bool = False
    mutual_fraction: float = 1.0
    ions: list = field(default_factory=list, repr=False)

    def to_dict(self, with_ions=False):
        g = sig9
        d = {
            "threshold_mhz": g(self.threshold),
            "control_bandwidth_mhz": g(self.control_bandwidth),
            "n_ions_per_qubit": self.n_ions_per_qubit,
            "trials": self.trials,
            "seed": self.seed,
            "fraction_retained_target": g(self.fraction_retained_target),
            "fraction_retained_control": g(self.fraction_retained_control),
            "pass1_fraction": g(self.pass1_fraction),
            "pass2_fraction": g(self.pass2_fraction),
            "mutual": self.mutual,
            "mutual_fraction": g(self.mutual_fraction),
            "flagged_no_survivors": self.flagged,
        }
        if with_ions:
            d["ions"] = [{"id": i.id, "qubit": i.qubit, "shift_mhz": g(i.shift_under_control),
                          "retained": i.retained, "level": i.level} for i in self.ions]
        return d

    def to_json(self, with_ions=False):
        return dumps(self.to_dict(with_ions))

    def ions_csv(self):
        rows = ["id,shift_mhz,retained,level"]
        rows += [f"{i.id},{i.shift_under_control:.9g},{str(i.retained).lower()},{i.level}" for i in self.ions]
        return "\n".join(rows) + "\n"


def shift_matrix(target_pos, control_pos, target_dirs, control_dirs, params, box=None):
    """S[i, j]: shift (MHz) of target i when control j is excited. Minimum image if ``box`` is set."""
    d = np.asarray(control_pos, float)[None, :, :] - np.asarray(target_pos, float)[:, None, :]
    if box is not None:
        d -= box * np.round(d / box)
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    if np.any(r < params.exclusion_radius):
        raise ValueError("a target-control pair is inside the exclusion radius")
    rhat = d / r[..., None]
    mt = np.asarray(target_dirs, float)[:, None, :]
    mc = np.asarray(control_dirs, float)[None, :, :]
    ang = np.sum(mt * mc, axis=2) - 3.0 * np.sum(mt * rhat, axis=2) * np.sum(rhat * mc, axis=2)
    return params.coupling * ang / r ** 3 * 1e-6


def distill_configuration(S, threshold):
    """Two-pass selection on one spatial configuration.

    Returns (keep_t, keep_c, shift_t, shift_c, mutual) where shift_t are the
    pass-1 target shifts under the full control set and shift_c the pass-2
    control shifts under the retained targets. The interaction is symmetric,
    so the control shifts come from the transpose.
    """
    S = np.asarray(S, float)
    shift_t = S.sum(axis=1)
    keep_t = np.abs(shift_t) > threshold if threshold > 0 else np.ones(len(shift_t), bool)
    shift_c = S[keep_t, :].sum(axis=0)
    keep_c = np.abs(shift_c) > threshold if threshold > 0 else np.ones(len(shift_c), bool)
    # mutual control over the final sets, in both directions
    back_t = S[:, keep_c].sum(axis=1)
    forth_c = S[keep_t, :][:, keep_c].sum(axis=0)
    if threshold > 0:
        mutual = bool(np.all(np.abs(back_t[keep_t]) > threshold) and np.all(np.abs(forth_c) > threshold))
    else:
        mutual = True
    return keep_t, keep_c, shift_t, shift_c, mutual


def _place(rng, n, box, exclusion, others=None):
    pos = rng.random((n, 3)) * box
    if others is None:
        return pos
    for _ in range(1000):
        d = others[None, :, :] - pos[:, None, :]
        d -= box * np.round(d / box)
        bad = np.any(np.einsum("ijk,ijk->ij", d, d) < exclusion ** 2, axis=1)
        if not bad.any():
            return pos
        pos[bad] = rng.random((int(bad.sum()), 3)) * box
    raise RuntimeError("could not place ions outside the exclusion radius")


def distill_pair(n_ions_per_qubit, material, control_bandwidth, threshold, trials=100, seed=0,
                 exclusion_radius=DEFAULT_EXCLUSION, local_field_power=1, keep_ions=True):
    """Monte Carlo of the two-pass distillation on ``trials`` random configurations.

    Each qubit channel of width ``control_bandwidth`` holds ions at density
    excited_fraction(bandwidth, 1) * dopant_density; ``n_ions_per_qubit`` of
    each are placed in a periodic cube of matching volume.
    """
    if n_ions_per_qubit < 1:
        raise ValueError("n_ions_per_qubit must be >= 1")
    if threshold < 0 or not control_bandwidth > 0 or trials < 1:
        raise ValueError("need threshold >= 0, control_bandwidth > 0 and trials >= 1")
    n = int(n_ions_per_qubit)
    rho = dipolemc.excited_fraction(material, -control_bandwidth / 2, control_bandwidth / 2,
                                    DEFAULT_SATURATION) * material.dopant_density
    box = (n / rho) ** (1.0 / 3.0)
    params = dipolemc.DipoleParams(material.epsilon, material.delta_mu, material.orientation_model, rho,
                                   exclusion_radius, max(box, 2 * exclusion_radius), local_field_power)
    iso = material.orientation_model == "isotropic_random"
    zhat = np.array([0.0, 0.0, 1.0])
    n_t = n_c = 0
    n_mutual = 0
    ions = []
    for trial in range(trials):
        rng = dipolemc._block_rng(seed, trial)
        tp = _place(rng, n, box, exclusion_radius)
        cp = _place(rng, n, box, exclusion_radius, tp)
        if iso:
            td, cd = dipolemc._unit_vectors(rng, n), dipolemc._unit_vectors(rng, n)
        else:
            td = cd = np.broadcast_to(zhat, (n, 3))
        S = shift_matrix(tp, cp, td, cd, params, box)
        keep_t, keep_c, shift_t, shift_c, mutual = distill_configuration(S, threshold)
        n_t += int(keep_t.sum())
        n_c += int(keep_c.sum())
        n_mutual += mutual
        if keep_ions:
            base = 2 * n * trial
            for i in range(n):
                ions.append(IonSample(base + i, "target", float(shift_t[i]), bool(keep_t[i]),
                                      "q1" if keep_t[i] else "aux"))
            for j in range(n):
                ions.append(IonSample(base + n + j, "control", float(shift_c[j]), bool(keep_c[j]),
                                      "q0" if keep_c[j] else "aux"))
    total = n * trials
    # pass 1 leaves every control in place; pass 2 can only remove more
    pass1 = (n_t + total) / (2 * total)
    pass2 = (n_t + n_c) / (2 * total)
    flagged = n_t == 0 or n_c == 0
    return DistillReport(float(threshold), float(control_bandwidth), n_t / total, n_c / total,
                         n_mutual == trials, pass1, pass2, n, trials, seed, flagged, n_mutual / trials, ions)
