"""Preparing a qubit peak inside two emptied wells.

Run from the repository root:

    python3 demos/qubit_preparation.py

The three-phase program (empty both wells, funnel the peak ions into q1,
read out) is first run on single-isotope Eu:YAlO3, where it works, and
then on two-isotope Eu:Y2SiO5, where the second isotope keeps absorbing
inside the wells. The final readout of each run is written as CSV.
"""

import numpy as np

from reisim import pump
from reisim.materials import load_material
from reisim.seqlang import format_sequence
from reisim.spectrum import hole_antihole_offsets

yalo = load_material("builtin:eu_yalo3_153")
iso = yalo.isotopes[0]

# A single burn frequency already leaves a forest of features.
side, anti = hole_antihole_offsets(iso)
print(f"one burn on {yalo.name}: {len(side)} side-holes, {len(anti)} anti-holes")

seq, lay = pump.qubit_program(yalo, well_width=14.0, peak_width=2.0)
print("\nthe program, as a .seq file:\n")
print(format_sequence(seq))

state, trace = pump.prepare_qubit(yalo, 14.0, 2.0)
m = pump.preparation_metrics(state, lay)
print(f"wells at {lay.q0:.1f} and {lay.q1:.1f} MHz, peak taken from {lay.aux:.1f} MHz")
print(f"largest absorption left in the wells: {m['well_residual']:.1e} of the baseline")
print(f"share of the target ions sitting in q1: {m['peak_fraction']:.3f}")
with open("yalo_qubit.csv", "w") as fh:
    fh.write(trace.to_csv())

# Crude text plot of the readout across the q1 well; the peak sits in the middle.
sel = np.abs(trace.freqs - lay.q1) < 12
for f, a in zip(trace.freqs[sel][::12], trace.alpha[sel][::12]):
    print(f"{f:8.2f} MHz  {'#' * int(round(40 * min(a, 1.5)))}")

# Same recipe with two isotopes in the crystal.
yso = load_material("builtin:eu_yso_site2")
state, trace = pump.prepare_qubit(yso, 12.0, 2.0, isotope="151Eu")
m = pump.preparation_metrics(state, pump.qubit_layout(yso, 12.0, 2.0, isotope="151Eu"))
print(f"\n{yso.name}: residual well absorption {m['well_residual']:.2f} of the baseline")
with open("yso_qubit.csv", "w") as fh:
    fh.write(trace.to_csv())

# How wide may symmetric wells be before some ions can no longer be emptied?
pure = load_material("builtin:eu153_yso_site2")
w, _ = pump.max_feasible_width(pure, 76.4)
print(f"\nlargest emptiable well width in {pure.name} at 76.4 MHz separation: {w:.1f} MHz")
print("(this number depends directly on the hyperfine splittings in the data file)")
