"""Instantaneous spectral diffusion from a Monte Carlo of dipole fields.

    python3 demos/spectral_diffusion.py

Exciting a band of ions changes their static dipole moment, which shifts
every neighbour. The sampled shift distribution is a Lorentzian whose
width grows linearly with the number of excited ions. For Tm:YAG the
effective moment difference is fitted to a measured slope of 3 kHz of
broadening per MHz of excited bandwidth.
"""

from reisim import dipolemc as dm
from reisim.materials import load_material

TRIALS = 200_000

yalo = load_material("builtin:eu_yalo3_153")
rho = dm.excited_fraction(yalo, -25, 25) * yalo.dopant_density
p = dm.params_for(yalo, rho)
print(f"{yalo.name}, 50 MHz excited at saturation: {rho:.3g} excited ions per m^3, "
      f"{p.mean_count:.0f} perturbers per trial on average")

hist = dm.sample_displacement(p, TRIALS, seed=1)
fit = dm.fit_lorentzian(hist)
print(f"fitted FWHM {fit.fwhm * 1e3:.2f} kHz, dilute-limit formula {dm.analytic_fwhm(p) * 1e3:.2f} kHz, "
      f"rms misfit {fit.rms_residual:.3f}")

curve = dm.broadening_vs_bandwidth(yalo, [5, 10, 20, 50, 100], trials=TRIALS, seed=2)
print("\nbandwidth  FWHM")
for bw, fw in curve:
    print(f"{bw:6.0f} MHz  {fw * 1e3:7.2f} kHz")
print(f"slope {dm.broadening_slope(curve):.3f} kHz/MHz")

tm = load_material("builtin:tm_yag")
cal = dm.calibrate_mu(tm, observed_slope=3.0, trials=TRIALS, seed=3)
print(f"\n{tm.name}: effective delta_mu {cal.delta_mu:.3g} C m reproduces 3 kHz/MHz")
tm = tm.replace(delta_mu=cal.delta_mu)
(_, d300), = dm.broadening_vs_bandwidth(tm, [300], trials=TRIALS, seed=4)
print(f"300 MHz excited: displacement width {d300:.2f} MHz, "
      f"a 0.5 MHz hole becomes {dm.broadened_hole_fwhm(0.5, d300):.2f} MHz")

# Burn the hole at t = 0 while the excitation decays with T1 ...
for t in (0.0, 0.5, 1.0, 2.0, 5.0):
    w = dm.delayed_broadening(dm.params_for(tm, dm.excited_fraction(tm, -150, 150) * tm.dopant_density),
                              t, "burn_before_perturb", tm.t1_optical)
    print(f"  t = {t:3.1f} ms after excitation: extra width {w:.3f} MHz")
