"""Command-line front end: ``reisim <command> ...``.

Exit status is 0 on success, 1 for invalid input (bad options, material
files, sequence syntax) and 2 for unexpected internal failures. Output
files are written through a temporary file and renamed, so a failed run
never leaves a partial artifact behind.
"""

import argparse
import json
import os
import re
import sys
import traceback

from . import __version__, dipolemc, distill, pump
from .io import atomic_write, dumps
from .materials import MaterialError, builtin_names, load_material
from .seqlang import ParseError, parse

STOCHASTIC = {"dipole", "broaden", "distill"}
_QTY = re.compile(r"\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)\s*([A-Za-z]*)\s*$")
_FREQ = {"": 1.0, "MHz": 1.0, "GHz": 1e3, "kHz": 1e-3}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def freq(text):
    """MHz from ``"100MHz"``, ``"0.1GHz"`` or a bare number."""
    m = _QTY.match(str(text))
    if not m or m.group(2) not in _FREQ:
        raise argparse.ArgumentTypeError(f"not a frequency: {text!r} (use MHz, GHz or kHz)")
    return float(m.group(1)) * _FREQ[m.group(2)]


def freq_list(text):
    """``"50,100,200,300MHz"``: a unit on the last item applies to all bare items."""
    items = [s.strip() for s in str(text).split(",") if s.strip()]
    if not items:
        raise argparse.ArgumentTypeError("empty frequency list")
    m = _QTY.match(items[-1])
    unit = m.group(2) if m else ""
    return [freq(s if _QTY.match(s) and _QTY.match(s).group(2) else s + unit) for s in items]


def count(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a count: {text!r}") from None
    if v != int(v) or v < 1:
        raise argparse.ArgumentTypeError(f"count must be a positive integer, got {text!r}")
    return int(v)


def _common(p, stochastic=False, out_required=True):
    p.add_argument("--material", help="material JSON file or builtin:<name>")
    p.add_argument("--out", required=out_required, help="output file")
    p.add_argument("--config", help="JSON file with default option values")
    if stochastic:
        p.add_argument("--seed", type=int, help="random seed (required)")
        p.add_argument("--trials", type=count, default=100_000)
        p.add_argument("--workers", type=int, default=1, help="worker processes; output does not depend on it")
        p.add_argument("--mean-count", type=float, default=dipolemc.DEFAULT_MEAN_COUNT,
                       help="mean number of perturbers in the sampling sphere")
        p.add_argument("--local-field-power", type=int, choices=(1, 2), default=1)


def build_parser():
    ap = _Parser(prog="reisim", description="Hole burning and ion-ion interaction simulator")
    ap.add_argument("--version", action="version", version=f"reisim {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="run a .seq pulse program and write the final readout trace")
    _common(p)
    p.add_argument("--sequence", required=True, help=".seq program")
    p.add_argument("--bin-width", type=freq, default=pump.DEFAULT_BIN_WIDTH)

    p = sub.add_parser("dipole", help="sample the dipolar displacement function and fit a Lorentzian")
    _common(p, stochastic=True)
    p.add_argument("--bandwidth", type=freq, help="excited bandwidth centered on the line")
    p.add_argument("--saturation", type=float, default=0.5)
    p.add_argument("--density", type=float, help="excited density in ions/m^3 (overrides --bandwidth)")

    p = sub.add_parser("broaden", help="displacement FWHM against excited bandwidth (CSV)")
    _common(p, stochastic=True)
    p.add_argument("--bandwidths", type=freq_list, required=False)
    p.add_argument("--saturation", type=float, default=0.5)
    p.add_argument("--delta-mu", type=float, help="override the material's dipole moment difference (C m)")
    p.add_argument("--calibrate-slope", type=float,
                   help="fit an effective dipole moment to this slope (kHz/MHz) first")
    p.add_argument("--calibration-out", help="JSON file for the calibration result")

    p = sub.add_parser("distill", help="two-pass selection of mutually controlling ions (JSON)")
    _common(p, stochastic=True)
    p.add_argument("--bandwidth", type=freq, default=1.0, help="qubit channel width")
    p.add_argument("--threshold", type=freq, default=5.0)
    p.add_argument("--ions", type=count, default=200, help="ions per qubit in each configuration")
    p.add_argument("--ions-csv", help="optional per-ion CSV")
    p.add_argument("--probe-trials", type=count, default=None,
                   help="also estimate the entangleable fraction from this many probe ions")

    p = sub.add_parser("feasibility", help="steady-state emptying of two wells (JSON)")
    _common(p)
    p.add_argument("--separation", type=freq, required=True)
    p.add_argument("--width", type=freq, help="well width; omit to search for the largest feasible width")
    p.add_argument("--isotope", default="0", help="isotope index or name")
    p.add_argument("--bin-width", type=freq, default=pump.DEFAULT_BIN_WIDTH)

    p = sub.add_parser("materials", help="list presets, or print one as JSON")
    p.add_argument("name", nargs="?")
    p.add_argument("--out")
    p.add_argument("--config", help=argparse.SUPPRESS)
    return ap, sub


def _apply_config(ap, sub, argv):
    """Re-parse ``argv`` with the defaults from ``--config`` in place."""
    args = ap.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise UsageError(f"cannot read config {args.config}: {err}") from None
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    doc = dict(doc)
    cmd = doc.pop("command", args.command)
    if cmd != args.command:
        raise UsageError(f"config is for command {cmd!r}, not {args.command!r}")
    sp = sub.choices[args.command]
    known = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("help", "config"):
            raise UsageError(f"config: unknown option {key!r}")
        action = known[dest]
        if action.type is not None and value is not None and not isinstance(value, list):
            try:
                value = action.type(str(value))
            except argparse.ArgumentTypeError as err:
                raise UsageError(f"config: {key}: {err}") from None
        elif isinstance(value, list) and action.type is freq_list:
            value = [freq(str(v)) for v in value]
        defaults[dest] = value
    for a in sp._actions:
        if a.dest in defaults:
            a.required = False
    sp.set_defaults(**defaults)
    return ap.parse_args(argv)


def _material(args):
    if not args.material:
        raise UsageError(f"{args.command}: --material is required")
    return load_material(args.material)


def cmd_simulate(args):
    with open(args.sequence, encoding="utf-8") as fh:
        text = fh.read()
    try:
        seq = parse(text)
    except ParseError as err:
        raise UsageError(f"{args.sequence}:{err}") from None
    ref = args.material or seq.material
    if not ref.startswith("builtin:") and not os.path.isabs(ref) and not args.material:
        ref = os.path.join(os.path.dirname(os.path.abspath(args.sequence)), ref)
    material = load_material(ref)
    if not seq.pulses:
        raise UsageError(f"{args.sequence}: the program has no pulses")
    _, traces = pump.simulate(seq, material, args.bin_width)
    if not traces:
        raise UsageError(f"{args.sequence}: the program has no readout")
    stem, ext = os.path.splitext(args.out)
    for i, tr in enumerate(traces[:-1], start=1):
        atomic_write(f"{stem}_{i}{ext or '.csv'}", tr.to_csv())
    atomic_write(args.out, traces[-1].to_csv())
    return f"wrote {len(traces)} readout trace(s)"


def cmd_dipole(args):
    m = _material(args)
    if args.density is not None:
        rho = args.density
    elif args.bandwidth is not None:
        rho = dipolemc.excited_fraction(m, -args.bandwidth / 2, args.bandwidth / 2, args.saturation) * m.dopant_density
    else:
        raise UsageError("dipole: give --bandwidth or --density")
    p = dipolemc.params_for(m, rho, mean_count=args.mean_count, local_field_power=args.local_field_power)
    hist = dipolemc.sample_displacement(p, args.trials, args.seed, args.workers)
    fit = dipolemc.fit_lorentzian(hist)
    extra = {"material": m.name}
    if args.bandwidth is not None and args.density is None:
        extra.update(bandwidth_mhz=args.bandwidth, saturation=args.saturation)
    atomic_write(args.out, dipolemc.histogram_to_json(hist, fit, **extra))
    return f"fwhm {fit.fwhm:.6g} MHz"


def cmd_broaden(args):
    m = _material(args)
    if not args.bandwidths:
        raise UsageError("broaden: --bandwidths is required")
    if args.delta_mu is not None:
        m = m.replace(delta_mu=args.delta_mu)
    kw = dict(mean_count=args.mean_count, local_field_power=args.local_field_power)
    note = ""
    if args.calibrate_slope is not None:
        cal = dipolemc.calibrate_mu(m, args.calibrate_slope, args.trials, args.seed,
                                    bandwidths=(max(args.bandwidths),), saturation=args.saturation,
                                    workers=args.workers, **kw)
        m = m.replace(delta_mu=cal.delta_mu)
        note = f"effective delta_mu {cal.delta_mu:.6g} C m; "
        if args.calibration_out:
            atomic_write(args.calibration_out, dumps({
                "material": m.name, "observed_slope_khz_per_mhz": cal.observed_slope,
                "delta_mu_eff": cal.delta_mu, "reference_delta_mu": cal.reference_delta_mu,
                "reference_slope_khz_per_mhz": cal.reference_slope, "seed": args.seed,
                "trials": args.trials, "note": cal.note}))
    curve = dipolemc.broadening_vs_bandwidth(m, args.bandwidths, args.saturation, args.trials, args.seed,
                                             args.workers, **kw)
    atomic_write(args.out, dipolemc.curve_to_csv(curve))
    return note + f"slope {dipolemc.broadening_slope(curve):.6g} kHz/MHz"


def cmd_distill(args):
    m = _material(args)
    rep = distill.distill_pair(args.ions, m, args.bandwidth, args.threshold, args.trials, args.seed,
                               keep_ions=bool(args.ions_csv))
    doc = rep.to_dict()
    doc["material"] = m.name
    if args.probe_trials:
        doc["entangleable_fraction"] = distill.entangleable_fraction(
            m, args.bandwidth, args.threshold, args.probe_trials, args.seed, args.workers,
            mean_count=args.mean_count, local_field_power=args.local_field_power)
    if args.ions_csv:
        atomic_write(args.ions_csv, rep.ions_csv())
    atomic_write(args.out, dumps(doc))
    return f"retained {rep.fraction_retained_target:.4g} / {rep.fraction_retained_control:.4g}"


def cmd_feasibility(args):
    m = _material(args)
    iso = int(args.isotope) if args.isotope.lstrip("-").isdigit() else args.isotope
    if args.width is not None:
        rep = pump.well_feasibility(m, args.width, args.separation, iso, args.bin_width)
        atomic_write(args.out, rep.to_json())
        return f"feasible={rep.feasible} residual={rep.residual:.3g}"
    width, reports = pump.max_feasible_width(m, args.separation, iso, bin_width=args.bin_width)
    doc = {"material": m.name, "separation_mhz": args.separation, "max_feasible_width_mhz": width,
           "probes": [reports[k].to_dict() for k in sorted(reports)]}
    atomic_write(args.out, dumps(doc))
    return f"max feasible width {width:.1f} MHz"


def cmd_materials(args):
    if args.name is None:
        text = "\n".join(builtin_names()) + "\n"
    else:
        ref = args.name if ":" in args.name or os.path.exists(args.name) else f"builtin:{args.name}"
        text = dumps(load_material(ref).to_dict())
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return None


COMMANDS = {
    "simulate": cmd_simulate, "dipole": cmd_dipole, "broaden": cmd_broaden,
    "distill": cmd_distill, "feasibility": cmd_feasibility, "materials": cmd_materials,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    ap, sub = build_parser()
    try:
        args = _apply_config(ap, sub, argv)
        if args.command is None:
            ap.print_help(sys.stderr)
            return 1
        if args.command in STOCHASTIC and args.seed is None:
            raise UsageError(f"{args.command}: --seed is required")
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be >= 1")
        out = getattr(args, "out", None)
        if out and not os.path.isdir(os.path.dirname(os.path.abspath(out))):
            raise UsageError(f"output directory does not exist: {os.path.dirname(out)}")
        msg = COMMANDS[args.command](args)
    except (UsageError, MaterialError, ParseError, ValueError, FileNotFoundError, KeyError, IndexError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except SystemExit as err:  # --help and --version
        return int(err.code or 0)
    except Exception:  # noqa: BLE001
        print("internal error:", file=sys.stderr)
        traceback.print_exc()
        return 2
    if msg:
        print(msg, file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
