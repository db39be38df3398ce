"""Command-line entry point.

Every subcommand writes its artifacts into ``--out`` (default ``.``) and
prints a short JSON summary.  Each file carries a header with the resolved
configuration; the creation time is the only field that varies between
identical runs.  Failures print ``{"error": code, "message": ...}`` and exit
with status 1, or 2 for bad usage.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .closed_form import accumulate_phase, decompose_phase, phase_series, steady_state_rates
from .envelopes import ConstantEnvelope, SplineEnvelope, load_envelope
from .errors import RipGateError, UsageError
from .lindblad import TruncatedSystem, compare, integrate, read_series_csv
from .metrics import average_gate_fidelity
from .nullspace import CostWeights, analyze_spectrum_features, optimize, spectrum_csv
from .params import derive_params, load_params, static_coupling_at_photon_number
from .spline_design import design_at, min_detuning_for_target, sweep


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _header(args) -> dict:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    return {"command": args.command, "config": config, "version": __version__,
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")}


def _write_json(path: Path, data: dict, header: dict):
    with open(path, "w") as fh:
        json.dump({"header": header, **data}, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _envelope(args):
    """Envelope from ``--envelope constant|spline|<file>`` and shape flags."""
    kind = args.envelope
    if kind == "constant":
        return ConstantEnvelope(args.eps_mhz, args.t_end_ns)
    if kind == "spline":
        if args.rise_ns is None:
            raise UsageError("--rise-ns is required for spline envelopes")
        return SplineEnvelope(args.degree, args.rise_ns, args.eps_mhz)
    return load_envelope(kind)


def _grid(args, t_end):
    step = args.grid_ns if args.grid_ns else t_end / 400
    n = int(round(t_end / step))
    return np.linspace(0.0, t_end, n + 1)


def cmd_derive_params(args):
    dev = load_params(args.params)
    derived = derive_params(dev, args.delta_mhz).to_dict()
    zz = {}
    for m in args.photons:
        xi1, xi2, zeta = static_coupling_at_photon_number(dev, m)
        zz[str(m)] = {"Xi1_mhz": xi1, "Xi2_mhz": xi2, "zeta_mhz": zeta}
    data = {"device": dev.to_dict(), "derived": derived, "zeta_vs_photons": zz}
    _write_json(_out(args) / "derived_params.json", data, _header(args))
    return {"zeta0_mhz": derived["zeta0_mhz"], "J_mhz": derived["J_mhz"],
            "chibar_mhz": [derived[f"chibar{b}_mhz"] for b in ("00", "01", "10", "11")]}


def cmd_respond(args):
    dev = load_params(args.params)
    params = derive_params(dev, args.delta_mhz)
    env = _envelope(args)
    t_end = args.t_end_ns if args.t_end_ns else env.duration
    series = phase_series(params, env, _grid(args, min(t_end, env.duration)))
    path = _out(args) / "response.csv"
    series.to_csv(path, header=_header(args))
    return {"csv": str(path), "theta_end_rad": float(series.theta[-1]), "nbar_max": float(series.nbar().max())}


def cmd_steady_state(args):
    params = derive_params(load_params(args.params), args.delta_mhz)
    rates = steady_state_rates(params, args.eps_mhz)
    data = {"theta_dot_rad_per_ns": rates.theta_dot, "im_mu_dot_0011_per_ns": rates.im_mu_dot_0011,
            "alpha_ss": [[a.real, a.imag] for a in rates.alpha_ss],
            "nbar_ss": float(np.mean(np.abs(rates.alpha_ss) ** 2)),
            "approx": {k: np.asarray(v).real.tolist() if np.ndim(v) else float(np.real(v))
                       for k, v in rates.approx.items()}}
    _write_json(_out(args) / "steady_state.json", data, _header(args))
    return {"theta_dot_rad_per_ns": rates.theta_dot, "im_mu_dot_0011_per_ns": rates.im_mu_dot_0011}


def cmd_design_spline(args):
    dev = load_params(args.params)
    if args.delta_mhz is not None:
        design = design_at(dev, args.degree, args.eps_mhz, args.delta_mhz)
    else:
        design = min_detuning_for_target(dev, args.degree, args.eps_mhz, args.target)
    _write_json(_out(args) / "design.json", {"design": design.to_dict()}, _header(args))
    return design.to_dict()


def cmd_sweep_spline(args):
    dev = load_params(args.params)
    result = sweep(dev, args.degrees, args.eps_mhz, args.target, workers=args.threads)
    out = _out(args)
    header = _header(args)
    with open(out / "sweep.csv", "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        cols = ["d", "eps_mhz", "delta_min_mhz", "t_r_ns", "infidelity", "peak_photons"]
        fh.write(",".join(cols) + "\n")
        for row in result.rows():
            fh.write(",".join("" if row[c] is None else repr(row[c]) for c in cols) + "\n")
    fits = {"detuning_exponent": result.detuning_exponent, "detuning_prefactor": result.detuning_prefactor,
            "rise_fit_c0_c1_c2_q": result.rise_fit}
    fits = {k: {str(d): v for d, v in table.items()} for k, table in fits.items()}
    _write_json(out / "sweep_fits.json", fits, header)
    return fits


def cmd_optimize(args):
    params = derive_params(load_params(args.params), args.delta_mhz)
    weights = CostWeights(args.beta1, args.beta2, args.beta3, args.gamma, args.bandwidth_mhz,
                          args.peak_mhz, args.beta_peak)
    result = optimize(params, args.dt_ns, args.steps, weights, args.restarts, args.seed, args.peak_mhz,
                      max_iter=args.max_iter, workers=args.threads)
    out = _out(args)
    header = _header(args)
    _write_json(out / "pulse.json", result.train.to_dict(), header)
    features = analyze_spectrum_features(result.train, params, args.bandwidth_mhz)
    report = {**result.report.to_dict(), "cost": result.cost, "components": result.components,
              "best_restart": result.restart, "spectrum": features.to_dict()}
    _write_json(out / "report.json", report, header)
    result.trace_csv(out / "trace.csv", header)
    spectrum_csv(result.train, out / "spectrum.csv", header)
    return {"avg_infidelity": result.report.avg_infidelity, "cost": result.cost}


def cmd_validate(args):
    dev = load_params(args.params)
    env = _envelope(args)
    t_end = args.t_end_ns if args.t_end_ns else env.duration
    system = TruncatedSystem(args.model, args.fock, cutoff_tol=args.cutoff_tol)
    series = integrate(system, dev, env, args.delta_mhz, t_end, _grid(args, t_end))
    path = _out(args) / "lindblad.csv"
    series.to_csv(path, header=_header(args))
    return {"csv": str(path), "theta_end_rad": float(series.theta[-1]), "nbar_max": float(series.nbar.max()),
            "top_population": series.top_population}


class _CsvSeries(dict):
    """Curves read back from a series CSV, shaped for :func:`compare`."""

    def __init__(self, path):
        d = read_series_csv(path)
        super().__init__(nbar=d["nbar"], theta=d["theta_rad"], rho0011_abs=np.exp(-d["im_mu_0011"]) / 4)
        self.t = d["t_ns"]


def cmd_compare(args):
    tol = {"nbar": args.tol_nbar, "theta": args.tol_theta, "rho0011_abs": args.tol_rho}
    report = compare(_CsvSeries(args.a), _CsvSeries(args.b), tol)
    report.to_json(_out(args) / "compare.json", _header(args))
    return {"passed": report.passed, **report.to_dict()}


def cmd_decompose_phase(args):
    params = derive_params(load_params(args.params), args.delta_mhz)
    env = _envelope(args) if args.envelope != "constant" else SplineEnvelope(args.degree, args.rise_ns, args.eps_mhz)
    dec = decompose_phase(params, env, pair=tuple(args.pair.split(",")))
    report = average_gate_fidelity(accumulate_phase(params, env), validate=False)
    data = {"decomposition": dataclasses.asdict(dec), "gate": report.to_dict()}
    _write_json(_out(args) / "decomposition.json", data, _header(args))
    return dataclasses.asdict(dec)


def _float_list(text):
    return [float(x) for x in text.split(",") if x]


def _int_list(text):
    return [int(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ripgate", description="Pulse design and validation for resonator-induced phase gates.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def command(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--params", "--preset", dest="params", default="low", help="preset name or JSON file")
        p.add_argument("--config", help="JSON file of option defaults")
        p.add_argument("--out", default=".", help="output directory")
        p.set_defaults(func=func)
        return p

    def shape(p, t_end=None):
        p.add_argument("--envelope", default="constant", help="constant, spline or an envelope JSON file")
        p.add_argument("--eps-mhz", type=float, default=20.0)
        p.add_argument("--degree", type=int, default=7)
        p.add_argument("--rise-ns", type=float)
        p.add_argument("--t-end-ns", type=float, default=t_end)
        p.add_argument("--grid-ns", type=float)

    p = command("derive-params", cmd_derive_params, "dispersive parameters of a device")
    p.add_argument("--delta-mhz", type=float, default=0.0)
    p.add_argument("--photons", type=_int_list, default=[0, 5, 50], help="photon numbers for the ZZ table")

    p = command("respond", cmd_respond, "closed-form bus response and phases")
    p.add_argument("--delta-mhz", type=float, required=True)
    shape(p, 800.0)

    p = command("steady-state", cmd_steady_state, "steady-state phase rates under a constant tone")
    p.add_argument("--delta-mhz", type=float, required=True)
    p.add_argument("--eps-mhz", type=float, required=True)

    p = command("design-spline", cmd_design_spline, "tune a spline gate")
    p.add_argument("--degree", type=int, default=7)
    p.add_argument("--eps-mhz", type=float, required=True)
    p.add_argument("--target", type=float, default=1e-4, help="composite infidelity target")
    p.add_argument("--delta-mhz", type=float, help="fix the detuning instead of searching")

    p = command("sweep-spline", cmd_sweep_spline, "spline designs over degree and amplitude grids")
    p.add_argument("--degrees", type=_int_list, default=[3, 5, 7])
    p.add_argument("--eps-mhz", type=_float_list, required=True)
    p.add_argument("--target", type=float, default=1e-4)
    p.add_argument("--threads", type=int)

    p = command("optimize", cmd_optimize, "nullspace step-train optimization")
    p.add_argument("--delta-mhz", type=float, default=112.0)
    p.add_argument("--dt-ns", type=float, default=0.25)
    p.add_argument("--steps", type=int, default=240)
    p.add_argument("--beta1", type=float, default=1.0)
    p.add_argument("--beta2", type=float, default=1.0)
    p.add_argument("--beta3", type=float, default=1.0)
    p.add_argument("--beta-peak", type=float, default=1.0)
    p.add_argument("--bandwidth-mhz", type=float, default=300.0)
    p.add_argument("--gamma", type=float, default=1.0, help="on-off weight rate in 1/ns")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--peak-mhz", type=float, default=284.0)
    p.add_argument("--max-iter", type=int, default=3000)
    p.add_argument("--threads", type=int)

    p = command("validate", cmd_validate, "master-equation integration")
    p.add_argument("--model", choices=("dispersive", "full"), default="dispersive")
    p.add_argument("--fock", type=int, default=15)
    p.add_argument("--cutoff-tol", type=float, default=1e-6)
    p.add_argument("--delta-mhz", type=float, required=True)
    shape(p, 800.0)

    p = command("compare", cmd_compare, "compare two series CSV files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--tol-nbar", type=float, default=0.02, help="fraction of the peak of --b")
    p.add_argument("--tol-theta", type=float, default=1e-2)
    p.add_argument("--tol-rho", type=float, default=1e-3)

    p = command("decompose-phase", cmd_decompose_phase, "dynamical, geometric and residual phases")
    p.add_argument("--delta-mhz", type=float, required=True)
    p.add_argument("--pair", default="00,11")
    shape(p)
    p.set_defaults(envelope="spline")
    return parser


def _parse(parser, argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    commands = parser._subparsers._group_actions[0].choices
    if known.config:
        name = next((a for a in rest if a in commands), None)
        if name is None:
            raise UsageError("a subcommand is required")
        with open(known.config) as fh:
            overrides = json.load(fh)
        sub = commands[name]
        actions = {a.dest: a for a in sub._actions}
        unknown = set(overrides) - set(actions)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for key in overrides:
            actions[key].required = False
        sub.set_defaults(**overrides)
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required")
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        summary = args.func(args)
    except UsageError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}))
        return 2
    except RipGateError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}))
        return 1
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 1
    print(json.dumps(summary, default=_jsonable, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
