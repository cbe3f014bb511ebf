"""Command-line entry point: ``neurosynth {compile,sim,compare,stats}``.

Exit codes: 0 on success, 1 for input or configuration errors, 2 for
numeric faults (divergence, operating-region faults) and for ``compare``
runs whose error exceeds ``--threshold``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import __version__
from .analysis import compare_traces, detect_spikes, speedup_factor
from .blocks import SLOPE_DENOMINATORS, DeviceParams, read_params_file
from .dsl import SystemSpec, load_system, parse_waveform
from .errors import AnalysisError, InputError, NumericFault, ConfigError
from .plot import write_trace_svg
from .sim import TIERS, IntegratorConfig, Trace, default_config, simulate
from .synth import Netlist, ScalingMap, describe_netlist, emit_netlist, load_netlist, synthesize

PARAMS_ENV = "NEUROSYNTH_PARAMS"
DEFAULT_T_END = 200.0
SCALING_KEYS = {"i_unit", "i_dc", "cap", "i_q", "i_b", "i_x"}
OTHER_KEYS = {"stim"}


# --------------------------------------------------------------------------
# Input resolution


def resolve_params_path(model: Path, explicit: str | None) -> Path | None:
    """``--params``, then ``$NEUROSYNTH_PARAMS``, then ``<model>.params`` beside the model."""
    if explicit:
        return Path(explicit)
    env = os.environ.get(PARAMS_ENV)
    if env:
        return Path(env)
    sibling = model.with_suffix(".params")
    return sibling if sibling.is_file() else None


def read_params(path: Path | None) -> dict:
    if path is None:
        return {}
    values = read_params_file(path)
    device_keys = {f.name for f in dataclasses.fields(DeviceParams)}
    for key in values:
        base = key.split(".", 1)[0]
        if key not in device_keys | SCALING_KEYS | OTHER_KEYS and not (
                "." in key and base in ("i_dc", "cap", "i_q")):
            raise ConfigError(f"{path}: unknown parameter {key!r}")
    return values


def device_params(values: dict, slope: str | None = None) -> DeviceParams:
    p = DeviceParams.from_mapping(values)
    return p.with_(slope_denominator=slope) if slope else p


def apply_stim(spec: SystemSpec, stim: str | None) -> SystemSpec:
    """Replace an external's waveform; ``name=kind:args`` or ``kind:args`` for the first one."""
    if not stim:
        return spec
    name, sep, text = stim.partition("=")
    if not sep:
        name, text = "", stim
    if not spec.externals:
        raise ConfigError(f"system {spec.name!r} has no external input to stimulate")
    name = name.strip() or spec.externals[0].name
    if name not in spec.external_names:
        raise ConfigError(f"unknown external {name!r}; declared: {spec.external_names}")
    return spec.with_external(name, parse_waveform(text))


def apply_stim_netlist(n: Netlist, stim: str | None) -> Netlist:
    if not stim:
        return n
    name, sep, text = stim.partition("=")
    if not sep:
        name, text = "", stim
    exts = n.externals
    if not exts:
        raise ConfigError(f"netlist {n.name!r} has no external input to stimulate")
    name = name.strip() or exts[0].params["name"]
    wave = parse_waveform(text)
    blocks = []
    found = False
    for b in n.blocks:
        if b.kind == "External" and b.params["name"] == name:
            b = dataclasses.replace(b, params={**b.params, "waveform": wave.to_dict()})
            found = True
        blocks.append(b)
    if not found:
        raise ConfigError(f"unknown external {name!r}")
    return dataclasses.replace(n, blocks=tuple(blocks))


def load_model(path: Path) -> SystemSpec:
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    return load_system(path)


def build_netlist(spec: SystemSpec, values: dict, p: DeviceParams) -> Netlist:
    return synthesize(spec, ScalingMap.from_mapping(spec, values, p), p)


def integrator_config(spec_or_netlist, dt: float | None, t_end: float,
                      method: str) -> IntegratorConfig:
    if dt is not None:
        return IntegratorConfig(dt, t_end, method)
    if isinstance(spec_or_netlist, SystemSpec):
        return default_config(spec_or_netlist, t_end, method)
    tau_min = min((s.tau for s in spec_or_netlist.states), default=1.0)
    return IntegratorConfig(min(tau_min / 1000.0, t_end), t_end, method)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# Commands


def cmd_compile(args) -> int:
    model = Path(args.model)
    values = read_params(resolve_params_path(model, args.params))
    spec = load_model(model)
    p = device_params(values, args.slope_denominator)
    n = build_netlist(spec, values, p)
    out = Path(args.out) / "netlist.json"
    _write(out, emit_netlist(n))
    print(describe_netlist(n))
    print(f"time scale {n.time_scale:.4g} s per model unit "
          f"(speedup {speedup_factor(n.time_scale):.3g}x)")
    print(f"wrote {out}")
    return 0


def _sim_inputs(args):
    src = Path(args.model)
    if not src.is_file():
        raise ConfigError(f"file not found: {src}")
    values = read_params(resolve_params_path(src, args.params))
    stim = args.stim or values.get("stim")
    p = device_params(values, args.slope_denominator)
    if src.suffix == ".json":
        n = apply_stim_netlist(load_netlist(src.read_text(encoding="utf-8")), stim)
        return None, n, p
    spec = apply_stim(load_model(src), stim)
    return spec, None, p


def cmd_sim(args) -> int:
    spec, netlist, p = _sim_inputs(args)
    tiers = TIERS if args.tier == "all" else (args.tier,)
    if netlist is None and any(t != "reference" for t in tiers):
        values = read_params(resolve_params_path(Path(args.model), args.params))
        netlist = build_netlist(spec, values, p.with_(slope_denominator=(
            args.design_denominator or p.slope_denominator)))
    cfg = integrator_config(spec if spec is not None else netlist, args.dt, args.t_end,
                            args.method)
    out_dir = Path(args.out)
    for tier in tiers:
        tr = simulate(tier, spec, netlist, p, cfg)
        path = out_dir / f"trace_{tier}.csv"
        _write(path, tr.to_csv())
        print(f"{tier}: {tr.times.size} samples to t={tr.times[-1]:.6g} "
              f"({'model time' if tr.units == 'dimensionless' else 's'}) -> {path}")
        if args.plot:
            svg = out_dir / f"trace_{tier}.svg"
            names = args.signals.split(",") if args.signals else None
            write_trace_svg(tr, svg, names, title=f"{tr.meta.get('system', '')} ({tier})")
            print(f"{tier}: plot -> {svg}")
    return 0


def cmd_compare(args) -> int:
    model = Path(args.model)
    spec, _, p = _sim_inputs(args)
    if spec is None:
        raise ConfigError("compare needs a model source (.nds), not a netlist")
    values = read_params(resolve_params_path(model, args.params))
    design = p.with_(slope_denominator=args.design_denominator or p.slope_denominator)
    n = build_netlist(spec, values, design)
    cfg = integrator_config(spec, args.dt, args.t_end, args.method)
    signal = args.signal or spec.state_names[0]
    ref = simulate("reference", spec, None, p, cfg)
    report = {
        "system": spec.name,
        "signal": signal,
        "threshold": args.threshold,
        "design_denominator": design.slope_denominator,
        "slope_denominator": p.slope_denominator,
        "time_scale_s": n.time_scale,
        "speedup": speedup_factor(n.time_scale),
        "reference": detect_spikes(ref, signal).to_dict(),
        "tiers": {},
    }
    tiers = ["circuit"] + (["device"] if args.device else [])
    worst = 0.0
    for tier in tiers:
        tr = simulate(tier, spec, n, p, cfg)
        cmp = compare_traces(ref, tr, signal)
        worst = max(worst, cmp.rms_rel)
        report["tiers"][tier] = {**cmp.to_dict(), "stats": detect_spikes(tr, signal).to_dict()}
        print(f"{tier}: rms_rel={cmp.rms_rel:.3e} freq_ratio={cmp.freq_ratio:.6f} "
              f"spikes={cmp.spikes_b} (reference {cmp.spikes_a})")
    report["pass"] = worst <= args.threshold
    out = Path(args.out) / "report.json"
    _write(out, json.dumps(report, indent=2) + "\n")
    print(f"speedup {report['speedup']:.3g}x; report -> {out}")
    if not report["pass"]:
        print(f"error: rms_rel {worst:.3e} exceeds threshold {args.threshold:g}", file=sys.stderr)
        return 2
    return 0


def cmd_stats(args) -> int:
    path = Path(args.trace)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        tr = Trace.read_csv(path)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    signal = args.signal or next((k for k in tr.signals if "." not in k), None)
    if signal is None:
        raise ConfigError(f"{path}: trace has no signals")
    st = detect_spikes(tr, signal, args.level * tr.scale)
    text = json.dumps(st.to_dict(), indent=2) + "\n"
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


# --------------------------------------------------------------------------
# Parser


def _number(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    # usage errors are user errors: exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="neurosynth",
                                 description="Compile polynomial dynamical systems to "
                                             "current-mode block netlists and simulate them.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, model_help):
        p.add_argument("model", help=model_help)
        p.add_argument("--params", help=f"key=value params file (fallback: ${PARAMS_ENV}, "
                                        "then <model>.params)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--slope-denominator", choices=SLOPE_DENOMINATORS,
                       help="core slope denominator used for simulation")

    def run_opts(p):
        p.add_argument("--dt", type=_number, help="step in model time (default tau_min/1000)")
        p.add_argument("--t-end", type=_number, default=DEFAULT_T_END,
                       help="duration in model time")
        p.add_argument("--method", choices=("euler", "rk4"), default="rk4")
        p.add_argument("--stim", help="stimulus, [name=]kind:args, e.g. step:0.8")
        p.add_argument("--design-denominator", choices=SLOPE_DENOMINATORS,
                       help="slope denominator assumed when sizing the netlist")

    p = sub.add_parser("compile", help="synthesize a netlist from a .nds model")
    common(p, "model file (.nds)")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("sim", help="simulate a model or netlist at one or all tiers")
    common(p, "model file (.nds) or netlist (.json)")
    run_opts(p)
    p.add_argument("--tier", choices=TIERS + ("all",), default="reference")
    p.add_argument("--plot", action="store_true", help="also write an SVG line chart")
    p.add_argument("--signals", help="comma-separated signals to plot (default: states)")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("compare", help="compare circuit (and device) tiers against the reference")
    common(p, "model file (.nds)")
    run_opts(p)
    p.add_argument("--threshold", type=_number, default=0.05,
                   help="maximum allowed rms_rel (default 0.05)")
    p.add_argument("--signal", help="signal to compare (default: first state)")
    p.add_argument("--device", action="store_true", help="include the device tier")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("stats", help="spike statistics of a trace CSV as JSON")
    p.add_argument("trace")
    p.add_argument("--signal")
    p.add_argument("--level", type=float, default=0.0,
                   help="spike threshold in model units (scaled by the trace's current unit)")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_stats)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, AnalysisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
