"""Fixed-step integration of the three model tiers.

* reference: the dimensionless ODE ``tau_N dx_N/dt = F_N(x, ext(t))``;
* circuit: the block-level core relation driven by the synthesized netlist,
  in amperes on the physical time axis;
* device: the square-law core with capacitor voltage as state.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .blocks import DeviceParams, core_rails, core_device_step, quiescent_core
from .dsl import SystemSpec, compile_expr
from .errors import ConfigError, DivergenceError, RegionFault
from .synth import CompiledNetlist, Netlist, compute_tau

METHODS = ("euler", "rk4")
TIERS = ("reference", "circuit", "device")


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_end: float
    method: str = "rk4"
    record_stride: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be > 0, got {self.dt!r}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ConfigError(f"t_end must be > 0, got {self.t_end!r}")
        if self.dt > self.t_end:
            raise ConfigError("dt must not exceed t_end")
        if not (isinstance(self.record_stride, int) and self.record_stride >= 1):
            raise ConfigError("record_stride must be a positive integer")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))

    def scaled(self, factor: float) -> "IntegratorConfig":
        """Same run with time stretched by ``factor`` (model units -> seconds)."""
        return IntegratorConfig(self.dt * factor, self.t_end * factor, self.method,
                                self.record_stride)


def default_config(spec: SystemSpec, t_end: float, method: str = "rk4") -> IntegratorConfig:
    """``dt = tau_min / 1000`` in model time."""
    tau_min = min((s.tau for s in spec.states), default=1.0)
    return IntegratorConfig(min(tau_min / 1000.0, t_end), t_end, method)


@dataclass
class Trace:
    """Time series of named signals produced by one simulation run."""

    times: np.ndarray
    signals: dict[str, np.ndarray]
    units: str = "dimensionless"
    tier: str = "reference"
    scale: float = 1.0          # amplitude of one model unit in ``units``
    time_scale: float = 1.0     # designed seconds of trace time per model time unit
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for k, v in self.signals.items():
            self.signals[k] = np.asarray(v, dtype=float)
            if self.signals[k].shape != self.times.shape:
                raise ValueError(f"signal {k!r} length does not match the time axis")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must be strictly increasing")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.signals[name]

    def normalized(self, name: str) -> np.ndarray:
        return self.signals[name] / self.scale

    def to_csv(self) -> str:
        head = [f"# tier: {self.tier}", f"# units: {self.units}",
                f"# scale: {self.scale!r}", f"# time_scale: {self.time_scale!r}"]
        for k, v in self.meta.items():
            head.append(f"# {k}: {v}")
        names = list(self.signals)
        head.append(",".join(["t"] + names))
        cols = [self.times] + [self.signals[n] for n in names]
        rows = [",".join(f"{x:.16e}" for x in row) for row in zip(*cols)]
        return "\n".join(head + rows) + "\n"

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "Trace":
        meta: dict[str, str] = {}
        lines = text.splitlines()
        i = 0
        while i < len(lines) and lines[i].startswith("#"):
            key, _, value = lines[i][1:].partition(":")
            meta[key.strip()] = value.strip()
            i += 1
        if i >= len(lines):
            raise ValueError("trace CSV has no header row")
        header = lines[i].split(",")
        if header[0] != "t":
            raise ValueError("trace CSV header must start with 't'")
        data = np.array([[float(x) for x in ln.split(",")] for ln in lines[i + 1:] if ln.strip()],
                        dtype=float).reshape(-1, len(header))
        signals = {name: data[:, j + 1] for j, name in enumerate(header[1:])}
        known = {k: meta.pop(k) for k in ("tier", "units", "scale", "time_scale") if k in meta}
        return cls(data[:, 0], signals, units=known.get("units", "dimensionless"),
                   tier=known.get("tier", "reference"), scale=float(known.get("scale", 1.0)),
                   time_scale=float(known.get("time_scale", 1.0)), meta=meta)

    @classmethod
    def read_csv(cls, path: str | os.PathLike) -> "Trace":
        with open(path, encoding="utf-8") as fh:
            return cls.from_csv(fh.read())


# --------------------------------------------------------------------------
# Generic fixed-step integrator

Rhs = Callable[[float, list], list]


def _check_finite(t: float, y: Sequence[float], names: Sequence[str]) -> None:
    for name, v in zip(names, y):
        if not math.isfinite(v):
            raise DivergenceError(t, name)


def integrate(rhs: Rhs, y0: Sequence[float], cfg: IntegratorConfig,
              names: Sequence[str] = (), observe: Callable[[float, list], None] | None = None):
    """Integrate ``dy/dt = rhs(t, y)`` on a fixed grid ``t_k = k dt``.

    Returns ``(times, states)`` at every ``record_stride``-th step, including
    the initial point. ``observe(t, y)`` is called at each recorded point.
    """
    dt, n = cfg.dt, cfg.n_steps
    y = [float(v) for v in y0]
    names = list(names) or [f"y{i}" for i in range(len(y))]
    times, rows = [0.0], [list(y)]
    if observe:
        observe(0.0, y)
    rk4 = cfg.method == "rk4"
    half = 0.5 * dt
    for k in range(n):
        t = k * dt
        try:
            k1 = rhs(t, y)
            if rk4:
                k2 = rhs(t + half, [a + half * b for a, b in zip(y, k1)])
                k3 = rhs(t + half, [a + half * b for a, b in zip(y, k2)])
                k4 = rhs(t + dt, [a + dt * b for a, b in zip(y, k3)])
                y = [a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                     for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
            else:
                y = [a + dt * b for a, b in zip(y, k1)]
        except OverflowError:
            raise DivergenceError(t) from None
        t_next = (k + 1) * dt
        _check_finite(t_next, y, names)
        if (k + 1) % cfg.record_stride == 0:
            times.append(t_next)
            rows.append(list(y))
            if observe:
                observe(t_next, y)
    return np.array(times), np.array(rows).reshape(len(times), len(y))


# --------------------------------------------------------------------------
# Reference tier


def simulate_reference(spec: SystemSpec, cfg: IntegratorConfig) -> Trace:
    """Integrate ``dx_N/dt = F_N(x, ext(t)) / tau_N`` from the declared inits."""
    names = spec.state_names + spec.external_names
    fs = [compile_expr(spec.derivatives[s.name], names) for s in spec.states]
    inv_tau = [1.0 / s.tau for s in spec.states]
    waves = [x.waveform for x in spec.externals]
    n_states = len(fs)

    def rhs(t, y):
        env = y + [w(t) for w in waves]
        return [f(env) * it for f, it in zip(fs, inv_tau)]

    y0 = [s.init for s in spec.states]
    if n_states == 0:
        times = np.arange(cfg.n_steps // cfg.record_stride + 1) * cfg.dt * cfg.record_stride
        ys = np.zeros((times.size, 0))
    else:
        times, ys = integrate(rhs, y0, cfg, spec.state_names)
    signals = {s.name: ys[:, i] for i, s in enumerate(spec.states)}
    for x in spec.externals:
        signals[x.name] = np.array([x.waveform(t) for t in times])
    return Trace(times, signals, units="dimensionless", tier="reference",
                 meta={"system": spec.name, "method": cfg.method, "dt": repr(cfg.dt)})


# --------------------------------------------------------------------------
# Circuit tier


def _external_currents(n: Netlist):
    waves = [n.waveform(name) for name in (b.params["name"] for b in n.externals)]
    ts, iu = n.time_scale, n.i_unit
    return lambda t: [w(t / ts) * iu for w in waves]


def simulate_circuit(n: Netlist, p: DeviceParams, cfg: IntegratorConfig) -> Trace:
    """Block-level simulation on the physical time axis (``cfg`` in seconds).

    Each state current obeys ``dI/dt = S 2 sqrt(k_n) I_Cin / (d C)`` with
    ``S = sqrt(I_A) + sqrt(I_B)`` held at ``2 sqrt(i_q)``; ``d`` follows
    ``p.slope_denominator``. Branch currents are recovered from ``I_out``
    and ``S``; a branch going through zero is an operating-region fault.
    """
    compiled = CompiledNetlist(n)
    ext = _external_currents(n)
    u = p.current_unit
    d = p.slope_factor()
    gain = []
    for st in n.states:
        s_u = 2.0 * math.sqrt(st.i_q / u)
        gain.append(s_u * 2.0 * math.sqrt(p.k_n / u) / (d * st.cap))
    i_q = [st.i_q for st in n.states]
    names = [st.name for st in n.states]

    def inputs(t, y):
        x = []
        for i_out, q in zip(y, i_q):
            x.extend(core_rails(i_out, q))
        return x + ext(t)

    def rhs(t, y):
        try:
            cin = compiled(inputs(t, y))
        except RegionFault as exc:
            raise exc.at(t) from None
        return [g * (cin[2 * i] - cin[2 * i + 1]) for i, g in enumerate(gain)]

    rec: dict[str, list] = {f"{nm}.{k}": [] for nm in names for k in ("ia", "ib", "cin")}

    def observe(t, y):
        x = inputs(t, y)
        cin = compiled(x)
        for i, nm in enumerate(names):
            rec[f"{nm}.ia"].append(x[2 * i])
            rec[f"{nm}.ib"].append(x[2 * i + 1])
            rec[f"{nm}.cin"].append(cin[2 * i] - cin[2 * i + 1])

    y0 = [st.init * n.i_unit for st in n.states]
    times, ys = integrate(rhs, y0, cfg, names, observe)
    signals = {nm: ys[:, i] for i, nm in enumerate(names)}
    signals.update(rec)
    for b in n.externals:
        w = n.waveform(b.params["name"])
        signals[b.params["name"]] = np.array([w(t / n.time_scale) * n.i_unit for t in times])
    return Trace(times, signals, units="ampere", tier="circuit", scale=n.i_unit,
                 time_scale=n.time_scale,
                 meta={"system": n.name, "method": cfg.method, "dt": repr(cfg.dt),
                       "slope_denominator": p.slope_denominator,
                       "realized_time_scale": repr(realized_time_scale_for(n, p))})


def realized_time_scale_for(n: Netlist, p: DeviceParams, which: str | None = None) -> float:
    """Seconds per model unit the netlist actually runs at under ``p``."""
    if not n.states:
        return 1.0
    st = n.states[0]
    return compute_tau(p, st.cap, st.i_dc, which) / st.tau


# --------------------------------------------------------------------------
# Device tier


def simulate_device(n: Netlist, p: DeviceParams, cfg: IntegratorConfig) -> Trace:
    """Square-law core simulation with capacitor voltages as state.

    The rk4 stages are evaluated at cores advanced by
    :func:`~neurosynth.blocks.core_device_step`; since the capacitor update is
    linear in ``I_Cin``, the final step with the stage-weighted current is
    exactly rk4 on ``V_C``.
    """
    compiled = CompiledNetlist(n)
    ext = _external_currents(n)
    names = [st.name for st in n.states]
    caps = [st.cap for st in n.states]
    cores = [quiescent_core(p, st.i_q, st.init * n.i_unit) for st in n.states]
    dt, steps = cfg.dt, cfg.n_steps
    half = 0.5 * dt

    def cin_of(t, cs):
        x = []
        for c in cs:
            x += [c.i_a, c.i_b]
        out = compiled(x + ext(t))
        return [out[2 * i] - out[2 * i + 1] for i in range(len(cs))]

    def advance(cs, currents, h, t):
        try:
            return [core_device_step(c, i, h, p, cap) for c, i, cap in zip(cs, currents, caps)]
        except RegionFault as exc:
            raise exc.at(t) from None

    rec: dict[str, list] = {"t": []}
    for nm in names:
        for k in ("", ".ia", ".ib", ".vc", ".cin"):
            rec[nm + k] = []

    def record(t, cs):
        cin = cin_of(t, cs)
        rec["t"].append(t)
        for nm, c, i in zip(names, cs, cin):
            rec[nm].append(c.i_out)
            rec[nm + ".ia"].append(c.i_a)
            rec[nm + ".ib"].append(c.i_b)
            rec[nm + ".vc"].append(c.v_c)
            rec[nm + ".cin"].append(i)

    record(0.0, cores)
    for k in range(steps):
        t = k * dt
        try:
            k1 = cin_of(t, cores)
            if cfg.method == "rk4":
                k2 = cin_of(t + half, advance(cores, k1, half, t))
                k3 = cin_of(t + half, advance(cores, k2, half, t))
                k4 = cin_of(t + dt, advance(cores, k3, dt, t))
                eff = [(a + 2.0 * b + 2.0 * c + e) / 6.0 for a, b, c, e in zip(k1, k2, k3, k4)]
            else:
                eff = k1
            cores = advance(cores, eff, dt, t)
        except OverflowError:
            raise DivergenceError(t) from None
        t_next = (k + 1) * dt
        _check_finite(t_next, [c.v_c for c in cores], names)
        if (k + 1) % cfg.record_stride == 0:
            record(t_next, cores)

    times = np.array(rec.pop("t"))
    signals = {k: np.array(v) for k, v in rec.items()}
    for b in n.externals:
        w = n.waveform(b.params["name"])
        signals[b.params["name"]] = np.array([w(t / n.time_scale) * n.i_unit for t in times])
    return Trace(times, signals, units="ampere", tier="device", scale=n.i_unit,
                 time_scale=n.time_scale,
                 meta={"system": n.name, "method": cfg.method, "dt": repr(cfg.dt),
                       "realized_time_scale": repr(realized_time_scale_for(n, p, "derived"))})


def simulate(tier: str, spec: SystemSpec | None, netlist: Netlist | None, p: DeviceParams,
             cfg_model: IntegratorConfig) -> Trace:
    """Run one tier with ``cfg_model`` given in model time units."""
    if tier == "reference":
        if spec is None:
            raise ConfigError("the reference tier needs a model source, not a netlist")
        return simulate_reference(spec, cfg_model)
    if netlist is None:
        raise ConfigError(f"the {tier} tier needs a netlist")
    if tier == "circuit":
        return simulate_circuit(netlist, p, cfg_model.scaled(netlist.time_scale))
    if tier == "device":
        return simulate_device(netlist, p, cfg_model.scaled(netlist.time_scale))
    raise ConfigError(f"unknown tier {tier!r}; expected one of {TIERS}")


__all__ = [
    "IntegratorConfig", "Trace", "integrate", "default_config", "simulate",
    "simulate_reference", "simulate_circuit", "simulate_device", "compute_tau",
    "realized_time_scale_for",
]
