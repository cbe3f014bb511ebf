"""Compile a :class:`SystemSpec` into a current-mode block netlist.

Every state becomes an integrator core whose branch currents ``I_B`` and
``I_A`` are the plus and minus rails of the state current
``I_out = I_B - I_A``. The right-hand side ``F_N`` is expanded into
monomials, split into nonnegative halves ``F+`` and ``F-``, and built from
bilateral multipliers, mirrors, summers and constant sources. Each half is
divided by the root-square denominator to form the capacitor currents
``I_Cin+`` and ``I_Cin-``.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import blocks
from .blocks import DeviceParams, core_rails
from .dsl import Expr, SystemSpec, Waveform, waveform_from_dict
from .errors import (
    ConfigError,
    NetlistError,
    SignDisciplineError,
    SynthesisError,
    UnsupportedExpressionError,
)
from .poly import (
    Monomial,
    Poly,
    degree,
    eval_poly,
    factors,
    format_monomial,
    poly_degree,
    to_poly,
)

MAX_DEGREE = 3
RAILS = ("plus", "minus", "single", "signed")

# kind -> (input ports, output ports); Summer inputs are in0..inN
PORTS: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "NbdsIntegrator": (("cin_plus", "cin_minus"), ("ia", "ib")),
    "External": ((), ("out",)),
    "Splitter": (("in",), ("plus", "minus")),
    "RootSquare": (("in",), ("out",)),
    "MultCore": (("in",), ("out",)),
    "BilateralMult": (("x_plus", "x_minus", "y_plus", "y_minus"), ("out_plus", "out_minus")),
    "MirrorGain": (("in",), ("out",)),
    "Summer": ((), ("out",)),
    "ConstSource": ((), ("out",)),
    "IdealDivider": (("num", "den"), ("out",)),
}
SOURCE_KINDS = ("NbdsIntegrator", "External", "ConstSource")


# --------------------------------------------------------------------------
# Scaling


@dataclass(frozen=True)
class ScalingMap:
    """Electrical scaling of a dimensionless model.

    ``i_unit`` is the current standing for one model unit. ``i_dc`` and
    ``cap`` set each state's realized time constant; ``bias`` carries the
    multiplier bias ``i_b`` and the normalization current ``i_x``. ``i_q``
    is the quiescent branch current of each core (defaults to ``i_dc``).
    """

    i_unit: float
    i_dc: Mapping[str, float]
    cap: Mapping[str, float]
    bias: Mapping[str, float]
    i_q: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.i_unit > 0:
            raise ConfigError("i_unit must be > 0")
        for label, mapping in (("i_dc", self.i_dc), ("cap", self.cap),
                               ("bias", self.bias), ("i_q", self.i_q)):
            for k, v in mapping.items():
                if not v > 0:
                    raise ConfigError(f"{label}[{k}] must be > 0, got {v!r}")

    def quiescent(self, state: str) -> float:
        return self.i_q.get(state, self.i_dc[state])

    @classmethod
    def for_system(cls, spec: SystemSpec, p: DeviceParams, *, i_unit: float = 1e-6,
                   i_dc_ref: float = 80e-9, cap: float | None = None,
                   i_b: float | None = None, i_x: float | None = None,
                   i_q: float | Mapping[str, float] | None = None) -> "ScalingMap":
        """Choose per-state ``i_dc`` so that all states share one time scale.

        The first state gets ``i_dc_ref``; the others are scaled by the ratio
        of model time constants, with a common capacitance.
        """
        cap = p.cap if cap is None else cap
        names = spec.state_names
        tau_ref = spec.states[0].tau if spec.states else 1.0
        i_dc = {s.name: i_dc_ref * tau_ref / s.tau for s in spec.states}
        if isinstance(i_q, Mapping):
            iq = dict(i_q)
        elif i_q is not None:
            iq = {n: float(i_q) for n in names}
        else:
            iq = {}
        return cls(
            i_unit=i_unit,
            i_dc=i_dc,
            cap={n: cap for n in names},
            bias={"i_b": 3.0 * i_unit if i_b is None else i_b,
                  "i_x": i_unit if i_x is None else i_x},
            i_q=iq,
        )

    @classmethod
    def from_mapping(cls, spec: SystemSpec, values: Mapping[str, object],
                     p: DeviceParams) -> "ScalingMap":
        """Read ``i_unit``, ``i_b``, ``i_x``, ``cap[.<state>]``, ``i_dc[.<state>]``
        and ``i_q[.<state>]`` keys (SI units).

        Per-state ``i_dc`` keys must cover every state if any are given; a
        bare ``i_dc`` is a reference value for the first state.
        """
        def num(key, default=None):
            if key not in values:
                return default
            try:
                return float(values[key])
            except (TypeError, ValueError):
                raise ConfigError(f"{key}: expected a number, got {values[key]!r}") from None

        names = spec.state_names
        base = cls.for_system(
            spec, p,
            i_unit=num("i_unit", 1e-6),
            i_dc_ref=num("i_dc", 80e-9),
            cap=num("cap", p.cap),
            i_b=num("i_b"),
            i_x=num("i_x"),
            i_q=num("i_q"),
        )
        per_state = {n: num(f"i_dc.{n}") for n in names}
        given = {n: v for n, v in per_state.items() if v is not None}
        unknown = [k for k in values if k.startswith(("i_dc.", "cap.", "i_q."))
                   and k.split(".", 1)[1] not in names]
        if unknown:
            raise ConfigError(f"scaling entries for unknown states: {sorted(unknown)}")
        if given and len(given) != len(names):
            missing = [n for n in names if n not in given]
            raise ConfigError(f"missing scaling entry i_dc.<state> for {missing}")
        i_dc = given or dict(base.i_dc)
        cap = {n: num(f"cap.{n}", base.cap[n]) for n in names}
        i_q = dict(base.i_q)
        for n in names:
            v = num(f"i_q.{n}")
            if v is not None:
                i_q[n] = v
        return cls(base.i_unit, i_dc, cap, base.bias, i_q)

    def check_covers(self, spec: SystemSpec) -> None:
        for n in spec.state_names:
            if n not in self.i_dc:
                raise ConfigError(f"missing scaling entry i_dc for state {n!r}")
            if n not in self.cap:
                raise ConfigError(f"missing scaling entry cap for state {n!r}")
        for key in ("i_b", "i_x"):
            if key not in self.bias:
                raise ConfigError(f"missing scaling entry {key!r}")


def compute_tau(p: DeviceParams, cap: float, i_dc: float, which: str | None = None) -> float:
    """Physical seconds per unit of model time for one core.

    ``cap (2+beta) / (2 sqrt(k_n) i_dc)`` (or ``1+beta`` for the derived
    denominator), with currents expressed in ``p.current_unit``.
    """
    if not (cap > 0 and i_dc > 0):
        raise ConfigError("cap and i_dc must be > 0")
    u = p.current_unit
    return cap * p.slope_factor(which) / (2.0 * math.sqrt(p.k_n / u) * (i_dc / u))


def realized_time_scale(spec: SystemSpec, sm: ScalingMap, p: DeviceParams,
                        rtol: float = 1e-9) -> float:
    """Common seconds-per-model-unit of all states; raise if they disagree."""
    sm.check_covers(spec)
    scales = {s.name: compute_tau(p, sm.cap[s.name], sm.i_dc[s.name]) / s.tau
              for s in spec.states}
    if not scales:
        return 1.0
    ref = next(iter(scales.values()))
    for n, ts in scales.items():
        if abs(ts - ref) > rtol * ref:
            raise SynthesisError(
                f"unrealizable tau for state {n!r}: cap/i_dc gives {ts:.6g} s per model "
                f"unit, other states give {ref:.6g} s")
    return ref


# --------------------------------------------------------------------------
# Current-domain system


@dataclass(frozen=True)
class CurrentSystem:
    """Model right-hand sides rewritten over currents.

    ``polys`` hold the dimensionless polynomials; a degree-k monomial with
    coefficient c contributes ``c * i_unit**(1-k) * prod(I)`` in amperes.
    """

    spec: SystemSpec
    scaling: ScalingMap
    polys: Mapping[str, Poly]

    def current_poly(self, state: str) -> Poly:
        u = self.scaling.i_unit
        return {m: c * u ** (1 - degree(m)) for m, c in self.polys[state].items()}

    def evaluate(self, state: str, currents: Mapping[str, float]) -> float:
        return eval_poly(self.current_poly(state), currents)

    def describe(self, state: str) -> str:
        """Render ``F_state`` with named normalization currents, e.g.
        ``I_v - I_v^3/(I_b*I_x) - I_w + I_Iext``."""
        u = self.scaling.i_unit
        i_b, i_x = self.scaling.bias["i_b"], self.scaling.bias["i_x"]
        parts = []
        for m, c in sorted(self.polys[state].items(), key=lambda mc: (degree(mc[0]), mc[0])):
            k = degree(m)
            body = "*".join(f"I_{n}" if p == 1 else f"I_{n}^{p}" for n, p in m)
            if k == 0:
                mag, txt = abs(c) * u, f"{abs(c) * u:.6g} A"
            else:
                mag = abs(c) * (i_x / u) ** (k - 1)
                if k >= 2 and math.isclose(mag * i_b / i_x, 1.0, rel_tol=1e-12):
                    den = {2: "I_b", 3: "(I_b*I_x)"}.get(k, f"(I_b*I_x^{k - 2})")
                    txt = f"{body}/{den}"
                else:
                    coef = "" if math.isclose(mag, 1.0, rel_tol=1e-12) else f"{mag:.6g}*"
                    den = "" if k == 1 else ("/I_x" if k == 2 else f"/I_x^{k - 1}")
                    txt = f"{coef}{body}{den}"
            parts.append(("-" if c < 0 else "+", txt))
        if not parts:
            return "0"
        sign, first = parts[0]
        out = ("-" if sign == "-" else "") + first
        for sign, txt in parts[1:]:
            out += f" {sign} {txt}"
        return out


def scale_to_currents(spec: SystemSpec, sm: ScalingMap) -> CurrentSystem:
    """Rewrite every ``F_N`` over currents ``I_x = x * i_unit``."""
    sm.check_covers(spec)
    polys = {}
    for s in spec.states:
        poly = to_poly(spec.derivatives[s.name])
        if poly_degree(poly) > MAX_DEGREE:
            raise UnsupportedExpressionError(
                f"d{s.name}/dt has a monomial of degree {poly_degree(poly)}; "
                f"at most {MAX_DEGREE} is supported")
        polys[s.name] = poly
    return CurrentSystem(spec, sm, polys)


# --------------------------------------------------------------------------
# Signed decomposition

RailFactor = tuple[str, str]            # (signal, 'plus' | 'minus')
RailMonomial = tuple[RailFactor, ...]
RailPoly = dict[RailMonomial, float]


def decompose_signed(f: Poly | Expr) -> tuple[RailPoly, RailPoly]:
    """Split a signed polynomial into nonnegative halves ``f+`` and ``f-``.

    Each signed variable is written ``x = x+ - x-`` and every product is
    expanded with the bilateral sign rule: a term with an even number of
    minus-rail factors keeps the sign of its coefficient, an odd number flips
    it. Both halves have positive coefficients only and
    ``f+ - f- == f`` identically.
    """
    poly = f if isinstance(f, dict) else to_poly(f)
    plus: RailPoly = defaultdict(float)
    minus: RailPoly = defaultdict(float)
    for m, c in poly.items():
        if c == 0:
            continue
        names = factors(m)
        for choice in itertools.product(("plus", "minus"), repeat=len(names)):
            key = tuple(sorted(zip(names, choice)))
            odd = choice.count("minus") % 2 == 1
            if (c > 0) != odd:
                plus[key] += abs(c)
            else:
                minus[key] += abs(c)
    return dict(plus), dict(minus)


def eval_rails(rp: RailPoly, rails: Mapping[RailFactor, float]) -> float:
    total = 0.0
    for m, c in rp.items():
        term = c
        for fac in m:
            term *= rails[fac]
        total += term
    return total


# --------------------------------------------------------------------------
# Netlist


@dataclass(frozen=True)
class Block:
    id: str
    kind: str
    params: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class Net:
    src: str   # "block.port"
    dst: str
    rail: str


@dataclass(frozen=True)
class StateBinding:
    name: str
    integrator_id: str
    cap: float
    i_dc: float
    i_q: float
    init: float
    tau: float


@dataclass(frozen=True)
class Netlist:
    name: str
    blocks: tuple[Block, ...]
    nets: tuple[Net, ...]
    states: tuple[StateBinding, ...]
    i_unit: float = 1e-6
    time_scale: float = 1.0
    current_unit: float = 1e-6

    def __post_init__(self):
        validate_netlist(self)

    def block(self, block_id: str) -> Block:
        for b in self.blocks:
            if b.id == block_id:
                return b
        raise KeyError(block_id)

    def kind_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for b in self.blocks:
            counts[b.kind] = counts.get(b.kind, 0) + 1
        return dict(sorted(counts.items()))

    @property
    def externals(self) -> list[Block]:
        return [b for b in self.blocks if b.kind == "External"]

    def waveform(self, ext_name: str) -> Waveform:
        for b in self.externals:
            if b.params["name"] == ext_name:
                return waveform_from_dict(b.params["waveform"])
        raise KeyError(ext_name)

    def drivers(self) -> dict[str, Net]:
        return {net.dst: net for net in self.nets}

    def topological_order(self) -> list[Block]:
        return _topo_order(self)


def _split_port(ref: str) -> tuple[str, str]:
    block_id, sep, port = ref.rpartition(".")
    if not sep:
        raise NetlistError(f"malformed port reference {ref!r}")
    return block_id, port


def _input_ports(b: Block, nets: Iterable[Net]) -> tuple[str, ...]:
    if b.kind == "Summer":
        return tuple(sorted((_split_port(n.dst)[1] for n in nets if _split_port(n.dst)[0] == b.id),
                            key=lambda s: int(s[2:])))
    return PORTS[b.kind][0]


def validate_netlist(n: Netlist) -> None:
    ids = {}
    for b in n.blocks:
        if b.kind not in PORTS:
            raise NetlistError(f"block {b.id!r}: unknown kind {b.kind!r}")
        if b.id in ids:
            raise NetlistError(f"duplicate block id {b.id!r}")
        if "." in b.id:
            raise NetlistError(f"block id {b.id!r} must not contain '.'")
        ids[b.id] = b
    seen_dst = set()
    for net in n.nets:
        if net.rail not in RAILS:
            raise NetlistError(f"net {net.src}->{net.dst}: unknown rail {net.rail!r}")
        sb, sp = _split_port(net.src)
        db, dp = _split_port(net.dst)
        if sb not in ids or db not in ids:
            raise NetlistError(f"net {net.src}->{net.dst} references an unknown block")
        if sp not in PORTS[ids[sb].kind][1]:
            raise NetlistError(f"{ids[sb].kind} {sb!r} has no output port {sp!r}")
        if ids[db].kind == "Summer":
            if not (dp.startswith("in") and dp[2:].isdigit()):
                raise NetlistError(f"Summer {db!r} input ports are in0..inN, got {dp!r}")
        elif dp not in PORTS[ids[db].kind][0]:
            raise NetlistError(f"{ids[db].kind} {db!r} has no input port {dp!r}")
        if net.dst in seen_dst:
            raise NetlistError(f"input {net.dst} is driven twice")
        seen_dst.add(net.dst)
        if net.rail == "signed" and ids[db].kind != "Splitter":
            raise NetlistError(f"signed net {net.src} may only feed a Splitter, not {db!r}")
    for b in n.blocks:
        if b.kind == "Summer":
            continue
        for port in PORTS[b.kind][0]:
            if f"{b.id}.{port}" not in seen_dst:
                raise NetlistError(f"{b.kind} {b.id!r}: input {port!r} is unconnected")
    bound = {s.integrator_id for s in n.states}
    integrators = {b.id for b in n.blocks if b.kind == "NbdsIntegrator"}
    if bound != integrators:
        raise NetlistError("every integrator must be bound to exactly one state")
    _topo_order(n)


def _topo_order(n: Netlist) -> list[Block]:
    """Combinational order; integrator inputs are feedback and not dependencies.

    Ties are broken by block id so the order is deterministic.
    """
    by_id = {b.id: b for b in n.blocks}
    deps: dict[str, set[str]] = {b.id: set() for b in n.blocks}
    users: dict[str, set[str]] = defaultdict(set)
    for net in n.nets:
        sb, _ = _split_port(net.src)
        db, _ = _split_port(net.dst)
        if by_id[db].kind == "NbdsIntegrator":
            continue
        deps[db].add(sb)
        users[sb].add(db)
    remaining = {k: len(v) for k, v in deps.items()}
    ready = [k for k, v in remaining.items() if v == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        k = heapq.heappop(ready)
        order.append(by_id[k])
        for u in sorted(users[k]):
            remaining[u] -= 1
            if remaining[u] == 0:
                heapq.heappush(ready, u)
    if len(order) != len(n.blocks):
        stuck = sorted(k for k, v in remaining.items() if v > 0)
        raise NetlistError(f"combinational cycle through blocks {stuck}")
    return order


# --------------------------------------------------------------------------
# Synthesis


class _Builder:
    def __init__(self):
        self.blocks: list[Block] = []
        self.nets: list[Net] = []
        self.summer_inputs: dict[str, int] = defaultdict(int)
        self.counter = itertools.count()

    def add(self, block_id: str, kind: str, **params) -> str:
        self.blocks.append(Block(block_id, kind, params))
        return block_id

    def fresh(self, prefix: str) -> str:
        return f"{prefix}{next(self.counter)}"

    def connect(self, src: str, dst: str, rail: str) -> None:
        self.nets.append(Net(src, dst, rail))

    def feed_summer(self, summer: str, src: str, rail: str) -> None:
        k = self.summer_inputs[summer]
        self.summer_inputs[summer] += 1
        self.connect(src, f"{summer}.in{k}", rail)

    def mirror(self, src: str, ratio: float, rail: str) -> str:
        g = self.add(self.fresh("gain"), "MirrorGain", ratio=ratio)
        self.connect(src, f"{g}.in", rail)
        return f"{g}.out"


def synthesize(spec: SystemSpec, sm: ScalingMap, p: DeviceParams) -> Netlist:
    """Build the block netlist realizing ``tau_N dI_N/dt = F_N``.

    Parameters
    ----------
    spec : SystemSpec
        Parsed model; right-hand sides must be polynomials of degree <= 3.
    sm : ScalingMap
        Current scaling, per-state ``cap``/``i_dc`` and bias currents.
    p : DeviceParams
        Process constants, used for the realized-time-constant check and the
        denominator normalization.

    Returns
    -------
    Netlist
        One ``NbdsIntegrator`` per state plus the dataflow computing each
        ``I_Cin+`` and ``I_Cin-``.
    """
    cs = scale_to_currents(spec, sm)
    time_scale = realized_time_scale(spec, sm, p)
    u = p.current_unit
    i_b, i_x, i_unit = sm.bias["i_b"], sm.bias["i_x"], sm.i_unit
    b = _Builder()

    rails: dict[str, tuple[str, str]] = {}
    for s in spec.states:
        iid = b.add(f"int_{s.name}", "NbdsIntegrator", state=s.name, cap=sm.cap[s.name],
                    i_dc=sm.i_dc[s.name], i_q=sm.quiescent(s.name))
        rails[s.name] = (f"{iid}.ib", f"{iid}.ia")
    for x in spec.externals:
        src = b.add(f"ext_{x.name}", "External", name=x.name, waveform=x.waveform.to_dict())
        sp = b.add(f"split_{x.name}", "Splitter")
        b.connect(f"{src}.out", f"{sp}.in", "signed")
        rails[x.name] = (f"{sp}.plus", f"{sp}.minus")

    raw_cache: dict[tuple[str, ...], tuple[str, str]] = {}
    comp_cache: dict[tuple[str, ...], tuple[str, str]] = {}

    def compensated(names: tuple[str, ...]) -> tuple[str, str]:
        # rails of prod(names) / i_x**(len-1)
        if len(names) == 1:
            return rails[names[0]]
        if names not in comp_cache:
            rp, rm = raw(names)
            r = i_b / (2.0 * i_x)
            comp_cache[names] = (b.mirror(rp, r, "plus"), b.mirror(rm, r, "minus"))
        return comp_cache[names]

    def raw(names: tuple[str, ...]) -> tuple[str, str]:
        # rails of 2 * compensated(names[:-1]) * names[-1] / i_b
        if len(names) == 1:
            return rails[names[0]]
        if names not in raw_cache:
            xp, xm = compensated(names[:-1])
            yp, ym = rails[names[-1]]
            mid = b.add("mul_" + "_".join(names), "BilateralMult", i_bias=i_b)
            b.connect(xp, f"{mid}.x_plus", "plus")
            b.connect(xm, f"{mid}.x_minus", "minus")
            b.connect(yp, f"{mid}.y_plus", "plus")
            b.connect(ym, f"{mid}.y_minus", "minus")
            raw_cache[names] = (f"{mid}.out_plus", f"{mid}.out_minus")
        return raw_cache[names]

    for s in spec.states:
        f_plus = b.add(f"fplus_{s.name}", "Summer")
        f_minus = b.add(f"fminus_{s.name}", "Summer")
        for mono, c in sorted(cs.polys[s.name].items(), key=lambda mc: (degree(mc[0]), mc[0])):
            k = degree(mono)
            if k == 0:
                src = b.add(b.fresh("const"), "ConstSource", current=abs(c) * i_unit)
                b.feed_summer(f_plus if c > 0 else f_minus, f"{src}.out", "single")
                continue
            names = factors(mono)
            rp, rm = raw(names)
            ratio = abs(c) if k == 1 else abs(c) * (i_x / i_unit) ** (k - 1) * i_b / (2.0 * i_x)
            if ratio != 1.0:
                rp, rm = b.mirror(rp, ratio, "plus"), b.mirror(rm, ratio, "minus")
            if c > 0:
                b.feed_summer(f_plus, rp, "plus")
                b.feed_summer(f_minus, rm, "minus")
            else:
                b.feed_summer(f_plus, rm, "minus")
                b.feed_summer(f_minus, rp, "plus")

        i_dc = sm.i_dc[s.name]
        iid = f"int_{s.name}"
        rsa = b.add(f"rsa_{s.name}", "RootSquare", i_bias=i_dc / 4.0)
        rsb = b.add(f"rsb_{s.name}", "RootSquare", i_bias=i_dc / 4.0)
        b.connect(f"{iid}.ia", f"{rsa}.in", "minus")
        b.connect(f"{iid}.ib", f"{rsb}.in", "plus")
        dsum = b.add(f"densum_{s.name}", "Summer")
        b.feed_summer(dsum, f"{rsa}.out", "single")
        b.feed_summer(dsum, f"{rsb}.out", "single")
        den = b.add(f"den_{s.name}", "MirrorGain", ratio=math.sqrt(u / i_dc))
        b.connect(f"{dsum}.out", f"{den}.in", "single")
        for half, summer in (("plus", f_plus), ("minus", f_minus)):
            div = b.add(f"div{half}_{s.name}", "IdealDivider", scale=i_dc)
            b.connect(f"{summer}.out", f"{div}.num", half)
            b.connect(f"{den}.out", f"{div}.den", "single")
            b.connect(f"{div}.out", f"{iid}.cin_{half}", half)

    states = tuple(StateBinding(s.name, f"int_{s.name}", sm.cap[s.name], sm.i_dc[s.name],
                                sm.quiescent(s.name), s.init, s.tau) for s in spec.states)
    return Netlist(spec.name, tuple(b.blocks), tuple(b.nets), states,
                   i_unit=i_unit, time_scale=time_scale, current_unit=u)


# --------------------------------------------------------------------------
# Evaluation


def _resolve_inputs(n: Netlist, state: Mapping[str, float]) -> dict[str, float]:
    values: dict[str, float] = {}
    for st in n.states:
        ka, kb = f"{st.name}.ia", f"{st.name}.ib"
        if ka in state and kb in state:
            ia, ib = float(state[ka]), float(state[kb])
        elif st.name in state:
            ia, ib = core_rails(float(state[st.name]), st.i_q)
        else:
            raise NetlistError(f"state {st.name!r} is not assigned")
        values[f"{st.integrator_id}.ia"] = ia
        values[f"{st.integrator_id}.ib"] = ib
    for blk in n.externals:
        name = blk.params["name"]
        if name not in state:
            raise NetlistError(f"external {name!r} is not assigned")
        values[f"{blk.id}.out"] = float(state[name])
    return values


def _eval_block(b: Block, ins: Mapping[str, float]) -> dict[str, float]:
    k, prm = b.kind, b.params
    if k == "ConstSource":
        return {"out": float(prm["current"])}
    if k == "Splitter":
        plus, minus = blocks.split(ins["in"])
        return {"plus": plus, "minus": minus}
    if k == "RootSquare":
        return {"out": blocks.root_square(ins["in"], prm["i_bias"])}
    if k == "MultCore":
        return {"out": blocks.mult_core(ins["in"], prm["i_bias"])}
    if k == "BilateralMult":
        op, om = blocks.bilateral_mult(ins["x_plus"], ins["x_minus"], ins["y_plus"],
                                       ins["y_minus"], prm["i_bias"])
        return {"out_plus": op, "out_minus": om}
    if k == "MirrorGain":
        return {"out": prm["ratio"] * ins["in"]}
    if k == "Summer":
        return {"out": math.fsum(ins.values())}
    if k == "IdealDivider":
        if not ins["den"] > 0:
            raise NetlistError(f"divider {b.id!r}: denominator must be > 0")
        return {"out": ins["num"] * prm["scale"] / ins["den"]}
    raise NetlistError(f"cannot evaluate block kind {k!r}")


def netlist_eval(n: Netlist, state: Mapping[str, float]) -> dict[str, float]:
    """Evaluate the combinational dataflow for one operating point.

    ``state`` assigns each state's current (by state name, from which the
    branch currents follow the quiescent decomposition) or its branch
    currents explicitly as ``"<state>.ia"``/``"<state>.ib"``, and every
    external by name. All values in amperes.

    Returns every output port as ``"block.port"``, plus each integrator's
    ``cin_plus``/``cin_minus`` inputs.
    """
    values = _resolve_inputs(n, state)
    rail_of = {net.src: net.rail for net in n.nets}
    incoming: dict[str, list[Net]] = defaultdict(list)
    for net in n.nets:
        incoming[_split_port(net.dst)[0]].append(net)
    for b in n.topological_order():
        if b.kind in ("NbdsIntegrator", "External"):
            continue
        ins = {_split_port(net.dst)[1]: values[net.src] for net in incoming[b.id]}
        for port, val in _eval_block(b, ins).items():
            ref = f"{b.id}.{port}"
            if val < 0 and rail_of.get(ref, "single") != "signed":
                raise SignDisciplineError(f"net {ref} went negative ({val:.3e} A)")
            values[ref] = val
    for b in n.blocks:
        if b.kind == "NbdsIntegrator":
            for port in ("cin_plus", "cin_minus"):
                net = next(x for x in incoming[b.id] if x.dst == f"{b.id}.{port}")
                values[f"{b.id}.{port}"] = values[net.src]
    return values


class CompiledNetlist:
    """Straight-line Python generated from a netlist, for the simulators.

    Call with a flat list ``[ia_0, ib_0, ia_1, ib_1, ..., ext_0, ...]`` in
    state order then external order; returns ``[cin+_0, cin-_0, ...]``.
    """

    def __init__(self, n: Netlist):
        self.netlist = n
        self.state_names = [s.name for s in n.states]
        self.external_names = [b.params["name"] for b in n.externals]
        slot: dict[str, str] = {}
        lines = ["def _evaluate(x):"]
        pos = 0
        for st in n.states:
            slot[f"{st.integrator_id}.ia"] = f"x[{pos}]"
            slot[f"{st.integrator_id}.ib"] = f"x[{pos + 1}]"
            pos += 2
        for blk in n.externals:
            slot[f"{blk.id}.out"] = f"x[{pos}]"
            pos += 1
        self.n_inputs = pos
        incoming: dict[str, dict[str, str]] = defaultdict(dict)
        for net in n.nets:
            db, dp = _split_port(net.dst)
            incoming[db][dp] = net.src
        counter = itertools.count()

        def new(ref: str) -> str:
            name = f"s{next(counter)}"
            slot[ref] = name
            return name

        for b in n.topological_order():
            k, prm = b.kind, b.params
            if k in ("NbdsIntegrator", "External"):
                continue
            ins = {port: slot[src] for port, src in incoming[b.id].items()}
            if k == "ConstSource":
                lines.append(f"    {new(b.id + '.out')} = {float(prm['current'])!r}")
            elif k == "Splitter":
                v = ins["in"]
                lines.append(f"    {new(b.id + '.plus')} = {v} if {v} > 0.0 else 0.0")
                lines.append(f"    {new(b.id + '.minus')} = -{v} if {v} < 0.0 else 0.0")
            elif k == "RootSquare":
                lines.append(f"    {new(b.id + '.out')} = 2.0 * sqrt({ins['in']} * "
                             f"{float(prm['i_bias'])!r})")
            elif k == "MultCore":
                ib = float(prm["i_bias"])
                lines.append(f"    {new(b.id + '.out')} = ({ins['in']} + {0.5 * ib!r}) ** 2 / {ib!r}")
            elif k == "BilateralMult":
                g = 2.0 / float(prm["i_bias"])
                xp, xm, yp, ym = ins["x_plus"], ins["x_minus"], ins["y_plus"], ins["y_minus"]
                lines.append(f"    {new(b.id + '.out_plus')} = {g!r} * ({xp} * {yp} + {xm} * {ym})")
                lines.append(f"    {new(b.id + '.out_minus')} = {g!r} * ({xm} * {yp} + {xp} * {ym})")
            elif k == "MirrorGain":
                lines.append(f"    {new(b.id + '.out')} = {float(prm['ratio'])!r} * {ins['in']}")
            elif k == "Summer":
                terms = [ins[p] for p in sorted(ins, key=lambda s: int(s[2:]))] or ["0.0"]
                lines.append(f"    {new(b.id + '.out')} = " + " + ".join(terms))
            elif k == "IdealDivider":
                lines.append(f"    {new(b.id + '.out')} = {ins['num']} * "
                             f"{float(prm['scale'])!r} / {ins['den']}")
            else:
                raise NetlistError(f"cannot compile block kind {k!r}")
        outs = []
        for st in n.states:
            outs += [slot[incoming[st.integrator_id]["cin_plus"]],
                     slot[incoming[st.integrator_id]["cin_minus"]]]
        lines.append(f"    return [{', '.join(outs)}]")
        self.source = "\n".join(lines) + "\n"
        namespace = {"sqrt": math.sqrt}
        exec(compile(self.source, f"<netlist {n.name}>", "exec"), namespace)
        self._fn = namespace["_evaluate"]

    def __call__(self, x: Sequence[float]) -> list[float]:
        return self._fn(x)


# --------------------------------------------------------------------------
# JSON


def _block_dict(b: Block) -> dict:
    return {"id": b.id, "kind": b.kind, "params": dict(b.params)}


def emit_netlist(n: Netlist) -> str:
    """Serialize to JSON; blocks in topological order, then by id."""
    order = {b.id: i for i, b in enumerate(n.topological_order())}
    nets = sorted(n.nets, key=lambda x: (order[_split_port(x.src)[0]], x.src,
                                         order[_split_port(x.dst)[0]], x.dst))
    doc = {
        "name": n.name,
        "blocks": [_block_dict(b) for b in n.topological_order()],
        "nets": [{"from": x.src, "to": x.dst, "rail": x.rail} for x in nets],
        "states": [{"name": s.name, "integrator_id": s.integrator_id, "cap": s.cap,
                    "i_dc": s.i_dc, "i_q": s.i_q, "init": s.init, "tau": s.tau}
                   for s in n.states],
        "scaling": {"i_unit": n.i_unit, "time_scale": n.time_scale,
                    "current_unit": n.current_unit},
    }
    return json.dumps(doc, indent=2) + "\n"


def load_netlist(text: str) -> Netlist:
    try:
        doc = json.loads(text)
        blocks_ = tuple(Block(d["id"], d["kind"], d.get("params", {})) for d in doc["blocks"])
        nets = tuple(Net(d["from"], d["to"], d["rail"]) for d in doc["nets"])
        states = tuple(StateBinding(d["name"], d["integrator_id"], float(d["cap"]),
                                    float(d["i_dc"]), float(d.get("i_q", d["i_dc"])),
                                    float(d.get("init", 0.0)), float(d.get("tau", 1.0)))
                       for d in doc["states"])
        sc = doc.get("scaling", {})
        return Netlist(doc["name"], blocks_, nets, states,
                       i_unit=float(sc.get("i_unit", 1e-6)),
                       time_scale=float(sc.get("time_scale", 1.0)),
                       current_unit=float(sc.get("current_unit", 1e-6)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, NetlistError):
            raise
        raise NetlistError(f"malformed netlist JSON: {exc}") from None


def state_input_currents(n: Netlist, values: Mapping[str, float]) -> dict[str, tuple[float, float]]:
    """``{state: (I_Cin+, I_Cin-)}`` from a :func:`netlist_eval` result."""
    return {s.name: (values[f"{s.integrator_id}.cin_plus"], values[f"{s.integrator_id}.cin_minus"])
            for s in n.states}


def denominator_current(n: Netlist, state: str, ia: float, ib: float) -> float:
    """Denominator net value ``sqrt(u) (sqrt(I_A) + sqrt(I_B))`` for one state."""
    return math.sqrt(n.current_unit) * (math.sqrt(ia) + math.sqrt(ib))


def reconstruct_f(n: Netlist, values: Mapping[str, float]) -> dict[str, float]:
    """Recover ``F_N`` from the capacitor currents: ``(cin+ - cin-) * den / i_dc``."""
    out = {}
    for s in n.states:
        ia = values[f"{s.integrator_id}.ia"]
        ib = values[f"{s.integrator_id}.ib"]
        cp = values[f"{s.integrator_id}.cin_plus"]
        cm = values[f"{s.integrator_id}.cin_minus"]
        out[s.name] = (cp - cm) * denominator_current(n, s.name, ia, ib) / s.i_dc
    return out


def rail_signals(n: Netlist, values: Mapping[str, float]) -> dict[RailFactor, float]:
    """Map ``(signal, rail)`` to its current, for checking against :func:`decompose_signed`."""
    out: dict[RailFactor, float] = {}
    for s in n.states:
        out[(s.name, "plus")] = values[f"{s.integrator_id}.ib"]
        out[(s.name, "minus")] = values[f"{s.integrator_id}.ia"]
    for blk in n.externals:
        name = blk.params["name"]
        sp = f"split_{name}"
        out[(name, "plus")] = values[f"{sp}.plus"]
        out[(name, "minus")] = values[f"{sp}.minus"]
    return out


def describe_netlist(n: Netlist) -> str:
    counts = ", ".join(f"{k}={v}" for k, v in n.kind_counts().items())
    return f"{n.name}: {len(n.states)} states, {len(n.blocks)} blocks ({counts})"


def format_rail_poly(rp: RailPoly) -> str:
    if not rp:
        return "0"
    terms = []
    for m, c in sorted(rp.items()):
        body = "*".join(f"{name}{'+' if rail == 'plus' else '-'}" for name, rail in m) or "1"
        terms.append(body if c == 1 else f"{c:g}*{body}")
    return " + ".join(terms)


__all__ = [
    "ScalingMap", "CurrentSystem", "Netlist", "Block", "Net", "StateBinding",
    "CompiledNetlist", "compute_tau", "realized_time_scale", "scale_to_currents",
    "decompose_signed", "eval_rails", "synthesize", "netlist_eval", "emit_netlist",
    "load_netlist", "reconstruct_f", "rail_signals", "state_input_currents",
    "describe_netlist", "format_rail_poly", "format_monomial", "Monomial",
]
