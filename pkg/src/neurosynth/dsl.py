"""Textual description of N-dimensional bilateral dynamical systems.

A model file looks like::

    # FitzHugh-Nagumo
    system fhn {
      extern Iext;
      state v { init = -1.2; tau = 1; }
      state w { init = -0.625; tau = 12.5; }
      dv/dt = v - v^3/3 - w + Iext;
      dw/dt = v + 0.7 - 0.8*w;
    }

Each ``dX/dt`` line gives the right-hand side F of ``tau * dX/dt = F``.
Parameters are folded into constants at parse time, so the expression trees
only ever reference states and externals.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Mapping, Sequence, Union

from .errors import (
    DSLError,
    DSLSyntaxError,
    DuplicateDeclarationError,
    ExponentError,
    UnboundVariableError,
    UndeclaredIdentifierError,
    ZeroDivisorError,
)

__all__ = [
    "Constant", "Var", "Add", "Sub", "Mul", "Neg", "Div", "IntPow", "Expr",
    "ConstantWave", "Step", "PiecewiseLinear", "Waveform",
    "StateDecl", "ExternalDecl", "SystemSpec",
    "parse_system", "load_system", "format_system", "format_expr",
    "eval_expr", "compile_expr", "expr_vars", "parse_waveform",
]


# --------------------------------------------------------------------------
# Expression tree


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: Constant

    def __post_init__(self):
        if not isinstance(self.right, Constant):
            raise TypeError("Div denominator must be a Constant")
        if self.right.value == 0:
            raise ZeroDivisorError("division by zero literal")


@dataclass(frozen=True)
class IntPow:
    base: "Expr"
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, int) or isinstance(self.exponent, bool) or self.exponent < 1:
            raise ExponentError(f"exponent must be a positive integer, got {self.exponent!r}")


Expr = Union[Constant, Var, Add, Sub, Mul, Neg, Div, IntPow]


def eval_expr(e: Expr, env: Mapping[str, float]) -> float:
    """Evaluate ``e`` in double precision with variables bound by ``env``."""
    if isinstance(e, Constant):
        return float(e.value)
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Add):
        return eval_expr(e.left, env) + eval_expr(e.right, env)
    if isinstance(e, Sub):
        return eval_expr(e.left, env) - eval_expr(e.right, env)
    if isinstance(e, Mul):
        return eval_expr(e.left, env) * eval_expr(e.right, env)
    if isinstance(e, Neg):
        return -eval_expr(e.operand, env)
    if isinstance(e, Div):
        return eval_expr(e.left, env) / e.right.value
    if isinstance(e, IntPow):
        return eval_expr(e.base, env) ** e.exponent
    raise TypeError(f"not an expression node: {e!r}")


def compile_expr(e: Expr, names: Sequence[str]) -> Callable[[Sequence[float]], float]:
    """Turn ``e`` into a closure over a positional value vector.

    ``names[i]`` is the variable bound to ``values[i]``. Used by the
    integrators, where walking the tree each step is too slow.
    """
    index = {n: i for i, n in enumerate(names)}

    def build(node):
        if isinstance(node, Constant):
            c = float(node.value)
            return lambda x: c
        if isinstance(node, Var):
            if node.name not in index:
                raise UnboundVariableError(node.name)
            i = index[node.name]
            return lambda x: x[i]
        if isinstance(node, Add):
            a, b = build(node.left), build(node.right)
            return lambda x: a(x) + b(x)
        if isinstance(node, Sub):
            a, b = build(node.left), build(node.right)
            return lambda x: a(x) - b(x)
        if isinstance(node, Mul):
            a, b = build(node.left), build(node.right)
            return lambda x: a(x) * b(x)
        if isinstance(node, Neg):
            a = build(node.operand)
            return lambda x: -a(x)
        if isinstance(node, Div):
            a, d = build(node.left), float(node.right.value)
            return lambda x: a(x) / d
        if isinstance(node, IntPow):
            a, k = build(node.base), node.exponent
            return lambda x: a(x) ** k
        raise TypeError(f"not an expression node: {node!r}")

    return build(e)


def expr_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Constant):
        return set()
    if isinstance(e, Neg):
        return expr_vars(e.operand)
    if isinstance(e, IntPow):
        return expr_vars(e.base)
    if isinstance(e, Div):
        return expr_vars(e.left)
    return expr_vars(e.left) | expr_vars(e.right)


# --------------------------------------------------------------------------
# External input waveforms (model time, dimensionless amplitude)


@dataclass(frozen=True)
class ConstantWave:
    value: float = 0.0

    def __call__(self, t: float) -> float:
        return self.value

    def to_dict(self) -> dict:
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class Step:
    """``level`` on ``t_on <= t < t_off``, zero elsewhere."""

    level: float
    t_on: float = 0.0
    t_off: float = math.inf

    def __call__(self, t: float) -> float:
        return self.level if self.t_on <= t < self.t_off else 0.0

    def to_dict(self) -> dict:
        return {
            "kind": "step",
            "level": self.level,
            "t_on": self.t_on,
            "t_off": None if math.isinf(self.t_off) else self.t_off,
        }


@dataclass(frozen=True)
class PiecewiseLinear:
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.points:
            raise DSLError("piecewise-linear waveform needs at least one point")
        times = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DSLError("piecewise-linear breakpoints must be strictly increasing in time")

    def __call__(self, t: float) -> float:
        pts = self.points
        if t <= pts[0][0]:
            return pts[0][1]
        for (t0, y0), (t1, y1) in zip(pts, pts[1:]):
            if t < t1:
                return y0 + (y1 - y0) * (t - t0) / (t1 - t0)
        return pts[-1][1]

    def to_dict(self) -> dict:
        return {"kind": "pwl", "points": [list(p) for p in self.points]}


Waveform = Union[ConstantWave, Step, PiecewiseLinear]


def waveform_from_dict(d: Mapping) -> Waveform:
    kind = d.get("kind")
    if kind == "constant":
        return ConstantWave(float(d["value"]))
    if kind == "step":
        t_off = d.get("t_off")
        return Step(float(d["level"]), float(d.get("t_on", 0.0)),
                    math.inf if t_off is None else float(t_off))
    if kind == "pwl":
        return PiecewiseLinear(tuple((float(a), float(b)) for a, b in d["points"]))
    raise DSLError(f"unknown waveform kind {kind!r}")


def parse_waveform(text: str) -> Waveform:
    """Parse the compact ``kind:args`` form used on the command line.

    ``const:0.5``, ``step:0.8``, ``step:0.8,10,200`` (level, t_on, t_off)
    and ``pwl:0,0;5,1;10,1`` are accepted.
    """
    kind, _, args = text.partition(":")
    kind = kind.strip().lower()
    try:
        if kind in ("const", "constant"):
            return ConstantWave(float(args))
        if kind == "step":
            vals = [float(a) for a in args.split(",") if a.strip()]
            if not 1 <= len(vals) <= 3:
                raise ValueError
            return Step(*vals)
        if kind == "pwl":
            pts = []
            for pair in args.split(";"):
                t, y = pair.split(",")
                pts.append((float(t), float(y)))
            return PiecewiseLinear(tuple(pts))
    except ValueError:
        raise DSLError(f"malformed waveform {text!r}") from None
    raise DSLError(f"unknown waveform kind {kind!r} in {text!r}")


# --------------------------------------------------------------------------
# System description


@dataclass(frozen=True)
class StateDecl:
    name: str
    init: float = 0.0
    tau: float = 1.0


@dataclass(frozen=True)
class ExternalDecl:
    name: str
    waveform: Waveform = ConstantWave(0.0)


@dataclass(frozen=True)
class SystemSpec:
    name: str
    states: tuple[StateDecl, ...]
    externals: tuple[ExternalDecl, ...]
    derivatives: Mapping[str, Expr]
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        names = [s.name for s in self.states]
        if len(set(names)) != len(names):
            raise DuplicateDeclarationError("duplicate state name")
        ext = [x.name for x in self.externals]
        if len(set(ext)) != len(ext):
            raise DuplicateDeclarationError("duplicate external name")
        if set(names) & set(ext):
            raise DuplicateDeclarationError("externals must be disjoint from states")
        if set(self.derivatives) != set(names):
            missing = set(names) - set(self.derivatives)
            extra = set(self.derivatives) - set(names)
            raise DSLError(f"derivative/state mismatch: missing {sorted(missing)}, "
                           f"undeclared {sorted(extra)}")
        for s in self.states:
            if not s.tau > 0:
                raise DSLError(f"state {s.name!r}: tau must be > 0")
        known = set(names) | set(ext)
        for n, e in self.derivatives.items():
            unknown = expr_vars(e) - known
            if unknown:
                raise UndeclaredIdentifierError(
                    f"d{n}/dt references undeclared {sorted(unknown)}")

    @property
    def state_names(self) -> list[str]:
        return [s.name for s in self.states]

    @property
    def external_names(self) -> list[str]:
        return [x.name for x in self.externals]

    def state(self, name: str) -> StateDecl:
        for s in self.states:
            if s.name == name:
                return s
        raise KeyError(name)

    def with_external(self, name: str, waveform: Waveform) -> "SystemSpec":
        if name not in self.external_names:
            raise DSLError(f"system {self.name!r} has no external {name!r}")
        exts = tuple(replace(x, waveform=waveform) if x.name == name else x
                     for x in self.externals)
        return replace(self, externals=exts)

    def with_initial(self, **inits: float) -> "SystemSpec":
        states = tuple(replace(s, init=float(inits[s.name])) if s.name in inits else s
                       for s in self.states)
        return replace(self, states=states)


# --------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(){}=;,])
""", re.VERBOSE)

KEYWORDS = {"system", "state", "param", "extern", "init", "tau"}


@dataclass(frozen=True)
class Token:
    kind: str   # 'num', 'ident', 'op', 'eof'
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise DSLSyntaxError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("num", "ident", "op"):
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# --------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0
        self.params: dict[str, float] = {}
        self.declared: set[str] = set()

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: Token | None = None, cls=DSLSyntaxError):
        tok = tok or self.tok
        return cls(msg, tok.line, tok.col)

    def accept(self, text: str) -> Token | None:
        if self.tok.kind in ("op", "ident") and self.tok.text == text:
            return self.advance()
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return t

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            raise self.error(f"expected identifier, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    # grammar
    def system(self) -> SystemSpec:
        self.prescan()
        self.expect("system")
        name = self.ident().text
        self.expect("{")
        states: list[StateDecl] = []
        externals: list[ExternalDecl] = []
        derivs: dict[str, Expr] = {}
        seen: set[str] = set()

        def declare(tok: Token):
            if tok.text in seen:
                raise self.error(f"duplicate declaration of {tok.text!r}", tok,
                                 DuplicateDeclarationError)
            if tok.text in KEYWORDS:
                raise self.error(f"{tok.text!r} is a reserved word", tok)
            seen.add(tok.text)

        while not self.accept("}"):
            t = self.tok
            if t.kind == "eof":
                raise self.error("unterminated system block; expected '}'")
            if self.accept("param"):
                nt = self.ident()
                declare(nt)
                self.expect("=")
                self.params[nt.text] = self.constant_expr()
                self.expect(";")
            elif self.accept("extern"):
                nt = self.ident()
                declare(nt)
                wave: Waveform = ConstantWave(0.0)
                if self.accept("="):
                    wave = self.waveform()
                self.expect(";")
                externals.append(ExternalDecl(nt.text, wave))
            elif self.accept("state"):
                nt = self.ident()
                declare(nt)
                states.append(self.state_body(nt.text))
            elif t.kind == "ident" and self.is_derivative():
                dt = self.advance()
                target = dt.text[1:]
                if target not in {s for s in self.state_names}:
                    raise self.error(f"derivative of undeclared state {target!r}", dt,
                                     UndeclaredIdentifierError)
                if target in derivs:
                    raise self.error(f"second derivative line for state {target!r}", dt,
                                     DuplicateDeclarationError)
                self.expect("/")
                self.expect("dt")
                self.expect("=")
                derivs[target] = self.expr()
                self.expect(";")
            else:
                raise self.error(f"unexpected {t.text!r}; expected param, extern, state "
                                 f"or a dX/dt line")
        if self.tok.kind != "eof":
            raise self.error(f"trailing input after system block: {self.tok.text!r}")
        for s in states:
            if s.name not in derivs:
                raise DSLError(f"state {s.name!r} has no dX/dt line")
        return SystemSpec(name, tuple(states), tuple(externals), derivs, dict(self.params))

    def prescan(self):
        toks = self.toks
        self.state_names: set[str] = set()
        for a, b in zip(toks, toks[1:]):
            if a.kind == "ident" and a.text in ("state", "extern") and b.kind == "ident":
                self.declared.add(b.text)
                if a.text == "state":
                    self.state_names.add(b.text)

    def is_derivative(self) -> bool:
        t = self.tok
        nxt = self.toks[self.i + 1] if self.i + 1 < len(self.toks) else None
        return (t.text.startswith("d") and len(t.text) > 1 and nxt is not None
                and nxt.text == "/")

    def state_body(self, name: str) -> StateDecl:
        self.expect("{")
        fields: dict[str, float] = {}
        while not self.accept("}"):
            key = self.tok
            if key.text not in ("init", "tau"):
                raise self.error(f"expected 'init' or 'tau' in state {name!r}, found {key.text!r}")
            self.advance()
            if key.text in fields:
                raise self.error(f"{key.text!r} given twice for state {name!r}", key,
                                 DuplicateDeclarationError)
            self.expect("=")
            fields[key.text] = self.constant_expr()
            self.expect(";")
        tau = fields.get("tau", 1.0)
        if not tau > 0:
            raise DSLError(f"state {name!r}: tau must be > 0, got {tau}", key.line, key.col)
        return StateDecl(name, fields.get("init", 0.0), tau)

    def waveform(self) -> Waveform:
        t = self.tok
        if t.kind == "ident" and t.text in ("step", "pwl", "const"):
            self.advance()
            self.expect("(")
            args = [self.constant_expr()]
            while self.accept(","):
                args.append(self.constant_expr())
            self.expect(")")
            if t.text == "const":
                if len(args) != 1:
                    raise self.error("const() takes one argument", t)
                return ConstantWave(args[0])
            if t.text == "step":
                if not 1 <= len(args) <= 3:
                    raise self.error("step(level[, t_on[, t_off]]) takes 1 to 3 arguments", t)
                return Step(*args)
            if len(args) % 2:
                raise self.error("pwl() takes time/value pairs", t)
            try:
                return PiecewiseLinear(tuple(zip(args[::2], args[1::2])))
            except DSLError as exc:
                raise self.error(exc.message, t) from None
        return ConstantWave(self.constant_expr())

    def constant_expr(self) -> float:
        start = self.tok
        e = self.expr(allow_inf=True)
        if expr_vars(e):
            raise self.error("expected a constant expression", start)
        return eval_expr(e, {})

    # expressions: precedence climbing
    def expr(self, allow_inf: bool = False) -> Expr:
        self.allow_inf = allow_inf
        node = self.term()
        while True:
            if self.accept("+"):
                node = Add(node, self.term())
            elif self.accept("-"):
                node = Sub(node, self.term())
            else:
                return node

    def term(self) -> Expr:
        node = self.unary()
        while True:
            if self.accept("*"):
                node = Mul(node, self.unary())
            elif self.tok.text == "/" and self.tok.kind == "op":
                slash = self.advance()
                den = self.unary()
                if expr_vars(den):
                    raise self.error("division is only allowed by constants", slash)
                value = eval_expr(den, {})
                if value == 0:
                    raise self.error("division by zero literal", slash, ZeroDivisorError)
                node = Div(node, Constant(value))
            else:
                return node

    def unary(self) -> Expr:
        if self.accept("-"):
            operand = self.unary()
            if isinstance(operand, Constant):
                return Constant(-operand.value)
            return Neg(operand)
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        node = self.atom()
        while self.tok.text == "^" and self.tok.kind == "op":
            caret = self.advance()
            paren = self.accept("(")
            t = self.tok
            if t.kind != "num":
                raise self.error("exponent must be a positive integer literal", t, ExponentError)
            self.advance()
            if paren:
                self.expect(")")
            if not re.fullmatch(r"\d+", t.text) or int(t.text) < 1:
                raise self.error(f"exponent must be a positive integer, got {t.text}", t,
                                 ExponentError)
            node = IntPow(node, int(t.text))
        return node

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Constant(float(t.text))
        if t.kind == "ident":
            self.advance()
            if t.text in self.params:
                return Constant(self.params[t.text])
            if t.text == "inf" and self.allow_inf:
                return Constant(math.inf)
            if t.text in self.declared:
                return Var(t.text)
            raise self.error(f"undeclared identifier {t.text!r}", t, UndeclaredIdentifierError)
        if self.accept("("):
            node = self.expr(self.allow_inf)
            self.expect(")")
            return node
        raise self.error(f"unexpected {t.text or 'end of input'!r} in expression")


def parse_system(source: str) -> SystemSpec:
    """Parse model source text into a validated :class:`SystemSpec`.

    Raises a :class:`~neurosynth.errors.DSLError` subclass carrying the
    line and column of the offending token.
    """
    return _Parser(source).system()


def load_system(path) -> SystemSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_system(fh.read())


# --------------------------------------------------------------------------
# Pretty printer (output reparses to a structurally identical tree)

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, IntPow: 4}


def _prec(e: Expr) -> int:
    if isinstance(e, Constant):
        return 3 if (e.value < 0 or math.copysign(1.0, e.value) < 0) else 5
    if isinstance(e, Var):
        return 5
    return _PREC[type(e)]


def _num(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def format_expr(e: Expr) -> str:
    def wrap(sub: Expr, min_prec: int) -> str:
        s = format_expr(sub)
        return f"({s})" if _prec(sub) < min_prec else s

    if isinstance(e, Constant):
        return _num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Add):
        return f"{wrap(e.left, 1)} + {wrap(e.right, 2)}"
    if isinstance(e, Sub):
        return f"{wrap(e.left, 1)} - {wrap(e.right, 2)}"
    if isinstance(e, Mul):
        return f"{wrap(e.left, 2)}*{wrap(e.right, 3)}"
    if isinstance(e, Div):
        return f"{wrap(e.left, 2)}/{wrap(e.right, 3)}"
    if isinstance(e, Neg):
        return f"-{wrap(e.operand, 3)}"
    if isinstance(e, IntPow):
        return f"{wrap(e.base, 5)}^{e.exponent}"
    raise TypeError(f"not an expression node: {e!r}")


def _format_waveform(w: Waveform) -> str:
    if isinstance(w, ConstantWave):
        return _num(w.value)
    if isinstance(w, Step):
        return f"step({_num(w.level)}, {_num(w.t_on)}, {_num(w.t_off)})"
    flat = ", ".join(f"{_num(t)}, {_num(y)}" for t, y in w.points)
    return f"pwl({flat})"


def format_system(spec: SystemSpec) -> str:
    lines = [f"system {spec.name} {{"]
    for k, v in spec.params.items():
        lines.append(f"  param {k} = {_num(v)};")
    for x in spec.externals:
        lines.append(f"  extern {x.name} = {_format_waveform(x.waveform)};")
    for s in spec.states:
        lines.append(f"  state {s.name} {{ init = {_num(s.init)}; tau = {_num(s.tau)}; }}")
    for s in spec.states:
        lines.append(f"  d{s.name}/dt = {format_expr(spec.derivatives[s.name])};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def iter_nodes(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, (Add, Sub, Mul)):
        yield from iter_nodes(e.left)
        yield from iter_nodes(e.right)
    elif isinstance(e, Div):
        yield from iter_nodes(e.left)
    elif isinstance(e, Neg):
        yield from iter_nodes(e.operand)
    elif isinstance(e, IntPow):
        yield from iter_nodes(e.base)
