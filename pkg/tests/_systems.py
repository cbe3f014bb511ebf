"""Random polynomial systems and a direct-evaluation oracle for netlist checks."""

from __future__ import annotations

import itertools

import numpy as np

from neurosynth.dsl import SystemSpec, eval_expr, parse_system
from neurosynth.poly import to_poly


def random_system(rng: np.random.Generator, name: str = "rnd") -> SystemSpec:
    n_states = int(rng.integers(1, 4))
    states = [f"x{i}" for i in range(n_states)]
    ext = ["u"] if rng.random() < 0.7 else []
    names = states + ext
    monos = [m for k in range(4) for m in itertools.combinations_with_replacement(names, k)]
    lines = [f"system {name} {{"]
    lines += [f"  extern {e} = step(0.5);" for e in ext]
    for s in states:
        lines.append(f"  state {s} {{ init = {rng.uniform(-1, 1):.3f}; tau = 1; }}")
    for s in states:
        pick = rng.choice(len(monos), size=min(len(monos), int(rng.integers(1, 7))), replace=False)
        terms = []
        for j in pick:
            coef = rng.uniform(-2, 2)
            body = "*".join(monos[j]) or "1"
            terms.append(f"({coef!r})*{body}")
        lines.append(f"  d{s}/dt = {' + '.join(terms)};")
    lines.append("}")
    return parse_system("\n".join(lines))


def direct_f(spec: SystemSpec, env: dict, i_unit: float) -> dict:
    """F_N in amperes by evaluating the expression tree on dimensionless values."""
    return {s.name: eval_expr(spec.derivatives[s.name], env) * i_unit for s in spec.states}


def magnitude(spec: SystemSpec, env: dict, i_unit: float) -> dict:
    """Sum of absolute monomial values at rail magnitudes ``x+ + x-``.

    The netlist works on rails, so rounding scales with the rails and not
    with their (possibly tiny) difference; this is the matching reference
    scale for relative errors.
    """
    out = {}
    for s in spec.states:
        total = 0.0
        for m, c in to_poly(spec.derivatives[s.name]).items():
            term = abs(c)
            for v, k in m:
                term *= abs(env[v]) ** k
            total += term
        out[s.name] = total * i_unit
    return out


def random_point(rng, spec: SystemSpec, i_unit: float, amp: float = 2.5):
    """Random rail currents for every state plus signed externals.

    Returns ``(netlist_inputs, dimensionless_env, rail_magnitudes)``.
    """
    inputs, env, mag = {}, {}, {}
    for s in spec.states:
        ia, ib = rng.uniform(0, amp * i_unit, 2)
        inputs[f"{s.name}.ia"] = ia
        inputs[f"{s.name}.ib"] = ib
        env[s.name] = (ib - ia) / i_unit
        mag[s.name] = (ib + ia) / i_unit
    for x in spec.externals:
        v = rng.uniform(-amp, amp)
        inputs[x.name] = v * i_unit
        env[x.name] = v
        mag[x.name] = abs(v)
    return inputs, env, mag
