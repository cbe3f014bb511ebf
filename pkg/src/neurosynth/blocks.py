"""Square-law devices, translinear building blocks and the integrator core.

All block transfer functions take and return currents in amperes. The
integrator core (two NMOS/PMOS pairs around a capacitor) is modelled at the
device level by :func:`core_device_step`.

Unit convention
---------------
The core relation ``dI_out/dt = (sqrt(I_A) + sqrt(I_B)) * 2 sqrt(k_n) I_Cin /
(d C)`` is not dimensionally homogeneous once ``I_Cin`` is produced by the
``F * I_dc / (sqrt(I_A) + sqrt(I_B))`` divider, so it needs a current unit to
turn into seconds. :attr:`DeviceParams.current_unit` fixes that unit
(default 1 uA, the volt-to-microampere correspondence of the FHN mapping).
Setting it to 1.0 evaluates everything in strict SI.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import Mapping

from .errors import ConfigError, DomainError, RegionFault

SLOPE_DENOMINATORS = ("nominal", "derived")


@dataclass(frozen=True)
class DeviceParams:
    """Process constants and bias settings for the square-law model.

    Defaults are textbook 0.35 um process values combined with the W/L
    ratios, bias voltage and capacitance of the reference FHN circuit.
    ``slope_denominator`` selects the integrator slope divisor: ``nominal``
    is 2+beta, ``derived`` is 1+beta from the square-law derivation.
    """

    mu_n_cox: float = 170e-6
    mu_p_cox: float = 58e-6
    wl_n: float = 10.0
    wl_p: float = 12.0
    v_th: float = 0.5
    v_b: float = 3.3
    cap: float = 800e-12
    current_unit: float = 1e-6
    slope_denominator: str = "nominal"

    def __post_init__(self):
        if not (self.k_n > 0 and self.k_p > 0):
            raise ConfigError("k_n and k_p must be positive")
        if not self.v_th > 0:
            raise ConfigError("v_th must be positive")
        if not self.v_b > self.v_th:
            raise ConfigError("v_b must exceed v_th")
        if not self.cap > 0 or not self.current_unit > 0:
            raise ConfigError("cap and current_unit must be positive")
        if self.slope_denominator not in SLOPE_DENOMINATORS:
            raise ConfigError(f"slope_denominator must be one of {SLOPE_DENOMINATORS}")

    @property
    def k_n(self) -> float:
        return 0.5 * self.mu_n_cox * self.wl_n

    @property
    def k_p(self) -> float:
        return 0.5 * self.mu_p_cox * self.wl_p

    @property
    def beta(self) -> float:
        return math.sqrt(self.k_n / self.k_p)

    def slope_factor(self, which: str | None = None) -> float:
        which = which or self.slope_denominator
        if which == "nominal":
            return 2.0 + self.beta
        if which == "derived":
            return 1.0 + self.beta
        raise ConfigError(f"unknown slope denominator {which!r}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "DeviceParams":
        """Build from a key/value mapping, ignoring keys that are not device fields."""
        kwargs = {}
        for f in fields(cls):
            if f.name in values:
                raw = values[f.name]
                kwargs[f.name] = raw if f.name == "slope_denominator" else _as_float(f.name, raw)
        return cls(**kwargs)

    def with_(self, **changes) -> "DeviceParams":
        return replace(self, **changes)


def _as_float(key: str, raw) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def read_params_file(path: str | os.PathLike) -> dict[str, str]:
    """Read a plain ``key = value`` file; ``#`` starts a comment."""
    values: dict[str, str] = {}
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"params file not found: {path}") from None
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                key, sep, value = line.partition(":")
            if not sep or not key.strip():
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            values[key.strip()] = value.strip()
    return values


def load_device_params(path: str | os.PathLike) -> DeviceParams:
    return DeviceParams.from_mapping(read_params_file(path))


# --------------------------------------------------------------------------
# Square law


def nmos_current(v_gs: float, p: DeviceParams) -> float:
    """Saturation drain current ``k_n (V_GS - V_th)^2``; zero below threshold."""
    ov = v_gs - p.v_th
    return p.k_n * ov * ov if ov > 0 else 0.0


def pmos_current(v_sg: float, p: DeviceParams) -> float:
    ov = v_sg - p.v_th
    return p.k_p * ov * ov if ov > 0 else 0.0


# --------------------------------------------------------------------------
# Translinear blocks


def root_square(i_in: float, i_bias: float) -> float:
    """Root-square block output ``2 sqrt(I_in I_b)`` for single-sided input."""
    if i_in < 0:
        raise DomainError(f"root-square input must be >= 0, got {i_in!r}")
    if not i_bias > 0:
        raise DomainError(f"root-square bias must be > 0, got {i_bias!r}")
    return 2.0 * math.sqrt(i_in * i_bias)


def mult_core(i_in: float, i_bias: float) -> float:
    """MULT core output ``(I_in + I_b/2)^2 / I_b``."""
    if i_in < 0:
        raise DomainError(f"MULT core input must be >= 0, got {i_in!r}")
    if not i_bias > 0:
        raise DomainError(f"MULT core bias must be > 0, got {i_bias!r}")
    s = i_in + 0.5 * i_bias
    return s * s / i_bias


def split(x: float) -> tuple[float, float]:
    """Separate a signed current into nonnegative ``(plus, minus)`` rails."""
    if x > 0:
        return x, 0.0
    if x < 0:
        return 0.0, -x
    return 0.0, 0.0


def bilateral_mult(x_plus: float, x_minus: float, y_plus: float, y_minus: float,
                   i_bias: float) -> tuple[float, float]:
    """Rails of the bilateral multiplier; the net output is ``2XY/I_b``.

    Parameters
    ----------
    x_plus, x_minus, y_plus, y_minus : float
        Nonnegative rail currents with ``X = x_plus - x_minus`` and
        ``Y = y_plus - y_minus``.
    i_bias : float
        Bias current of the underlying MULT cores.

    Returns
    -------
    (out_plus, out_minus) : tuple of float
        ``2(X+Y+ + X-Y-)/I_b`` and ``2(X-Y+ + X+Y-)/I_b``.
    """
    for name, v in (("x_plus", x_plus), ("x_minus", x_minus),
                    ("y_plus", y_plus), ("y_minus", y_minus)):
        if v < 0:
            raise DomainError(f"bilateral multiplier rail {name} must be >= 0, got {v!r}")
    if not i_bias > 0:
        raise DomainError(f"bilateral multiplier bias must be > 0, got {i_bias!r}")
    g = 2.0 / i_bias
    return (g * (x_plus * y_plus + x_minus * y_minus),
            g * (x_minus * y_plus + x_plus * y_minus))


def bilateral_mult_from_cores(x_plus: float, x_minus: float, y_plus: float, y_minus: float,
                              i_bias: float) -> float:
    """Net bilateral product assembled from four MULT cores.

    Cores fed with ``X+ + Y+`` and ``X- + Y-`` add; cores fed with the cross
    sums subtract. Bias and linear terms cancel, leaving ``2XY/I_b``.
    """
    return (mult_core(x_plus + y_plus, i_bias) + mult_core(x_minus + y_minus, i_bias)
            - mult_core(x_minus + y_plus, i_bias) - mult_core(x_plus + y_minus, i_bias))


# --------------------------------------------------------------------------
# Integrator core (device level)


@dataclass(frozen=True)
class CoreState:
    v_c: float
    v_gs1: float
    v_gs3: float
    i_a: float = field(compare=False)
    i_b: float = field(compare=False)

    @property
    def i_out(self) -> float:
        return self.i_b - self.i_a

    @property
    def root_sum(self) -> float:
        """``sqrt(I_A) + sqrt(I_B)`` in SI units."""
        return math.sqrt(self.i_a) + math.sqrt(self.i_b)


def core_from_voltages(v_c: float, v_gs1: float, v_gs3: float, p: DeviceParams) -> CoreState:
    ov1 = v_gs1 - p.v_th
    ov3 = v_gs3 - p.v_th
    if ov1 < 0:
        raise RegionFault("M1/M2", ov1)
    if ov3 < 0:
        raise RegionFault("M3/M4", ov3)
    return CoreState(v_c, v_gs1, v_gs3, p.k_n * ov1 * ov1, p.k_n * ov3 * ov3)


def core_rails(i_out: float, i_q: float) -> tuple[float, float]:
    """``(I_A, I_B)`` with ``I_B - I_A = i_out`` and ``sqrt(I_A)+sqrt(I_B) = 2 sqrt(i_q)``."""
    s = 2.0 * math.sqrt(i_q)
    d = i_out / s
    ra = 0.5 * (s - d)
    rb = 0.5 * (s + d)
    if ra < 0:
        raise RegionFault("M1/M2", ra)
    if rb < 0:
        raise RegionFault("M3/M4", rb)
    return ra * ra, rb * rb


def quiescent_core(p: DeviceParams, i_q: float, i_out: float = 0.0) -> CoreState:
    """Core biased at ``I_A = I_B = i_q``, then offset to carry ``i_out``.

    The offset stands in for the initialization circuit. ``V_C`` is placed at
    ``V_b - V_GS1 - V_SG2``.
    """
    if not i_q > 0:
        raise ConfigError("quiescent core current must be > 0")
    i_a, i_b = core_rails(i_out, i_q)
    v_gs1 = p.v_th + math.sqrt(i_a / p.k_n)
    v_gs3 = p.v_th + math.sqrt(i_b / p.k_n)
    v_sg2 = p.v_th + math.sqrt(i_a / p.k_p)
    return core_from_voltages(p.v_b - v_gs1 - v_sg2, v_gs1, v_gs3, p)


def core_device_step(s: CoreState, i_cin: float, dt: float, p: DeviceParams,
                     cap: float | None = None) -> CoreState:
    """Advance the core by ``dt`` with constant capacitor current ``i_cin``.

    The capacitor moves by ``i_cin dt / C`` (``i_cin`` in current units) and
    the gate-source voltages of M1 and M3 move by ``-/+ dV_C / (1 + beta)``,
    which keeps ``V_GS1 + V_GS3`` and hence ``sqrt(I_A) + sqrt(I_B)`` fixed.
    Raises :class:`RegionFault` if either branch would leave saturation.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    cap = p.cap if cap is None else cap
    dv_c = i_cin / p.current_unit / cap * dt
    dv_gs = dv_c / (1.0 + p.beta)
    return core_from_voltages(s.v_c + dv_c, s.v_gs1 - dv_gs, s.v_gs3 + dv_gs, p)


def core_slope(s: CoreState, i_cin: float, p: DeviceParams, cap: float | None = None,
               which: str = "derived") -> float:
    """``dI_out/dt`` in A/s for capacitor current ``i_cin`` (A)."""
    cap = p.cap if cap is None else cap
    u = p.current_unit
    root_sum_u = s.root_sum / math.sqrt(u)
    return root_sum_u * 2.0 * math.sqrt(p.k_n / u) * i_cin / (p.slope_factor(which) * cap)
