from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurosynth.blocks import (
    CoreState, DeviceParams, bilateral_mult, bilateral_mult_from_cores, core_device_step,
    core_rails, core_slope, load_device_params, mult_core, nmos_current, pmos_current,
    quiescent_core, read_params_file, root_square, split,
)
from neurosynth.errors import ConfigError, DomainError, RegionFault

uA = 1e-6
P = DeviceParams()


def test_default_constants():
    assert P.k_n == pytest.approx(850e-6)
    assert P.k_p == pytest.approx(348e-6)
    assert P.beta == pytest.approx(1.5629, abs=1e-4)
    assert P.slope_factor("nominal") - P.slope_factor("derived") == pytest.approx(1.0)


def test_square_law():
    assert nmos_current(P.v_th, P) == 0.0
    assert nmos_current(P.v_th - 0.3, P) == 0.0
    assert nmos_current(P.v_th + 1, P) == pytest.approx(850e-6)
    assert nmos_current(P.v_th + 0.5, P) == pytest.approx(212.5e-6)
    assert pmos_current(P.v_th, P) == 0.0
    assert pmos_current(P.v_th + 1, P) == pytest.approx(P.k_n / P.beta ** 2)
    p290 = DeviceParams(mu_p_cox=2 * 290e-6, wl_p=1.0)
    assert pmos_current(p290.v_th + 0.2, p290) == pytest.approx(11.6e-6)


def test_block_examples():
    assert root_square(0, uA) == 0
    assert root_square(uA, uA) == pytest.approx(2 * uA)
    assert root_square(4 * uA, uA) == pytest.approx(4 * uA)
    assert mult_core(0, 3 * uA) == pytest.approx(0.75 * uA)
    assert mult_core(1.5 * uA, 3 * uA) == pytest.approx(3 * uA)
    assert mult_core(uA, 4 * uA) == pytest.approx(2.25 * uA)
    assert split(5 * uA) == (5 * uA, 0.0)
    assert split(-3 * uA) == (0.0, 3 * uA)
    assert split(0.0) == (0.0, 0.0)
    assert bilateral_mult(0, 0, 0, 0, 3 * uA) == (0.0, 0.0)
    op, om = bilateral_mult(uA, 0, uA, 0, 3 * uA)
    assert op - om == pytest.approx(2 / 3 * uA)
    op, om = bilateral_mult(0, uA, 2 * uA, 0, 3 * uA)
    assert op - om == pytest.approx(-4 / 3 * uA)


@pytest.mark.parametrize("call", [
    lambda: root_square(-1e-9, uA), lambda: root_square(uA, 0),
    lambda: mult_core(-1e-9, uA), lambda: mult_core(uA, -uA),
    lambda: bilateral_mult(-1e-9, 0, 0, 0, uA), lambda: bilateral_mult(0, 0, 0, 0, 0),
])
def test_domain_errors(call):
    with pytest.raises(DomainError):
        call()


def test_root_square_grid():
    for i in np.linspace(0, 10 * uA, 201):
        assert root_square(i, 2 * uA) ** 2 == pytest.approx(4 * i * 2 * uA, rel=1e-14, abs=1e-30)


rail = st.floats(0, 10 * uA, allow_nan=False)
bias = st.floats(0.1 * uA, 10 * uA, allow_nan=False)


@settings(max_examples=500, deadline=None)
@given(rail, bias)
def test_mult_core_expansion(i, b):
    assert mult_core(i, b) - i - b / 4 == pytest.approx(i * i / b, rel=1e-9, abs=1e-20)


@settings(max_examples=500, deadline=None)
@given(rail, rail, rail, rail, bias, st.floats(0, 5))
def test_bilateral_properties(xp, xm, yp, ym, b, a):
    op, om = bilateral_mult(xp, xm, yp, ym, b)
    assert op >= 0 and om >= 0
    x, y = xp - xm, yp - ym
    scale = 2 * (xp + xm) * (yp + ym) / b + 1e-30
    assert (op - om) == pytest.approx(2 * x * y / b, abs=1e-12 * scale)
    op2, om2 = bilateral_mult(a * xp, a * xm, yp, ym, b)
    assert op2 - om2 == pytest.approx(a * (op - om), abs=1e-12 * (a * scale + 1e-30))
    net = bilateral_mult_from_cores(xp, xm, yp, ym, b)
    core_scale = (xp + xm + yp + ym + b) ** 2 / b
    assert net == pytest.approx(2 * x * y / b, abs=1e-12 * core_scale)


@settings(max_examples=300, deadline=None)
@given(st.floats(-10 * uA, 10 * uA, allow_nan=False))
def test_split_recombines(x):
    p, m = split(x)
    assert p - m == x
    assert p >= 0 and m >= 0 and not (p > 0 and m > 0)


# ---------------------------------------------------------------- core


def test_core_rails():
    ia, ib = core_rails(uA, 2 * uA)
    assert ib - ia == pytest.approx(uA)
    assert math.sqrt(ia) + math.sqrt(ib) == pytest.approx(2 * math.sqrt(2 * uA))
    assert core_rails(0.0, uA) == pytest.approx((uA, uA))
    with pytest.raises(RegionFault):
        core_rails(-9 * uA, 2 * uA)
    with pytest.raises(RegionFault):
        core_rails(9 * uA, 2 * uA)


def test_quiescent_core():
    c = quiescent_core(P, 2 * uA)
    assert c.i_a == pytest.approx(2 * uA) and c.i_b == pytest.approx(2 * uA)
    assert c.v_gs1 == c.v_gs3
    c = quiescent_core(P, 2 * uA, -1.2 * uA)
    assert c.i_out == pytest.approx(-1.2 * uA)
    with pytest.raises(ConfigError):
        quiescent_core(P, 0.0)


def test_zero_current_keeps_state():
    c = quiescent_core(P, 2 * uA, 0.3 * uA)
    assert core_device_step(c, 0.0, 1e-9, P) == c


def test_odd_symmetry():
    c = quiescent_core(P, 2 * uA)
    up = core_device_step(c, 1e-7, 1e-10, P)
    down = core_device_step(c, -1e-7, 1e-10, P)
    assert up.i_out == pytest.approx(-down.i_out, rel=1e-12)


def test_finite_difference_slope():
    c = quiescent_core(P, 2 * uA, 0.5 * uA)
    i_cin = 5e-8
    want = ((math.sqrt(c.i_a / uA) + math.sqrt(c.i_b / uA)) * 2 * math.sqrt(P.k_n / uA)
            * i_cin / ((1 + P.beta) * P.cap))
    for dt in (1e-12, 1e-13):
        nxt = core_device_step(c, i_cin, dt, P)
        assert (nxt.i_out - c.i_out) / dt == pytest.approx(want, rel=1e-6)
    assert core_slope(c, i_cin, P) == pytest.approx(want, rel=1e-12)


def test_region_fault_on_exit():
    c = quiescent_core(P, 2 * uA)
    with pytest.raises(RegionFault) as info:
        for _ in range(10_000):
            c = core_device_step(c, 1e-6, 1e-9, P)
    assert info.value.device in ("M1/M2", "M3/M4")


def test_conservation_over_many_steps():
    c = quiescent_core(P, 2 * uA)
    s0 = c.root_sum
    rng = np.random.default_rng(1)
    for i_cin in rng.uniform(-2e-8, 2e-8, 1_000_000).tolist():
        c = core_device_step(c, i_cin, 1e-11, P)
    assert abs(c.root_sum - s0) / s0 < 1e-9


def test_params_file(tmp_path):
    f = tmp_path / "dev.params"
    f.write_text("# comment\nmu_n_cox = 200e-6\nwl_n: 5  # trailing\nslope_denominator = derived\n")
    p = load_device_params(f)
    assert p.k_n == pytest.approx(500e-6)
    assert p.slope_denominator == "derived"
    bad = tmp_path / "bad.params"
    bad.write_text("v_th 0.4\n")
    with pytest.raises(ConfigError):
        read_params_file(bad)
    with pytest.raises(ConfigError):
        read_params_file(tmp_path / "missing.params")
    with pytest.raises(ConfigError):
        DeviceParams.from_mapping({"v_th": "abc"})
    with pytest.raises(ConfigError):
        DeviceParams(v_b=0.1)


def test_core_state_properties():
    c = CoreState(1.0, 1.0, 1.0, 1e-6, 4e-6)
    assert c.i_out == pytest.approx(3e-6)
    assert c.root_sum == pytest.approx(3e-3)
