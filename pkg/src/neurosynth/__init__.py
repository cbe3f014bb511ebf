"""Compile polynomial dynamical systems into strong-inversion current-mode
block netlists and simulate them at three levels of fidelity."""

from __future__ import annotations

__version__ = "0.1.0"

from .analysis import compare_traces, detect_spikes, find_equilibrium, speedup_factor
from .blocks import DeviceParams, bilateral_mult, core_device_step, mult_core, root_square
from .dsl import SystemSpec, load_system, parse_system
from .errors import InputError, NeurosynthError, NumericFault
from .sim import IntegratorConfig, Trace, simulate, simulate_circuit, simulate_device, simulate_reference
from .synth import Netlist, ScalingMap, compute_tau, emit_netlist, load_netlist, netlist_eval, synthesize

__all__ = [
    "__version__",
    "DeviceParams", "root_square", "mult_core", "bilateral_mult", "core_device_step",
    "SystemSpec", "parse_system", "load_system",
    "NeurosynthError", "InputError", "NumericFault",
    "IntegratorConfig", "Trace", "simulate", "simulate_reference", "simulate_circuit",
    "simulate_device",
    "Netlist", "ScalingMap", "synthesize", "netlist_eval", "emit_netlist", "load_netlist",
    "compute_tau",
    "detect_spikes", "compare_traces", "find_equilibrium", "speedup_factor",
]
