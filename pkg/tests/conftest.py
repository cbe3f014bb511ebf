from __future__ import annotations

from pathlib import Path

import pytest

from neurosynth.blocks import DeviceParams, read_params_file
from neurosynth.dsl import Step, load_system
from neurosynth.sim import IntegratorConfig, simulate
from neurosynth.synth import ScalingMap, synthesize

MODELS = Path(__file__).resolve().parents[1] / "src" / "neurosynth" / "models"
FHN_NDS = MODELS / "fhn.nds"
FHN_PARAMS = MODELS / "fhn.params"

# Filled by test_acceptance; printed at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fhn_values():
    return read_params_file(FHN_PARAMS)


@pytest.fixture(scope="session")
def device(fhn_values):
    return DeviceParams.from_mapping(fhn_values)


@pytest.fixture(scope="session")
def fhn():
    return load_system(FHN_NDS)


@pytest.fixture(scope="session")
def fhn_stim(fhn):
    return fhn.with_external("Iext", Step(0.8))


@pytest.fixture(scope="session")
def fhn_scaling(fhn, fhn_values, device):
    return ScalingMap.from_mapping(fhn, fhn_values, device)


@pytest.fixture(scope="session")
def fhn_netlist(fhn, fhn_scaling, device):
    return synthesize(fhn, fhn_scaling, device)


@pytest.fixture(scope="session")
def fhn_stim_netlist(fhn_stim, fhn_scaling, device):
    return synthesize(fhn_stim, fhn_scaling, device)


@pytest.fixture(scope="session")
def spiking_cfg():
    return IntegratorConfig(0.01, 420.0)


@pytest.fixture(scope="session")
def ref_trace(fhn_stim, device, spiking_cfg):
    return simulate("reference", fhn_stim, None, device, spiking_cfg)


@pytest.fixture(scope="session")
def circuit_trace(fhn_stim_netlist, device, spiking_cfg):
    return simulate("circuit", None, fhn_stim_netlist, device, spiking_cfg)
