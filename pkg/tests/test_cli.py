from __future__ import annotations

import json
import shutil

import pytest

from neurosynth.cli import main
from neurosynth.sim import Trace

from conftest import FHN_NDS, FHN_PARAMS

FAST = ["--dt", "0.01", "--t-end", "200"]


@pytest.fixture(autouse=True)
def no_env_params(monkeypatch):
    monkeypatch.delenv("NEUROSYNTH_PARAMS", raising=False)


def run(argv, capsys):
    rc = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


def test_compile(tmp_path, capsys):
    rc, out, _ = run(["compile", FHN_NDS, "--out", tmp_path], capsys)
    assert rc == 0
    doc = json.loads((tmp_path / "netlist.json").read_text())
    assert sum(b["kind"] == "NbdsIntegrator" for b in doc["blocks"]) == 2
    assert "NbdsIntegrator=2" in out


def test_compile_is_byte_stable(tmp_path, capsys):
    run(["compile", FHN_NDS, "--out", tmp_path / "a"], capsys)
    run(["compile", FHN_NDS, "--out", tmp_path / "b"], capsys)
    assert (tmp_path / "a" / "netlist.json").read_bytes() == \
        (tmp_path / "b" / "netlist.json").read_bytes()


def test_missing_file(tmp_path, capsys):
    rc, _, err = run(["compile", tmp_path / "nope.nds"], capsys)
    assert rc == 1 and "file not found" in err


def test_degree_four(tmp_path, capsys):
    model = tmp_path / "quartic.nds"
    model.write_text("system q { state x {} dx/dt = -x^4; }\n")
    rc, _, err = run(["compile", model, "--out", tmp_path], capsys)
    assert rc == 1 and "degree 4" in err


def test_syntax_error_exit(tmp_path, capsys):
    model = tmp_path / "bad.nds"
    model.write_text("system q { state x {} dx/dt = x + ; }\n")
    rc, _, err = run(["compile", model], capsys)
    assert rc == 1 and "line 1" in err


def test_sim_reference_spikes(tmp_path, capsys):
    rc, _, _ = run(["sim", FHN_NDS, "--tier", "reference", "--stim", "step:0.8",
                    "--out", tmp_path, *FAST], capsys)
    assert rc == 0
    csv = tmp_path / "trace_reference.csv"
    assert csv.read_text().startswith("# tier: reference\n# units: dimensionless")
    rc, out, _ = run(["stats", csv, "--signal", "v"], capsys)
    stats = json.loads(out)
    assert rc == 0 and stats["count"] >= 5
    assert 1.8 <= stats["peak_mean"] <= 2.2


def test_sim_circuit_time_axis(tmp_path, capsys):
    rc, _, _ = run(["sim", FHN_NDS, "--tier", "circuit", "--out", tmp_path, "--plot", *FAST],
                   capsys)
    assert rc == 0
    tr = Trace.read_csv(tmp_path / "trace_circuit.csv")
    assert tr.units == "ampere"
    seconds_per_unit = tr.times[-1] / 200
    assert 1e5 < 1e-3 / seconds_per_unit < 1e7   # vs 1 ms per model unit
    svg = (tmp_path / "trace_circuit.svg").read_text()
    assert "<polyline" in svg and "time (s)" in svg and "signal (ampere)" in svg


def test_sim_all_tiers_and_netlist_input(tmp_path, capsys):
    rc, _, _ = run(["sim", FHN_NDS, "--tier", "all", "--out", tmp_path,
                    "--dt", "0.01", "--t-end", "20"], capsys)
    assert rc == 0
    for tier in ("reference", "circuit", "device"):
        assert (tmp_path / f"trace_{tier}.csv").is_file()
    run(["compile", FHN_NDS, "--out", tmp_path], capsys)
    net = tmp_path / "netlist.json"
    rc, _, _ = run(["sim", net, "--tier", "circuit", "--params", FHN_PARAMS, "--stim",
                    "Iext=const:0", "--out", tmp_path / "n", "--dt", "0.01", "--t-end", "5"],
                   capsys)
    assert rc == 0
    rc, _, err = run(["sim", net, "--tier", "reference", "--params", FHN_PARAMS], capsys)
    assert rc == 1 and "reference tier" in err


def test_sim_is_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        run(["sim", FHN_NDS, "--tier", "circuit", "--out", tmp_path / d, "--dt", "0.02",
             "--t-end", "30"], capsys)
    assert (tmp_path / "a" / "trace_circuit.csv").read_bytes() == \
        (tmp_path / "b" / "trace_circuit.csv").read_bytes()


@pytest.mark.parametrize("argv", [
    ["--t-end", "0"], ["--dt", "-1"], ["--stim", "square:1"], ["--stim", "q=step:1"],
])
def test_sim_user_errors(argv, tmp_path, capsys):
    rc, _, _ = run(["sim", FHN_NDS, "--out", tmp_path, *argv], capsys)
    assert rc == 1


def test_argparse_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["sim", str(FHN_NDS), "--tier", "spice"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["sim", str(FHN_NDS), "--dt", "abc"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 1


def test_compare_default(tmp_path, capsys):
    rc, out, _ = run(["compare", FHN_NDS, "--out", tmp_path, *FAST], capsys)
    assert rc == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["tiers"]["circuit"]["rms_rel"] <= 0.02
    assert report["tiers"]["circuit"]["freq_ratio"] == pytest.approx(1.0, rel=1e-6)
    assert 1e5 <= report["speedup"] <= 1e7
    assert report["pass"] is True


def test_compare_mismatched_denominator(tmp_path, capsys, device):
    rc, _, _ = run(["compare", FHN_NDS, "--out", tmp_path, "--design-denominator", "nominal",
                    "--slope-denominator", "derived", *FAST], capsys)
    assert rc == 0
    c = json.loads((tmp_path / "report.json").read_text())["tiers"]["circuit"]
    assert c["freq_ratio"] == pytest.approx((2 + device.beta) / (1 + device.beta), rel=1e-3)
    assert c["rms_rel"] <= 0.02


def test_compare_threshold_zero(tmp_path, capsys):
    rc, _, err = run(["compare", FHN_NDS, "--out", tmp_path, "--threshold", "0", *FAST], capsys)
    assert rc != 0 and "exceeds threshold" in err


def test_compare_without_stimulus(tmp_path, capsys):
    rc, _, err = run(["compare", FHN_NDS, "--stim", "const:0", "--out", tmp_path, *FAST], capsys)
    assert rc == 1 and "spikes" in err


def test_params_resolution(tmp_path, capsys, monkeypatch):
    model = tmp_path / "fhn.nds"
    shutil.copy(FHN_NDS, model)
    # no params anywhere: default quiescent current is too small for FHN swings
    rc, _, err = run(["sim", model, "--tier", "circuit", "--stim", "step:0.8",
                      "--out", tmp_path, *FAST], capsys)
    assert rc == 2 and "saturation" in err
    monkeypatch.setenv("NEUROSYNTH_PARAMS", str(FHN_PARAMS))
    rc, _, _ = run(["sim", model, "--tier", "circuit", "--out", tmp_path, *FAST], capsys)
    assert rc == 0
    # --params wins over the environment
    bad = tmp_path / "bad.params"
    bad.write_text("colour = blue\n")
    rc, _, err = run(["sim", model, "--params", bad, "--out", tmp_path, *FAST], capsys)
    assert rc == 1 and "unknown parameter" in err
    monkeypatch.delenv("NEUROSYNTH_PARAMS")
    shutil.copy(FHN_PARAMS, tmp_path / "fhn.params")
    rc, _, _ = run(["sim", model, "--tier", "circuit", "--out", tmp_path, *FAST], capsys)
    assert rc == 0


def test_stats_to_file(tmp_path, capsys):
    run(["sim", FHN_NDS, "--out", tmp_path, *FAST], capsys)
    rc, _, _ = run(["stats", tmp_path / "trace_reference.csv", "--out", tmp_path / "s.json"],
                   capsys)
    assert rc == 0
    assert set(json.loads((tmp_path / "s.json").read_text())) == {
        "signal", "count", "frequency_hz", "mean_period_s", "peak_mean", "trough_mean"}
    rc, _, err = run(["stats", tmp_path / "missing.csv"], capsys)
    assert rc == 1
