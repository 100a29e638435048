import json
import subprocess
import sys

import numpy as np
import pytest

from enetmodel import circuits
from enetmodel import surrogate as sg
from enetmodel.cli import EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, RunManifest, main
from enetmodel.twoport import read_s2p

from cli_pipeline import STAGES, run_stages, write_inputs


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    import os
    old = os.getcwd()
    os.chdir(d)
    write_inputs(d)
    codes = run_stages(d)
    yield d, codes
    os.chdir(old)


def test_every_stage_succeeds(workdir):
    _, codes = workdir
    assert codes == {name: EXIT_OK for name, _ in STAGES}


def test_simulate_outputs(workdir):
    d, _ = workdir
    f, ss, z0 = read_s2p(d / "simulate.s2p")
    assert len(f) == 16 and z0 == 50.0
    rows = (d / "simulate.csv").read_text().splitlines()
    assert len(rows) == 17


def test_through_netlist(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "t.net").write_text(".ports a b\nW1 a b\n")
    assert main(["simulate", "t.net", "--grid", "1e9:2e9:2:lin"]) == EXIT_OK
    _, ss, _ = read_s2p(tmp_path / "simulate.s2p")
    assert all(abs(s.s21 - 1) < 1e-12 and abs(s.s11) < 1e-12 for s in ss)
    assert "2 points" in capsys.readouterr().out


def test_set_overrides_values(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "ps.net").write_text(circuits.phase_shifter_text("lpt", "hpt"))
    assert main(["simulate", "ps.net", "--set", "S1=on", "--set", "S2=on",
                 "--grid", "2e9:3e9:2:lin"]) == EXIT_OK
    _, ss, _ = read_s2p(tmp_path / "simulate.s2p")
    assert abs(np.angle(ss[0].s21, deg=True)) < 0.01


def test_training_outputs_and_manifest(workdir):
    d, _ = workdir
    m = sg.load_model(d / "sub_lpt.json")
    assert m.meta["role"] == "sub" and len(m.meta["test_r2"]) == 6
    metrics = json.loads((d / "main.metrics.json").read_text())
    assert metrics
    man = RunManifest.read(d / "main.manifest.json")
    assert man.command == "train-main"
    assert [o["path"].rsplit("/", 1)[-1] for o in man.outputs] == \
        ["main.json", "main.history.csv", "main.metrics.json"]
    assert man.inputs[0]["path"].endswith("gen_main.csv")
    assert len(man.config_hash) == 64


def test_eval_prints_r2(workdir, capsys):
    d, _ = workdir
    assert main(["eval", "sub_hpt.json", "gen_hpt.csv", "--out", str(d), "--name", "e2"]) == 0
    out = capsys.readouterr().out
    assert out.count("R2 ") == 6


def test_eval_rejects_mismatched_data(workdir):
    d, _ = workdir
    assert main(["eval", "sub_hpt.json", "gen_lpt.csv", "--out", str(d), "--name", "bad"]) \
        == EXIT_USAGE


def test_size_result(workdir):
    d, _ = workdir
    res = json.loads((d / "size.result.json").read_text())
    assert res["simulator"] == "surrogate"
    assert res["chosen"]["status"] in ("pass", "surrogate-optimism", "fail")
    assert res["oracle_calls"] == len(res["verified"])


def test_replay_is_identical(workdir, tmp_path, capsys):
    d, _ = workdir
    for name in ("gen_lpt", "main", "size"):
        code = main(["replay", str(d / f"{name}.manifest.json"), "--into", str(tmp_path / name)])
        assert code == EXIT_OK
    assert "DIFFERENT" not in capsys.readouterr().out


def test_replay_detects_changes(workdir, tmp_path):
    d, _ = workdir
    man = json.loads((d / "gen_hpt.manifest.json").read_text())
    man["outputs"][0]["sha256"] = "0" * 64
    (tmp_path / "m.json").write_text(json.dumps(man))
    assert main(["replay", str(tmp_path / "m.json"), "--into", str(tmp_path / "o")]) \
        == EXIT_DOMAIN


def test_usage_errors(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["simulate", "missing.net"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    (tmp_path / "bad.net").write_text(".ports a b\nR1 a b -3\n")
    assert main(["simulate", "bad.net"]) == EXIT_USAGE
    (tmp_path / "c.json").write_text(json.dumps({"nonsense": 1}))
    (tmp_path / "f.net").write_text(circuits.lc_network_text())
    assert main(["simulate", "f.net", "--config", "c.json"]) == EXIT_USAGE


def test_singular_netlist_is_domain_error(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "s.net").write_text(".ports a b\nR1 a b 1\nC1 x y 1p\n")
    assert main(["simulate", "s.net"]) == EXIT_DOMAIN


def test_config_file_sets_defaults(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "f.net").write_text(circuits.lc_network_text())
    (tmp_path / "c.json").write_text(json.dumps({"grid": "1e9:2e9:3:lin", "name": "cfg"}))
    assert main(["simulate", "f.net", "--config", "c.json"]) == EXIT_OK
    f, _, _ = read_s2p(tmp_path / "cfg.s2p")
    assert list(f) == [1e9, 1.5e9, 2e9]


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "enetmodel", "--version"],
                         capture_output=True, text=True, cwd=tmp_path)
    assert out.returncode == 0 and out.stdout.strip()
