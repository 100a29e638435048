"""Acceptance criteria, one test per criterion.

Each test records a ``criterion N: PASS|FAIL ...`` line that is printed in
the pytest summary, then asserts.  Thresholds are the stated ones.
"""

import hashlib
import os
import time
from pathlib import Path

import numpy as np
import pytest

from enetmodel import circuits
from enetmodel import compare as cmp
from enetmodel import dataset as ds
from enetmodel import netlist as nl
from enetmodel import optimize as op
from enetmodel import pipeline as pl
from enetmodel import surrogate as sg
from enetmodel.cli import EXIT_OK, RunManifest, main
from enetmodel.twoport import (
    abcd_to_s, check_reciprocity, frequency_grid, mna_two_port, s_to_abcd,
)

from cli_pipeline import STAGES, run_stages, write_inputs
from conftest import ACCEPTANCE
from gradcheck import grad_check, random_model
from ladders import abcd_s_reference, ladder_abcd, ladder_circuit, random_ladder

F = 2e9
POIS = ("insertion_phase_deg", "input_return_loss_db")


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def family():
    return circuits.phase_shifter_family()


@pytest.fixture(scope="module")
def test_set(family):
    return ds.gen_main_dataset(family, ds.SamplerConfig(seed=1000, count=200), F)


# 1 -----------------------------------------------------------------------------------------

def test_c1_lc_network_matches_closed_form():
    t0 = time.perf_counter()
    ind, cap = 1e-9, 1e-12
    net = nl.parse(circuits.lc_network_text(ind, cap))
    worst = 0.0
    for f in frequency_grid(1.0, 15e9, 64, log=True):
        got = mna_two_port(net.subcircuit(), f).to_array()
        s11, s12, s21, s22 = circuits.lc_network_closed_form(f, ind, cap)
        worst = max(worst, float(np.max(np.abs(got - np.array([[s11, s12], [s21, s22]])))))
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and dt < 1.0
    record(1, ok, f"max |dS| = {worst:.2e} over 64 points (< 1e-9), {dt:.3f} s (< 1 s)")
    assert ok


# 2 -----------------------------------------------------------------------------------------

def test_c2_physics_properties_of_random_ladders():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    grid = frequency_grid(1.0, 15e9, 64, log=True)
    worst = {"reciprocity": 0.0, "passivity": 0.0, "unitarity": 0.0, "round_trip": 0.0,
             "round_trip_posed": 0.0, "vs_abcd": 0.0}
    lossless = 0
    for k in range(200):
        kinds = "LC" if k % 2 else "RLC"
        spec = random_ladder(rng, kinds=kinds)
        lossless += kinds == "LC"
        sub = ladder_circuit(spec)
        for f in grid:
            s = mna_two_port(sub, f)
            a = s.to_array()
            worst["reciprocity"] = max(worst["reciprocity"], abs(s.s12 - s.s21))
            assert check_reciprocity(s, 1e-10)
            # passivity: I - S^H S positive semidefinite
            eig = np.linalg.eigvalsh(np.eye(2) - a.conj().T @ a)
            worst["passivity"] = max(worst["passivity"], -float(eig.min()))
            if kinds == "LC":
                u = abs(abs(s.s11) ** 2 + abs(s.s21) ** 2 - 1)
                worst["unitarity"] = max(worst["unitarity"], u)
            back = abcd_to_s(s_to_abcd(s)).to_array()
            rt = float(np.max(np.abs(back - a)))
            worst["round_trip"] = max(worst["round_trip"], rt)
            # below |S21| ~ 1e-7 the S12*S21 term is rounded out of A..D, so AD-BC
            # no longer carries S12; shown separately, not part of the verdict
            if abs(s.s21) >= 1e-6:
                worst["round_trip_posed"] = max(worst["round_trip_posed"], rt)
            ref = abcd_s_reference(ladder_abcd(spec, f), det=1.0)
            worst["vs_abcd"] = max(worst["vs_abcd"], float(np.max(np.abs(ref - a))))
    dt = time.perf_counter() - t0
    ok = (worst["reciprocity"] < 1e-10 and worst["passivity"] < 1e-9
          and worst["unitarity"] < 1e-9 and worst["round_trip"] < 1e-10 and dt < 30)
    record(2, ok, f"200 ladders x 64 points ({lossless} LC-only): |S12-S21| "
                  f"{worst['reciprocity']:.1e}, passivity slack {worst['passivity']:.1e}, "
                  f"unitarity {worst['unitarity']:.1e}, round trip {worst['round_trip']:.1e} "
                  f"({worst['round_trip_posed']:.1e} where |S21| >= 1e-6), "
                  f"vs closed-form ABCD {worst['vs_abcd']:.1e}; {dt:.1f} s (< 30 s)")
    assert ok


# 3 -----------------------------------------------------------------------------------------

def test_c3_gradient_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst, checked, skipped = 0.0, 0, 0
    for _ in range(50):
        w, c, s = grad_check(random_model(rng), rng)
        worst, checked, skipped = max(worst, w), checked + c, skipped + s
    dt = time.perf_counter() - t0
    ok = worst < 1e-4 and dt < 30
    record(3, ok, f"50 random MLP/CCI models: max rel err {worst:.1e} (< 1e-4) over {checked} "
                  f"weights, {skipped} kink-straddling skipped; {dt:.1f} s (< 30 s)")
    assert ok


# 4 -----------------------------------------------------------------------------------------

def test_c4_sub_model_accuracy():
    t0 = time.perf_counter()
    net = nl.parse(circuits.variant_text("lpt"))
    data = ds.gen_sub_dataset(net, None, ds.SamplerConfig(seed=1, count=400), F)
    model, hist, r2 = pl.fit_sub(data, pl.ModelConfig(), sg.TrainConfig(seed=0))
    dt = time.perf_counter() - t0
    ok = model.hidden == [32, 32] and min(r2) >= 0.90 and dt < 120
    names = ds.s_feature_names(data.encoding)
    record(4, ok, f"3-element low-pass T, 400 samples, 2x32: test R2 min {min(r2):.3f} "
                  f"mean {np.mean(r2):.3f} (>= 0.90) over {len(names)} outputs, "
                  f"{hist.epochs[-1]} epochs; {dt:.1f} s (< 120 s)")
    assert ok


# 5 -----------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def main_model(family):
    t0 = time.perf_counter()
    data = ds.gen_main_dataset(family, ds.SamplerConfig(seed=5, count=2000), F)
    model, _, _ = pl.fit_main(data, POIS, "cci", pl.ModelConfig(), sg.TrainConfig(seed=0),
                              holdout=False)
    return model, len(data), time.perf_counter() - t0


def test_c5_multi_topology_main_model(main_model, test_set):
    model, n_train, dt_train = main_model
    t0 = time.perf_counter()
    r2 = sg.r2_columns(model.forward(test_set.features()), test_set.targets(POIS))
    dt = dt_train + time.perf_counter() - t0
    topologies = len(set(test_set.topology))
    ok = (n_train <= 2000 and topologies == 9 and len(test_set) == 200
          and min(r2) >= 0.90 and dt < 600)
    record(5, ok, f"CCI main on {n_train} samples, 200 held-out rows over {topologies} "
                  f"topologies: R2 phase {r2[0]:.3f}, return loss {r2[1]:.3f} (>= 0.90); "
                  f"{dt:.1f} s (< 600 s)")
    assert ok


# 6 -----------------------------------------------------------------------------------------

def test_c6_data_efficiency(family):
    t0 = time.perf_counter()
    cfg = cmp.CompareConfig(methods=("fc_raw", "enet_cci"))
    res = {r.method: r for r in cmp.run_compare(family, cfg)}
    fc, fun = res["fc_raw"], res["enet_cci"]
    ratio = fun.oracle_calls / fc.oracle_calls
    dt = time.perf_counter() - t0
    ok = fc.reached and fun.reached and ratio <= 0.5
    record(6, ok, f"oracle calls to R2 0.90: E-network CCI {fun.oracle_calls} ({fun.detail}) vs "
                  f"per-topology FC {fc.oracle_calls} ({fc.detail}); ratio {ratio:.2f} "
                  f"(<= 0.5); {dt:.0f} s")
    assert ok


# 7 -----------------------------------------------------------------------------------------

def test_c7_composition_is_bit_exact():
    rng = np.random.default_rng(7)
    net = nl.parse(circuits.phase_shifter_text("lpt", "hpt"))
    subs = []
    for k, v in enumerate(("lpt", "hpt")):
        d = ds.gen_sub_dataset(nl.parse(circuits.variant_text(v)), None,
                               ds.SamplerConfig(seed=k, count=60), F)
        subs.append(pl.fit_sub(d, pl.ModelConfig(),
                               sg.TrainConfig(max_epochs=30, patience=10))[0])
    main = pl.build_main("cci", 2, 6, 2, 2, seed=3)
    main.input_norm = sg.Affine(rng.normal(size=14), rng.uniform(0.5, 2, 14), np.zeros(14, bool))
    cm = pl.compose_for(net, pl.library(subs), main)
    rows = [ds.sample_instance(net, rng) for _ in range(1000)]
    got = pl.predict_instances(cm, net, rows)
    pieces = [pl.instance_inputs(net, r) for r in rows]
    x1 = np.stack([p[0][0] for p in pieces])
    x2 = np.stack([p[0][1] for p in pieces])
    xr = np.stack([p[1] for p in pieces])
    manual = main.forward(np.concatenate([subs[0].forward(x1), subs[1].forward(x2), xr], axis=1))
    mismatches = int(np.sum(got != manual))
    ok = got.shape == (1000, 2) and mismatches == 0
    record(7, ok, f"composed vs manual sub-then-main on 1000 inputs: {mismatches} differing "
                  "values (bit-for-bit)")
    assert ok


# 8 -----------------------------------------------------------------------------------------

def _brute_fronts(obj, viol):
    left = set(range(len(obj)))
    fronts = []
    while left:
        front = sorted(i for i in left
                       if not any(op.constrained_dominates(obj[j], viol[j], obj[i], viol[i])
                                  for j in left if j != i))
        fronts.append(front)
        left -= set(front)
    return fronts


def test_c8_nsga2_and_sizing(main_model):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    agree = 0
    for _ in range(100):
        n, m = int(rng.integers(1, 30)), int(rng.integers(1, 4))
        obj = rng.integers(0, 6, size=(n, m)).astype(float)
        viol = np.where(rng.random(n) < 0.25, rng.integers(1, 4, size=n), 0).astype(float)
        agree += op.fast_nondominated_sort(obj, viol) == _brute_fronts(obj, viol)

    subs = []
    for k, v in enumerate(circuits.PHASE_VARIANTS):
        d = ds.gen_sub_dataset(nl.parse(circuits.variant_text(v)), None,
                               ds.SamplerConfig(seed=k + 1, count=400), F)
        subs.append(pl.fit_sub(d, pl.ModelConfig(), sg.TrainConfig(seed=k))[0])
    main, _, dt_main = main_model
    net = nl.parse(circuits.phase_shifter_text("lppi", "lpt"))
    state = {"S1": 0, "S2": 1}
    targets = [op.Target("insertion_phase_deg", F, "eq", -45.0, tol=2.0, state=state),
               op.Target("input_return_loss_db", F, "lt", -20.0, state=state)]
    prob = op.SizingProblem(net, targets, op.SurrogateSimulator(subs, [main]))
    res = op.evolve(prob, op.Nsga2Config(population=30, generations=30, seed=0))
    chosen, reports = op.verify_front(res, prob)
    phase = chosen.checks[0].verified
    rl = chosen.checks[1].verified
    dt = time.perf_counter() - t0 + dt_main
    ok = agree == 100 and abs(phase + 45.0) <= 2.0 and dt < 300
    record(8, ok, f"sort == brute force on {agree}/100 instances; surrogate sizing 30x30 "
                  f"-> oracle phase {phase:.2f} deg (target -45 +/- 2), return loss "
                  f"{rl:.1f} dB (< -20: {rl < -20}), status {chosen.status}, "
                  f"{len(reports)} front members verified; {dt:.0f} s (< 300 s)")
    assert ok


# 9 -----------------------------------------------------------------------------------------

def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def test_c9_replay_is_byte_identical(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    write_inputs(tmp_path)
    codes = run_stages(tmp_path)
    assert all(c == EXIT_OK for c in codes.values()), codes
    same, total, stages = 0, 0, 0
    for name, _ in STAGES:
        man_path = tmp_path / f"{name}.manifest.json"
        man = RunManifest.read(man_path)
        fresh = tmp_path / "replay" / name
        code = main(["replay", str(man_path), "--into", str(fresh)])
        stages += code == EXIT_OK
        for o in man.outputs:
            total += 1
            p = fresh / os.path.basename(o["path"])
            same += p.is_file() and _digest(p) == o["sha256"]
    capsys.readouterr()
    ok = stages == len(STAGES) and same == total
    record(9, ok, f"{len(STAGES)} pipeline stages replayed from manifests: {same}/{total} "
                  "outputs byte-identical")
    assert ok

