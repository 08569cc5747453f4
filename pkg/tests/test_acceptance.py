"""Acceptance suite: one test per shipped guarantee.

Each test prints an `ACCEPTANCE <name>: PASS (...)` line (collected into
the terminal summary) so a run of `pytest -v` ends with a per-criterion
scoreboard. Timing bounds are asserted inside the tests; the numeric
fixtures were tuned once and are frozen here.
"""

from __future__ import annotations

import itertools
import json
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from fairphq import cli, core, evaluation as ev, losses, net, synth, train as tr
from fairphq.analysis import (
    DISCRIMINATION_CAPACITY,
    bottom_indices,
    spearman,
    top_indices,
)
from fairphq.core import GroupLabel


def _record(name: str, detail: str) -> None:
    line = f"ACCEPTANCE {name}: PASS ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


# ------------------------------------------------------------ 1. gradients


def test_gradient_fidelity(warm_backend):
    """Analytic gradients match central finite differences in all modes."""
    t0 = time.perf_counter()
    cohort = synth.generate_cohort(synth.CohortConfig(n=4, seed=7, feature_dims=(5, 5, 5)))
    batch = tr.batch_for(cohort)
    h = 1e-5
    worst = 0.0
    for mode in losses.MODES:
        if mode == "unitask":
            spec = losses.LossSpec(mode=mode, task=2)
        else:
            spec = losses.LossSpec(mode=mode)
        params = net.init_params(net.ModelConfig((5, 5, 5), 6), seed=1, uncertainty=spec.uncertainty)
        _, grads = net.backward_batch(params, batch, spec)
        analytic = net.to_vector(grads)
        vec = net.to_vector(params)
        fd = np.empty_like(vec)
        for i in range(vec.size):
            vp, vm = vec.copy(), vec.copy()
            vp[i] += h
            vm[i] -= h
            lp = net.loss_value(net.from_vector(params, vp), batch, spec)
            lm = net.loss_value(net.from_vector(params, vm), batch, spec)
            fd[i] = (lp - lm) / (2 * h)
        rel = np.abs(analytic - fd) / np.maximum(np.abs(analytic) + np.abs(fd), 1e-3)
        mode_worst = float(rel.max())
        assert mode_worst < 1e-4, f"{mode}: max relative error {mode_worst:.3e}"
        worst = max(worst, mode_worst)
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    _record("gradient-fidelity", f"4 modes, max rel err {worst:.2e}, {elapsed:.1f}s")


# ------------------------------------------------------- 2. loss identities


def test_loss_identities():
    """Degenerate settings collapse one objective onto another."""
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        task_losses = rng.random(8) * 3.0
        # uncertainty weighting with zero log-variances is vanilla averaging
        d1 = abs(losses.uw_loss(task_losses, np.zeros(8)) - losses.mtl_loss(task_losses, np.ones(8)))
        # duplicated groups with shared log-variances reduce to task-level uw
        log_var = rng.standard_normal(8)
        group_losses = np.stack([task_losses, task_losses])
        d2 = abs(
            losses.ufair_loss(group_losses, np.stack([log_var, log_var]), np.array([True, True]))
            - losses.uw_loss(task_losses, log_var)
        )
        # a one-hot weight vector selects the matching single-task loss
        k = int(rng.integers(0, 8))
        one_hot = np.zeros(8)
        one_hot[k] = 1.0
        d3 = abs(losses.mtl_loss(task_losses, one_hot) - task_losses[k])
        worst = max(worst, d1, d2, d3)
    assert worst <= 1e-12
    _record("loss-identities", f"3 identities x 100 draws, max deviation {worst:.1e}")


# ----------------------------------------------------- 3. score aggregation


def test_aggregation_oracle():
    """Total and threshold agree with brute force on every score vector."""
    t0 = time.perf_counter()
    mismatches = 0
    for scores in itertools.product(range(4), repeat=8):
        arr = np.array(scores, dtype=np.int64)
        total = core.total_score(arr)
        binary = core.binary_outcome(total)
        want_total = sum(scores)
        want_binary = 1 if want_total >= 10 else 0
        if total != want_total or binary != want_binary:
            mismatches += 1
    elapsed = time.perf_counter() - t0
    assert mismatches == 0
    assert elapsed < 5.0
    _record("aggregation-oracle", f"65536 vectors, 0 mismatches, {elapsed:.1f}s")


# ------------------------------------------------------ 4. fairness ratios


def _naive_rates(preds, group):
    rows = [p for p in preds if p.group is group]
    pos = sum(1 for p in rows if p.y_hat == 1)
    yp = [p for p in rows if p.y_true == 1]
    yn = [p for p in rows if p.y_true == 0]

    def rate(hits, base):
        return None if base == 0 else hits / base

    return {
        "pos": rate(pos, len(rows)),
        "tpr": rate(sum(1 for p in yp if p.y_hat == 1), len(yp)),
        "fpr": rate(sum(1 for p in yn if p.y_hat == 1), len(yn)),
        "acc": rate(sum(1 for p in rows if p.y_hat == p.y_true), len(rows)),
    }


def _naive_ratio(a, b):
    if a is None or b is None:
        return None
    if b == 0.0:
        return 1.0 if a == 0.0 else None
    return a / b


def test_fairness_oracle():
    """Ratio metrics match naive counting and invert under group swap."""
    rng = np.random.default_rng(8)
    flip = {GroupLabel.S0: GroupLabel.S1, GroupLabel.S1: GroupLabel.S0}
    worst = 0.0
    worst_swap = 0.0
    checked = swapped = 0
    for _ in range(1000):
        n = int(rng.integers(6, 80))
        preds = [
            ev.LabeledPrediction(
                GroupLabel.S0 if rng.random() < 0.5 else GroupLabel.S1,
                int(rng.integers(0, 2)),
                int(rng.integers(0, 2)),
            )
            for _ in range(n)
        ]
        preds[0] = ev.LabeledPrediction(GroupLabel.S0, preds[0].y_true, preds[0].y_hat)
        preds[1] = ev.LabeledPrediction(GroupLabel.S1, preds[1].y_true, preds[1].y_hat)

        rep = ev.fairness_ratios(preds)
        a = _naive_rates(preds, GroupLabel.S0)
        b = _naive_rates(preds, GroupLabel.S1)
        y1 = _naive_ratio(a["tpr"], b["tpr"])
        y0 = _naive_ratio(a["fpr"], b["fpr"])
        want = {
            "m_sp": _naive_ratio(a["pos"], b["pos"]),
            "m_eopp": y1,
            "m_eodd": None if y1 is None or y0 is None else 0.5 * (y1 + y0),
            "m_eacc": _naive_ratio(a["acc"], b["acc"]),
        }
        for name, value in want.items():
            got = rep.ratio(name).raw
            if value is None:
                assert got is None, name
            else:
                worst = max(worst, abs(got - value))
                checked += 1

        swap = ev.fairness_ratios(
            [ev.LabeledPrediction(flip[p.group], p.y_true, p.y_hat) for p in preds]
        )
        pairs = [
            (rep.m_sp.raw, swap.m_sp.raw),
            (rep.m_eopp.raw, swap.m_eopp.raw),
            (rep.m_eacc.raw, swap.m_eacc.raw),
            (rep.eodd_y1, swap.eodd_y1),
            (rep.eodd_y0, swap.eodd_y0),
        ]
        for r, r_swapped in pairs:
            if r is None or r_swapped is None or r == 0.0:
                continue
            worst_swap = max(worst_swap, abs(r * r_swapped - 1.0))
            swapped += 1
    assert worst <= 1e-12
    assert worst_swap <= 1e-12
    assert checked > 2000 and swapped > 2000
    _record(
        "fairness-oracle",
        f"1000 sets, max err {worst:.1e}, swap residual {worst_swap:.1e}",
    )


# ------------------------------------------------------- 5. Pareto frontier


def _brute_force_frontier(points):
    acc = np.array([p.accuracy for p in points])
    fair = np.array([p.fairness for p in points])
    keep = []
    for i, p in enumerate(points):
        better_eq = (acc >= acc[i]) & (fair >= fair[i])
        strict = (acc > acc[i]) | (fair > fair[i])
        if not np.any(better_eq & strict):
            keep.append(p.method_id)
    return keep


def test_pareto_oracle():
    """Frontier output equals quadratic dominance on 1000 random sets."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(13)
    mismatches = 0
    for trial in range(1000):
        n = int(rng.integers(1, 201))
        if trial % 2 == 0:
            coords = rng.integers(0, 6, size=(n, 2)) / 5.0  # grid values force ties
        else:
            coords = rng.random((n, 2))
        points = [
            ev.ParetoPoint(f"m{i}", float(a), float(f)) for i, (a, f) in enumerate(coords)
        ]
        got = [p.method_id for p in ev.pareto_frontier(points)]
        if got != _brute_force_frontier(points):
            mismatches += 1
    elapsed = time.perf_counter() - t0
    assert mismatches == 0
    _record("pareto-oracle", f"1000 sets (n<=200), 0 mismatches, {elapsed:.1f}s")


# -------------------------------------------------- 6. rank-report constants


# four published inverse-variance profiles with frozen Spearman values
# (golden rho computed by an independent rank oracle before the build)
# and their expected top-3 / bottom-2 task index sets
PROFILES = [
    ([1.50, 1.41, 0.62, 0.82, 0.61, 0.73, 0.75, 1.58], 0.523809523809524, {0, 1, 7}, {2, 4}),
    ([1.41, 1.47, 0.64, 0.68, 0.69, 0.59, 0.80, 1.72], 0.261904761904762, {0, 1, 7}, {2, 5}),
    ([1.69, 1.38, 0.51, 0.91, 0.51, 0.63, 0.61, 1.69], 0.6386005678432409, {0, 1, 7}, {2, 4}),
    ([1.69, 1.41, 0.58, 0.60, 0.58, 0.60, 0.89, 1.70], 0.530158961983068, {0, 1, 7}, {2, 4}),
]


def test_rank_report_constants():
    """Spearman goldens to 1e-9 plus the reference marking sets."""
    worst = 0.0
    assert set(top_indices(DISCRIMINATION_CAPACITY, 3)) == {0, 1, 5}
    assert set(bottom_indices(DISCRIMINATION_CAPACITY, 2)) == {2, 4}
    for values, rho, top, bottom in PROFILES:
        arr = np.array(values)
        got = spearman(DISCRIMINATION_CAPACITY, arr)
        worst = max(worst, abs(got - rho))
        assert set(top_indices(arr, 3)) == top
        assert set(bottom_indices(arr, 2)) == bottom
    assert worst <= 1e-9
    _record("rank-report-constants", f"4 profiles, max |rho err| {worst:.1e}")


# --------------------------------------------------------- 7. convergence


def test_convergence(warm_backend):
    """Plain multitask training solves the noise-free separable cohort."""
    t0 = time.perf_counter()
    cohort = synth.generate_cohort(
        synth.CohortConfig(
            n=200, seed=42, feature_dims=(12, 12, 12), signal_scale=3.0, noise_scale=(0.0, 0.0)
        )
    )
    config = tr.TrainConfig(
        loss=losses.LossSpec(mode="mtl"),
        lr=0.01,
        batch_size=32,
        max_epochs=60,
        patience=60,
        seed=0,
        hidden_dim=16,
        stop_metric="train_loss",
    )
    params, trace = tr.train(cohort, cohort, config)
    first = trace.epochs[0].train_loss
    best = min(e.train_loss for e in trace.epochs)
    hit = next((e.epoch for e in trace.epochs if e.train_loss < 0.1 * first), None)
    pred = tr.predict(params, cohort)
    truth = np.array([r.outcome for r in cohort.records])
    accuracy = float(np.mean(pred.binary_hat == truth))
    elapsed = time.perf_counter() - t0
    assert hit is not None and hit <= 150
    assert accuracy > 0.9
    assert elapsed < 120.0
    _record(
        "convergence",
        f"loss <10% of epoch 1 at epoch {hit}, train accuracy {accuracy:.3f}, {elapsed:.1f}s",
    )


# -------------------------------------------- 8. directional fairness (stochastic)


def test_directional_fairness(warm_backend):
    """Group-wise weighting narrows the accuracy-ratio gap versus plain MTL.

    A directional, median-over-seeds property on a cohort with
    group-asymmetric noise; not an exact bound.
    """
    t0 = time.perf_counter()
    cohort = synth.generate_cohort(
        synth.CohortConfig(
            n=2000,
            seed=100,
            feature_dims=(12, 12, 12),
            group_fraction_s0=0.3,
            signal_scale=1.0,
            noise_scale=(2.0, 0.5),
        )
    )

    def eacc_gap(mode: str, seed: int) -> float:
        config = tr.TrainConfig(
            loss=losses.LossSpec(mode=mode),
            lr=1e-3,
            batch_size=64,
            max_epochs=25,
            patience=25,
            seed=seed,
            hidden_dim=16,
            stop_metric="val_loss",
        )
        part_train, part_val, part_test = tr.split_cohort(cohort, seed, (0.7, 0.15, 0.15))
        params, _ = tr.train(part_train, part_val, config)
        pred = tr.predict(params, part_test)
        labeled = ev.label_predictions(part_test, pred.binary_hat)
        ratio = ev.fairness_ratios(labeled).m_eacc.raw
        assert ratio is not None
        return abs(1.0 - ratio)

    gaps_mtl = [eacc_gap("mtl", seed) for seed in range(10)]
    gaps_ufair = [eacc_gap("ufair", seed) for seed in range(10)]
    med_mtl = float(np.median(gaps_mtl))
    med_ufair = float(np.median(gaps_ufair))
    elapsed = time.perf_counter() - t0
    assert med_ufair <= med_mtl
    _record(
        "directional-fairness",
        f"median |1-EAcc|: grouped {med_ufair:.3f} <= plain {med_mtl:.3f}, "
        f"10 seeds, {elapsed:.1f}s",
    )


# --------------------------------------------------------- 9. determinism


def test_pipeline_determinism(warm_backend, tmp_path):
    """Two identical pipeline runs produce byte-identical artifacts."""

    def run(root):
        dataset = root / "cohort.jsonl"
        rc = cli.main(
            ["generate", "--out", str(dataset), "--n", "80", "--seed", "3",
             "--feature-dims", "6,6,6"]
        )
        assert rc == 0
        run_dir = root / "run"
        rc = cli.main(
            ["train", "--dataset", str(dataset), "--out", str(run_dir), "--mode", "uw",
             "--seed", "1", "--max-epochs", "3", "--batch-size", "16",
             "--hidden-dim", "8", "--patience", "3"]
        )
        assert rc == 0
        assert cli.main(["evaluate", "--run", str(run_dir)]) == 0
        return {
            "cohort.jsonl": dataset.read_bytes(),
            "trace.csv": (run_dir / "trace.csv").read_bytes(),
            "checkpoint.json": (run_dir / "checkpoint.json").read_bytes(),
            "eval.json": (run_dir / "eval.json").read_bytes(),
            "eval.csv": (run_dir / "eval.csv").read_bytes(),
        }

    first = run(tmp_path / "a")
    second = run(tmp_path / "b")
    for name in first:
        assert first[name] == second[name], f"{name} differs between runs"
    hashes = json.loads(first["eval.json"].decode())["dataset_hash"][:12]
    _record(
        "determinism",
        f"dataset, trace, checkpoint, and reports byte-identical (dataset {hashes}...)",
    )
