"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line."""

import csv
import filecmp
import itertools
import math
import time

import numpy as np
import pytest

from mgot import (
    EmbeddingSet,
    GotConfig,
    MaskGenerator,
    SinkhornConfig,
    confusion_loss,
    fairness_report,
    got_distance,
    gromov_wasserstein,
    gw_linearized_cost,
    mask_loss_gradient,
    masked_sinkhorn,
    pqd,
    sinkhorn,
    transport_cost,
)
from mgot import io as mio
from mgot.cli import main
from conftest import ACCEPTANCE_LINES, random_graph, random_marginal
from oracles import brute_force_fairness, records_with_accuracies, synthetic_records


def verdict(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def permutation_optimum(C):
    n = len(C)
    return min(sum(C[i][p[i]] for i in range(n)) for p in itertools.permutations(range(n))) / n


def test_1_sinkhorn_feasibility():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for k in range(100):
        n, m = rng.integers(1, 21, size=2)
        beta = (0.01, 0.1, 1.0)[k % 3]
        u, v = random_marginal(rng, n), random_marginal(rng, m)
        plan = sinkhorn(rng.random((n, m)), u, v, SinkhornConfig(beta))
        worst = max(worst, plan.marginal_violation())
    elapsed = time.perf_counter() - start
    verdict(1, worst <= 1e-6 and elapsed < 5, f"max violation {worst:.2e}, {elapsed:.2f}s")


def test_2_entropic_limit_oracle():
    rng = np.random.default_rng(102)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(25):
        n = int(rng.integers(1, 7))
        C = rng.random((n, n))
        u = np.full(n, 1 / n)
        plan = sinkhorn(C, u, u, SinkhornConfig(1e-3))
        worst = max(worst, abs(transport_cost(plan, C) - permutation_optimum(C)))
    elapsed = time.perf_counter() - start
    verdict(2, worst <= 1e-3 and elapsed < 10, f"max gap {worst:.2e}, {elapsed:.2f}s")


def test_3_lambda_reductions():
    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(20):
        n, m = rng.integers(2, 7, size=2)
        C = rng.random((n, m))
        A, B = random_graph(rng, n), random_graph(rng, m)
        u, v = random_marginal(rng, n), random_marginal(rng, m)
        plan, obj = got_distance(C, A, B, u, v, GotConfig(1.0))
        ref = sinkhorn(C, u, v)
        worst = max(worst, np.max(np.abs(plan.values - ref.values)), abs(obj - transport_cost(ref, C)))
        plan, obj = got_distance(C, A, B, u, v, GotConfig(0.0))
        ref, d = gromov_wasserstein(A, B, u, v, GotConfig(0.0))
        worst = max(worst, np.max(np.abs(plan.values - ref.values)), abs(obj - d))
    verdict(3, worst <= 1e-9, f"max deviation {worst:.2e}")


def test_4_gw_isomorphism():
    rng = np.random.default_rng(104)
    cfg = GotConfig(0.0, SinkhornConfig(1e-3))
    worst = 0.0
    count = 0
    for n in range(1, 6):
        for _ in range(10):
            A = random_graph(rng, n)
            perm = rng.permutation(n)
            B = A[np.ix_(perm, perm)]
            # the permutation coupling is a zero-cost witness
            T = np.zeros((n, n))
            T[perm, np.arange(n)] = 1 / n
            assert transport_cost(T, gw_linearized_cost(A, B, T)) <= 1e-15
            worst = max(worst, gromov_wasserstein(A, B, cfg=cfg)[1])
            count += 1
    verdict(4, worst <= 1e-3, f"max distance {worst:.2e} over {count} graph pairs")


def test_5_mask_identity():
    rng = np.random.default_rng(105)
    worst = 0.0
    for _ in range(20):
        n, m = rng.integers(1, 9, size=2)
        C = rng.random((n, m))
        u, v = random_marginal(rng, n), random_marginal(rng, m)
        ref = sinkhorn(C, u, v).values
        for c in (1.0, 0.5, 0.1):
            worst = max(worst, np.max(np.abs(masked_sinkhorn(C, u, v, np.full(n, c)).values - ref)))
    verdict(5, worst <= 1e-9, f"max deviation {worst:.2e}")


def test_6_gradient_check():
    rng = np.random.default_rng(106)
    cfg = GotConfig(0.5)
    worst = 0.0
    for _ in range(10):
        d = int(rng.integers(1, 9))
        P, L = rng.standard_normal((int(rng.integers(2, 8)), d)), rng.standard_normal((int(rng.integers(1, 5)), d))
        gen = MaskGenerator(rng.uniform(-1, 1, d), rng.uniform(-0.5, 0.5))
        g_u = np.append(*mask_loss_gradient(gen, P, L, cfg, mode="unrolled"))
        g_fd = np.append(*mask_loss_gradient(gen, P, L, cfg, mode="finite_difference"))
        worst = max(worst, np.linalg.norm(g_u - g_fd) / np.linalg.norm(g_fd))
    verdict(6, worst <= 1e-3, f"max relative error {worst:.2e}")


def test_7_fairness_oracle():
    records = synthetic_records(1000, seed=107)
    r, ref = fairness_report(records), brute_force_fairness(records)
    gap = max(abs(getattr(r, k) - ref[k]) for k in ("pqd", "dpm", "eom"))
    gap = max(gap, *(abs(r.per_group_accuracy[g] - a) for g, a in ref["per_group_accuracy"].items()))
    skips = (
        r.dpm_skipped_classes == ref["dpm_skipped_classes"]
        and r.eom_skipped_classes == ref["eom_skipped_classes"]
        and set(r.per_group_accuracy) == set(ref["per_group_accuracy"])
    )
    verdict(7, gap <= 1e-12 and skips and ref["eom_skipped_classes"],
            f"max gap {gap:.1e}, skips dpm={ref['dpm_skipped_classes']} eom={ref['eom_skipped_classes']}")


def test_8_confusion_loss_bound():
    rng = np.random.default_rng(108)
    ok = True
    slack = math.inf
    for n in (2, 6, 114):
        log_n = math.log(n)
        for _ in range(1000):
            p = rng.dirichlet(np.ones(n))
            gap = confusion_loss(p) - log_n
            ok &= gap >= -1e-12 and gap > 1e-9  # equality only at the uniform vector
            slack = min(slack, gap)
        ok &= abs(confusion_loss(np.full(n, 1 / n)) - log_n) <= 1e-9
    verdict(8, ok, f"smallest non-uniform excess {slack:.2e}")


def test_9_accuracy_ratio_in_reported_band():
    value = pqd(records_with_accuracies([896, 803, 923]))
    ok = abs(value - 0.8700) <= 5e-5 and 0.869 - 0.061 <= value <= 0.869 + 0.061
    verdict(9, ok, f"pqd {value:.4f} within 0.869 +/- 0.061")


def test_10_masking_efficacy(tmp_path):
    start = time.perf_counter()
    d = tmp_path / "synth"
    assert main(["synth", "--n-patches", "64", "--n-labels", "8", "--dim", "16",
                 "--noise-frac", "0.6", "--seed", "7", "--out-dir", str(d)]) == 0
    base = ["align", "--source-emb", str(d / "patches.emb"), "--target-emb", str(d / "labels.emb")]
    assert main(base + ["--out-summary", str(tmp_path / "got.json")]) == 0
    assert main(base + ["--mask", "learn", "--epochs", "50", "--seed", "7",
                        "--out-mask", str(tmp_path / "mask.csv"),
                        "--out-summary", str(tmp_path / "mgot.json")]) == 0
    elapsed = time.perf_counter() - start
    truth = {row["id"]: row["source"] for row in csv.DictReader(open(d / "truth.csv"))}
    ids, w = mio.read_weights(tmp_path / "mask.csv")
    noise = np.array([truth[i] == "noise" for i in ids])
    import json

    got = json.loads((tmp_path / "got.json").read_text())["objective"]
    mgot = json.loads((tmp_path / "mgot.json").read_text())["objective"]
    ok = w[noise].mean() < w[~noise].mean() and mgot < got and elapsed < 60
    verdict(10, ok, f"mask noise {w[noise].mean():.4f} < signal {w[~noise].mean():.4f}, "
                    f"MGOT {mgot:.4f} < GOT {got:.4f}, {elapsed:.1f}s")


def test_11_io_round_trips(tmp_path):
    rng = np.random.default_rng(111)
    X = rng.standard_normal((7, 5)).astype(np.float32).astype(np.float64)
    e = EmbeddingSet([f"e{i}" for i in range(7)], X)
    mio.write_embeddings(e, tmp_path / "e.emb")
    b = mio.read_embeddings(tmp_path / "e.emb")
    binary_ok = b.ids == e.ids and np.array_equal(b.vectors, X)

    Y = rng.standard_normal((7, 5))
    mio.write_embeddings(EmbeddingSet(e.ids, Y), tmp_path / "e.csv")
    c = mio.read_embeddings(tmp_path / "e.csv")
    csv_ok = c.ids == e.ids and np.array_equal(c.vectors, np.vectorize(lambda x: float(f"{x:.9g}"))(Y))

    r = fairness_report(synthetic_records(500, seed=11))
    mio.write_report(r, tmp_path / "r.json")
    back = mio.read_report(tmp_path / "r.json")
    report_ok = all(abs(getattr(back, k) - getattr(r, k)) <= 1e-12 for k in ("pqd", "dpm", "eom"))
    report_ok &= all(abs(back.per_group_accuracy[g] - a) <= 1e-12 for g, a in r.per_group_accuracy.items())
    report_ok &= back.eom_skipped_classes == r.eom_skipped_classes

    (tmp_path / "bad.emb").write_bytes(b"EMB2" + bytes(16))
    (tmp_path / "bad.csv").write_text("sample_id,group,true_label,pred_label\n1,A,,x\n")
    codes = [
        main(["align", "--source-emb", str(tmp_path / "bad.emb"), "--target-emb", str(tmp_path / "e.emb")]),
        main(["train-mask", "--source-emb", str(tmp_path / "bad.emb"), "--target-emb", str(tmp_path / "e.emb"),
              "--out-mask", str(tmp_path / "m.csv"), "--out-trace", str(tmp_path / "t.csv")]),
        main(["fairness", "--predictions", str(tmp_path / "bad.csv"), "--out", str(tmp_path / "out.json")]),
    ]
    ok = binary_ok and csv_ok and report_ok and codes == [2, 2, 2]
    verdict(11, ok, f"binary={binary_ok} csv={csv_ok} report={report_ok} malformed exit codes={codes}")


def run_twice(tmp_path, make_argv):
    outs = []
    for k in (1, 2):
        out = tmp_path / f"run{k}"
        out.mkdir()
        assert main(make_argv(out)) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    match, mismatch, errors = filecmp.cmpfiles(outs[0], outs[1], names, shallow=False)
    return bool(names) and not mismatch and not errors


def test_12_determinism(tmp_path):
    data = tmp_path / "data"
    assert main(["synth", "--n-patches", "20", "--seed", "12", "--out-dir", str(data)]) == 0
    src, lab = str(data / "patches.emb"), str(data / "labels.emb")
    mio.write_predictions(synthetic_records(300, seed=12), tmp_path / "p.csv")
    commands = {
        "synth": lambda o: ["synth", "--n-patches", "20", "--seed", "12", "--out-dir", str(o)],
        "align": lambda o: ["align", "--source-emb", src, "--target-emb", lab, "--mask", "learn",
                            "--epochs", "5", "--seed", "3", "--out-plan", str(o / "plan.csv"),
                            "--out-mask", str(o / "mask.csv"), "--out-summary", str(o / "s.json")],
        "fairness": lambda o: ["fairness", "--predictions", str(tmp_path / "p.csv"), "--out", str(o / "r.json")],
        "train-mask": lambda o: ["train-mask", "--source-emb", src, "--target-emb", lab, "--epochs", "5",
                                 "--seed", "3", "--out-mask", str(o / "m.csv"), "--out-trace", str(o / "t.csv")],
    }
    results = {}
    for name, argv in commands.items():
        sub = tmp_path / name
        sub.mkdir()
        results[name] = run_twice(sub, argv)
    verdict(12, all(results.values()), " ".join(f"{k}={v}" for k, v in results.items()))
