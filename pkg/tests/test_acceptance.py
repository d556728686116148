"""Acceptance suite: ten end-to-end checks of the package's guarantees.

Each test prints one ``criterion N: PASS/FAIL - detail`` line (visible with
pytest -s; the same text is the assertion message on failure). The two
statistical criteria share expensive module-scoped fixtures: criteria 8 and
9 read one full 10-fold paired cross-validation run driven through the CLI,
and criterion 10 drives one full `sweep` command on a size-reduced dataset
so the whole file stays inside a desktop-CPU budget.
"""

from __future__ import annotations

import csv
import math
import time
from collections import defaultdict
from types import SimpleNamespace

import numpy as np
import pytest

from flowaug.augment import encode
from flowaug.cli import main as cli_main
from flowaug.core import Tensor, make_rng
from flowaug.flows import FlowConfig, MultiScaleFlow
from flowaug.flows.layers import (
    ActNorm,
    AffineCoupling,
    AttentionStack,
    ConvStack,
    InvConv1x1,
    factor_out,
    merge,
    squeeze,
    unsqueeze,
)
from flowaug.harness import SyntheticSeismoConfig, generate_synthetic_dataset
from flowaug.harness.folds import stratified_kfold
from flowaug.harness.metrics import sign_test_p
from flowaug.training import Dequantizer, TrainConfig, fit, nll_loss

from oracles import logabsdet_of
from toy import TOY_CONFIG, gaussian_nll, quadrature_mass, two_moons

RARE = 2


def check(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


def quantized_images(rng, n: int, h: int, w: int, c: int) -> np.ndarray:
    return rng.integers(0, 256, size=(n, h, w, c)).astype(np.float64) / 256.0


def jitter(params, rng, scale: float) -> None:
    for p in params:
        p.data = p.data + rng.normal(scale=scale, size=p.data.shape)


# -- shared fixtures ---------------------------------------------------------


@pytest.fixture(scope="module")
def toy_run():
    """One two-moons flow, measured before and after training, plus an
    identically seeded twin used to check that the loss curve is
    deterministic. Shared by criteria 3 and 7."""
    start = time.monotonic()
    data = two_moons(512, seed=7)
    config = TrainConfig(epochs=50, batch_size=64, warmup_steps=25, max_lr=1e-2, seed=13)

    model = MultiScaleFlow(TOY_CONFIG, (1, 1, 2), seed=11)
    model.initialize(data[:128])
    mass_before = quadrature_mass(model)
    history = fit(model, data, config)
    final_nll = -float(model.log_prob(Tensor(data)).data.mean())
    mass_after = quadrature_mass(model)

    twin = MultiScaleFlow(TOY_CONFIG, (1, 1, 2), seed=11)
    twin.initialize(data[:128])
    twin_history = fit(twin, data, config)

    return SimpleNamespace(
        mass_before=mass_before,
        mass_after=mass_after,
        final_nll=final_nll,
        baseline_nll=gaussian_nll(data),
        history=history,
        twin_history=twin_history,
        elapsed=time.monotonic() - start,
    )


@pytest.fixture(scope="module")
def crossval_run(tmp_path_factory):
    """One full `crossval --k 10 --augment 250` run at library defaults,
    shared by criteria 8 and 9."""
    out = tmp_path_factory.mktemp("crossval")
    start = time.monotonic()
    rc = cli_main(["crossval", "--k", "10", "--augment", "250", "--seed", "0", "--out", str(out)])
    elapsed = time.monotonic() - start

    with open(out / "metrics.csv", newline="") as fh:
        metrics = list(csv.DictReader(fh))
    with open(out / "provenance.csv", newline="") as fh:
        provenance = list(csv.DictReader(fh))
    summary = {}
    with open(out / "summary.csv", newline="") as fh:
        for row in csv.reader(fh):
            if len(row) == 2:
                summary[row[0]] = float(row[1])
    return SimpleNamespace(
        rc=rc, out=out, elapsed=elapsed, metrics=metrics, provenance=provenance, summary=summary
    )


@pytest.fixture(scope="module")
def sweep_run(tmp_path_factory):
    """One full `sweep` command over the pinned sizes with 10 runs per size.

    The dataset and flow are size-reduced (16x16 images, 600 samples, 16
    filters) to keep 50 flow-plus-classifier trainings inside the file's CPU
    budget; the sweep logic, artifact formats, and recommendation rule are
    the ones under test and do not depend on image size.
    """
    out = tmp_path_factory.mktemp("sweep")
    start = time.monotonic()
    rc = cli_main(
        [
            "sweep",
            "--sizes", "0,100,250,500,1000",
            "--runs", "10",
            "--seed", "1",
            "--set", "data.size=16",
            "--set", "data.total=600",
            "--set", "model.filters=16",
            "--set", "train.epochs=30",
            "--set", "train.batch_size=16",
            "--set", "train.warmup_steps=20",
            "--out", str(out),
        ]
    )
    elapsed = time.monotonic() - start
    with open(out / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    recommendation = (out / "recommendation.txt").read_text()
    return SimpleNamespace(rc=rc, out=out, elapsed=elapsed, rows=rows, recommendation=recommendation)


# -- criteria ----------------------------------------------------------------


def test_criterion_01_invertibility_suite():
    start = time.monotonic()
    rng = make_rng(101)
    shape = (1, 8, 8, 4)
    trips = 100
    worst: dict[str, float] = {}

    actnorm = ActNorm("an", 4)
    actnorm.initialize(rng.normal(size=(16, 8, 8, 4)))
    invconv = InvConv1x1("ic", 4, make_rng(102))
    coupling_conv = AffineCoupling("cc", 4, ConvStack("cc/net", 2, 4, filters=8, rng=make_rng(103)))
    jitter(coupling_conv.parameters(), rng, 0.1)
    coupling_attn = AffineCoupling(
        "ca", 4, AttentionStack("ca/net", 2, 4, filters=8, rng=make_rng(104), heads=2)
    )
    jitter(coupling_attn.parameters(), rng, 0.1)

    for name, layer in (
        ("actnorm", actnorm),
        ("invconv", invconv),
        ("coupling-conv", coupling_conv),
        ("coupling-attn", coupling_attn),
    ):
        err = 0.0
        for _ in range(trips):
            x = rng.normal(size=shape)
            y, _ = layer.forward(Tensor(x))
            err = max(err, float(np.abs(layer.inverse(y.data) - x).max()))
        worst[name] = err

    err = 0.0
    for _ in range(trips):
        x = rng.normal(size=shape)
        err = max(err, float(np.abs(unsqueeze(squeeze(Tensor(x))).data - x).max()))
    worst["squeeze"] = err

    err = 0.0
    for _ in range(trips):
        x = rng.normal(size=shape)
        kept, emitted = factor_out(Tensor(x))
        err = max(err, float(np.abs(merge(kept.data, emitted.data) - x).max()))
    worst["factor-out"] = err

    model = MultiScaleFlow(FlowConfig(), (8, 8, 4), seed=105)
    fit(
        model,
        quantized_images(rng, 64, 8, 8, 4),
        TrainConfig(epochs=2, batch_size=16, warmup_steps=4, max_lr=1e-3, seed=106),
        dequantizer=Dequantizer(),
    )
    err = 0.0
    for _ in range(trips):
        x = rng.normal(size=shape)
        latent, _ = model.forward(Tensor(x))
        err = max(err, float(np.abs(model.inverse(latent) - x).max()))
    worst["model"] = err

    elapsed = time.monotonic() - start
    layer_ok = all(v < 1e-6 for k, v in worst.items() if k != "model")
    ok = layer_ok and worst["model"] < 1e-5 and elapsed < 60
    detail = (
        ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
        + f" ({trips} round-trips each, {elapsed:.1f}s)"
    )
    check(1, ok, detail)


def test_criterion_02_logdet_exactness():
    start = time.monotonic()
    rng = make_rng(201)
    shape = (1, 4, 4, 4)
    gaps: dict[str, float] = {}

    def layer_gap(layer) -> float:
        x = rng.normal(size=shape)

        def f(v):
            y, _ = layer.forward(Tensor(v))
            return y.data

        _, analytic = layer.forward(Tensor(x))
        return abs(float(analytic.data[0]) - logabsdet_of(f, x))

    actnorm = ActNorm("an", 4)
    actnorm.initialize(rng.normal(size=(16, 4, 4, 4)))
    gaps["actnorm"] = layer_gap(actnorm)
    gaps["invconv"] = layer_gap(InvConv1x1("ic", 4, make_rng(202)))

    coupling_conv = AffineCoupling("cc", 4, ConvStack("cc/net", 2, 4, filters=8, rng=make_rng(203)))
    jitter(coupling_conv.parameters(), rng, 0.1)
    gaps["coupling-conv"] = layer_gap(coupling_conv)

    coupling_attn = AffineCoupling(
        "ca", 4, AttentionStack("ca/net", 2, 4, filters=8, rng=make_rng(204), heads=2)
    )
    jitter(coupling_attn.parameters(), rng, 0.1)
    gaps["coupling-attn"] = layer_gap(coupling_attn)

    x = rng.normal(size=shape)
    gaps["squeeze"] = abs(0.0 - logabsdet_of(lambda v: squeeze(Tensor(v)).data, x))

    def split_flat(v):
        kept, emitted = factor_out(Tensor(v))
        return np.concatenate([kept.data.ravel(), emitted.data.ravel()])

    gaps["factor-out"] = abs(0.0 - logabsdet_of(split_flat, x))

    model = MultiScaleFlow(
        FlowConfig(levels=1, steps_per_level=2, filters=8, attention="none"), (8, 8, 1), seed=205
    )
    model.initialize(rng.normal(size=(8, 8, 8, 1)))
    x = rng.normal(size=(1, 8, 8, 1))

    def model_flat(v):
        latent, _ = model.forward(Tensor(v))
        return latent.to_flat()

    _, analytic = model.forward(Tensor(x))
    gaps["model-8x8x1"] = abs(float(analytic.data[0]) - logabsdet_of(model_flat, x))

    elapsed = time.monotonic() - start
    ok = all(v < 1e-4 for v in gaps.values()) and elapsed < 120
    check(2, ok, ", ".join(f"{k}={v:.2e}" for k, v in gaps.items()) + f" ({elapsed:.1f}s)")


def test_criterion_03_normalization(toy_run):
    ok = abs(toy_run.mass_before - 1.0) <= 0.01 and abs(toy_run.mass_after - 1.0) <= 0.01
    check(
        3,
        ok,
        f"quadrature mass over [-4,4]^2: before={toy_run.mass_before:.4f}, "
        f"after={toy_run.mass_after:.4f} (want 1.00 +- 0.01)",
    )


def test_criterion_04_gradient_correctness():
    rng = make_rng(401)
    batch = rng.uniform(-1.5, 1.5, size=(4, 4, 4, 2))
    eps = 1e-6

    conv_model = MultiScaleFlow(
        FlowConfig(levels=1, steps_per_level=2, filters=8, attention="none"), (4, 4, 2), seed=402
    )
    attn_model = MultiScaleFlow(
        FlowConfig(levels=1, steps_per_level=2, filters=8, attention="last", attention_heads=4),
        (4, 4, 2),
        seed=403,
    )
    for model in (conv_model, attn_model):
        model.initialize(batch)
        jitter(model.parameters(), rng, 0.02)

    def loss_value(model) -> float:
        loss, _ = nll_loss(model, Tensor(batch))
        return float(loss.item())

    def analytic_grads(model) -> None:
        for p in model.parameters():
            p.grad = None
        loss, _ = nll_loss(model, Tensor(batch))
        loss.backward()

    kinds = {
        "actnorm": (conv_model, "/actnorm/"),
        "invconv": (conv_model, "/invconv/"),
        "coupling-conv": (conv_model, "/coupling/"),
        "coupling-attn": (attn_model, "/coupling/"),
    }
    worst: dict[str, float] = {}
    counts = {}
    for kind, (model, tag) in kinds.items():
        analytic_grads(model)
        params = [p for p in model.parameters() if tag in p.name]
        slots = [(p, i) for p in params for i in range(p.data.size)]
        pick = rng.choice(len(slots), size=10, replace=False)
        rel_max = 0.0
        for s in pick:
            p, i = slots[int(s)]
            assert p.data.flags["C_CONTIGUOUS"]
            flat = p.data.reshape(-1)
            saved = flat[i]
            flat[i] = saved + eps
            up = loss_value(model)
            flat[i] = saved - eps
            down = loss_value(model)
            flat[i] = saved
            fd = (up - down) / (2.0 * eps)
            an = float(p.grad.reshape(-1)[i])
            rel_max = max(rel_max, abs(fd - an) / max(abs(fd), abs(an), 1e-4))
        worst[kind] = rel_max
        counts[kind] = len(pick)

    ok = all(v < 1e-3 for v in worst.values()) and all(n >= 10 for n in counts.values())
    check(4, ok, ", ".join(f"{k}={v:.2e} (n=10)" for k, v in worst.items()))


def test_criterion_05_zero_init_identity():
    rng = make_rng(501)
    model = MultiScaleFlow(FlowConfig(), (8, 8, 4), seed=502, identity_init=True)
    x = rng.normal(size=(4, 8, 8, 4))
    latent, logdet = model.forward(Tensor(x))
    flat = latent.to_flat()

    logdet_zero = np.array_equal(logdet.data, np.zeros(4))
    rearrangement = all(
        np.array_equal(np.sort(flat[i]), np.sort(x[i].ravel())) for i in range(4)
    )
    check(
        5,
        logdet_zero and rearrangement,
        f"log-det exactly zero: {logdet_zero}; output is a rearrangement of x: {rearrangement}",
    )


def test_criterion_06_actnorm_init_statistics():
    rng = make_rng(601)
    batch = rng.normal(size=(64, 8, 8, 4)) * np.array([0.3, 2.5, 7.0, 0.9]) + np.array(
        [1.5, -4.0, 0.2, 12.0]
    )
    layer = ActNorm("an", 4)
    layer.initialize(batch)
    y, _ = layer.forward(Tensor(batch))
    means = y.data.mean(axis=(0, 1, 2))
    variances = y.data.var(axis=(0, 1, 2))
    ok = float(np.abs(means).max()) < 1e-6 and all(0.99 <= v <= 1.01 for v in variances)
    check(
        6,
        ok,
        f"per-channel |mean| max {np.abs(means).max():.2e}, "
        f"variance range [{variances.min():.4f}, {variances.max():.4f}]",
    )


def test_criterion_07_training_sanity(toy_run):
    margin = toy_run.baseline_nll - toy_run.final_nll
    deterministic = [
        (r.step, r.nll_nats, r.bits_per_dim, r.lr) for r in toy_run.history
    ] == [(r.step, r.nll_nats, r.bits_per_dim, r.lr) for r in toy_run.twin_history]
    ok = margin >= 0.5 and deterministic and toy_run.elapsed < 300
    check(
        7,
        ok,
        f"final NLL {toy_run.final_nll:.3f} vs unit-Gaussian {toy_run.baseline_nll:.3f} "
        f"(margin {margin:.3f} nats, need >= 0.5); deterministic={deterministic}; "
        f"{toy_run.elapsed:.0f}s",
    )


@pytest.mark.slow
def test_criterion_08_leakage_audit(crossval_run):
    assert crossval_run.rc == 0
    dataset = generate_synthetic_dataset(SyntheticSeismoConfig(seed=0))
    plan = stratified_kfold(dataset.labels, 10, 0)

    by_fold: dict[int, set[int]] = defaultdict(set)
    for row in crossval_run.provenance:
        by_fold[int(row["fold_id"])].add(int(row["source_a"]))
        by_fold[int(row["fold_id"])].add(int(row["source_b"]))

    total_rows = len(crossval_run.provenance)
    overlaps = {}
    sources_valid = True
    for fold_id in range(10):
        test = set(plan.test_indices(fold_id).tolist())
        train = set(plan.train_indices(fold_id).tolist())
        sources = by_fold[fold_id]
        overlaps[fold_id] = sources & test
        if not (sources <= train and all(dataset.labels[i] == RARE for i in sources)):
            sources_valid = False

    ok = (
        total_rows == 2500
        and all(inter == set() for inter in overlaps.values())
        and sources_valid
    )
    check(
        8,
        ok,
        f"{total_rows} provenance rows over 10 folds; per-fold source/test "
        f"intersections all empty: {all(i == set() for i in overlaps.values())}; "
        f"sources are rare-class training images: {sources_valid}",
    )


@pytest.mark.slow
def test_criterion_09_end_to_end_imbalance(crossval_run):
    assert crossval_run.rc == 0
    f1 = {
        (int(r["fold"]), r["arm"], r["class"]): float(r["f1"]) for r in crossval_run.metrics
    }
    deltas = np.array(
        [f1[(k, "augmented", "bad")] - f1[(k, "baseline", "bad")] for k in range(10)]
    )
    p = sign_test_p(deltas)
    macro = {
        arm: float(
            np.mean([f1[(k, arm, c)] for k in range(10) for c in ("good", "medium", "bad")])
        )
        for arm in ("baseline", "augmented")
    }
    assert math.isclose(p, crossval_run.summary["sign_test_p"], abs_tol=1e-9)

    median = float(np.median(deltas))
    ok = (
        median > 0
        and p < 0.1
        and macro["augmented"] >= macro["baseline"] - 0.01
        and crossval_run.elapsed < 7200
    )
    check(
        9,
        ok,
        f"rare-class F1 delta median {median:+.4f} (need > 0), sign test p {p:.4f} "
        f"(need < 0.1), macro F1 {macro['baseline']:.4f} -> {macro['augmented']:.4f}, "
        f"{crossval_run.elapsed:.0f}s",
    )


@pytest.mark.slow
def test_criterion_10_sweep_shape(sweep_run):
    assert sweep_run.rc == 0
    sizes = [0, 100, 250, 500, 1000]
    runs = 10

    seen = {(int(r["size"]), int(r["run"])) for r in sweep_run.rows}
    complete = seen == {(s, r) for s in sizes for r in range(runs)} and len(
        sweep_run.rows
    ) == len(sizes) * runs
    classes = ("good", "medium", "bad")
    finite = all(
        0.0 <= float(row[f"f1_{c}"]) <= 1.0 for row in sweep_run.rows for c in classes
    )

    mean_f1 = {
        s: {c: np.mean([float(r[f"f1_{c}"]) for r in sweep_run.rows if int(r["size"]) == s])
            for c in classes}
        for s in sizes
    }
    allowed = [
        s
        for s in sizes
        if all(mean_f1[s][c] >= mean_f1[0][c] - 0.01 - 1e-12 for c in ("good", "medium"))
    ]
    pool = allowed if allowed else sizes
    expected = max(pool, key=lambda s: mean_f1[s]["bad"])

    recommended = int(sweep_run.recommendation.split("=")[1])
    ok = complete and finite and recommended == expected
    check(
        10,
        ok,
        f"CSV complete ({len(sweep_run.rows)} rows = {len(sizes)} sizes x {runs} runs): "
        f"{complete}; recommendation {recommended} matches argmax-with-no-harm rule "
        f"({expected}) over allowed sizes {allowed}; {sweep_run.elapsed:.0f}s",
    )
