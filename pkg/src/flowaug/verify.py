"""Fast invariant suite behind the `verify` CLI command.

Each check exercises one structural guarantee at small scale and returns
the number of assertions it made. The suite is self-contained (no files
needed beyond a temp directory) and finishes in well under a minute.
"""

from __future__ import annotations

import math
import tempfile

import numpy as np

from .core import Tensor, gradient, make_rng
from .flows import FlowConfig, MultiScaleFlow

_TINY = FlowConfig(levels=1, steps_per_level=2, filters=8, attention="none")


def _tiny_model(seed: int = 0, initialized: bool = True) -> tuple[MultiScaleFlow, np.ndarray]:
    rng = make_rng(seed, "verify", "data")
    x = np.round(rng.uniform(0.0, 1.0, (8, 8, 8, 1)) * 256) / 256
    model = MultiScaleFlow(_TINY, (8, 8, 1), seed=seed)
    if initialized:
        model.initialize(x)
    return model, x


def check_gradients() -> int:
    rng = make_rng(0, "verify", "grads")
    w = np.asarray(rng.normal(size=(4, 3)))
    x = np.asarray(rng.normal(size=(5, 4)))
    from .core import Parameter

    param = Parameter("w", w)
    loss = (Tensor(x) @ param).sigmoid().sum()
    (grad,) = gradient(loss, [param])
    checks = 0
    eps = 1e-6
    for idx in [(0, 0), (1, 2), (3, 1)]:
        bump = np.zeros_like(w)
        bump[idx] = eps
        hi = float(((Tensor(x) @ Parameter("w", w + bump)).sigmoid().sum()).item())
        lo = float(((Tensor(x) @ Parameter("w", w - bump)).sigmoid().sum()).item())
        fd = (hi - lo) / (2 * eps)
        assert abs(fd - grad[idx]) <= 1e-6 * max(1.0, abs(fd)), f"grad mismatch at {idx}"
        checks += 1
    return checks


def check_invertibility() -> int:
    model, x = _tiny_model()
    latent, _ = model.forward(Tensor(x))
    back = model.inverse(latent)
    err = float(np.abs(back - x).max())
    assert err < 1e-6, f"round-trip error {err:.3e}"
    return 1


def check_logdet() -> int:
    config = FlowConfig(levels=1, steps_per_level=1, filters=4, attention="none")
    model = MultiScaleFlow(config, (4, 4, 1), seed=1)
    rng = make_rng(1, "verify", "logdet")
    model.initialize(rng.uniform(0.2, 0.8, (8, 4, 4, 1)))
    x = rng.uniform(0.2, 0.8, (1, 4, 4, 1))
    _, logdet = model.forward(Tensor(x))
    d = x.size
    eps = 1e-5
    jacobian = np.zeros((d, d))
    flat = x.reshape(-1)
    for j in range(d):
        hi = flat.copy()
        lo = flat.copy()
        hi[j] += eps
        lo[j] -= eps
        y_hi, _ = model.forward(Tensor(hi.reshape(x.shape)))
        y_lo, _ = model.forward(Tensor(lo.reshape(x.shape)))
        jacobian[:, j] = (y_hi.to_flat()[0] - y_lo.to_flat()[0]) / (2 * eps)
    _, numeric = np.linalg.slogdet(jacobian)
    analytic = float(logdet.data[0])
    assert abs(analytic - numeric) < 1e-4, f"logdet {analytic:.6f} vs jacobian {numeric:.6f}"
    return 1


def check_identity_init() -> int:
    model = MultiScaleFlow(_TINY, (8, 8, 1), seed=2, identity_init=True)
    rng = make_rng(2, "verify", "identity")
    x = rng.uniform(0.0, 1.0, (2, 8, 8, 1))
    latent, logdet = model.forward(Tensor(x))
    assert np.array_equal(logdet.data, np.zeros(2)), "identity model logdet not exactly zero"
    flat = latent.to_flat()
    for i in range(x.shape[0]):
        assert np.array_equal(np.sort(flat[i]), np.sort(x[i].reshape(-1))), (
            "identity model output is not a rearrangement of its input"
        )
    return 2


def check_actnorm_statistics() -> int:
    model, x = _tiny_model(seed=3)
    from .flows.layers import squeeze_array

    out = squeeze_array(x)
    step = model.levels[0][0]
    y = step.actnorm.forward(Tensor(out))[0].data
    mean = float(np.abs(y.mean(axis=(0, 1, 2))).max())
    var = y.var(axis=(0, 1, 2))
    assert mean < 1e-6, f"post-init channel mean {mean:.2e}"
    assert var.min() > 0.99 and var.max() < 1.01, f"post-init channel var {var}"
    return 2


def check_checkpoint_roundtrip() -> int:
    from .io import load_checkpoint, save_checkpoint

    model, x = _tiny_model(seed=4)
    reference = model.log_prob(Tensor(x)).data.copy()
    with tempfile.TemporaryDirectory() as tmp:
        path = f"{tmp}/model.ckpt"
        save_checkpoint(path, model)
        other = MultiScaleFlow(_TINY, (8, 8, 1), seed=99)
        load_checkpoint(path, other)
        loaded = other.log_prob(Tensor(x)).data
    assert np.array_equal(reference, loaded), "checkpoint round-trip not bit-identical"
    return 1


def check_pgm_roundtrip() -> int:
    from .io import read_pgm, write_pgm

    rng = make_rng(5, "verify", "pgm")
    image = np.round(rng.uniform(0.0, 1.0, (8, 6, 1)) * 256) / 256
    with tempfile.TemporaryDirectory() as tmp:
        path = f"{tmp}/image.pgm"
        write_pgm(path, image)
        back = read_pgm(path)
    assert np.array_equal(image, back), "PGM round-trip lost pixels"
    return 1


def check_config_echo() -> int:
    from .io import RunConfig

    config = RunConfig.parse("data.size = 16\ntrain.epochs = 7\naugment.mode = linear\n")
    echoed = RunConfig.parse(config.to_text())
    assert echoed.values == config.values, "config echo is not canonical"
    return 1


def check_fold_stratification() -> int:
    from .harness import stratified_kfold

    rng = make_rng(6, "verify", "folds")
    labels = rng.choice(3, size=120, p=[0.6, 0.3, 0.1])
    plan = stratified_kfold(labels, 4, seed=0)
    all_test = np.concatenate([plan.test_indices(i) for i in range(4)])
    assert np.array_equal(np.sort(all_test), np.arange(120)), "folds do not partition the data"
    checks = 1
    for c in range(3):
        per_fold = [int((labels[plan.test_indices(i)] == c).sum()) for i in range(4)]
        assert max(per_fold) - min(per_fold) <= 1, f"class {c} uneven across folds: {per_fold}"
        checks += 1
    return checks


def check_metrics() -> int:
    from .harness import evaluate_predictions

    y_true = np.array([0, 0, 0, 1, 1, 2])
    y_pred = np.array([0, 0, 1, 1, 1, 1])
    scores = evaluate_predictions(y_true, y_pred, 3)
    assert math.isclose(scores.recall[0], 2 / 3), "recall mismatch"
    assert math.isclose(scores.precision[1], 2 / 4), "precision mismatch"
    assert scores.f1[2] == 0.0, "empty-prediction F1 should be 0"
    assert math.isclose(scores.accuracy, 4 / 6), "accuracy mismatch"
    return 4


def check_interpolation_provenance() -> int:
    from .augment import InterpolationSpec, generate_augmentations

    model, x = _tiny_model(seed=7)
    source_ids = np.arange(100, 100 + x.shape[0])
    spec = InterpolationSpec(mode="spherical")
    augmentation = generate_augmentations(
        model, x, 10, spec, make_rng(7, "verify", "augment"), source_ids=source_ids
    )
    assert augmentation.images.shape == (10, 8, 8, 1), "wrong augmentation shape"
    checks = 1
    ids = set(source_ids.tolist())
    for p in augmentation.provenance:
        assert p.source_a in ids and p.source_b in ids, "provenance outside sources"
        assert spec.t_low <= p.t <= spec.t_high, "mixing weight outside spec"
    checks += 2
    ticks = augmentation.images * 256
    assert np.abs(ticks - np.round(ticks)).max() < 1e-9, "augmentations off the pixel grid"
    return checks + 1


CHECKS = [
    ("tensor-gradients", check_gradients),
    ("flow-invertibility", check_invertibility),
    ("logdet-vs-jacobian", check_logdet),
    ("identity-init-rearrangement", check_identity_init),
    ("actnorm-init-statistics", check_actnorm_statistics),
    ("checkpoint-roundtrip", check_checkpoint_roundtrip),
    ("pgm-roundtrip", check_pgm_roundtrip),
    ("config-echo", check_config_echo),
    ("fold-stratification", check_fold_stratification),
    ("metrics-closed-form", check_metrics),
    ("interpolation-provenance", check_interpolation_provenance),
]


def run_verification(verbose: bool = False) -> tuple[int, int]:
    """Run every check; returns (failures, total assertion count)."""
    failures = 0
    total = 0
    for name, check in CHECKS:
        try:
            count = check()
            total += count
            if verbose:
                print(f"ok {name} ({count} checks)")
        except Exception as exc:
            failures += 1
            total += 1
            if verbose:
                print(f"FAIL {name}: {exc}")
    return failures, total
