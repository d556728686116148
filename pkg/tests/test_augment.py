"""Latent-space encoding, interpolation, and augmentation generation."""

import numpy as np
import pytest

from flowaug.augment import (
    AugmentationSet,
    InterpolationSpec,
    encode,
    decode,
    generate_augmentations,
    interpolate,
    quantize_to_grid,
    sample,
    write_provenance,
)
from flowaug.core import make_rng
from flowaug.flows import FlowConfig, MultiScaleFlow
from flowaug.training import TrainConfig, fit

from toy import TOY_CONFIG, two_moons


@pytest.fixture(scope="module")
def toy_model():
    """A briefly trained toy flow; module-scoped to keep the suite fast."""
    model = MultiScaleFlow(TOY_CONFIG, (1, 1, 2), seed=31)
    data = two_moons(512, seed=31)
    fit(model, data, TrainConfig(epochs=6, batch_size=64, warmup_steps=8, max_lr=2e-2, seed=31))
    return model


@pytest.fixture(scope="module")
def image_model():
    """An untrained (data-dependent init only) small image flow."""
    model = MultiScaleFlow(
        FlowConfig(levels=2, steps_per_level=2, filters=8, attention="none"), (8, 8, 1), seed=32
    )
    rng = make_rng(32, "data")
    batch = rng.uniform(size=(32, 8, 8, 1))
    model.initialize(batch)
    for steps in model.levels:
        for step in steps:
            last_w = step.coupling.net.parameters()[-2]
            last_w.data = rng.normal(size=last_w.data.shape) * 0.2
    return model


class TestEncodeDecode:
    def test_round_trip_on_random_images(self, image_model):
        x = make_rng(33, "x").uniform(size=(50, 8, 8, 1))
        back = decode(image_model, encode(image_model, x))
        assert np.abs(back - x).max() < 1e-5

    def test_identity_model_encode_is_a_rearrangement(self):
        model = MultiScaleFlow(
            FlowConfig(levels=1, steps_per_level=1, filters=4, attention="none"),
            (4, 4, 1),
            seed=34,
            identity_init=True,
        )
        x = make_rng(34, "x").normal(size=(3, 4, 4, 1))
        flat = encode(model, x).to_flat()
        np.testing.assert_allclose(np.sort(flat, axis=1), np.sort(x.reshape(3, -1), axis=1))

    def test_trained_toy_latents_look_gaussian(self, toy_model):
        z = encode(toy_model, two_moons(500, seed=35)).to_flat()
        assert np.abs(z.mean(axis=0)).max() < 0.2
        assert ((z.var(axis=0) > 0.5) & (z.var(axis=0) < 1.5)).all()

    def test_encode_chunking_matches_single_pass(self, image_model):
        x = make_rng(36, "x").uniform(size=(130, 8, 8, 1))
        chunked = encode(image_model, x).to_flat()
        from flowaug.core import Tensor

        whole, _ = image_model.forward(Tensor(x))
        np.testing.assert_array_equal(chunked, whole.to_flat())


class TestSample:
    def test_temperature_zero_collapses_to_one_image(self, image_model):
        out = sample(image_model, 4, 0.0, make_rng(37, "s"))
        assert out.shape == (4, 8, 8, 1)
        for i in range(1, 4):
            np.testing.assert_array_equal(out[i], out[0])

    def test_same_seed_same_samples(self, image_model):
        a = sample(image_model, 5, 0.7, make_rng(38, "s"))
        b = sample(image_model, 5, 0.7, make_rng(38, "s"))
        np.testing.assert_array_equal(a, b)

    def test_toy_samples_match_training_moments(self, toy_model):
        data = two_moons(512, seed=31).reshape(512, 2)
        drawn = sample(toy_model, 512, 1.0, make_rng(39, "s")).reshape(512, 2)
        # bootstrap 3-sigma bands for the training mean and covariance
        rng = make_rng(39, "boot")
        means, covs = [], []
        for _ in range(200):
            pick = data[rng.integers(0, 512, size=512)]
            means.append(pick.mean(axis=0))
            covs.append(np.cov(pick.T).ravel())
        mean_sd = np.std(means, axis=0)
        cov_sd = np.std(covs, axis=0)
        assert (np.abs(drawn.mean(axis=0) - data.mean(axis=0)) < 3 * mean_sd + 0.05).all()
        assert (np.abs(np.cov(drawn.T).ravel() - np.cov(data.T).ravel()) < 3 * cov_sd + 0.1).all()


class TestInterpolate:
    def test_t_near_zero_reproduces_first_endpoint(self, toy_model):
        x = two_moons(2, seed=40)
        out = interpolate(toy_model, x[0], x[1], t=1e-6)
        assert np.abs(out - x[0]).max() < 1e-4

    def test_identity_model_linear_midpoint_is_pixel_average(self):
        model = MultiScaleFlow(
            FlowConfig(levels=1, steps_per_level=1, filters=4, attention="none"),
            (4, 4, 1),
            seed=41,
            identity_init=True,
        )
        rng = make_rng(41, "x")
        a, b = rng.normal(size=(4, 4, 1)), rng.normal(size=(4, 4, 1))
        out = interpolate(model, a, b, t=0.5)
        np.testing.assert_allclose(out, (a + b) / 2.0, atol=1e-10)

    def test_midpoint_differs_from_both_endpoints(self, toy_model):
        x = two_moons(10, seed=42)
        out = interpolate(toy_model, x[0], x[5], t=0.5)
        assert np.abs(out - x[0]).mean() >= 1e-3
        assert np.abs(out - x[5]).mean() >= 1e-3

    def test_t_outside_open_interval_rejected(self, toy_model):
        x = two_moons(2, seed=43)
        for t in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(ValueError, match="inside"):
                interpolate(toy_model, x[0], x[1], t=t)

    def test_continuity_in_t(self, toy_model):
        x = two_moons(4, seed=44)
        prev = None
        for t in np.arange(0.2, 0.8, 1e-3):
            cur = interpolate(toy_model, x[0], x[2], float(t))
            if prev is not None:
                assert np.abs(cur - prev).max() < 0.05
            prev = cur

    def test_spherical_mode_stays_finite_and_differs_from_linear(self, toy_model):
        x = two_moons(6, seed=45)
        lin = interpolate(toy_model, x[1], x[4], 0.5, mode="linear")
        sph = interpolate(toy_model, x[1], x[4], 0.5, mode="spherical")
        assert np.isfinite(sph).all()
        assert not np.allclose(lin, sph)


class TestGenerateAugmentations:
    def test_count_zero_gives_empty_set(self, toy_model):
        out = generate_augmentations(
            toy_model, two_moons(8, seed=46), 0, InterpolationSpec(), make_rng(46, "g")
        )
        assert out.images.shape == (0, 1, 1, 2)
        assert out.provenance == []

    def test_exact_count_with_full_provenance(self, toy_model):
        out = generate_augmentations(
            toy_model, two_moons(9, seed=47), 25, InterpolationSpec(), make_rng(47, "g"),
            fold_id=3, grid=None,
        )
        assert out.images.shape[0] == 25
        assert len(out.provenance) == 25
        for p in out.provenance:
            assert 0 <= p.source_a < 9 and 0 <= p.source_b < 9
            assert p.source_a != p.source_b
            assert 0.2 < p.t < 0.8
            assert p.fold_id == 3

    def test_no_duplicate_pair_t_triples(self, toy_model):
        out = generate_augmentations(
            toy_model, two_moons(50, seed=48), 1000, InterpolationSpec(), make_rng(48, "g"),
            grid=None,
        )
        triples = {(p.source_a, p.source_b, p.t) for p in out.provenance}
        assert len(triples) == 1000
        assert all(0.0 < p.t < 1.0 for p in out.provenance)

    def test_pairs_within_round_drawn_without_replacement(self, toy_model):
        sources = two_moons(10, seed=49)
        out = generate_augmentations(
            toy_model, sources, 5, InterpolationSpec(), make_rng(49, "g"), grid=None
        )
        used = [i for p in out.provenance[:5] for i in (p.source_a, p.source_b)]
        assert len(set(used)) == len(used)

    def test_deterministic_given_seed(self, toy_model):
        sources = two_moons(12, seed=50)
        a = generate_augmentations(toy_model, sources, 30, InterpolationSpec(), make_rng(50, "g"))
        b = generate_augmentations(toy_model, sources, 30, InterpolationSpec(), make_rng(50, "g"))
        np.testing.assert_array_equal(a.images, b.images)
        assert a.provenance == b.provenance

    def test_custom_source_ids_recorded(self, toy_model):
        sources = two_moons(6, seed=51)
        ids = np.array([100, 200, 300, 400, 500, 600])
        out = generate_augmentations(
            toy_model, sources, 8, InterpolationSpec(), make_rng(51, "g"), source_ids=ids
        )
        for p in out.provenance:
            assert p.source_a in ids and p.source_b in ids

    def test_single_source_rejected(self, toy_model):
        with pytest.raises(ValueError, match="at least 2"):
            generate_augmentations(
                toy_model, two_moons(2, seed=52)[:1], 4, InterpolationSpec(), make_rng(52, "g")
            )

    def test_grid_quantization_applied(self, image_model):
        rng = make_rng(53, "x")
        sources = quantize_to_grid(rng.uniform(size=(8, 8, 8, 1)), 1.0 / 256.0)
        out = generate_augmentations(
            image_model, sources, 6, InterpolationSpec(), make_rng(53, "g")
        )
        ticks = out.images * 256.0
        np.testing.assert_allclose(ticks, np.round(ticks), atol=1e-9)
        assert out.images.min() >= 0.0 and out.images.max() <= 255.0 / 256.0

    def test_provenance_csv_format(self, tmp_path, toy_model):
        out = generate_augmentations(
            toy_model, two_moons(6, seed=54), 4, InterpolationSpec(), make_rng(54, "g"), fold_id=1
        )
        path = tmp_path / "prov.csv"
        write_provenance(path, out)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "source_a,source_b,t,fold_id"
        assert len(rows) == 5
        assert rows[1].endswith(",1")


class TestInterpolationSpec:
    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError, match="mode"):
            InterpolationSpec(mode="cubic").validate()

    def test_t_range_must_be_inside_unit_interval(self):
        for lo, hi in ((0.0, 0.5), (0.5, 1.0), (0.6, 0.4)):
            with pytest.raises(ValueError, match="open interval"):
                InterpolationSpec(t_low=lo, t_high=hi).validate()
