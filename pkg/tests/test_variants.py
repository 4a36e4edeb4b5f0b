"""Tests for src/consistency/variants.py: plans and the composed consistency terms."""

import numpy as np
import pytest

from src.consistency.variants import (
    CutMixVariant,
    CutOutVariant,
    IctVariant,
    StdAugVariant,
    VatVariant,
    cons_cutmix,
    cons_cutout,
    cons_ict,
    cons_stdaug,
    cons_vat,
    get_variant,
)
from src.errors import ConfigError, ShapeError
from src.nn.network import build_encoder_decoder, forward
from src.perturb.affine import AffineRanges
from src.perturb.masks import batch_masks
from src.perturb.vat import VatConfig
from src.rng import stream

N_TRIALS = 100


def _pair(seed: int):
    student = build_encoder_decoder(3, 3, (8, 8), seed=seed, widths=(2, 3, 4))
    teacher = build_encoder_decoder(3, 3, (8, 8), seed=seed + 10_000, widths=(2, 3, 4))
    return student, teacher


def _weighted_sq(a, b, weights):
    per_pixel = ((a - b) ** 2).sum(axis=1)
    return (per_pixel * weights).sum() / weights.sum()


class TestComposedTerms:

    def test_cutout_matches_composition(self):
        for trial in range(N_TRIALS):
            student, teacher = _pair(trial)
            x = stream(trial, "tests", "x").uniform(size=(2, 3, 8, 8))
            masks = batch_masks("cutout", 2, 8, 8, stream(trial, "mask"))
            expected = _weighted_sq(forward(student, x * masks)[0], forward(teacher, x)[0], masks[:, 0])
            got = cons_cutout(student, teacher, x, stream(trial, "mask"))
            assert abs(got - expected) < 1e-10

    def test_cutmix_matches_composition(self):
        for trial in range(N_TRIALS):
            student, teacher = _pair(trial)
            g = stream(trial, "tests", "x")
            x_a, x_b = g.uniform(size=(2, 3, 8, 8)), g.uniform(size=(2, 3, 8, 8))
            m = batch_masks("cutmix", 2, 8, 8, stream(trial, "mask"))
            target = (1 - m) * forward(teacher, x_a)[0] + m * forward(teacher, x_b)[0]
            pred = forward(student, (1 - m) * x_a + m * x_b)[0]
            expected = ((pred - target) ** 2).sum(axis=1).mean()
            got = cons_cutmix(student, teacher, x_a, x_b, stream(trial, "mask"))
            assert abs(got - expected) < 1e-10

    def test_ict_matches_composition(self):
        for trial in range(N_TRIALS):
            student, teacher = _pair(trial)
            g = stream(trial, "tests", "x")
            x_a, x_b = g.uniform(size=(2, 3, 8, 8)), g.uniform(size=(2, 3, 8, 8))
            lam = float(g.uniform())
            target = lam * forward(teacher, x_a)[0] + (1 - lam) * forward(teacher, x_b)[0]
            pred = forward(student, lam * x_a + (1 - lam) * x_b)[0]
            expected = ((pred - target) ** 2).sum(axis=1).mean()
            got = cons_ict(student, teacher, x_a, x_b, stream(trial, "mask"), lam=lam)
            assert abs(got - expected) < 1e-10

    def test_identical_nets_on_clean_pair_is_zero(self, tiny_segnet, rng):
        x = rng.uniform(size=(2, 3, 8, 8))
        assert cons_ict(tiny_segnet, tiny_segnet, x, x, stream(0, "mask"), lam=0.3) == pytest.approx(0.0, abs=1e-20)

    def test_cutmix_of_an_image_with_itself_is_clean_term(self, tiny_segnet, rng):
        x = rng.uniform(size=(2, 3, 8, 8))
        assert cons_cutmix(tiny_segnet, tiny_segnet, x, x, stream(0, "mask")) == pytest.approx(0.0, abs=1e-20)

    def test_stdaug_identity_ranges_is_zero(self, tiny_segnet, rng):
        ranges = AffineRanges(scale_min=1.0, scale_max=1.0, rotation_deg=0.0, translate_frac=0.0, flip_prob=0.0)
        x = rng.uniform(size=(2, 3, 8, 8))
        assert cons_stdaug(tiny_segnet, tiny_segnet, x, stream(0, "mask"), ranges) == pytest.approx(0.0, abs=1e-20)

    def test_vat_non_negative(self, tiny_segnet, rng):
        x = rng.uniform(size=(2, 3, 8, 8))
        assert cons_vat(tiny_segnet, x, VatConfig(), stream(0, "vat")) >= 0.0

    def test_vat_constant_images_contribute_zero(self, tiny_segnet):
        x = np.full((2, 3, 8, 8), 0.25)
        assert cons_vat(tiny_segnet, x, VatConfig(), stream(0, "vat")) == 0.0

    def test_pair_shape_mismatch(self, tiny_segnet):
        with pytest.raises(ShapeError):
            cons_cutmix(tiny_segnet, tiny_segnet, np.zeros((2, 3, 8, 8)), np.zeros((1, 3, 8, 8)), stream(0, "mask"))


class TestPlans:

    def test_cutout_plan(self, tiny_segnet, rng):
        x = rng.uniform(size=(3, 3, 8, 8))
        plan = CutOutVariant().plan(tiny_segnet, tiny_segnet, x, stream(0, "mask"))
        assert plan.pixel_mask.shape == (3, 1, 8, 8)
        np.testing.assert_array_equal(plan.student_input, x * plan.pixel_mask)
        # the teacher saw the uncut image
        np.testing.assert_array_equal(plan.target, forward(tiny_segnet, x)[0])

    def test_cutmix_plan_pairs_reversed_batch(self, tiny_segnet, rng):
        x = rng.uniform(size=(4, 3, 8, 8))
        plan = CutMixVariant().plan(tiny_segnet, tiny_segnet, x, stream(3, "mask"))
        direct = CutMixVariant().plan_pair(tiny_segnet, x, x[::-1], stream(3, "mask"))
        np.testing.assert_array_equal(plan.student_input, direct.student_input)
        np.testing.assert_allclose(plan.target.sum(axis=1), 1.0, atol=1e-12)
        assert plan.pixel_mask is None

    def test_cutmix_confidence_follows_mask(self, tiny_segnet, rng):
        x = rng.uniform(size=(2, 3, 8, 8))
        plan = CutMixVariant().plan(tiny_segnet, tiny_segnet, x, stream(0, "mask"))
        assert plan.confidence.shape == (2, 8, 8)
        assert ((plan.confidence > 0) & (plan.confidence <= 1)).all()

    def test_ict_confidence_is_max_of_blended_target(self, tiny_segnet, rng):
        x_a, x_b = rng.uniform(size=(2, 3, 8, 8)), rng.uniform(size=(2, 3, 8, 8))
        plan = IctVariant().plan_pair(tiny_segnet, x_a, x_b, stream(0, "mask"), lam=0.25)
        pred_a, pred_b = forward(tiny_segnet, x_a)[0], forward(tiny_segnet, x_b)[0]
        blended = 0.25 * pred_a + 0.75 * pred_b
        np.testing.assert_allclose(plan.confidence, blended.max(axis=1))
        blend_of_maxes = 0.25 * pred_a.max(axis=1) + 0.75 * pred_b.max(axis=1)
        assert (plan.confidence <= blend_of_maxes + 1e-12).all()

    def test_stdaug_valid_region(self, tiny_segnet, rng):
        x = rng.uniform(size=(2, 3, 8, 8))
        plan = StdAugVariant().plan(tiny_segnet, tiny_segnet, x, stream(0, "mask"))
        assert plan.pixel_mask.shape == (2, 8, 8)
        assert plan.pixel_mask.sum() > 0

    def test_vat_plan_uses_student_target(self, tiny_segnet, rng):
        x = rng.uniform(size=(2, 3, 8, 8))
        other = build_encoder_decoder(3, 3, (8, 8), seed=9, widths=(4, 6, 8))
        plan = VatVariant().plan(tiny_segnet, other, x, stream(0, "vat"))
        np.testing.assert_array_equal(plan.target, forward(tiny_segnet, x)[0])
        np.testing.assert_array_equal(plan.confidence, forward(other, x)[0].max(axis=1))
        assert plan.skipped == 0


class TestRegistry:

    @pytest.mark.parametrize("name", ["cutout", "cutmix", "stdaug", "ict", "vat"])
    def test_known_methods(self, name):
        assert get_variant(name).name == name

    def test_mask_based_flags(self):
        assert get_variant("cutout").mask_based and get_variant("cutmix").mask_based
        assert not get_variant("ict").mask_based

    def test_options_reach_constructor(self):
        assert get_variant("ict", dist="beta", beta_a=0.5).beta_a == 0.5

    def test_unknown(self):
        with pytest.raises(ConfigError) as exc:
            get_variant("mixup")
        assert exc.value.key == "method"
