"""Tests for src/consistency/trainer.py: the mean-teacher step and loop."""

import numpy as np
import pytest
from pydantic import ValidationError

from src.artifacts.tables import read_csv
from src.consistency.trainer import (
    STEP_CSV_HEADER,
    TrainConfig,
    default_cons_weight,
    init_trainer,
    make_variant,
    run_training,
    train_step,
)
from src.consistency.variants import CutMixVariant
from src.errors import DivergenceError
from src.nn.network import build_encoder_decoder
from src.nn.optim import SgdState
from src.perturb.vat import VatConfig
from src.rng import stream


def _batch(seed: int, n: int = 2):
    g = stream(seed, "tests", "batch")
    x = g.uniform(size=(n, 3, 8, 8))
    y = (x[:, 0] > 0.5).astype(np.int64)
    return x, y


def _segnet(seed: int = 0):
    return build_encoder_decoder(3, 2, (8, 8), seed=seed, widths=(4, 6, 8))


class TestTrainConfig:

    def test_per_method_default_weight(self):
        assert TrainConfig(method="vat").cons_weight == default_cons_weight("vat")
        assert TrainConfig(method="baseline").cons_weight == 0.0

    def test_explicit_weight_kept(self):
        assert TrainConfig(method="cutmix", cons_weight=3.0).cons_weight == 3.0

    def test_rejects_unknown_fields(self):
        with pytest.raises(ValidationError):
            TrainConfig(learning_rate=0.1)

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValidationError):
            TrainConfig(conf_threshold=1.5)

    def test_make_variant_passes_options(self):
        variant = make_variant(TrainConfig(method="vat", vat=VatConfig(eps_scale=3.0)))
        assert variant.cfg.eps_scale == 3.0


class TestInitTrainer:

    def test_teacher_starts_as_copy(self):
        state = init_trainer(_segnet(), TrainConfig())
        assert state.teacher.params_digest() == state.student.params_digest()
        assert state.teacher.params is not state.student.params

    def test_optimizer_choice(self):
        state = init_trainer(_segnet(), TrainConfig(optimizer="sgd", lr=0.05))
        assert isinstance(state.opt, SgdState)


class TestTrainStep:

    def test_baseline_has_no_consistency(self):
        cfg = TrainConfig(method="baseline")
        state = init_trainer(_segnet(), cfg)
        report = train_step(state, _batch(0), _batch(1)[0], cfg)
        assert report.l_cons == 0.0
        assert report.total == pytest.approx(report.l_sup)
        assert state.step == 1

    def test_teacher_moves_only_by_ema(self):
        cfg = TrainConfig(method="cutmix", ema_alpha=0.9, cons_weight=5.0)
        state = init_trainer(_segnet(), cfg)
        # make the teacher differ from the student first
        train_step(state, _batch(0), _batch(1)[0], cfg)
        before = state.teacher.params.copy()
        train_step(state, _batch(2), _batch(3)[0], cfg)
        expected = 0.9 * before + 0.1 * state.student.params
        np.testing.assert_allclose(state.teacher.params, expected, rtol=0, atol=1e-12)

    def test_total_is_modulated_sum(self):
        cfg = TrainConfig(method="cutmix", conf_threshold=0.5, cons_weight=2.0)
        state = init_trainer(_segnet(), cfg)
        report = train_step(state, _batch(0), _batch(1, n=4)[0], cfg)
        assert 0.0 <= report.conf_factor <= 1.0
        assert report.total == pytest.approx(report.l_sup + 2.0 * report.conf_factor * report.l_cons)

    def test_conf_factor_matches_plan(self):
        cfg = TrainConfig(method="cutmix", conf_threshold=0.5, seed=4)
        x_u = _batch(1, n=4)[0]
        state = init_trainer(_segnet(), cfg)
        plan = CutMixVariant().plan(state.student, state.teacher, x_u, stream(4, "mask"))
        report = train_step(state, _batch(0), x_u, cfg)
        assert report.conf_factor == float((plan.confidence > 0.5).mean())

    def test_unmodulated_methods(self):
        cfg = TrainConfig(method="ict", modulate_all=False, conf_threshold=0.99)
        state = init_trainer(_segnet(), cfg)
        assert train_step(state, _batch(0), _batch(1)[0], cfg).conf_factor == 1.0

    def test_mask_mode_runs(self):
        cfg = TrainConfig(method="cutout", conf_mode="mask", conf_threshold=0.999)
        state = init_trainer(_segnet(), cfg)
        report = train_step(state, _batch(0), _batch(1)[0], cfg)
        assert np.isfinite(report.total)

    @pytest.mark.parametrize("method", ["cutout", "cutmix", "stdaug", "ict", "vat"])
    def test_every_method_steps(self, method):
        cfg = TrainConfig(method=method)
        state = init_trainer(_segnet(), cfg)
        digest = state.student.params_digest()
        report = train_step(state, _batch(0), _batch(1)[0], cfg)
        assert np.isfinite(report.total)
        assert state.student.params_digest() != digest

    def test_non_finite_input_diverges(self):
        cfg = TrainConfig(method="baseline")
        state = init_trainer(_segnet(), cfg)
        x, y = _batch(0)
        x[0, 0, 0, 0] = np.nan
        with pytest.raises(DivergenceError):
            train_step(state, (x, y), None, cfg)


class TestRunTraining:

    def _samplers(self):
        def sup(g):
            return _batch(int(g.integers(1_000_000)))

        def unsup(g):
            return _batch(int(g.integers(1_000_000)))[0]

        return sup, unsup

    def test_writes_step_csv(self, tmp_path):
        cfg = TrainConfig(method="cutmix", steps=3)
        sup, unsup = self._samplers()
        reports = run_training(init_trainer(_segnet(), cfg), sup, unsup, cfg, csv_path=tmp_path / "steps.csv")
        rows = read_csv(tmp_path / "steps.csv")
        assert len(reports) == 3 and len(rows) == 3
        assert tuple(rows[0]) == STEP_CSV_HEADER
        assert [int(r["step"]) for r in rows] == [1, 2, 3]

    def test_reproducible(self):
        cfg = TrainConfig(method="cutmix", steps=3, seed=2)
        sup, unsup = self._samplers()
        a, b = init_trainer(_segnet(), cfg), init_trainer(_segnet(), cfg)
        run_training(a, sup, unsup, cfg)
        run_training(b, sup, unsup, cfg)
        assert a.student.params_digest() == b.student.params_digest()
        assert a.teacher.params_digest() == b.teacher.params_digest()

    def test_fits_a_fixed_batch(self):
        cfg = TrainConfig(method="baseline", steps=40, lr=1e-2)
        batch = _batch(0, n=4)
        reports = run_training(init_trainer(_segnet(), cfg), lambda g: batch, None, cfg)
        assert reports[-1].l_sup < reports[0].l_sup

    def test_zero_weight_cutmix_matches_baseline(self):
        sup, unsup = self._samplers()
        runs = {}
        for method in ("baseline", "cutmix"):
            cfg = TrainConfig(method=method, cons_weight=0.0, steps=3, seed=4)
            state = init_trainer(_segnet(), cfg)
            runs[method] = (state, run_training(state, sup, unsup, cfg))
        (base, base_reports), (cut, cut_reports) = runs["baseline"], runs["cutmix"]
        assert cut.student.params_digest() == base.student.params_digest()
        assert cut.teacher.params_digest() == base.teacher.params_digest()
        assert [(r.l_sup, r.total) for r in cut_reports] == [(r.l_sup, r.total) for r in base_reports]
