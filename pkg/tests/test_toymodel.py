import math

import numpy as np
import pytest

from evifuse.errors import DimensionError, NumericalError
from evifuse.fusion import FusionStrategy
from evifuse.loss import l_acc_arrays
from evifuse.toymodel import (
    EvidenceHead,
    MultiViewDataset,
    PipelineConfig,
    SyntheticConfig,
    forward,
    forward_batch,
    generate_dataset,
    infer,
    init_pipeline,
    softplus,
    train,
    train_test_split,
)

CMAM = FusionStrategy.CMAM
AVG = FusionStrategy.AVERAGE_EVIDENCE


@pytest.fixture(scope="module")
def default_run():
    ds = generate_dataset(SyntheticConfig(seed=0))
    tr, te = train_test_split(ds, 0.3, 0)
    res = train(PipelineConfig(seed=0), tr)
    return tr, te, res, infer(res.pipeline, te.views, (CMAM, AVG))


class TestGenerator:
    def test_deterministic(self):
        a = generate_dataset(SyntheticConfig(seed=5))
        b = generate_dataset(SyntheticConfig(seed=5))
        assert a.identical_to(b)
        assert not a.identical_to(generate_dataset(SyntheticConfig(seed=6)))

    def test_flagged_count(self):
        ds = generate_dataset(SyntheticConfig(conflict_rate=0.3, samples_per_class=137))
        n = len(ds)
        counts = np.bincount(ds.conflict_view[ds.conflicting], minlength=2)
        assert counts.tolist() == [math.floor(0.3 * n)] * 2

    def test_single_view_rate(self):
        ds = generate_dataset(SyntheticConfig(conflict_rate=(0.0, 0.3)))
        assert ds.conflicting.sum() == math.floor(0.3 * len(ds))
        assert set(ds.conflict_view[ds.conflicting]) == {1}

    def test_noise_free_clean_views_sit_on_means(self):
        ds = generate_dataset(SyntheticConfig(conflict_rate=0.0, noise_sigma=0.0))
        a, b = ds.views
        np.testing.assert_array_equal(a, 2.0 * np.eye(5, 8)[ds.labels])
        assert not ds.conflicting.any()
        # view B cannot tell the NREM stages apart
        assert np.array_equal(b[ds.labels == 1][0], b[ds.labels == 3][0])

    @pytest.mark.parametrize(
        "kw", [{"conflict_rate": 1.5}, {"noise_sigma": -1}, {"conflict_rate": (0.6, 0.6)}, {"n_features": 3}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SyntheticConfig(**kw)

    def test_split(self):
        ds = generate_dataset(SyntheticConfig(samples_per_class=20))
        tr, te = train_test_split(ds, 0.3, 1)
        assert len(te) == 30 and len(tr) == 70


class TestForward:
    def test_zero_head(self):
        head = EvidenceHead(np.zeros((4, 5)), np.zeros(5))
        np.testing.assert_allclose(forward(head, np.ones(4)), np.log(2.0), atol=1e-15)

    def test_softplus_values(self):
        head = EvidenceHead(np.ones((1, 1)), np.zeros(1))
        assert forward(head, [3.0])[0] == pytest.approx(3.048587351573742, abs=1e-12)
        assert softplus(-800.0) >= 0.0
        assert 0 < softplus(-30.0) < 1e-12
        assert softplus(800.0) == 800.0

    def test_dimension_mismatch(self):
        head = EvidenceHead(np.zeros((4, 5)), np.zeros(5))
        with pytest.raises(DimensionError):
            forward(head, np.ones(3))

    def test_non_negative(self):
        rng = np.random.default_rng(0)
        head = EvidenceHead(rng.normal(0, 50, (6, 5)), rng.normal(0, 50, 5))
        assert np.all(forward_batch(head, rng.normal(0, 10, (500, 6))) >= 0)


class TestTrain:
    def test_zero_learning_rate_leaves_heads(self):
        ds = generate_dataset(SyntheticConfig(samples_per_class=10))
        cfg = PipelineConfig(learning_rate=0.0, epochs=1)
        start = init_pipeline(cfg, ds)
        res = train(cfg, ds, start)
        assert all(a.same_as(b) for a, b in zip(start.heads, res.pipeline.heads))
        assert len(res.trace) == 1

    def test_deterministic(self):
        ds = generate_dataset(SyntheticConfig(samples_per_class=30))
        cfg = PipelineConfig(epochs=5, seed=3)
        r1, r2 = train(cfg, ds), train(cfg, ds)
        assert [r.total for r in r1.trace] == [r.total for r in r2.trace]
        p1 = infer(r1.pipeline, ds.views, (CMAM,)).predictions[CMAM]
        p2 = infer(r2.pipeline, ds.views, (CMAM,)).predictions[CMAM]
        assert np.array_equal(p1, p2)

    def test_noise_free_linear_heads_separate_perfectly(self):
        ds = generate_dataset(SyntheticConfig(conflict_rate=0.0, noise_sigma=0.0, samples_per_class=40))
        res = train(PipelineConfig(epochs=30), ds)
        inf = infer(res.pipeline, ds.views, (CMAM,))
        assert np.all(inf.view_predictions()[0] == ds.labels)
        assert np.all(inf.predictions[CMAM] == ds.labels)

    def test_clean_data_regression(self):
        # Regression value for clean, moderately noisy data after 200 epochs.
        ds = generate_dataset(SyntheticConfig(conflict_rate=0.0, noise_sigma=0.5, seed=0))
        res = train(PipelineConfig(epochs=200), ds)
        acc = np.mean(infer(res.pipeline, ds.views, (CMAM,)).predictions[CMAM] == ds.labels)
        assert acc > 0.95

    def test_step_matches_finite_difference_direction(self):
        x = np.array([[0.3, -1.2, 0.8], [1.5, 0.4, -0.6]])
        ds = MultiViewDataset((x,), np.array([0, 2]), 3)
        cfg = PipelineConfig(layout="flat", learning_rate=1e-3, momentum=0.0, epochs=1, batch_size=2, init_scale=0.5)
        start = init_pipeline(cfg, ds)
        head = start.heads[0]
        step = train(cfg, ds, start).pipeline.heads[0].weights - head.weights

        def loss(w):
            return l_acc_arrays(softplus(x @ w + head.bias), ds.labels).mean()

        h = 1e-6
        fd = np.zeros_like(head.weights)
        for idx in np.ndindex(*fd.shape):
            wp, wm = head.weights.copy(), head.weights.copy()
            wp[idx] += h
            wm[idx] -= h
            fd[idx] = (loss(wp) - loss(wm)) / (2 * h)
        a, b = step.ravel(), -fd.ravel()
        cos = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
        assert 1 - cos < 1e-4

    def test_non_finite_aborts(self):
        ds = MultiViewDataset((np.full((4, 3), 1e308),), np.array([0, 1, 2, 0]), 3)
        with pytest.raises(NumericalError, match="epoch 0"), np.errstate(over="ignore", invalid="ignore"):
            train(PipelineConfig(layout="flat", init_scale=10.0, epochs=2), ds)


class TestInference:
    def test_every_opinion_sums_to_one(self, default_run):
        *_, inf = default_run
        assert np.max(np.abs(inf.view_belief.sum(-1) + inf.view_uncertainty - 1)) <= 1e-9
        for s in (CMAM, AVG):
            assert np.max(np.abs(inf.joint_belief[s].sum(-1) + inf.joint_uncertainty[s] - 1)) <= 1e-9
            assert np.all(inf.joint_belief[s] >= 0)

    def test_shapes(self, default_run):
        _, te, _, inf = default_run
        n = len(te)
        assert inf.view_belief.shape == (4, n, 5)
        assert inf.pair_conflict.shape == (n, 6)
        assert inf.pairs == ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

    def test_strategy_changes_only_fusion(self, default_run):
        _, te, res, inf = default_run
        other = infer(res.pipeline, te.views, (AVG,))
        np.testing.assert_array_equal(other.view_evidence, inf.view_evidence)
        np.testing.assert_array_equal(other.pair_conflict, inf.pair_conflict)
        np.testing.assert_array_equal(other.joint_uncertainty[AVG], inf.joint_uncertainty[AVG])

    def test_injected_conflict_raises_mean_conflict(self, default_run):
        _, te, _, inf = default_run
        mc = inf.mean_conflict
        assert mc[te.conflicting].mean() > mc[~te.conflicting].mean()

    def test_injected_conflict_raises_joint_uncertainty(self, default_run):
        _, te, _, inf = default_run
        u = inf.joint_uncertainty[CMAM]
        assert u[te.conflicting].mean() >= u[~te.conflicting].mean()

    def test_strong_agreement_lowers_uncertainty(self):
        ds = generate_dataset(SyntheticConfig(conflict_rate=0.0, noise_sigma=0.0, samples_per_class=20))
        res = train(PipelineConfig(epochs=40), ds)
        inf = infer(res.pipeline, ds.views, (CMAM,))
        agree = np.all(inf.view_predictions() == ds.labels, axis=0) & (inf.mean_conflict < 0.05)
        assert agree.sum() > 0
        assert np.all(inf.joint_uncertainty[CMAM][agree] < inf.view_uncertainty[:, agree].min(axis=0))

    def test_loss_trace_reported(self, default_run):
        _, _, res, _ = default_run
        assert len(res.trace) == PipelineConfig().epochs
        assert isinstance(res.loss_non_increasing, bool)
        assert res.trace[-1].total < res.trace[0].total
