import math

import numpy as np
import pytest

from adabins.errors import ConfigError, DomainError
from adabins.metrics import (
    EvalProtocol,
    MetricReport,
    bin_histogram_export,
    compute_metrics,
    evaluate,
    normals_from_depth,
    predict_depth,
    total_variation,
    upsample_to,
)
from adabins.numerics import Tensor
from adabins.synthdata import SceneSample


def loop_metrics(pred, gt, mask):
    """Every metric accumulated pixel by pixel in plain Python floats."""
    n = d1 = d2 = d3 = 0
    rel = sq = l10 = sqrel = lg = 0.0
    for p, t, m in zip(pred.ravel().tolist(), gt.ravel().tolist(), mask.ravel().tolist()):
        if not m:
            continue
        n += 1
        r = max(t / p, p / t)
        d1 += r < 1.25
        d2 += r < 1.25**2
        d3 += r < 1.25**3
        rel += abs(t - p) / t
        sq += (t - p) ** 2
        l10 += abs(math.log10(t) - math.log10(p))
        sqrel += (t - p) ** 2 / t
        lg += (math.log(t) - math.log(p)) ** 2
    return dict(
        delta1=d1 / n, delta2=d2 / n, delta3=d3 / n, rel=rel / n, rms=math.sqrt(sq / n),
        log10=l10 / n, sq_rel=sqrel / n, rmse_log=math.sqrt(lg / n),
    )


class TestComputeMetrics:
    def test_identity(self, rng):
        gt = rng.uniform(0.5, 9, (6, 6))
        r = compute_metrics(gt, gt)
        assert (r.delta1, r.delta2, r.delta3) == (1, 1, 1)
        assert r.rel == r.rms == r.log10 == r.sq_rel == r.rmse_log == 0

    def test_uniform_scale(self, rng):
        gt = rng.uniform(0.5, 9, (6, 6))
        r = compute_metrics(1.2 * gt, gt)
        assert r.delta1 == 1
        assert abs(r.rel - 0.2) <= 1e-9
        assert abs(r.rmse_log - math.log(1.2)) <= 1e-9
        assert r.log10 == pytest.approx(math.log10(1.2), abs=1e-12)

    def test_thresholds_are_strict(self):
        gt = np.array([1.0, 1.0])
        assert compute_metrics(np.array([1.25, 1.0]), gt).delta1 == 0.5

    @pytest.mark.parametrize("seed", range(100))
    def test_against_loop(self, seed):
        rng = np.random.default_rng(seed)
        gt, pred = rng.uniform(0.1, 10, (8, 8)), rng.uniform(0.1, 10, (8, 8))
        mask = rng.random((8, 8)) > 0.2
        got = compute_metrics(pred, gt, mask).as_dict()
        for k, v in loop_metrics(pred, gt, mask).items():
            assert got[k] == pytest.approx(v, abs=1e-6), k

    def test_nan_gt_default_mask(self):
        gt = np.array([[1.0, np.nan], [2.0, 3.0]])
        assert compute_metrics(np.array([[1.0, 5.0], [2.0, 3.0]]), gt).n_pixels == 3

    def test_empty_mask(self):
        with pytest.raises(DomainError):
            compute_metrics(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2), bool))

    def test_report_mean_and_text(self):
        a = compute_metrics(np.ones(4), np.ones(4))
        b = compute_metrics(1.2 * np.ones(4), np.ones(4))
        m = MetricReport.mean([a, b])
        assert m.rel == pytest.approx(0.1) and m.n_pixels == 8
        assert "rel=" in m.to_key_values() and "delta1" in m.to_table()


class TestProtocol:
    def test_full_crop_is_no_crop(self):
        assert EvalProtocol(crop=(0, 4, 0, 6)).crop_mask((4, 6)).all()
        assert EvalProtocol().crop_mask((4, 6)).all()

    def test_fraction_crop(self):
        m = EvalProtocol(crop_frac=(0.25, 0.75, 0.5, 1.0)).crop_mask((8, 8))
        assert m.sum() == 16 and m[2:6, 4:].all()

    def test_crop_outside(self):
        with pytest.raises(ConfigError):
            EvalProtocol(crop=(0, 9, 0, 4)).crop_mask((8, 8))

    def test_upsample_constant(self):
        np.testing.assert_allclose(upsample_to(np.full((4, 4), 3.0), (8, 8)), 3.0)


class TestEvaluate:
    def test_symmetric_input_equivariant_model(self, rng):
        class PerPixel:
            d_min, d_max = 0.1, 10.0

            def forward(self, images):
                return (Tensor(1.0 + images.sum(axis=1, keepdims=True)), None, None)

        img = rng.random((3, 8, 8))
        sym = np.ascontiguousarray(0.5 * (img + img[..., ::-1]))
        np.testing.assert_array_equal(predict_depth(PerPixel(), sym[None], True), predict_depth(PerPixel(), sym[None], False))

    def test_symmetric_input_gives_symmetric_average(self, trained_toy):
        model, corpus, _ = trained_toy
        img = corpus.train[0].image
        sym = np.ascontiguousarray(0.5 * (img + img[..., ::-1]))
        averaged = predict_depth(model, sym[None], True)[0]
        plain = predict_depth(model, sym[None], False)[0]
        np.testing.assert_allclose(averaged, averaged[:, ::-1], rtol=1e-6)
        np.testing.assert_allclose(averaged, 0.5 * (plain + plain[:, ::-1]), rtol=1e-5)

    def test_mirror_rms_bound(self, trained_toy):
        model, corpus, _ = trained_toy
        for s in corpus.samples:
            straight = predict_depth(model, s.image[None], False)[0]
            flipped = predict_depth(model, np.ascontiguousarray(s.image[None, ..., ::-1]), False)[0][..., ::-1]
            averaged = predict_depth(model, s.image[None], True)[0]
            rms = [compute_metrics(p, s.depth, s.mask).rms for p in (straight, flipped, averaged)]
            assert rms[2] <= max(rms[:2]) + 1e-9

    def test_mirror_on_and_off_both_report(self, trained_toy):
        model, corpus, _ = trained_toy
        on = evaluate(model, corpus.val, EvalProtocol(mirror_average=True))
        off = evaluate(model, corpus.val, EvalProtocol(mirror_average=False))
        assert on.n_pixels == off.n_pixels > 0

    def test_full_crop_same_as_none(self, trained_toy):
        model, corpus, _ = trained_toy
        H, W = corpus.val[0].depth.shape
        assert evaluate(model, corpus.val, EvalProtocol(crop=(0, H, 0, W))) == evaluate(model, corpus.val, EvalProtocol())

    def test_mean_of_per_image_reports(self, trained_toy):
        model, corpus, _ = trained_toy
        proto = EvalProtocol(mirror_average=False)
        per_image = [evaluate(model, [s], proto) for s in corpus.samples]
        assert evaluate(model, corpus.samples, proto, batch_size=3).rel == pytest.approx(np.mean([r.rel for r in per_image]))

    def test_predictions_clamped(self, trained_toy):
        model, _, _ = trained_toy
        gt = np.full((32, 32), 5.0, dtype=np.float32)
        s = SceneSample(np.zeros((3, 32, 32), np.float32), gt, np.ones_like(gt, bool), "closeup")
        assert evaluate(model, [s], EvalProtocol(clamp_range=(4.99, 5.01))).delta1 == 1.0


class TestNormals:
    def test_flat(self):
        n = normals_from_depth(np.full((5, 6), 2.0))
        np.testing.assert_allclose(n, np.broadcast_to([0, 0, 1], n.shape))

    def test_ramp(self):
        d = np.tile(np.arange(6.0), (4, 1))
        np.testing.assert_allclose(normals_from_depth(d), np.broadcast_to(np.array([-1, 0, 1]) / math.sqrt(2), (4, 6, 3)), atol=1e-12)

    def test_unit_norm(self, rng):
        n = normals_from_depth(rng.uniform(1, 9, (7, 9)))
        np.testing.assert_allclose(np.linalg.norm(n, axis=-1), 1, atol=1e-6)


class TestHistogram:
    def test_uniform_centers_flat(self):
        edges = np.linspace(0.0, 10.0, 11)
        centers = (edges[:-1] + edges[1:]) / 2
        pair = bin_histogram_export(centers, np.full((3, 3), 2.0), np.ones((3, 3), bool), 0.0, 10.0, n_hist_bins=10)
        np.testing.assert_allclose(pair.center_freq, 0.1)
        assert np.count_nonzero(pair.gt_freq) == 1 and pair.gt_freq.max() == 1

    def test_normalized(self, rng):
        pair = bin_histogram_export(rng.uniform(0.1, 10, 64), rng.uniform(0.1, 10, (8, 8)), np.ones((8, 8), bool), 0.1, 10.0)
        assert pair.gt_freq.sum() == pytest.approx(1, abs=1e-6)
        assert pair.center_freq.sum() == pytest.approx(1, abs=1e-6)

    def test_written_columns(self, tmp_path, rng):
        pair = bin_histogram_export(rng.uniform(0.1, 10, 8), rng.uniform(0.1, 10, (4, 4)), np.ones((4, 4), bool), 0.1, 10.0, 5)
        pair.write(tmp_path / "gt.txt", tmp_path / "c.txt")
        data = np.loadtxt(tmp_path / "gt.txt")
        assert data.shape == (5, 2)
        np.testing.assert_allclose(data[:, 1], pair.gt_freq)


def test_total_variation():
    assert total_variation(np.full((3, 3), 4.0)) == 0
    assert total_variation(np.tile(np.arange(4.0), (4, 1))) == pytest.approx(12 / 24)
