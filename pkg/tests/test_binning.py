import math

import numpy as np
import pytest

from adabins.binning import KINDS, BinStrategy, log_widths, uniform_widths, widths_for
from adabins.errors import ConfigError, UsageError
from adabins.numerics import Tensor, precision


def test_kinds():
    assert set(KINDS) == {"uniform_fix", "log_fix", "train_fix", "adaptive"}


def test_uniform_four():
    s = BinStrategy("uniform_fix", 4, 0.1, 10.0)
    np.testing.assert_allclose(widths_for(s, batch_size=1).data, [[0.25] * 4])


class TestLogWidths:
    def test_two_bins_against_edges(self):
        d_max = 10.0
        d_low = 0.1 * d_max
        edges = [d_low, math.sqrt(0.1) * d_max, d_max]
        gaps = [edges[1] - edges[0], edges[2] - edges[1]]
        expected = [g / sum(gaps) for g in gaps]
        np.testing.assert_allclose(log_widths(2, d_low, d_max), expected, rtol=1e-12)
        # frozen: (sqrt(10) - 1) / 9 and (10 - sqrt(10)) / 9
        np.testing.assert_allclose(log_widths(2, d_low, d_max), [0.24025307335204213, 0.7597469266479579], rtol=1e-12)

    def test_widths_grow_geometrically(self):
        w = log_widths(8, 0.5, 8.0)
        ratios = w[1:] / w[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-10)
        assert ratios[0] > 1

    def test_default_d_low(self):
        assert BinStrategy("log_fix", 4, 0.0, 10.0).d_low == pytest.approx(0.01)
        assert BinStrategy("log_fix", 4, 0.1, 10.0).d_low == pytest.approx(0.1)

    def test_bad_range(self):
        with pytest.raises(ConfigError):
            log_widths(4, 0.0, 10.0)


class TestStrategies:
    def test_train_fix_starts_uniform(self):
        s = BinStrategy("train_fix", 5, 0.1, 10.0)
        np.testing.assert_allclose(s.widths(3).data, np.full((3, 5), 0.2), rtol=1e-6)
        assert [n for n, _ in s.named_parameters()] == ["theta"]

    def test_train_fix_gradient_reaches_theta(self):
        s = BinStrategy("train_fix", 3, 0.1, 10.0)
        w = s.widths(2)
        (w * Tensor(np.array([[1.0, 0.0, 0.0]] * 2, dtype=np.float32))).sum().backward()
        assert s.theta.grad is not None and np.abs(s.theta.grad).sum() > 0

    @pytest.mark.parametrize("kind", ["uniform_fix", "log_fix"])
    def test_fixed_kinds_have_no_parameters(self, kind):
        assert list(BinStrategy(kind, 4, 0.1, 10.0).parameters()) == []

    def test_adaptive_needs_context(self):
        with pytest.raises(UsageError):
            BinStrategy("adaptive", 4, 0.1, 10.0).widths(2)

    def test_adaptive_normalizes_context(self):
        with precision(np.float64):
            w = widths_for(BinStrategy("adaptive", 2, 0.1, 10.0), Tensor([[1.0, 3.0]])).data
        np.testing.assert_allclose(w, [[1.001 / 4.002, 3.001 / 4.002]])

    def test_fixed_kinds_ignore_context(self):
        s = BinStrategy("uniform_fix", 2, 0.1, 10.0)
        np.testing.assert_allclose(widths_for(s, Tensor(np.array([[5.0, 0.0]]))).data, [[0.5, 0.5]])

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            BinStrategy("quantile", 4, 0.1, 10.0)

    def test_uniform_widths_helper(self):
        np.testing.assert_allclose(uniform_widths(3), [1 / 3] * 3)
