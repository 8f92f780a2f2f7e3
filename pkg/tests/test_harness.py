import math

import numpy as np
import pytest

from adabins.errors import ConfigError, NonFiniteGradientError, UsageError
from adabins.harness.ablate import VARIANTS, ablate, run_variant
from adabins.harness.checkpoint import load_checkpoint, save_checkpoint
from adabins.harness.cli import main
from adabins.harness.config import Config, load_config, parse_config
from adabins.harness.optim import LRSchedule, OptimizerState, adamw_step, lr_at
from adabins.harness.train import load_data, model_from_checkpoint, snapshot, train
from adabins.io import read_depth_map
from adabins.numerics import Parameter, precision

TINY = dict(data__n_samples=8, train__steps=6, train__batch_size=3)


@pytest.fixture(scope="module")
def tiny_cfg():
    return Config().replace(**TINY)


@pytest.fixture(scope="module")
def tiny_corpus(tiny_cfg):
    return load_data(tiny_cfg)


# ---------------------------------------------------------------------------
# config


class TestConfig:
    def test_parse_and_roundtrip(self):
        cfg = parse_config(
            """
            # comment
            data.n_samples = 16
            loss.lambda = 0.5   # inline comment
            bins.kind = log_fix
            bins.d_low = 0.05
            eval.crop = 1, 30, 2, 31
            eval.mirror_average = false
            ablate.n_sweep = 2,8
            """
        )
        assert cfg.data.n_samples == 16 and cfg.loss.lam == 0.5
        assert cfg.bins.kind == "log_fix" and cfg.bins.d_low == 0.05
        assert cfg.eval.crop == (1, 30, 2, 31) and cfg.eval.mirror_average is False
        assert cfg.ablate.n_sweep == (2, 8)
        assert parse_config(cfg.to_text()) == cfg

    @pytest.mark.parametrize(
        "text",
        ["data.nsamples = 3", "weird.key = 1", "data.n_samples", "n_samples = 3", "train.steps = many", "eval.mirror_average = maybe"],
    )
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "missing.cfg")

    @pytest.mark.parametrize(
        "override",
        [dict(model__n_bins=1), dict(model__kernel_count=64), dict(data__height=30), dict(optim__warmup_fraction=1.0), dict(train__steps=0)],
    )
    def test_validate(self, override):
        with pytest.raises(ConfigError):
            Config().replace(**override).validate()

    def test_replace_is_a_copy(self):
        base = Config()
        base.replace(train__steps=3)
        assert base.train.steps == 1000

    def test_shipped_configs_parse(self):
        from pathlib import Path

        root = Path(__file__).resolve().parents[1] / "configs"
        for path in sorted(root.glob("*.cfg")):
            load_config(path).validate()


# ---------------------------------------------------------------------------
# schedule and optimizer


class TestSchedule:
    @pytest.mark.parametrize("T", [10, 1000, 3333])
    def test_endpoints(self, T):
        s = LRSchedule(T)
        assert lr_at(0, s) == pytest.approx(1.4e-5, rel=1e-9)
        assert lr_at(0.3 * T, s) == pytest.approx(3.5e-4, rel=1e-9)
        assert lr_at(T, s) == pytest.approx(3.5e-4 / 75, rel=1e-9)

    def test_shape(self):
        s = LRSchedule(100)
        lrs = [lr_at(t, s) for t in range(101)]
        assert np.all(np.diff(lrs[:31]) > 0) and np.all(np.diff(lrs[30:]) < 0)
        t = 0.5
        assert lr_at(30 + t * 70, s) == pytest.approx(3.5e-4 / 75 + (3.5e-4 - 3.5e-4 / 75) * (1 + math.cos(math.pi * t)) / 2)

    @pytest.mark.parametrize("step", [-1, 101])
    def test_out_of_range(self, step):
        with pytest.raises(UsageError):
            lr_at(step, LRSchedule(100))


class TestAdamW:
    def _param(self, value):
        with precision(np.float64):
            return Parameter(np.array(value, dtype=np.float64))

    def test_zero_grad_no_decay(self):
        p = self._param([1.0, -2.0])
        p.grad = np.zeros(2)
        adamw_step([("p", p)], OptimizerState(weight_decay=0.0), 0.1)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_zero_grad_decay(self):
        p = self._param([1.0, -2.0])
        p.grad = np.zeros(2)
        adamw_step([("p", p)], OptimizerState(weight_decay=0.01), 0.1)
        np.testing.assert_allclose(p.data, np.array([1.0, -2.0]) * (1 - 0.1 * 0.01), rtol=1e-15)

    def test_scalar_trace(self):
        # hand-rolled: decay, moments, bias correction, update; w0=1, g=0.5, lr=0.1, wd=0.01
        expected = [0.899000002, 0.7981010039980005, 0.6973029049940025]
        p = self._param([1.0])
        state = OptimizerState()
        for want in expected:
            p.grad = np.array([0.5])
            adamw_step([("w", p)], state, 0.1)
            assert abs(p.data[0] - want) <= 1e-12

    def test_nan_names_parameter(self):
        good, bad = self._param([1.0]), self._param([2.0])
        good.grad, bad.grad = np.array([0.1]), np.array([np.nan])
        with pytest.raises(NonFiniteGradientError, match="head.bias") as info:
            adamw_step([("w", good), ("head.bias", bad)], OptimizerState(), 0.1)
        assert info.value.name == "head.bias"
        assert good.data[0] == 1.0  # nothing was touched


# ---------------------------------------------------------------------------
# training, determinism, checkpoints


class TestTrain:
    def test_one_step_changes_parameters(self):
        cfg = Config().replace(data__n_samples=2, train__steps=1, train__batch_size=1)
        corpus = load_data(cfg)
        from adabins.harness.train import build_model

        before = build_model(cfg).state_dict()
        after = train(cfg, corpus=corpus).model.state_dict()
        assert any(not np.array_equal(before[k], after[k]) for k in before)

    def test_deterministic_logs(self, tiny_cfg, tiny_corpus):
        a = train(tiny_cfg, corpus=tiny_corpus).log
        b = train(tiny_cfg, corpus=tiny_corpus).log
        assert a == b and len(a) == 6

    def test_log_format(self, tiny_cfg, tiny_corpus, tmp_path):
        cfg = tiny_cfg.replace(train__val_every=3)
        result = train(cfg, out_dir=tmp_path, corpus=tiny_corpus)
        lines = (tmp_path / "train.log").read_text().splitlines()
        assert lines == result.log
        first = dict(kv.split("=") for kv in lines[0].split())
        assert set(first) == {"step", "lr", "loss", "pixel", "bins"}
        assert any(line.startswith("val step=3 delta1=") for line in lines)
        assert (tmp_path / "checkpoint.adbc").is_file()

    def test_resume_bitwise(self, tiny_cfg, tiny_corpus, tmp_path):
        full = train(tiny_cfg, corpus=tiny_corpus)
        first = train(tiny_cfg, corpus=tiny_corpus, stop_at=3)
        path = save_checkpoint(tmp_path / "mid.adbc", snapshot(first, tiny_cfg))
        rest = train(tiny_cfg, corpus=tiny_corpus, resume=load_checkpoint(path))
        assert first.log + rest.log == full.log
        for k, v in full.model.state_dict().items():
            assert v.tobytes() == rest.model.state_dict()[k].tobytes()

    def test_checkpoint_roundtrip(self, tiny_cfg, tiny_corpus, tmp_path):
        result = train(tiny_cfg, out_dir=tmp_path, corpus=tiny_corpus)
        ckpt = load_checkpoint(result.checkpoint_path)
        assert ckpt.step == 6 and ckpt.config == tiny_cfg
        assert ckpt.optimizer.step == 6 and set(ckpt.optimizer.m) == set(ckpt.params)
        model, _ = model_from_checkpoint(ckpt)
        for k, v in result.model.state_dict().items():
            assert v.tobytes() == model.state_dict()[k].tobytes()

    def test_bad_checkpoint(self, tmp_path):
        (tmp_path / "x.adbc").write_bytes(b"NOPE" + bytes(8))
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "x.adbc")

    def test_config_errors_before_training(self, tiny_corpus):
        with pytest.raises(ConfigError):
            train(Config().replace(model__heads=3), corpus=tiny_corpus)

    @pytest.mark.parametrize("kind", ["si", "l1ssim"])
    def test_loss_kinds(self, tiny_cfg, tiny_corpus, kind):
        log = train(tiny_cfg.replace(loss__kind=kind, train__steps=2), corpus=tiny_corpus).log
        assert "bins=0.0" in log[-1]


# ---------------------------------------------------------------------------
# ablation


class TestAblate:
    def test_single_variant_matches_train(self, tiny_cfg, tiny_corpus):
        from adabins.metrics import evaluate

        row = run_variant(tiny_cfg, tiny_corpus, "adaptive")
        result = train(tiny_cfg.replace(bins__kind="adaptive"), corpus=tiny_corpus)
        assert row.report == evaluate(result.model, tiny_corpus.val, tiny_cfg.eval_protocol())

    def test_full_table(self, tiny_cfg, tiny_corpus, tmp_path):
        cfg = tiny_cfg.replace(train__steps=2, ablate__losses=("l1ssim",), ablate__n_sweep=(8, 2))
        report = ablate(cfg, corpus=tiny_corpus, out_dir=tmp_path)
        table = (tmp_path / "ablation_table.txt").read_text()
        for name, _, _ in VARIANTS.values():
            assert name in table
        assert "[l1ssim]" in table
        series = (tmp_path / "n_sweep.tsv").read_text().splitlines()
        assert series[0].startswith("index\tn_bins")
        assert [row.split("\t")[:2] for row in series[1:]] == [["0", "2"], ["1", "8"]]
        assert report.rows[0].chamfer is None and report.rows[-1].chamfer is not None

    def test_unknown_variant(self, tiny_cfg, tiny_corpus):
        with pytest.raises(ConfigError):
            run_variant(tiny_cfg, tiny_corpus, "quantile")


# ---------------------------------------------------------------------------
# command line


class TestCLI:
    def test_missing_config(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "missing.cfg")]) == 2

    def test_unknown_flag(self, capsys):
        assert main(["train", "--bogus"]) == 2
        assert "usage" in capsys.readouterr().err

    def test_invalid_config_value(self, tmp_path):
        (tmp_path / "bad.cfg").write_text("model.n_bins = 1\n")
        assert main(["train", "--config", str(tmp_path / "bad.cfg")]) == 1

    def test_gradcheck(self, capsys):
        assert main(["gradcheck", "--seed", "7", "--pipeline-seeds", "1"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert any(line.startswith("PASS conv2d seed=7") for line in lines)
        assert any(line.startswith("PASS pipeline seed=7") for line in lines)
        assert all(line.startswith("PASS") for line in lines)

    def test_train_predict_histogram_eval(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("ADABINS_THREADS", "1")
        cfg = tmp_path / "tiny.cfg"
        cfg.write_text("data.n_samples = 8\ntrain.steps = 3\ntrain.batch_size = 2\n")
        run = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--seed", "5", "--out", str(run)]) == 0
        ckpt = str(run / "checkpoint.adbc")
        assert load_checkpoint(ckpt).config.train.seed == 5
        # sample 1 of the corpus is a corridor scene
        assert main(["predict", "--checkpoint", ckpt, "--sample", "1", "--out", str(run / "d.adbd"), "--normals", str(run / "n.npy")]) == 0
        depth = read_depth_map(run / "d.adbd")
        assert depth.shape == (32, 32) and 0.1 < depth.min() and depth.max() < 10.0
        assert np.load(run / "n.npy").shape == (32, 32, 3)
        assert main(["histogram", "--checkpoint", ckpt, "--out", str(run / "hist")]) == 0
        assert (run / "hist" / "centers_hist.txt").is_file()
        assert main(["eval", "--checkpoint", ckpt, "--out", str(run)]) == 0
        assert "delta1=" in (run / "metrics.txt").read_text()
        assert main(["predict", "--checkpoint", ckpt, "--out", str(run / "x.adbd")]) == 2
        assert main(["predict", "--checkpoint", str(run / "nope.adbc"), "--sample", "0", "--out", str(run / "x.adbd")]) == 2

    def test_predict_from_npy(self, tmp_path, tiny_cfg, tiny_corpus):
        train(tiny_cfg.replace(train__steps=1), out_dir=tmp_path, corpus=tiny_corpus)
        np.save(tmp_path / "img.npy", tiny_corpus.train[0].image.transpose(1, 2, 0))
        args = ["predict", "--checkpoint", str(tmp_path / "checkpoint.adbc"), "--image", str(tmp_path / "img.npy")]
        assert main(args + ["--out", str(tmp_path / "d.adbd")]) == 0
        assert main(args + ["--out", str(tmp_path / "deep" / "d.adbd"), "--normals", str(tmp_path / "deep" / "n" / "n.npy")]) == 0
        assert (tmp_path / "deep" / "n" / "n.npy").is_file()
        # an output path under a regular file cannot be created
        assert main(args + ["--out", str(tmp_path / "img.npy" / "d.adbd")]) == 2

    def test_gen_data(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("data.n_samples = 4\n")
        assert main(["gen-data", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "data")]) == 0
        lines = (tmp_path / "data" / "manifest.txt").read_text().splitlines()
        assert len(lines) == 5

    def test_bad_thread_env(self, monkeypatch):
        monkeypatch.setenv("ADABINS_THREADS", "lots")
        assert main(["gradcheck", "--pipeline-seeds", "0"]) == 2
