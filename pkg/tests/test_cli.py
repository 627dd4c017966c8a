"""End-to-end tests of the command-line harness."""

import os

import numpy as np
import pytest

from spikegrad.cli import main
from spikegrad.events import load_events


RATE_CONFIG = """
task.kind = rate
task.n_inputs = 4
task.t_steps = 12
task.rate_lo = 0.1
task.rate_hi = 0.9
task.samples_per_class = 4
model.layers = 4,6,2
model.beta = 0.9
trainer.kind = bptt
objective.kind = ce_spike_rate
optimizer.kind = adam
optimizer.lr = 0.001
train.epochs = 3
train.batch_size = 4
train.seed = 7
"""


def write_config(tmp_path, text, out_dir=None, name="run.cfg"):
    out_dir = out_dir or tmp_path / "out"
    path = tmp_path / name
    path.write_text(text + f"train.out_dir = {out_dir}\n")
    return path, out_dir


class TestTrainCommand:
    def test_writes_history_checkpoint_and_config(self, tmp_path):
        cfg, out = write_config(tmp_path, RATE_CONFIG)
        assert main(["train", "--config", str(cfg)]) == 0
        history = (out / "history.csv").read_text().splitlines()
        assert history[0] == "epoch,loss,accuracy,total_spikes"
        assert len(history) == 1 + 3  # header + one row per epoch
        assert (out / "checkpoint.txt").exists()
        assert (out / "config.txt").exists()

    def test_zero_lr_history_loss_constant(self, tmp_path):
        cfg, out = write_config(tmp_path, RATE_CONFIG.replace("optimizer.lr = 0.001", "optimizer.lr = 0.0"))
        assert main(["train", "--config", str(cfg)]) == 0
        rows = (out / "history.csv").read_text().splitlines()[1:]
        losses = {row.split(",")[1] for row in rows}
        assert len(losses) == 1

    def test_bit_exact_reproducibility(self, tmp_path):
        cfg1, out1 = write_config(tmp_path, RATE_CONFIG, tmp_path / "o1", name="a.cfg")
        cfg2, out2 = write_config(tmp_path, RATE_CONFIG, tmp_path / "o2", name="b.cfg")
        assert main(["train", "--config", str(cfg1)]) == 0
        assert main(["train", "--config", str(cfg2)]) == 0
        assert (out1 / "history.csv").read_bytes() == (out2 / "history.csv").read_bytes()
        assert (out1 / "checkpoint.txt").read_bytes() == (out2 / "checkpoint.txt").read_bytes()

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "nope.cfg")]) == 2
        assert "nope.cfg" in capsys.readouterr().err

    def test_bad_config_key_named(self, tmp_path, capsys):
        cfg, _ = write_config(tmp_path, RATE_CONFIG + "model.bogus = 1\n")
        assert main(["train", "--config", str(cfg)]) == 2
        assert "model.bogus" in capsys.readouterr().err

    def test_online_trainer_runs(self, tmp_path):
        text = RATE_CONFIG.replace("trainer.kind = bptt", "trainer.kind = online")
        text = text.replace("objective.kind = ce_spike_rate", "objective.kind = mse_spike_rate")
        cfg, out = write_config(tmp_path, text)
        assert main(["train", "--config", str(cfg)]) == 0
        assert len((out / "history.csv").read_text().splitlines()) == 4

    def test_stdp_trainer_runs(self, tmp_path):
        text = RATE_CONFIG.replace("trainer.kind = bptt", "trainer.kind = stdp")
        text = text.replace("model.layers = 4,6,2", "model.layers = 4,3")
        cfg, out = write_config(tmp_path, text)
        assert main(["train", "--config", str(cfg)]) == 0
        assert len((out / "history.csv").read_text().splitlines()) == 4

    def test_perturbation_trainer_runs(self, tmp_path):
        text = RATE_CONFIG.replace("trainer.kind = bptt", "trainer.kind = perturbation")
        text += "trainer.sigma = 0.05\ntrainer.trials = 10\n"
        cfg, out = write_config(tmp_path, text)
        assert main(["train", "--config", str(cfg)]) == 0
        assert len((out / "history.csv").read_text().splitlines()) == 4

    def test_spikeprop_trainer_runs(self, tmp_path):
        text = """
task.kind = latency
task.n_inputs = 4
task.t_steps = 20
task.n_classes = 2
task.samples_per_class = 2
task.jitter = 0
model.layers = 4,2
trainer.kind = spikeprop
objective.kind = mse_spike_time
optimizer.lr = 0.002
train.epochs = 2
spikeprop.tau = 1.0
spikeprop.t_end = 8.0
spikeprop.target_correct = 1.0
spikeprop.target_incorrect = 2.5
"""
        cfg, out = write_config(tmp_path, text)
        assert main(["train", "--config", str(cfg)]) == 0
        assert len((out / "history.csv").read_text().splitlines()) == 3


class TestEvalCommand:
    def test_eval_after_train(self, tmp_path, capsys):
        cfg, out = write_config(tmp_path, RATE_CONFIG)
        assert main(["train", "--config", str(cfg)]) == 0
        assert main(["eval", "--checkpoint", str(out / "checkpoint.txt"), "--config", str(cfg)]) == 0
        stdout = capsys.readouterr().out
        assert "accuracy=" in stdout
        rows = (out / "eval.csv").read_text().splitlines()
        assert rows[0] == "sample,label,prediction,spikes"
        assert len(rows) == 1 + 8  # 4 samples per class x 2 classes


class TestEncodeCommand:
    def test_rate_encode_all_zero_features_header_only(self, tmp_path):
        feats = tmp_path / "f.csv"
        feats.write_text("0.0,0.0,0.0\n")
        out = tmp_path / "z.ev"
        assert main(["encode", "--scheme", "rate", "--in", str(feats), "--out", str(out), "--t-steps", "6"]) == 0
        assert out.read_text() == "# T=6 N=3\n"

    def test_latency_encode(self, tmp_path):
        feats = tmp_path / "f.csv"
        feats.write_text("1.0,0.2\n")
        out = tmp_path / "l.ev"
        assert main([
            "encode", "--scheme", "latency", "--in", str(feats), "--out", str(out),
            "--t-steps", "10", "--tau", "1.0", "--theta", "0.5",
        ]) == 0
        raster = load_events(out)
        assert raster.data[1, 0] == 1.0  # round(ln 2)
        assert raster.data[:, 1].sum() == 0.0

    def test_delta_encode_bipolar_needs_off_file(self, tmp_path, capsys):
        feats = tmp_path / "sig.csv"
        feats.write_text("0.0,0.0\n1.0,0.0\n0.0,0.0\n")
        out = tmp_path / "d.ev"
        assert main([
            "encode", "--scheme", "delta", "--in", str(feats), "--out", str(out),
            "--threshold", "0.5", "--bipolar",
        ]) == 2
        assert "--out-off" in capsys.readouterr().err
        off = tmp_path / "d_off.ev"
        assert main([
            "encode", "--scheme", "delta", "--in", str(feats), "--out", str(out),
            "--threshold", "0.5", "--bipolar", "--out-off", str(off),
        ]) == 0
        assert load_events(out).data[1, 0] == 1.0
        assert load_events(off).data[2, 0] == 1.0

    def test_missing_feature_file(self, tmp_path, capsys):
        assert main(["encode", "--scheme", "rate", "--in", str(tmp_path / "x.csv"), "--out", str(tmp_path / "y.ev")]) == 2


class TestGradcheckCommand:
    def test_rtrl_suite_exits_zero(self, capsys):
        assert main(["gradcheck", "--suite", "rtrl-vs-bptt", "--seed", "1"]) == 0
        out = capsys.readouterr().out
        assert "max_rel_err" in out and "PASS" in out

    def test_beta_power_suite_exits_zero(self, capsys):
        assert main(["gradcheck", "--suite", "beta-power"]) == 0

    def test_relaxed_fd_suite_exits_zero(self, capsys):
        assert main(["gradcheck", "--suite", "relaxed-fd", "--seed", "3"]) == 0

    def test_spikeprop_fd_suite_exits_zero(self, capsys):
        assert main(["gradcheck", "--suite", "spikeprop-fd", "--seed", "3"]) == 0


class TestStdpDemoCommand:
    def test_writes_window_curve(self, tmp_path):
        cfg = tmp_path / "demo.cfg"
        out = tmp_path / "demo_out"
        cfg.write_text(
            f"stdp.a_plus = 1.0\nstdp.a_minus = -1.0\nstdp.tau_plus = 10\nstdp.tau_minus = 10\n"
            f"stdp.window = 30\ntrain.out_dir = {out}\n"
        )
        assert main(["stdp-demo", "--config", str(cfg)]) == 0
        rows = (out / "stdp_curve.csv").read_text().splitlines()
        assert rows[0] == "delta_t,delta_w"
        assert len(rows) == 1 + 61  # dt in [-30, 30]
        data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        causal = data[data[:, 0] < 0, 1]
        anti = data[data[:, 0] > 0, 1]
        assert np.all(causal > 0) and np.all(anti < 0)
        at_zero = data[data[:, 0] == 0, 1]
        assert at_zero[0] == 0.0

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "demo.cfg"
        cfg.write_text("stdp.a_plus = 1.0\nstdp.mystery = 2\n")
        assert main(["stdp-demo", "--config", str(cfg)]) == 2
        assert "stdp.mystery" in capsys.readouterr().err
