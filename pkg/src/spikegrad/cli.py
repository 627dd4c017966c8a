"""Command-line harness.

Subcommands:

  train      --config <path> [--threads N]   run the configured trainer;
             writes history.csv, checkpoint.txt and the resolved config
  eval       --checkpoint <path> --config <path>   accuracy + spike stats
  encode     --scheme rate|latency|delta --in <csv> --out <events> [...]
  gradcheck  --suite relaxed-fd|rtrl-vs-bptt|spikeprop-fd|beta-power [--seed N]
  stdp-demo  --config <path>   write the pairing-rule weight-change curve

All CSV output uses '.' decimals and LF line endings.  Identical config and
seed reproduce identical output files byte for byte (single-threaded).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .bptt import (
    EpochStats,
    Feedback,
    TrainHistory,
    forward,
    load_checkpoint,
    save_checkpoint,
    train_bptt,
)
from .codec import ClampMode, DeltaParams, LatencyParams, Polarity, delta_encode, latency_encode, rate_encode
from .config import ConfigError, RunConfig, load_run_config, parse_config_file
from .events import save_events
from .gradcheck import SUITES
from .neuron import SpikeRaster
from .objectives import ObjectiveKind, ObjectiveSpec, predict_class
from .online import train_online
from .plasticity import StdpParams, Pairing, perturbation_train, stdp_update
from .spikeprop import SrmNet, find_spike_time, train_spikeprop
from .tasks import Dataset


def _eprint(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _eval_model(model, dataset: Dataset, objective: ObjectiveSpec):
    """Forward every sample; returns (accuracy, per-sample rows, mean spikes)."""
    rows = []
    correct = 0
    labelled = 0
    total_spikes = 0.0
    for x, target in dataset.samples:
        record = forward(model, x)
        pred = predict_class(objective, record.output_spikes())
        spikes = sum(float(tr.s.sum()) for tr in record.traces)
        total_spikes += spikes
        label = int(target) if isinstance(target, (int, np.integer)) else -1
        if label >= 0:
            labelled += 1
            if pred == label:
                correct += 1
        rows.append((label, pred, spikes))
    accuracy = correct / labelled if labelled else float("nan")
    return accuracy, rows, total_spikes / len(dataset.samples)


def _raster_to_times(raster, dt: float) -> list[np.ndarray]:
    data = np.asarray(getattr(raster, "data", raster), dtype=np.float64)
    return [np.nonzero(data[:, i])[0].astype(np.float64) * dt for i in range(data.shape[1])]


def _train_spikeprop(cfg: RunConfig):
    sp = cfg.spikeprop
    if len(cfg.layer_sizes) != 2:
        raise ConfigError("config key 'model.layers': spikeprop uses a single weight layer")
    rng = np.random.default_rng(cfg.seed)
    n_in, n_out = cfg.layer_sizes
    net = SrmNet(
        w=rng.uniform(0.5, 1.5, size=(n_out, n_in)) * (2.0 / n_in),
        tau=sp.tau,
        theta=sp.theta,
        t_end=sp.t_end,
        dt_fine=sp.dt_fine,
    )
    dt = net.dt_fine
    samples = []
    for x, label in cfg.dataset.samples:
        presyn = _raster_to_times(x, dt)
        targets = np.full(n_out, sp.target_incorrect)
        targets[int(label)] = sp.target_correct
        samples.append((presyn, targets))

    sp_history = train_spikeprop(net, samples, lr=cfg.optimizer.lr, epochs=cfg.epochs)

    history = TrainHistory()
    for epoch, loss in sp_history.rows:
        history.rows.append(EpochStats(epoch=epoch, loss=loss, accuracy=float("nan"), total_spikes=float("nan")))
    # final-state accuracy by earliest output spike
    correct = 0
    for (presyn, _), (_, label) in zip(samples, cfg.dataset.samples):
        times = [find_spike_time(net, presyn, j) for j in range(n_out)]
        times = [t if t is not None else float("inf") for t in times]
        if int(np.argmin(times)) == int(label):
            correct += 1
    acc = correct / len(samples)
    last = history.rows[-1]
    history.rows[-1] = EpochStats(last.epoch, last.loss, acc, last.total_spikes)
    return history, None


def _train_online_dataset(cfg: RunConfig, model):
    """Epoch loop over per-sample streams with per-step spike targets."""
    if cfg.objective.kind not in (ObjectiveKind.MSE_MEMBRANE, ObjectiveKind.MSE_SPIKE_RATE):
        raise ConfigError(
            "config key 'objective.kind': online training needs mse_membrane or mse_spike_rate"
        )
    n_out = cfg.layer_sizes[-1]
    history = TrainHistory()
    for epoch in range(cfg.epochs):
        losses = []
        for x, target in cfg.dataset.samples:
            data = np.asarray(getattr(x, "data", x), dtype=np.float64)
            if cfg.objective.kind is ObjectiveKind.MSE_SPIKE_RATE:
                step_target = np.zeros(n_out)
                step_target[int(target)] = 1.0
            else:
                step_target = np.full(n_out, cfg.objective.membrane_target_incorrect)
                mt = cfg.objective.membrane_target_correct
                step_target[int(target)] = mt if mt is not None else 1.0
            stream = ((row, step_target) for row in data)
            h = train_online(
                model,
                stream,
                cfg.objective,
                surrogate=cfg.surrogate,
                update_policy=cfg.update_policy,
                optimizer=cfg.optimizer,
            )
            losses.append(h.rows[-1][1])
        accuracy, _, mean_spikes = _eval_model(model, cfg.dataset, cfg.objective)
        history.rows.append(
            EpochStats(
                epoch=epoch,
                loss=float(np.mean(losses)),
                accuracy=accuracy,
                total_spikes=mean_spikes * len(cfg.dataset.samples),
            )
        )
    return history


def _train_stdp_dataset(cfg: RunConfig, model):
    """Unsupervised pairing-rule pass; the loss column records mean |dW|."""
    history = TrainHistory()
    for epoch in range(cfg.epochs):
        delta = 0.0
        total_spikes = 0.0
        for x, _ in cfg.dataset.samples:
            record = forward(model, x)
            total_spikes += sum(float(tr.s.sum()) for tr in record.traces)
            w_new = stdp_update(record.traces[0].x, record.traces[0].s, model[0].w, cfg.stdp)
            delta += float(np.abs(w_new - model[0].w).mean())
            model[0].w = w_new
        history.rows.append(
            EpochStats(
                epoch=epoch,
                loss=delta / len(cfg.dataset.samples),
                accuracy=float("nan"),
                total_spikes=total_spikes,
            )
        )
    return history


def _train_perturbation(cfg: RunConfig, model):
    history = TrainHistory()
    for epoch in range(cfg.epochs):
        h = perturbation_train(
            model,
            cfg.dataset,
            sigma=cfg.perturb_sigma,
            trials=cfg.perturb_trials,
            objective=cfg.objective,
            seed=cfg.seed + epoch,
        )
        accuracy, _, mean_spikes = _eval_model(model, cfg.dataset, cfg.objective)
        history.rows.append(
            EpochStats(
                epoch=epoch,
                loss=h.final_loss,
                accuracy=accuracy,
                total_spikes=mean_spikes * len(cfg.dataset.samples),
            )
        )
    return history


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    if args.threads is not None:
        cfg.threads = args.threads
    os.makedirs(cfg.out_dir, exist_ok=True)

    if cfg.trainer_kind == "spikeprop":
        history, _ = _train_spikeprop(cfg)
        model = None
    else:
        rng = np.random.default_rng(cfg.seed)
        model = cfg.build_model(rng)
        if cfg.trainer_kind == "bptt":
            history = train_bptt(
                model,
                cfg.dataset,
                cfg.objective,
                reg=cfg.regularizer,
                surrogate=cfg.surrogate,
                feedback=cfg.feedback,
                optimizer=cfg.optimizer,
                epochs=cfg.epochs,
                seed=cfg.seed,
                batch_size=cfg.batch_size,
                detach_reset=cfg.detach_reset,
                threads=cfg.threads,
            )
        elif cfg.trainer_kind == "online":
            history = _train_online_dataset(cfg, model)
        elif cfg.trainer_kind == "stdp":
            history = _train_stdp_dataset(cfg, model)
        elif cfg.trainer_kind == "perturbation":
            history = _train_perturbation(cfg, model)
        else:
            raise ConfigError(f"config key 'trainer.kind': unknown value {cfg.trainer_kind!r}")

    history.write_csv(os.path.join(cfg.out_dir, "history.csv"))
    if model is not None:
        save_checkpoint(model, os.path.join(cfg.out_dir, "checkpoint.txt"))
    cfg.write_resolved(os.path.join(cfg.out_dir, "config.txt"))
    last = history.rows[-1]
    print(
        f"trained {cfg.trainer_kind} for {len(history.rows)} epochs: "
        f"loss={last.loss:.6g} accuracy={last.accuracy:.4g}"
    )
    return 0


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config)
    model = load_checkpoint(args.checkpoint)
    accuracy, rows, mean_spikes = _eval_model(model, cfg.dataset, cfg.objective)
    os.makedirs(cfg.out_dir, exist_ok=True)
    out_path = os.path.join(cfg.out_dir, "eval.csv")
    with open(out_path, "w", newline="\n") as fh:
        fh.write("sample,label,prediction,spikes\n")
        for idx, (label, pred, spikes) in enumerate(rows):
            fh.write(f"{idx},{label},{pred},{spikes!r}\n")
    print(f"accuracy={accuracy:.6g} mean_spikes_per_sample={mean_spikes:.6g}")
    print(f"wrote {out_path}")
    return 0


def cmd_encode(args) -> int:
    try:
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # empty file handled below
            features = np.loadtxt(args.infile, delimiter=",", dtype=np.float64, ndmin=2)
    except OSError:
        _eprint(f"cannot read feature file {args.infile!r}")
        return 2
    except ValueError as exc:
        _eprint(f"feature file {args.infile!r}: {exc}")
        return 2
    if features.size == 0:
        _eprint(f"feature file {args.infile!r} is empty")
        return 2

    if args.scheme == "rate":
        if features.shape[0] != 1:
            _eprint("rate encoding expects a single CSV row of features")
            return 2
        raster = rate_encode(
            features[0], t_steps=args.t_steps, rng=np.random.default_rng(args.seed)
        )
    elif args.scheme == "latency":
        if features.shape[0] != 1:
            _eprint("latency encoding expects a single CSV row of features")
            return 2
        clamp = ClampMode.FORCE_LAST if args.force_last else ClampMode.NO_SPIKE
        raster = latency_encode(
            features[0],
            LatencyParams(tau=args.tau, theta=args.theta, t_max=args.t_steps, clamp_mode=clamp),
        )
    else:  # delta
        polarity = Polarity.BIPOLAR if args.bipolar else Polarity.POSITIVE_ONLY
        encoded = delta_encode(features, DeltaParams(threshold=args.threshold, polarity=polarity))
        if args.bipolar:
            on, off = encoded
            if not args.out_off:
                _eprint("bipolar delta encoding needs --out-off for the offset raster")
                return 2
            save_events(off, args.out_off)
            raster = on
        else:
            raster = encoded

    save_events(raster, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    suite = SUITES[args.suite]
    results = suite(seed=args.seed)
    worst = 0.0
    ok = True
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{res.name}: max_rel_err={res.max_rel_err:.3e} tol={res.tol:.0e} {status}")
        worst = max(worst, res.max_rel_err)
        ok = ok and res.passed
    print(f"suite {args.suite}: worst max_rel_err={worst:.3e} -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_stdp_demo(args) -> int:
    raw = parse_config_file(args.config)
    known = {
        "stdp.a_plus", "stdp.a_minus", "stdp.tau_plus", "stdp.tau_minus",
        "stdp.w_min", "stdp.w_max", "stdp.pairing", "stdp.window", "train.out_dir",
    }
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config key '{unknown[0]}'")
    pairing = raw.get("stdp.pairing", "all_pairs")
    if pairing not in (p.value for p in Pairing):
        raise ConfigError(f"config key 'stdp.pairing': unknown value {pairing!r}")
    params = StdpParams(
        a_plus=float(raw.get("stdp.a_plus", 0.01)),
        a_minus=float(raw.get("stdp.a_minus", -0.012)),
        tau_plus=float(raw.get("stdp.tau_plus", 20.0)),
        tau_minus=float(raw.get("stdp.tau_minus", 20.0)),
        w_min=float(raw.get("stdp.w_min", -1.0)),
        w_max=float(raw.get("stdp.w_max", 1.0)),
        pairing=Pairing(pairing),
        window=float(raw.get("stdp.window", 100.0)),
    )
    out_dir = raw.get("train.out_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, "stdp_curve.csv")

    span = int(params.window)
    t_steps = 2 * span + 4
    t_post = span + 2
    with open(out_path, "w", newline="\n") as fh:
        fh.write("delta_t,delta_w\n")
        for dt in range(-span, span + 1):
            pre = np.zeros((t_steps, 1))
            post = np.zeros((t_steps, 1))
            pre[t_post + dt, 0] = 1.0
            post[t_post, 0] = 1.0
            w_new = stdp_update(SpikeRaster(pre), SpikeRaster(post), np.zeros((1, 1)), params)
            fh.write(f"{dt},{float(w_new[0, 0])!r}\n")
    print(f"wrote {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikegrad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the configured trainer")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--threads", type=int, default=None)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the configured task")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--config", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_enc = sub.add_parser("encode", help="feature CSV -> event file")
    p_enc.add_argument("--scheme", choices=["rate", "latency", "delta"], required=True)
    p_enc.add_argument("--in", dest="infile", required=True)
    p_enc.add_argument("--out", required=True)
    p_enc.add_argument("--t-steps", type=int, default=100)
    p_enc.add_argument("--seed", type=int, default=0)
    p_enc.add_argument("--tau", type=float, default=5.0)
    p_enc.add_argument("--theta", type=float, default=0.5)
    p_enc.add_argument("--force-last", action="store_true")
    p_enc.add_argument("--threshold", type=float, default=0.1)
    p_enc.add_argument("--bipolar", action="store_true")
    p_enc.add_argument("--out-off", default=None)
    p_enc.set_defaults(func=cmd_encode)

    p_gc = sub.add_parser("gradcheck", help="run a gradient verification suite")
    p_gc.add_argument("--suite", choices=sorted(SUITES), required=True)
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.set_defaults(func=cmd_gradcheck)

    p_demo = sub.add_parser("stdp-demo", help="write the pairing-rule weight-change curve")
    p_demo.add_argument("--config", required=True)
    p_demo.set_defaults(func=cmd_stdp_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _eprint(str(exc))
        return 2
    except FileNotFoundError as exc:
        _eprint(f"missing file: {exc.filename}")
        return 2
    except ValueError as exc:
        _eprint(str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
