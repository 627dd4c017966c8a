"""Multi-layer spiking networks and backpropagation through time.

The forward pass rolls stacked LIF layers over the input raster and records
everything the backward pass needs (membrane, spikes and the input raster
of every layer).  The backward pass is a hand-derived adjoint of the
unrolled graph: the hard spike derivative is replaced by a chosen
surrogate, the reset pathway is detached by default (cloning the surrogate
into the reset is known to hurt), and the spatial adjoint into earlier
layers can use either the transposed forward weights or a fixed random
feedback matrix.

A test-only "relaxed" forward replaces the hard threshold with a sigmoid
of a given slope; with the matching exact-derivative surrogate the adjoint
then agrees with finite differences to machine-level precision, which is
how the engine is verified.
"""

from __future__ import annotations

import dataclasses
import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .neuron import LifParams, ResetMode, SpikeRaster, _as_matrix
from .objectives import ObjectiveSpec, RegularizerSpec, eval_objective, predict_class, regularize
from .surrogate import DEFAULT_SURROGATE, SurrogateKind, sigmoid

__all__ = [
    "Feedback",
    "SnnLayer",
    "ForwardRecord",
    "OutputGrads",
    "LayerGrads",
    "forward",
    "backward",
    "OptimizerKind",
    "OptimizerState",
    "optimizer_step",
    "EpochStats",
    "TrainHistory",
    "train_bptt",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_MAGIC",
]


class Feedback(enum.Enum):
    """How the spatial adjoint reaches earlier layers."""

    SYMMETRIC = "symmetric"
    RANDOM_FIXED = "random_fixed"


@dataclass
class SnnLayer:
    """One weight layer feeding a population of LIF neurons.

    w           N_out x N_in forward weights
    v           optional N_out x N_out explicit-recurrence weights
    lif         neuron constants for this layer
    feedback_b  optional fixed random backward matrix (shape of w.T); used
                only by RANDOM_FIXED feedback and never updated by training
    """

    w: np.ndarray
    lif: LifParams
    v: np.ndarray | None = None
    feedback_b: np.ndarray | None = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 2:
            raise ValueError(f"w must be 2-D, got shape {self.w.shape}")
        if self.v is not None:
            self.v = np.asarray(self.v, dtype=np.float64)
            n_out = self.w.shape[0]
            if self.v.shape != (n_out, n_out):
                raise ValueError(f"v must be {n_out} x {n_out}, got {self.v.shape}")
        if self.feedback_b is not None:
            self.feedback_b = np.asarray(self.feedback_b, dtype=np.float64)
            if self.feedback_b.shape != self.w.T.shape:
                raise ValueError(
                    f"feedback_b must have shape {self.w.T.shape}, got {self.feedback_b.shape}"
                )

    @property
    def n_out(self) -> int:
        return self.w.shape[0]

    @property
    def n_in(self) -> int:
        return self.w.shape[1]

    @classmethod
    def init(
        cls,
        n_in: int,
        n_out: int,
        lif: LifParams,
        rng: np.random.Generator,
        recurrent: bool = False,
        random_feedback: bool = False,
    ) -> "SnnLayer":
        """Fan-in uniform init, +-1/sqrt(N_in) for w (and v when recurrent)."""
        bound = 1.0 / np.sqrt(n_in)
        w = rng.uniform(-bound, bound, size=(n_out, n_in))
        v = rng.uniform(-bound, bound, size=(n_out, n_out)) if recurrent else None
        b = rng.uniform(-bound, bound, size=(n_in, n_out)) if random_feedback else None
        return cls(w=w, lif=lif, v=v, feedback_b=b)


@dataclass
class _LayerTrace:
    u: np.ndarray        # T x N_out membrane, value used in the threshold test
    s: np.ndarray        # T x N_out spikes (continuous in relaxed mode)
    x: np.ndarray        # T x N_in input raster of this layer
    theta: np.ndarray    # T x N_out effective threshold at each step


@dataclass
class ForwardRecord:
    """Everything the backward pass needs from one rollout."""

    layers: list[SnnLayer]
    traces: list[_LayerTrace]
    relaxed_slope: float | None = None

    @property
    def input(self) -> np.ndarray:
        return self.traces[0].x

    @property
    def t_steps(self) -> int:
        return self.traces[0].x.shape[0]

    def output_spikes(self) -> np.ndarray:
        return self.traces[-1].s

    def output_membrane(self) -> np.ndarray:
        return self.traces[-1].u

    def layer_spike_counts(self) -> list[np.ndarray]:
        return [tr.s.sum(axis=0) for tr in self.traces]


@dataclass(frozen=True)
class OutputGrads:
    """Loss gradients w.r.t. the output layer's traces (either may be None)."""

    d_spikes: np.ndarray | None = None
    d_membrane: np.ndarray | None = None


def forward(model: list[SnnLayer], inputs, relaxed_slope: float | None = None) -> ForwardRecord:
    """Roll the layer stack over a spike raster (or real current matrix).

    Within a step, layer l's input is layer l-1's spike output of the same
    step.  With ``relaxed_slope`` set, the hard threshold is replaced by
    sigmoid(slope * (u - theta)) and the recorded spikes are continuous;
    this test-only mode requires adaptation to be off.
    """
    x0 = _as_matrix(inputs)
    t_steps = x0.shape[0]
    n_prev = x0.shape[1]
    for l, layer in enumerate(model):
        if layer.n_in != n_prev:
            raise ValueError(
                f"layer {l} expects {layer.n_in} inputs but receives {n_prev}"
            )
        if relaxed_slope is not None and layer.lif.adapt_alpha > 0.0:
            raise ValueError("relaxed mode does not model threshold adaptation")
        n_prev = layer.n_out

    traces = [
        _LayerTrace(
            u=np.zeros((t_steps, layer.n_out)),
            s=np.zeros((t_steps, layer.n_out)),
            x=np.zeros((t_steps, layer.n_in)),
            theta=np.zeros((t_steps, layer.n_out)),
        )
        for layer in model
    ]
    u = [np.zeros(layer.n_out) for layer in model]
    b = [np.zeros(layer.n_out) for layer in model]
    s_prev = [np.zeros(layer.n_out) for layer in model]

    for t in range(t_steps):
        x = x0[t]
        for l, layer in enumerate(model):
            lif = layer.lif
            current = layer.w @ x
            if layer.v is not None:
                current += layer.v @ s_prev[l]
            theta_eff = lif.theta0 + b[l]

            if lif.reset_mode is ResetMode.SUBTRACT:
                u_new = lif.beta * u[l] + current - s_prev[l] * theta_eff
            elif lif.reset_mode is ResetMode.ZERO:
                u_new = (lif.beta * u[l] + current) * (1.0 - s_prev[l])
            else:
                u_new = lif.beta * u[l] + current

            if relaxed_slope is None:
                s_new = (u_new > theta_eff).astype(np.float64)
            else:
                s_new = sigmoid(relaxed_slope * (u_new - theta_eff))

            if lif.adapt_alpha > 0.0:
                b[l] = lif.adapt_alpha * b[l] + (1.0 - lif.adapt_alpha) * s_new

            traces[l].u[t] = u_new
            traces[l].s[t] = s_new
            traces[l].x[t] = x
            traces[l].theta[t] = theta_eff
            u[l] = u_new
            s_prev[l] = s_new
            x = s_new

    return ForwardRecord(layers=list(model), traces=traces, relaxed_slope=relaxed_slope)


@dataclass
class LayerGrads:
    d_w: np.ndarray
    d_v: np.ndarray | None = None
    d_beta: float | None = None
    d_w_steps: np.ndarray | None = None  # per-step contributions, on request


def backward(
    record: ForwardRecord,
    output_grads: OutputGrads,
    surrogate: SurrogateKind = DEFAULT_SURROGATE,
    feedback: Feedback = Feedback.SYMMETRIC,
    detach_reset: bool = True,
    extra_spike_grads: list[np.ndarray | None] | None = None,
    per_step: bool = False,
) -> list[LayerGrads]:
    """Adjoint of the unrolled graph recorded by :func:`forward`.

    Walks layers from the output back, and time from T-1 back, maintaining
    the membrane adjoint  lam_U[t] = d_direct[t] + surrogate * lam_S[t]
    + (dU[t+1]/dU[t]) * lam_U[t+1], where lam_S collects the direct spike
    gradient, the next layer's spatial adjoint, the explicit-recurrence
    pathway and (unless detached) the reset pathway.  Weight gradients
    accumulate the weight-sharing sum dW = sum_t lam_I[t] x[t]^T.

    ``extra_spike_grads`` lets callers inject additional per-layer spike
    gradients (the activity regularizers use this); entries may be a T x N
    matrix or an N-vector applied at every step.
    """
    from .surrogate import surrogate_grad

    layers = record.layers
    n_layers = len(layers)
    t_steps = record.t_steps

    if feedback is Feedback.RANDOM_FIXED:
        for l in range(1, n_layers):
            if layers[l].feedback_b is None:
                raise ValueError(
                    f"random-fixed feedback requires feedback_b on layer {l}"
                )
    if not detach_reset:
        for l, layer in enumerate(layers):
            if layer.lif.adapt_alpha > 0.0 and layer.lif.reset_mode is not ResetMode.NONE:
                raise ValueError(
                    f"analytic reset pathway with threshold adaptation is not modelled (layer {l})"
                )

    results: list[LayerGrads | None] = [None] * n_layers
    downstream: np.ndarray | None = None  # dL/d(spikes of layer below), T x N

    for l in range(n_layers - 1, -1, -1):
        layer = layers[l]
        tr = record.traces[l]
        lif = layer.lif
        zero_mode = lif.reset_mode is ResetMode.ZERO

        lam_s_direct = np.zeros_like(tr.s)
        if l == n_layers - 1:
            if output_grads.d_spikes is not None:
                d = np.asarray(output_grads.d_spikes, dtype=np.float64)
                if d.shape != tr.s.shape:
                    raise ValueError(
                        f"d_spikes shape {d.shape} != output raster shape {tr.s.shape}"
                    )
                lam_s_direct += d
        else:
            lam_s_direct += downstream
        if extra_spike_grads is not None and extra_spike_grads[l] is not None:
            lam_s_direct += np.asarray(extra_spike_grads[l], dtype=np.float64)

        d_membrane = None
        if l == n_layers - 1 and output_grads.d_membrane is not None:
            d_membrane = np.asarray(output_grads.d_membrane, dtype=np.float64)
            if d_membrane.shape != tr.u.shape:
                raise ValueError(
                    f"d_membrane shape {d_membrane.shape} != trace shape {tr.u.shape}"
                )

        d_w = np.zeros_like(layer.w)
        d_v = np.zeros_like(layer.v) if layer.v is not None else None
        d_beta = 0.0 if lif.learn_beta else None
        d_w_steps = np.zeros((t_steps,) + layer.w.shape) if per_step else None
        d_x = np.zeros_like(tr.x)

        back_mat = layer.w.T if feedback is Feedback.SYMMETRIC else layer.feedback_b

        lam_u_next = np.zeros(layer.n_out)
        lam_i_next = np.zeros(layer.n_out)
        for t in range(t_steps - 1, -1, -1):
            lam_s = lam_s_direct[t].copy()
            if t < t_steps - 1:
                if layer.v is not None:
                    lam_s += layer.v.T @ lam_i_next
                if not detach_reset:
                    if lif.reset_mode is ResetMode.SUBTRACT:
                        lam_s += -tr.theta[t + 1] * lam_u_next
                    elif zero_mode:
                        pre_reset = lif.beta * tr.u[t] + (
                            layer.w @ tr.x[t + 1]
                            + (layer.v @ tr.s[t] if layer.v is not None else 0.0)
                        )
                        lam_s += -pre_reset * lam_u_next

            sur = surrogate_grad(surrogate, tr.u[t], tr.theta[t], tr.s[t])
            if zero_mode:
                temporal = lif.beta * (1.0 - tr.s[t]) * lam_u_next
            else:
                temporal = lif.beta * lam_u_next
            lam_u = sur * lam_s + temporal
            if d_membrane is not None:
                lam_u = lam_u + d_membrane[t]

            s_before = tr.s[t - 1] if t > 0 else np.zeros(layer.n_out)
            lam_i = lam_u * (1.0 - s_before) if zero_mode else lam_u

            contrib = np.outer(lam_i, tr.x[t])
            d_w += contrib
            if per_step:
                d_w_steps[t] = contrib
            if d_v is not None and t > 0:
                d_v += np.outer(lam_i, tr.s[t - 1])
            if d_beta is not None and t > 0:
                carrier = lam_i if zero_mode else lam_u
                d_beta += float(carrier @ tr.u[t - 1])
            d_x[t] = back_mat @ lam_i

            lam_u_next = lam_u
            lam_i_next = lam_i

        results[l] = LayerGrads(d_w=d_w, d_v=d_v, d_beta=d_beta, d_w_steps=d_w_steps)
        downstream = d_x

    return results  # type: ignore[return-value]


class OptimizerKind(enum.Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass
class OptimizerState:
    """Optimizer choice plus per-parameter moment accumulators (Adam)."""

    kind: OptimizerKind
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr >= 0.0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")

    @classmethod
    def sgd(cls, lr: float) -> "OptimizerState":
        return cls(kind=OptimizerKind.SGD, lr=lr)

    @classmethod
    def adam(
        cls, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
    ) -> "OptimizerState":
        return cls(kind=OptimizerKind.ADAM, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def optimizer_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: OptimizerState
) -> list[np.ndarray]:
    """One update over a flat list of parameter arrays; returns new arrays.

    ``state`` is mutated in place (step counter and Adam moments, keyed by
    position in the list, which must stay stable across calls).
    """
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} params but {len(grads)} grads")
    state.step_count += 1
    out = []
    for idx, (p, g) in enumerate(zip(params, grads)):
        p = np.asarray(p, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if p.shape != g.shape:
            raise ValueError(f"param {idx}: shape {p.shape} != grad shape {g.shape}")
        if state.kind is OptimizerKind.SGD:
            out.append(p - state.lr * g)
            continue
        m, v = state.slots.get(idx, (np.zeros_like(p), np.zeros_like(p)))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.slots[idx] = (m, v)
        m_hat = m / (1.0 - state.beta1**state.step_count)
        v_hat = v / (1.0 - state.beta2**state.step_count)
        out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    accuracy: float
    total_spikes: float


@dataclass
class TrainHistory:
    rows: list[EpochStats] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("epoch,loss,accuracy,total_spikes\n")
            for r in self.rows:
                fh.write(f"{r.epoch},{r.loss!r},{r.accuracy!r},{r.total_spikes!r}\n")

    @property
    def final_loss(self) -> float:
        return self.rows[-1].loss

    @property
    def final_accuracy(self) -> float:
        return self.rows[-1].accuracy


def _collect_params(model: list[SnnLayer]) -> list[np.ndarray]:
    params = []
    for layer in model:
        params.append(layer.w)
        if layer.v is not None:
            params.append(layer.v)
        if layer.lif.learn_beta:
            params.append(np.array(layer.lif.beta))
    return params


def _collect_grads(model: list[SnnLayer], layer_grads: list[LayerGrads]) -> list[np.ndarray]:
    grads = []
    for layer, lg in zip(model, layer_grads):
        grads.append(lg.d_w)
        if layer.v is not None:
            grads.append(lg.d_v)
        if layer.lif.learn_beta:
            grads.append(np.array(lg.d_beta))
    return grads


def _assign_params(model: list[SnnLayer], params: list[np.ndarray]) -> None:
    it = iter(params)
    for layer in model:
        layer.w = next(it)
        if layer.v is not None:
            layer.v = next(it)
        if layer.lif.learn_beta:
            # beta > 1 puts the temporal gradient in the exploding regime
            beta = float(np.clip(next(it), 1e-9, 1.0))
            layer.lif = dataclasses.replace(layer.lif, beta=beta)


def _sample_pass(model, sample, objective, reg, surrogate, feedback, detach_reset):
    """Forward + loss + backward for one sample; returns everything the loop reduces."""
    x, target = sample
    record = forward(model, x)
    loss, d_s, d_u = eval_objective(
        objective, record.output_membrane(), record.output_spikes(), target
    )
    extra = None
    if reg is not None and reg.active:
        penalty, reg_grads = regularize(record.layer_spike_counts(), reg)
        loss += penalty
        extra = [np.broadcast_to(g, tr.s.shape).copy() for g, tr in zip(reg_grads, record.traces)]
    grads = backward(
        record,
        OutputGrads(d_spikes=d_s, d_membrane=d_u),
        surrogate=surrogate,
        feedback=feedback,
        detach_reset=detach_reset,
        extra_spike_grads=extra,
    )
    pred = predict_class(objective, record.output_spikes())
    spikes = sum(float(tr.s.sum()) for tr in record.traces)
    return loss, grads, pred, spikes


def train_bptt(
    model: list[SnnLayer],
    dataset,
    objective: ObjectiveSpec,
    reg: RegularizerSpec | None = None,
    surrogate: SurrogateKind = DEFAULT_SURROGATE,
    feedback: Feedback = Feedback.SYMMETRIC,
    optimizer: OptimizerState | None = None,
    epochs: int = 1,
    seed: int = 0,
    batch_size: int = 32,
    detach_reset: bool = True,
    threads: int = 1,
) -> TrainHistory:
    """Mini-batch surrogate-gradient training of the layer stack in place.

    Deterministic for a given seed: sample order, and therefore every
    update, is reproduced exactly.  Batch gradients are averaged; the
    reduction runs in a fixed sample order so results do not depend on
    ``threads``.
    """
    samples = dataset.samples if hasattr(dataset, "samples") else list(dataset)
    if len(samples) == 0:
        raise ValueError("dataset is empty")
    if optimizer is None:
        optimizer = OptimizerState.adam(lr=1e-3)
    rng = np.random.default_rng(seed)

    history = TrainHistory()
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for epoch in range(epochs):
            order = rng.permutation(len(samples))
            epoch_loss = 0.0
            correct = 0
            total_spikes = 0.0
            for start in range(0, len(order), batch_size):
                batch = [samples[i] for i in order[start : start + batch_size]]
                run = lambda s: _sample_pass(
                    model, s, objective, reg, surrogate, feedback, detach_reset
                )
                passes = list(pool.map(run, batch)) if pool else [run(s) for s in batch]

                acc_grads = None
                for loss, grads, pred, spikes in passes:
                    epoch_loss += loss
                    total_spikes += spikes
                    if acc_grads is None:
                        acc_grads = _collect_grads(model, grads)
                    else:
                        for a, g in zip(acc_grads, _collect_grads(model, grads)):
                            a += g
                for (x, target), (_, _, pred, _) in zip(batch, passes):
                    if isinstance(target, (int, np.integer)) and pred == int(target):
                        correct += 1
                scale = 1.0 / len(batch)
                acc_grads = [g * scale for g in acc_grads]
                new_params = optimizer_step(_collect_params(model), acc_grads, optimizer)
                _assign_params(model, new_params)

            history.rows.append(
                EpochStats(
                    epoch=epoch,
                    loss=epoch_loss / len(samples),
                    accuracy=correct / len(samples),
                    total_spikes=total_spikes,
                )
            )
    finally:
        if pool:
            pool.shutdown()
    return history


CHECKPOINT_MAGIC = "spikegrad-v1"


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def save_checkpoint(model: list[SnnLayer], path) -> None:
    """Versioned flat-text model dump; floats carry 17 significant digits.

    Per layer: a header line, the LIF constants, then w values row-major
    one per line, then v values (row-major) when explicit recurrence is
    present.  Round-trips bit-exactly at 64-bit.
    """
    lines = [CHECKPOINT_MAGIC]
    for idx, layer in enumerate(model):
        has_v = 1 if layer.v is not None else 0
        lines.append(f"layer {idx} {layer.n_out} {layer.n_in} {has_v}")
        lif = layer.lif
        lines.append(
            "lif "
            f"{_fmt(lif.beta)} {_fmt(lif.theta0)} {lif.reset_mode.value} "
            f"{_fmt(lif.adapt_alpha)} {1 if lif.learn_beta else 0}"
        )
        lines.extend(_fmt(x) for x in layer.w.ravel())
        if layer.v is not None:
            lines.extend(_fmt(x) for x in layer.v.ravel())
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> list[SnnLayer]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    model: list[SnnLayer] = []
    pos = 1
    while pos < len(lines):
        if lines[pos] == "":
            pos += 1
            continue
        head = lines[pos].split()
        if len(head) != 5 or head[0] != "layer":
            raise ValueError(f"{path}:{pos + 1}: expected a layer header, got {lines[pos]!r}")
        _, idx, n_out, n_in, has_v = head
        n_out, n_in, has_v = int(n_out), int(n_in), int(has_v)
        pos += 1
        lif_parts = lines[pos].split()
        if len(lif_parts) != 6 or lif_parts[0] != "lif":
            raise ValueError(f"{path}:{pos + 1}: expected a lif line, got {lines[pos]!r}")
        lif = LifParams(
            beta=float(lif_parts[1]),
            theta0=float(lif_parts[2]),
            reset_mode=ResetMode(lif_parts[3]),
            adapt_alpha=float(lif_parts[4]),
            learn_beta=bool(int(lif_parts[5])),
        )
        pos += 1
        n_w = n_out * n_in
        n_v = n_out * n_out if has_v else 0
        vals = lines[pos : pos + n_w + n_v]
        if len(vals) < n_w + n_v:
            raise ValueError(f"{path}:{pos + 1}: truncated weight block")
        try:
            flat = np.array([float(v) for v in vals], dtype=np.float64)
        except ValueError as exc:
            raise ValueError(f"{path}: bad weight value in layer {idx}: {exc}") from exc
        w = flat[:n_w].reshape(n_out, n_in)
        v = flat[n_w:].reshape(n_out, n_out) if has_v else None
        model.append(SnnLayer(w=w, lif=lif, v=v))
        pos += n_w + n_v
    return model
