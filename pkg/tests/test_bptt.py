"""Unit tests for the network forward pass, adjoint, optimizers and checkpoints."""

import numpy as np
import pytest

from spikegrad.bptt import (
    Feedback,
    OptimizerState,
    OutputGrads,
    SnnLayer,
    backward,
    forward,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
    train_bptt,
)
from spikegrad.neuron import LifParams, ResetMode, lif_forward
from spikegrad.objectives import ObjectiveKind, ObjectiveSpec, mse_membrane
from spikegrad.surrogate import SurrogateKind
from spikegrad.tasks import gen_rate_task


def small_model(rng, sizes=(3, 4, 2), beta=0.9, theta=1.0, **lif_kw):
    lif = LifParams(beta=beta, theta0=theta, **lif_kw)
    return [
        SnnLayer.init(sizes[i], sizes[i + 1], lif, rng, random_feedback=True)
        for i in range(len(sizes) - 1)
    ]


class TestForward:
    def test_zero_weights_zero_output(self):
        layer = SnnLayer(w=np.zeros((4, 3)), lif=LifParams(beta=0.9))
        x = np.ones((10, 3))
        record = forward([layer], x)
        assert record.output_spikes().sum() == 0

    def test_single_neuron_decay_trace(self):
        layer = SnnLayer(w=np.array([[1.0]]), lif=LifParams(beta=0.5, theta0=10.0))
        x = np.zeros((5, 1))
        x[0, 0] = 1.0
        record = forward([layer], x)
        assert record.output_membrane()[:, 0] == pytest.approx([0.5**k for k in range(5)])

    def test_two_layer_chain_matches_resimulation(self):
        rng = np.random.default_rng(3)
        model = small_model(rng)
        x = (rng.random((12, 3)) < 0.5).astype(float)
        record = forward(model, x)
        # layer 1's input raster is layer 0's spike raster
        assert np.array_equal(record.traces[1].x, record.traces[0].s)
        # re-simulate each layer independently through the neuron module
        for l, layer in enumerate(model):
            wx = record.traces[l].x @ layer.w.T
            u_ref, s_ref = lif_forward(layer.lif, wx)
            assert np.array_equal(u_ref.data, record.traces[l].u)
            assert np.array_equal(s_ref.data, record.traces[l].s)

    def test_dimension_mismatch_rejected(self):
        layer = SnnLayer(w=np.zeros((4, 3)), lif=LifParams(beta=0.9))
        with pytest.raises(ValueError):
            forward([layer], np.zeros((5, 2)))

    def test_explicit_recurrence_feeds_own_spikes(self):
        lif = LifParams(beta=0.5, theta0=0.5, reset_mode=ResetMode.NONE)
        layer = SnnLayer(w=np.array([[1.0]]), v=np.array([[2.0]]), lif=lif)
        x = np.zeros((3, 1))
        x[0, 0] = 1.0  # causes a spike at t=0; V keeps the neuron firing after
        record = forward([layer], x)
        assert record.output_spikes()[:, 0].tolist() == [1.0, 1.0, 1.0]
        assert record.output_membrane()[:, 0] == pytest.approx([1.0, 2.5, 3.25])


class TestBackward:
    def test_zero_output_gradient_gives_zero_dw(self):
        rng = np.random.default_rng(0)
        model = small_model(rng)
        x = (rng.random((8, 3)) < 0.5).astype(float)
        record = forward(model, x)
        zeros = np.zeros_like(record.output_spikes())
        grads = backward(record, OutputGrads(d_spikes=zeros, d_membrane=zeros))
        for g in grads:
            assert np.all(g.d_w == 0.0)

    def test_weight_sharing_sum_over_steps(self):
        rng = np.random.default_rng(1)
        model = small_model(rng)
        x = (rng.random((9, 3)) < 0.5).astype(float)
        record = forward(model, x)
        d_u = rng.normal(size=record.output_membrane().shape)
        grads = backward(record, OutputGrads(d_membrane=d_u), per_step=True)
        for g in grads:
            assert g.d_w == pytest.approx(g.d_w_steps.sum(axis=0), rel=1e-12, abs=1e-12)

    def test_random_feedback_matches_symmetric_on_output_layer(self):
        rng = np.random.default_rng(2)
        model = small_model(rng)
        x = (rng.random((10, 3)) < 0.5).astype(float)
        record = forward(model, x)
        d_s = rng.normal(size=record.output_spikes().shape)
        sym = backward(record, OutputGrads(d_spikes=d_s), feedback=Feedback.SYMMETRIC)
        rnd = backward(record, OutputGrads(d_spikes=d_s), feedback=Feedback.RANDOM_FIXED)
        assert np.array_equal(sym[-1].d_w, rnd[-1].d_w)
        assert not np.array_equal(sym[0].d_w, rnd[0].d_w)

    def test_random_feedback_requires_matrices(self):
        rng = np.random.default_rng(3)
        lif = LifParams(beta=0.9)
        model = [SnnLayer.init(3, 4, lif, rng), SnnLayer.init(4, 2, lif, rng)]
        record = forward(model, np.zeros((4, 3)))
        with pytest.raises(ValueError, match="feedback_b"):
            backward(
                record,
                OutputGrads(d_spikes=np.zeros((4, 2))),
                feedback=Feedback.RANDOM_FIXED,
            )

    def test_detached_subtract_equals_none_reset_when_silent(self):
        # subthreshold run: reset pathway carries nothing either way
        rng = np.random.default_rng(4)
        x = rng.uniform(0, 0.05, size=(10, 3))
        d_u = rng.normal(size=(10, 2))
        grads = {}
        for mode in (ResetMode.SUBTRACT, ResetMode.NONE):
            lif = LifParams(beta=0.9, theta0=5.0, reset_mode=mode)
            rng_w = np.random.default_rng(7)
            model = [SnnLayer.init(3, 2, lif, rng_w)]
            record = forward(model, x)
            assert record.output_spikes().sum() == 0
            grads[mode] = backward(record, OutputGrads(d_membrane=d_u), detach_reset=True)
        assert np.array_equal(grads[ResetMode.SUBTRACT][0].d_w, grads[ResetMode.NONE][0].d_w)

    def test_heaviside_kills_spike_pathways(self):
        rng = np.random.default_rng(5)
        model = small_model(rng)
        x = (rng.random((10, 3)) < 0.6).astype(float)
        record = forward(model, x)
        d_s = rng.normal(size=record.output_spikes().shape)
        grads = backward(record, OutputGrads(d_spikes=d_s), surrogate=SurrogateKind.heaviside())
        for g in grads:
            assert np.all(g.d_w == 0.0)

    def test_quiet_gap_contribution_ratio_is_exactly_beta(self):
        beta = 0.75
        lif = LifParams(beta=beta, theta0=1.0, reset_mode=ResetMode.SUBTRACT)
        t_post = 12
        mags = []
        for gap in (3, 4):
            layer = SnnLayer(w=np.array([[0.05, 2.0]]), lif=lif)
            x = np.zeros((16, 2))
            x[t_post - gap, 0] = 1.0
            x[t_post, 1] = 1.0
            record = forward([layer], x)
            d_s = np.zeros((16, 1))
            d_s[t_post, 0] = 1.0
            g = backward(
                record, OutputGrads(d_spikes=d_s), surrogate=SurrogateKind.hybrid_spike(0.0)
            )
            mags.append(abs(g[0].d_w[0, 0]))
        assert mags[1] / mags[0] == pytest.approx(beta, abs=1e-12)

    def test_subthreshold_gradient_matches_true_finite_differences(self):
        # with no spikes anywhere, the hard forward pass is smooth in W and
        # the surrogate never engages: backward must match plain FD
        rng = np.random.default_rng(10)
        lif = LifParams(beta=0.8, theta0=50.0)
        layer = SnnLayer(w=rng.normal(0, 0.3, size=(2, 3)), lif=lif)
        x = (rng.random((12, 3)) < 0.5).astype(float)
        y = rng.normal(size=(12, 2))

        def loss_of(model):
            rec = forward(model, x)
            assert rec.output_spikes().sum() == 0
            return mse_membrane(rec.output_membrane(), y)[0]

        record = forward([layer], x)
        _, d_u = mse_membrane(record.output_membrane(), y)
        grad = backward(record, OutputGrads(d_membrane=d_u))[0].d_w

        eps = 1e-6
        for idx in np.ndindex(layer.w.shape):
            base = layer.w[idx]
            layer.w[idx] = base + eps
            lp = loss_of([layer])
            layer.w[idx] = base - eps
            lm = loss_of([layer])
            layer.w[idx] = base
            fd = (lp - lm) / (2 * eps)
            assert grad[idx] == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_regularizer_pathway_matches_relaxed_finite_differences(self):
        # activity penalties enter as extra per-layer spike gradients; in
        # relaxed mode the whole composition is smooth and FD-checkable
        from spikegrad.objectives import RegularizerSpec, regularize

        rng = np.random.default_rng(11)
        lif = LifParams(beta=0.85, theta0=0.6, reset_mode=ResetMode.SUBTRACT)
        model = [SnnLayer.init(3, 4, lif, rng), SnnLayer.init(4, 2, lif, rng)]
        x = (rng.random((8, 3)) < 0.5).astype(float)
        spec = RegularizerSpec(
            lambda_l1=0.3, lambda_upper=0.2, theta_upper=1.0, lambda_lower=0.4, theta_lower=3.0
        )
        slope = 3.0

        def loss_of():
            rec = forward(model, x, relaxed_slope=slope)
            counts = [tr.s.sum(axis=0) for tr in rec.traces]
            penalty, grads = regularize(counts, spec)
            extra = [np.broadcast_to(g, tr.s.shape).copy() for g, tr in zip(grads, rec.traces)]
            return penalty, rec, extra

        _, record, extra = loss_of()
        zeros = np.zeros_like(record.output_spikes())
        grads = backward(
            record,
            OutputGrads(d_spikes=zeros),
            surrogate=SurrogateKind.sigmoid_exact(slope),
            detach_reset=False,
            extra_spike_grads=extra,
        )
        eps = 1e-5
        for l, layer in enumerate(model):
            for idx in np.ndindex(layer.w.shape):
                base = layer.w[idx]
                layer.w[idx] = base + eps
                lp = loss_of()[0]
                layer.w[idx] = base - eps
                lm = loss_of()[0]
                layer.w[idx] = base
                fd = (lp - lm) / (2 * eps)
                assert grads[l].d_w[idx] == pytest.approx(fd, rel=1e-4, abs=1e-7)

    def test_analytic_reset_with_adaptation_rejected(self):
        rng = np.random.default_rng(6)
        lif = LifParams(beta=0.9, adapt_alpha=0.5)
        model = [SnnLayer.init(3, 2, lif, rng)]
        record = forward(model, np.zeros((4, 3)))
        with pytest.raises(ValueError, match="adaptation"):
            backward(record, OutputGrads(d_spikes=np.zeros((4, 2))), detach_reset=False)


class TestOptimizer:
    def test_zero_gradient_no_change(self):
        p = [np.array([1.0, 2.0])]
        for state in (OptimizerState.sgd(0.1), OptimizerState.adam(0.1)):
            out = optimizer_step(p, [np.zeros(2)], state)
            assert np.array_equal(out[0], p[0])

    def test_sgd_step(self):
        out = optimizer_step([np.array([1.0])], [np.array([1.0])], OptimizerState.sgd(0.1))
        assert out[0][0] == pytest.approx(0.9)

    def test_adam_first_step_magnitude_is_lr(self):
        lr = 0.05
        state = OptimizerState.adam(lr)
        out = optimizer_step([np.array([3.0])], [np.array([1.0])], state)
        # bias correction makes the first update lr * g/|g| up to eps
        assert out[0][0] == pytest.approx(3.0 - lr, abs=lr * 1e-6)

    def test_adam_recurrence_hand_rolled(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        state = OptimizerState.adam(lr, b1, b2, eps)
        p = np.array([0.0])
        m = v = 0.0
        for t in range(1, 6):
            g = float(t)
            (p_new,) = optimizer_step([p], [np.array([g])], state)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            expected = p - lr * m_hat / (np.sqrt(v_hat) + eps)
            assert p_new[0] == pytest.approx(expected[0], rel=1e-12)
            p = p_new

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            optimizer_step([np.zeros(2)], [np.zeros(3)], OptimizerState.sgd(0.1))


class TestTrainBptt:
    def test_zero_lr_keeps_loss_constant(self):
        ds = gen_rate_task(seed=0, n_inputs=4, t_steps=10, rate_lo=0.1, rate_hi=0.9, n_samples_per_class=5)
        rng = np.random.default_rng(0)
        model = small_model(rng, sizes=(4, 6, 2))
        hist = train_bptt(
            model, ds, ObjectiveSpec(ObjectiveKind.CE_SPIKE_RATE),
            optimizer=OptimizerState.sgd(0.0), epochs=4, seed=1,
        )
        losses = [r.loss for r in hist.rows]
        assert all(l == pytest.approx(losses[0], rel=1e-12) for l in losses)

    def test_deterministic_given_seed(self):
        ds = gen_rate_task(seed=0, n_inputs=4, t_steps=10, rate_lo=0.1, rate_hi=0.9, n_samples_per_class=5)

        def run():
            rng = np.random.default_rng(0)
            model = small_model(rng, sizes=(4, 6, 2))
            h = train_bptt(
                model, ds, ObjectiveSpec(ObjectiveKind.CE_SPIKE_RATE),
                optimizer=OptimizerState.adam(1e-3), epochs=3, seed=1,
            )
            return h, model

        h1, m1 = run()
        h2, m2 = run()
        assert h1.rows == h2.rows
        for a, b in zip(m1, m2):
            assert np.array_equal(a.w, b.w)

    def test_threaded_training_matches_single_thread(self):
        ds = gen_rate_task(seed=0, n_inputs=4, t_steps=10, rate_lo=0.1, rate_hi=0.9, n_samples_per_class=4)

        def run(threads):
            rng = np.random.default_rng(0)
            model = small_model(rng, sizes=(4, 5, 2))
            h = train_bptt(
                model, ds, ObjectiveSpec(ObjectiveKind.CE_SPIKE_RATE),
                optimizer=OptimizerState.adam(1e-3), epochs=2, seed=1, threads=threads,
            )
            return h, model

        h1, m1 = run(1)
        h2, m2 = run(2)
        assert h1.rows == h2.rows
        for a, b in zip(m1, m2):
            assert np.array_equal(a.w, b.w)

    def test_learnable_beta_stays_clamped(self):
        ds = gen_rate_task(seed=0, n_inputs=4, t_steps=10, rate_lo=0.1, rate_hi=0.9, n_samples_per_class=5)
        rng = np.random.default_rng(0)
        model = small_model(rng, sizes=(4, 4, 2), learn_beta=True)
        train_bptt(
            model, ds, ObjectiveSpec(ObjectiveKind.CE_SPIKE_RATE),
            optimizer=OptimizerState.adam(0.05), epochs=3, seed=1,
        )
        for layer in model:
            assert 0.0 < layer.lif.beta <= 1.0

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train_bptt([], [], ObjectiveSpec(ObjectiveKind.CE_SPIKE_RATE))


class TestCheckpoint:
    def test_round_trip_preserves_everything(self, tmp_path):
        rng = np.random.default_rng(8)
        lif0 = LifParams(beta=0.8123456789012345, theta0=0.9, reset_mode=ResetMode.ZERO)
        lif1 = LifParams(beta=0.95, theta0=1.1, adapt_alpha=0.25, learn_beta=True)
        model = [
            SnnLayer.init(5, 7, lif0, rng, recurrent=True),
            SnnLayer.init(7, 3, lif1, rng),
        ]
        path = tmp_path / "ckpt.txt"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert len(loaded) == 2
        for a, b in zip(model, loaded):
            assert np.array_equal(a.w, b.w)
            assert a.lif == b.lif
            if a.v is None:
                assert b.v is None
            else:
                assert np.array_equal(a.v, b.v)
        # saving the loaded model reproduces the file byte for byte
        path2 = tmp_path / "ckpt2.txt"
        save_checkpoint(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not-a-checkpoint\n")
        with pytest.raises(ValueError, match="spikegrad-v1"):
            load_checkpoint(path)

    def test_rejects_truncated_block(self, tmp_path):
        rng = np.random.default_rng(0)
        model = [SnnLayer.init(3, 2, LifParams(beta=0.9), rng)]
        path = tmp_path / "ckpt.txt"
        save_checkpoint(model, path)
        lines = path.read_text().splitlines()[:-2]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="truncated"):
            load_checkpoint(path)
