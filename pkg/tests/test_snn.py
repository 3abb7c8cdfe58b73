import math

import numpy as np
import pytest
import torch

from errors import BadMagicError, EmptyDatasetError, InvalidParamsError, MissingModelError, ShapeMismatchError, TruncatedFileError
from models import FrameDataset, FrameTensor, LayerSpec, NeuronParams
from snn import (
    SnnModel,
    architecture,
    build_model,
    evaluate,
    init_weights,
    input_gradient,
    lif_forward,
    load_checkpoint,
    loss_value,
    predict,
    save_checkpoint,
    smooth_spike,
    sparse_loss,
    spike_fn,
    train,
)


def reference_counts(model: SnnModel, x: np.ndarray) -> np.ndarray:
    """Plain numpy LIF interpreter for stacks of linear layers; x is (C, H, W, T)."""
    weights = [(op.weight.detach().double().numpy(), op.bias.detach().double().numpy()) for op in model.ops]
    potentials = [np.zeros(w.shape[0]) for w, _ in weights]
    counts = np.zeros(weights[-1][0].shape[0])
    for t in range(x.shape[-1]):
        h = x[..., t].reshape(-1)
        for k, ((w, b), spec) in enumerate(zip(weights, model.specs)):
            v = spec.neuron.leak * potentials[k] + w @ h + b
            s = (v >= spec.neuron.v_th).astype(float)
            potentials[k] = v - s * spec.neuron.v_th
            h = s
        counts += h
    return counts


class TestSpikeFunction:
    def test_forward_is_heaviside_and_backward_is_fast_sigmoid(self):
        z = torch.tensor([-1.0, 0.0, 2.0], dtype=torch.float64, requires_grad=True)
        s = spike_fn(z, 5.0)
        assert s.tolist() == [0.0, 1.0, 1.0]
        s.sum().backward()
        expected = [1 / (1 + 5 * abs(v)) ** 2 for v in (-1.0, 0.0, 2.0)]
        assert z.grad.tolist() == pytest.approx(expected)

    def test_smooth_spike_derivative_equals_surrogate(self):
        z = torch.linspace(-2, 2, 41, dtype=torch.float64, requires_grad=True)
        smooth_spike(z, 3.0).sum().backward()
        assert torch.allclose(z.grad, 1 / (1 + 3 * z.detach().abs()) ** 2)


class TestForward:
    def test_matches_reference_interpreter(self, tiny_model, rng):
        for _ in range(10):
            x = (rng.random((2, 3, 3, 6)) < 0.4).astype(np.float64)
            prediction, _ = lif_forward(tiny_model, x)
            assert prediction.counts == pytest.approx(reference_counts(tiny_model, x))

    def test_prediction_fields(self, tiny_model, rng):
        x = (rng.random((2, 3, 3, 5)) < 0.5).astype(np.float64)
        prediction, trace = lif_forward(tiny_model, FrameTensor(x, 10))
        assert prediction.probabilities.sum() == pytest.approx(1.0, abs=1e-9)
        assert prediction.label == int(np.argmax(prediction.counts))
        assert (prediction.counts >= 0).all()
        assert np.array_equal(prediction.counts, np.round(prediction.counts))
        assert [s.shape for s in trace.spikes] == [(6, 5), (3, 5)]
        assert [v.shape for v in trace.potentials] == [(6, 5), (3, 5)]
        assert trace.spikes[-1].sum(axis=-1) == pytest.approx(prediction.counts)

    def test_ties_go_to_lowest_class(self):
        model = SnnModel([LayerSpec("linear", 2, 3)], (2, 1, 1), 3).double()
        torch.nn.init.zeros_(model.ops[0].weight)
        torch.nn.init.zeros_(model.ops[0].bias)
        prediction, _ = lif_forward(model, np.ones((2, 1, 1, 4)))
        assert prediction.label == 0
        assert predict(model, np.ones((3, 2, 1, 1, 4))).tolist() == [0, 0, 0]

    def test_unit_leak_spikes_every_second_step_on_half_input(self):
        neuron = NeuronParams(v_th=1.0, leak=1.0)
        model = SnnModel([LayerSpec("linear", 1, 2, neuron=neuron)], (1, 1, 1), 2).double()
        with torch.no_grad():
            model.ops[0].weight.copy_(torch.tensor([[1.0], [0.0]], dtype=torch.float64))
            model.ops[0].bias.zero_()
        prediction, trace = lif_forward(model, np.full((1, 1, 1, 6), 0.5))
        # steps 2, 4 and 6 counted from one
        assert np.nonzero(trace.spikes[0][0])[0].tolist() == [1, 3, 5]
        assert not trace.spikes[0][1].any()
        assert prediction.counts.tolist() == [3.0, 0.0]

    def test_infinite_threshold_never_spikes(self):
        neuron = NeuronParams(v_th=math.inf)
        model = SnnModel([LayerSpec("linear", 2, 2, neuron=neuron)], (2, 1, 1), 2).double()
        with torch.no_grad():
            model.ops[0].weight.fill_(10.0)
        prediction, trace = lif_forward(model, np.ones((2, 1, 1, 3)))
        assert prediction.counts.tolist() == [0.0, 0.0]
        assert np.isfinite(trace.potentials[0]).all()

    def test_shape_mismatch(self, tiny_model):
        with pytest.raises(ShapeMismatchError):
            lif_forward(tiny_model, np.zeros((2, 4, 4, 3)))
        with pytest.raises(ShapeMismatchError):
            SnnModel([LayerSpec("linear", 10, 3)], (2, 3, 3), 3)
        with pytest.raises(ShapeMismatchError):
            SnnModel([LayerSpec("linear", 18, 4)], (2, 3, 3), 3)

    def test_invalid_neuron_parameters(self):
        with pytest.raises(InvalidParamsError):
            NeuronParams(v_th=0.0)
        with pytest.raises(InvalidParamsError):
            NeuronParams(leak=1.5)


class TestArchitectures:
    @pytest.mark.parametrize("arch, layers", [("mlp", 2), ("conv", 2), ("gesture", 4)])
    def test_presets_build_on_desk_sensor(self, arch, layers):
        model = build_model(arch, (2, 34, 34), 10, seed=0)
        assert len(model.ops) == layers
        prediction, _ = lif_forward(model, np.zeros((2, 34, 34, 4), dtype=np.float32))
        assert prediction.counts.shape == (10,)

    def test_conv_preset_shapes(self):
        conv, fc = architecture("conv", (2, 34, 34), 10)
        assert (conv.kind, conv.out_size, conv.kernel, conv.stride) == ("conv", 8, 5, 2)
        assert fc.in_size == 8 * 17 * 17

    def test_unknown_preset(self):
        with pytest.raises(InvalidParamsError):
            build_model("resnet", (2, 8, 8), 2)

    def test_seeded_initialisation(self):
        a = build_model("mlp", (2, 4, 4), 2, seed=3)
        b = build_model("mlp", (2, 4, 4), 2, seed=3)
        assert all(torch.equal(p, q) for p, q in zip(a.parameters(), b.parameters()))
        assert all(torch.count_nonzero(op.bias) == 0 for op in a.ops)


class TestGradients:
    @pytest.mark.parametrize("case", range(50))
    def test_surrogate_chain_matches_finite_differences(self, tiny_model, case):
        rng = np.random.default_rng(case)
        x = rng.random((2, 3, 3, 4))
        direction = rng.normal(size=x.shape)
        direction /= np.linalg.norm(direction)
        target = case % 3
        h = 1e-5

        grad = input_gradient(tiny_model, x, target, loss="sparse", smooth=True)
        analytic = float((grad * direction).sum())
        numeric = (loss_value(tiny_model, x + h * direction, target, smooth=True)
                   - loss_value(tiny_model, x - h * direction, target, smooth=True)) / (2 * h)
        assert abs(analytic - numeric) <= 1e-4 * max(abs(numeric), abs(analytic), 1e-3)

    def test_zero_weights_give_zero_gradient(self, rng):
        model = SnnModel([LayerSpec("linear", 18, 3)], (2, 3, 3), 3).double()
        torch.nn.init.zeros_(model.ops[0].weight)
        torch.nn.init.zeros_(model.ops[0].bias)
        x = rng.random((2, 3, 3, 4))
        for loss in ("sparse", "cross_entropy"):
            assert not input_gradient(model, x, 1, loss=loss).any()

    def test_cross_entropy_gradient_has_input_shape(self, tiny_model, rng):
        x = rng.random((2, 3, 3, 4))
        grad = input_gradient(tiny_model, x, 1, loss="cross_entropy")
        assert grad.shape == x.shape

    def test_unknown_loss(self, tiny_model):
        with pytest.raises(InvalidParamsError):
            input_gradient(tiny_model, np.zeros((2, 3, 3, 2)), 0, loss="hinge")

    def test_sparse_loss_values(self):
        p = torch.tensor([0.0, 0.5], dtype=torch.float64)
        assert sparse_loss(p).tolist() == pytest.approx([0.0, math.log(2.0)])
        assert torch.isfinite(sparse_loss(torch.tensor([1.0], dtype=torch.float64))).all()


def separable_dataset(samples_per_class=6):
    """Class 0 lights the left column, class 1 the right column."""
    values = np.zeros((2 * samples_per_class, 2, 4, 4, 5), dtype=np.float32)
    values[:samples_per_class, :, :, 0, :] = 1.0
    values[samples_per_class:, :, :, 3, :] = 1.0
    labels = [0] * samples_per_class + [1] * samples_per_class
    return FrameDataset(values, labels, [10] * len(labels))


class TestTraining:
    def test_history_and_determinism(self):
        dataset = separable_dataset()
        runs = []
        for _ in range(2):
            model = build_model("mlp", (2, 4, 4), 2, seed=1)
            model, history = train(model, dataset, epochs=3, lr=0.05, batch=4, seed=1, test_set=dataset)
            runs.append((model, history))
        (m1, h1), (m2, h2) = runs
        assert [e.epoch for e in h1.epochs] == [1, 2, 3]
        assert all(e.test_accuracy is not None for e in h1.epochs)
        assert h1.to_dict() == h2.to_dict()
        assert all(torch.equal(p, q) for p, q in zip(m1.parameters(), m2.parameters()))

    def test_zero_learning_rate_leaves_weights_unchanged(self):
        model = build_model("mlp", (2, 4, 4), 2, seed=0)
        before = [p.detach().clone() for p in model.parameters()]
        train(model, separable_dataset(), epochs=2, lr=0.0, batch=4, seed=0)
        assert all(torch.equal(p, q) for p, q in zip(before, model.parameters()))

    def test_separable_classes_are_learned_within_twenty_epochs(self):
        dataset = separable_dataset(samples_per_class=12)
        model = build_model("mlp", (2, 4, 4), 2, seed=0)
        _, history = train(model, dataset, epochs=20, lr=0.1, batch=4, seed=0, test_set=dataset)
        assert max(e.test_accuracy for e in history.epochs) >= 0.99

    def test_untrained_network_scores_near_chance(self, rng):
        values = (rng.random((400, 2, 8, 8, 5)) < 0.2).astype(np.float32)
        labels = [i % 10 for i in range(400)]
        dataset = FrameDataset(values, labels, [10] * 400)
        accuracy = evaluate(build_model("mlp", (2, 8, 8), 10, seed=0), dataset)
        assert accuracy == pytest.approx(0.1, abs=0.05)

    def test_evaluate_range(self):
        dataset = separable_dataset()
        accuracy = evaluate(build_model("mlp", (2, 4, 4), 2, seed=0), dataset)
        assert 0.0 <= accuracy <= 1.0

    def test_empty_dataset(self):
        empty = FrameDataset(np.zeros((0, 2, 4, 4, 5)), [], [])
        model = build_model("mlp", (2, 4, 4), 2)
        with pytest.raises(EmptyDatasetError):
            evaluate(model, empty)
        with pytest.raises(EmptyDatasetError):
            train(model, empty, epochs=1, lr=0.1, batch=2, seed=0)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        model = build_model("conv", (2, 12, 12), 4, neuron=NeuronParams(v_th=0.7, leak=0.8), seed=2)
        path = tmp_path / "model.snn"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.specs == model.specs
        assert loaded.input_shape == (2, 12, 12)
        assert all(torch.equal(p, q) for p, q in zip(model.parameters(), loaded.parameters()))
        x = (rng.random((3, 2, 12, 12, 4)) < 0.3).astype(np.float32)
        assert predict(loaded, x).tolist() == predict(model, x).tolist()

    def test_header_magic(self, tmp_path):
        path = tmp_path / "model.snn"
        save_checkpoint(build_model("mlp", (2, 2, 2), 2), path)
        assert path.read_bytes()[:4] == b"SNN1"

    def test_missing(self, tmp_path):
        with pytest.raises(MissingModelError):
            load_checkpoint(tmp_path / "none.snn")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.snn"
        path.write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(BadMagicError):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "model.snn"
        save_checkpoint(build_model("mlp", (2, 2, 2), 2), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(TruncatedFileError):
            load_checkpoint(path)


def test_init_weights_bounds():
    model = SnnModel([LayerSpec("linear", 12, 5), LayerSpec("linear", 5, 2)], (3, 2, 2), 2)
    init_weights(model)
    for op in model.ops:
        bound = math.sqrt(3.0 / op.weight.shape[1])
        assert op.weight.abs().max() <= bound


def test_more_input_events_never_reduce_first_layer_spikes(rng):
    neuron = NeuronParams(v_th=1.0, leak=1.0)
    model = SnnModel([LayerSpec("linear", 18, 5, neuron=neuron), LayerSpec("linear", 5, 2, neuron=neuron)],
                     (2, 3, 3), 2).double()
    with torch.no_grad():
        for op in model.ops:
            op.weight.uniform_(0.0, 0.6)
            op.bias.zero_()
    for _ in range(20):
        x = (rng.random((2, 3, 3, 6)) < 0.3).astype(np.float64)
        extra = np.maximum(x, (rng.random(x.shape) < 0.3).astype(np.float64))
        _, base = lif_forward(model, x)
        _, more = lif_forward(model, extra)
        assert (more.spikes[0].sum(axis=-1) >= base.spikes[0].sum(axis=-1)).all()
