"""Leaky integrate-and-fire classifier trained with fast-sigmoid surrogate gradients.

Per time step and layer::

    V <- leak * V + W x_t
    s  = [V >= V_th]
    V <- V - s * V_th

The readout is the spike count of the last layer over all time bins; class
probabilities are the softmax of those counts.
"""
import json
import logging
import math
import struct
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from tqdm import tqdm

from config import progress_disabled
from errors import (
    BadMagicError,
    EmptyDatasetError,
    InvalidParamsError,
    MissingModelError,
    ShapeMismatchError,
    TruncatedFileError,
)
from models import (
    EpochRecord,
    ForwardTrace,
    FrameDataset,
    FrameTensor,
    LayerSpec,
    NeuronParams,
    Prediction,
    SurrogateConfig,
    TrainHistory,
)

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SNN1"
CHECKPOINT_VERSION = 1
PREDICT_BATCH = 64

ArrayLike = Union[FrameTensor, np.ndarray]


class SpikeFunction(torch.autograd.Function):
    """Heaviside spike with the fast-sigmoid pseudo-derivative 1 / (1 + slope*|z|)^2."""

    @staticmethod
    def forward(ctx, z, slope):
        ctx.save_for_backward(z)
        ctx.slope = slope
        return (z >= 0).to(z.dtype)

    @staticmethod
    def backward(ctx, grad_output):
        (z,) = ctx.saved_tensors
        return grad_output / (1.0 + ctx.slope * z.abs()) ** 2, None


spike_fn = SpikeFunction.apply


def smooth_spike(z: torch.Tensor, slope: float) -> torch.Tensor:
    """Primitive of the surrogate derivative; its autograd derivative equals SpikeFunction's backward."""
    return 0.5 + z / (1.0 + slope * z.abs())


def _conv_out(size: int, spec: LayerSpec) -> int:
    return (size + 2 * spec.padding - spec.kernel) // spec.stride + 1


class SnnModel(nn.Module):
    """Stack of conv / linear layers, each followed by LIF dynamics."""

    def __init__(self, layers: Sequence[LayerSpec], input_shape: Tuple[int, int, int],
                 num_classes: int, surrogate: SurrogateConfig = SurrogateConfig()):
        super().__init__()
        self.specs = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.num_classes = int(num_classes)
        self.surrogate = surrogate
        if not self.specs:
            raise ShapeMismatchError("a model needs at least one layer")

        ops = []
        shape: Tuple[int, ...] = self.input_shape
        for index, spec in enumerate(self.specs):
            if spec.kind == "conv":
                if len(shape) != 3 or shape[0] != spec.in_size:
                    raise ShapeMismatchError(f"layer {index}: conv expects {spec.in_size} channels, got shape {shape}")
                ops.append(nn.Conv2d(spec.in_size, spec.out_size, spec.kernel,
                                     stride=spec.stride, padding=spec.padding))
                shape = (spec.out_size, _conv_out(shape[1], spec), _conv_out(shape[2], spec))
                if min(shape[1:]) < 1:
                    raise ShapeMismatchError(f"layer {index}: conv output is empty")
            elif spec.kind == "linear":
                if int(np.prod(shape)) != spec.in_size:
                    raise ShapeMismatchError(
                        f"layer {index}: linear expects {spec.in_size} inputs, got {int(np.prod(shape))}")
                ops.append(nn.Linear(spec.in_size, spec.out_size))
                shape = (spec.out_size,)
            else:
                raise InvalidParamsError(f"unknown layer kind {spec.kind!r}")
        if shape != (self.num_classes,):
            raise ShapeMismatchError(f"last layer produces {shape}, expected ({self.num_classes},)")
        self.ops = nn.ModuleList(ops)

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def check_input(self, values: np.ndarray) -> None:
        """values: (B, C, H, W, T)."""
        if values.ndim != 5 or tuple(values.shape[1:4]) != self.input_shape:
            raise ShapeMismatchError(
                f"model expects (C, H, W) = {self.input_shape}, got input shape {tuple(values.shape)}")

    def forward(self, x: torch.Tensor, smooth: bool = False, record: bool = False):
        """
        Run the network over all time bins.

        Args:
            x: Input (B, C, H, W, T)
            smooth: Use the surrogate primitive instead of the Heaviside spike
            record: Also return per-layer spike and potential traces

        Returns:
            Output spike counts (B, classes), plus (spikes, potentials) lists when recording
        """
        slope = self.surrogate.slope
        potentials: List[Optional[torch.Tensor]] = [None] * len(self.ops)
        spikes_rec: List[List[torch.Tensor]] = [[] for _ in self.ops]
        volts_rec: List[List[torch.Tensor]] = [[] for _ in self.ops]
        counts = torch.zeros(x.shape[0], self.num_classes, dtype=x.dtype, device=x.device)

        for t in range(x.shape[-1]):
            h = x[..., t]
            for k, (spec, op) in enumerate(zip(self.specs, self.ops)):
                if spec.kind == "linear":
                    h = h.flatten(1)
                current = op(h)
                v = current if potentials[k] is None else spec.neuron.leak * potentials[k] + current
                v_th = spec.neuron.v_th
                if math.isinf(v_th):
                    s = torch.zeros_like(v)
                    potentials[k] = v
                else:
                    z = v - v_th
                    s = smooth_spike(z, slope) if smooth else spike_fn(z, slope)
                    potentials[k] = v - s * v_th
                if record:
                    spikes_rec[k].append(s.detach())
                    volts_rec[k].append(v.detach())
                h = s
            counts = counts + h

        if not record:
            return counts
        spikes = [torch.stack(layer, dim=-1) for layer in spikes_rec]
        volts = [torch.stack(layer, dim=-1) for layer in volts_rec]
        return counts, spikes, volts

    def predict(self, values: np.ndarray) -> np.ndarray:
        """Arg-max class per sample of a (B, C, H, W, T) array; ties go to the lowest index."""
        return predict(self, values)


def to_torch(model: SnnModel, values: np.ndarray) -> torch.Tensor:
    array = np.ascontiguousarray(values, dtype=np.float64 if model.dtype == torch.float64 else np.float32)
    return torch.from_numpy(array.copy())


def _as_batch(model: SnnModel, sample: ArrayLike) -> np.ndarray:
    values = sample.values if isinstance(sample, FrameTensor) else np.asarray(sample)
    batch = values[None]
    model.check_input(batch)
    return batch


def softmax(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    shifted = np.exp(counts - counts.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def lif_forward(model: SnnModel, sample: ArrayLike, smooth: bool = False) -> Tuple[Prediction, ForwardTrace]:
    """
    Classify one sample and record the network state.

    Args:
        model: Network
        sample: FrameTensor or (C, H, W, T) array matching the model input
        smooth: Use the smooth surrogate primitive instead of spikes

    Returns:
        (Prediction, ForwardTrace with per-layer spikes and pre-reset potentials)
    """
    batch = _as_batch(model, sample)
    with torch.no_grad():
        counts, spikes, volts = model(to_torch(model, batch), smooth=smooth, record=True)
    counts_np = counts[0].double().numpy()
    probabilities = softmax(counts_np)
    prediction = Prediction(counts=counts_np, probabilities=probabilities, label=int(np.argmax(counts_np)))
    trace = ForwardTrace(
        spikes=[s[0].double().numpy() for s in spikes],
        potentials=[v[0].double().numpy() for v in volts],
    )
    return prediction, trace


def predict(model: SnnModel, values: np.ndarray, batch_size: int = PREDICT_BATCH) -> np.ndarray:
    """Arg-max class of each (C, H, W, T) sample, evaluated in batches without gradients."""
    values = np.asarray(values)
    model.check_input(values)
    labels = []
    with torch.no_grad():
        for start in range(0, len(values), batch_size):
            counts = model(to_torch(model, values[start:start + batch_size]))
            labels.append(torch.argmax(counts, dim=1).numpy())
    return np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64)


def sparse_loss(prob: torch.Tensor) -> torch.Tensor:
    """-log(1 - prob): small when the true-class probability is small."""
    eps = torch.finfo(prob.dtype).eps
    return -torch.log1p(-prob.clamp(max=1.0 - eps))


def attack_loss(counts: torch.Tensor, target: int, kind: str = "sparse") -> torch.Tensor:
    if kind == "sparse":
        prob = torch.softmax(counts, dim=-1)[:, target]
        return sparse_loss(prob).sum()
    if kind == "cross_entropy":
        labels = torch.full((counts.shape[0],), int(target), dtype=torch.long)
        return F.cross_entropy(counts, labels, reduction="sum")
    raise InvalidParamsError(f"unknown loss {kind!r}; expected 'sparse' or 'cross_entropy'")


def loss_value(model: SnnModel, sample: ArrayLike, target: int, loss: str = "sparse",
               smooth: bool = False) -> float:
    batch = _as_batch(model, sample)
    with torch.no_grad():
        return float(attack_loss(model(to_torch(model, batch), smooth=smooth), target, loss))


def input_gradient(model: SnnModel, sample: ArrayLike, target: int, loss: str = "sparse",
                   smooth: bool = False) -> np.ndarray:
    """
    Gradient of the loss with respect to the input, back-propagated through time.

    Args:
        model: Network
        sample: FrameTensor or (C, H, W, T) array (values need not be clamped)
        target: Class whose probability enters the loss
        loss: "sparse" for -log(1 - p_target), "cross_entropy" for -log(p_target)
        smooth: Differentiate the smooth forward instead of the spiking one

    Returns:
        Array shaped like the sample
    """
    x = to_torch(model, _as_batch(model, sample)).requires_grad_(True)
    value = attack_loss(model(x, smooth=smooth), target, loss)
    (grad,) = torch.autograd.grad(value, x)
    return grad[0].detach().numpy()


def evaluate(model: SnnModel, dataset: FrameDataset) -> float:
    """Fraction of samples whose arg-max class equals the label."""
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    return float(np.mean(predict(model, dataset.values) == dataset.labels))


def train(model: SnnModel, dataset: FrameDataset, epochs: int, lr: float, batch: int, seed: int,
          test_set: Optional[FrameDataset] = None) -> Tuple[SnnModel, TrainHistory]:
    """
    Minimize cross-entropy on spike-count softmax with plain SGD.

    Args:
        model: Network, updated in place
        dataset: Labeled binary tensors
        epochs: Passes over the data
        lr: SGD learning rate
        batch: Mini-batch size
        seed: Seed for the shuffling order
        test_set: Optional held-out set scored after every epoch

    Returns:
        (model, per-epoch history)
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    if batch < 1 or epochs < 0 or lr < 0:
        raise InvalidParamsError(f"bad training parameters: epochs={epochs}, lr={lr}, batch={batch}")
    model.check_input(dataset.values)

    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    optimizer = torch.optim.SGD(model.parameters(), lr=lr)
    labels = torch.as_tensor(dataset.labels, dtype=torch.long)
    history = TrainHistory()
    n = len(dataset)

    for epoch in tqdm(range(epochs), desc="train", disable=progress_disabled()):
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            counts = model(to_torch(model, dataset.values[idx]))
            loss = F.cross_entropy(counts, labels[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total_loss += loss.item() * len(idx)
            correct += int((counts.detach().argmax(dim=1) == labels[idx]).sum())

        record = EpochRecord(
            epoch=epoch + 1,
            loss=total_loss / n,
            train_accuracy=correct / n,
            test_accuracy=evaluate(model, test_set) if test_set is not None and len(test_set) else None,
        )
        history.epochs.append(record)
        logger.info("epoch %d loss=%.4f train=%.3f test=%s", record.epoch, record.loss,
                    record.train_accuracy, record.test_accuracy)
    return model, history


# ---------------------------------------------------------------------------
# Architectures
# ---------------------------------------------------------------------------

ARCHITECTURES = ("mlp", "conv", "gesture")


def architecture(arch: str, input_shape: Tuple[int, int, int], num_classes: int,
                 neuron: NeuronParams = NeuronParams()) -> List[LayerSpec]:
    """
    Layer list of a preset.

    mlp: two fully-connected layers; conv: one conv + one FC (desk default);
    gesture: two conv + two FC.
    """
    c, h, w = input_shape
    if arch == "mlp":
        return [
            LayerSpec("linear", c * h * w, 128, neuron=neuron),
            LayerSpec("linear", 128, num_classes, neuron=neuron),
        ]
    if arch == "conv":
        conv = LayerSpec("conv", c, 8, kernel=5, stride=2, padding=2, neuron=neuron)
        flat = 8 * _conv_out(h, conv) * _conv_out(w, conv)
        return [conv, LayerSpec("linear", flat, num_classes, neuron=neuron)]
    if arch == "gesture":
        conv1 = LayerSpec("conv", c, 8, kernel=5, stride=2, padding=2, neuron=neuron)
        h1, w1 = _conv_out(h, conv1), _conv_out(w, conv1)
        conv2 = LayerSpec("conv", 8, 16, kernel=3, stride=2, padding=1, neuron=neuron)
        flat = 16 * _conv_out(h1, conv2) * _conv_out(w1, conv2)
        return [
            conv1,
            conv2,
            LayerSpec("linear", flat, 64, neuron=neuron),
            LayerSpec("linear", 64, num_classes, neuron=neuron),
        ]
    raise InvalidParamsError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")


def init_weights(model: SnnModel) -> None:
    """Uniform(-sqrt(3/fan_in), sqrt(3/fan_in)) weights, zero biases."""
    for op in model.ops:
        nn.init.kaiming_uniform_(op.weight, nonlinearity="linear")
        nn.init.zeros_(op.bias)


def build_model(arch: str, input_shape: Tuple[int, int, int], num_classes: int,
                neuron: NeuronParams = NeuronParams(), surrogate: SurrogateConfig = SurrogateConfig(),
                seed: int = 0) -> SnnModel:
    torch.manual_seed(seed)
    model = SnnModel(architecture(arch, input_shape, num_classes, neuron), input_shape, num_classes, surrogate)
    init_weights(model)
    return model


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: SnnModel, path: Union[str, Path]) -> None:
    """
    Write ``SNN1`` magic, u32 version, u32 header length, JSON header, then f32 LE parameters.
    """
    params = list(model.state_dict().items())
    header = {
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "surrogate": {"slope": model.surrogate.slope},
        "layers": [spec.to_dict() for spec in model.specs],
        "params": [[name, list(tensor.shape)] for name, tensor in params],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for _, tensor in params:
            f.write(tensor.detach().cpu().numpy().astype("<f4").tobytes())


def load_checkpoint(path: Union[str, Path]) -> SnnModel:
    path = Path(path)
    if not path.is_file():
        raise MissingModelError(f"model checkpoint not found: {path}")
    data = path.read_bytes()
    prefix = len(CHECKPOINT_MAGIC) + 8
    if len(data) < prefix:
        raise TruncatedFileError(f"checkpoint {path} is too short")
    if data[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise BadMagicError(f"{path} is not a model checkpoint")
    version, header_len = struct.unpack("<II", data[len(CHECKPOINT_MAGIC):prefix])
    if version != CHECKPOINT_VERSION:
        raise BadMagicError(f"unsupported checkpoint version {version}")
    if len(data) < prefix + header_len:
        raise TruncatedFileError(f"checkpoint {path} header is cut short")
    header = json.loads(data[prefix:prefix + header_len].decode("utf-8"))

    model = SnnModel(
        [LayerSpec.from_dict(layer) for layer in header["layers"]],
        tuple(header["input_shape"]),
        header["num_classes"],
        SurrogateConfig(slope=header["surrogate"]["slope"]),
    )
    offset = prefix + header_len
    state = {}
    for name, shape in header["params"]:
        count = int(np.prod(shape))
        if len(data) < offset + 4 * count:
            raise TruncatedFileError(f"checkpoint {path} parameters are cut short")
        array = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        state[name] = torch.from_numpy(array.astype(np.float32))
        offset += 4 * count
    model.load_state_dict(state)
    return model
