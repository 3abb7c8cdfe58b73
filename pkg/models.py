"""Data models shared across the event pipeline, filters, network, attacks and harness."""
import math
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from errors import InvalidParamsError, MalformedTensorError, InvalidBudgetError


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Events and tensors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    """A single DVS event: pixel column, pixel row, polarity channel, time in µs."""
    x: int
    y: int
    polarity: int
    timestamp: int


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-ordered events of one recording, stored column-wise.

    Construction does not enforce the stream invariants so that invalid input
    can be represented and reported by ``event_core.validate_stream``.
    """
    width: int
    height: int
    duration: int
    x: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    polarity: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    timestamp: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def __post_init__(self):
        columns = {}
        for name in ("x", "y", "polarity", "timestamp"):
            columns[name] = _frozen_array(np.asarray(getattr(self, name)).reshape(-1), np.int64)
            object.__setattr__(self, name, columns[name])
        lengths = {len(col) for col in columns.values()}
        if len(lengths) > 1:
            raise MalformedTensorError(f"event columns have different lengths: {sorted(lengths)}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "duration", int(self.duration))

    @classmethod
    def from_events(cls, events: Sequence[Event], width: int, height: int,
                    duration: Optional[int] = None) -> "EventStream":
        """Build a stream from Event objects; duration defaults to the last timestamp."""
        events = list(events)
        ts = [e.timestamp for e in events]
        if duration is None:
            duration = max(ts) if ts else 0
        return cls(
            width=width,
            height=height,
            duration=duration,
            x=[e.x for e in events],
            y=[e.y for e in events],
            polarity=[e.polarity for e in events],
            timestamp=ts,
        )

    def __len__(self) -> int:
        return len(self.timestamp)

    def __iter__(self) -> Iterator[Event]:
        for x, y, p, t in zip(self.x, self.y, self.polarity, self.timestamp):
            yield Event(int(x), int(y), int(p), int(t))

    @property
    def events(self) -> List[Event]:
        return list(self)

    def select(self, keep: np.ndarray) -> "EventStream":
        """Return the subsequence of events where ``keep`` is true, order preserved."""
        keep = np.asarray(keep, dtype=bool)
        return EventStream(
            width=self.width,
            height=self.height,
            duration=self.duration,
            x=self.x[keep],
            y=self.y[keep],
            polarity=self.polarity[keep],
            timestamp=self.timestamp[keep],
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            (self.width, self.height, self.duration) == (other.width, other.height, other.duration)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.polarity, other.polarity)
            and np.array_equal(self.timestamp, other.timestamp)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FrameTensor:
    """Dense (C, H, W, T) binning of an event stream with values in [0, 1].

    ``values[p][y][x][t]`` is the spike intensity of polarity ``p`` at pixel
    (x, y) during time bin ``t``; each bin spans ``bin_duration`` µs.
    """
    values: np.ndarray
    bin_duration: int

    def __post_init__(self):
        values = _frozen_array(self.values, np.float32)
        if values.ndim != 4:
            raise MalformedTensorError(f"expected a (C, H, W, T) array, got shape {values.shape}")
        if values.size and (np.isnan(values).any() or values.min() < 0.0 or values.max() > 1.0):
            raise MalformedTensorError("tensor values must lie in [0, 1]")
        if int(self.bin_duration) < 1:
            raise MalformedTensorError(f"bin_duration must be >= 1, got {self.bin_duration}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bin_duration", int(self.bin_duration))

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def frames(self) -> int:
        return self.values.shape[3]

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return tuple(self.values.shape)

    def is_binary(self) -> bool:
        return bool(np.isin(self.values, (0.0, 1.0)).all())

    def replace(self, values: np.ndarray) -> "FrameTensor":
        return FrameTensor(values=values, bin_duration=self.bin_duration)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrameTensor):
            return NotImplemented
        return self.bin_duration == other.bin_duration and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class StreamValidation:
    """Outcome of ``validate_stream``: ok, or the first violation found."""
    ok: bool
    kind: Optional[str] = None
    index: Optional[int] = None
    message: str = ""


@dataclass(frozen=True)
class MotionPattern:
    """Trajectory of the blob that generated a synthetic sample."""
    label: int
    start: Tuple[float, float]
    end: Tuple[float, float]
    radius: float

    def center_at(self, fraction: float) -> Tuple[float, float]:
        fraction = min(max(fraction, 0.0), 1.0)
        return (
            self.start[0] + (self.end[0] - self.start[0]) * fraction,
            self.start[1] + (self.end[1] - self.start[1]) * fraction,
        )


@dataclass(frozen=True)
class LabeledStream:
    stream: EventStream
    label: int
    pattern: Optional[MotionPattern] = None


@dataclass(frozen=True, eq=False)
class FrameDataset:
    """Stacked binned samples: values (S, C, H, W, T), labels (S,), per-sample bin durations."""
    values: np.ndarray
    labels: np.ndarray
    bin_durations: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float32))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "bin_durations", np.asarray(self.bin_durations, dtype=np.int64).reshape(-1))
        if self.values.ndim != 5:
            raise MalformedTensorError(f"expected (S, C, H, W, T) values, got shape {self.values.shape}")
        if not (len(self.values) == len(self.labels) == len(self.bin_durations)):
            raise MalformedTensorError("values, labels and bin_durations must have the same length")

    @classmethod
    def from_tensors(cls, tensors: Sequence[FrameTensor], labels: Sequence[int]) -> "FrameDataset":
        tensors = list(tensors)
        if not tensors:
            return cls(np.zeros((0, 2, 1, 1, 1), np.float32), np.zeros(0, np.int64), np.zeros(0, np.int64))
        return cls(
            values=np.stack([t.values for t in tensors]),
            labels=list(labels),
            bin_durations=[t.bin_duration for t in tensors],
        )

    def __len__(self) -> int:
        return len(self.labels)

    def sample(self, index: int) -> FrameTensor:
        return FrameTensor(self.values[index], int(self.bin_durations[index]))

    def tensors(self) -> List[FrameTensor]:
        return [self.sample(i) for i in range(len(self))]

    def with_values(self, values: np.ndarray) -> "FrameDataset":
        return FrameDataset(values=values, labels=self.labels, bin_durations=self.bin_durations)


# ---------------------------------------------------------------------------
# Filters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BafParams:
    """Background Activity Filter: spatial radius S (pixels), window T (µs)."""
    s: int
    t: float

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 1:
            raise InvalidParamsError(f"BAF S must be an integer >= 1, got {self.s}")
        if not self.t > 0:
            raise InvalidParamsError(f"BAF T must be > 0, got {self.t}")


@dataclass(frozen=True)
class MfParams:
    """Mask Filter: a pixel is masked when its event count exceeds T."""
    t: float

    def __post_init__(self):
        if not self.t >= 0:
            raise InvalidParamsError(f"MF T must be >= 0, got {self.t}")


@dataclass(frozen=True, eq=False)
class ActivityMask:
    activity: np.ndarray
    mask: np.ndarray


def _format_number(value: float) -> str:
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


@dataclass(frozen=True)
class FilterSpec:
    """Which defense to apply: ``none``, ``baf`` or ``mf`` plus its parameters."""
    kind: str = "none"
    baf: Optional[BafParams] = None
    mf: Optional[MfParams] = None

    @property
    def label(self) -> str:
        if self.kind == "baf":
            return f"baf:S={self.baf.s},T={_format_number(self.baf.t)}"
        if self.kind == "mf":
            return f"mf:T={_format_number(self.mf.t)}"
        return "none"

    @property
    def params(self) -> Dict[str, Any]:
        if self.kind == "baf":
            return {"S": self.baf.s, "T": self.baf.t}
        if self.kind == "mf":
            return {"T": self.mf.t}
        return {}


# ---------------------------------------------------------------------------
# Spiking network
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NeuronParams:
    """LIF neuron: firing threshold and per-step leak; reset is by subtraction."""
    v_th: float = 1.0
    leak: float = 0.9

    def __post_init__(self):
        if not self.v_th > 0:
            raise InvalidParamsError(f"V_th must be > 0, got {self.v_th}")
        if not 0 < self.leak <= 1:
            raise InvalidParamsError(f"leak must be in (0, 1], got {self.leak}")


@dataclass(frozen=True)
class SurrogateConfig:
    """Fast-sigmoid pseudo-derivative 1 / (1 + slope * |V - V_th|)^2."""
    slope: float = 5.0

    def __post_init__(self):
        if not self.slope > 0:
            raise InvalidParamsError(f"surrogate slope must be > 0, got {self.slope}")


@dataclass(frozen=True)
class LayerSpec:
    """One network layer followed by LIF dynamics.

    For ``linear`` layers ``in_size``/``out_size`` are feature counts; for
    ``conv`` layers they are channel counts and kernel/stride/padding apply.
    """
    kind: str
    in_size: int
    out_size: int
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    neuron: NeuronParams = field(default_factory=NeuronParams)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LayerSpec":
        neuron = data.get("neuron", {})
        return cls(
            kind=data["kind"],
            in_size=data["in_size"],
            out_size=data["out_size"],
            kernel=data.get("kernel", 1),
            stride=data.get("stride", 1),
            padding=data.get("padding", 0),
            neuron=NeuronParams(v_th=neuron.get("v_th", 1.0), leak=neuron.get("leak", 0.9)),
        )


@dataclass(frozen=True, eq=False)
class Prediction:
    counts: np.ndarray
    probabilities: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    """Per-layer spike trains and membrane potentials, each shaped (units..., T)."""
    spikes: List[np.ndarray]
    potentials: List[np.ndarray]


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_accuracy: float
    test_accuracy: Optional[float] = None


@dataclass
class TrainHistory:
    epochs: List[EpochRecord] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"epochs": [asdict(e) for e in self.epochs]}


# ---------------------------------------------------------------------------
# Attacks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SparseConfig:
    """Sparse Attack settings; ``frames`` None means the first ceil(T/4) bins."""
    frames: Optional[Tuple[int, ...]] = None
    max_iteration: int = 50
    eta: float = 0.1
    threshold: float = 0.5

    def __post_init__(self):
        if self.frames is not None:
            object.__setattr__(self, "frames", tuple(int(f) for f in self.frames))
            if not self.frames:
                raise InvalidParamsError("sparse attack frame mask must not be empty")
        if self.max_iteration < 1:
            raise InvalidParamsError(f"max_iteration must be >= 1, got {self.max_iteration}")
        if not self.eta > 0:
            raise InvalidParamsError(f"eta must be > 0, got {self.eta}")
        if not 0.0 < self.threshold < 1.0:
            raise InvalidParamsError(f"binarization threshold must be in (0, 1), got {self.threshold}")

    def mask_frames(self, t_bins: int) -> Tuple[int, ...]:
        if self.frames is None:
            return tuple(range(math.ceil(t_bins / 4)))
        bad = [f for f in self.frames if not 0 <= f < t_bins]
        if bad:
            raise InvalidParamsError(f"mask bins {bad} outside [0, {t_bins})")
        return self.frames


@dataclass(frozen=True)
class GeometryConfig:
    """
    Corner/Dash loop bound (in full four-corner rotations) and accumulation mode.

    ``accumulate`` None leaves the choice to the attack: Corner keeps earlier
    passes, Dash starts every pass from the clean sample.
    """
    max_cycles: int = 40
    accumulate: Optional[bool] = None

    def __post_init__(self):
        if self.max_cycles < 1:
            raise InvalidParamsError(f"max_cycles must be >= 1, got {self.max_cycles}")

    def accumulates(self, default: bool) -> bool:
        return default if self.accumulate is None else bool(self.accumulate)


@dataclass(frozen=True)
class MfAwareConfig:
    """MF-aware Dash: frames per dash position, loop bound, and whether passes build on each other."""
    th0: int = 5
    max_cycles: int = 40
    accumulate: bool = True

    def __post_init__(self):
        if int(self.th0) != self.th0 or self.th0 < 1:
            raise InvalidBudgetError(f"th0 must be an integer >= 1, got {self.th0}")
        if self.max_cycles < 1:
            raise InvalidParamsError(f"max_cycles must be >= 1, got {self.max_cycles}")


@dataclass(frozen=True)
class CornerState:
    """Corner Attack geometry: row ``x``, corner extent ``y``, active side ``left``."""
    x: int = 0
    y: int = 2
    left: bool = True


@dataclass(frozen=True)
class DashState:
    x_min: int = 0
    x: int = 0
    y: int = 2
    left: bool = True


@dataclass(frozen=True)
class AttackSpec:
    """Attack kind (``clean``, ``sparse``, ``frame``, ``corner``, ``dash``, ``mfdash``) and params."""
    kind: str = "clean"
    params: Tuple[Tuple[str, Any], ...] = ()

    @property
    def param_dict(self) -> Dict[str, Any]:
        return dict(self.params)

    @property
    def label(self) -> str:
        if not self.params:
            return self.kind
        inner = ",".join(f"{k}={v}" for k, v in self.params)
        return f"{self.kind}:{inner}"


@dataclass
class SampleAttackRecord:
    index: int
    label: int
    prediction: int
    fooled: bool
    iterations: int
    perturbed_cells: int
    l0: int
    perturbed_pixels: int
    event_overhead: float
    converged: Optional[bool] = None
    prob_trace: List[float] = field(default_factory=list)
    state: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SampleAttackRecord":
        return cls(**data)


@dataclass
class AttackReport:
    attack: str
    params: Dict[str, Any]
    samples: List[SampleAttackRecord] = field(default_factory=list)
    remaining_trace: List[int] = field(default_factory=list)
    passes: int = 0

    @property
    def fooled_rate(self) -> float:
        if not self.samples:
            return 0.0
        return sum(s.fooled for s in self.samples) / len(self.samples)

    @property
    def mean_l0(self) -> float:
        if not self.samples:
            return 0.0
        return float(np.mean([s.l0 for s in self.samples]))

    @property
    def mean_event_overhead(self) -> float:
        if not self.samples:
            return 0.0
        return float(np.mean([s.event_overhead for s in self.samples]))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "attack": self.attack,
            "params": self.params,
            "passes": self.passes,
            "remaining_trace": list(self.remaining_trace),
            "fooled_rate": self.fooled_rate,
            "mean_l0": self.mean_l0,
            "mean_event_overhead": self.mean_event_overhead,
            "samples": [s.to_dict() for s in self.samples],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AttackReport":
        return cls(
            attack=data.get("attack", ""),
            params=data.get("params", {}),
            samples=[SampleAttackRecord.from_dict(s) for s in data.get("samples", [])],
            remaining_trace=data.get("remaining_trace", []),
            passes=data.get("passes", 0),
        )


# ---------------------------------------------------------------------------
# Harness
# ---------------------------------------------------------------------------

@dataclass
class GridSpec:
    attacks: List[AttackSpec]
    filters: List[FilterSpec]
    dataset: str = ""
    model: str = ""
    seed: int = 0
    t_bins: int = 20


@dataclass
class GridCell:
    """Accuracy of one (attack, attack params, filter, filter params) combination."""
    attack: str
    attack_params: Dict[str, Any]
    filter: str
    filter_params: Dict[str, Any]
    accuracy: float
    samples: int
    mean_l0: float = 0.0
    event_overhead: float = 0.0
    accuracy_std: float = 0.0
    wall_time_s: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GridCell":
        return cls(
            attack=data.get("attack", ""),
            attack_params=data.get("attack_params", {}),
            filter=data.get("filter", "none"),
            filter_params=data.get("filter_params", {}),
            accuracy=data.get("accuracy", 0.0),
            samples=data.get("samples", 0),
            mean_l0=data.get("mean_l0", 0.0),
            event_overhead=data.get("event_overhead", 0.0),
            accuracy_std=data.get("accuracy_std", 0.0),
            wall_time_s=data.get("wall_time_s", 0.0),
        )


@dataclass
class EvalReport:
    cells: List[GridCell] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def cell(self, attack: str, filter_label: str) -> GridCell:
        for c in self.cells:
            if c.attack == attack and c.filter == filter_label:
                return c
        raise KeyError(f"no cell ({attack}, {filter_label})")

    def to_dict(self) -> Dict[str, Any]:
        return {"metadata": self.metadata, "cells": [c.to_dict() for c in self.cells]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalReport":
        return cls(
            cells=[GridCell.from_dict(c) for c in data.get("cells", [])],
            metadata=data.get("metadata", {}),
        )


@dataclass
class HistoryEntry:
    """One recorded CLI run."""
    timestamp: str
    command: str
    summary: str
    report_path: str = ""
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'HistoryEntry':
        return cls(
            timestamp=data.get('timestamp', ''),
            command=data.get('command', ''),
            summary=data.get('summary', ''),
            report_path=data.get('report_path', ''),
            metadata=data.get('metadata', {}),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'timestamp': self.timestamp,
            'command': self.command,
            'summary': self.summary,
            'report_path': self.report_path,
            'metadata': self.metadata,
        }
