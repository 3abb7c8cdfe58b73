"""Stream builders, hypothesis strategies and stub classifiers shared by the test suites."""
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from hypothesis import strategies as st

from models import EventStream, FrameDataset, FrameTensor


def make_stream(events: Iterable[Tuple[int, int, int, int]], width: int = 8, height: int = 8,
                duration: Optional[int] = None) -> EventStream:
    """Stream from (x, y, polarity, timestamp) tuples."""
    events = list(events)
    ts = [e[3] for e in events]
    return EventStream(
        width=width,
        height=height,
        duration=duration if duration is not None else (max(ts) if ts else 0),
        x=[e[0] for e in events],
        y=[e[1] for e in events],
        polarity=[e[2] for e in events],
        timestamp=ts,
    )


@st.composite
def valid_streams(draw, max_side: int = 8, max_events: int = 60, max_time: int = 2000) -> EventStream:
    width = draw(st.integers(1, max_side))
    height = draw(st.integers(1, max_side))
    n = draw(st.integers(0, max_events))
    xs = draw(st.lists(st.integers(0, width - 1), min_size=n, max_size=n))
    ys = draw(st.lists(st.integers(0, height - 1), min_size=n, max_size=n))
    ps = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    ts = sorted(draw(st.lists(st.integers(0, max_time), min_size=n, max_size=n)))
    return EventStream(width=width, height=height, duration=max_time, x=xs, y=ys, polarity=ps, timestamp=ts)


@st.composite
def binary_tensors(draw, channels: int = 2, max_side: int = 6, max_bins: int = 5) -> FrameTensor:
    h = draw(st.integers(1, max_side))
    w = draw(st.integers(1, max_side))
    t = draw(st.integers(1, max_bins))
    seed = draw(st.integers(0, 2 ** 31 - 1))
    values = np.random.default_rng(seed).integers(0, 2, size=(channels, h, w, t)).astype(np.float32)
    bin_duration = draw(st.integers(1, 1000))
    return FrameTensor(values=values, bin_duration=bin_duration)


def zero_dataset(samples: int = 3, size: int = 8, t_bins: int = 4, labels: Optional[Sequence[int]] = None,
                 channels: int = 2) -> FrameDataset:
    labels = list(labels) if labels is not None else [i % 2 for i in range(samples)]
    return FrameDataset(
        values=np.zeros((samples, channels, size, size, t_bins), dtype=np.float32),
        labels=labels,
        bin_durations=[100] * samples,
    )


class ConstantModel:
    """Always predicts the same class."""

    def __init__(self, label: int):
        self.label = label
        self.calls = 0

    def predict(self, values: np.ndarray) -> np.ndarray:
        self.calls += 1
        return np.full(len(values), self.label, dtype=np.int64)


class PixelTriggerModel:
    """Predicts ``wrong`` once any cell at pixel (row, col) is set, else ``right``."""

    def __init__(self, row: int, col: int, right: int = 0, wrong: int = 1):
        self.row, self.col, self.right, self.wrong = row, col, right, wrong

    def predict(self, values: np.ndarray) -> np.ndarray:
        hit = (values[:, :, self.row, self.col, :] > 0).any(axis=(1, 2))
        return np.where(hit, self.wrong, self.right).astype(np.int64)
