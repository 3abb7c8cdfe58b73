"""Event-stream validation, spatio-temporal binning, noise injection and synthetic data.

The tensor layout is (C, H, W, T): polarity channel, pixel row, pixel column,
time bin. Binning is binary: a cell is 1 when at least one event of that
polarity hit that pixel during that bin.
"""
import logging
import math
from typing import List, Sequence

import numpy as np

from errors import (
    InvalidBinCountError,
    InvalidParamsError,
    NegativeMagnitudeError,
    VIOLATION_ERRORS,
)
from models import (
    EventStream,
    FrameDataset,
    FrameTensor,
    LabeledStream,
    MotionPattern,
    StreamValidation,
)

logger = logging.getLogger(__name__)

CHANNELS = 2
SYNTH_STEPS = 60


def validate_stream(stream: EventStream) -> StreamValidation:
    """
    Check every EventStream invariant and report the first violation.

    Events are scanned in order; at a given index bounds are checked first,
    then polarity, then ordering against the previous event.

    Args:
        stream: Stream to check

    Returns:
        StreamValidation with ok=True, or the violation kind and event index
    """
    n = len(stream)
    if n == 0:
        return StreamValidation(ok=True)

    x, y, p, t = stream.x, stream.y, stream.polarity, stream.timestamp
    out_of_bounds = (
        (x < 0) | (x >= stream.width) | (y < 0) | (y >= stream.height)
        | (t < 0) | (t > stream.duration)
    )
    bad_polarity = (p != 0) & (p != 1)
    unsorted = np.zeros(n, dtype=bool)
    unsorted[1:] = t[1:] < t[:-1]

    bad = out_of_bounds | bad_polarity | unsorted
    if not bad.any():
        return StreamValidation(ok=True)

    i = int(np.argmax(bad))
    if out_of_bounds[i]:
        kind = "OutOfBounds"
        message = (f"event {i} at (x={x[i]}, y={y[i]}, t={t[i]}) outside "
                   f"{stream.width}x{stream.height} sensor / duration {stream.duration}")
    elif bad_polarity[i]:
        kind = "BadPolarity"
        message = f"event {i} has polarity {p[i]}, expected 0 or 1"
    else:
        kind = "UnsortedTimestamps"
        message = f"event {i} timestamp {t[i]} precedes previous timestamp {t[i - 1]}"
    return StreamValidation(ok=False, kind=kind, index=i, message=message)


def ensure_valid(stream: EventStream) -> EventStream:
    """Raise the matching StreamValidationError when the stream is invalid."""
    result = validate_stream(stream)
    if not result.ok:
        raise VIOLATION_ERRORS[result.kind](result.message, index=result.index)
    return stream


def bin_events(stream: EventStream, t_bins: int) -> FrameTensor:
    """
    Bin a valid stream into a binary (2, H, W, T_bins) tensor.

    bin_duration is ceil(duration / T_bins) (at least 1 µs). An event at
    exactly ``duration`` falls in the last bin.

    Args:
        stream: Valid event stream
        t_bins: Number of time bins, >= 1

    Returns:
        Binary FrameTensor

    Raises:
        InvalidBinCountError: If t_bins < 1
    """
    if t_bins < 1:
        raise InvalidBinCountError(f"T_bins must be >= 1, got {t_bins}")
    ensure_valid(stream)

    bin_duration = max(1, -(-stream.duration // t_bins))
    values = np.zeros((CHANNELS, stream.height, stream.width, t_bins), dtype=np.float32)
    if len(stream):
        bins = np.minimum(stream.timestamp // bin_duration, t_bins - 1)
        values[stream.polarity, stream.y, stream.x, bins] = 1.0
    return FrameTensor(values=values, bin_duration=bin_duration)


def tensor_to_events(tensor: FrameTensor, threshold: float = 0.5) -> EventStream:
    """
    Turn every cell >= threshold into one event stamped at its bin center.

    Args:
        tensor: Frame tensor
        threshold: Cell activation threshold in (0, 1)

    Returns:
        Time-sorted stream with duration bin_duration * T_bins
    """
    if not 0.0 < threshold < 1.0:
        raise InvalidParamsError(f"threshold must be in (0, 1), got {threshold}")
    bd = tensor.bin_duration
    # (T, C, H, W) so nonzero() yields events bin by bin
    t, p, y, x = np.nonzero(np.transpose(tensor.values, (3, 0, 1, 2)) >= threshold)
    return EventStream(
        width=tensor.width,
        height=tensor.height,
        duration=bd * tensor.frames,
        x=x,
        y=y,
        polarity=p,
        timestamp=t.astype(np.int64) * bd + bd // 2,
    )


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed for (seed, keys...)."""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def inject_gaussian_noise(tensor: FrameTensor, magnitude: float, seed: int) -> FrameTensor:
    """
    Add independent Normal(0, magnitude^2) noise to every cell and clamp to [0, 1].

    Args:
        tensor: Input tensor
        magnitude: Noise standard deviation, >= 0 (0 returns the input unchanged)
        seed: RNG seed

    Returns:
        Noisy (non-binary) tensor
    """
    if magnitude < 0:
        raise NegativeMagnitudeError(f"noise magnitude must be >= 0, got {magnitude}")
    if magnitude == 0:
        return tensor
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, magnitude, size=tensor.values.shape)
    values = np.clip(tensor.values.astype(np.float64) + noise, 0.0, 1.0)
    return tensor.replace(values.astype(np.float32))


def frames_from_streams(samples: Sequence[LabeledStream], t_bins: int) -> FrameDataset:
    """Bin labeled streams into a stacked FrameDataset."""
    tensors = [bin_events(s.stream, t_bins) for s in samples]
    return FrameDataset.from_tensors(tensors, [s.label for s in samples])


# ---------------------------------------------------------------------------
# Synthetic dataset
# ---------------------------------------------------------------------------

def trajectory_distance(pattern: MotionPattern, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Distance of pixel centers (x, y) to the segment travelled by the pattern center."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sx, sy = pattern.start
    ex, ey = pattern.end
    dx, dy = ex - sx, ey - sy
    length2 = dx * dx + dy * dy
    if length2 == 0:
        return np.hypot(x - sx, y - sy)
    u = np.clip(((x - sx) * dx + (y - sy) * dy) / length2, 0.0, 1.0)
    return np.hypot(x - (sx + u * dx), y - (sy + u * dy))


def _render_pattern(pattern: MotionPattern, size: int, duration: int, steps: int):
    """Events of a disk moving out along its segment and back.

    Pixels entering the disk emit ON (1) events, pixels leaving it emit OFF (0).
    """
    ys, xs = np.mgrid[0:size, 0:size]
    times = np.linspace(0, duration, steps).round().astype(np.int64)
    previous = np.zeros((size, size), dtype=bool)
    chunks = []
    for k, t in enumerate(times):
        tau = k / (steps - 1)
        cx, cy = pattern.center_at(1.0 - abs(1.0 - 2.0 * tau))
        inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= pattern.radius ** 2
        for polarity, changed in ((1, inside & ~previous), (0, previous & ~inside)):
            py, px = np.nonzero(changed)
            if len(px):
                chunks.append((px, py, np.full(len(px), polarity), np.full(len(px), t)))
        previous = inside
    return chunks


def synth_dataset(class_count: int, samples_per_class: int, size: int, duration: int,
                  noise_rate: float, seed: int, steps: int = SYNTH_STEPS) -> List[LabeledStream]:
    """
    Generate a labeled set of moving-blob recordings.

    Class k moves a disk radially from near the sensor center along angle
    2*pi*k/class_count (with small per-sample jitter) out to the sensor
    edge and back. Uniform background events are added at ``noise_rate``
    events/pixel/second.

    Args:
        class_count: Number of classes, >= 2
        samples_per_class: Samples generated per class
        size: Sensor resolution N
        duration: Recording length in µs
        noise_rate: Background activity in events per pixel per second
        seed: RNG seed

    Returns:
        class_count * samples_per_class labeled streams, ordered by class
    """
    if class_count < 2:
        raise InvalidParamsError(f"class_count must be >= 2, got {class_count}")
    if size < 8:
        raise InvalidParamsError(f"synthetic sensor size must be >= 8, got {size}")
    if noise_rate < 0:
        raise InvalidParamsError(f"noise_rate must be >= 0, got {noise_rate}")

    rng = np.random.default_rng(seed)
    center = (size - 1) / 2.0
    samples: List[LabeledStream] = []

    for label in range(class_count):
        base_angle = 2.0 * math.pi * label / class_count
        for _ in range(samples_per_class):
            angle = base_angle + rng.uniform(-0.15, 0.15)
            ox, oy = rng.uniform(-1.0, 1.0, size=2)
            r_start = rng.uniform(0.5, 2.0)
            edge = center / max(abs(math.cos(angle)), abs(math.sin(angle)))
            r_end = edge - rng.uniform(0.0, 1.0)
            pattern = MotionPattern(
                label=label,
                start=(center + ox + r_start * math.cos(angle), center + oy + r_start * math.sin(angle)),
                end=(center + ox + r_end * math.cos(angle), center + oy + r_end * math.sin(angle)),
                radius=float(rng.uniform(2.2, 3.0)),
            )
            chunks = _render_pattern(pattern, size, duration, steps)

            n_noise = rng.poisson(noise_rate * size * size * duration / 1e6) if noise_rate > 0 else 0
            if n_noise:
                chunks.append((
                    rng.integers(0, size, n_noise),
                    rng.integers(0, size, n_noise),
                    rng.integers(0, 2, n_noise),
                    rng.integers(0, duration + 1, n_noise),
                ))

            if chunks:
                x, y, p, t = (np.concatenate(col) for col in zip(*chunks))
            else:
                x = y = p = t = np.zeros(0, dtype=np.int64)
            order = np.argsort(t, kind="stable")
            stream = EventStream(width=size, height=size, duration=duration,
                                 x=x[order], y=y[order], polarity=p[order], timestamp=t[order])
            samples.append(LabeledStream(stream=stream, label=label, pattern=pattern))

    logger.info("synthesized %d samples (%d classes, N=%d)", len(samples), class_count, size)
    return samples
