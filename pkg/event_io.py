"""Binary event formats: the portable EVT1 container, N-MNIST records, dataset directories."""
import logging
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from errors import (
    BadMagicError,
    FormatError,
    InvalidParamsError,
    MissingDatasetError,
    TruncatedFileError,
)
from event_core import ensure_valid
from models import EventStream, LabeledStream

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

EVT_MAGIC = b"EVT1\0\0\0\0"
EVT_SUFFIX = ".evt"
EVT_HEADER = np.dtype([
    ("magic", "S8"),
    ("width", "<u2"),
    ("height", "<u2"),
    ("reserved", "<u4"),
    ("duration", "<u8"),
    ("event_count", "<u8"),
])
EVT_RECORD = np.dtype([
    ("x", "<u2"),
    ("y", "<u2"),
    ("polarity", "u1"),
    ("pad", "u1"),
    ("timestamp", "<u4"),
])

NMNIST_SIZE = 34
NMNIST_RECORD_BYTES = 5


def encode_evt(stream: EventStream) -> bytes:
    """
    Serialize a valid stream to EVT1 bytes.

    Args:
        stream: Stream to encode

    Returns:
        32-byte header followed by 10-byte little-endian records
    """
    ensure_valid(stream)
    if len(stream) and stream.timestamp.max() > np.iinfo(np.uint32).max:
        raise InvalidParamsError("EVT1 timestamps must fit in 32 bits")
    if stream.width > 0xFFFF or stream.height > 0xFFFF:
        raise InvalidParamsError("EVT1 sensor size must fit in 16 bits")

    header = np.zeros(1, dtype=EVT_HEADER)
    header["magic"] = EVT_MAGIC
    header["width"] = stream.width
    header["height"] = stream.height
    header["duration"] = stream.duration
    header["event_count"] = len(stream)

    records = np.zeros(len(stream), dtype=EVT_RECORD)
    records["x"] = stream.x
    records["y"] = stream.y
    records["polarity"] = stream.polarity
    records["timestamp"] = stream.timestamp
    return header.tobytes() + records.tobytes()


def decode_evt(data: bytes) -> EventStream:
    """
    Parse EVT1 bytes.

    Args:
        data: File contents

    Returns:
        Decoded, validated EventStream

    Raises:
        TruncatedFileError: Header or records cut short
        BadMagicError: Magic is not "EVT1\\0\\0\\0\\0"
        OutOfBoundsError: An event lies outside the declared sensor or duration
    """
    if len(data) < len(EVT_MAGIC):
        raise TruncatedFileError(f"EVT1 file too short for magic ({len(data)} bytes)")
    if data[:len(EVT_MAGIC)] != EVT_MAGIC:
        raise BadMagicError(f"bad EVT1 magic {data[:len(EVT_MAGIC)]!r}")
    if len(data) < EVT_HEADER.itemsize:
        raise TruncatedFileError(f"EVT1 header needs {EVT_HEADER.itemsize} bytes, got {len(data)}")

    header = np.frombuffer(data, dtype=EVT_HEADER, count=1)[0]
    count = int(header["event_count"])
    expected = EVT_HEADER.itemsize + count * EVT_RECORD.itemsize
    if len(data) < expected:
        raise TruncatedFileError(f"EVT1 declares {count} events ({expected} bytes), file has {len(data)}")
    if len(data) > expected:
        raise FormatError(f"EVT1 file has {len(data) - expected} trailing bytes")

    if count:
        records = np.frombuffer(data, dtype=EVT_RECORD, count=count, offset=EVT_HEADER.itemsize)
    else:
        records = np.zeros(0, dtype=EVT_RECORD)
    stream = EventStream(
        width=int(header["width"]),
        height=int(header["height"]),
        duration=int(header["duration"]),
        x=records["x"],
        y=records["y"],
        polarity=records["polarity"],
        timestamp=records["timestamp"],
    )
    return ensure_valid(stream)


def write_evt(path: PathLike, stream: EventStream) -> None:
    Path(path).write_bytes(encode_evt(stream))


def read_evt(path: PathLike) -> EventStream:
    return decode_evt(Path(path).read_bytes())


def decode_nmnist(data: bytes) -> EventStream:
    """
    Decode N-MNIST 5-byte records.

    Byte layout: x, y, then polarity in bit 7 of byte 2 followed by a 23-bit
    big-endian timestamp in µs spread over the remaining 23 bits.

    Args:
        data: File contents

    Returns:
        34x34 EventStream, time-sorted, duration = last timestamp
    """
    if not data:
        raise TruncatedFileError("empty N-MNIST file")
    if len(data) % NMNIST_RECORD_BYTES:
        raise TruncatedFileError(
            f"N-MNIST file size {len(data)} is not a multiple of {NMNIST_RECORD_BYTES}")

    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, NMNIST_RECORD_BYTES).astype(np.int64)
    timestamp = ((raw[:, 2] & 0x7F) << 16) | (raw[:, 3] << 8) | raw[:, 4]
    order = np.argsort(timestamp, kind="stable")
    stream = EventStream(
        width=NMNIST_SIZE,
        height=NMNIST_SIZE,
        duration=int(timestamp.max()),
        x=raw[order, 0],
        y=raw[order, 1],
        polarity=raw[order, 2] >> 7,
        timestamp=timestamp[order],
    )
    return ensure_valid(stream)


def load_nmnist(path: PathLike) -> EventStream:
    return decode_nmnist(Path(path).read_bytes())


def write_dataset(root: PathLike, samples: Sequence[LabeledStream]) -> List[Path]:
    """
    Write samples as ``root/<label>/<index>.evt``.

    Args:
        root: Dataset directory (created if missing)
        samples: Labeled streams; the index is the position in ``samples``

    Returns:
        Paths written, in sample order
    """
    root = Path(root)
    paths = []
    for index, sample in enumerate(samples):
        label_dir = root / str(sample.label)
        label_dir.mkdir(parents=True, exist_ok=True)
        path = label_dir / f"{index:05d}{EVT_SUFFIX}"
        write_evt(path, sample.stream)
        paths.append(path)
    logger.info("wrote %d samples to %s", len(paths), root)
    return paths


def read_dataset(root: PathLike) -> List[LabeledStream]:
    """
    Read a ``root/<label>/*.evt`` dataset directory.

    Samples are returned ordered by file name, which preserves the order used
    by ``write_dataset``.
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingDatasetError(f"dataset directory not found: {root}")

    files = []
    for label_dir in root.iterdir():
        if label_dir.is_dir() and label_dir.name.lstrip("-").isdigit():
            files.extend((path.name, int(label_dir.name), path)
                         for path in label_dir.glob(f"*{EVT_SUFFIX}"))
    if not files:
        raise MissingDatasetError(f"no {EVT_SUFFIX} samples under {root}")

    files.sort(key=lambda item: (item[0], item[1]))
    return [LabeledStream(stream=read_evt(path), label=label) for _, label, path in files]
