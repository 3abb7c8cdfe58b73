"""Event-stream defenses: Background Activity Filter and Mask Filter.

Both filters select a subsequence of the input stream; events are never
modified or reordered. Timestamps and the BAF window share one unit (µs).
"""
import logging
import math

import numpy as np

from config import parse_kind_spec
from errors import InvalidParamsError
from event_core import bin_events, ensure_valid, tensor_to_events
from models import ActivityMask, BafParams, EventStream, FilterSpec, FrameDataset, FrameTensor, MfParams

logger = logging.getLogger(__name__)


def background_activity_filter(stream: EventStream, params: BafParams):
    """
    Drop events without recent activity in their spatial neighborhood.

    Events are visited oldest first. Each event stamps its timestamp into the
    timestamp map at every pixel within S (inclusive, clipped to the sensor)
    except its own, and is then dropped when t - M[y][x] > T. The map starts
    at zero for every stream.

    Args:
        stream: Valid, time-sorted stream
        params: Spatial radius S and temporal window T

    Returns:
        Filtered stream (subsequence of the input)
    """
    ensure_valid(stream)
    s, window = params.s, params.t
    stamps = np.zeros((stream.height, stream.width), dtype=np.int64)
    keep = np.zeros(len(stream), dtype=bool)

    for i, (x, y, t) in enumerate(zip(stream.x.tolist(), stream.y.tolist(), stream.timestamp.tolist())):
        own = stamps[y, x]
        stamps[max(0, y - s):y + s + 1, max(0, x - s):x + s + 1] = t
        stamps[y, x] = own
        keep[i] = t - own <= window

    logger.debug("BAF S=%d T=%s kept %d/%d events", s, window, int(keep.sum()), len(stream))
    return stream.select(keep)


def mask_filter(stream: EventStream, params: MfParams):
    """
    Remove every event of pixels whose total activity exceeds T.

    Args:
        stream: Valid stream
        params: Activity threshold T

    Returns:
        (filtered stream, ActivityMask with per-pixel counts and the mask)
    """
    ensure_valid(stream)
    activity = np.zeros((stream.height, stream.width), dtype=np.int64)
    np.add.at(activity, (stream.y, stream.x), 1)
    mask = activity > params.t
    keep = ~mask[stream.y, stream.x]
    return stream.select(keep), ActivityMask(activity=activity, mask=mask)


def _number(value: str) -> float:
    if value.lower() in ("inf", "infinity", "+inf"):
        return math.inf
    return float(value)


def parse_filter_spec(text: str) -> FilterSpec:
    """
    Parse a CLI filter selector.

    Args:
        text: "none", "baf:S=2,T=5000" or "mf:T=50" (keys are case-insensitive)

    Returns:
        FilterSpec
    """
    kind, raw = parse_kind_spec(text)
    params = {key.upper(): value for key, value in raw.items()}
    try:
        if kind == "none" and not params:
            return FilterSpec()
        if kind == "baf" and set(params) <= {"S", "T"} and "T" in params:
            return FilterSpec(kind="baf", baf=BafParams(s=int(params.get("S", 1)), t=_number(params["T"])))
        if kind == "mf" and set(params) == {"T"}:
            return FilterSpec(kind="mf", mf=MfParams(t=_number(params["T"])))
    except ValueError as e:
        raise InvalidParamsError(f"bad filter parameter in {text!r}: {e}") from e
    raise InvalidParamsError(f"unknown filter selector {text!r}; expected none, baf:S=..,T=.. or mf:T=..")


def filter_stream(stream: EventStream, spec: FilterSpec) -> EventStream:
    """Apply one filter selector to an event stream; ``none`` returns the stream itself."""
    if spec.kind == "baf":
        return background_activity_filter(stream, spec.baf)
    if spec.kind == "mf":
        return mask_filter(stream, spec.mf)[0]
    return stream


def apply_filter_to_tensor(tensor: FrameTensor, spec: FilterSpec) -> FrameTensor:
    """
    Filter a tensor through the event domain: unbin, filter, rebin with the same T_bins.

    The ``none`` filter returns the tensor untouched.
    """
    if spec.kind == "none":
        return tensor
    events = tensor_to_events(tensor, 0.5)
    return bin_events(filter_stream(events, spec), tensor.frames)


def filter_dataset(dataset: FrameDataset, spec: FilterSpec) -> FrameDataset:
    """
    Filter every sample of a binary dataset through the event domain.

    Labels and bin durations are kept; ``none`` returns the dataset itself.
    """
    if spec.kind == "none":
        return dataset
    filtered = [apply_filter_to_tensor(t, spec).values for t in dataset.tensors()]
    return dataset.with_values(np.stack(filtered) if filtered else dataset.values)
