"""Adversarial attacks on binned event tensors.

Sparse: gradient descent on -log(1 - p_label) restricted to a set of time bins.
Frame: light up the sensor border.
Corner / Dash / MF-aware Dash: sweep a small pixel pattern around the border,
one geometry step per pass over the still-unfooled samples. Corner and
MF-aware Dash keep earlier passes by default, Dash starts each pass clean.
"""
import logging
from dataclasses import asdict, replace
from typing import Callable, Iterator, List, Optional, Protocol, Tuple

import numpy as np
from tqdm import tqdm

from config import parse_kind_spec, progress_disabled
from errors import DegenerateSizeError, EmptyDatasetError, InvalidParamsError, MalformedTensorError
from models import (
    AttackReport,
    AttackSpec,
    CornerState,
    DashState,
    FrameDataset,
    FrameTensor,
    GeometryConfig,
    MfAwareConfig,
    SampleAttackRecord,
    SparseConfig,
)
from snn import SnnModel, input_gradient, lif_forward

logger = logging.getLogger(__name__)

PASSES_PER_CYCLE = 4


class Classifier(Protocol):
    def predict(self, values: np.ndarray) -> np.ndarray:
        """Class index per sample of a (B, C, H, W, T) array."""


def _require_binary(values: np.ndarray, what: str = "attack input") -> None:
    if not np.isin(values, (0.0, 1.0)).all():
        raise MalformedTensorError(f"{what} must be a binary tensor")


def perturbation_stats(clean: np.ndarray, perturbed: np.ndarray) -> Tuple[int, int, float]:
    """
    Size of a perturbation of one (C, H, W, T) sample.

    Returns:
        (L0 over cells, number of touched pixels, added events / clean events)
    """
    changed = perturbed != clean
    l0 = int(changed.sum())
    pixels = int(changed.any(axis=(0, 3)).sum())
    clean_on = clean >= 0.5
    added = int(((perturbed >= 0.5) & ~clean_on).sum())
    return l0, pixels, added / max(int(clean_on.sum()), 1)


def _record(index: int, label: int, prediction: int, clean: np.ndarray, perturbed: np.ndarray,
            iterations: int, **extra) -> SampleAttackRecord:
    l0, pixels, overhead = perturbation_stats(clean, perturbed)
    return SampleAttackRecord(
        index=index,
        label=int(label),
        prediction=int(prediction),
        fooled=bool(prediction != label),
        iterations=int(iterations),
        perturbed_cells=l0,
        l0=l0,
        perturbed_pixels=pixels,
        event_overhead=overhead,
        **extra,
    )


# ---------------------------------------------------------------------------
# Sparse attack
# ---------------------------------------------------------------------------

def _binarize(base: np.ndarray, perturbation: np.ndarray, mask: np.ndarray, threshold: float) -> np.ndarray:
    """clamp(base + P, 0, 1) thresholded on the masked cells; other cells are copied from ``base``."""
    candidate = base.copy()
    candidate[mask] = (np.clip(base + perturbation, 0.0, 1.0) >= threshold)[mask]
    return candidate


def sparse_attack(model: SnnModel, sample: FrameTensor, label: int,
                  cfg: SparseConfig = SparseConfig()) -> Tuple[FrameTensor, AttackReport]:
    """
    Perturb the masked time bins of one sample to lower the true-class probability.

    P starts at zero. Each iteration binarizes clamp(sample + P, 0, 1) at
    ``cfg.threshold``, scores that candidate, and stops once it is
    misclassified. Otherwise P takes a step of ``eta`` along the descent
    direction of L = -log(1 - p_label), the gradient taken through the
    surrogate at the clamped point and scaled so its largest cell moves by
    exactly ``eta``. Components that would push a cell further past 0 or 1
    are dropped; P itself is only clamped when binarizing. Bins outside the
    mask are copied from the input.

    Args:
        model: Differentiable classifier
        sample: Binary tensor
        label: True class
        cfg: Frame mask, iteration count, step size, binarization threshold

    Returns:
        (adversarial tensor, single-sample AttackReport whose probability
        trace holds the true-class probability of every scored candidate)
    """
    _require_binary(sample.values)
    model.check_input(sample.values[None])
    frames = list(cfg.mask_frames(sample.frames))
    mask = np.zeros(sample.shape, dtype=bool)
    mask[..., frames] = True

    base = sample.values.astype(np.float64)
    perturbation = np.zeros_like(base)
    trace: List[float] = []
    candidate = base
    fooled = False
    for _ in range(cfg.max_iteration):
        candidate = _binarize(base, perturbation, mask, cfg.threshold)
        prediction, _ = lif_forward(model, candidate)
        trace.append(float(prediction.probabilities[label]))
        if prediction.label != label:
            fooled = True
            break
        point = np.clip(base + perturbation, 0.0, 1.0)
        direction = -np.where(mask, input_gradient(model, point, label, loss="sparse"), 0.0)
        direction[((point <= 0.0) & (direction < 0)) | ((point >= 1.0) & (direction > 0))] = 0.0
        scale = np.abs(direction).max()
        if scale > 0:
            perturbation += cfg.eta * direction / scale
    if not fooled:
        candidate = _binarize(base, perturbation, mask, cfg.threshold)
    result = sample.replace(candidate.astype(np.float32))

    prediction = int(model.predict(result.values[None])[0])
    converged = bool(np.all(np.diff(trace) <= 1e-12))
    if not converged:
        logger.debug("sparse attack: true-class probability rose during descent %s", trace[:3])
    record = _record(0, label, prediction, sample.values, result.values, len(trace),
                     converged=converged, prob_trace=trace)
    report = AttackReport(attack="sparse", params=_sparse_params(cfg, sample.frames),
                          samples=[record], passes=len(trace))
    return result, report


def _sparse_params(cfg: SparseConfig, t_bins: int) -> dict:
    return {"frames": list(cfg.mask_frames(t_bins)), "max_iteration": cfg.max_iteration,
            "eta": cfg.eta, "threshold": cfg.threshold}


def sparse_attack_dataset(model: SnnModel, dataset: FrameDataset,
                          cfg: SparseConfig = SparseConfig()) -> Tuple[FrameDataset, AttackReport]:
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot attack an empty dataset")
    outputs = []
    records = []
    for index in tqdm(range(len(dataset)), desc="sparse", disable=progress_disabled()):
        adversarial, single = sparse_attack(model, dataset.sample(index), int(dataset.labels[index]), cfg)
        record = single.samples[0]
        record.index = index
        outputs.append(adversarial.values)
        records.append(record)
    report = AttackReport(attack="sparse", params=_sparse_params(cfg, dataset.values.shape[-1]),
                          samples=records, passes=max(r.iterations for r in records))
    return dataset.with_values(np.stack(outputs)), report


# ---------------------------------------------------------------------------
# Frame attack
# ---------------------------------------------------------------------------

def frame_attack(sample: FrameTensor) -> FrameTensor:
    """Set every border pixel to 1 on all channels and bins; the interior is untouched."""
    if sample.height < 2 or sample.width < 2:
        raise DegenerateSizeError(f"frame attack needs a sensor of at least 2x2, got {sample.height}x{sample.width}")
    values = np.array(sample.values, copy=True)
    values[:, 0, :, :] = 1.0
    values[:, -1, :, :] = 1.0
    values[:, :, 0, :] = 1.0
    values[:, :, -1, :] = 1.0
    return sample.replace(values)


def frame_attack_dataset(model: Classifier, dataset: FrameDataset) -> Tuple[FrameDataset, AttackReport]:
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot attack an empty dataset")
    _require_binary(dataset.values)
    perturbed = np.stack([frame_attack(t).values for t in dataset.tensors()])
    predictions = model.predict(perturbed)
    records = [
        _record(i, dataset.labels[i], predictions[i], dataset.values[i], perturbed[i], 1)
        for i in range(len(dataset))
    ]
    return dataset.with_values(perturbed), AttackReport(attack="frame", params={}, samples=records, passes=1)


# ---------------------------------------------------------------------------
# Corner / Dash / MF-aware Dash
# ---------------------------------------------------------------------------

def corner_states(height: int) -> Iterator[CornerState]:
    """
    Corner geometry: bottom row after top row, then the other side; the
    corner grows by one pixel each time the sweep switches to the right side.
    """
    state = CornerState()
    while True:
        yield state
        if state.x == 0:
            state = replace(state, x=height - 1)
        else:
            left = not state.left
            state = CornerState(x=0, y=state.y + (0 if left else 1), left=left)


def dash_states(height: int, width: int) -> Iterator[DashState]:
    """Dash geometry; rows move inwards (x_min grows) once the dash passes the middle column."""
    state = DashState()
    while True:
        yield state
        if state.x == state.x_min:
            state = replace(state, x=height - state.x_min - 1)
        else:
            left = not state.left
            state = replace(state, left=left, x=state.x_min, y=state.y + (0 if left else 1))
        if state.y > width / 2:
            state = replace(state, x_min=state.x_min + 1)


def corner_pixels(state: CornerState, height: int, width: int) -> np.ndarray:
    """(H, W) mask: row x, the first y columns on the left or the last y+1 on the right."""
    rows, cols = np.mgrid[0:height, 0:width]
    side = cols < state.y if state.left else cols >= width - state.y - 1
    return (rows == state.x) & side


def dash_columns(y: int, left: bool, width: int) -> Tuple[int, int]:
    return (y - 1, y) if left else (width - y, width - y + 1)


def dash_pixels(state: DashState, height: int, width: int) -> Optional[np.ndarray]:
    """(H, W) two-pixel mask, or None once the dash leaves the sensor."""
    if state.x_min > height - state.x_min - 1 or not 0 <= state.x < height:
        return None
    cols = dash_columns(state.y, state.left, width)
    if not all(0 <= c < width for c in cols):
        return None
    pixels = np.zeros((height, width), dtype=bool)
    pixels[state.x, list(cols)] = True
    return pixels


def mf_dash_cells(state: CornerState, th0: int, shape: Tuple[int, int, int, int]) -> Optional[np.ndarray]:
    """
    Channel-0 cells of one MF-aware pass.

    Bins [k*th0, (k+1)*th0) hold the dash at y0 + 2k, so no pixel is on for
    more than th0 bins. Dash pixels past the sensor edge are dropped; None
    when even the first position is off the sensor.
    """
    channels, height, width, t_bins = shape
    if not all(0 <= c < width for c in dash_columns(state.y, state.left, width)):
        return None
    cells = np.zeros(shape, dtype=bool)
    for t in range(t_bins):
        y = state.y + 2 * (t // th0)
        for col in dash_columns(y, state.left, width):
            if 0 <= col < width:
                cells[0, state.x, col, t] = True
    return cells


def _add_within_budget(trial: np.ndarray, clean: np.ndarray, cells: np.ndarray, budget: int) -> None:
    """
    Switch on ``cells`` in a (R, C, H, W, T) batch, earliest bins first, while
    no pixel holds more than ``budget`` cells that are on only because of the attack.
    """
    new = np.broadcast_to(cells, trial.shape) & (trial < 0.5)
    added = ((trial >= 0.5) & (clean < 0.5)).sum(axis=(1, 4))
    room = np.maximum(budget - added, 0)
    # time-major per pixel, so the budget goes to the earliest bins
    flat = new.transpose(0, 2, 3, 4, 1).reshape(new.shape[0], new.shape[2], new.shape[3], -1)
    keep = flat & (np.cumsum(flat, axis=-1) <= room[..., None])
    keep = keep.reshape(new.shape[0], new.shape[2], new.shape[3], new.shape[4], new.shape[1])
    trial[keep.transpose(0, 4, 1, 2, 3)] = 1.0


def _geometry_attack(model: Classifier, dataset: FrameDataset, name: str, params: dict,
                     passes: Iterator[Tuple[object, Optional[np.ndarray]]], max_passes: int,
                     accumulate: bool, budget: Optional[int] = None) -> Tuple[FrameDataset, AttackReport]:
    """
    Shared pass loop: perturb all remaining samples with the current geometry,
    drop the fooled ones, advance the geometry.

    ``passes`` yields (state, cell mask of shape (C, H, W, T)); a None mask ends
    the attack. Samples still unfooled at the end keep their last attempt.
    With ``budget`` set, no pixel gets more than that many attack-added cells,
    counted over all accumulated passes.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot attack an empty dataset")
    _require_binary(dataset.values)
    clean = dataset.values
    current = np.array(clean, copy=True)
    labels = dataset.labels
    remaining = np.arange(len(dataset))
    iterations = np.zeros(len(dataset), dtype=np.int64)
    states: List[Optional[dict]] = [None] * len(dataset)
    trace: List[int] = []

    progress = tqdm(total=max_passes, desc=name, disable=progress_disabled())
    done = 0
    for state, cells in passes:
        if not len(remaining) or done >= max_passes or cells is None:
            break
        trial = np.array(current[remaining] if accumulate else clean[remaining], copy=True)
        if budget is None:
            trial[:, cells] = 1.0
        else:
            _add_within_budget(trial, clean[remaining], cells, budget)
        current[remaining] = trial
        fooled = model.predict(trial) != labels[remaining]
        iterations[remaining] = done + 1
        for i in remaining:
            states[i] = asdict(state)
        remaining = remaining[~fooled]
        trace.append(int(len(remaining)))
        done += 1
        progress.update(1)
        progress.set_postfix(remaining=len(remaining))
    progress.close()

    if len(remaining):
        logger.info("%s: %d/%d samples unfooled after %d passes", name, len(remaining), len(dataset), done)
    predictions = model.predict(current)
    records = [
        _record(i, labels[i], predictions[i], clean[i], current[i], iterations[i], state=states[i])
        for i in range(len(dataset))
    ]
    report = AttackReport(attack=name, params=params, samples=records, remaining_trace=trace, passes=done)
    return dataset.with_values(current), report


def _pixel_passes(states: Iterator, pixel_fn: Callable, shape) -> Iterator:
    channels, height, width, t_bins = shape
    for state in states:
        pixels = pixel_fn(state, height, width)
        cells = None if pixels is None else np.broadcast_to(pixels[None, :, :, None], shape)
        yield state, cells


def corner_attack(model: Classifier, dataset: FrameDataset,
                  cfg: GeometryConfig = GeometryConfig()) -> Tuple[FrameDataset, AttackReport]:
    """
    Grow a corner pattern around the four sensor corners until every sample is fooled.

    Args:
        model: Classifier
        dataset: Binary samples
        cfg: Loop bound in four-pass cycles and accumulation mode

    Returns:
        (perturbed dataset, AttackReport)
    """
    shape = dataset.values.shape[1:]
    passes = _pixel_passes(corner_states(shape[1]), corner_pixels, shape)
    accumulate = cfg.accumulates(True)
    params = {"max_cycles": cfg.max_cycles, "accumulate": accumulate}
    return _geometry_attack(model, dataset, "corner", params, passes,
                            PASSES_PER_CYCLE * cfg.max_cycles, accumulate)


def dash_attack(model: Classifier, dataset: FrameDataset,
                cfg: GeometryConfig = GeometryConfig()) -> Tuple[FrameDataset, AttackReport]:
    """Like corner_attack with a two-pixel dash on all channels and bins."""
    shape = dataset.values.shape[1:]
    passes = _pixel_passes(dash_states(shape[1], shape[2]), dash_pixels, shape)
    accumulate = cfg.accumulates(False)
    params = {"max_cycles": cfg.max_cycles, "accumulate": accumulate}
    return _geometry_attack(model, dataset, "dash", params, passes,
                            PASSES_PER_CYCLE * cfg.max_cycles, accumulate)


def mf_aware_dash_attack(model: Classifier, dataset: FrameDataset,
                         cfg: MfAwareConfig = MfAwareConfig()) -> Tuple[FrameDataset, AttackReport]:
    """
    Dash on channel 0 only that moves two columns every ``th0`` bins.

    Each pixel receives at most th0 attack events per sample, which keeps
    attack-only pixels under a Mask Filter threshold T >= th0. Passes build
    on each other by default; the th0 budget holds over all of them.
    """
    shape = dataset.values.shape[1:]

    def passes():
        for state in corner_states(shape[1]):
            yield state, mf_dash_cells(state, cfg.th0, shape)

    params = {"th0": cfg.th0, "max_cycles": cfg.max_cycles, "accumulate": cfg.accumulate}
    return _geometry_attack(model, dataset, "mfdash", params, passes(),
                            PASSES_PER_CYCLE * cfg.max_cycles, cfg.accumulate, budget=cfg.th0)


def clean_report(model: Classifier, dataset: FrameDataset) -> AttackReport:
    predictions = model.predict(dataset.values) if len(dataset) else []
    records = [
        _record(i, dataset.labels[i], predictions[i], dataset.values[i], dataset.values[i], 0)
        for i in range(len(dataset))
    ]
    return AttackReport(attack="clean", params={}, samples=records)


# ---------------------------------------------------------------------------
# Selectors
# ---------------------------------------------------------------------------

ATTACK_PARAMS = {
    "clean": {},
    "sparse": {"max_iter": int, "eta": float, "mask_bins": str, "threshold": float},
    "frame": {},
    "corner": {"max_cycles": int, "accumulate": bool},
    "dash": {"max_cycles": int, "accumulate": bool},
    "mfdash": {"th0": int, "max_cycles": int, "accumulate": bool},
}


def parse_mask_bins(text: str) -> Optional[Tuple[int, ...]]:
    """
    Parse a bin selection such as "0-4", "0+2+7" or "0,2,7"; empty means the default mask.
    """
    text = str(text).strip()
    if not text:
        return None
    bins: List[int] = []
    try:
        for part in filter(None, (p.strip() for p in text.replace("+", ",").replace(" ", ",").split(","))):
            first, sep, last = part.partition("-")
            bins.extend(range(int(first), int(last) + 1) if sep else [int(first)])
    except ValueError as e:
        raise InvalidParamsError(f"bad mask bins {text!r}") from e
    return tuple(sorted(set(bins)))


def _convert(kind: str, key: str, value, caster):
    if caster is bool and isinstance(value, str):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise InvalidParamsError(f"{kind}: {key} must be a boolean, got {value!r}")
    try:
        return caster(value)
    except (TypeError, ValueError) as e:
        raise InvalidParamsError(f"{kind}: bad value {value!r} for {key}") from e


def make_attack_spec(kind: str, **params) -> AttackSpec:
    kind = kind.lower()
    if kind not in ATTACK_PARAMS:
        raise InvalidParamsError(f"unknown attack {kind!r}; expected one of {', '.join(ATTACK_PARAMS)}")
    allowed = ATTACK_PARAMS[kind]
    converted = []
    for key, value in params.items():
        key = key.lower().replace("-", "_")
        if key not in allowed:
            raise InvalidParamsError(f"{kind} takes no parameter {key!r}")
        converted.append((key, _convert(kind, key, value, allowed[key])))
    return AttackSpec(kind=kind, params=tuple(converted))


def parse_attack_spec(text: str) -> AttackSpec:
    """Parse e.g. "mfdash:th0=5", "corner:max_cycles=10" or "sparse:eta=0.2,mask_bins=0-4"."""
    kind, params = parse_kind_spec(text)
    return make_attack_spec(kind, **params)


def run_attack(model, dataset: FrameDataset, spec: AttackSpec) -> Tuple[FrameDataset, AttackReport]:
    """
    Apply one attack to a whole dataset.

    Args:
        model: Classifier; ``sparse`` needs an SnnModel
        dataset: Binary samples
        spec: Attack selector

    Returns:
        (perturbed dataset, AttackReport); ``clean`` returns the input
    """
    p = spec.param_dict
    logger.info("running attack %s on %d samples", spec.label, len(dataset))
    if spec.kind == "clean":
        return dataset, clean_report(model, dataset)
    if spec.kind == "sparse":
        cfg = SparseConfig(
            frames=parse_mask_bins(p.get("mask_bins", "")),
            max_iteration=p.get("max_iter", SparseConfig.max_iteration),
            eta=p.get("eta", SparseConfig.eta),
            threshold=p.get("threshold", SparseConfig.threshold),
        )
        return sparse_attack_dataset(model, dataset, cfg)
    if spec.kind == "frame":
        return frame_attack_dataset(model, dataset)
    if spec.kind in ("corner", "dash"):
        cfg = GeometryConfig(max_cycles=p.get("max_cycles", GeometryConfig.max_cycles),
                             accumulate=p.get("accumulate"))
        attack = corner_attack if spec.kind == "corner" else dash_attack
        return attack(model, dataset, cfg)
    if spec.kind == "mfdash":
        cfg = MfAwareConfig(th0=p.get("th0", MfAwareConfig.th0),
                            max_cycles=p.get("max_cycles", MfAwareConfig.max_cycles),
                            accumulate=p.get("accumulate", MfAwareConfig.accumulate))
        return mf_aware_dash_attack(model, dataset, cfg)
    raise InvalidParamsError(f"unknown attack {spec.kind!r}")
