"""Attack x filter evaluation grid, Gaussian-noise study, reports and frame rendering.

Every grid cell runs the fixed pipeline: attack the binned test set, turn each
tensor back into events, filter, rebin, classify.
"""
import json
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
from PIL import Image
from tqdm import tqdm

from attacks import run_attack
from config import CODE_VERSION, REPORT_SCHEMA_VERSION, progress_disabled
from errors import InvalidParamsError
from event_core import derive_seed, frames_from_streams, inject_gaussian_noise
from event_io import read_dataset
from filters import apply_filter_to_tensor, filter_dataset
from models import AttackSpec, EvalReport, FilterSpec, FrameDataset, FrameTensor, GridCell, GridSpec
from snn import SnnModel, evaluate, load_checkpoint

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CSV_COLUMNS = [
    "schema_version",
    "attack",
    "attack_params",
    "filter",
    "filter_params",
    "accuracy",
    "accuracy_std",
    "samples",
    "mean_l0",
    "event_overhead",
    "wall_time_s",
]

OFF_GRAY = 128
ON_WHITE = 255


def _with_none_filter(filters: Sequence[FilterSpec]) -> List[FilterSpec]:
    filters = list(filters)
    if not any(f.kind == "none" for f in filters):
        filters.insert(0, FilterSpec())
    return filters


def evaluate_grid(model: SnnModel, dataset: FrameDataset, attacks: Sequence[AttackSpec],
                  filters: Sequence[FilterSpec], metadata: Optional[Dict] = None) -> EvalReport:
    """
    Score every (attack, filter) pair on an in-memory dataset.

    Each attack perturbs the dataset once; every filter is then applied to the
    same perturbed set. The ``none`` filter is always part of the grid.

    Args:
        model: Trained network
        dataset: Binary test samples
        attacks: Attack selectors (``clean`` for no attack)
        filters: Filter selectors

    Returns:
        EvalReport with one cell per pair, attacks outermost
    """
    if not attacks:
        raise InvalidParamsError("the grid needs at least one attack (use 'clean' for none)")
    filters = _with_none_filter(filters)
    report = EvalReport(metadata=dict(metadata or {}))

    for attack in attacks:
        started = time.perf_counter()
        perturbed, attack_report = run_attack(model, dataset, attack)
        attack_time = time.perf_counter() - started
        for spec in tqdm(filters, desc=attack.label, disable=progress_disabled()):
            started = time.perf_counter()
            accuracy = evaluate(model, filter_dataset(perturbed, spec))
            report.cells.append(GridCell(
                attack=attack.label,
                attack_params=attack.param_dict,
                filter=spec.label,
                filter_params=spec.params,
                accuracy=accuracy,
                samples=len(dataset),
                mean_l0=attack_report.mean_l0,
                event_overhead=attack_report.mean_event_overhead,
                wall_time_s=attack_time + time.perf_counter() - started,
            ))
            logger.info("%-24s %-22s accuracy=%.3f", attack.label, spec.label, accuracy)
    return report


def model_metadata(model: SnnModel) -> Dict:
    """Per-layer neuron constants and the surrogate slope of a network, for report headers."""
    return {
        "architecture": [spec.kind for spec in model.specs],
        "v_th": [spec.neuron.v_th for spec in model.specs],
        "leak": [spec.neuron.leak for spec in model.specs],
        "surrogate_slope": model.surrogate.slope,
    }


def grid_metadata(spec: GridSpec, model: SnnModel) -> Dict:
    """Report header of a grid run: inputs, seed, selectors and the network's neuron constants."""
    return {
        "kind": "grid",
        "code_version": CODE_VERSION,
        "schema_version": REPORT_SCHEMA_VERSION,
        "dataset": str(spec.dataset),
        "model": str(spec.model),
        "seed": spec.seed,
        "t_bins": spec.t_bins,
        "attacks": [a.label for a in spec.attacks],
        "filters": [f.label for f in _with_none_filter(spec.filters)],
        **model_metadata(model),
    }


def load_test_set(path: PathLike, t_bins: int) -> FrameDataset:
    """Read a dataset directory and bin every stream into ``t_bins`` frames."""
    return frames_from_streams(read_dataset(path), t_bins)


def run_grid(spec: GridSpec) -> EvalReport:
    """
    Load the checkpoint and dataset named in the GridSpec and run the grid.

    Raises:
        MissingModelError: No checkpoint at GridSpec.model
        MissingDatasetError: No dataset at GridSpec.dataset
    """
    model = load_checkpoint(spec.model)
    dataset = load_test_set(spec.dataset, spec.t_bins)
    torch.manual_seed(spec.seed)
    return evaluate_grid(model, dataset, spec.attacks, spec.filters, grid_metadata(spec, model))


def noisy_dataset(dataset: FrameDataset, magnitude: float, seed: int, repeat: int = 0) -> FrameDataset:
    """Gaussian noise on every sample, seeded per (seed, repeat, sample index)."""
    if magnitude == 0:
        return dataset
    values = [
        inject_gaussian_noise(t, magnitude, derive_seed(seed, repeat, i)).values
        for i, t in enumerate(dataset.tensors())
    ]
    return dataset.with_values(np.stack(values))


def _filter_continuous(dataset: FrameDataset, spec: FilterSpec) -> FrameDataset:
    if spec.kind == "none":
        return dataset
    return dataset.with_values(np.stack([apply_filter_to_tensor(t, spec).values for t in dataset.tensors()]))


def run_noise_study(magnitudes: Sequence[float], filters: Sequence[FilterSpec], model: SnnModel,
                    dataset: FrameDataset, seed: int = 0, repeats: int = 1) -> EvalReport:
    """
    Accuracy under Gaussian noise for every (magnitude, filter) pair.

    With filter ``none`` the network sees the continuous noisy tensor; other
    filters unbin it at 0.5, filter and rebin. ``repeats`` redraws the noise
    and reports mean and standard deviation.

    Args:
        magnitudes: Noise standard deviations (>= 0)
        filters: Filter selectors
        model: Trained network
        dataset: Binary test samples
        seed: Base seed
        repeats: Noise draws per magnitude

    Returns:
        EvalReport with attack labels ``noise:sigma=<m>``
    """
    if repeats < 1:
        raise InvalidParamsError(f"repeats must be >= 1, got {repeats}")
    filters = _with_none_filter(filters)
    report = EvalReport(metadata={
        "kind": "noise",
        "code_version": CODE_VERSION,
        "schema_version": REPORT_SCHEMA_VERSION,
        "seed": seed,
        "repeats": repeats,
        "magnitudes": [float(m) for m in magnitudes],
        "filters": [f.label for f in filters],
        **model_metadata(model),
    })

    accuracies: Dict[Tuple[float, str], List[float]] = {}
    times: Dict[Tuple[float, str], float] = {}
    for magnitude in magnitudes:
        for repeat in range(repeats):
            noisy = noisy_dataset(dataset, float(magnitude), seed, repeat)
            for spec in filters:
                started = time.perf_counter()
                key = (float(magnitude), spec.label)
                accuracies.setdefault(key, []).append(evaluate(model, _filter_continuous(noisy, spec)))
                times[key] = times.get(key, 0.0) + time.perf_counter() - started

    for magnitude in magnitudes:
        for spec in filters:
            key = (float(magnitude), spec.label)
            values = np.asarray(accuracies[key])
            report.cells.append(GridCell(
                attack=f"noise:sigma={float(magnitude):g}",
                attack_params={"magnitude": float(magnitude), "repeats": repeats},
                filter=spec.label,
                filter_params=spec.params,
                accuracy=float(values.mean()),
                accuracy_std=float(values.std()),
                samples=len(dataset),
                wall_time_s=times[key],
            ))
    return report


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def report_frame(report: EvalReport) -> pd.DataFrame:
    """One row per grid cell in CSV column order, parameters stored as sorted JSON strings."""
    rows = []
    for cell in report.cells:
        row = cell.to_dict()
        row["schema_version"] = REPORT_SCHEMA_VERSION
        row["attack_params"] = json.dumps(cell.attack_params, sort_keys=True)
        row["filter_params"] = json.dumps(cell.filter_params, sort_keys=True)
        rows.append(row)
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def write_report(report: EvalReport, out_dir: PathLike, stem: str = "grid") -> Tuple[Path, Path]:
    """
    Write ``<stem>.csv`` and ``<stem>.json`` under out_dir.

    Returns:
        (csv path, json path)
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    report_frame(report).to_csv(csv_path, index=False, float_format="%.6f", lineterminator="\n")
    write_json(json_path, report.to_dict())
    logger.info("report written to %s and %s", csv_path, json_path)
    return csv_path, json_path


def read_report(path: PathLike) -> EvalReport:
    with open(path, 'r', encoding='utf-8') as f:
        return EvalReport.from_dict(json.load(f))


def write_json(path: PathLike, data: Dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True)
    return path


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def frame_image(tensor: FrameTensor, t: int, threshold: float = 0.5) -> np.ndarray:
    """
    Grayscale view of one bin: ON (channel 1) white, OFF (channel 0) gray, else black.

    ON wins when both polarities fired at a pixel.
    """
    image = np.zeros((tensor.height, tensor.width), dtype=np.uint8)
    image[tensor.values[0, :, :, t] >= threshold] = OFF_GRAY
    if tensor.channels > 1:
        image[tensor.values[1, :, :, t] >= threshold] = ON_WHITE
    return image


def write_pgm(path: PathLike, image: np.ndarray) -> Path:
    path = Path(path)
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="L").save(path, format="PPM")
    return path


def read_pgm(path: PathLike) -> np.ndarray:
    with Image.open(path) as image:
        return np.asarray(image.convert("L"), dtype=np.uint8)


def render_frames(tensor: FrameTensor, out_dir: PathLike, threshold: float = 0.5) -> List[Path]:
    """
    Write one binary PGM per time bin as ``frame_<t>.pgm``.

    Args:
        tensor: Tensor to render
        out_dir: Target directory (created if missing)
        threshold: Cell activation threshold

    Returns:
        Written paths in bin order
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [
        write_pgm(out_dir / f"frame_{t:04d}.pgm", frame_image(tensor, t, threshold))
        for t in range(tensor.frames)
    ]
