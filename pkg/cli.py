"""Command-line sub-commands: synth, train, eval, attack, filter, grid, noise-study, render."""
import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from rich.console import Console
from rich.table import Table

import history
from attacks import ATTACK_PARAMS, parse_attack_spec, run_attack
from config import DEFAULTS, load_config_file, setup_logging
from errors import ConfigError, DvsAttackError
from event_core import bin_events, frames_from_streams, synth_dataset, tensor_to_events
from event_io import read_dataset, read_evt, write_dataset
from filters import filter_stream, parse_filter_spec
from harness import (
    load_test_set,
    render_frames,
    run_grid,
    run_noise_study,
    write_json,
    write_report,
)
from models import AttackSpec, EvalReport, GridSpec, LabeledStream, NeuronParams, SurrogateConfig
from snn import ARCHITECTURES, build_model, evaluate, load_checkpoint, save_checkpoint, train

logger = logging.getLogger(__name__)
console = Console()

DEFAULT_GRID_ATTACKS = ["clean", "frame", "corner", "dash", "mfdash"]
DEFAULT_GRID_FILTERS = [
    "none",
    "baf:S=1,T=5000",
    "baf:S=1,T=20000",
    "baf:S=2,T=5000",
    "baf:S=2,T=20000",
    "mf:T=5",
    "mf:T=10",
    "mf:T=20",
]
MODEL_FILE = "model.snn"

Outcome = Tuple[str, str, Dict]


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULTS.seed, help="RNG seed")
    common.add_argument("--out-dir", default=DEFAULTS.out_dir, help="output directory")
    common.add_argument("--config", default=None, help="YAML file whose keys mirror the long flags")
    common.add_argument("--history-file", default=history.HISTORY_FILE, help="run history database")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    return common


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", default=None, help=f"checkpoint (default <out-dir>/{MODEL_FILE})")
    p.add_argument("--data", default=None, help="dataset directory (default <out-dir>/data/test)")
    p.add_argument("--t-bins", type=int, default=DEFAULTS.t_bins, help="time bins per sample")


def _add_attack_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-iter", type=int, default=DEFAULTS.max_iter, help="sparse attack iterations")
    p.add_argument("--eta", type=float, default=DEFAULTS.eta, help="sparse attack step size")
    p.add_argument("--mask-bins", default=DEFAULTS.mask_bins, help="sparse attack bins, e.g. 0-4")
    p.add_argument("--max-cycles", type=int, default=DEFAULTS.max_cycles, help="geometry loop bound")
    p.add_argument("--th0", type=int, default=DEFAULTS.th0, help="MF-aware dash frames per position")
    p.add_argument("--accumulate", action=argparse.BooleanOptionalAction, default=DEFAULTS.accumulate,
                   help="geometry attacks keep earlier passes' perturbations (default: corner and mfdash do)")


def build_parser() -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="dvs-attacks", description="DVS adversarial attack and defense desk")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    subparsers: Dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("synth", parents=[common], help="generate the synthetic dataset")
    p.add_argument("--classes", type=int, default=DEFAULTS.classes)
    p.add_argument("--per-class", type=int, default=DEFAULTS.per_class, help="training samples per class")
    p.add_argument("--test-per-class", type=int, default=DEFAULTS.test_per_class)
    p.add_argument("--size", type=int, default=DEFAULTS.size, help="sensor resolution N")
    p.add_argument("--duration", type=int, default=DEFAULTS.duration, help="recording length in µs")
    p.add_argument("--noise-rate", type=float, default=DEFAULTS.noise_rate, help="events/pixel/s")
    subparsers["synth"] = p

    p = sub.add_parser("train", parents=[common], help="train the SNN")
    p.add_argument("--data", default=None, help="dataset root holding train/ and test/ (default <out-dir>/data)")
    p.add_argument("--t-bins", type=int, default=DEFAULTS.t_bins)
    p.add_argument("--arch", choices=ARCHITECTURES, default=DEFAULTS.arch)
    p.add_argument("--v-th", type=float, default=DEFAULTS.v_th)
    p.add_argument("--leak", type=float, default=DEFAULTS.leak)
    p.add_argument("--slope", type=float, default=DEFAULTS.slope)
    p.add_argument("--epochs", type=int, default=DEFAULTS.epochs)
    p.add_argument("--lr", type=float, default=DEFAULTS.lr)
    p.add_argument("--batch", type=int, default=DEFAULTS.batch)
    subparsers["train"] = p

    p = sub.add_parser("eval", parents=[common], help="test accuracy, optionally behind a filter")
    _add_model_args(p)
    p.add_argument("--filter", default="none", help="none | baf:S=..,T=.. | mf:T=..")
    subparsers["eval"] = p

    p = sub.add_parser("attack", parents=[common], help="attack a dataset and save the result")
    _add_model_args(p)
    p.add_argument("--attack", required=True, help="clean | sparse | frame | corner | dash | mfdash[:k=v,..]")
    _add_attack_args(p)
    subparsers["attack"] = p

    p = sub.add_parser("filter", parents=[common], help="filter every stream of a dataset directory")
    p.add_argument("--filter", required=True, help="baf:S=..,T=.. | mf:T=.. | none")
    p.add_argument("--input", required=True, help="dataset directory")
    p.add_argument("--output", default=None, help="target directory (default <out-dir>/filtered)")
    subparsers["filter"] = p

    p = sub.add_parser("grid", parents=[common], help="attack x filter accuracy grid")
    _add_model_args(p)
    p.add_argument("--attack", action="append", default=None, help="repeatable attack selector")
    p.add_argument("--filter", action="append", default=None, help="repeatable filter selector")
    _add_attack_args(p)
    subparsers["grid"] = p

    p = sub.add_parser("noise-study", parents=[common], help="accuracy under Gaussian noise")
    _add_model_args(p)
    p.add_argument("--magnitudes", default=DEFAULTS.magnitudes, help="comma-separated noise std devs")
    p.add_argument("--filter", action="append", default=None, help="repeatable filter selector")
    p.add_argument("--repeats", type=int, default=DEFAULTS.repeats, help="noise draws per magnitude")
    subparsers["noise-study"] = p

    p = sub.add_parser("render", parents=[common], help="write one PGM per time bin of an EVT1 file")
    p.add_argument("--input", required=True, help="EVT1 file")
    p.add_argument("--t-bins", type=int, default=DEFAULTS.t_bins)
    p.add_argument("--output", default=None, help="target directory (default <out-dir>/frames)")
    subparsers["render"] = p

    sub.add_parser("browse", parents=[common], help="open the results browser")
    return parser, subparsers


def _apply_config_file(argv: Sequence[str], subparsers: Dict[str, argparse.ArgumentParser]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = load_config_file(known.config)
    dests = {action.dest for p in subparsers.values() for action in p._actions}
    unknown = sorted(set(values) - dests)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for p in subparsers.values():
        owned = {action.dest for action in p._actions}
        p.set_defaults(**{k: v for k, v in values.items() if k in owned and k != "config"})


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse argv; values from --config become defaults that explicit flags override."""
    argv = list(argv) if argv is not None else None
    parser, subparsers = build_parser()
    _apply_config_file(argv if argv is not None else sys.argv[1:], subparsers)
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _out(args) -> Path:
    path = Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _model_path(args) -> Path:
    return Path(args.model) if args.model else Path(args.out_dir) / MODEL_FILE


def _test_path(args) -> Path:
    return Path(args.data) if args.data else Path(args.out_dir) / "data" / "test"


def attack_spec_from_args(text: str, args) -> AttackSpec:
    """Parse an attack selector and fill parameters it leaves out from the flags."""
    spec = parse_attack_spec(text)
    flag_values = {
        "max_iter": args.max_iter,
        "eta": args.eta,
        "mask_bins": args.mask_bins,
        "max_cycles": args.max_cycles,
        "th0": args.th0,
        "accumulate": args.accumulate,
    }
    params = spec.param_dict
    for key in ATTACK_PARAMS[spec.kind]:
        if key not in params and flag_values.get(key) is not None:
            params[key] = flag_values[key]
    return AttackSpec(kind=spec.kind, params=tuple(sorted(params.items())))


def print_report(report: EvalReport, title: str) -> None:
    table = Table(title=title)
    for column in ("attack", "filter", "accuracy", "std", "mean L0", "overhead"):
        table.add_column(column)
    for cell in report.cells:
        table.add_row(cell.attack, cell.filter, f"{cell.accuracy:.3f}", f"{cell.accuracy_std:.3f}",
                      f"{cell.mean_l0:.1f}", f"{cell.event_overhead:.3f}")
    console.print(table)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> Outcome:
    root = _out(args) / "data"
    common = dict(class_count=args.classes, size=args.size, duration=args.duration, noise_rate=args.noise_rate)
    train_set = synth_dataset(samples_per_class=args.per_class, seed=args.seed, **common)
    test_set = synth_dataset(samples_per_class=args.test_per_class, seed=args.seed + 1, **common)
    write_dataset(root / "train", train_set)
    write_dataset(root / "test", test_set)
    summary = f"{len(train_set)} train / {len(test_set)} test samples, {args.classes} classes, N={args.size}"
    console.print(f"[green]{summary}[/green] -> {root}")
    return summary, str(root), {"classes": args.classes, "size": args.size, "seed": args.seed}


def cmd_train(args) -> Outcome:
    root = Path(args.data) if args.data else Path(args.out_dir) / "data"
    train_set = frames_from_streams(read_dataset(root / "train"), args.t_bins)
    test_dir = root / "test"
    test_set = frames_from_streams(read_dataset(test_dir), args.t_bins) if test_dir.is_dir() else None

    num_classes = int(train_set.labels.max()) + 1
    model = build_model(
        args.arch,
        tuple(train_set.values.shape[1:4]),
        num_classes,
        neuron=NeuronParams(v_th=args.v_th, leak=args.leak),
        surrogate=SurrogateConfig(slope=args.slope),
        seed=args.seed,
    )
    model, train_history = train(model, train_set, args.epochs, args.lr, args.batch, args.seed, test_set)
    out = _out(args)
    save_checkpoint(model, out / MODEL_FILE)
    write_json(out / "train_history.json", train_history.to_dict())

    last = train_history.epochs[-1] if train_history.epochs else None
    test_acc = last.test_accuracy if last and last.test_accuracy is not None else float("nan")
    summary = f"{args.arch} model, {args.epochs} epochs, test accuracy {test_acc:.3f}"
    console.print(f"[green]{summary}[/green]")
    return summary, str(out / MODEL_FILE), {"arch": args.arch, "epochs": args.epochs, "seed": args.seed}


def cmd_eval(args) -> Outcome:
    spec = parse_filter_spec(args.filter)
    model = load_checkpoint(_model_path(args))
    streams = read_dataset(_test_path(args))
    filtered = [LabeledStream(filter_stream(s.stream, spec), s.label) for s in streams]
    accuracy = evaluate(model, frames_from_streams(filtered, args.t_bins))
    summary = f"accuracy {accuracy:.4f} with filter {spec.label} on {len(streams)} samples"
    console.print(f"[green]{summary}[/green]")
    return summary, str(_model_path(args)), {"filter": spec.label, "accuracy": accuracy}


def cmd_attack(args) -> Outcome:
    spec = attack_spec_from_args(args.attack, args)
    model = load_checkpoint(_model_path(args))
    dataset = load_test_set(_test_path(args), args.t_bins)
    perturbed, report = run_attack(model, dataset, spec)

    out = _out(args) / f"attack_{spec.kind}"
    samples = [
        LabeledStream(tensor_to_events(perturbed.sample(i)), int(perturbed.labels[i]))
        for i in range(len(perturbed))
    ]
    write_dataset(out / "dataset", samples)
    report_path = write_json(out / "report.json", report.to_dict())
    summary = (f"{spec.label}: fooled {report.fooled_rate:.3f}, mean L0 {report.mean_l0:.1f}, "
               f"overhead {report.mean_event_overhead:.3f}")
    console.print(f"[green]{summary}[/green]")
    return summary, str(report_path), {"attack": spec.label, "fooled_rate": report.fooled_rate}


def cmd_filter(args) -> Outcome:
    spec = parse_filter_spec(args.filter)
    streams = read_dataset(args.input)
    filtered = [LabeledStream(filter_stream(s.stream, spec), s.label) for s in streams]
    out = Path(args.output) if args.output else _out(args) / "filtered"
    write_dataset(out, filtered)
    before = sum(len(s.stream) for s in streams)
    after = sum(len(s.stream) for s in filtered)
    summary = f"{spec.label}: kept {after}/{before} events over {len(streams)} streams"
    console.print(f"[green]{summary}[/green]")
    return summary, str(out), {"filter": spec.label}


def cmd_grid(args) -> Outcome:
    attacks = [attack_spec_from_args(a, args) for a in (args.attack or DEFAULT_GRID_ATTACKS)]
    filters = [parse_filter_spec(f) for f in (args.filter or DEFAULT_GRID_FILTERS)]
    spec = GridSpec(attacks=attacks, filters=filters, dataset=str(_test_path(args)),
                    model=str(_model_path(args)), seed=args.seed, t_bins=args.t_bins)
    report = run_grid(spec)
    _, json_path = write_report(report, _out(args), "grid")
    print_report(report, "attack x filter accuracy")
    summary = f"grid of {len(report.cells)} cells"
    return summary, str(json_path), report.metadata


def cmd_noise_study(args) -> Outcome:
    model = load_checkpoint(_model_path(args))
    dataset = load_test_set(_test_path(args), args.t_bins)
    try:
        magnitudes = [float(m) for m in str(args.magnitudes).split(",") if m.strip()]
    except ValueError as e:
        raise ConfigError(f"bad --magnitudes {args.magnitudes!r}") from e
    filters = [parse_filter_spec(f) for f in (args.filter or ["none", "mf:T=5", "mf:T=10", "baf:S=1,T=5000"])]
    report = run_noise_study(magnitudes, filters, model, dataset, args.seed, args.repeats)
    _, json_path = write_report(report, _out(args), "noise")
    print_report(report, "accuracy under Gaussian noise")
    summary = f"noise study over {len(magnitudes)} magnitudes x {len(report.cells) // max(len(magnitudes), 1)} filters"
    return summary, str(json_path), report.metadata


def cmd_render(args) -> Outcome:
    tensor = bin_events(read_evt(args.input), args.t_bins)
    out = Path(args.output) if args.output else _out(args) / "frames"
    paths = render_frames(tensor, out)
    summary = f"rendered {len(paths)} frames of {args.input}"
    console.print(f"[green]{summary}[/green] -> {out}")
    return summary, str(out), {"input": str(args.input), "t_bins": args.t_bins}


COMMANDS: Dict[str, Callable] = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "attack": cmd_attack,
    "filter": cmd_filter,
    "grid": cmd_grid,
    "noise-study": cmd_noise_study,
    "render": cmd_render,
}


def run(args: argparse.Namespace) -> int:
    """Execute a parsed command; returns the process exit code."""
    setup_logging(args.verbose)
    try:
        summary, report_path, metadata = COMMANDS[args.command](args)
    except DvsAttackError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    history.add_to_history(args.command, summary, report_path, metadata, path=args.history_file)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as e:
        setup_logging(0)
        logger.error("%s", e)
        return e.exit_code
    return run(args)
