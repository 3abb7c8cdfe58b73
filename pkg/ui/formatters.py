"""Text formatting utilities for UI display."""
from datetime import datetime
from typing import List

import numpy as np

from models import EventStream, FrameTensor
from ui.constants import FRAME_GLYPHS


def _center(text: str, inner: int) -> str:
    text = text[:inner - 2]
    left = (inner - len(text)) // 2
    return "║" + " " * left + text + " " * (inner - len(text) - left) + "║"


def create_aligned_banner(title_lines: List[str], subtitle: str = "", width: int = 65) -> str:
    """
    Box the title art and subtitle with straight borders.

    Args:
        title_lines: Lines of the ASCII art title
        subtitle: Optional subtitle, may span several lines
        width: Total banner width (bumped to the next odd number)

    Returns:
        Banner string
    """
    if width % 2 == 0:
        width += 1
    inner = width - 2
    empty = "║" + " " * inner + "║"

    lines = ["╔" + "═" * inner + "╗", empty]
    lines.extend(_center(line, inner) for line in title_lines)
    if subtitle:
        lines.append(empty)
        lines.extend(_center(line, inner) for line in subtitle.split("\n"))
    lines += [empty, "╚" + "═" * inner + "╝"]
    return "\n".join(lines)


def format_timestamp(timestamp: str) -> str:
    """ISO timestamp to 'YYYY-mm-dd HH:MM:SS'; unparsable input is returned as is."""
    try:
        return datetime.fromisoformat(timestamp).strftime("%Y-%m-%d %H:%M:%S")
    except (TypeError, ValueError):
        return timestamp


def format_accuracy(accuracy: float, reference: float = 1.0) -> str:
    """Accuracy with Rich markup: green near the reference, yellow halfway, red below."""
    ratio = accuracy / reference if reference > 0 else 0.0
    color = "green" if ratio >= 0.8 else "yellow" if ratio >= 0.5 else "red"
    return f"[{color}]{accuracy:.3f}[/{color}]"


def format_stream_stats(stream: EventStream) -> str:
    on = int(np.count_nonzero(stream.polarity == 1))
    return (
        f"[bold cyan]╔══ STREAM ══╗[/bold cyan]\n"
        f"[bold cyan]║[/bold cyan] Sensor: {stream.width}x{stream.height}\n"
        f"[bold cyan]║[/bold cyan] Duration: {stream.duration} µs\n"
        f"[bold cyan]║[/bold cyan] Events: {len(stream)} ({on} ON / {len(stream) - on} OFF)\n"
        f"[bold cyan]╚════════════╝[/bold cyan]"
    )


def ascii_frame(tensor: FrameTensor, t: int, threshold: float = 0.5) -> str:
    """One time bin as text, one glyph per pixel (OFF '-', ON '+', both '#')."""
    on = tensor.values[1, :, :, t] >= threshold if tensor.channels > 1 else np.zeros((tensor.height, tensor.width), bool)
    off = tensor.values[0, :, :, t] >= threshold
    codes = off.astype(int) + 2 * on.astype(int)
    return "\n".join("".join(FRAME_GLYPHS[c] for c in row) for row in codes.tolist())
