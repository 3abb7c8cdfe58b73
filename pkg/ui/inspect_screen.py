"""Stream inspector: load an EVT1 file, validate it and page through its time bins."""
from typing import Optional

from rich.markup import escape

from textual.app import ComposeResult
from textual.binding import Binding
from textual.containers import Horizontal, ScrollableContainer, Vertical
from textual.screen import Screen
from textual.widgets import Button, Input, Static

from errors import DvsAttackError, StreamValidationError
from event_core import bin_events
from event_io import read_evt
from models import FrameTensor
from ui.formatters import ascii_frame, format_stream_stats

DEFAULT_BINS = 20


class InspectScreen(Screen):
    """Left: file and bin-count inputs plus stream statistics. Right: the current bin as text."""

    CSS = """
    InspectScreen {
        layout: horizontal;
    }

    #input-panel {
        width: 1fr;
        height: 100%;
        border: solid $primary;
        padding: 1;
    }

    #output-panel {
        width: 2fr;
        height: 100%;
        border: solid $success;
        padding: 1;
    }

    .panel-title {
        text-align: center;
        text-style: bold;
        height: auto;
    }

    #toolbar {
        height: auto;
        padding: 1;
        border-bottom: solid $primary;
    }

    #toolbar Button {
        margin: 0 1;
    }

    #frame-scroll {
        height: 1fr;
    }
    """

    BINDINGS = [
        Binding("ctrl+l", "load", "Load"),
        Binding("left", "previous_bin", "Previous bin"),
        Binding("right", "next_bin", "Next bin"),
        Binding("escape", "back", "Back to Menu"),
    ]

    def __init__(self, path: str = ""):
        super().__init__()
        self.initial_path = path
        self.tensor: Optional[FrameTensor] = None
        self.bin = 0

    def compose(self) -> ComposeResult:
        with Vertical(id="input-panel"):
            yield Static("[bold cyan]═══ STREAM ═══[/bold cyan]", classes="panel-title")
            with Horizontal(id="toolbar"):
                yield Button("Load (Ctrl+L)", id="btn-load", variant="success")
                yield Button("Back (ESC)", id="btn-back", variant="default")
            yield Static("[bold yellow]EVT1 file:[/bold yellow]")
            yield Input(value=self.initial_path, placeholder="runs/data/test/0/00000.evt", id="path-input")
            yield Static("[bold yellow]Time bins:[/bold yellow]")
            yield Input(value=str(DEFAULT_BINS), id="bins-input")
            yield Static("[dim]Load a file to see its statistics.[/dim]", id="stats")

        with Vertical(id="output-panel"):
            yield Static("[bold green]═══ FRAMES ═══[/bold green]", classes="panel-title")
            yield Static("", id="frame-title")
            with ScrollableContainer(id="frame-scroll"):
                yield Static("[dim]Use ← and → to move between time bins.[/dim]", id="frame")

    def on_mount(self) -> None:
        self.query_one("#path-input", Input).focus()

    def on_button_pressed(self, event: Button.Pressed) -> None:
        if event.button.id == "btn-load":
            self.action_load()
        elif event.button.id == "btn-back":
            self.action_back()

    def on_input_submitted(self, event: Input.Submitted) -> None:
        """Enter in the path field loads the file."""
        self.action_load()

    def action_load(self) -> None:
        """Read the EVT1 file, bin it and show the first bin; errors go to the stats line."""
        stats = self.query_one("#stats", Static)
        path = self.query_one("#path-input", Input).value.strip()
        try:
            t_bins = int(self.query_one("#bins-input", Input).value.strip() or DEFAULT_BINS)
            stream = read_evt(path)
            self.tensor = bin_events(stream, t_bins)
        except StreamValidationError as e:
            self.tensor = None
            stats.update(f"[red]Invalid stream: {e.kind} at event {e.index}[/red]\n[dim]{escape(str(e))}[/dim]")
        except (DvsAttackError, OSError, ValueError) as e:
            self.tensor = None
            stats.update(f"[red]{type(e).__name__}: {escape(str(e))}[/red]")
        else:
            stats.update(format_stream_stats(stream) + "\n[green]Stream is valid.[/green]")
        self.bin = 0
        self.show_bin()

    def show_bin(self) -> None:
        title = self.query_one("#frame-title", Static)
        frame = self.query_one("#frame", Static)
        if self.tensor is None:
            title.update("")
            frame.update("")
            return
        title.update(f"Bin {self.bin + 1}/{self.tensor.frames}  ({self.tensor.bin_duration} µs per bin)")
        frame.update(ascii_frame(self.tensor, self.bin))

    def action_previous_bin(self) -> None:
        if self.tensor is not None:
            self.bin = (self.bin - 1) % self.tensor.frames
            self.show_bin()

    def action_next_bin(self) -> None:
        if self.tensor is not None:
            self.bin = (self.bin + 1) % self.tensor.frames
            self.show_bin()

    def action_back(self) -> None:
        self.app.pop_screen()
