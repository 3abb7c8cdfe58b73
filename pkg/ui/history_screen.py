"""Run history browser screens."""
import json
from pathlib import Path
from typing import Optional

from rich.markup import escape
from textual.app import ComposeResult
from textual.binding import Binding
from textual.containers import Container, Horizontal, ScrollableContainer, Vertical
from textual.screen import ModalScreen, Screen
from textual.widgets import Button, DataTable, Static

from history import delete_history_entry, load_history
from models import AttackReport, EvalReport, HistoryEntry
from ui.formatters import format_accuracy, format_timestamp


def load_run_report(path: str):
    """EvalReport or AttackReport stored at ``path``, or None when there is nothing to show."""
    report_path = Path(path)
    if report_path.suffix != ".json" or not report_path.is_file():
        return None
    try:
        with open(report_path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (json.JSONDecodeError, OSError):
        return None
    if not isinstance(data, dict):
        return None
    if "cells" in data:
        return EvalReport.from_dict(data)
    if "attack" in data:
        return AttackReport.from_dict(data)
    return None


class RunHistoryScreen(Screen):
    """Table of recorded CLI runs, newest first."""

    CSS = """
    RunHistoryScreen {
        layout: vertical;
    }

    DataTable {
        height: 1fr;
    }

    .banner-container {
        width: 100%;
        height: auto;
        padding: 1;
        text-align: center;
        align: center middle;
    }

    .button-container {
        align: center middle;
        padding: 1;
    }
    """

    BINDINGS = [
        Binding("1", "view_details", "View Details"),
        Binding("2", "back", "Back"),
        Binding("escape", "back", "Back"),
    ]

    def _entries(self):
        entries = load_history(self.app.history_file)
        entries.sort(key=lambda e: e.timestamp, reverse=True)
        return entries

    def compose(self) -> ComposeResult:
        entries = self._entries()

        if not entries:
            yield Static(
                "[dim]No runs recorded yet. Run synth, train or grid from the command line first.[/dim]",
                classes="banner-container"
            )
            with Container(classes="button-container"):
                yield Button("Back", id="back", variant="default")
            return

        yield Static("[bold]RUN HISTORY[/bold]", classes="banner-container")

        table = DataTable(id="history-table")
        table.add_columns("Time", "Command", "Summary", "Output")
        for entry in entries[:50]:
            summary = entry.summary[:60] + "..." if len(entry.summary) > 60 else entry.summary
            table.add_row(format_timestamp(entry.timestamp), entry.command, summary, entry.report_path)
        yield table

        with Container(classes="button-container"):
            yield Button("[1] View Details", id="view", variant="primary")
            yield Button("Delete Entry", id="delete", variant="error")
            yield Button("[2] Back", id="back", variant="default")

    def on_button_pressed(self, event: Button.Pressed) -> None:
        """Dispatch the table toolbar buttons."""
        if event.button.id == "view":
            self.action_view_details()
        elif event.button.id == "delete":
            self.delete_entry()
        elif event.button.id == "back":
            self.action_back()

    def _selected(self) -> Optional[HistoryEntry]:
        table = self.query_one("#history-table", DataTable)
        entries = self._entries()
        if table.cursor_row is not None and table.cursor_row < len(entries):
            return entries[table.cursor_row]
        return None

    def action_view_details(self) -> None:
        """Open the detail view for the highlighted run."""
        entry = self._selected()
        if entry is not None:
            self.app.push_screen(RunDetailScreen(entry))

    def delete_entry(self) -> None:
        entry = self._selected()
        if entry is not None:
            self.app.push_screen(DeleteConfirmScreen(entry))

    def action_back(self) -> None:
        self.app.pop_screen()


class RunDetailScreen(ModalScreen):
    """One run: metadata plus its grid (EvalReport) or per-attack statistics."""

    CSS = """
    RunDetailScreen {
        align: center middle;
    }

    .detail-container {
        width: 95%;
        height: 90%;
        border: solid $primary;
        padding: 1;
    }

    .header-info {
        height: auto;
        padding: 1;
        border-bottom: solid $primary;
    }

    #report-table {
        height: 1fr;
    }

    .button-container {
        height: auto;
        padding: 1;
        border-top: solid $primary;
        align: center middle;
    }
    """

    BINDINGS = [
        Binding("1", "back", "Back"),
        Binding("escape", "back", "Back"),
    ]

    def __init__(self, entry: HistoryEntry):
        super().__init__()
        self.entry = entry
        self.report = load_run_report(entry.report_path)

    def compose(self) -> ComposeResult:
        with Vertical(classes="detail-container"):
            with Container(classes="header-info"):
                yield Static(f"[bold]{self.entry.command.upper()}[/bold]  {format_timestamp(self.entry.timestamp)}")
                yield Static(escape(self.entry.summary))
                yield Static(f"[dim]{self.entry.report_path}[/dim]")

            if isinstance(self.report, EvalReport):
                yield self._grid_table(self.report)
            elif isinstance(self.report, AttackReport):
                yield Static(
                    f"Attack: {self.report.attack}  passes: {self.report.passes}\n"
                    f"Fooled: {self.report.fooled_rate:.3f}  mean L0: {self.report.mean_l0:.1f}  "
                    f"event overhead: {self.report.mean_event_overhead:.3f}\n"
                    f"Unfooled per pass: {self.report.remaining_trace[:40]}"
                )
            else:
                with ScrollableContainer():
                    yield Static(escape(json.dumps(self.entry.metadata, indent=2, sort_keys=True)))

            with Horizontal(classes="button-container"):
                yield Button("[1] Back", id="back", variant="default")

    def _grid_table(self, report: EvalReport) -> DataTable:
        table = DataTable(id="report-table")
        table.add_columns("Attack", "Filter", "Accuracy", "Std", "Mean L0", "Overhead", "Samples")
        clean = [c.accuracy for c in report.cells if c.attack == "clean" and c.filter == "none"]
        reference = clean[0] if clean else 1.0
        for cell in report.cells:
            table.add_row(cell.attack, cell.filter, format_accuracy(cell.accuracy, reference),
                          f"{cell.accuracy_std:.3f}", f"{cell.mean_l0:.1f}", f"{cell.event_overhead:.3f}",
                          str(cell.samples))
        return table

    def on_button_pressed(self, event: Button.Pressed) -> None:
        if event.button.id == "back":
            self.action_back()

    def action_back(self) -> None:
        self.app.pop_screen()


class DeleteConfirmScreen(ModalScreen):
    """Confirmation dialog for deleting a run entry."""

    CSS = """
    DeleteConfirmScreen {
        align: center middle;
    }

    .dialog-container {
        width: 50;
        height: auto;
        border: solid $error;
        padding: 1;
        background: $surface;
    }

    .message {
        padding: 1;
        text-align: center;
    }

    .button-container {
        height: auto;
        padding: 1;
        align: center middle;
    }
    """

    BINDINGS = [
        Binding("y", "confirm_delete", "Yes"),
        Binding("n", "cancel", "No"),
        Binding("escape", "cancel", "Cancel"),
    ]

    def __init__(self, entry: HistoryEntry):
        super().__init__()
        self.entry = entry

    def compose(self) -> ComposeResult:
        with Vertical(classes="dialog-container"):
            yield Static("[bold]Delete this run from the history?[/bold]\n[dim]Output files are kept.[/dim]",
                         classes="message")
            with Container(classes="button-container"):
                yield Button("[Y] Yes", id="yes", variant="error")
                yield Button("[N] No", id="no", variant="default")

    def on_button_pressed(self, event: Button.Pressed) -> None:
        if event.button.id == "yes":
            self.action_confirm_delete()
        elif event.button.id == "no":
            self.action_cancel()

    def action_confirm_delete(self) -> None:
        """Remove the entry from the history file and close the dialog."""
        delete_history_entry(self.entry, self.app.history_file)
        self.app.pop_screen()
        # Refresh the history screen
        self.app.pop_screen()
        self.app.push_screen(RunHistoryScreen())

    def action_cancel(self) -> None:
        self.app.pop_screen()
