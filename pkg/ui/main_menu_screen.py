"""Main menu: banner, the most recent run, and the browser's three views."""
from typing import Optional

from textual.app import ComposeResult
from textual.binding import Binding
from textual.containers import Grid, Horizontal, Vertical
from textual.screen import ModalScreen, Screen
from textual.widgets import Button, Static

from history import load_history
from models import HistoryEntry
from ui.constants import DVS_TITLE_LINES, SUBTITLE
from ui.formatters import create_aligned_banner, format_timestamp


def last_run_line(history_file: str) -> Optional[str]:
    """Markup line describing the newest recorded run, or None with no history."""
    history = load_history(history_file)
    if not history:
        return None
    latest: HistoryEntry = history[-1]
    return (f"[cyan]{len(history)} run(s)[/cyan]  last: [bold]{latest.command}[/bold] "
            f"{format_timestamp(latest.timestamp)}  [dim]{latest.summary}[/dim]")


class MainMenuScreen(Screen):
    CSS = """
    MainMenuScreen {
        align: center middle;
    }

    #menu-banner, #last-run, #menu-hint {
        width: 100%;
        content-align: center middle;
        text-align: center;
    }

    #last-run {
        margin: 1 0;
    }

    #menu-buttons {
        grid-size: 4 1;
        grid-gutter: 0 2;
        width: 72;
        height: 5;
    }

    #menu-buttons Button {
        width: 100%;
    }
    """

    BINDINGS = [
        Binding("1", "runs", "Runs"),
        Binding("2", "inspect", "Inspect"),
        Binding("3", "about", "About"),
        Binding("4", "quit", "Exit"),
        Binding("q", "quit", "Quit"),
    ]

    def compose(self) -> ComposeResult:
        yield Static(create_aligned_banner(title_lines=DVS_TITLE_LINES, subtitle=SUBTITLE, width=61),
                     id="menu-banner")
        yield Static(last_run_line(self.app.history_file) or "[dim]no runs recorded yet[/dim]", id="last-run")
        with Grid(id="menu-buttons"):
            yield Button("[1] Runs", id="runs", variant="primary")
            yield Button("[2] Inspect", id="inspect", variant="primary")
            yield Button("[3] About", id="about", variant="primary")
            yield Button("[4] Exit", id="exit", variant="error")
        yield Static("[dim]1-4 or click; q quits[/dim]", id="menu-hint")

    def on_button_pressed(self, event: Button.Pressed) -> None:
        """Route a menu button to the matching action."""
        handler = {
            "runs": self.action_runs,
            "inspect": self.action_inspect,
            "about": self.action_about,
            "exit": self.action_quit,
        }.get(event.button.id)
        if handler is not None:
            handler()

    def action_runs(self) -> None:
        from ui.history_screen import RunHistoryScreen
        self.app.push_screen(RunHistoryScreen())

    def action_inspect(self) -> None:
        from ui.inspect_screen import InspectScreen
        self.app.push_screen(InspectScreen())

    def action_about(self) -> None:
        from ui.about_screen import AboutScreen
        self.app.push_screen(AboutScreen())

    def action_quit(self) -> None:
        self.app.push_screen(QuitConfirmScreen())


class QuitConfirmScreen(ModalScreen):
    """Asks before leaving the browser; recorded runs stay in the history file."""

    CSS = """
    QuitConfirmScreen {
        align: center middle;
    }

    #quit-dialog {
        width: 56;
        height: auto;
        padding: 1 2;
        border: heavy $error;
        background: $panel;
    }

    #quit-dialog Static {
        width: 100%;
        text-align: center;
    }

    #quit-buttons {
        height: auto;
        margin-top: 1;
        align: center middle;
    }
    """

    BINDINGS = [
        Binding("y", "confirm_quit", "Yes"),
        Binding("n", "cancel", "No"),
        Binding("escape", "cancel", "Cancel"),
    ]

    def compose(self) -> ComposeResult:
        with Vertical(id="quit-dialog"):
            yield Static("[bold]Close the results browser?[/bold]")
            yield Static(f"[dim]history: {self.app.history_file}[/dim]")
            with Horizontal(id="quit-buttons"):
                yield Button("[Y] Close", id="yes", variant="error")
                yield Button("[N] Stay", id="no", variant="default")

    def on_button_pressed(self, event: Button.Pressed) -> None:
        """Close on "yes", dismiss the dialog on "no"."""
        if event.button.id == "yes":
            self.action_confirm_quit()
        elif event.button.id == "no":
            self.action_cancel()

    def action_confirm_quit(self) -> None:
        self.app.exit()

    def action_cancel(self) -> None:
        self.app.pop_screen()
