"""Main entry point for the DVS attack desk.

``python main.py <command> ...`` runs a CLI sub-command; ``python main.py``
or ``python main.py browse`` opens the Textual results browser.
"""
import atexit
import sys
from typing import List, Optional

from textual.app import App

import cli
from history import HISTORY_FILE
from ui.screens import MainMenuScreen


class DvsDeskApp(App):
    """Results browser over the run history."""

    TITLE = "DVS Attack Desk"
    SHOW_HEADER = False

    CSS = """
    Screen {
        background: $surface;
    }

    Button {
        margin: 1;
    }
    """

    BINDINGS = [
        ("q", "quit", "Quit"),
    ]

    def __init__(self, history_file: str = HISTORY_FILE):
        super().__init__()
        self.history_file = history_file

    def on_mount(self) -> None:
        self.push_screen(MainMenuScreen())

    def action_quit(self) -> None:
        self.exit()


def cleanup_terminal() -> None:
    """Ensure terminal is restored on exit."""
    try:
        sys.stdout.write("\033[?25h\033[0m")  # show cursor, reset colors
        sys.stdout.flush()
    except (OSError, ValueError):
        pass


def browse(history_file: str = HISTORY_FILE) -> int:
    atexit.register(cleanup_terminal)
    try:
        DvsDeskApp(history_file).run()
    except KeyboardInterrupt:
        cleanup_terminal()
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        return browse()
    if argv[0] == "browse":
        args = cli.parse_args(argv)
        return browse(args.history_file)
    return cli.main(argv)


if __name__ == "__main__":
    sys.exit(main())
