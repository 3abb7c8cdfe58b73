"""About screen: selector cheat sheet next to the rendered README."""
from pathlib import Path

from textual.app import ComposeResult
from textual.binding import Binding
from textual.containers import Horizontal, VerticalScroll
from textual.screen import Screen
from textual.widgets import Footer, Markdown, Static

from attacks import ATTACK_PARAMS

README_PATH = Path(__file__).resolve().parent.parent / "README.md"

FILTER_SELECTORS = ("none", "baf:S=<1..3>,T=<µs>", "mf:T=<events|inf>")


def load_readme(path: Path = README_PATH) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError:
        return "# Error\n\nCould not load README.md file."


def selector_sheet() -> str:
    """Markup listing every attack with its parameter names, then the filter forms."""
    lines = ["[bold]--attack[/bold]"]
    for kind, params in ATTACK_PARAMS.items():
        keys = ",".join(f"{key}=" for key in params)
        lines.append(f"  [cyan]{kind}[/cyan]{':' + keys if keys else ''}")
    lines.append("")
    lines.append("[bold]--filter[/bold]")
    lines.extend(f"  [cyan]{form}[/cyan]" for form in FILTER_SELECTORS)
    return "\n".join(lines)


class AboutScreen(Screen):
    CSS = """
    #about-body {
        height: 1fr;
    }

    #selectors {
        width: 36;
        padding: 1;
        border-right: tall $primary;
    }

    #readme {
        width: 1fr;
        padding: 0 1;
    }
    """

    BINDINGS = [
        Binding("1", "back", "Back"),
        Binding("escape", "back", "Back"),
    ]

    def compose(self) -> ComposeResult:
        with Horizontal(id="about-body"):
            yield Static(selector_sheet(), id="selectors")
            with VerticalScroll(id="readme"):
                yield Markdown(load_readme())
        yield Footer()

    def action_back(self) -> None:
        self.app.pop_screen()
