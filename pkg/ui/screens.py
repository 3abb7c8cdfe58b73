"""Textual screens of the results browser."""
from ui.about_screen import AboutScreen
from ui.history_screen import DeleteConfirmScreen, RunDetailScreen, RunHistoryScreen
from ui.inspect_screen import InspectScreen
from ui.main_menu_screen import MainMenuScreen, QuitConfirmScreen

__all__ = [
    "MainMenuScreen",
    "QuitConfirmScreen",
    "RunHistoryScreen",
    "RunDetailScreen",
    "DeleteConfirmScreen",
    "InspectScreen",
    "AboutScreen",
]
