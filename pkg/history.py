"""Run history: every CLI command appends an entry to a JSON file."""
import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, List, Optional

from models import HistoryEntry

logger = logging.getLogger(__name__)

# History database file
HISTORY_FILE = "dvs_runs.json"
MAX_HISTORY_ENTRIES = 1000


def load_history(path: str = HISTORY_FILE) -> List[HistoryEntry]:
    """
    Load history from JSON file.

    Returns:
        List of HistoryEntry objects, oldest first
    """
    if not os.path.exists(path):
        return []

    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
            return [HistoryEntry.from_dict(entry) for entry in data]
    except (json.JSONDecodeError, IOError) as e:
        logger.warning("ignoring unreadable history file %s: %s", path, e)
        return []


def save_history(history: List[HistoryEntry], path: str = HISTORY_FILE) -> None:
    try:
        data = [entry.to_dict() for entry in history]
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, ensure_ascii=False)
    except IOError as e:
        logger.warning("cannot write history file %s: %s", path, e)


def add_to_history(command: str, summary: str, report_path: str = "",
                   metadata: Optional[Dict[str, Any]] = None, path: str = HISTORY_FILE) -> HistoryEntry:
    """
    Add a new entry to history.

    Args:
        command: Sub-command name, e.g. "grid"
        summary: One-line result description
        report_path: Main output file of the run (JSON report, checkpoint, directory)
        metadata: Extra run settings
        path: History file

    Returns:
        The stored entry
    """
    history = load_history(path)

    entry = HistoryEntry(
        timestamp=datetime.now().isoformat(),
        command=command,
        summary=summary,
        report_path=str(report_path),
        metadata=dict(metadata or {}),
    )

    history.append(entry)
    if len(history) > MAX_HISTORY_ENTRIES:
        history = history[-MAX_HISTORY_ENTRIES:]

    save_history(history, path)
    return entry


def delete_history_entry(entry: HistoryEntry, path: str = HISTORY_FILE) -> bool:
    """
    Delete a history entry.

    Returns:
        True if entry was found and deleted, False otherwise
    """
    history = load_history(path)

    for i, e in enumerate(history):
        if (e.timestamp == entry.timestamp and
                e.command == entry.command and
                e.report_path == entry.report_path):
            history.pop(i)
            save_history(history, path)
            return True

    return False


def get_history_count(path: str = HISTORY_FILE) -> int:
    """Get the number of history entries."""
    return len(load_history(path))
