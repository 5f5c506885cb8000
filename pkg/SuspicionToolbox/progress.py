#!/usr/bin/python3
"""
Progress bars for long loops (dataset generation, training epochs, batch scoring).
"""

import sys

from tqdm.auto import tqdm

_enabled = True


def set_progress_enabled(enabled: bool) -> None:
    """Globally enable or disable progress bars (disabled under --quiet and --silent)."""
    global _enabled
    _enabled = enabled


def configure_tqdm() -> dict:
    """
    Common tqdm keyword arguments so bars render the same everywhere.

    Bars go to stderr; stdout is reserved for command output.
    """
    is_notebook = 'ipykernel' in sys.modules
    tqdm.monitor_interval = 0
    return {
        'file': sys.stderr,
        'leave': False,
        'dynamic_ncols': True,
        'mininterval': 0.5,
        'smoothing': 0.2,
        'ncols': 100 if not is_notebook else None,
        'disable': not _enabled,
    }


def progress(iterable, desc: str, total: int | None = None, unit: str = 'it'):
    """Wrap an iterable in a configured tqdm bar."""
    return tqdm(iterable, desc=desc, total=total, unit=unit, **configure_tqdm())
