"""
Solver Event Logger.

Provides two ways to inspect what the numerical drivers did:

1. **JSON-lines log file** (path from NF_SPECTRUM_LOG_FILE)
   - Persistent across runs, queryable with jq or grep
   - Auto-rotates at 5MB

2. **In-memory ring buffer**
   - Last 500 events, instant access
   - Running counters (Newton successes/failures, skipped seeds, eigenpairs)

Usage:
    from neural_field_spectrum.solver_log import solver_log

    solver_log.log("newton_failed", detail="seed 3", residual=1.2e-3, iterations=50)
    solver_log.log("eigenpair_found", z=complex(0, 1.34))

    diagnostics = solver_log.get_diagnostics()

Progress lines for humans go through `make_tagged_printer`, which writes
"[Tag] message" to stderr so stdout stays free for JSON results.
"""

import json
import os
import sys
import threading
from collections import deque
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional


EVENT_TYPES = {
    # Newton
    "newton_converged",
    "newton_failed",

    # Root searches
    "root_skipped",
    "root_collapse",
    "seed_failed",

    # Results
    "eigenpair_found",
    "bisection_step",
    "contour_point",

    # Simulation
    "blowup",

    # Configuration
    "config_loaded",
}

MAX_LOG_SIZE = 5 * 1024 * 1024  # 5MB
RING_BUFFER_SIZE = 500

_LEVELS = {"quiet": 0, "info": 1, "debug": 2}


def _env_log_file() -> Optional[Path]:
    path = os.environ.get("NF_SPECTRUM_LOG_FILE")
    return Path(path).expanduser() if path else None


def _jsonable(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, "item"):
        return _jsonable(value.item())
    return value


class SolverLog:
    """Thread-safe solver event logger with file + memory backends."""

    def __init__(self, log_file: Optional[Path] = None, capacity: int = RING_BUFFER_SIZE):
        self._buffer: deque = deque(maxlen=capacity)
        self._lock = threading.Lock()
        self._log_file = log_file
        self._counts = {event: 0 for event in EVENT_TYPES}
        if self._log_file is not None:
            try:
                self._log_file.parent.mkdir(parents=True, exist_ok=True)
            except Exception:
                self._log_file = None

    def set_log_file(self, log_file: Optional[Path]) -> None:
        """Redirect (or disable, with None) the JSON-lines sink."""
        with self._lock:
            self._log_file = log_file

    def log(self, event: str, detail: Optional[str] = None, **fields) -> None:
        """
        Record a solver event.

        Args:
            event: Event type (e.g. "newton_failed", "eigenpair_found")
            detail: Human-readable description
            **fields: Extra numeric context (residual, iterations, z, ...)
        """
        entry = {
            "ts": datetime.now(timezone.utc).isoformat(),
            "event": event,
        }
        if detail:
            entry["detail"] = detail
        for key, value in fields.items():
            if value is not None:
                entry[key] = _jsonable(value)

        with self._lock:
            self._counts[event] = self._counts.get(event, 0) + 1
            self._buffer.append(entry)

            if self._log_file is None:
                return
            # File is best-effort, never interrupts a solve
            try:
                self._rotate_if_needed()
                with open(self._log_file, "a") as f:
                    f.write(json.dumps(entry) + "\n")
            except Exception:
                pass

    def _rotate_if_needed(self) -> None:
        """Rotate log file if it exceeds max size."""
        try:
            if self._log_file.exists() and self._log_file.stat().st_size > MAX_LOG_SIZE:
                rotated = self._log_file.with_suffix(".log.1")
                if rotated.exists():
                    rotated.unlink()
                self._log_file.rename(rotated)
        except Exception:
            pass

    def count(self, event: str) -> int:
        with self._lock:
            return self._counts.get(event, 0)

    def get_recent_events(self, limit: int = 50) -> list:
        """Get most recent events from the ring buffer."""
        with self._lock:
            events = list(self._buffer)
        return events[-limit:]

    def reset(self) -> None:
        with self._lock:
            self._buffer.clear()
            self._counts = {event: 0 for event in EVENT_TYPES}

    def get_diagnostics(self) -> dict:
        """
        Build a diagnostics snapshot.

        Returns dict with:
        - counts: per-event counters
        - newton: success rate of Newton solves
        - last_failure: most recent failure-type event
        - recent_events: last 50 events
        """
        events = self.get_recent_events(50)
        with self._lock:
            counts = dict(self._counts)

        total = counts.get("newton_converged", 0) + counts.get("newton_failed", 0)
        rate = round(counts.get("newton_converged", 0) / total * 100, 1) if total else None

        last_failure = None
        for e in reversed(events):
            if e["event"] in ("newton_failed", "seed_failed", "root_collapse", "blowup"):
                last_failure = e
                break

        return {
            "counts": counts,
            "newton": {"total": total, "success_rate_pct": rate},
            "last_failure": last_failure,
            "recent_events": events,
            "log_file": str(self._log_file) if self._log_file else None,
        }


def log_level() -> int:
    return _LEVELS.get(os.environ.get("NF_SPECTRUM_LOG_LEVEL", "info").lower(), 1)


def make_tagged_printer(tag: str, level: int = 1) -> Callable[[str], None]:
    """Return a `_log(msg)` helper printing "[tag] msg" to stderr."""

    def _log(msg: str) -> None:
        if log_level() >= level:
            print(f"[{tag}] {msg}", file=sys.stderr, flush=True)

    return _log


# Singleton instance
solver_log = SolverLog(_env_log_file())
