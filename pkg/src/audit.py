"""
JSON-lines run log: one record per command, solve and experiment trial.
"""

import json
import uuid
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union


class RunLog:
    """Append-only audit trail of toolkit runs.

    A RunLog without a path records nothing, so callers can log
    unconditionally.
    """

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path is not None else None
        self.run_id = uuid.uuid4().hex[:8]

    @property
    def enabled(self) -> bool:
        return self.path is not None

    def log(self, event: str, **data: Any):
        """Append one entry; failures to write never propagate."""
        if self.path is None:
            return
        try:
            log_entry = {
                "timestamp": datetime.now().isoformat(),
                "event": event,
                "run_id": self.run_id,
                "data": data,
            }
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, 'a', encoding='utf-8') as f:
                f.write(json.dumps(log_entry, default=_jsonable) + "\n")
        except Exception:
            pass

    def entries(self, limit: int = 50) -> List[Dict[str, Any]]:
        """Most recent entries, oldest first. Corrupt lines are skipped."""
        if self.path is None or not self.path.exists():
            return []
        try:
            lines = [line.strip() for line in self.path.read_text(encoding='utf-8').splitlines()
                     if line.strip()]
        except OSError:
            return []

        entries = []
        for line in lines[-limit:]:
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError:
                continue
        return entries


def _jsonable(value: Any) -> Any:
    """Fallback encoder for numpy scalars, arrays and enums."""
    if hasattr(value, "tolist"):
        return value.tolist()
    if hasattr(value, "value"):
        return value.value
    return str(value)
