"""CSV and JSON output helpers with deterministic bytes."""

from pathlib import Path
from typing import Iterable, Optional

import pandas as pd

FLOAT_FORMAT = "%.10g"


def write_csv(rows: Iterable[dict], path: str | Path, columns: Optional[list[str]] = None) -> Path:
    """Write ``rows`` with a fixed float format, no index and ``\\n`` line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(list(rows), columns=columns)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_text(text: str, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    return path
