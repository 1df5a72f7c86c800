from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_records(header: dict, lists: dict[str, list]) -> str:
    """JSON document with one compact line per list element.

    ``header`` keys come first, then each named list. Keeps large files
    diffable and greppable while staying plain JSON.
    """
    lines = ["{"]
    items = [(k, json.dumps(v, sort_keys=True)) for k, v in header.items()]
    for name, records in lists.items():
        if records:
            body = ",\n".join("  " + json.dumps(r, sort_keys=True, separators=(",", ":")) for r in records)
            items.append((name, "[\n" + body + "\n ]"))
        else:
            items.append((name, "[]"))
    lines.append(",\n".join(f" {json.dumps(k)}: {v}" for k, v in items))
    lines.append("}")
    return "\n".join(lines) + "\n"
