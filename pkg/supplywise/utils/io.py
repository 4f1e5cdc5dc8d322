"""File output helpers.

Every file SupplyWise writes goes through :func:`atomic_write`, so an
interrupted run never leaves a half-written checkpoint or CSV behind. CSV
exports start with a ``# <schema> v<version>`` comment row naming their
layout.
"""

from __future__ import annotations

import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Union

import pandas as pd
from loguru import logger


@contextmanager
def atomic_write(path: Union[str, Path], mode: str = "w") -> Iterator:
    """Open a temporary sibling of ``path`` and move it into place on success.

    Args:
        path: Final destination; parent directories are created.
        mode: 'w' for text or 'wb' for binary.

    Example:
        >>> with atomic_write("out/result.txt") as f:
        ...     f.write("done")
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        encoding = None if "b" in mode else "utf-8"
        with os.fdopen(fd, mode, encoding=encoding, newline=None if "b" in mode else "") as f:
            yield f
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def write_csv(frame: pd.DataFrame, path: Union[str, Path], schema: str) -> Path:
    """Write a DataFrame as CSV preceded by its schema comment row.

    Args:
        frame: Table to write (index is dropped).
        path: Destination file.
        schema: Schema identifier, e.g. 'supplywise-learning-curve v1'.

    Returns:
        The destination path.
    """
    path = Path(path)
    with atomic_write(path) as f:
        f.write(f"# {schema}\n")
        frame.to_csv(f, index=False, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: Union[str, Path], schema: Optional[str] = None) -> pd.DataFrame:
    """Read a CSV written by :func:`write_csv`.

    Args:
        path: File to read.
        schema: Expected schema identifier; checked when given.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If the schema row does not match.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"CSV file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
    if schema is not None and header != f"# {schema}":
        raise ValueError(f"Unexpected schema in {path}: '{header}', expected '# {schema}'")
    return pd.read_csv(path, comment="#")
