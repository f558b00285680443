"""
Persistent store for class tables.

Entries are ``.npy`` files named by a key that already contains the engine
version, the netlist content hash, the acceptance rule and the sign table, so
a changed netlist never hits a stale entry. The directory can be deleted at
any time.
"""

from __future__ import annotations

import os
import re
import tempfile
from pathlib import Path
from typing import Optional, Union

import numpy as np

CACHE_ENV = "GHZSIM_CACHE_DIR"
_SAFE = re.compile(r"^[A-Za-z0-9_.+-]+$")


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "ghzsim"


class BranchCache:
    def __init__(self, directory: Union[str, Path, None] = None):
        self.directory = Path(directory) if directory is not None else default_cache_dir()
        self.hits = 0
        self.misses = 0

    def _path(self, key: str) -> Path:
        if not _SAFE.match(key):
            raise ValueError(f"unsafe cache key {key!r}")
        return self.directory / f"{key}.npy"

    def get(self, key: str) -> Optional[np.ndarray]:
        path = self._path(key)
        try:
            arr = np.load(path, allow_pickle=False)
        except (FileNotFoundError, ValueError, OSError):
            self.misses += 1
            return None
        self.hits += 1
        return arr

    def put(self, key: str, value: np.ndarray) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                np.save(fh, np.asarray(value), allow_pickle=False)
            os.replace(tmp, self._path(key))  # atomic: readers never see partial files
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
