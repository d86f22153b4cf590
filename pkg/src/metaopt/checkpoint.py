"""Checkpoint store for continuous training.

Layout: ``<root>/<name>/<unix-micros>.ckpt``, one immutable file per
checkpoint, with the timestamp zero-padded so that the lexicographically
greatest filename is the newest. A file is a fixed header followed by the
parameter blob and the engine-state blob::

    offset  size  field
    0       4     magic b"MOPT"
    4       2     format version, u16 little-endian
    6       8     len(params_blob), u64 little-endian
    14      8     len(state_blob), u64 little-endian
    22      ...   params_blob, then state_blob

Files are written to a hidden temporary name in the same directory, fsynced,
then renamed into place, so readers never see a partial checkpoint. Only one
writer per name is supported at a time.
"""
from __future__ import annotations

import json
import logging
import os
import re
import struct
import tempfile
import time
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Union

logger = logging.getLogger(__name__)

MAGIC = b"MOPT"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHQQ")
SUFFIX = ".ckpt"
_STAMP_WIDTH = 20
_FILENAME = re.compile(r"^(\d{%d})\.ckpt$" % _STAMP_WIDTH)
_NAME = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.\-]*$")


class CheckpointError(OSError):
    pass


class CorruptCheckpoint(ValueError):
    pass


class CheckpointWarning(UserWarning):
    pass


class ParamsMismatch(Exception):
    """Saved problem parameters differ from the current ones."""


def validate_name(name: str) -> str:
    if not _NAME.match(name):
        raise ValueError(f"invalid problem name {name!r}")
    return name


def encode_checkpoint(params_blob: bytes, state_blob: bytes) -> bytes:
    return HEADER.pack(MAGIC, FORMAT_VERSION, len(params_blob), len(state_blob)) \
        + params_blob + state_blob


def decode_checkpoint(data: bytes) -> tuple[bytes, bytes]:
    if len(data) < HEADER.size:
        raise CorruptCheckpoint(f"{len(data)} bytes is shorter than the {HEADER.size}-byte header")
    magic, version, n_params, n_state = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptCheckpoint(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CorruptCheckpoint(f"unsupported format version {version}")
    expected = HEADER.size + n_params + n_state
    if len(data) != expected:
        raise CorruptCheckpoint(f"expected {expected} bytes, found {len(data)}")
    start = HEADER.size
    return data[start:start + n_params], data[start + n_params:expected]


@dataclass(frozen=True)
class Checkpoint:
    problem_name: str
    created_micros: int
    params_blob: bytes
    state_blob: bytes
    path: Optional[Path] = None

    @property
    def created_at(self) -> datetime:
        seconds, micros = divmod(self.created_micros, 1_000_000)
        return datetime.fromtimestamp(seconds, tz=timezone.utc).replace(microsecond=micros)

    @property
    def best_cost(self) -> Optional[float]:
        """``best_cost`` from a JSON state blob, or ``None`` if it has none."""
        try:
            state = json.loads(self.state_blob)
        except ValueError:
            return None
        return state.get("best_cost") if isinstance(state, dict) else None


def params_match(saved: Any, current: Any) -> bool:
    """Exact structural equality; resumption is allowed only when this holds."""
    return bool(saved == current)


class CheckpointStore:
    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def _dir(self, name: str) -> Path:
        return self.root / validate_name(name)

    def list(self, name: str) -> list[Path]:
        """Checkpoint files for ``name``, oldest first."""
        directory = self._dir(name)
        if not directory.is_dir():
            return []
        return sorted(p for p in directory.iterdir() if _FILENAME.match(p.name))

    def names(self) -> list[str]:
        if not self.root.is_dir():
            return []
        return sorted(p.name for p in self.root.iterdir()
                      if p.is_dir() and _NAME.match(p.name) and self.list(p.name))

    def persist(self, name: str, params_blob: bytes, state_blob: bytes) -> Checkpoint:
        directory = self._dir(name)
        existing = self.list(name)
        micros = time.time_ns() // 1000
        if existing:
            micros = max(micros, int(existing[-1].stem) + 1)
        final = directory / f"{micros:0{_STAMP_WIDTH}d}{SUFFIX}"
        payload = encode_checkpoint(params_blob, state_blob)
        tmp_path = None
        try:
            directory.mkdir(parents=True, exist_ok=True)
            fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".", suffix=".tmp")
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp_path, final)
            tmp_path = None
            _fsync_dir(directory)
        except OSError as exc:
            raise CheckpointError(f"could not persist checkpoint {final}: {exc}") from exc
        finally:
            if tmp_path is not None:
                try:
                    os.unlink(tmp_path)
                except OSError:
                    pass
        logger.info("persisted checkpoint %s", final)
        return Checkpoint(name, micros, params_blob, state_blob, final)

    def read(self, path: Union[str, Path], name: Optional[str] = None) -> Checkpoint:
        path = Path(path)
        params_blob, state_blob = decode_checkpoint(path.read_bytes())
        return Checkpoint(name or path.parent.name, int(path.stem), params_blob, state_blob, path)

    def load_latest(self, name: str) -> Optional[Checkpoint]:
        """Newest readable checkpoint for ``name``; unreadable ones are skipped with a warning."""
        for path in reversed(self.list(name)):
            try:
                return self.read(path, name)
            except (CorruptCheckpoint, OSError) as exc:
                warnings.warn(f"skipping unreadable checkpoint {path}: {exc}",
                              CheckpointWarning, stacklevel=2)
        return None


def _fsync_dir(directory: Path) -> None:
    try:
        fd = os.open(directory, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(fd)
    except OSError:
        pass
    finally:
        os.close(fd)


def persist_engine(store: CheckpointStore, name: str, engine) -> Checkpoint:
    """Persist ``engine.problem``'s parameters together with ``engine.snapshot()``."""
    return store.persist(name, engine.problem.serialize_params(), engine.snapshot())


def resume_engine(store: CheckpointStore, name: str, problem, engine_cls):
    """Restore the latest checkpoint of ``name`` into a fresh ``engine_cls``.

    Returns ``None`` when the store has no checkpoint for ``name``. Raises
    :class:`ParamsMismatch` when the saved parameters differ from
    ``problem.params()``.
    """
    ckpt = store.load_latest(name)
    if ckpt is None:
        return None
    saved = type(problem).deserialize_params(ckpt.params_blob)
    if not params_match(saved, problem.params()):
        raise ParamsMismatch(
            f"checkpoint {ckpt.path} was made for different problem parameters than the current ones")
    return engine_cls.restore(problem, ckpt.state_blob)
