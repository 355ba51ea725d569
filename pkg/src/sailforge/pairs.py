"""Preference pairs, datasets, and their line-delimited text format.

File format (comma separated, one pair per line, after a ``#`` header)::

    # sailforge-pairs v1 dim=<D>
    iteration,source,y,xw_0..xw_{D-1},xl_0..xl_{D-1},p_annotation

Reals are written with 17 significant digits, which round-trips float64 exactly.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArtifactIOError, ConfigError

SOURCES = ("seed", "generated")
_HEADER = "# sailforge-pairs v1 dim={dim}"


@dataclass(frozen=True, eq=False)
class PreferencePair:
    y: int
    x_w: np.ndarray
    x_l: np.ndarray
    source: str = "seed"
    iteration: int = 0
    p_annotation: float = 1.0

    def __post_init__(self):
        for name in ("x_w", "x_l"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.source not in SOURCES:
            raise ConfigError(f"pair source must be one of {SOURCES}", field="source")
        if np.array_equal(self.x_w, self.x_l):
            raise ConfigError("winner and loser are identical", field="x_w")
        if self.source == "seed" and self.iteration != 0:
            raise ConfigError("seed pairs belong to iteration 0", field="iteration")

    def key(self) -> tuple:
        return (self.iteration, self.source, self.y, tuple(self.x_w), tuple(self.x_l), self.p_annotation)


class PreferenceDataset:
    """An immutable ordered collection of :class:`PreferencePair`."""

    def __init__(self, pairs=()):
        self._pairs = tuple(pairs)

    def __len__(self):
        return len(self._pairs)

    def __iter__(self):
        return iter(self._pairs)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return PreferenceDataset(self._pairs[idx])
        return self._pairs[idx]

    def __add__(self, other):
        return PreferenceDataset(self._pairs + tuple(other))

    def __eq__(self, other):
        if not isinstance(other, PreferenceDataset):
            return NotImplemented
        return [p.key() for p in self] == [p.key() for p in other]

    def __repr__(self):
        return f"PreferenceDataset(n={len(self)}, counts={dict(self.counts())})"

    @property
    def pairs(self) -> tuple:
        return self._pairs

    def counts(self) -> Counter:
        c = Counter({s: 0 for s in SOURCES})
        c.update(p.source for p in self._pairs)
        return c

    def take(self, indices) -> "PreferenceDataset":
        return PreferenceDataset(self._pairs[int(i)] for i in indices)

    def arrays(self):
        """Stacked ``(y, x_w, x_l)`` arrays for vectorised training."""
        y = np.array([p.y for p in self._pairs], dtype=np.int64)
        x_w = np.stack([p.x_w for p in self._pairs])
        x_l = np.stack([p.x_l for p in self._pairs])
        return y, x_w, x_l

    def checksum(self) -> str:
        return hashlib.sha256(dumps_pairs(self).encode()).hexdigest()


def _fmt(v) -> str:
    return format(float(v), ".17g")


def dumps_pairs(ds: PreferenceDataset, dim: int | None = None) -> str:
    if dim is None:
        dim = len(ds[0].x_w) if len(ds) else 0
    lines = [_HEADER.format(dim=dim)]
    for p in ds:
        fields = [str(p.iteration), p.source, str(p.y)]
        fields += [_fmt(v) for v in p.x_w] + [_fmt(v) for v in p.x_l] + [_fmt(p.p_annotation)]
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def loads_pairs(text: str) -> PreferenceDataset:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# sailforge-pairs v1 dim="):
        raise ArtifactIOError("missing sailforge-pairs header")
    dim = int(lines[0].rsplit("=", 1)[1])
    pairs = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        f = line.split(",")
        if len(f) != 4 + 2 * dim:
            raise ArtifactIOError(f"line {lineno}: expected {4 + 2 * dim} fields, got {len(f)}")
        vals = [float(v) for v in f[3:]]
        pairs.append(
            PreferencePair(
                y=int(f[2]),
                x_w=vals[:dim],
                x_l=vals[dim : 2 * dim],
                source=f[1],
                iteration=int(f[0]),
                p_annotation=vals[-1],
            )
        )
    return PreferenceDataset(pairs)


def atomic_write(path, data) -> None:
    """Write ``data`` (str or bytes) to ``path`` via a temp file and rename."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def save_pairs(ds: PreferenceDataset, path) -> None:
    atomic_write(path, dumps_pairs(ds))


def load_pairs(path) -> PreferenceDataset:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc
    return loads_pairs(text)
