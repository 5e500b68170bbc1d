"""Named decision fields <-> flat decision vector.

Transcription code works with named matrices (``"x0"`` for the states of phase
0, ``"u0"`` for its controls, ...). The optimizer only sees one flat vector.
A :class:`Layout` records the field order and shapes so the two views can be
converted in either direction.

Each field is flattened column-major, so all components belonging to one grid
column (one time sample) sit next to each other in the flat vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np


@dataclass(frozen=True)
class FieldSpec:
    name: str
    rows: int
    cols: int

    def __post_init__(self):
        if not self.name:
            raise ValueError("field name must be nonempty")
        if self.rows < 1 or self.cols < 1:
            raise ValueError(
                f"field {self.name!r} has zero size ({self.rows}x{self.cols})"
            )

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)


@dataclass(frozen=True)
class Layout:
    fields: tuple[FieldSpec, ...]
    offsets: tuple[int, ...]
    total_len: int
    _index: dict = field(repr=False, compare=False, default_factory=dict)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> FieldSpec:
        return self.fields[self._position(name)]

    def _position(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown field {name!r}") from None

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.fields]

    def slice_of(self, name: str) -> slice:
        return slice_of(self, name)

    def indices(self, name: str) -> np.ndarray:
        """Flat indices of field ``name`` arranged in the field's shape."""
        spec = self[name]
        sl = self.slice_of(name)
        return np.arange(sl.start, sl.stop).reshape(spec.shape, order="F")


def layout_build(fields: Iterable[FieldSpec | tuple[str, int, int]]) -> Layout:
    specs = tuple(f if isinstance(f, FieldSpec) else FieldSpec(*f) for f in fields)
    index: dict[str, int] = {}
    offsets = []
    pos = 0
    for i, spec in enumerate(specs):
        if spec.name in index:
            raise ValueError(f"duplicate field name {spec.name!r}")
        index[spec.name] = i
        offsets.append(pos)
        pos += spec.size
    return Layout(specs, tuple(offsets), pos, index)


def slice_of(layout: Layout, name: str) -> slice:
    i = layout._position(name)
    start = layout.offsets[i]
    return slice(start, start + layout.fields[i].size)


def pack(layout: Layout, values: Mapping[str, np.ndarray]) -> np.ndarray:
    z = np.empty(layout.total_len)
    for spec, offset in zip(layout.fields, layout.offsets):
        if spec.name not in values:
            raise KeyError(f"missing field {spec.name!r}")
        v = np.asarray(values[spec.name], dtype=float)
        if v.ndim < 2 and v.size == spec.size and 1 in spec.shape:
            v = v.reshape(spec.shape)
        if v.shape != spec.shape:
            raise ValueError(
                f"field {spec.name!r} has shape {v.shape}, expected {spec.shape}"
            )
        z[offset : offset + spec.size] = v.ravel(order="F")
    return z


def unpack(layout: Layout, z: np.ndarray) -> dict[str, np.ndarray]:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.shape[0] != layout.total_len:
        raise ValueError(
            f"decision vector has length {z.size}, expected {layout.total_len}"
        )
    return {
        spec.name: z[offset : offset + spec.size].reshape(spec.shape, order="F").copy()
        for spec, offset in zip(layout.fields, layout.offsets)
    }
