from __future__ import annotations

from dataclasses import dataclass, field

from .tree import ShapeError


@dataclass
class TokenTable:
    """Unique observed vectors in first-appearance order; a vector's token is its index.

    Vectors never seen during fitting map to the sentinel ``len(observations)``.
    """

    observations: list = field(default_factory=list)
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.observations = [tuple(v) for v in self.observations]
        self._index = {v: i for i, v in enumerate(self.observations)}
        if len(self._index) != len(self.observations):
            raise ValueError("observations must be pairwise distinct")

    @property
    def width(self):
        return len(self.observations[0]) if self.observations else None

    @property
    def sentinel(self):
        return len(self.observations)

    def apply(self, v) -> int:
        return tokenize_apply(self, v)

    def to_dict(self):
        return {"observations": [list(v) for v in self.observations]}

    @classmethod
    def from_dict(cls, d):
        return cls(observations=d["observations"])


def tokenize_fit(samples) -> TokenTable:
    if len(samples) == 0:
        raise ValueError("cannot tokenize an empty sample list")
    width = len(samples[0])
    table = TokenTable()
    for row in samples:
        if len(row) != width:
            raise ShapeError("samples have different lengths")
        key = tuple(int(v) for v in row)
        if key not in table._index:
            table._index[key] = len(table.observations)
            table.observations.append(key)
    return table


def tokenize_apply(table: TokenTable, v) -> int:
    width = table.width
    if width is not None and len(v) != width:
        raise ShapeError(f"expected a vector of width {width}, got {len(v)}")
    return table._index.get(tuple(int(x) for x in v), len(table.observations))
