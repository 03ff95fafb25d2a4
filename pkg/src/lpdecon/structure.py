"""Partitions of coordinate indices and the diamond (common refinement) operation.

Indices are 0-based internally. The text form used in config files and
reports is 1-based, e.g. ``"[[1,2],[3]]"``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .errors import InvalidArgumentError, ResourceGuardError

Block = tuple[int, ...]

#: Largest dimension for which ``default_family(d, "all")`` enumerates partitions.
MAX_ALL_PARTITIONS_DIM = 4


def _canonical(blocks: Iterable[Iterable[int]]) -> tuple[Block, ...]:
    out = [tuple(sorted(int(i) for i in b)) for b in blocks]
    out.sort(key=lambda b: b[0] if b else -1)
    return tuple(out)


@dataclass(frozen=True)
class Partition:
    """A set partition of ``{0, ..., d-1}`` in canonical order.

    Blocks are sorted internally and ordered by their smallest element, so
    two partitions are equal exactly when they describe the same grouping.
    """

    blocks: tuple[Block, ...]
    d: int

    def __init__(self, blocks: Iterable[Iterable[int]], d: int | None = None):
        canon = _canonical(blocks)
        flat = [i for b in canon for i in b]
        if d is None:
            d = len(flat)
        if any(len(b) == 0 for b in canon):
            raise InvalidArgumentError("partition blocks must be nonempty")
        if sorted(flat) != list(range(d)):
            raise InvalidArgumentError(
                f"blocks {canon} are not a partition of {{0..{d - 1}}}"
            )
        object.__setattr__(self, "blocks", canon)
        object.__setattr__(self, "d", d)

    @classmethod
    def full(cls, d: int) -> "Partition":
        return cls([range(d)], d)

    @classmethod
    def singletons(cls, d: int) -> "Partition":
        return cls([[i] for i in range(d)], d)

    @classmethod
    def parse(cls, text: str, d: int | None = None) -> "Partition":
        """Parse the 1-based bracket form ``"[[1,2],[3]]"``."""
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"cannot parse partition {text!r}") from exc
        if not isinstance(raw, list) or not all(isinstance(b, list) for b in raw):
            raise InvalidArgumentError(f"cannot parse partition {text!r}")
        return cls([[int(i) - 1 for i in b] for b in raw], d)

    def __str__(self) -> str:
        return "[" + ",".join(
            "[" + ",".join(str(i + 1) for i in b) + "]" for b in self.blocks
        ) + "]"

    def __repr__(self) -> str:
        return f"Partition({self})"

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self) -> Iterator[Block]:
        return iter(self.blocks)

    @property
    def max_block_size(self) -> int:
        """The effective dimension ``sup |I|`` over blocks."""
        return max(len(b) for b in self.blocks)

    def is_full(self) -> bool:
        return len(self.blocks) == 1

    def block_of(self, index: int) -> Block:
        for b in self.blocks:
            if index in b:
                return b
        raise InvalidArgumentError(f"index {index} not in partition of dimension {self.d}")

    def refines(self, other: "Partition") -> bool:
        """True when every block of ``self`` lies inside one block of ``other``."""
        if self.d != other.d:
            return False
        return all(set(b) <= set(other.block_of(b[0])) for b in self.blocks)

    def sort_key(self) -> tuple:
        return (len(self.blocks), self.blocks)

    def diamond(self, other: "Partition") -> "Partition":
        return diamond(self, other)


def diamond(P: Partition, Q: Partition) -> Partition:
    """Common refinement: all nonempty intersections of a block of P with a block of Q."""
    if P.d != Q.d:
        raise InvalidArgumentError(f"dimension mismatch: {P.d} != {Q.d}")
    out = []
    for I in P.blocks:
        sI = set(I)
        for J in Q.blocks:
            inter = sI.intersection(J)
            if inter:
                out.append(inter)
    return Partition(out, P.d)


def set_partitions(d: int) -> Iterator[Partition]:
    """Yield every set partition of ``{0..d-1}`` (Bell(d) of them)."""

    def rec(i: int, blocks: list[list[int]]) -> Iterator[list[list[int]]]:
        if i == d:
            yield blocks
            return
        for b in blocks:
            b.append(i)
            yield from rec(i + 1, blocks)
            b.pop()
        blocks.append([i])
        yield from rec(i + 1, blocks)
        blocks.pop()

    for blocks in rec(0, []):
        yield Partition([list(b) for b in blocks], d)


@dataclass(frozen=True)
class PartitionFamily:
    """A finite, duplicate-free set of partitions of the same dimension."""

    members: tuple[Partition, ...]
    d: int

    def __init__(self, members: Iterable[Partition], d: int | None = None):
        members = tuple(members)
        if not members:
            raise InvalidArgumentError("partition family must be nonempty")
        if d is None:
            d = members[0].d
        if any(m.d != d for m in members):
            raise InvalidArgumentError("all partitions in a family must share dimension d")
        if len(set(members)) != len(members):
            raise InvalidArgumentError("duplicate partitions in family")
        members = tuple(sorted(members, key=Partition.sort_key))
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "d", d)

    def __iter__(self) -> Iterator[Partition]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    @property
    def max_blocks(self) -> int:
        """Largest number of blocks among members."""
        return max(len(m) for m in self.members)

    def is_full_only(self) -> bool:
        return len(self.members) == 1 and self.members[0].is_full()

    def closure(self) -> list[Block]:
        return diamond_closure(self)

    def __str__(self) -> str:
        return "{" + ", ".join(str(m) for m in self.members) + "}"


def diamond_closure(F: PartitionFamily) -> list[Block]:
    """All distinct blocks of ``P ⋄ P'`` over pairs of members, sorted."""
    seen = set()
    for P, Q in itertools.product(F.members, repeat=2):
        seen.update(diamond(P, Q).blocks)
    return sorted(seen, key=lambda b: (len(b), b))


def default_family(
    d: int, mode: str = "all", members: Sequence[Partition | str] | None = None
) -> PartitionFamily:
    """Build a partition family.

    ``mode`` is ``"all"`` (every set partition, d <= 4), ``"full"`` (only the
    trivial one-block partition) or ``"explicit"`` (``members`` given).
    """
    if d < 1:
        raise InvalidArgumentError("dimension must be >= 1")
    if mode == "all":
        if d > MAX_ALL_PARTITIONS_DIM:
            raise ResourceGuardError(
                f"mode 'all' enumerates Bell({d}) partitions; limit is d <= "
                f"{MAX_ALL_PARTITIONS_DIM}, pass an explicit family instead"
            )
        return PartitionFamily(set_partitions(d), d)
    if mode in ("full", "full-only"):
        return PartitionFamily([Partition.full(d)], d)
    if mode == "explicit":
        if not members:
            raise InvalidArgumentError("explicit family needs members")
        parts = [Partition.parse(m, d) if isinstance(m, str) else m for m in members]
        return PartitionFamily(parts, d)
    raise InvalidArgumentError(f"unknown family mode {mode!r}")
