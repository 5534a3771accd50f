"""Bit-packed sample masks.

Masks are stored in a single arbitrary-precision integer, bit i = sample i.
Union/intersection/popcount on them are single C-level int operations, which
is what makes the repeated set-union counting in the learner cheap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class SampleMask:
    """Immutable boolean vector over the samples of one table."""

    bits: int
    n: int

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("mask length must be non-negative")
        if self.bits < 0 or self.bits >> self.n:
            raise ValueError(f"mask bits out of range for length {self.n}")

    @classmethod
    def zeros(cls, n: int) -> "SampleMask":
        return cls(0, n)

    @classmethod
    def from_indices(cls, indices: Iterable[int], n: int) -> "SampleMask":
        bits = 0
        for i in indices:
            if not 0 <= i < n:
                raise ValueError(f"sample index {i} out of range")
            bits |= 1 << i
        return cls(bits, n)

    @classmethod
    def from_bools(cls, flags: Sequence[bool | int]) -> "SampleMask":
        bits = 0
        for i, flag in enumerate(flags):
            if flag:
                bits |= 1 << i
        return cls(bits, len(flags))

    def count(self) -> int:
        return self.bits.bit_count()

    def indices(self) -> list[int]:
        out = []
        bits = self.bits
        i = 0
        while bits:
            if bits & 1:
                out.append(i)
            bits >>= 1
            i += 1
        return out

    def contains(self, i: int) -> bool:
        if not 0 <= i < self.n:
            raise ValueError(f"sample index {i} out of range")
        return bool((self.bits >> i) & 1)

    def complement(self) -> "SampleMask":
        return SampleMask(~self.bits & ((1 << self.n) - 1), self.n)

    def _check_length(self, other: "SampleMask") -> None:
        if self.n != other.n:
            raise ValueError(f"mask length mismatch: {self.n} vs {other.n}")

    def __or__(self, other: "SampleMask") -> "SampleMask":
        self._check_length(other)
        return SampleMask(self.bits | other.bits, self.n)

    def __and__(self, other: "SampleMask") -> "SampleMask":
        self._check_length(other)
        return SampleMask(self.bits & other.bits, self.n)

    def __sub__(self, other: "SampleMask") -> "SampleMask":
        self._check_length(other)
        return SampleMask(self.bits & ~other.bits, self.n)

    def issubset(self, other: "SampleMask") -> bool:
        self._check_length(other)
        return self.bits & ~other.bits == 0
