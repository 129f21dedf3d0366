"""Shared vocabulary: page arithmetic, growth directions, protection bits,
and half-open address ranges."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntFlag

DEFAULT_PAGE_SIZE = 4096


def page_floor(value: int, page_size: int) -> int:
    return value - (value % page_size)


def page_ceil(value: int, page_size: int) -> int:
    return page_floor(value + page_size - 1, page_size)


def is_page_aligned(value: int, page_size: int) -> bool:
    return value % page_size == 0


class Direction(Enum):
    """Growth direction for address allocation and file offset allocation."""

    UP = "up"
    DOWN = "down"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "Direction":
        for member in cls:
            if member.value == text:
                return member
        raise ValueError(f"unknown direction {text!r}")


class Prot(IntFlag):
    """Protection bits carried by a mapping."""

    R = 1
    W = 2
    X = 4

    def __str__(self) -> str:
        # canonical order r, w, x; never empty for a mapped range
        out = ""
        if self & Prot.R:
            out += "r"
        if self & Prot.W:
            out += "w"
        if self & Prot.X:
            out += "x"
        return out

    @classmethod
    def parse(cls, text: str) -> "Prot":
        valid = {"r": cls.R, "w": cls.W, "x": cls.X}
        prot = cls(0)
        last = -1
        for ch in text:
            if ch not in valid:
                raise ValueError(f"bad protection char {ch!r}")
            order = "rwx".index(ch)
            if order <= last:
                raise ValueError(f"protection not in canonical rwx order: {text!r}")
            last = order
            prot |= valid[ch]
        if prot == cls(0):
            raise ValueError("empty protection")
        return prot


@dataclass(frozen=True, slots=True)
class VirtualRange:
    """Half-open [start, end) span of virtual addresses."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.start >= self.end:
            raise ValueError(f"invalid range [{self.start:#x}, {self.end:#x})")

    @property
    def length(self) -> int:
        return self.end - self.start

    def contains(self, addr: int) -> bool:
        return self.start <= addr < self.end

    def contains_range(self, other: "VirtualRange") -> bool:
        return self.start <= other.start and other.end <= self.end

    def overlaps(self, other: "VirtualRange") -> bool:
        return self.start < other.end and other.start < self.end

    def intersection(self, other: "VirtualRange") -> "VirtualRange | None":
        lo = max(self.start, other.start)
        hi = min(self.end, other.end)
        if lo >= hi:
            return None
        return VirtualRange(lo, hi)
