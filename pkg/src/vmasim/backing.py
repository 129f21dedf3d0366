"""Backing store: page-granular offset allocator over one memfd-style file.

Offsets are handed out by directional first fit. Internally the store keeps
a coalescing free map (sorted free spans); the allocated set is its
complement, so allocating n adjacent spans in one direction costs O(1) per
call instead of scanning an ever-growing allocated list.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import DEFAULT_PAGE_SIZE, Direction, is_page_aligned
from .errors import NotAllocated, StoreExhausted

# Virtual capacity of the single backing file: 64 GiB.
DEFAULT_STORE_CAPACITY = 64 * 1024 * 1024 * 1024


@dataclass(frozen=True, slots=True)
class FileRange:
    """Half-open span of file offsets, [offset, offset + length)."""

    offset: int
    length: int

    def __post_init__(self) -> None:
        if self.offset < 0 or self.length <= 0:
            raise ValueError(f"invalid file range ({self.offset:#x}, {self.length:#x})")

    @property
    def end(self) -> int:
        return self.offset + self.length


class BackingStore:
    """Offset allocator for the sandbox's single backing file."""

    def __init__(
        self,
        capacity: int = DEFAULT_STORE_CAPACITY,
        page_size: int = DEFAULT_PAGE_SIZE,
        file_id: int = 0,
    ) -> None:
        if capacity <= 0 or not is_page_aligned(capacity, page_size):
            raise ValueError("capacity must be a positive page multiple")
        self.capacity = capacity
        self.page_size = page_size
        self.file_id = file_id
        # free map: sorted, non-adjacent (start, end) spans
        self._free: list[tuple[int, int]] = [(0, capacity)]

    # --- queries -------------------------------------------------------

    @property
    def allocated_bytes(self) -> int:
        return self.capacity - sum(end - start for start, end in self._free)

    def free_spans(self) -> tuple[tuple[int, int], ...]:
        return tuple(self._free)

    def allocated_spans(self) -> tuple[FileRange, ...]:
        """Complement of the free map, for inspection and tests."""
        out: list[FileRange] = []
        cursor = 0
        for start, end in self._free:
            if start > cursor:
                out.append(FileRange(cursor, start - cursor))
            cursor = end
        if cursor < self.capacity:
            out.append(FileRange(cursor, self.capacity - cursor))
        return tuple(out)

    def is_allocated(self, fr: FileRange) -> bool:
        return not any(s < fr.end and fr.offset < e for s, e in self._free)

    def fragmentation_stats(self) -> tuple[int, int, int]:
        """(free span count, largest free span, allocated bytes)."""
        largest = max((end - start for start, end in self._free), default=0)
        return len(self._free), largest, self.allocated_bytes

    # --- mutation ------------------------------------------------------

    def alloc_offsets(self, length: int, direction: Direction) -> FileRange:
        """Carve length bytes from the directional end of the free map.

        Up takes the lowest fitting free span and carves from its bottom;
        Down takes the highest fitting free span and carves from its top.
        """
        if length <= 0 or not is_page_aligned(length, self.page_size):
            raise ValueError(f"length {length:#x} is not a positive page multiple")
        if direction is Direction.UP:
            indices = range(len(self._free))
        else:
            indices = range(len(self._free) - 1, -1, -1)
        for idx in indices:
            start, end = self._free[idx]
            if end - start < length:
                continue
            if direction is Direction.UP:
                carved = FileRange(start, length)
                remainder = (start + length, end)
            else:
                carved = FileRange(end - length, length)
                remainder = (start, end - length)
            if remainder[0] == remainder[1]:
                del self._free[idx]
            else:
                self._free[idx] = remainder
            return carved
        raise StoreExhausted(length)

    def free_offsets(self, fr: FileRange) -> None:
        """Return a currently-allocated span to the free map."""
        if not is_page_aligned(fr.offset, self.page_size) or not is_page_aligned(
            fr.length, self.page_size
        ):
            raise ValueError("file range must be page-aligned")
        if fr.end > self.capacity:
            raise NotAllocated(f"range ends at {fr.end:#x}, past capacity")
        if not self.is_allocated(fr):
            raise NotAllocated(
                f"[{fr.offset:#x}, {fr.end:#x}) intersects the free map"
            )
        # insert and coalesce with touching neighbors
        idx = 0
        while idx < len(self._free) and self._free[idx][0] < fr.offset:
            idx += 1
        start, end = fr.offset, fr.end
        if idx > 0 and self._free[idx - 1][1] == start:
            start = self._free[idx - 1][0]
            del self._free[idx - 1]
            idx -= 1
        if idx < len(self._free) and self._free[idx][0] == end:
            end = self._free[idx][1]
            del self._free[idx]
        self._free.insert(idx, (start, end))
