"""Guest (sentry-side) address space: VMA bookkeeping for a user-space kernel.

The address space hands out page-aligned ranges by directional first fit,
tracks VMAs in address order, and supports explicit merging of adjacent
compatible VMAs. Each VMA optionally remembers the last fault it absorbed
(address, sequence number, and the direction inferred at that fault); fault
direction inference compares a new fault address against that memo. Merging
can either preserve the memo (keeping the higher sequence number) or drop
it, which is the behavior difference this simulator exists to study.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Optional

from .core import DEFAULT_PAGE_SIZE, Direction, Prot, VirtualRange, is_page_aligned
from .errors import (
    FaultOutsideVma,
    IncompatibleAttributes,
    NotAdjacent,
    OutOfAddressSpace,
    OutOfBounds,
    OverlapError,
)

# Default layout bounds: first page reserved, 46-bit user ceiling.
DEFAULT_LAYOUT_LO = 0x0000_1000
DEFAULT_LAYOUT_HI = 0x4000_0000_0000


@dataclass(frozen=True, slots=True)
class AddressSpaceLayout:
    """Usable address window and the default allocation direction."""

    lo: int = DEFAULT_LAYOUT_LO
    hi: int = DEFAULT_LAYOUT_HI
    default_direction: Direction = Direction.DOWN

    def __post_init__(self) -> None:
        if self.lo < 0 or self.lo >= self.hi:
            raise ValueError(f"invalid layout [{self.lo:#x}, {self.hi:#x})")


@dataclass(frozen=True, slots=True)
class LastFault:
    """Memo of the most recent fault absorbed by a VMA.

    direction is the direction inferred at that fault, kept so a repeated
    fault at the same address can reuse it instead of re-deriving nothing.
    """

    addr: int
    seq: int
    direction: Optional[Direction] = None


@dataclass(slots=True, eq=False)
class SentryVma:
    """One guest VMA: range, attributes, and the last-fault memo."""

    range: VirtualRange
    prot: Prot
    file_id: int
    alloc_direction: Direction
    last_fault: Optional[LastFault] = None

    def compatible_with(self, other: "SentryVma") -> bool:
        return (
            self.prot == other.prot
            and self.file_id == other.file_id
            and self.alloc_direction == other.alloc_direction
        )


def infer_fault_direction(vma: SentryVma, fault_addr: int) -> Optional[Direction]:
    """Infer the access direction of a fault from the VMA's last-fault memo.

    Returns None when the VMA has no memo. A repeated fault at exactly the
    memo address reuses the direction recorded there (possibly None).
    """
    if not vma.range.contains(fault_addr):
        raise FaultOutsideVma(fault_addr)
    memo = vma.last_fault
    if memo is None:
        return None
    if fault_addr < memo.addr:
        return Direction.DOWN
    if fault_addr > memo.addr:
        return Direction.UP
    return memo.direction


class AddressSpace:
    """Sorted VMA set plus a directional first-fit range allocator.

    allocate_range reserves the returned range so a second allocation cannot
    hand it out again before insert_vma materializes a VMA there. Reserved
    ranges are consumed by insert_vma and cleared by unmap_range.
    """

    def __init__(
        self,
        layout: AddressSpaceLayout | None = None,
        page_size: int = DEFAULT_PAGE_SIZE,
    ) -> None:
        if page_size <= 0:
            raise ValueError("page_size must be positive")
        self.layout = layout or AddressSpaceLayout()
        if not is_page_aligned(self.layout.lo, page_size) or not is_page_aligned(
            self.layout.hi, page_size
        ):
            raise ValueError("layout bounds must be page-aligned")
        self.page_size = page_size
        self._vmas: list[SentryVma] = []
        self._reserved: list[VirtualRange] = []

    # --- queries -------------------------------------------------------

    @property
    def vmas(self) -> tuple[SentryVma, ...]:
        return tuple(self._vmas)

    @property
    def count(self) -> int:
        return len(self._vmas)

    def vma_at(self, addr: int) -> Optional[SentryVma]:
        idx = bisect.bisect_right(self._vmas, addr, key=lambda v: v.range.start) - 1
        if idx >= 0 and self._vmas[idx].range.contains(addr):
            return self._vmas[idx]
        return None

    def neighbors(self, vma: SentryVma) -> tuple[Optional[SentryVma], Optional[SentryVma]]:
        """Return the VMAs exactly abutting vma on each side, if present."""
        idx = self._index_of(vma)
        left = self._vmas[idx - 1] if idx > 0 else None
        right = self._vmas[idx + 1] if idx + 1 < len(self._vmas) else None
        if left is not None and left.range.end != vma.range.start:
            left = None
        if right is not None and vma.range.end != right.range.start:
            right = None
        return left, right

    def _index_of(self, vma: SentryVma) -> int:
        idx = bisect.bisect_left(self._vmas, vma.range.start, key=lambda v: v.range.start)
        if idx < len(self._vmas) and self._vmas[idx] is vma:
            return idx
        raise ValueError("VMA not present in this address space")

    def _occupied(self) -> list[VirtualRange]:
        # merged view of VMAs and outstanding reservations, address order
        spans = sorted(
            [v.range for v in self._vmas] + self._reserved, key=lambda r: r.start
        )
        merged: list[VirtualRange] = []
        for span in spans:
            if merged and span.start <= merged[-1].end:
                if span.end > merged[-1].end:
                    merged[-1] = VirtualRange(merged[-1].start, span.end)
            else:
                merged.append(span)
        return merged

    def _gaps(self) -> list[VirtualRange]:
        gaps: list[VirtualRange] = []
        cursor = self.layout.lo
        for span in self._occupied():
            if span.start > cursor:
                gaps.append(VirtualRange(cursor, span.start))
            cursor = max(cursor, span.end)
        if cursor < self.layout.hi:
            gaps.append(VirtualRange(cursor, self.layout.hi))
        return gaps

    # --- mutation ------------------------------------------------------

    def allocate_range(self, size: int, direction: Direction | None = None) -> VirtualRange:
        """First-fit a free gap from the directional end and reserve it.

        Down takes the highest fitting gap, end-aligned; Up takes the lowest,
        start-aligned.
        """
        if size <= 0 or not is_page_aligned(size, self.page_size):
            raise ValueError(f"size {size:#x} is not a positive page multiple")
        direction = direction or self.layout.default_direction
        gaps = self._gaps()
        chosen: VirtualRange | None = None
        if direction is Direction.DOWN:
            for gap in reversed(gaps):
                if gap.length >= size:
                    chosen = VirtualRange(gap.end - size, gap.end)
                    break
        else:
            for gap in gaps:
                if gap.length >= size:
                    chosen = VirtualRange(gap.start, gap.start + size)
                    break
        if chosen is None:
            raise OutOfAddressSpace(size)
        bisect.insort(self._reserved, chosen, key=lambda r: r.start)
        return chosen

    def insert_vma(self, vma: SentryVma) -> SentryVma:
        """Insert a VMA; it must sit inside the layout and overlap no other VMA."""
        rng = vma.range
        if rng.start < self.layout.lo or rng.end > self.layout.hi:
            raise OutOfBounds(f"[{rng.start:#x}, {rng.end:#x}) outside layout")
        if not is_page_aligned(rng.start, self.page_size) or not is_page_aligned(
            rng.end, self.page_size
        ):
            raise ValueError("VMA bounds must be page-aligned")
        idx = bisect.bisect_left(self._vmas, rng.start, key=lambda v: v.range.start)
        for neighbor_idx in (idx - 1, idx):
            if 0 <= neighbor_idx < len(self._vmas) and self._vmas[
                neighbor_idx
            ].range.overlaps(rng):
                raise OverlapError(
                    f"[{rng.start:#x}, {rng.end:#x}) overlaps an existing VMA"
                )
        self._consume_reservation(rng)
        self._vmas.insert(idx, vma)
        return vma

    def merge_adjacent(
        self, left: SentryVma, right: SentryVma, preserve_last_fault: bool
    ) -> SentryVma:
        """Fold two abutting compatible VMAs into one.

        With preserve_last_fault the merged memo is the operand memo with the
        higher sequence number; without it the merged memo is always absent.
        """
        li = self._index_of(left)
        ri = self._index_of(right)
        if ri != li + 1 or left.range.end != right.range.start:
            raise NotAdjacent(
                f"[{left.range.start:#x},{left.range.end:#x}) and "
                f"[{right.range.start:#x},{right.range.end:#x}) do not abut in order"
            )
        if not left.compatible_with(right):
            raise IncompatibleAttributes("operands differ in prot, file, or direction")
        memo: Optional[LastFault] = None
        if preserve_last_fault:
            candidates = [m for m in (left.last_fault, right.last_fault) if m is not None]
            if candidates:
                memo = max(candidates, key=lambda m: m.seq)
        merged = SentryVma(
            range=VirtualRange(left.range.start, right.range.end),
            prot=left.prot,
            file_id=left.file_id,
            alloc_direction=left.alloc_direction,
            last_fault=memo,
        )
        self._vmas[li : ri + 1] = [merged]
        return merged

    def unmap_range(self, rng: VirtualRange) -> None:
        """Remove all VMA and reservation coverage intersecting rng.

        Partial overlaps split; a fragment keeps the last-fault memo only if
        the memo address lands inside it. Unmapping free space is a no-op.
        """
        if not is_page_aligned(rng.start, self.page_size) or not is_page_aligned(
            rng.end, self.page_size
        ):
            raise ValueError("unmap bounds must be page-aligned")
        out: list[SentryVma] = []
        for vma in self._vmas:
            if not vma.range.overlaps(rng):
                out.append(vma)
                continue
            for frag in (
                self._fragment(vma, vma.range.start, rng.start),
                self._fragment(vma, rng.end, vma.range.end),
            ):
                if frag is not None:
                    out.append(frag)
        self._vmas = out
        self._reserved = self._subtract_all(self._reserved, rng)

    # --- helpers -------------------------------------------------------

    @staticmethod
    def _fragment(vma: SentryVma, start: int, end: int) -> Optional[SentryVma]:
        start = max(start, vma.range.start)
        end = min(end, vma.range.end)
        if start >= end:
            return None
        frag_range = VirtualRange(start, end)
        memo = vma.last_fault
        if memo is not None and not frag_range.contains(memo.addr):
            memo = None
        return SentryVma(
            range=frag_range,
            prot=vma.prot,
            file_id=vma.file_id,
            alloc_direction=vma.alloc_direction,
            last_fault=memo,
        )

    def _consume_reservation(self, rng: VirtualRange) -> None:
        self._reserved = self._subtract_all(self._reserved, rng)

    @staticmethod
    def _subtract_all(spans: list[VirtualRange], rng: VirtualRange) -> list[VirtualRange]:
        out: list[VirtualRange] = []
        for span in spans:
            if not span.overlaps(rng):
                out.append(span)
                continue
            if span.start < rng.start:
                out.append(VirtualRange(span.start, rng.start))
            if rng.end < span.end:
                out.append(VirtualRange(rng.end, span.end))
        return out
