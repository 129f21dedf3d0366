"""Host kernel model: the VMA tree the sandbox's mmap calls land in.

The host folds a newly inserted VMA into a neighbor only when addresses are
contiguous, attributes are equal, and file offsets are contiguous in address
order. vma_count is what counts against max_map_count; the limit check runs
on the post-insert, pre-merge count, matching a kernel that allocates the
table slot before looking for merge candidates.

oracle_vma_count is an independent brute-force check: it expands mappings to
single pages and counts maximal mergeable runs with a linear scan, with no
shared code or state with the incremental tree.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

from .core import DEFAULT_PAGE_SIZE, Prot, VirtualRange, is_page_aligned
from .errors import DuplicatePage, MapCountExceeded, OverlapError

# Linux default vm.max_map_count.
DEFAULT_MAX_MAP_COUNT = 65_530


@dataclass(frozen=True, slots=True)
class HostMmConfig:
    max_map_count: int = DEFAULT_MAX_MAP_COUNT


@dataclass(frozen=True, slots=True)
class HostVma:
    """One host VMA: address range mapped from (file_id, file_offset)."""

    vrange: VirtualRange
    file_id: int
    file_offset: int
    prot: Prot

    @property
    def length(self) -> int:
        return self.vrange.length

    def offset_at(self, addr: int) -> int:
        return self.file_offset + (addr - self.vrange.start)


class HostMm:
    """Host-side VMA tree with kernel-style merge on insert."""

    def __init__(
        self,
        page_size: int = DEFAULT_PAGE_SIZE,
        config: HostMmConfig | None = None,
    ) -> None:
        self.page_size = page_size
        self.config = config or HostMmConfig()
        self._vmas: list[HostVma] = []

    # --- queries -------------------------------------------------------

    @property
    def vmas(self) -> tuple[HostVma, ...]:
        return tuple(self._vmas)

    def vma_count(self) -> int:
        return len(self._vmas)

    def __len__(self) -> int:
        return len(self._vmas)

    def _index_at(self, addr: int) -> int | None:
        idx = bisect.bisect_right(self._vmas, addr, key=lambda v: v.vrange.start) - 1
        if idx >= 0 and self._vmas[idx].vrange.contains(addr):
            return idx
        return None

    def is_mapped(self, addr: int) -> bool:
        return self._index_at(addr) is not None

    def mapped_spans_in(self, rng: VirtualRange) -> list[HostVma]:
        """Intersections of existing VMAs with rng, offsets adjusted."""
        out: list[HostVma] = []
        idx = bisect.bisect_right(self._vmas, rng.start, key=lambda v: v.vrange.start) - 1
        idx = max(idx, 0)
        for vma in self._vmas[idx:]:
            if vma.vrange.start >= rng.end:
                break
            part = vma.vrange.intersection(rng)
            if part is None:
                continue
            out.append(
                HostVma(part, vma.file_id, vma.offset_at(part.start), vma.prot)
            )
        return out

    def page_mappings(self) -> list[tuple[int, int, int, Prot]]:
        """Per-page expansion (addr, file_id, file_offset, prot) of the tree."""
        pages: list[tuple[int, int, int, Prot]] = []
        step = self.page_size
        for vma in self._vmas:
            for addr in range(vma.vrange.start, vma.vrange.end, step):
                pages.append((addr, vma.file_id, vma.offset_at(addr), vma.prot))
        return pages

    # --- mutation ------------------------------------------------------

    def mmap(self, vrange: VirtualRange, file_id: int, file_offset: int, prot: Prot) -> int:
        """Insert a mapping, merge with mergeable neighbors, return the count.

        Raises MapCountExceeded before mutating when the insert itself would
        push the table past max_map_count, regardless of later merges.
        """
        self._check_aligned(vrange)
        if not is_page_aligned(file_offset, self.page_size):
            raise ValueError("file_offset must be page-aligned")
        idx = bisect.bisect_left(self._vmas, vrange.start, key=lambda v: v.vrange.start)
        for neighbor_idx in (idx - 1, idx):
            if 0 <= neighbor_idx < len(self._vmas) and self._vmas[
                neighbor_idx
            ].vrange.overlaps(vrange):
                raise OverlapError(
                    f"[{vrange.start:#x}, {vrange.end:#x}) overlaps a host VMA"
                )
        if len(self._vmas) + 1 > self.config.max_map_count:
            raise MapCountExceeded(len(self._vmas), self.config.max_map_count)
        new = HostVma(vrange, file_id, file_offset, prot)
        self._vmas.insert(idx, new)
        # merge right first so idx stays valid for the left merge
        right = idx + 1
        if right < len(self._vmas) and self._mergeable(new, self._vmas[right]):
            new = self._fold(new, self._vmas[right])
            self._vmas[idx : right + 1] = [new]
        if idx > 0 and self._mergeable(self._vmas[idx - 1], new):
            new = self._fold(self._vmas[idx - 1], new)
            self._vmas[idx - 1 : idx + 1] = [new]
        return len(self._vmas)

    def munmap(self, rng: VirtualRange) -> int:
        """Remove coverage in rng, splitting partial overlaps; return the count."""
        self._check_aligned(rng)
        out: list[HostVma] = []
        for vma in self._vmas:
            if not vma.vrange.overlaps(rng):
                out.append(vma)
                continue
            if vma.vrange.start < rng.start:
                out.append(
                    HostVma(
                        VirtualRange(vma.vrange.start, rng.start),
                        vma.file_id,
                        vma.file_offset,
                        vma.prot,
                    )
                )
            if rng.end < vma.vrange.end:
                out.append(
                    HostVma(
                        VirtualRange(rng.end, vma.vrange.end),
                        vma.file_id,
                        vma.offset_at(rng.end),
                        vma.prot,
                    )
                )
        self._vmas = out
        return len(self._vmas)

    # --- helpers -------------------------------------------------------

    def _check_aligned(self, rng: VirtualRange) -> None:
        if not is_page_aligned(rng.start, self.page_size) or not is_page_aligned(
            rng.end, self.page_size
        ):
            raise ValueError("range must be page-aligned")

    @staticmethod
    def _mergeable(left: HostVma, right: HostVma) -> bool:
        return (
            left.vrange.end == right.vrange.start
            and left.file_id == right.file_id
            and left.prot == right.prot
            and left.file_offset + left.length == right.file_offset
        )

    @staticmethod
    def _fold(left: HostVma, right: HostVma) -> HostVma:
        return HostVma(
            VirtualRange(left.vrange.start, right.vrange.end),
            left.file_id,
            left.file_offset,
            left.prot,
        )


def oracle_vma_count(
    pages: list[tuple[int, int, int, Prot]], page_size: int = DEFAULT_PAGE_SIZE
) -> int:
    """Count VMAs by brute force over single-page mappings.

    pages holds (page_addr, file_id, file_offset, prot) tuples. The count is
    the number of maximal runs that are address-consecutive, offset-consecutive,
    and attribute-equal after sorting by address.
    """
    if not pages:
        return 0
    seen: set[int] = set()
    for addr, _, _, _ in pages:
        if addr in seen:
            raise DuplicatePage(f"page {addr:#x} listed twice")
        seen.add(addr)
    ordered = sorted(pages)
    runs = 1
    for prev, cur in zip(ordered, ordered[1:]):
        prev_addr, prev_fid, prev_off, prev_prot = prev
        addr, fid, off, prot = cur
        chained = (
            addr == prev_addr + page_size
            and fid == prev_fid
            and off == prev_off + page_size
            and prot == prev_prot
        )
        if not chained:
            runs += 1
    return runs
