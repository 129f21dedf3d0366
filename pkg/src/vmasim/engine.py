"""Fault engine: where offset-allocation policy meets host coalescing.

On each fault the engine picks a file-offset allocation direction, carves a
contiguous span for the fault chunk, and maps it on the host. The direction
comes from per-VMA last-fault inference when available. When no inference is
possible the two policies part ways:

* legacy: default to bottom-up offsets regardless of how the address range
  grows, and drop the last-fault memo whenever sentry VMAs merge. In a
  downward-growing arena that is re-mapped and re-merged per allocation, the
  memo never survives to the next fault, offsets ascend while addresses
  descend, the host merge predicate never fires, and the VMA table grows by
  one per fault until max_map_count kills the sandbox.
* fixed: default to the VMA's own allocation direction and preserve the memo
  across merges, keeping offset order aligned with address order so adjacent
  chunks coalesce.

Chunk geometry (which pages get mapped) never depends on the policy or on the
last-fault memo, only on the VMA's allocation direction and the pages already
mapped; the policies may only disagree on where in the file the chunk lands.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .backing import DEFAULT_STORE_CAPACITY, BackingStore, FileRange
from .core import DEFAULT_PAGE_SIZE, Direction, Prot, VirtualRange, page_floor
from .errors import AlreadyMapped, FaultOutsideVma, MalformedTrace, MapCountExceeded
from .host import DEFAULT_MAX_MAP_COUNT, HostMm, HostMmConfig
from .sentry import (
    AddressSpace,
    AddressSpaceLayout,
    LastFault,
    SentryVma,
    infer_fault_direction,
)
from .workload import Access, Fault, Mmap, Munmap, Trace, TraceEvent

DEFAULT_FAULT_CHUNK_PAGES = 16


class OffsetDefault(Enum):
    """Offset direction used when a fault has no inferable direction."""

    ALWAYS_UP = "always-up"
    MATCH_ALLOC = "match-alloc"


@dataclass(frozen=True, slots=True)
class Policy:
    offset_default: OffsetDefault
    preserve_last_fault_on_merge: bool
    fault_chunk_pages: int = DEFAULT_FAULT_CHUNK_PAGES
    eager_sentry_merge: bool = True
    # sensitivity switch: legacy ignores inference even when a memo exists
    legacy_ignores_inference: bool = False
    label: str = "custom"

    def __post_init__(self) -> None:
        if self.fault_chunk_pages < 1:
            raise ValueError("fault_chunk_pages must be >= 1")

    @classmethod
    def legacy(cls, chunk_pages: int = DEFAULT_FAULT_CHUNK_PAGES, **kwargs) -> "Policy":
        return cls(
            offset_default=OffsetDefault.ALWAYS_UP,
            preserve_last_fault_on_merge=False,
            fault_chunk_pages=chunk_pages,
            label="legacy",
            **kwargs,
        )

    @classmethod
    def fixed(cls, chunk_pages: int = DEFAULT_FAULT_CHUNK_PAGES, **kwargs) -> "Policy":
        return cls(
            offset_default=OffsetDefault.MATCH_ALLOC,
            preserve_last_fault_on_merge=True,
            fault_chunk_pages=chunk_pages,
            label="fixed",
            **kwargs,
        )


@dataclass(frozen=True, slots=True)
class MapAction:
    """One host mapping performed while handling a fault."""

    vrange: VirtualRange
    file_id: int
    file_offset: int


@dataclass(frozen=True, slots=True)
class LimitBreach:
    """A fault that would have pushed the host VMA table past its limit."""

    seq: int
    count: int
    limit: int


@dataclass(slots=True)
class Series:
    """Per-applied-event samples, parallel lists in event order."""

    seq: list[int] = field(default_factory=list)
    host_vmas: list[int] = field(default_factory=list)
    sentry_vmas: list[int] = field(default_factory=list)
    allocated_bytes: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.seq)


@dataclass(slots=True)
class SimulationReport:
    policy_label: str
    page_size: int
    lo: int
    hi: int
    max_map_count: int
    chunk_pages: int
    events_applied: int
    fault_count: int
    series: Series
    peak_host_vmas: int
    final_host_vmas: int
    final_sentry_vmas: int
    breaches: list[LimitBreach]
    halted: bool
    free_spans: int
    largest_free_span: int
    allocated_bytes: int


class Simulation:
    """One sandbox instance: guest VMAs, backing offsets, host mappings."""

    def __init__(
        self,
        page_size: int = DEFAULT_PAGE_SIZE,
        layout: AddressSpaceLayout | None = None,
        policy: Policy | None = None,
        max_map_count: int = DEFAULT_MAX_MAP_COUNT,
        store_capacity: int = DEFAULT_STORE_CAPACITY,
    ) -> None:
        self.page_size = page_size
        self.policy = policy or Policy.fixed()
        self.address_space = AddressSpace(layout, page_size)
        self.store = BackingStore(store_capacity, page_size)
        self.host = HostMm(page_size, HostMmConfig(max_map_count))
        self.fault_count = 0
        self._last_seq = 0

    # --- operations ----------------------------------------------------

    def mmap(self, size: int, direction: Direction | None = None, prot: Prot = Prot.R | Prot.W) -> VirtualRange:
        """Allocate and insert a guest VMA, merging eagerly per policy."""
        rng = self.address_space.allocate_range(size, direction)
        vma = SentryVma(
            range=rng,
            prot=prot,
            file_id=self.store.file_id,
            alloc_direction=direction or self.address_space.layout.default_direction,
        )
        self.address_space.insert_vma(vma)
        self._eager_merge(vma)
        return rng

    def munmap(self, rng: VirtualRange) -> None:
        """Drop guest coverage, host mappings, and their backing offsets."""
        for span in self.host.mapped_spans_in(rng):
            self.store.free_offsets(FileRange(span.file_offset, span.length))
        self.host.munmap(rng)
        self.address_space.unmap_range(rng)

    def fault(self, addr: int, access: Access, seq: int) -> list[MapAction]:
        """Handle one page fault; returns the host mappings performed."""
        vma = self.address_space.vma_at(addr)
        if vma is None:
            raise FaultOutsideVma(addr)
        page = page_floor(addr, self.page_size)
        if self.host.is_mapped(page):
            raise AlreadyMapped(page)

        inferred = infer_fault_direction(vma, addr)
        offset_dir = self._offset_direction(inferred, vma)
        # chunk extent must depend only on policy-independent state (the VMA
        # geometry and mapped pages), never on the last-fault memo: the memo
        # diverges across policies, and mapped page sets must not
        chunk = self._chunk_range(vma, page, vma.alloc_direction)

        span = self.store.alloc_offsets(chunk.length, offset_dir)
        try:
            self.host.mmap(chunk, self.store.file_id, span.offset, vma.prot)
        except MapCountExceeded:
            self.store.free_offsets(span)
            raise
        self.fault_count += 1
        vma.last_fault = LastFault(addr=addr, seq=seq, direction=inferred)
        self._eager_merge(vma)
        return [MapAction(chunk, self.store.file_id, span.offset)]

    def apply(self, event: TraceEvent):
        """Apply one trace event; sequence numbers must strictly increase."""
        if event.seq <= self._last_seq:
            raise MalformedTrace(
                f"seq {event.seq} does not increase past {self._last_seq}"
            )
        self._last_seq = event.seq
        if isinstance(event, Mmap):
            return self.mmap(event.size, event.direction, event.prot)
        if isinstance(event, Munmap):
            return self.munmap(VirtualRange(event.start, event.end))
        if isinstance(event, Fault):
            return self.fault(event.addr, event.access, event.seq)
        raise MalformedTrace(f"unknown event {event!r}")

    # --- internals -----------------------------------------------------

    def _offset_direction(self, inferred: Optional[Direction], vma: SentryVma) -> Direction:
        legacy = self.policy.offset_default is OffsetDefault.ALWAYS_UP
        if inferred is not None and not (legacy and self.policy.legacy_ignores_inference):
            return inferred
        if legacy:
            return Direction.UP
        return vma.alloc_direction

    def _chunk_range(self, vma: SentryVma, page: int, direction: Direction) -> VirtualRange:
        """Pages to map for one fault: start at the faulting page, extend in
        the VMA's allocation direction, clamp to the VMA, stop at the first
        mapped page."""
        step = self.page_size if direction is Direction.UP else -self.page_size
        lo = hi = page
        cursor = page + step
        for _ in range(self.policy.fault_chunk_pages - 1):
            if not vma.range.contains(cursor) or self.host.is_mapped(cursor):
                break
            lo = min(lo, cursor)
            hi = max(hi, cursor)
            cursor += step
        return VirtualRange(lo, hi + self.page_size)

    def _eager_merge(self, vma: SentryVma) -> SentryVma:
        if not self.policy.eager_sentry_merge:
            return vma
        preserve = self.policy.preserve_last_fault_on_merge
        left, _ = self.address_space.neighbors(vma)
        if left is not None and left.compatible_with(vma):
            vma = self.address_space.merge_adjacent(left, vma, preserve)
        _, right = self.address_space.neighbors(vma)
        if right is not None and vma.compatible_with(right):
            vma = self.address_space.merge_adjacent(vma, right, preserve)
        return vma


def run_trace(
    trace: Trace,
    policy: Policy,
    max_map_count: int = DEFAULT_MAX_MAP_COUNT,
) -> SimulationReport:
    """Replay a trace from scratch under one policy.

    A MapCountExceeded fault is recorded as a limit breach and halts the run;
    the breaching event is not counted as applied. All other errors propagate.
    """
    header = trace.header
    sim = Simulation(
        page_size=header.page_size,
        layout=AddressSpaceLayout(header.lo, header.hi, Direction.DOWN),
        policy=policy,
        max_map_count=max_map_count,
    )
    series = Series()
    breaches: list[LimitBreach] = []
    halted = False
    for event in trace.events:
        try:
            sim.apply(event)
        except MapCountExceeded as exc:
            breaches.append(LimitBreach(event.seq, exc.count, exc.limit))
            halted = True
            break
        series.seq.append(event.seq)
        series.host_vmas.append(sim.host.vma_count())
        series.sentry_vmas.append(sim.address_space.count)
        series.allocated_bytes.append(sim.store.allocated_bytes)
    free_spans, largest, allocated = sim.store.fragmentation_stats()
    return SimulationReport(
        policy_label=policy.label,
        page_size=header.page_size,
        lo=header.lo,
        hi=header.hi,
        max_map_count=max_map_count,
        chunk_pages=policy.fault_chunk_pages,
        events_applied=len(series),
        fault_count=sim.fault_count,
        series=series,
        peak_host_vmas=max(series.host_vmas, default=0),
        final_host_vmas=sim.host.vma_count(),
        final_sentry_vmas=sim.address_space.count,
        breaches=breaches,
        halted=halted,
        free_spans=free_spans,
        largest_free_span=largest,
        allocated_bytes=allocated,
    )
