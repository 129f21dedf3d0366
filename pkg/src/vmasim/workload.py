"""Replayable traces: event types, line format, and the list-append generator.

Line format, one event per line, newline-terminated, hex values 0x-prefixed:

    H page_size=<int> lo=<hex> hi=<hex>
    # key=value                (header metadata, optional)
    M seq=<int> size=<hex> dir=<up|down> prot=<rwx-subset>
    U seq=<int> start=<hex> end=<hex>
    F seq=<int> addr=<hex> access=<r|w>

Comment lines start with '#'. Comments of the form '# key=value' round-trip
through the header metadata dict; any other comment is ignored. Sequence
numbers are strictly increasing across all events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from .core import DEFAULT_PAGE_SIZE, Direction, Prot, VirtualRange, is_page_aligned
from .errors import (
    ArenaExhausted,
    HeaderMismatch,
    MalformedLine,
    NonMonotonicSeq,
    OutOfAddressSpace,
)
from .sentry import DEFAULT_LAYOUT_HI, DEFAULT_LAYOUT_LO

# Spine bookkeeping: one pointer-sized slot per appended row.
SPINE_SLOT_BYTES = 8
DEFAULT_SPINE_CAP = 2


class Access(Enum):
    READ = "r"
    WRITE = "w"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "Access":
        for member in cls:
            if member.value == text:
                return member
        raise ValueError(f"unknown access {text!r}")


@dataclass(frozen=True, slots=True)
class Mmap:
    seq: int
    size: int
    direction: Direction
    prot: Prot


@dataclass(frozen=True, slots=True)
class Munmap:
    seq: int
    start: int
    end: int


@dataclass(frozen=True, slots=True)
class Fault:
    seq: int
    addr: int
    access: Access


TraceEvent = Union[Mmap, Munmap, Fault]


@dataclass(frozen=True, slots=True)
class TraceHeader:
    page_size: int = DEFAULT_PAGE_SIZE
    lo: int = DEFAULT_LAYOUT_LO
    hi: int = DEFAULT_LAYOUT_HI
    meta: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class Trace:
    header: TraceHeader
    events: list[TraceEvent]


# --- parse / serialize ------------------------------------------------------


def _fields(lineno: int, parts: list[str], expected: list[str]) -> dict[str, str]:
    if len(parts) != len(expected):
        raise MalformedLine(lineno, f"expected fields {expected}, got {parts}")
    out: dict[str, str] = {}
    for part, key in zip(parts, expected):
        name, sep, value = part.partition("=")
        if not sep or name != key or not value:
            raise MalformedLine(lineno, f"expected {key}=<value>, got {part!r}")
        out[key] = value
    return out


def _parse_int(lineno: int, text: str, *, hexa: bool) -> int:
    try:
        return int(text, 16 if hexa else 10)
    except ValueError:
        raise MalformedLine(lineno, f"bad integer {text!r}") from None


def parse_trace(text: str) -> Trace:
    """Parse trace text; the first non-comment line must be the header."""
    header: TraceHeader | None = None
    meta: dict[str, str] = {}
    events: list[TraceEvent] = []
    last_seq = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            key, sep, value = body.partition("=")
            if sep and key and " " not in key:
                meta[key] = value
            continue
        parts = line.split()
        kind = parts[0]
        if kind == "H":
            if header is not None:
                raise MalformedLine(lineno, "duplicate header")
            got = _fields(lineno, parts[1:], ["page_size", "lo", "hi"])
            page_size = _parse_int(lineno, got["page_size"], hexa=False)
            lo = _parse_int(lineno, got["lo"], hexa=True)
            hi = _parse_int(lineno, got["hi"], hexa=True)
            if page_size <= 0:
                raise HeaderMismatch(f"page_size {page_size} must be positive")
            if lo >= hi or not is_page_aligned(lo, page_size) or not is_page_aligned(
                hi, page_size
            ):
                raise HeaderMismatch(
                    f"layout [{lo:#x}, {hi:#x}) invalid for page size {page_size}"
                )
            header = TraceHeader(page_size, lo, hi, meta)
            continue
        if header is None:
            raise MalformedLine(lineno, "event before header")
        page_size = header.page_size
        if kind == "M":
            got = _fields(lineno, parts[1:], ["seq", "size", "dir", "prot"])
            seq = _parse_int(lineno, got["seq"], hexa=False)
            size = _parse_int(lineno, got["size"], hexa=True)
            if size <= 0 or not is_page_aligned(size, page_size):
                raise MalformedLine(lineno, f"size {size:#x} not a page multiple")
            try:
                direction = Direction.parse(got["dir"])
                prot = Prot.parse(got["prot"])
            except ValueError as exc:
                raise MalformedLine(lineno, str(exc)) from None
            event: TraceEvent = Mmap(seq, size, direction, prot)
        elif kind == "U":
            got = _fields(lineno, parts[1:], ["seq", "start", "end"])
            seq = _parse_int(lineno, got["seq"], hexa=False)
            start = _parse_int(lineno, got["start"], hexa=True)
            end = _parse_int(lineno, got["end"], hexa=True)
            if start >= end or not is_page_aligned(start, page_size) or not is_page_aligned(
                end, page_size
            ):
                raise MalformedLine(
                    lineno, f"bad unmap range [{start:#x}, {end:#x})"
                )
            event = Munmap(seq, start, end)
        elif kind == "F":
            got = _fields(lineno, parts[1:], ["seq", "addr", "access"])
            seq = _parse_int(lineno, got["seq"], hexa=False)
            addr = _parse_int(lineno, got["addr"], hexa=True)
            if not is_page_aligned(addr, page_size):
                raise MalformedLine(lineno, f"fault addr {addr:#x} not page-aligned")
            try:
                access = Access.parse(got["access"])
            except ValueError as exc:
                raise MalformedLine(lineno, str(exc)) from None
            event = Fault(seq, addr, access)
        else:
            raise MalformedLine(lineno, f"unknown event kind {kind!r}")
        if seq <= last_seq:
            raise NonMonotonicSeq(lineno, seq)
        last_seq = seq
        events.append(event)
    if header is None:
        raise MalformedLine(1, "missing header")
    return Trace(header, events)


def serialize_trace(trace: Trace) -> str:
    """Render a trace in canonical text form (metadata sorted by key)."""
    h = trace.header
    lines = [f"H page_size={h.page_size} lo={h.lo:#x} hi={h.hi:#x}"]
    for key in sorted(h.meta):
        value = h.meta[key]
        if not key or " " in key or "=" in key or "\n" in key or "\n" in value:
            raise ValueError(f"metadata key/value not serializable: {key!r}")
        lines.append(f"# {key}={value}")
    for event in trace.events:
        if isinstance(event, Mmap):
            lines.append(
                f"M seq={event.seq} size={event.size:#x} "
                f"dir={event.direction} prot={event.prot}"
            )
        elif isinstance(event, Munmap):
            lines.append(f"U seq={event.seq} start={event.start:#x} end={event.end:#x}")
        else:
            lines.append(f"F seq={event.seq} addr={event.addr:#x} access={event.access}")
    return "\n".join(lines) + "\n"


# --- list-append generator ---------------------------------------------------


def _spine_pages(capacity_rows: int, page_size: int) -> int:
    return max(1, math.ceil(capacity_rows * SPINE_SLOT_BYTES / page_size))


def gen_list_append(
    n_rows: int,
    row_pages: int = 1,
    spine_growth: float = 2.0,
    *,
    spine_cap0: int = DEFAULT_SPINE_CAP,
    page_size: int = DEFAULT_PAGE_SIZE,
    lo: int = DEFAULT_LAYOUT_LO,
    hi: int = DEFAULT_LAYOUT_HI,
    per_row_vma: bool = False,
) -> Trace:
    """Emit a trace mimicking row-by-row growth of a two-dimensional list.

    The spine (outer list) is allocated growing up; whenever its capacity is
    exceeded the old region is unmapped and the spine re-faulted at a fresh,
    larger mapping. Each
    appended row maps row_pages growing down and faults once at its top page,
    so row fault addresses advance monotonically in the arena's allocation
    direction. Under eager merging the row mappings fold into one large arena
    VMA; with per_row_vma a read-only spacer page is kept between rows so
    every row stays its own VMA.

    Addresses are planned by replaying the events through an internal
    simulation, so the emitted fault and unmap addresses are exactly the ones
    any replay with the same header computes, whatever the policy.
    """
    # imported here to avoid an import cycle with the engine
    from .engine import Policy, Simulation

    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    if row_pages < 1:
        raise ValueError("row_pages must be >= 1")
    if spine_growth <= 1:
        raise ValueError("spine_growth must be > 1")
    if spine_cap0 < 1:
        raise ValueError("spine_cap0 must be >= 1")

    from .sentry import AddressSpaceLayout

    sim = Simulation(
        page_size=page_size,
        layout=AddressSpaceLayout(lo, hi, Direction.DOWN),
        policy=Policy.fixed(),
    )
    events: list[TraceEvent] = []
    seq = 0

    def emit_mmap(size: int, direction: Direction, prot: Prot) -> VirtualRange:
        nonlocal seq
        seq += 1
        event = Mmap(seq, size, direction, prot)
        try:
            rng = sim.apply(event)
        except OutOfAddressSpace as exc:
            raise ArenaExhausted(str(exc)) from exc
        events.append(event)
        return rng

    def emit_fault(addr: int) -> None:
        nonlocal seq
        seq += 1
        event = Fault(seq, addr, Access.WRITE)
        sim.apply(event)
        events.append(event)

    def emit_munmap(rng: VirtualRange) -> None:
        nonlocal seq
        seq += 1
        event = Munmap(seq, rng.start, rng.end)
        sim.apply(event)
        events.append(event)

    rw = Prot.R | Prot.W
    spine_cap = spine_cap0
    spine_range = emit_mmap(_spine_pages(spine_cap, page_size) * page_size, Direction.UP, rw)
    emit_fault(spine_range.start)

    arena_lo = hi
    arena_hi = lo
    for row in range(1, n_rows + 1):
        while row > spine_cap:
            grown = int(spine_cap * spine_growth)
            spine_cap = grown if grown > spine_cap else spine_cap + 1
            # old region released first so the replacement never abuts a live
            # spine mapping and starts with a clean fault history
            emit_munmap(spine_range)
            new_range = emit_mmap(
                _spine_pages(spine_cap, page_size) * page_size, Direction.UP, rw
            )
            emit_fault(new_range.start)
            spine_range = new_range
        if per_row_vma:
            # read-only spacer keeps this row from abutting the previous one
            emit_mmap(page_size, Direction.DOWN, Prot.R)
        row_range = emit_mmap(row_pages * page_size, Direction.DOWN, rw)
        emit_fault(row_range.end - page_size)
        arena_lo = min(arena_lo, row_range.start)
        arena_hi = max(arena_hi, row_range.end)

    meta = {
        "generator": "list-append",
        "rows": str(n_rows),
        "row_pages": str(row_pages),
        "spine_growth": repr(spine_growth),
        "spine_cap0": str(spine_cap0),
        "per_row_vma": "true" if per_row_vma else "false",
        "arena_lo": f"{arena_lo:#x}",
        "arena_hi": f"{arena_hi:#x}",
    }
    return Trace(TraceHeader(page_size, lo, hi, meta), events)
