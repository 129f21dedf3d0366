"""ELF64 segment loading with two tail-zeroing behaviors.

parse_program_headers decodes the program header table of a little-endian
ELF64 image. build_image materializes the Load segments into a byte buffer
with per-byte provenance, under one of two modes:

* LINUX: zero only [vaddr+file_siz, vaddr+mem_siz). The rest of the
  page-aligned mapping tail keeps file content where the file extends that
  far (file mappings are page-granular; reads past the end of the file see
  zeros), so data that happens to live in the tail survives.
* LEGACY: zero the full page-aligned extension [vaddr+file_siz,
  pageCeil(vaddr+mem_siz)) unconditionally, clobbering anything that lives
  between segment end and page end.

A Dynamic segment placed outside every Load but inside a Load's page-aligned
extension is exactly the layout where the two modes disagree, which
check_dynamic_integrity makes observable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

from .core import DEFAULT_PAGE_SIZE, page_ceil, page_floor
from .errors import (
    AlignmentMismatch,
    BadMagic,
    BadSegment,
    DynamicUnmapped,
    FileRangeOutOfBounds,
    MultipleDynamic,
    NoDynamic,
    OverlappingLoads,
    TruncatedHeader,
    UnsupportedClass,
)

ELF_MAGIC = b"\x7fELF"
ELFCLASS64 = 2
ELFDATA2LSB = 1

PT_LOAD = 1  # loadable segment
PT_DYNAMIC = 2  # dynamic linking tables

PF_X = 1
PF_W = 2
PF_R = 4

EHDR_SIZE = 64
PHDR_SIZE = 56
_PHDR_STRUCT = struct.Struct("<IIQQQQQQ")


class SegmentKind(Enum):
    LOAD = "LOAD"
    DYNAMIC = "DYNAMIC"
    OTHER = "OTHER"


@dataclass(frozen=True, slots=True)
class ElfSegment:
    """One program header entry, fields in file order."""

    seg_type: int
    flags: int
    file_offset: int
    vaddr: int
    file_siz: int
    mem_siz: int
    align: int

    @property
    def kind(self) -> SegmentKind:
        if self.seg_type == PT_LOAD:
            return SegmentKind.LOAD
        if self.seg_type == PT_DYNAMIC:
            return SegmentKind.DYNAMIC
        return SegmentKind.OTHER

    def flags_str(self) -> str:
        out = ""
        if self.flags & PF_R:
            out += "r"
        if self.flags & PF_W:
            out += "w"
        if self.flags & PF_X:
            out += "x"
        return out or "-"


class ZeroingMode(Enum):
    LINUX = "linux"
    LEGACY = "legacy"


class Provenance:
    """Byte provenance codes in MemoryImage.provenance."""

    UNMAPPED = 0
    FROM_FILE = 1
    ZEROED = 2


class DynamicPlacement(Enum):
    INSIDE_LOAD = "inside-load"
    IN_ALIGNED_EXTENSION = "in-aligned-extension"
    OUTSIDE_ENTIRELY = "outside-entirely"


@dataclass(slots=True)
class MemoryImage:
    """Materialized Load segments: contiguous buffer plus per-byte provenance."""

    base: int
    data: bytearray
    provenance: bytearray

    @property
    def end(self) -> int:
        return self.base + len(self.data)

    def contains(self, addr: int, length: int = 1) -> bool:
        return self.base <= addr and addr + length <= self.end

    def byte_at(self, addr: int) -> int:
        return self.data[addr - self.base]

    def provenance_at(self, addr: int) -> int:
        return self.provenance[addr - self.base]

    def bytes_at(self, addr: int, length: int) -> bytes:
        off = addr - self.base
        return bytes(self.data[off : off + length])


def parse_program_headers(data: bytes) -> list[ElfSegment]:
    """Decode the program header table, preserving file order."""
    if len(data) < 4 or data[:4] != ELF_MAGIC:
        raise BadMagic("not an ELF file")
    if len(data) < 6:
        raise TruncatedHeader("identification bytes truncated")
    if data[4] != ELFCLASS64 or data[5] != ELFDATA2LSB:
        raise UnsupportedClass("only 64-bit little-endian ELF is supported")
    if len(data) < EHDR_SIZE:
        raise TruncatedHeader("ELF header truncated")
    phoff = struct.unpack_from("<Q", data, 0x20)[0]
    phentsize = struct.unpack_from("<H", data, 0x36)[0]
    phnum = struct.unpack_from("<H", data, 0x38)[0]
    if phnum == 0:
        return []
    if phentsize < PHDR_SIZE:
        raise TruncatedHeader(f"program header entries of {phentsize} bytes are too small")
    if phoff + phnum * phentsize > len(data):
        raise TruncatedHeader("program header table extends past end of file")
    segments: list[ElfSegment] = []
    for idx in range(phnum):
        (p_type, p_flags, p_offset, p_vaddr, _paddr, p_filesz, p_memsz, p_align) = (
            _PHDR_STRUCT.unpack_from(data, phoff + idx * phentsize)
        )
        segments.append(
            ElfSegment(
                seg_type=p_type,
                flags=p_flags,
                file_offset=p_offset,
                vaddr=p_vaddr,
                file_siz=p_filesz,
                mem_siz=p_memsz,
                align=p_align,
            )
        )
    return segments


def build_image(
    segments: list[ElfSegment],
    file_bytes: bytes,
    mode: ZeroingMode,
    page_size: int = DEFAULT_PAGE_SIZE,
) -> MemoryImage:
    """Map all Load segments into a buffer under the given zeroing mode."""
    loads = [s for s in segments if s.kind is SegmentKind.LOAD]
    if not loads:
        raise BadSegment("no Load segments")
    spans: list[tuple[int, int, ElfSegment]] = []
    for seg in loads:
        if seg.mem_siz < seg.file_siz:
            raise BadSegment(
                f"Load at {seg.vaddr:#x} has mem_siz {seg.mem_siz:#x} "
                f"< file_siz {seg.file_siz:#x}"
            )
        if (seg.vaddr - seg.file_offset) % page_size != 0:
            raise AlignmentMismatch(
                f"Load at {seg.vaddr:#x} offset {seg.file_offset:#x} "
                f"not congruent modulo {page_size:#x}"
            )
        if seg.file_offset + seg.file_siz > len(file_bytes):
            raise FileRangeOutOfBounds(
                f"Load file range [{seg.file_offset:#x}, "
                f"{seg.file_offset + seg.file_siz:#x}) past end of file"
            )
        spans.append(
            (page_floor(seg.vaddr, page_size), page_ceil(seg.vaddr + seg.mem_siz, page_size), seg)
        )
    spans.sort(key=lambda item: item[0])
    for (_, prev_end, prev), (start, _, cur) in zip(spans, spans[1:]):
        if start < prev_end:
            raise OverlappingLoads(
                f"Loads at {prev.vaddr:#x} and {cur.vaddr:#x} overlap in memory"
            )

    base = spans[0][0]
    end = max(item[1] for item in spans)
    data = bytearray(end - base)
    provenance = bytearray(end - base)

    def put_file(addr: int, offset: int, length: int) -> None:
        if length <= 0:
            return
        data[addr - base : addr - base + length] = file_bytes[offset : offset + length]
        provenance[addr - base : addr - base + length] = bytes([Provenance.FROM_FILE]) * length

    def put_zero(addr: int, length: int) -> None:
        if length <= 0:
            return
        # buffer starts zeroed; only provenance needs marking
        provenance[addr - base : addr - base + length] = bytes([Provenance.ZEROED]) * length

    for span_start, span_end, seg in spans:
        # leading sub-page before vaddr mirrors the floored file offset
        put_file(span_start, seg.file_offset - (seg.vaddr - span_start), seg.vaddr - span_start)
        put_file(seg.vaddr, seg.file_offset, seg.file_siz)
        seg_file_end = seg.vaddr + seg.file_siz
        seg_mem_end = seg.vaddr + seg.mem_siz
        if mode is ZeroingMode.LEGACY:
            put_zero(seg_file_end, span_end - seg_file_end)
            continue
        put_zero(seg_file_end, seg_mem_end - seg_file_end)
        # page-granular file mapping: the tail past mem_siz keeps file bytes
        # where the file extends that far, and reads as zero past its end
        tail_addr = seg_mem_end
        while tail_addr < span_end:
            offset = seg.file_offset + (tail_addr - seg.vaddr)
            if offset < len(file_bytes):
                chunk = min(span_end - tail_addr, len(file_bytes) - offset)
                put_file(tail_addr, offset, chunk)
                tail_addr += chunk
            else:
                put_zero(tail_addr, span_end - tail_addr)
                break
    return MemoryImage(base=base, data=data, provenance=provenance)


def _sole_dynamic(segments: list[ElfSegment]) -> ElfSegment:
    dynamics = [s for s in segments if s.kind is SegmentKind.DYNAMIC]
    if not dynamics:
        raise NoDynamic("no Dynamic segment")
    if len(dynamics) > 1:
        raise MultipleDynamic(f"{len(dynamics)} Dynamic segments")
    return dynamics[0]


def classify_dynamic(
    segments: list[ElfSegment], page_size: int = DEFAULT_PAGE_SIZE
) -> DynamicPlacement:
    """Locate the Dynamic segment relative to Load coverage."""
    dyn = _sole_dynamic(segments)
    dyn_start = dyn.vaddr
    dyn_end = dyn.vaddr + dyn.mem_siz
    for seg in segments:
        if seg.kind is not SegmentKind.LOAD:
            continue
        if seg.vaddr <= dyn_start and dyn_end <= seg.vaddr + seg.mem_siz:
            return DynamicPlacement.INSIDE_LOAD
    for seg in segments:
        if seg.kind is not SegmentKind.LOAD:
            continue
        span_start = page_floor(seg.vaddr, page_size)
        span_end = page_ceil(seg.vaddr + seg.mem_siz, page_size)
        if span_start <= dyn_start and dyn_end <= span_end:
            return DynamicPlacement.IN_ALIGNED_EXTENSION
    return DynamicPlacement.OUTSIDE_ENTIRELY


@dataclass(frozen=True, slots=True)
class IntegrityVerdict:
    intact: bool
    # byte index into the Dynamic region of the first mismatch, if any
    first_diff: int | None = None


def check_dynamic_integrity(
    segments: list[ElfSegment], image: MemoryImage, file_bytes: bytes
) -> IntegrityVerdict:
    """Compare the Dynamic region in the image against its file bytes."""
    dyn = _sole_dynamic(segments)
    length = dyn.file_siz
    if dyn.file_offset + length > len(file_bytes):
        raise FileRangeOutOfBounds(
            f"Dynamic file range [{dyn.file_offset:#x}, "
            f"{dyn.file_offset + length:#x}) past end of file"
        )
    if length == 0:
        return IntegrityVerdict(intact=True)
    if not image.contains(dyn.vaddr, length):
        raise DynamicUnmapped(f"Dynamic region at {dyn.vaddr:#x} outside the image")
    start = dyn.vaddr - image.base
    if any(
        p == Provenance.UNMAPPED for p in image.provenance[start : start + length]
    ):
        raise DynamicUnmapped(f"Dynamic region at {dyn.vaddr:#x} has unmapped bytes")
    expected = file_bytes[dyn.file_offset : dyn.file_offset + length]
    actual = image.bytes_at(dyn.vaddr, length)
    if actual == expected:
        return IntegrityVerdict(intact=True)
    first = next(i for i in range(length) if actual[i] != expected[i])
    return IntegrityVerdict(intact=False, first_diff=first)
