"""Builders for the minimal ELF64 files used by tests and shipped as fixtures.

Byte layout of a built file:

    0x00  64-byte ELF header: magic, class=2 (64-bit), data=1 (LE),
          version=1, e_type=ET_DYN, e_machine=EM_X86_64, e_phoff=64,
          e_phentsize=56, e_phnum=len(segments)
    0x40  program header table, 56 bytes per entry, file order preserved
    ...   raw content chunks at their declared file offsets

Two canned layouts matter:

* dynamic_in_tail: one RW Load with mem_siz > file_siz and a Dynamic segment
  that sits past the Load's end but inside its page-aligned extension. The
  Dynamic bytes are congruent with the Load's page mapping, so linux-mode
  loading keeps them and legacy-mode loading zeroes them.
* dynamic_inside_load: control layout with the Dynamic region covered by the
  Load's mem_siz, identical under both modes.
"""

from __future__ import annotations

import struct
import sys
from pathlib import Path

from .elf import EHDR_SIZE, PF_R, PF_W, PHDR_SIZE, PT_DYNAMIC, PT_LOAD

ET_DYN = 3
EM_X86_64 = 62


def build_elf(
    segments: list[tuple[int, int, int, int, int, int, int]],
    content: dict[int, bytes] | None = None,
    file_size: int | None = None,
) -> bytes:
    """Assemble an ELF64 image from raw program header tuples.

    Each segment tuple is (p_type, flags, file_offset, vaddr, file_siz,
    mem_siz, align). content maps file offsets to raw bytes written after the
    headers.
    """
    table_end = EHDR_SIZE + PHDR_SIZE * len(segments)
    size = max(
        table_end,
        file_size or 0,
        max((off + len(blob) for off, blob in (content or {}).items()), default=0),
    )
    image = bytearray(size)
    image[0:4] = b"\x7fELF"
    image[4] = 2  # ELFCLASS64
    image[5] = 1  # ELFDATA2LSB
    image[6] = 1  # EV_CURRENT
    struct.pack_into("<HHI", image, 0x10, ET_DYN, EM_X86_64, 1)
    struct.pack_into("<Q", image, 0x20, EHDR_SIZE)  # e_phoff
    struct.pack_into("<H", image, 0x34, EHDR_SIZE)  # e_ehsize
    struct.pack_into("<H", image, 0x36, PHDR_SIZE)  # e_phentsize
    struct.pack_into("<H", image, 0x38, len(segments))  # e_phnum
    for idx, (p_type, flags, offset, vaddr, filesz, memsz, align) in enumerate(segments):
        struct.pack_into(
            "<IIQQQQQQ",
            image,
            EHDR_SIZE + idx * PHDR_SIZE,
            p_type,
            flags,
            offset,
            vaddr,
            vaddr,  # paddr mirrors vaddr
            filesz,
            memsz,
            align,
        )
    for offset, blob in (content or {}).items():
        image[offset : offset + len(blob)] = blob
    return bytes(image)


def dyn_entries(pairs: list[tuple[int, int]]) -> bytes:
    """Pack (d_tag, d_val) pairs as little-endian Elf64_Dyn entries."""
    return b"".join(struct.pack("<QQ", tag, val) for tag, val in pairs)


# Shared geometry for the canned fixtures (page size 4096):
# Load file range [0x0, 0x200), memory [0x10000, 0x10300),
# Dynamic file range [0x400, 0x480), memory [0x10400, 0x10480).
_LOAD_VADDR = 0x10000
_DYN_OFFSET = 0x400
_DYN_VADDR = 0x10400
_DYN_SIZE = 0x80
_FILE_SIZE = 0x480

_DYN_CONTENT = dyn_entries(
    [
        (1, 0x10),  # DT_NEEDED
        (5, 0x100),  # DT_STRTAB
        (6, 0x180),  # DT_SYMTAB
        (10, 0x40),  # DT_STRSZ
        (11, 0x18),  # DT_SYMENT
        (12, 0x10200),  # DT_INIT
        (13, 0x10280),  # DT_FINI
        (0, 0),  # DT_NULL
    ]
)


def _filler(start: int, end: int) -> bytes:
    return bytes((0x11 * ((i % 14) + 1)) & 0xFF for i in range(start, end))


def dynamic_in_tail_elf() -> bytes:
    """Load [0x10000, 0x10300) with the Dynamic region in its aligned tail."""
    segments = [
        (PT_LOAD, PF_R | PF_W, 0x0, _LOAD_VADDR, 0x200, 0x300, 0x1000),
        (PT_DYNAMIC, PF_R, _DYN_OFFSET, _DYN_VADDR, _DYN_SIZE, _DYN_SIZE, 8),
    ]
    table_end = EHDR_SIZE + PHDR_SIZE * len(segments)
    content = {
        table_end: _filler(table_end, _DYN_OFFSET),
        _DYN_OFFSET: _DYN_CONTENT,
    }
    return build_elf(segments, content, file_size=_FILE_SIZE)


def dynamic_inside_load_elf() -> bytes:
    """Control layout: one Load whose mem_siz covers the Dynamic region."""
    segments = [
        (PT_LOAD, PF_R | PF_W, 0x0, _LOAD_VADDR, _FILE_SIZE, _FILE_SIZE, 0x1000),
        (PT_DYNAMIC, PF_R, _DYN_OFFSET, _DYN_VADDR, _DYN_SIZE, _DYN_SIZE, 8),
    ]
    table_end = EHDR_SIZE + PHDR_SIZE * len(segments)
    content = {
        table_end: _filler(table_end, _DYN_OFFSET),
        _DYN_OFFSET: _DYN_CONTENT,
    }
    return build_elf(segments, content, file_size=_FILE_SIZE)


FIXTURES = {
    "dynamic_in_tail.elf": dynamic_in_tail_elf,
    "dynamic_inside_load.elf": dynamic_inside_load_elf,
}


def write_fixture_files(directory: str | Path) -> list[Path]:
    """Regenerate the canned fixture files into directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, builder in FIXTURES.items():
        path = directory / name
        path.write_bytes(builder())
        written.append(path)
    return written


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "."
    for path in write_fixture_files(target):
        print(path)
