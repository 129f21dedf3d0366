"""Deterministic simulator for sandbox memory mapping and ELF segment loading.

The package models three cooperating layers: a guest-facing address space
that hands out virtual ranges and tracks fault history, a byte-granular
backing file that allocates offsets in either direction, and a host memory
map that merges adjacent mappings only when addresses, attributes, and file
offsets all line up. Replaying the same trace under the legacy and the fixed
offset policies shows how offset direction alone decides whether the host
map stays small or grows without bound. A separate loader reproduces two
ways of zeroing ELF segment tails and checks what each does to a Dynamic
section that lives past the end of a segment's file image.
"""

from .backing import DEFAULT_STORE_CAPACITY, BackingStore, FileRange
from .core import DEFAULT_PAGE_SIZE, Direction, Prot, VirtualRange, page_ceil, page_floor
from .elf import (
    DynamicPlacement,
    ElfSegment,
    IntegrityVerdict,
    MemoryImage,
    Provenance,
    SegmentKind,
    ZeroingMode,
    build_image,
    check_dynamic_integrity,
    classify_dynamic,
    parse_program_headers,
)
from .engine import (
    DEFAULT_FAULT_CHUNK_PAGES,
    LimitBreach,
    OffsetDefault,
    Policy,
    Simulation,
    SimulationReport,
    run_trace,
)
from .errors import (
    MapCountExceeded,
    OutOfAddressSpace,
    StoreExhausted,
    VmaSimError,
)
from .host import DEFAULT_MAX_MAP_COUNT, HostMm, HostMmConfig, HostVma, oracle_vma_count
from .sentry import (
    DEFAULT_LAYOUT_HI,
    DEFAULT_LAYOUT_LO,
    AddressSpace,
    AddressSpaceLayout,
    LastFault,
    SentryVma,
    infer_fault_direction,
)
from .workload import (
    Access,
    Fault,
    Mmap,
    Munmap,
    Trace,
    TraceHeader,
    gen_list_append,
    parse_trace,
    serialize_trace,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_FAULT_CHUNK_PAGES",
    "DEFAULT_LAYOUT_HI",
    "DEFAULT_LAYOUT_LO",
    "DEFAULT_MAX_MAP_COUNT",
    "DEFAULT_PAGE_SIZE",
    "DEFAULT_STORE_CAPACITY",
    "Access",
    "AddressSpace",
    "AddressSpaceLayout",
    "BackingStore",
    "Direction",
    "DynamicPlacement",
    "ElfSegment",
    "Fault",
    "FileRange",
    "HostMm",
    "HostMmConfig",
    "HostVma",
    "IntegrityVerdict",
    "LastFault",
    "LimitBreach",
    "MapCountExceeded",
    "MemoryImage",
    "Mmap",
    "Munmap",
    "OffsetDefault",
    "OutOfAddressSpace",
    "Policy",
    "Prot",
    "Provenance",
    "SegmentKind",
    "SentryVma",
    "Simulation",
    "SimulationReport",
    "StoreExhausted",
    "Trace",
    "TraceHeader",
    "VirtualRange",
    "VmaSimError",
    "ZeroingMode",
    "build_image",
    "check_dynamic_integrity",
    "classify_dynamic",
    "gen_list_append",
    "infer_fault_direction",
    "oracle_vma_count",
    "page_ceil",
    "page_floor",
    "parse_program_headers",
    "parse_trace",
    "serialize_trace",
]
