"""Exception types raised across the simulator."""


class VmaSimError(Exception):
    """Base class for all simulator errors."""


# --- guest address space ---------------------------------------------------


class OutOfAddressSpace(VmaSimError):
    """No free gap large enough inside the layout bounds."""

    def __init__(self, size: int) -> None:
        self.size = size
        super().__init__(f"no free gap of {size:#x} bytes")


class OverlapError(VmaSimError):
    """A new mapping intersects an existing one."""


class OutOfBounds(VmaSimError):
    """A range falls outside the configured layout bounds."""


class NotAdjacent(VmaSimError):
    """Merge operands are not address-contiguous in order."""


class IncompatibleAttributes(VmaSimError):
    """Merge operands differ in protection, backing file, or direction."""


class FaultOutsideVma(VmaSimError):
    """Fault address is not covered by any VMA."""

    def __init__(self, addr: int) -> None:
        self.addr = addr
        super().__init__(f"fault at {addr:#x} hits no VMA")


# --- backing store ----------------------------------------------------------


class StoreExhausted(VmaSimError):
    """No free file span large enough for the request."""

    def __init__(self, length: int) -> None:
        self.length = length
        super().__init__(f"no free span of {length:#x} bytes in backing store")


class NotAllocated(VmaSimError):
    """Attempt to free file offsets that are not currently allocated."""


# --- host kernel model ------------------------------------------------------


class MapCountExceeded(VmaSimError):
    """Inserting one more VMA would push the host past max_map_count."""

    def __init__(self, count: int, limit: int) -> None:
        self.count = count
        self.limit = limit
        super().__init__(f"VMA count {count} at limit {limit}")


class DuplicatePage(VmaSimError):
    """A page address appears twice in an oracle page list."""


# --- fault engine -----------------------------------------------------------


class AlreadyMapped(VmaSimError):
    """Fault raised on a page that already has a host mapping."""

    def __init__(self, addr: int) -> None:
        self.addr = addr
        super().__init__(f"page {addr:#x} is already mapped")


class MalformedTrace(VmaSimError):
    """Trace events are structurally unusable at replay time."""


# --- trace format and generators ---------------------------------------------


class MalformedLine(VmaSimError):
    """A trace line does not match the grammar."""

    def __init__(self, lineno: int, reason: str) -> None:
        self.lineno = lineno
        self.reason = reason
        super().__init__(f"line {lineno}: {reason}")


class HeaderMismatch(VmaSimError):
    """Trace header is inconsistent or conflicts with the run config."""


class NonMonotonicSeq(VmaSimError):
    """Event sequence numbers are not strictly increasing."""

    def __init__(self, lineno: int, seq: int) -> None:
        self.lineno = lineno
        self.seq = seq
        super().__init__(f"line {lineno}: seq {seq} does not increase")


class ArenaExhausted(VmaSimError):
    """Generator demand exceeds the address-space layout."""


# --- ELF loader ---------------------------------------------------------------


class ElfError(VmaSimError):
    """Base class for ELF parsing and loading errors."""


class BadMagic(ElfError):
    """File does not start with the ELF magic."""


class UnsupportedClass(ElfError):
    """Not a 64-bit little-endian ELF."""


class TruncatedHeader(ElfError):
    """Header or program header table extends past the file end."""


class BadSegment(ElfError):
    """Segment fields violate loader preconditions."""


class OverlappingLoads(ElfError):
    """Two Load segments overlap in memory."""


class FileRangeOutOfBounds(ElfError):
    """Segment file range extends past the file end."""


class AlignmentMismatch(ElfError):
    """vaddr and file_offset are not congruent modulo the page size."""


class NoDynamic(ElfError):
    """No Dynamic segment present."""


class MultipleDynamic(ElfError):
    """More than one Dynamic segment present."""


class DynamicUnmapped(ElfError):
    """Dynamic region lies outside the mapped image."""
