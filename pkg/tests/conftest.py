"""Shared helpers: a randomized lockstep trace driver and report parsing."""

from __future__ import annotations

import random

import pytest

from vmasim.core import DEFAULT_PAGE_SIZE, Direction, Prot, VirtualRange
from vmasim.engine import Policy, Simulation
from vmasim.errors import OutOfAddressSpace
from vmasim.host import oracle_vma_count
from vmasim.sentry import AddressSpaceLayout
from vmasim.workload import Access, Fault, Mmap, Munmap

# Compact layout keeps randomized traces dense enough to exercise adjacency.
SMALL_LAYOUT = AddressSpaceLayout(0x1000, 0x200000, Direction.DOWN)


def make_sim(policy: Policy, layout: AddressSpaceLayout = SMALL_LAYOUT) -> Simulation:
    return Simulation(page_size=DEFAULT_PAGE_SIZE, layout=layout, policy=policy)


def check_against_oracle(sim: Simulation) -> None:
    """Host VMA count must equal the oracle count of the per-page expansion."""
    expected = oracle_vma_count(sim.host.page_mappings(), sim.page_size)
    assert len(sim.host) == expected, (
        f"host count {len(sim.host)} != oracle {expected} ({sim.policy.label})"
    )


def check_conservation(sim: Simulation) -> None:
    mapped = sum(v.length for v in sim.host.vmas)
    assert mapped == sim.store.allocated_bytes


def check_sentry_disjoint(sim: Simulation) -> None:
    vmas = sim.address_space.vmas
    for left, right in zip(vmas, vmas[1:]):
        assert left.range.end <= right.range.start, (left.range, right.range)


def _unmapped_pages(sim: Simulation, rng: VirtualRange) -> list[int]:
    page = sim.page_size
    return [
        addr
        for addr in range(rng.start, rng.end, page)
        if not sim.host.is_mapped(addr)
    ]


def drive_lockstep(
    rng: random.Random,
    sims: list[Simulation],
    n_events: int,
    *,
    after_each=None,
) -> int:
    """Apply one random but valid event stream to every sim in lockstep.

    Event validity is judged against sims[0]; because mapping geometry is
    policy independent the same events are valid for the rest. Returns the
    number of events applied.
    """
    ref = sims[0]
    page = ref.page_size
    seq = 0
    applied = 0
    prots = [Prot.R | Prot.W, Prot.R | Prot.W, Prot.R | Prot.W, Prot.R]
    for _ in range(n_events):
        roll = rng.random()
        vmas = ref.address_space.vmas
        event = None
        if roll < 0.35 or not vmas:
            size = rng.randint(1, 6) * page
            direction = rng.choice([Direction.UP, Direction.DOWN])
            seq += 1
            event = Mmap(seq, size, direction, rng.choice(prots))
        elif roll < 0.85:
            candidates = []
            for vma in vmas:
                candidates.extend(_unmapped_pages(ref, vma.range))
            if not candidates:
                continue
            seq += 1
            addr = rng.choice(candidates)
            event = Fault(seq, addr, rng.choice([Access.READ, Access.WRITE]))
        else:
            vma = rng.choice(vmas)
            pages = vma.range.length // page
            lo_page = rng.randint(0, pages - 1)
            hi_page = rng.randint(lo_page + 1, pages)
            seq += 1
            event = Munmap(
                seq, vma.range.start + lo_page * page, vma.range.start + hi_page * page
            )
        try:
            sims[0].apply(event)
        except OutOfAddressSpace:
            # dense layout filled up; occupancy is identical in every sim so
            # the event is skipped for all of them
            continue
        for sim in sims[1:]:
            sim.apply(event)
        applied += 1
        if after_each is not None:
            after_each(event)
    return applied


def parse_structured(text: str) -> dict:
    """Parse a structured report into meta/summary dicts plus series rows."""
    blocks: dict = {"meta": {}, "summary": {}, "series": []}
    current = None
    header: list[str] = []
    for line in text.splitlines():
        if not line.startswith("  "):
            current = line
            continue
        body = line[2:]
        if current in ("meta", "summary"):
            key, _, value = body.partition("=")
            if key == "breach":
                blocks[current].setdefault("breach", []).append(value)
            else:
                blocks[current][key] = value
        elif current == "series":
            if not header:
                header = body.split(",")
            else:
                blocks["series"].append(dict(zip(header, body.split(","))))
    blocks["series_columns"] = header
    return blocks


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xA11CE)
