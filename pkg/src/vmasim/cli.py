"""Command-line front end: simulate, compare, elf-check, gen-workload.

Exit codes: 0 success, 2 input error, 3 simulated map-count breach,
4 corruption detected. Reports are plain text (structured blocks or CSV with
# comments), written to --out or stdout, and byte-deterministic for
identical inputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .core import DEFAULT_PAGE_SIZE
from .elf import (
    SegmentKind,
    ZeroingMode,
    build_image,
    check_dynamic_integrity,
    classify_dynamic,
    parse_program_headers,
)
from .engine import (
    DEFAULT_FAULT_CHUNK_PAGES,
    Policy,
    SimulationReport,
    run_trace,
)
from .errors import HeaderMismatch, NoDynamic, VmaSimError
from .host import DEFAULT_MAX_MAP_COUNT
from .sentry import DEFAULT_LAYOUT_HI, DEFAULT_LAYOUT_LO
from .workload import gen_list_append, parse_trace, serialize_trace

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_LIMIT_BREACH = 3
EXIT_CORRUPTION = 4


# --- report rendering --------------------------------------------------------


def _meta_pairs(report: SimulationReport, trace_path: str, command: str) -> list[tuple[str, str]]:
    return [
        ("command", command),
        ("policy", report.policy_label),
        ("trace", trace_path),
        ("page_size", str(report.page_size)),
        ("lo", f"{report.lo:#x}"),
        ("hi", f"{report.hi:#x}"),
        ("max_map_count", str(report.max_map_count)),
        ("chunk_pages", str(report.chunk_pages)),
    ]


def _summary_pairs(report: SimulationReport) -> list[tuple[str, str]]:
    pairs = [
        ("events_applied", str(report.events_applied)),
        ("faults", str(report.fault_count)),
        ("peak_host_vmas", str(report.peak_host_vmas)),
        ("final_host_vmas", str(report.final_host_vmas)),
        ("final_sentry_vmas", str(report.final_sentry_vmas)),
        ("breaches", str(len(report.breaches))),
    ]
    for breach in report.breaches:
        pairs.append(("breach", f"seq={breach.seq} count={breach.count} limit={breach.limit}"))
    pairs += [
        ("halted", "true" if report.halted else "false"),
        ("free_spans", str(report.free_spans)),
        ("largest_free_span", str(report.largest_free_span)),
        ("allocated_bytes", str(report.allocated_bytes)),
    ]
    return pairs


def _series_rows(report: SimulationReport) -> list[str]:
    s = report.series
    return [
        f"{s.seq[i]},{s.host_vmas[i]},{s.sentry_vmas[i]},{s.allocated_bytes[i]}"
        for i in range(len(s))
    ]


SERIES_HEADER = "seq,host_vmas,sentry_vmas,allocated_bytes"


def format_report(report: SimulationReport, fmt: str, trace_path: str) -> str:
    meta = _meta_pairs(report, trace_path, "simulate")
    summary = _summary_pairs(report)
    rows = _series_rows(report)
    if fmt == "csv":
        lines = [f"# {k}={v}" for k, v in meta + summary]
        lines.append(SERIES_HEADER)
        lines += rows
    else:
        lines = ["meta"]
        lines += [f"  {k}={v}" for k, v in meta]
        lines.append("series")
        lines.append(f"  {SERIES_HEADER}")
        lines += [f"  {row}" for row in rows]
        lines.append("summary")
        lines += [f"  {k}={v}" for k, v in summary]
    return "\n".join(lines) + "\n"


COMPARE_SERIES_HEADER = (
    "seq,host_vmas_legacy,host_vmas_fixed,sentry_vmas_legacy,sentry_vmas_fixed,"
    "allocated_bytes_legacy,allocated_bytes_fixed"
)


def _ratio(legacy: SimulationReport, fixed: SimulationReport) -> tuple[str, bool]:
    """legacy/fixed final host VMA ratio; 1 by convention on zero activity."""
    if fixed.final_host_vmas == 0:
        return "1.00", True
    return f"{legacy.final_host_vmas / fixed.final_host_vmas:.2f}", False


def format_compare(
    legacy: SimulationReport, fixed: SimulationReport, fmt: str, trace_path: str
) -> str:
    meta = [
        ("command", "compare"),
        ("trace", trace_path),
        ("page_size", str(fixed.page_size)),
        ("lo", f"{fixed.lo:#x}"),
        ("hi", f"{fixed.hi:#x}"),
        ("max_map_count", str(fixed.max_map_count)),
        ("chunk_pages", str(fixed.chunk_pages)),
    ]
    ratio, zero_activity = _ratio(legacy, fixed)
    summary = [
        ("events_applied_legacy", str(legacy.events_applied)),
        ("events_applied_fixed", str(fixed.events_applied)),
        ("faults_legacy", str(legacy.fault_count)),
        ("faults_fixed", str(fixed.fault_count)),
        ("peak_host_vmas_legacy", str(legacy.peak_host_vmas)),
        ("peak_host_vmas_fixed", str(fixed.peak_host_vmas)),
        ("final_host_vmas_legacy", str(legacy.final_host_vmas)),
        ("final_host_vmas_fixed", str(fixed.final_host_vmas)),
        ("ratio", ratio),
        ("zero_activity", "true" if zero_activity else "false"),
        ("breaches_legacy", str(len(legacy.breaches))),
        ("breaches_fixed", str(len(fixed.breaches))),
        ("halted_legacy", "true" if legacy.halted else "false"),
        ("halted_fixed", "true" if fixed.halted else "false"),
    ]
    ls, fs = legacy.series, fixed.series
    rows = []
    for i in range(max(len(ls), len(fs))):
        seq = fs.seq[i] if i < len(fs) else ls.seq[i]
        lcell = (
            f"{ls.host_vmas[i]},{ls.sentry_vmas[i]},{ls.allocated_bytes[i]}"
            if i < len(ls)
            else ",,"
        )
        fcell = (
            f"{fs.host_vmas[i]},{fs.sentry_vmas[i]},{fs.allocated_bytes[i]}"
            if i < len(fs)
            else ",,"
        )
        lh, lsv, lab = lcell.split(",")
        fh, fsv, fab = fcell.split(",")
        rows.append(f"{seq},{lh},{fh},{lsv},{fsv},{lab},{fab}")
    if fmt == "csv":
        lines = [f"# {k}={v}" for k, v in meta + summary]
        lines.append(COMPARE_SERIES_HEADER)
        lines += rows
    else:
        lines = ["meta"]
        lines += [f"  {k}={v}" for k, v in meta]
        lines.append("series")
        lines.append(f"  {COMPARE_SERIES_HEADER}")
        lines += [f"  {row}" for row in rows]
        lines.append("summary")
        lines += [f"  {k}={v}" for k, v in summary]
    return "\n".join(lines) + "\n"


def _write_out(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --- subcommands --------------------------------------------------------------


def _load_trace(args: argparse.Namespace):
    text = Path(args.trace).read_text()
    trace = parse_trace(text)
    if args.page_size is not None and args.page_size != trace.header.page_size:
        raise HeaderMismatch(
            f"--page-size {args.page_size} conflicts with header "
            f"page_size {trace.header.page_size}"
        )
    return trace


def cmd_simulate(args: argparse.Namespace) -> int:
    trace = _load_trace(args)
    policy = Policy.legacy(args.chunk_pages) if args.policy == "legacy" else Policy.fixed(
        args.chunk_pages
    )
    report = run_trace(trace, policy, max_map_count=args.max_map_count)
    _write_out(format_report(report, args.format, args.trace), args.out)
    return EXIT_LIMIT_BREACH if report.halted else EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    trace = _load_trace(args)
    legacy = run_trace(trace, Policy.legacy(args.chunk_pages), max_map_count=args.max_map_count)
    fixed = run_trace(trace, Policy.fixed(args.chunk_pages), max_map_count=args.max_map_count)
    _write_out(format_compare(legacy, fixed, args.format, args.trace), args.out)
    return EXIT_LIMIT_BREACH if (legacy.halted or fixed.halted) else EXIT_OK


def cmd_elf_check(args: argparse.Namespace) -> int:
    data = Path(args.path).read_bytes()
    page_size = args.page_size or DEFAULT_PAGE_SIZE
    segments = parse_program_headers(data)
    lines = ["segments", "  Type,Offset,VirtAddr,FileSiz,MemSiz,Flags,Align"]
    for seg in segments:
        name = seg.kind.value if seg.kind is not SegmentKind.OTHER else f"{seg.seg_type:#x}"
        lines.append(
            f"  {name},{seg.file_offset:#x},{seg.vaddr:#x},{seg.file_siz:#x},"
            f"{seg.mem_siz:#x},{seg.flags_str()},{seg.align:#x}"
        )
    try:
        placement = classify_dynamic(segments, page_size)
    except NoDynamic:
        lines.append("dynamic_placement=none")
        _write_out("\n".join(lines) + "\n", args.out)
        return EXIT_OK
    lines.append(f"dynamic_placement={placement.value}")
    modes = {
        "linux": [ZeroingMode.LINUX],
        "legacy": [ZeroingMode.LEGACY],
        "both": [ZeroingMode.LINUX, ZeroingMode.LEGACY],
    }[args.mode]
    corrupted = False
    for mode in modes:
        image = build_image(segments, data, mode, page_size)
        verdict = check_dynamic_integrity(segments, image, data)
        if verdict.intact:
            lines.append(f"verdict_{mode.value}=intact")
        else:
            corrupted = True
            lines.append(f"verdict_{mode.value}=corrupted first_diff={verdict.first_diff}")
    _write_out("\n".join(lines) + "\n", args.out)
    return EXIT_CORRUPTION if corrupted else EXIT_OK


def cmd_gen_workload(args: argparse.Namespace) -> int:
    trace = gen_list_append(
        args.rows,
        args.row_pages,
        args.spine_growth,
        spine_cap0=args.spine_cap,
        page_size=args.page_size or DEFAULT_PAGE_SIZE,
        lo=args.lo,
        hi=args.hi,
        per_row_vma=args.per_row_vma,
    )
    _write_out(serialize_trace(trace), args.out)
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def _hex_int(text: str) -> int:
    return int(text, 0)


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument(
        "--page-size",
        type=int,
        default=None,
        help="page size in bytes (default: trace header, or 4096 when generating)",
    )
    shared.add_argument(
        "--max-map-count",
        type=int,
        default=DEFAULT_MAX_MAP_COUNT,
        help=f"host VMA limit (default {DEFAULT_MAX_MAP_COUNT})",
    )
    shared.add_argument(
        "--chunk-pages",
        type=int,
        default=DEFAULT_FAULT_CHUNK_PAGES,
        help=f"pages mapped per fault (default {DEFAULT_FAULT_CHUNK_PAGES})",
    )
    shared.add_argument("--out", default=None, help="output path (default stdout)")
    shared.add_argument(
        "--format",
        choices=["csv", "structured"],
        default="structured",
        help="report format (default structured)",
    )

    parser = argparse.ArgumentParser(
        prog="vmasim",
        description="Simulate sandbox memory mapping behavior and ELF zeroing semantics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", parents=[shared], help="replay a trace under one policy")
    p_sim.add_argument("trace", help="trace file path")
    p_sim.add_argument("--policy", choices=["legacy", "fixed"], required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_cmp = sub.add_parser(
        "compare", parents=[shared], help="replay a trace under both policies"
    )
    p_cmp.add_argument("trace", help="trace file path")
    p_cmp.set_defaults(func=cmd_compare)

    p_elf = sub.add_parser(
        "elf-check", parents=[shared], help="load an ELF and check Dynamic integrity"
    )
    p_elf.add_argument("path", help="ELF file path")
    p_elf.add_argument("--mode", choices=["linux", "legacy", "both"], default="both")
    p_elf.set_defaults(func=cmd_elf_check)

    p_gen = sub.add_parser(
        "gen-workload", parents=[shared], help="emit a list-append trace"
    )
    p_gen.add_argument("--rows", type=int, default=2000)
    p_gen.add_argument("--row-pages", type=int, default=1)
    p_gen.add_argument("--spine-growth", type=float, default=2.0)
    p_gen.add_argument("--spine-cap", type=int, default=2)
    p_gen.add_argument("--per-row-vma", action="store_true")
    p_gen.add_argument("--lo", type=_hex_int, default=DEFAULT_LAYOUT_LO)
    p_gen.add_argument("--hi", type=_hex_int, default=DEFAULT_LAYOUT_HI)
    p_gen.set_defaults(func=cmd_gen_workload)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (VmaSimError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
