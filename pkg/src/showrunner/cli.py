"""Operator entry points: validate a show, run it headless (paced or flat
out, optionally scripted), or serve the live sockets.

Exit codes: 0 clean, 1 validation/config error, 2 runtime abort.
"""

from __future__ import annotations

import argparse
import asyncio
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from . import animation, protocol
from .protocol import (ControlMessage, MocapFrame, SetOffset, ShowDocument,
                       ShowFormatError, encode_snapshot, load_show,
                       parse_control_line, parse_mocap_frame)
from .stage import build_scene

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="showrunner",
        description="Headless avatar-direction runtime: validate, run or "
                    "serve a show file.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a show file")
    p_validate.add_argument("show", type=Path)
    p_validate.add_argument("--strict", action="store_true",
                            help="warnings (unknown fields, loop seams) fail")

    p_run = sub.add_parser("run", help="run a show headless, print the log hash")
    p_run.add_argument("show", type=Path)
    p_run.add_argument("--ticks", type=int, default=600,
                       help="number of fixed steps to simulate")
    p_run.add_argument("--fixed-step", type=float, default=None,
                       help="override the show's fixed step (seconds)")
    p_run.add_argument("--script", type=Path, default=None,
                       help="tick-prefixed input trace to inject")
    p_run.add_argument("--log", type=Path, default=None,
                       help="write newline-delimited JSON snapshots here")
    p_run.add_argument("--realtime", action="store_true",
                       help="pace ticks to the wall clock")

    p_serve = sub.add_parser("serve", help="serve the live control surfaces")
    p_serve.add_argument("show", type=Path)
    p_serve.add_argument("--control-port", type=int, default=7701)
    p_serve.add_argument("--mocap-port", type=int, default=7702)
    p_serve.add_argument("--ws-port", type=int, default=7703)
    p_serve.add_argument("--fixed-step", type=float, default=None)
    p_serve.add_argument("--host", default="127.0.0.1")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if args.command == "validate":
        return cmd_validate(args)
    if args.command == "run":
        return cmd_run(args)
    return cmd_serve(args)


def _load(path: Path, strict: bool = False) -> ShowDocument | None:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        print(f"error: cannot read {path}: {e}", file=sys.stderr)
        return None
    try:
        return protocol.parse_show(text, strict=strict, base_dir=path.parent)
    except ShowFormatError as e:
        for problem in e.errors:
            print(f"error: {problem}", file=sys.stderr)
        return None


def cmd_validate(args) -> int:
    doc = _load(args.show, strict=args.strict)
    if doc is None:
        return EXIT_CONFIG
    warnings = list(doc.warnings)
    for name, clip in sorted(doc.clips.items()):
        if clip.salience != animation.IDLE:
            continue
        skeleton = doc.skeletons.get(clip.skeleton)
        if skeleton is None:
            continue
        seam = animation.loop_seam_error(clip, skeleton)
        if seam > doc.seam_threshold:
            warnings.append(
                f"idle clip {name!r} loop seam {seam:.4f} m exceeds threshold "
                f"{doc.seam_threshold} m (conspicuous repetition)")
    for w in warnings:
        print(f"warning: {w}")
    print(f"{args.show}: {len(doc.skeletons)} skeletons, {len(doc.clips)} clips, "
          f"{len(doc.avatars)} avatars, {len(doc.cues)} cues"
          + (f", navmesh {len(doc.navmesh.triangles)} triangles"
             if doc.navmesh is not None else ""))
    if warnings and args.strict:
        print("strict mode: warnings are fatal", file=sys.stderr)
        return EXIT_CONFIG
    print("ok")
    return EXIT_OK


def parse_script(text: str) -> list[tuple[int, object]]:
    """Tick-prefixed wire lines -> [(tick, ControlMessage | MocapFrame)]."""
    entries: list[tuple[int, object]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            tick_str, payload = line.split(None, 1)
            tick = int(tick_str)
        except ValueError:
            raise ValueError(f"script line {lineno}: expected '<tick> <command>'")
        try:
            if payload.lstrip().startswith("{") and '"avatar"' in payload:
                entries.append((tick, parse_mocap_frame(payload)))
            else:
                entries.append((tick, parse_control_line(payload)))
        except ValueError as e:
            raise ValueError(f"script line {lineno}: {e}")
    entries.sort(key=lambda e: e[0])
    return entries


def _script_avatar_refs(entries) -> set[str]:
    refs = set()
    for _, msg in entries:
        if isinstance(msg, MocapFrame):
            refs.add(msg.avatar)
        elif isinstance(msg, SetOffset):
            refs.add(msg.avatar)
    return refs


def cmd_run(args) -> int:
    doc = _load(args.show)
    if doc is None:
        return EXIT_CONFIG
    entries: list[tuple[int, object]] = []
    if args.script is not None:
        try:
            entries = parse_script(args.script.read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        known = {spec.id for spec in doc.avatars}
        unknown = _script_avatar_refs(entries) - known
        if unknown:
            print(f"error: script references unknown avatars: "
                  f"{sorted(unknown)}", file=sys.stderr)
            return EXIT_CONFIG

    scene = build_scene(doc, args.fixed_step)
    digest = hashlib.sha256()
    log_file = None
    if args.log is not None:
        log_file = open(args.log, "w", encoding="utf-8")
    header = json.dumps({"type": "header", "show": doc.name or str(args.show),
                         "fixed_step": scene.dt, "ticks": args.ticks},
                        sort_keys=True, separators=(",", ":"))
    if log_file:
        log_file.write(header + "\n")
    digest.update(header.encode() + b"\n")

    started = time.perf_counter()
    cursor = 0
    try:
        for k in range(args.ticks):
            while cursor < len(entries) and entries[cursor][0] <= k:
                msg = entries[cursor][1]
                if isinstance(msg, MocapFrame):
                    scene.post_mocap(msg)
                else:
                    scene.post(msg)
                cursor += 1
            line = encode_snapshot(scene.tick())
            digest.update(line.encode() + b"\n")
            if log_file:
                log_file.write(line + "\n")
            if args.realtime:
                target = started + (k + 1) * scene.dt
                delay = target - time.perf_counter()
                if delay > 0:
                    time.sleep(delay)
    except Exception as e:  # a runtime abort must exit 2, not traceback
        print(f"runtime abort at tick {scene.tick_index}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        if log_file:
            log_file.close()
    elapsed = time.perf_counter() - started
    print(f"ticks: {args.ticks}  simulated: {args.ticks * scene.dt:.2f} s  "
          f"wall: {elapsed:.2f} s")
    print(f"log sha256: {digest.hexdigest()}")
    return EXIT_OK


def cmd_serve(args) -> int:
    doc = _load(args.show)
    if doc is None:
        return EXIT_CONFIG
    from .server import serve_show
    try:
        asyncio.run(serve_show(doc, control_port=args.control_port,
                               mocap_port=args.mocap_port, ws_port=args.ws_port,
                               fixed_step=args.fixed_step, host=args.host))
    except OSError as e:
        print(f"error: cannot open sockets: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        pass
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
