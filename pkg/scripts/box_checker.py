#!/usr/bin/env python3
"""Reference implementation of the external renderability-checker contract.

Usage: box_checker.py INPUT.step OUTPUT.stl

A real deployment plugs a B-rep kernel (e.g. an OpenCASCADE-based
converter) into the same contract: read a STEP file, write an STL, exit 0
on success. This stand-in meshes a toy convention instead, so the test
suites can exercise the full subprocess pipeline hermetically: the STEP
file must contain a ``BOX('name',dx,dy,dz);`` entity, which is emitted as
an axis-aligned box. A ``SHIFT('',x,y,z)`` entity offsets the box. Any
file without a BOX entity, or with non-positive dimensions, fails with
exit 1. ``SLOW('',seconds)`` sleeps first (timeout testing).

Intentionally dependency-light: stdlib only.
"""

import re
import struct
import sys
import time

BOX_RE = re.compile(
    r"=\s*BOX\s*\(\s*'[^']*'\s*,\s*([0-9.Ee+-]+)\s*,\s*([0-9.Ee+-]+)\s*,\s*([0-9.Ee+-]+)\s*\)")
SHIFT_RE = re.compile(
    r"=\s*SHIFT\s*\(\s*'[^']*'\s*,\s*([0-9.Ee+-]+)\s*,\s*([0-9.Ee+-]+)\s*,\s*([0-9.Ee+-]+)\s*\)")
SLOW_RE = re.compile(r"=\s*SLOW\s*\(\s*'[^']*'\s*,\s*([0-9.Ee+-]+)\s*\)")

QUADS = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1),
         (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]


def box_stl(dx, dy, dz, shift):
    sx, sy, sz = shift
    corners = [(sx + x, sy + y, sz + z)
               for x in (0.0, dx) for y in (0.0, dy) for z in (0.0, dz)]
    triangles = []
    for a, b, c, d in QUADS:
        triangles.append((corners[a], corners[b], corners[c]))
        triangles.append((corners[a], corners[c], corners[d]))
    out = bytearray(b"\0" * 80)
    out += struct.pack("<I", len(triangles))
    for tri in triangles:
        out += struct.pack("<3f", 0.0, 0.0, 0.0)
        for v in tri:
            out += struct.pack("<3f", *v)
        out += struct.pack("<H", 0)
    return bytes(out)


def main(argv):
    if len(argv) != 3:
        print("usage: box_checker.py INPUT.step OUTPUT.stl", file=sys.stderr)
        return 2
    try:
        text = open(argv[1]).read()
    except OSError as exc:
        print(f"cannot read input: {exc}", file=sys.stderr)
        return 1
    slow = SLOW_RE.search(text)
    if slow:
        time.sleep(float(slow.group(1)))
    m = BOX_RE.search(text)
    if not m:
        print("no BOX entity found", file=sys.stderr)
        return 1
    dx, dy, dz = (float(m.group(i)) for i in (1, 2, 3))
    if min(dx, dy, dz) <= 0:
        print("non-positive box dimensions", file=sys.stderr)
        return 1
    shift = (0.0, 0.0, 0.0)
    s = SHIFT_RE.search(text)
    if s:
        shift = tuple(float(s.group(i)) for i in (1, 2, 3))
    with open(argv[2], "wb") as fh:
        fh.write(box_stl(dx, dy, dz, shift))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
