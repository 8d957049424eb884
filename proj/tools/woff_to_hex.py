#!/usr/bin/env python3
"""Rebuild a Unifont .hex file from the outline (TTF/WOFF) distribution.

Unifont outlines are unions of 64-unit squares on a 16-row grid (ascent
896, descent 128, 1024 units per em), so sampling every pixel centre with
the nonzero winding rule recovers the original bitmaps exactly.

    python3 tools/woff_to_hex.py unifont-latin-400-normal.woff out.hex
"""
import sys

from fontTools.pens.recordingPen import RecordingPen
from fontTools.ttLib import TTFont

UNIT = 64
ASCENT = 896


def segments(recording):
    segs = []
    start = cur = None
    for op, args in recording:
        if op == "moveTo":
            start = cur = args[0]
        elif op == "lineTo":
            segs.append((cur, args[0]))
            cur = args[0]
        elif op in ("qCurveTo", "curveTo"):
            # rectilinear outlines: control points sit on the polyline
            for p in (p for p in args if p is not None):
                segs.append((cur, p))
                cur = p
        elif op in ("closePath", "endPath"):
            if cur != start:
                segs.append((cur, start))
            cur = start
    return segs


def rasterize(segs, width):
    rows = []
    for r in range(16):
        yc = ASCENT - UNIT * r - UNIT // 2
        crossings = []
        for (x0, y0), (x1, y1) in segs:
            if y0 <= yc < y1 or y1 <= yc < y0:
                x = x0 + (yc - y0) * (x1 - x0) / (y1 - y0)
                crossings.append((x, 1 if y1 > y0 else -1))
        bits = 0
        for c in range(width):
            xc = UNIT * c + UNIT // 2
            if sum(d for x, d in crossings if x < xc) != 0:
                bits |= 1 << (width - 1 - c)
        rows.append(bits)
    return rows


def main(src, dst):
    font = TTFont(src)
    cmap = font.getBestCmap()
    glyphs = font.getGlyphSet()
    hmtx = font["hmtx"]
    lines = []
    for cp in sorted(cmap):
        name = cmap[cp]
        width = 16 if hmtx[name][0] > 8 * UNIT else 8
        pen = RecordingPen()
        glyphs[name].draw(pen)
        fmt = "%02X" if width == 8 else "%04X"
        rows = rasterize(segments(pen.value), width)
        lines.append("%04X:" % cp + "".join(fmt % b for b in rows))
    with open(dst, "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
