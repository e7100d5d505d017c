"""
Straight-line LGS reference: scalar loops, no blocking tricks, no numpy kernels.

Used to check lgs.lgs_transform bit for bit. Each arithmetic step is written in
the same order as the vectorized version so the float results agree exactly.
"""

import math


def reference_lgs(img, lam: float = 2.3, block: int = 15, overlap: int = 5, threshold: float = 0.1):
    """img is a nested list / array indexable as img[r][c][ch]; returns (output, mask) as lists."""
    height = len(img)
    width = len(img[0])

    # luminance
    y = [[0.0] * width for _ in range(height)]
    for r in range(height):
        for c in range(width):
            px = img[r][c]
            v = 0.299 * float(px[0]) + 0.587 * float(px[1])
            v = v + 0.114 * float(px[2])
            y[r][c] = min(max(v, 0.0), 1.0)

    # gradient magnitude
    g = [[0.0] * width for _ in range(height)]
    for r in range(height):
        for c in range(width):
            if width < 2:
                da = 0.0
            elif c == 0:
                da = y[r][1] - y[r][0]
            elif c == width - 1:
                da = y[r][c] - y[r][c - 1]
            else:
                da = (y[r][c + 1] - y[r][c - 1]) / 2.0
            if height < 2:
                db = 0.0
            elif r == 0:
                db = y[1][c] - y[0][c]
            elif r == height - 1:
                db = y[r][c] - y[r - 1][c]
            else:
                db = (y[r + 1][c] - y[r - 1][c]) / 2.0
            g[r][c] = math.sqrt(da * da + db * db)

    # min-max normalization
    g_min = min(min(row) for row in g)
    g_max = max(max(row) for row in g)
    for r in range(height):
        for c in range(width):
            g[r][c] = 0.0 if g_max == g_min else (g[r][c] - g_min) / (g_max - g_min)

    # anchors
    def anchors(dim):
        out = []
        a = 0
        while a + block <= dim:
            out.append(a)
            a += block - overlap
        if out[-1] != dim - block:
            out.append(dim - block)
        return out

    if height < block or width < block:
        rows, cols, bh, bw = [0], [0], height, width
    else:
        rows, cols, bh, bw = anchors(height), anchors(width), block, block

    # keep-if-any mask
    mask = [[False] * width for _ in range(height)]
    for h in rows:
        for w in cols:
            total = 0.0
            for r in range(h, h + bh):
                for c in range(w, w + bw):
                    total += g[r][c]
            if total / (bh * bw) > threshold:
                for r in range(h, h + bh):
                    for c in range(w, w + bw):
                        mask[r][c] = True

    out = [[[0.0, 0.0, 0.0] for _ in range(width)] for _ in range(height)]
    for r in range(height):
        for c in range(width):
            gb = g[r][c] if mask[r][c] else 0.0
            m = 1.0 - min(max(lam * gb, 0.0), 1.0)
            for ch in range(3):
                out[r][c][ch] = float(img[r][c][ch]) * m
    return out, mask
