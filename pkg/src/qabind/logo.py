"""Weight logos: per-position stacked letters sized by learned weights."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seqdata import ALPHABET

COLORS = {"A": "#109648", "C": "#255C99", "G": "#F7B32B", "T": "#D62839"}
NEGATIVE_FILL = "#9A9A9A"

_COLUMN_WIDTH = 40.0
_HALF_HEIGHT = 120.0
_MARGIN = 20.0
# cap height of the glyph in font units, used to map the font size to a box height
_GLYPH_BOX = 0.72


@dataclass(frozen=True)
class WeightLogo:
    matrix: np.ndarray  # 4 x L, rows A, C, G, T
    instance_count: int = 1

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != 4 or m.shape[1] < 1:
            raise ValueError(f"logo matrix must be 4 x L, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("logo entries must be finite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def length(self):
        return self.matrix.shape[1]

    def consensus(self):
        return "".join(ALPHABET[i] for i in np.argmax(self.matrix, axis=0))


def weights_to_matrix(w, length):
    w = np.asarray(w, dtype=float)
    if w.shape != (4 * length,):
        raise ValueError(f"expected {4 * length} weights, got {w.shape}")
    return w.reshape(length, 4).T


def average_weights(weights, length):
    """Entrywise mean of per-instance weight vectors, reshaped to 4 x L."""
    weights = [np.asarray(w, dtype=float) for w in weights]
    if not weights:
        raise ValueError("no weight vectors to average")
    for w in weights:
        if w.shape != (4 * length,):
            raise ValueError(f"expected {4 * length} weights, got {w.shape}")
    mean = np.mean(np.stack(weights), axis=0)
    return WeightLogo(weights_to_matrix(mean, length), len(weights))


def _stacks(logo):
    """Per position: ``(letter, weight, y_bottom, height)`` bottom to top.

    Positive weights stack upward from the baseline, negative ones downward;
    in both cases the entry nearest the baseline has the smallest magnitude,
    so the full column reads in ascending weight order from bottom to top.
    """
    peak = 0.0
    for col in logo.matrix.T:
        peak = max(peak, col[col > 0].sum(), -col[col < 0].sum())
    unit = _HALF_HEIGHT / peak if peak > 0 else 0.0
    baseline = _MARGIN + _HALF_HEIGHT
    out = []
    for col in logo.matrix.T:
        items = []
        order = np.argsort(col, kind="stable")
        neg = [i for i in order if col[i] < 0]
        pos = [i for i in order if col[i] > 0]
        # negatives: most negative sits lowest
        depth = -col[neg].sum() * unit if neg else 0.0
        y = baseline + depth
        for i in neg:
            height = -col[i] * unit
            items.append((ALPHABET[i], float(col[i]), y, height))
            y -= height
        y = baseline
        for i in pos:
            height = col[i] * unit
            items.append((ALPHABET[i], float(col[i]), y, height))
            y -= height
        out.append(items)
    return out


def render_svg(logo):
    width = 2 * _MARGIN + _COLUMN_WIDTH * logo.length
    height = 2 * _MARGIN + 2 * _HALF_HEIGHT
    baseline = _MARGIN + _HALF_HEIGHT
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width:.0f}" height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<line x1="{_MARGIN:.0f}" y1="{baseline:.0f}" x2="{width - _MARGIN:.0f}" '
        f'y2="{baseline:.0f}" stroke="#000000" stroke-width="1"/>',
    ]
    for pos, items in enumerate(_stacks(logo)):
        x = _MARGIN + pos * _COLUMN_WIDTH
        lines.append(f'<g class="position" data-pos="{pos + 1}">')
        for letter, weight, bottom, h in items:
            fill = COLORS[letter] if weight > 0 else NEGATIVE_FILL
            # font-size 100 glyph stretched into a box of height h, width of one column
            sy = h / (100.0 * _GLYPH_BOX)
            sx = _COLUMN_WIDTH / 62.0
            lines.append(
                f'<text data-base="{letter}" data-weight="{weight:.6f}" '
                f'data-bottom="{bottom:.4f}" data-height="{h:.4f}" '
                f'transform="translate({x:.4f},{bottom:.4f}) scale({sx:.6f},{sy:.6f})" '
                f'font-family="Arial, Helvetica, sans-serif" font-weight="bold" '
                f'font-size="100" fill="{fill}">{letter}</text>')
        lines.append("</g>")
        lines.append(
            f'<text x="{x + _COLUMN_WIDTH / 2:.1f}" y="{height - 4:.0f}" font-size="10" '
            f'text-anchor="middle" font-family="Arial, Helvetica, sans-serif">{pos + 1}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_logo_tsv(path, logo):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# instances\t{logo.instance_count}\n")
        fh.write("pos\tA\tC\tG\tT\n")
        for pos, col in enumerate(logo.matrix.T, 1):
            fh.write(f"{pos}\t" + "\t".join(f"{v:.6f}" for v in col) + "\n")


def read_logo_tsv(path):
    count = 1
    cols = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# instances"):
                count = int(line.split("\t")[1])
                continue
            if not line or line.startswith("#") or line.startswith("pos"):
                continue
            parts = line.split("\t")
            cols.append([float(v) for v in parts[1:5]])
    return WeightLogo(np.array(cols).T, count)


def emit_weight_logo(logo, path):
    """Write ``<path>`` as SVG and ``<path>`` with a ``.tsv`` suffix as the sidecar.

    Returns both paths.
    """
    svg_path = Path(path)
    if svg_path.suffix != ".svg":
        svg_path = svg_path.with_suffix(".svg")
    tsv_path = svg_path.with_suffix(".tsv")
    svg_path.write_text(render_svg(logo), encoding="utf-8")
    write_logo_tsv(tsv_path, logo)
    return svg_path, tsv_path
