"""Bare-bones SVG line charts. Output depends only on the data, so reruns match byte for byte."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _fmt(v):
    return f"{v:.6g}"


class Chart:
    def __init__(self, title, width=640, height=400, margin=48, equal_aspect=False):
        self.title = title
        self.width, self.height, self.margin = width, height, margin
        self.equal_aspect = equal_aspect
        self.series = []  # (xs, ys, color, style, label)

    def line(self, xs, ys, color, label=None, dashed=False, width=1.5):
        self.series.append((np.asarray(xs, float), np.asarray(ys, float), color, ("line", dashed, width), label))

    def dots(self, xs, ys, color, label=None, radius=2.0):
        self.series.append((np.asarray(xs, float), np.asarray(ys, float), color, ("dots", radius), label))

    def _bounds(self):
        xs = np.concatenate([s[0][np.isfinite(s[0])] for s in self.series])
        ys = np.concatenate([s[1][np.isfinite(s[1])] for s in self.series])
        x0, x1, y0, y1 = xs.min(), xs.max(), ys.min(), ys.max()
        if x1 == x0:
            x0, x1 = x0 - 1, x1 + 1
        if y1 == y0:
            y0, y1 = y0 - 1, y1 + 1
        if self.equal_aspect:
            w = self.width - 2 * self.margin
            h = self.height - 2 * self.margin
            span = max((x1 - x0) / w, (y1 - y0) / h)
            cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
            x0, x1 = cx - span * w / 2, cx + span * w / 2
            y0, y1 = cy - span * h / 2, cy + span * h / 2
        return x0, x1, y0, y1

    def render(self) -> str:
        W, H, M = self.width, self.height, self.margin
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2}" y="{M / 2}" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(self.title)}</text>',
        ]
        if self.series:
            x0, x1, y0, y1 = self._bounds()

            def px(x):
                return M + (x - x0) / (x1 - x0) * (W - 2 * M)

            def py(y):
                return H - M - (y - y0) / (y1 - y0) * (H - 2 * M)

            parts.append(f'<rect x="{M}" y="{M}" width="{W - 2 * M}" height="{H - 2 * M}" fill="none" stroke="#999"/>')
            for label, x, y, anchor in (
                (_fmt(x0), M, H - M + 16, "start"),
                (_fmt(x1), W - M, H - M + 16, "end"),
                (_fmt(y0), M - 4, H - M, "end"),
                (_fmt(y1), M - 4, M + 10, "end"),
            ):
                parts.append(f'<text x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" font-size="10">{label}</text>')
            legend_y = M + 14
            for xs, ys, color, style, label in self.series:
                ok = np.isfinite(xs) & np.isfinite(ys)
                pts = [(px(a), py(b)) for a, b in zip(xs[ok], ys[ok])]
                if style[0] == "line":
                    dash = ' stroke-dasharray="5,3"' if style[1] else ""
                    coords = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in pts)
                    parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="{style[2]}"{dash}/>')
                else:
                    parts += [f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="{style[1]}" fill="{color}"/>' for a, b in pts]
                if label:
                    parts.append(
                        f'<text x="{W - M - 4}" y="{legend_y}" text-anchor="end" font-family="sans-serif" font-size="11" fill="{color}">{escape(label)}</text>'
                    )
                    legend_y += 14
        parts.append("</svg>")
        return "\n".join(parts) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.render())
