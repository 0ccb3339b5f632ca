"""
Minimal static SVG renderings of the report tables.

CSV files are the contract; these plots are a convenience for eyeballing a
run. Built with lxml.etree, no plotting backend needed.
"""
import logging
import math
from pathlib import Path

from lxml import etree

logger = logging.getLogger(__name__)

SVG_NS = "http://www.w3.org/2000/svg"
WIDTH, HEIGHT, MARGIN = 480, 320, 40
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _canvas(title):
    root = etree.Element(f"{{{SVG_NS}}}svg", nsmap={None: SVG_NS}, width=str(WIDTH), height=str(HEIGHT))
    etree.SubElement(root, f"{{{SVG_NS}}}rect", width=str(WIDTH), height=str(HEIGHT), fill="white")
    heading = etree.SubElement(root, f"{{{SVG_NS}}}text", x=str(MARGIN), y=str(MARGIN // 2), fill="black")
    heading.set("font-size", "12")
    heading.text = title
    etree.SubElement(
        root, f"{{{SVG_NS}}}rect",
        x=str(MARGIN), y=str(MARGIN), width=str(WIDTH - 2 * MARGIN), height=str(HEIGHT - 2 * MARGIN),
        fill="none", stroke="black",
    )
    return root


def _scale(low, high, out_low, out_high):
    if high == low:
        high = low + 1.0
    return lambda v: out_low + (v - low) * (out_high - out_low) / (high - low)


def _axis_labels(root, x_range, y_range):
    labels = (
        (MARGIN, HEIGHT - MARGIN + 14, f"{x_range[0]:.3g}"),
        (WIDTH - MARGIN - 30, HEIGHT - MARGIN + 14, f"{x_range[1]:.3g}"),
        (2, HEIGHT - MARGIN, f"{y_range[0]:.3g}"),
        (2, MARGIN + 8, f"{y_range[1]:.3g}"),
    )
    for x, y, text in labels:
        node = etree.SubElement(root, f"{{{SVG_NS}}}text", x=str(x), y=str(y), fill="black")
        node.set("font-size", "9")
        node.text = text


def _write(root, path):
    path = Path(path)
    path.write_bytes(etree.tostring(root, pretty_print=True, xml_declaration=True, encoding="UTF-8"))
    logger.info(f"Wrote {path}")
    return path


def histogram_svg(tables, path, title):
    """
    Overlaid histogram bars.

    Args:
        tables (dict): Series name -> (left, right, count) rows; series share edges.
        path: Output file.
        title (str): Plot title.
    """
    rows = [row for table in tables.values() for row in table]
    root = _canvas(title)
    if rows:
        x_range = (min(r[0] for r in rows), max(r[1] for r in rows))
        y_range = (0.0, float(max(max(r[2] for r in rows), 1)))
        sx = _scale(*x_range, MARGIN, WIDTH - MARGIN)
        sy = _scale(*y_range, HEIGHT - MARGIN, MARGIN)
        for color, (name, table) in zip(PALETTE, tables.items()):
            group = etree.SubElement(root, f"{{{SVG_NS}}}g", fill=color, opacity="0.5")
            group.set("data-series", str(name))
            for left, right, count in table:
                top = sy(count)
                etree.SubElement(
                    group, f"{{{SVG_NS}}}rect",
                    x=f"{sx(left):.2f}", y=f"{top:.2f}",
                    width=f"{max(sx(right) - sx(left), 0.5):.2f}", height=f"{HEIGHT - MARGIN - top:.2f}",
                )
        _axis_labels(root, x_range, y_range)
    return _write(root, path)


def scatter_svg(points, path, title):
    """Scatter plot of (x, y) pairs; non-finite pairs are skipped."""
    finite = [(x, y) for x, y in points if math.isfinite(x) and math.isfinite(y)]
    root = _canvas(title)
    if finite:
        x_range = (min(p[0] for p in finite), max(p[0] for p in finite))
        y_range = (min(p[1] for p in finite), max(p[1] for p in finite))
        sx = _scale(*x_range, MARGIN, WIDTH - MARGIN)
        sy = _scale(*y_range, HEIGHT - MARGIN, MARGIN)
        group = etree.SubElement(root, f"{{{SVG_NS}}}g", fill=PALETTE[0])
        for x, y in finite:
            etree.SubElement(group, f"{{{SVG_NS}}}circle", cx=f"{sx(x):.2f}", cy=f"{sy(y):.2f}", r="2")
        _axis_labels(root, x_range, y_range)
    return _write(root, path)


def curves_svg(curves, path, title, log_x=True):
    """
    Polylines, one per series.

    Args:
        curves (dict): Series name -> list of (x, y) points.
        log_x (bool): Plot x on a log10 axis.
    """
    transform = (lambda v: math.log10(v)) if log_x else (lambda v: v)
    series = {
        name: [(transform(x), y) for x, y in pts if x > 0 or not log_x]
        for name, pts in curves.items()
    }
    flat = [p for pts in series.values() for p in pts]
    root = _canvas(title)
    if flat:
        x_range = (min(p[0] for p in flat), max(p[0] for p in flat))
        y_range = (min(p[1] for p in flat), max(p[1] for p in flat))
        sx = _scale(*x_range, MARGIN, WIDTH - MARGIN)
        sy = _scale(*y_range, HEIGHT - MARGIN, MARGIN)
        for color, (name, pts) in zip(PALETTE * (len(series) // len(PALETTE) + 1), series.items()):
            line = etree.SubElement(
                root, f"{{{SVG_NS}}}polyline",
                points=" ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts),
                fill="none", stroke=color,
            )
            line.set("data-series", str(name))
        _axis_labels(root, x_range, y_range)
    return _write(root, path)
