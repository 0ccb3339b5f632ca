"""
Report helpers: histograms, likelihood rankings and deterministic number
formatting for CSV / JSON outputs.
"""
import csv
import json
import logging
import math
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

CSV_DIGITS = 10
JSON_DIGITS = 12


def emit_histogram(values, bins=None, bin_edges=None):
    """
    Histogram with left-closed, right-open bins; the last bin is right-closed.

    Args:
        values: Non-empty sequence of finite values.
        bins (int): Number of equal-width bins spanning the values.
        bin_edges: Explicit increasing edges (overrides bins).

    Returns:
        list: (bin_left, bin_right, count) tuples.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ValueError("histogram needs at least one value")
    if bin_edges is None:
        if bins is None or bins < 1:
            raise ValueError(f"bins must be at least 1, got {bins}")
        counts, edges = np.histogram(values, bins=int(bins))
    else:
        edges = np.asarray(bin_edges, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin_edges must be a strictly increasing sequence of at least two edges")
        counts, edges = np.histogram(values, bins=edges)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))]


def shared_edges(*groups, bins=50):
    """Equal-width edges spanning every value of every group."""
    merged = np.concatenate([np.asarray(g, dtype=np.float64).reshape(-1) for g in groups])
    low, high = float(np.min(merged)), float(np.max(merged))
    if low == high:
        low, high = low - 0.5, high + 0.5
    return np.linspace(low, high, int(bins) + 1)


def _rank_key(record):
    value = record["log10_unnormalized_likelihood"]
    if value is None or not math.isfinite(value):
        # -inf sentinels and missing estimates sort after every finite value
        return (1, 0.0, record["sample_id"])
    return (0, -value, record["sample_id"])


def rank_by_likelihood(records, k):
    """
    Top-k and bottom-k sample ids by log10 likelihood.

    Records are sorted by likelihood descending, ties by sample_id ascending,
    with -inf (or missing) likelihoods last.

    Returns:
        tuple: (top_k ids, bottom_k ids); bottom_k is listed least probable first.
    """
    if k > len(records):
        raise ValueError(f"k={k} exceeds the {len(records)} records")
    ordered = sorted(records, key=_rank_key)
    ids = [r["sample_id"] for r in ordered]
    top = ids[:k]
    bottom = list(reversed(ids[len(ids) - k:])) if k else []
    return top, bottom


def format_float(value, digits=CSV_DIGITS):
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{digits}g}"


def jsonable(value):
    """Round floats to JSON_DIGITS significant digits; non-finite floats become strings."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return format_float(value)
        return float(f"{value:.{JSON_DIGITS}g}")
    return value


def write_json(path, payload):
    path = Path(path)
    path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def write_csv(path, header, rows):
    """Write rows to CSV, formatting floats with a fixed number of significant digits."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.info(f"Wrote {path}")
    return path


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if value is None:
        return ""
    return value


def histogram_rows(table, tag=None):
    if tag is None:
        return [(left, right, count) for left, right, count in table]
    return [(tag, left, right, count) for left, right, count in table]
