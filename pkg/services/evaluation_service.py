"""
services/evaluation_service.py - Batch evaluation of a generator on a dataset

For every sample: unconstrained inversion, constrained inversion, then the
combined likelihood estimate at the constrained reconstruction. Samples run
on a thread pool; records are sorted by sample_id before anything is
written, so outputs do not depend on scheduling or worker count.
"""
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
import hashlib
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from services.errors import ConfigError, DatasetError, LatentAuditError
from services.generator_model import load_spec, log_density, sample_noise, typical_radius_sq
from services.inversion import InversionResult, best_of, invert, typical_set_report
from services.likelihood import LikelihoodEstimate, estimate_combined, estimate_isotropic, sigma_sweep
from utils.config_loader import load_config
from utils.dataset_io import load_dataset
from utils.metrics import threshold_from_psnr
from utils.report_utils import (
    emit_histogram,
    format_float,
    histogram_rows,
    rank_by_likelihood,
    shared_edges,
    write_csv,
    write_json,
)
from utils.rng_utils import derive_seed

logger = logging.getLogger(__name__)

TOOL_NAME = "latentaudit"
TOOL_VERSION = "1.0.0"
OMITTED_CONSTANT_NOTE = (
    "log likelihoods omit the generator-independent constant -ln Z; "
    "only differences between estimates are meaningful"
)

STAGE_UNCONSTRAINED = 1
STAGE_CONSTRAINED = 2
STAGE_LIKELIHOOD = 3
STAGE_SWEEP = 4
STAGE_ISOTROPIC = 5
STAGE_REFERENCE = 6


def sample_seed(global_seed, sample_id, stage, restart=0):
    """Seed of one (sample, stage, restart) stream, independent of the rest of the dataset."""
    return derive_seed(global_seed, sample_id, stage, restart)


def floor_label(floor_db):
    return f"{floor_db:g}"


def _csv_float(value):
    """The float exactly as it appears in the CSV outputs."""
    return float(format_float(value))


@dataclass
class SampleRecord:
    """Per-sample outcome; the result objects stay in memory only."""
    sample_id: int
    split: str
    unconstrained: Optional[InversionResult] = None
    constrained: Optional[InversionResult] = None
    likelihood: Optional[LikelihoodEstimate] = None
    sigma_bar: Dict[float, float] = field(default_factory=dict)
    sweep: Optional[List[Tuple[float, float]]] = None
    error: Optional[str] = None

    @property
    def ok(self):
        return self.error is None

    @property
    def log10_likelihood(self):
        return None if self.likelihood is None else self.likelihood.log10_unnormalized

    def to_row(self, floors=()):
        unc, con, est = self.unconstrained, self.constrained, self.likelihood
        row = {
            "sample_id": self.sample_id,
            "split": self.split,
            "psnr_unconstrained_db": unc.final_psnr_db if unc else None,
            "psnr_constrained_db": con.final_psnr_db if con else None,
            "mse_unconstrained": unc.final_mse if unc else None,
            "mse_constrained": con.final_mse if con else None,
            "z_norm_sq_unconstrained": unc.z_norm_sq if unc else None,
            "z_norm_sq_constrained": con.z_norm_sq if con else None,
            "log_p_z_unconstrained": unc.log_p_z if unc else None,
            "log_p_z_constrained": con.log_p_z if con else None,
            "log_unnormalized": est.log_unnormalized if est else None,
            "log10_unnormalized_likelihood": est.log10_unnormalized if est else None,
            "sigma_used": est.sigma_used if est else None,
            "hits": est.hits if est else None,
            "n_used": est.n_used if est else None,
            "saturated": est.saturated if est else None,
            "iterations_unconstrained": unc.iterations_used if unc else None,
            "iterations_constrained": con.iterations_used if con else None,
        }
        for floor in floors:
            row[f"sigma_bar_{floor_label(floor)}db"] = self.sigma_bar.get(floor)
        row["error"] = self.error
        return row


@dataclass
class EvalReport:
    metadata: dict
    records: List[SampleRecord]
    aggregates: dict
    tables: Dict[str, list]
    sweeps: Dict[int, List[Tuple[float, float]]]
    floors: Tuple[float, ...] = ()

    def rows(self):
        return [r.to_row(self.floors) for r in self.records]

    def to_dict(self):
        return {"metadata": self.metadata, "records": self.rows(), "aggregates": self.aggregates}


def _invert_best(spec, target, config, global_seed, sample_id, stage):
    results = [
        invert(spec, target, config, sample_seed(global_seed, sample_id, stage, r))
        for r in range(config.restarts)
    ]
    return best_of(results)


def evaluate_sample(spec, sample_id, split, target, config):
    """
    Run both inversions and the likelihood estimate for one sample.

    Failures are logged and recorded in the record's error field; whatever
    finished before the failure is kept.
    """
    record = SampleRecord(sample_id=sample_id, split=split)
    grid = config.likelihood.grid()
    try:
        if config.run_unconstrained:
            unconstrained = config.inversion.model_copy(update={"constrained": False})
            record.unconstrained = _invert_best(
                spec, target, unconstrained, config.seed, sample_id, STAGE_UNCONSTRAINED
            )
        constrained = config.inversion.model_copy(update={"constrained": True})
        record.constrained = _invert_best(spec, target, constrained, config.seed, sample_id, STAGE_CONSTRAINED)
        z_center = record.constrained.z_star

        record.likelihood = estimate_combined(
            spec, z_center, spec.noise, config.likelihood, seed=sample_seed(config.seed, sample_id, STAGE_LIKELIHOOD)
        )
        for floor in config.isotropic_floors_db:
            estimate = estimate_isotropic(
                spec, z_center, spec.noise, threshold_from_psnr(floor, spec.peak), config.isotropic_draws,
                sample_seed(config.seed, sample_id, STAGE_ISOTROPIC), sigma_min=grid[0], sigma_max=grid[-1],
                chunk_size=config.likelihood.chunk_size,
            )
            record.sigma_bar[floor] = estimate.sigma_used
        if sample_id in config.sweep_ids:
            record.sweep = sigma_sweep(
                spec, z_center, spec.noise, grid, config.sweep_draws,
                sample_seed(config.seed, sample_id, STAGE_SWEEP), chunk_size=config.likelihood.chunk_size,
            )
    except LatentAuditError as e:
        logger.warning(f"Sample {sample_id} failed: {e}")
        record.error = f"{type(e).__name__}: {e}"
    return record


def _finite(values):
    return [v for v in values if v is not None and math.isfinite(v)]


def _mean(values):
    values = _finite(values)
    return float(np.mean(values)) if values else None


def _znorm_tables(records, spec, config, reference):
    series = {}
    if config.run_unconstrained:
        series["unconstrained"] = [_csv_float(r.unconstrained.z_norm_sq) for r in records if r.unconstrained]
    series["constrained"] = [_csv_float(r.constrained.z_norm_sq) for r in records if r.constrained]
    series = {k: v for k, v in series.items() if v}
    if not series:
        return []
    reference_norms = np.einsum("ij,ij->i", reference, reference)
    edges = shared_edges(*series.values(), reference_norms, bins=config.histogram_bins)
    rows = []
    for name, values in series.items():
        rows += histogram_rows(emit_histogram(values, bin_edges=edges), tag=name)
    rows += histogram_rows(emit_histogram(reference_norms, bin_edges=edges), tag="prior")
    return rows


def _tagged_histograms(records, value_of, bins):
    """Histogram over every record ("all") plus one per split, on shared edges."""
    tagged = [(r.split, value_of(r)) for r in records]
    tagged = [(split, _csv_float(v)) for split, v in tagged if v is not None and math.isfinite(v)]
    if not tagged:
        return [], {}
    everything = [v for _, v in tagged]
    table = emit_histogram(everything, bins=bins)
    edges = [row[0] for row in table] + [table[-1][1]]
    rows = histogram_rows(table, tag="all")
    means = {"all": float(np.mean(everything))}
    for split in ("train", "test"):
        values = [v for s, v in tagged if s == split]
        if values:
            rows += histogram_rows(emit_histogram(values, bin_edges=edges), tag=split)
            means[split] = float(np.mean(values))
    return rows, means


def _aggregate(records, spec, config, reference):
    ok = [r for r in records if r.ok]
    aggregates = {"record_count": len(records), "failed_count": len(records) - len(ok)}
    tables = {}

    typical = {}
    for name in ("unconstrained", "constrained"):
        results = [getattr(r, name) for r in records if getattr(r, name) is not None]
        if results:
            report = typical_set_report(
                results, spec.noise, config.reference_draws, derive_seed(config.seed, STAGE_REFERENCE),
                delta=config.inversion.delta, bins=config.histogram_bins, reference=reference,
            ).to_dict()
            report.pop("znorm_histogram")
            report.pop("reference_histogram")
            typical[name] = report
    aggregates["typical_set"] = typical
    tables["hist_znorm"] = _znorm_tables(records, spec, config, reference)

    rows, means = _tagged_histograms(records, lambda r: r.log10_likelihood, config.histogram_bins)
    tables["hist_loglik"] = rows
    aggregates["log10_likelihood_means"] = means

    tables["scatter"] = [
        (r.sample_id, r.constrained.final_psnr_db, r.likelihood.log10_unnormalized)
        for r in records if r.constrained is not None and r.likelihood is not None
    ]

    ranked = [{"sample_id": r.sample_id, "log10_unnormalized_likelihood": r.log10_likelihood} for r in records]
    top, bottom = rank_by_likelihood(ranked, min(config.rank_k, len(ranked)))
    aggregates["most_probable"] = top
    aggregates["least_probable"] = bottom

    sigma_bar = {}
    for floor in config.isotropic_floors_db:
        label = floor_label(floor)
        values = [r.sigma_bar[floor] for r in records if floor in r.sigma_bar]
        if values:
            tables[f"hist_sigma_bar_{label}db"] = emit_histogram(
                [_csv_float(v) for v in values], bins=config.histogram_bins
            )
            sigma_bar[label] = {"mean": float(np.mean(values)), "count": len(values)}
    aggregates["sigma_bar"] = sigma_bar
    aggregates["mean_psnr_unconstrained_db"] = _mean([r.unconstrained.final_psnr_db for r in records if r.unconstrained])
    aggregates["mean_psnr_constrained_db"] = _mean([r.constrained.final_psnr_db for r in records if r.constrained])
    return aggregates, tables


def _file_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def evaluate_dataset(spec, dataset, config, metadata=None):
    """
    Evaluate every sample of a dataset.

    Returns:
        EvalReport: Records sorted by sample_id plus aggregates.
    """
    if dataset.flat_length != spec.flat_length:
        raise DatasetError(
            f"dataset samples have length {dataset.flat_length}, generator emits {spec.flat_length}"
        )
    if config.inversion.init_scheme == "provided":
        raise ConfigError("init_scheme 'provided' is only available for single-sample inversion")
    if spec.noise.is_gaussian:
        typical_radius_sq(spec.noise, config.inversion.delta)

    jobs = list(zip(dataset.sample_ids, dataset.splits, dataset.samples))
    logger.info(f"Evaluating {len(jobs)} samples with {config.workers} worker(s)")
    records = []
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(evaluate_sample, spec, sid, split, target, config) for sid, split, target in jobs]
        for future in tqdm(as_completed(futures), total=len(futures), disable=not config.progress, desc="samples"):
            records.append(future.result())
    records.sort(key=lambda r: r.sample_id)

    failed = sum(1 for r in records if not r.ok)
    if failed:
        logger.warning(f"{failed} of {len(records)} samples failed; see the error column")

    reference = sample_noise(spec.noise, derive_seed(config.seed, STAGE_REFERENCE), config.reference_draws)
    aggregates, tables = _aggregate(records, spec, config, reference)
    sweeps = {r.sample_id: r.sweep for r in records if r.sweep is not None}
    meta = {
        "tool": TOOL_NAME,
        "tool_version": TOOL_VERSION,
        "global_seed": config.seed,
        "config": config.echo(),
        "latent_dim": spec.latent_dim,
        "flat_length": spec.flat_length,
        "noise": spec.noise.kind,
        "peak": spec.peak,
        "threshold_mse_ceiling": config.likelihood.threshold_for(spec).mse_ceiling,
        "reference_log_p_z": float(np.mean(log_density(spec.noise, reference))),
        "omitted_constant": OMITTED_CONSTANT_NOTE,
        "log_base": "natural for log_unnormalized, 10 for log10_unnormalized_likelihood",
    }
    meta.update(metadata or {})
    return EvalReport(
        metadata=meta, records=records, aggregates=aggregates, tables=tables, sweeps=sweeps,
        floors=tuple(config.isotropic_floors_db),
    )


def write_report(report, out_dir, svg=False):
    """Write report.json, the per-sample CSV and the aggregate CSVs (plus SVGs if asked)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = report.rows()
    header = list(rows[0].keys())
    written = [
        write_json(out_dir / "report.json", report.to_dict()),
        write_csv(out_dir / "samples.csv", header, [[row[k] for k in header] for row in rows]),
        write_csv(out_dir / "hist_znorm.csv", ["series", "bin_left", "bin_right", "count"], report.tables["hist_znorm"]),
        write_csv(out_dir / "hist_loglik.csv", ["split", "bin_left", "bin_right", "count"], report.tables["hist_loglik"]),
        write_csv(
            out_dir / "scatter.csv",
            ["sample_id", "psnr_constrained_db", "log10_unnormalized_likelihood"],
            report.tables["scatter"],
        ),
    ]
    for sample_id, curve in sorted(report.sweeps.items()):
        written.append(write_csv(out_dir / f"sweep_{sample_id}.csv", ["sigma", "psnr_db"], curve))
    for name, table in sorted(report.tables.items()):
        if name.startswith("hist_sigma_bar_"):
            written.append(write_csv(out_dir / f"{name}.csv", ["bin_left", "bin_right", "count"], table))

    if svg:
        from utils.svg_plots import curves_svg, histogram_svg, scatter_svg

        series = {}
        for tag, left, right, count in report.tables["hist_znorm"]:
            series.setdefault(tag, []).append((left, right, count))
        written.append(histogram_svg(series, out_dir / "hist_znorm.svg", "||z*||^2"))
        series = {}
        for tag, left, right, count in report.tables["hist_loglik"]:
            series.setdefault(tag, []).append((left, right, count))
        written.append(histogram_svg(series, out_dir / "hist_loglik.svg", "log10 unnormalized likelihood"))
        written.append(scatter_svg(
            [(psnr, loglik) for _, psnr, loglik in report.tables["scatter"]],
            out_dir / "scatter.svg", "PSNR (dB) vs log10 likelihood",
        ))
        if report.sweeps:
            written.append(curves_svg(
                {str(k): v for k, v in sorted(report.sweeps.items())}, out_dir / "sweeps.svg", "PSNR vs sigma"
            ))
    return written


def run_pipeline(generator_path, dataset_path, config_path=None, out_dir="out", seed=None, overrides=None):
    """
    Load inputs, evaluate every sample and write all outputs.

    Args:
        generator_path: Generator spec file.
        dataset_path: EVGS or CSV dataset.
        config_path: Optional KEY=VALUE config file.
        out_dir: Output directory.
        seed (int): Global seed; overrides the config file.
        overrides (dict): Further config overrides (CLI flags).

    Returns:
        EvalReport: The report that was written.

    Raises:
        LatentAuditError: Setup failures (unreadable inputs, bad config, shape mismatch).
    """
    overrides = dict(overrides or {})
    if seed is not None:
        overrides["seed"] = seed
    config = load_config(config_path, overrides)
    spec = load_spec(generator_path)
    dataset = load_dataset(dataset_path)
    report = evaluate_dataset(
        spec, dataset, config,
        metadata={"spec_hash": _file_hash(generator_path), "dataset_hash": _file_hash(dataset_path)},
    )
    write_report(report, out_dir, svg=config.svg)
    logger.info(
        f"Evaluated {len(report.records)} samples "
        f"({report.aggregates['failed_count']} failed), outputs in {out_dir}"
    )
    return report


def summarize_reports(reports):
    """
    Collapse report.json payloads into one row per latent dimension.

    Args:
        reports (list): Parsed report.json documents.

    Returns:
        list: Rows (latent_dim, mean PSNR unconstrained, mean PSNR constrained,
        mean log p(z*) unconstrained, reference log p(z), mean log10 likelihood),
        sorted by latent_dim.
    """
    if not reports:
        raise ValueError("no reports to summarize")
    grouped = {}
    for report in reports:
        grouped.setdefault(int(report["metadata"]["latent_dim"]), []).append(report)

    def column(group, key):
        values = []
        for report in group:
            for record in report["records"]:
                value = record.get(key)
                if isinstance(value, (int, float)) and not isinstance(value, bool):
                    values.append(float(value))
        return _mean(values)

    rows = []
    for dim in sorted(grouped):
        group = grouped[dim]
        rows.append((
            dim,
            column(group, "psnr_unconstrained_db"),
            column(group, "psnr_constrained_db"),
            column(group, "log_p_z_unconstrained"),
            _mean([float(r["metadata"]["reference_log_p_z"]) for r in group]),
            column(group, "log10_unnormalized_likelihood"),
        ))
    return rows
