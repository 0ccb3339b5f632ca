"""
app.py - Latent Audit command-line entry point

Evaluates a generator against a dataset: latent inversion with and without
the typical-set constraint, Monte Carlo marginal likelihood of the
reconstructions, and figure-ready report tables.

Subcommands: invert, likelihood, evaluate, sweep, fixtures, compare.
Exit codes: 0 success, 1 setup error, 2 usage error.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from services.errors import LatentAuditError
from services.evaluation_service import (
    STAGE_CONSTRAINED,
    STAGE_LIKELIHOOD,
    STAGE_SWEEP,
    run_pipeline,
    sample_seed,
    summarize_reports,
)
from services.fixtures import write_fixture_bundle
from services.generator_model import load_spec
from services.inversion import invert
from services.likelihood import (
    estimate_combined,
    estimate_counting,
    estimate_direct,
    estimate_isotropic,
    sigma_sweep,
)
from utils.config_loader import load_config
from utils.dataset_io import load_dataset
from utils.report_utils import jsonable, write_csv

logger = logging.getLogger(__name__)


def configure_logging(verbose=False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )


def _emit(payload):
    print(json.dumps(jsonable(payload), indent=2, sort_keys=True))


def _overrides(args):
    overrides = {}
    if getattr(args, "psnr_threshold_db", None) is not None:
        overrides["psnr_threshold_db"] = args.psnr_threshold_db
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if getattr(args, "run_unconstrained", None) is not None:
        overrides["run_unconstrained"] = args.run_unconstrained
    if getattr(args, "isotropic_floor", None):
        overrides["isotropic_floors_db"] = tuple(args.isotropic_floor)
    if getattr(args, "sweep_id", None):
        overrides["sweep_ids"] = tuple(args.sweep_id)
    if getattr(args, "svg", False):
        overrides["svg"] = True
    if getattr(args, "progress", False):
        overrides["progress"] = True
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return overrides


def _load_single(args):
    """Generator, config and the selected sample of a single-sample command."""
    config = load_config(args.config, _overrides(args))
    spec = load_spec(args.generator)
    dataset = load_dataset(args.dataset)
    if not 0 <= args.index < len(dataset):
        raise LatentAuditError(f"--index {args.index} is outside the dataset (0..{len(dataset) - 1})")
    return spec, config, dataset.sample_ids[args.index], dataset.sample(args.index)


def _reconstruct(spec, config, sample_id, target):
    constrained = config.inversion.model_copy(update={"constrained": True})
    return invert(spec, target, constrained, sample_seed(config.seed, sample_id, STAGE_CONSTRAINED))


def cmd_invert(args):
    spec, config, sample_id, target = _load_single(args)
    inversion = config.inversion.model_copy(update={"constrained": not args.unconstrained})
    result = invert(spec, target, inversion, sample_seed(config.seed, sample_id, STAGE_CONSTRAINED))
    _emit({"sample_id": sample_id, **result.to_dict(include_trace=args.trace)})
    return 0


def cmd_likelihood(args):
    spec, config, sample_id, target = _load_single(args)
    reconstruction = _reconstruct(spec, config, sample_id, target)
    seed = sample_seed(config.seed, sample_id, STAGE_LIKELIHOOD)
    threshold = config.likelihood.threshold_for(spec)
    z_center = reconstruction.z_star

    if args.estimator == "combined":
        estimate = estimate_combined(spec, z_center, spec.noise, config.likelihood, seed=seed)
    elif args.estimator == "direct":
        estimate = estimate_direct(spec, reconstruction.x_star, spec.noise, threshold, args.draws, seed)
    elif args.estimator == "isotropic":
        grid = config.likelihood.grid()
        estimate = estimate_isotropic(
            spec, z_center, spec.noise, threshold, args.draws, seed, sigma_min=grid[0], sigma_max=grid[-1]
        )
    else:
        if args.sigma is None:
            raise LatentAuditError("the counting estimator needs --sigma")
        estimate = estimate_counting(spec, z_center, spec.noise, threshold, args.sigma, args.draws, seed)

    _emit({
        "sample_id": sample_id,
        "psnr_constrained_db": reconstruction.final_psnr_db,
        **estimate.to_dict(),
    })
    return 0


def cmd_sweep(args):
    spec, config, sample_id, target = _load_single(args)
    reconstruction = _reconstruct(spec, config, sample_id, target)
    curve = sigma_sweep(
        spec, reconstruction.z_star, spec.noise, config.likelihood.grid(), args.draws,
        sample_seed(config.seed, sample_id, STAGE_SWEEP),
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / f"sweep_{sample_id}.csv", ["sigma", "psnr_db"], curve)
    return 0


def cmd_evaluate(args):
    run_pipeline(args.generator, args.dataset, args.config, args.out, overrides=_overrides(args))
    return 0


def cmd_fixtures(args):
    written = write_fixture_bundle(args.out, seed=args.seed or 0)
    _emit({role: str(path) for role, path in written.items()})
    return 0


def cmd_compare(args):
    reports = []
    for path in args.reports:
        try:
            reports.append(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as e:
            raise LatentAuditError(f"cannot read report {path}: {e}") from e
    rows = summarize_reports(reports)
    write_csv(
        args.out,
        [
            "latent_dim", "mean_psnr_unconstrained_db", "mean_psnr_constrained_db",
            "mean_log_p_z_unconstrained", "reference_log_p_z", "mean_log10_likelihood",
        ],
        rows,
    )
    return 0


def _add_single_sample_args(parser):
    parser.add_argument("--generator", required=True, help="generator spec file (JSON)")
    parser.add_argument("--dataset", required=True, help="dataset file (EVGS or CSV)")
    parser.add_argument("--index", type=int, default=0, help="row of the sample to use")
    parser.add_argument("--config", help="KEY=VALUE config file")
    parser.add_argument("--seed", type=int, help="global seed")
    parser.add_argument("--psnr-threshold-db", type=float, help="likelihood hit threshold as a PSNR floor")


def build_parser():
    parser = argparse.ArgumentParser(prog="latentaudit", description="Generator inversion and likelihood evaluation")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("invert", help="invert one sample and print the result")
    _add_single_sample_args(p)
    p.add_argument("--unconstrained", action="store_true", help="drop the typical-set constraint")
    p.add_argument("--trace", action="store_true", help="include the objective trace")
    p.set_defaults(handler=cmd_invert)

    p = sub.add_parser("likelihood", help="likelihood of one sample's constrained reconstruction")
    _add_single_sample_args(p)
    p.add_argument("--estimator", choices=("combined", "direct", "isotropic", "counting"), default="combined")
    p.add_argument("--sigma", type=float, help="perturbation scale for the counting estimator")
    p.add_argument("--draws", type=int, default=10000, help="draws for direct/isotropic/counting")
    p.set_defaults(handler=cmd_likelihood)

    p = sub.add_parser("sweep", help="PSNR of perturbed reconstructions across the sigma grid")
    _add_single_sample_args(p)
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--out", default="out")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("evaluate", help="full pipeline over a dataset")
    p.add_argument("--generator", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--config")
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--constrained-only", dest="run_unconstrained", action="store_false", default=None)
    mode.add_argument("--both", dest="run_unconstrained", action="store_true")
    p.add_argument("--psnr-threshold-db", type=float)
    p.add_argument("--isotropic-floor", type=float, action="append", help="PSNR floor for a sigma-bar histogram")
    p.add_argument("--sweep-id", type=int, action="append", help="sample id to write a sigma sweep for")
    p.add_argument("--svg", action="store_true", help="also write SVG quick-plots")
    p.add_argument("--progress", action="store_true", help="progress bar on stderr")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("fixtures", help="write the fixture generators and datasets")
    p.add_argument("--out", default="fixtures_out")
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_fixtures)

    p = sub.add_parser("compare", help="PSNR and log p(z*) against latent dimension")
    p.add_argument("reports", nargs="+", help="report.json files")
    p.add_argument("--out", default="dim_curve.csv")
    p.set_defaults(handler=cmd_compare)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except (LatentAuditError, OSError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
