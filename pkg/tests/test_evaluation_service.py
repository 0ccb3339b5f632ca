import csv
import json

import numpy as np
import pytest

from services.errors import ConfigError, DatasetError
from services.evaluation_service import (
    STAGE_LIKELIHOOD,
    evaluate_dataset,
    evaluate_sample,
    run_pipeline,
    sample_seed,
    summarize_reports,
)
from services.fixtures import cartoon_manifold, manifold_to_spec, scaling_fixture
from services.generator_model import load_spec
from services.likelihood import estimate_combined
from utils.config_loader import build_config
from utils.dataset_io import Dataset, load_dataset
from utils.report_utils import emit_histogram, format_float

OUTPUT_FILES = ("report.json", "samples.csv", "hist_znorm.csv", "hist_loglik.csv", "scatter.csv")


@pytest.fixture
def shipped(repo_root):
    return repo_root / "fixtures" / "affine_dim4.json", repo_root / "fixtures" / "affine_dim4_samples.csv"


def _run(shipped, out_dir, **overrides):
    generator, dataset = shipped
    overrides.setdefault("isotropic_floors_db", (40.0, 30.0))
    overrides.setdefault("sweep_ids", (0,))
    return run_pipeline(generator, dataset, out_dir=out_dir, seed=7, overrides=overrides)


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def test_affine_pipeline_reconstructs_every_sample(shipped, tmp_path):
    report = _run(shipped, tmp_path)
    for name in OUTPUT_FILES + ("sweep_0.csv", "hist_sigma_bar_40db.csv", "hist_sigma_bar_30db.csv"):
        assert (tmp_path / name).is_file()

    rows = _read_csv(tmp_path / "samples.csv")
    assert [row["sample_id"] for row in rows] == ["0", "1", "2"]
    for row in rows:
        assert row["error"] == ""
        assert float(row["psnr_constrained_db"]) >= 60.0
        assert float(row["psnr_unconstrained_db"]) >= 60.0
        assert float(row["z_norm_sq_constrained"]) <= 4.0 + 1e-9
        assert row["saturated"] == "false"

    document = json.loads((tmp_path / "report.json").read_text())
    assert document["metadata"]["global_seed"] == 7
    assert len(document["metadata"]["spec_hash"]) == 64
    assert "-ln Z" in document["metadata"]["omitted_constant"]
    assert document["aggregates"]["failed_count"] == 0
    assert document["aggregates"]["typical_set"]["constrained"]["outside_fraction"] == 0.0
    assert sorted(document["aggregates"]["most_probable"]) == [0, 1, 2]
    assert report.aggregates["log10_likelihood_means"].keys() == {"all", "train", "test"}


def test_outputs_are_byte_identical_across_runs_and_worker_counts(shipped, tmp_path):
    _run(shipped, tmp_path / "a", workers=1)
    _run(shipped, tmp_path / "b", workers=1)
    _run(shipped, tmp_path / "c", workers=4)
    for name in OUTPUT_FILES + ("sweep_0.csv", "hist_sigma_bar_40db.csv"):
        first = (tmp_path / "a" / name).read_bytes()
        assert first == (tmp_path / "b" / name).read_bytes()
        assert first == (tmp_path / "c" / name).read_bytes()


def test_histograms_recompute_from_the_sample_table(shipped, tmp_path):
    _run(shipped, tmp_path, histogram_bins=7)
    values = [float(row["log10_unnormalized_likelihood"]) for row in _read_csv(tmp_path / "samples.csv")]
    expected = [
        [format_float(left), format_float(right), str(count)]
        for left, right, count in emit_histogram(values, bins=7)
    ]
    table = [
        [row["bin_left"], row["bin_right"], row["count"]]
        for row in _read_csv(tmp_path / "hist_loglik.csv") if row["split"] == "all"
    ]
    assert table == expected

    znorm = _read_csv(tmp_path / "hist_znorm.csv")
    assert {row["series"] for row in znorm} == {"unconstrained", "constrained", "prior"}
    assert sum(int(row["count"]) for row in znorm if row["series"] == "constrained") == 3


def test_records_compose_with_the_standalone_estimator(shipped):
    generator, dataset_path = shipped
    spec = load_spec(generator)
    dataset = load_dataset(dataset_path)
    config = build_config({"seed": 11})
    report = evaluate_dataset(spec, dataset, config)
    for record in report.records:
        expected = estimate_combined(
            spec, record.constrained.z_star, spec.noise, config.likelihood,
            seed=sample_seed(11, record.sample_id, STAGE_LIKELIHOOD),
        )
        assert record.likelihood == expected


def test_constrained_only_runs_skip_the_free_inversion(shipped, tmp_path):
    _run(shipped, tmp_path, run_unconstrained=False)
    rows = _read_csv(tmp_path / "samples.csv")
    assert all(row["psnr_unconstrained_db"] == "" for row in rows)
    assert {row["series"] for row in _read_csv(tmp_path / "hist_znorm.csv")} == {"constrained", "prior"}


def test_setup_errors(shipped):
    spec = load_spec(shipped[0])
    with pytest.raises(DatasetError):
        evaluate_dataset(spec, Dataset(np.zeros((2, 5))), build_config({}))
    with pytest.raises(ConfigError):
        evaluate_dataset(spec, load_dataset(shipped[1]), build_config({"init_scheme": "provided"}))
    with pytest.raises(ConfigError):
        evaluate_dataset(spec, load_dataset(shipped[1]), build_config({"delta": -4.0}))


def test_failed_samples_are_recorded_not_raised(shipped):
    spec = load_spec(shipped[0])
    # a grid starting far above the hit radius fails the schedule for every sample
    config = build_config({"sigma_grid": "10,20"})
    report = evaluate_dataset(spec, load_dataset(shipped[1]), config)
    assert report.aggregates["failed_count"] == 3
    assert all(record.error.startswith("ScheduleError") for record in report.records)
    assert all(record.constrained is not None for record in report.records)


def test_divergence_is_recorded_on_the_sample():
    spec = scaling_fixture(2, 1e200)
    record = evaluate_sample(spec, 5, "test", np.zeros(2), build_config({}))
    assert record.error.startswith("DivergenceError: ")
    assert "iteration 1" in record.error
    assert record.unconstrained is None and record.likelihood is None


def test_summaries_group_reports_by_dimension():
    def report(dim, psnr, loglik):
        return {
            "metadata": {"latent_dim": dim, "reference_log_p_z": -dim * 1.5},
            "records": [{
                "psnr_unconstrained_db": psnr + 5, "psnr_constrained_db": psnr,
                "log_p_z_unconstrained": -dim, "log10_unnormalized_likelihood": loglik,
            }],
        }

    rows = summarize_reports([report(8, 30.0, -2.0), report(4, 40.0, "-inf"), report(8, 20.0, -4.0)])
    assert rows == [(4, 45.0, 40.0, -4.0, -6.0, None), (8, 30.0, 25.0, -8.0, -12.0, -3.0)]
    with pytest.raises(ValueError):
        summarize_reports([])


@pytest.mark.slow
def test_cartoon_pipeline():
    manifold, targets = cartoon_manifold()
    spec = manifold_to_spec(manifold)
    order = ("cyan", "purple", "orange", "red", "green")
    dataset = Dataset(np.stack([targets[name] for name in order]))
    report = evaluate_dataset(spec, dataset, build_config({"restarts": 20, "seed": 3}))
    records = {name: record for name, record in zip(order, report.records)}

    assert records["cyan"].constrained.final_psnr_db >= 60.0
    assert records["cyan"].log10_likelihood > records["purple"].log10_likelihood
    assert records["green"].unconstrained.final_psnr_db >= 40.0
    assert records["green"].constrained.z_star[0] == 0.0
    assert records["green"].constrained.final_psnr_db == pytest.approx(20.0, abs=1e-3)
    for record in report.records:
        assert 0.0 <= record.constrained.z_star[0] <= 1.0
