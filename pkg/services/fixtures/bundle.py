"""
services/fixtures/bundle.py - Write fixture generators and datasets to disk
"""
import logging
from pathlib import Path

import numpy as np

from services.fixtures.affine import affine_fixture
from services.fixtures.manifold import cartoon_manifold, manifold_to_spec
from services.fixtures.mlp import random_mlp_fixture
from services.generator_model import project_to_typical_set, sample_noise, save_spec
from utils.dataset_io import Dataset, save_dataset
from utils.rng_utils import derive_seed, make_rng

logger = logging.getLogger(__name__)

CARTOON_ORDER = ("cyan", "purple", "orange", "red", "green")


def write_fixture_bundle(out_dir, seed=0, affine_samples=20, mlp_targets=50):
    """
    Write the fixture generators and matching datasets.

    Files:
        affine_dim4.json / affine_dim4_samples.evgs: affine 4 -> 8 generator and
            on-manifold samples from latents inside the typical set, split-tagged.
        cartoon.json / cartoon_targets.csv: the cartoon manifold and its five
            named targets (ids follow CARTOON_ORDER).
        mlp_dim64.json / mlp_dim64_targets.evgs: random MLP and uniform targets
            that it generally cannot reproduce.

    Returns:
        dict: File role -> path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}

    affine = affine_fixture(4, 8, derive_seed(seed, 1))
    latents = sample_noise(affine.spec.noise, derive_seed(seed, 2), affine_samples)
    latents = np.stack([project_to_typical_set(affine.spec.noise, z) for z in latents])
    samples = affine.spec.forward(latents)
    splits = tuple("train" if i % 2 == 0 else "test" for i in range(affine_samples))
    written["affine_spec"] = save_spec(affine.spec, out_dir / "affine_dim4.json")
    written["affine_samples"] = save_dataset(Dataset(samples, splits=splits), out_dir / "affine_dim4_samples.evgs")

    manifold, targets = cartoon_manifold()
    written["cartoon_spec"] = save_spec(manifold_to_spec(manifold), out_dir / "cartoon.json")
    cartoon = Dataset(np.stack([targets[name] for name in CARTOON_ORDER]))
    written["cartoon_targets"] = save_dataset(cartoon, out_dir / "cartoon_targets.csv")

    mlp = random_mlp_fixture(64, (96, 128), derive_seed(seed, 3))
    low, high = mlp.output_range
    uniform = low + (high - low) * make_rng(seed, 4).random((mlp_targets, mlp.flat_length))
    written["mlp_spec"] = save_spec(mlp, out_dir / "mlp_dim64.json")
    written["mlp_targets"] = save_dataset(Dataset(uniform), out_dir / "mlp_dim64_targets.evgs")

    for role, path in written.items():
        logger.info(f"Fixture {role}: {path}")
    return written
