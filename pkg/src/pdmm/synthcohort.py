"""Seeded synthetic multimodal cohort generator.

Each patient has a true stage observed through two independent noisy views:
the symptom features encode view A, the volume (sphere radius) encodes
view B. A view equals the true stage with probability 1 - view_flip_prob,
otherwise a uniformly chosen valid neighbor stage. The independence of the
two channels is what makes fusion more informative than either modality.
"""
import os
from dataclasses import dataclass, field

import numpy as np

from . import canonical
from .imaging import Volume, volume_write
from .rng import RngStream
from .tabular import FeatureTable, N_STAGES, save_feature_table

GENERATOR_VERSION = 1

# Table-3-shaped stage proportions (counts 5/31/146/12/2 out of 196)
PPMI_COUNTS = (5, 31, 146, 12, 2)


class CohortSpecError(ValueError):
    pass


@dataclass(frozen=True)
class CohortSpec:
    n_patients: int
    distribution: str = "balanced"  # "balanced" | "ppmi"
    n_informative_features: int = 47
    n_distractors: int = 27
    n_duplicate_pairs: int = 10
    view_flip_prob: float = 0.15
    volume_dims: tuple = (32, 32, 32)
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 1:
            raise CohortSpecError("n_patients must be >= 1")
        if self.distribution not in ("balanced", "ppmi"):
            raise CohortSpecError(f"unknown distribution {self.distribution!r}")
        if not 0 <= self.view_flip_prob <= 1:
            raise CohortSpecError("view_flip_prob must be in [0, 1]")
        if min(self.volume_dims) < 1 or len(self.volume_dims) != 3:
            raise CohortSpecError("volume_dims must be three positive integers")

    @property
    def n_features(self):
        return self.n_informative_features + self.n_distractors + 2 * self.n_duplicate_pairs

    def to_json_dict(self):
        return {
            "n_patients": self.n_patients,
            "distribution": self.distribution,
            "n_informative_features": self.n_informative_features,
            "n_distractors": self.n_distractors,
            "n_duplicate_pairs": self.n_duplicate_pairs,
            "view_flip_prob": self.view_flip_prob,
            "volume_dims": list(self.volume_dims),
            "seed": self.seed,
        }


def stage_histogram(spec: CohortSpec):
    """Per-stage patient counts for the requested distribution."""
    n = spec.n_patients
    if spec.distribution == "balanced":
        base = n // N_STAGES
        counts = [base] * N_STAGES
        for s in range(n - base * N_STAGES):
            counts[s] += 1
        return counts
    total = sum(PPMI_COUNTS)
    raw = [n * c / total for c in PPMI_COUNTS]
    counts = [int(np.floor(x)) for x in raw]
    remainders = sorted(range(N_STAGES), key=lambda s: (raw[s] - counts[s], -s), reverse=True)
    for s in remainders[: n - sum(counts)]:
        counts[s] += 1
    return counts


def _flip_view(stage, flip_prob, rng):
    if rng.random() < 1 - flip_prob:
        return stage
    neighbors = [v for v in (stage - 1, stage + 1) if 0 <= v < N_STAGES]
    return int(neighbors[rng.integers(0, len(neighbors))])


def _feature_names(spec):
    names = [f"inf{j:03d}" for j in range(spec.n_informative_features)]
    names += [f"dis{j:03d}" for j in range(spec.n_distractors)]
    for p in range(spec.n_duplicate_pairs):
        names += [f"dup{p:03d}a", f"dup{p:03d}b"]
    return names


def synthesize_volume(spec: CohortSpec, patient_index: int, view_b: int,
                      streams: RngStream) -> Volume:
    """Noisy background plus a centered sphere whose radius grows with view B."""
    rng = streams.substream(f"volumes.{patient_index}")
    dims = spec.volume_dims
    voxels = rng.normal(0.0, 0.1, size=dims)
    radius = 3.0 + 1.5 * view_b
    centers = [d // 2 for d in dims]
    grids = np.ogrid[: dims[0], : dims[1], : dims[2]]
    dist2 = sum((g - c) ** 2 for g, c in zip(grids, centers))
    voxels[dist2 <= radius**2] += 1.0
    return Volume(voxels.astype(np.float32))


def generate_cohort(spec: CohortSpec, out_dir):
    """Write features.csv, one vol_<id>.mvol per patient, and manifest.json.

    Returns the manifest dict. Byte-deterministic for a given spec."""
    os.makedirs(out_dir, exist_ok=True)
    streams = RngStream(spec.seed)
    label_rng = streams.substream("labels")
    feat_rng = streams.substream("features")

    counts = stage_histogram(spec)
    stages = np.repeat(np.arange(N_STAGES), counts)
    stages = stages[label_rng.permutation(spec.n_patients)]
    ids = [f"p{i:04d}" for i in range(1, spec.n_patients + 1)]

    view_a = [_flip_view(int(s), spec.view_flip_prob, label_rng) for s in stages]
    view_b = [_flip_view(int(s), spec.view_flip_prob, label_rng) for s in stages]

    coef_inf = feat_rng.uniform(0.5, 1.5, size=spec.n_informative_features)
    coef_dup = feat_rng.uniform(0.5, 1.5, size=spec.n_duplicate_pairs)

    rows = np.empty((spec.n_patients, spec.n_features))
    for i in range(spec.n_patients):
        informative = coef_inf * view_a[i] + feat_rng.normal(0.0, 0.5, spec.n_informative_features)
        distractors = feat_rng.normal(0.0, 1.0, spec.n_distractors)
        dup_base = coef_dup * view_a[i] + feat_rng.normal(0.0, 0.5, spec.n_duplicate_pairs)
        dup_twin = dup_base + feat_rng.normal(0.0, 0.01, spec.n_duplicate_pairs)
        pairs = np.empty(2 * spec.n_duplicate_pairs)
        pairs[0::2] = dup_base
        pairs[1::2] = dup_twin
        rows[i] = np.concatenate([informative, distractors, pairs])

    table = FeatureTable(tuple(ids), tuple(int(s) for s in stages), tuple(_feature_names(spec)), rows)
    save_feature_table(table, os.path.join(out_dir, "features.csv"))

    patients = []
    for i, pid in enumerate(ids):
        volume = synthesize_volume(spec, i, view_b[i], streams)
        filename = f"vol_{pid}.mvol"
        volume_write(volume, os.path.join(out_dir, filename))
        patients.append({"id": pid, "stage": int(stages[i]), "volume": filename})

    return write_manifest(spec, out_dir, patients)


def write_manifest(spec: CohortSpec, out_dir, patients):
    manifest = {
        "generator_version": GENERATOR_VERSION,
        "spec": spec.to_json_dict(),
        "patients": patients,
    }
    canonical.dump_file(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest
