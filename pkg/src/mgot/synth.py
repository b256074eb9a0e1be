"""Synthetic patch/label embeddings for exercising the alignment path."""

from dataclasses import dataclass

import numpy as np

from ._validation import ConvergenceError
from .graph import EmbeddingSet

EUDERMIC = "eudermic"
NOISE = "noise"
MAX_DRAWS = 100_000


@dataclass(frozen=True, eq=False)
class SyntheticAlignment:
    patches: EmbeddingSet
    labels: EmbeddingSet
    truth: tuple  # (patch_id, label_id or "noise") pairs

    @property
    def noise_index(self):
        return np.array([src == NOISE for _, src in self.truth])


def _unit(x):
    return x / np.linalg.norm(x)


def sample_labels(n, dim, rng, max_cos=0.5, max_draws=MAX_DRAWS):
    """Rejection-sample ``n`` unit vectors with pairwise cosine below ``max_cos``."""
    out = []
    draws = 0
    while len(out) < n:
        if draws >= max_draws:
            raise ConvergenceError(
                f"could only place {len(out)} of {n} labels in {max_draws} draws", iterations=draws
            )
        draws += 1
        x = _unit(rng.standard_normal(dim))
        if all(float(x @ y) < max_cos for y in out):
            out.append(x)
    return np.array(out)


def make_alignment_data(n_patches=64, n_labels=8, dim=16, noise_frac=0.6, seed=0, sigma=0.1):
    """Labels plus an extra ``eudermic`` label, and patches around them.

    Signal patches are a label vector plus isotropic Gaussian noise of scale
    ``sigma``, their label drawn uniformly over all labels (eudermic
    included). Noise patches are uniform random directions.
    """
    if not 0.0 <= noise_frac <= 1.0:
        raise ValueError("noise_frac must lie in [0, 1]")
    if n_patches < 1 or n_labels < 1 or dim < 1:
        raise ValueError("n_patches, n_labels and dim must be positive")
    rng = np.random.default_rng(seed)
    label_ids = [f"label_{k:02d}" for k in range(n_labels)] + [EUDERMIC]
    L = sample_labels(len(label_ids), dim, rng)

    n_noise = int(np.floor(noise_frac * n_patches + 0.5))
    is_noise = np.zeros(n_patches, dtype=bool)
    is_noise[rng.permutation(n_patches)[:n_noise]] = True
    source = rng.integers(0, len(label_ids), size=n_patches)
    gauss = rng.standard_normal((n_patches, dim))

    P = np.empty((n_patches, dim))
    truth = []
    width = len(str(n_patches - 1))
    patch_ids = [f"patch_{i:0{width}d}" for i in range(n_patches)]
    for i in range(n_patches):
        if is_noise[i]:
            P[i] = _unit(gauss[i])
            truth.append((patch_ids[i], NOISE))
        else:
            P[i] = L[source[i]] + sigma * gauss[i]
            truth.append((patch_ids[i], label_ids[source[i]]))
    return SyntheticAlignment(
        EmbeddingSet(patch_ids, P), EmbeddingSet(label_ids, L), tuple(truth)
    )
