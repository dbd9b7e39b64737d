"""Synthetic phone-stamped feature sequences for toy training runs."""

import json
from pathlib import Path

import numpy as np


def make_dataset(
    samples=10,
    num_phones=3,
    feature_size=12,
    min_len=2,
    max_len=4,
    frames_per_phone=(2, 4),
    noise=0.15,
    seed=0,
):
    """List of (features (T, D) float array, phone index list) pairs.

    Each phone gets a fixed random prototype vector; an utterance walks a
    random phone sequence holding each prototype for a few frames.
    """
    rng = np.random.default_rng(seed)
    prototypes = rng.normal(0.0, 1.0, size=(num_phones + 1, feature_size))
    dataset = []
    for _ in range(samples):
        length = int(rng.integers(min_len, max_len + 1))
        phones = [int(rng.integers(1, num_phones + 1)) for _ in range(length)]
        frames = []
        for p in phones:
            hold = int(rng.integers(frames_per_phone[0], frames_per_phone[1] + 1))
            for _ in range(hold):
                frames.append(prototypes[p] + rng.normal(0.0, noise, feature_size))
        dataset.append((np.array(frames), phones))
    return dataset


def save_dataset(dataset, directory):
    """One .npz per sample: features float32 + labels int32."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, (features, labels) in enumerate(dataset):
        np.savez(
            directory / f"sample{i:04d}.npz",
            features=features.astype(np.float32),
            labels=np.asarray(labels, dtype=np.int32),
        )
    meta = {"samples": len(dataset)}
    (directory / "dataset.json").write_text(json.dumps(meta))


def load_dataset(directory):
    directory = Path(directory)
    out = []
    for path in sorted(directory.glob("sample*.npz")):
        blob = np.load(path)
        out.append((blob["features"].astype(np.float64), blob["labels"].tolist()))
    if not out:
        raise FileNotFoundError(f"no sample*.npz files in {directory}")
    return out
