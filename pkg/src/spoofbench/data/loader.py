"""Batching stage: fixed-shape waveform batches from utterance records.

The loader is deliberately stateless about randomness: the shuffle
permutation for epoch ``e`` and the augmentation/crop stream for item ``i``
are both derived from ``(seed, e, i)``. Two loaders built with the same
seed therefore produce identical batch sequences, and an interrupted run
can fast-forward to any (epoch, batch) position exactly.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import DataError
from .augment import apply_policy, build_augmentations
from .transform import transform
from .wavio import read_wav

_PERM_STREAM = 101
_ITEM_STREAM = 202


def derive_rng(seed, *key):
    """Independent numpy Generator for a (seed, *key) coordinate."""
    return np.random.default_rng([int(seed)] + [int(k) for k in key])


@dataclass
class AudioBatch:
    """Fixed-length waveform block with labels and utterance ids."""

    waveforms: np.ndarray  # [batch, samples] float32
    labels: Optional[np.ndarray]  # [batch] int64, bonafide=1 / spoof=0
    utt_ids: list

    def __len__(self):
        return self.waveforms.shape[0]


class BatchLoader:
    """Yields AudioBatch objects over one epoch at a time.

    Augmentation runs only when a policy is supplied, which the config
    layer does for training loaders alone; validation and test loaders are
    augmentation-free and fully deterministic given the table.
    """

    def __init__(
        self,
        records,
        transform_params,
        policy=None,
        batch_size=32,
        shuffle=False,
        workers=1,
        seed=0,
        train=False,
    ):
        if not records:
            raise DataError("loader needs a non-empty record list")
        if batch_size < 1:
            raise DataError(f"batch_size must be >= 1, got {batch_size}")
        if policy is not None and not train:
            raise DataError("augmentation policies are only valid on training loaders")
        self.records = list(records)
        self.transform_params = transform_params
        self.policy = policy
        self.augmentations = build_augmentations(policy)
        self.batch_size = int(batch_size)
        self.shuffle = bool(shuffle)
        self.workers = max(1, int(workers))
        self.seed = int(seed)
        self.train = bool(train)
        self.has_labels = all(r.label is not None for r in self.records)

    def __len__(self):
        return -(-len(self.records) // self.batch_size)  # ceil(N / B)

    num_batches = property(__len__)

    def verify_files(self):
        """Fail fast if any referenced audio file is missing."""
        for rec in self.records:
            if not Path(rec.audio_path).exists():
                raise DataError(
                    f"{rec.utt_id}: audio file not found: {rec.audio_path}"
                )

    def _epoch_order(self, epoch):
        if not self.shuffle:
            return np.arange(len(self.records))
        return derive_rng(self.seed, _PERM_STREAM, epoch).permutation(len(self.records))

    def _load_item(self, record_index, epoch, position):
        rec = self.records[record_index]
        rng = derive_rng(self.seed, _ITEM_STREAM, epoch, position)
        try:
            wave, rate = read_wav(rec.audio_path)
            wave = transform(wave, rate, self.transform_params, rng=rng, train=self.train)
            if self.train and self.policy is not None:
                wave = apply_policy(wave, self.policy, self.augmentations, rng)
        except DataError:
            raise
        except Exception as exc:
            raise DataError(f"{rec.utt_id}: failed to load/transform: {exc}") from exc
        return wave

    def iter_epoch(self, epoch=0, start_batch=0):
        """Iterate one epoch's batches, optionally resuming mid-epoch."""
        order = self._epoch_order(epoch)
        n = len(order)
        for b in range(start_batch, len(self)):
            lo, hi = b * self.batch_size, min((b + 1) * self.batch_size, n)
            indices = order[lo:hi]
            positions = range(lo, hi)
            if self.workers > 1:
                with ThreadPoolExecutor(max_workers=self.workers) as pool:
                    waves = list(
                        pool.map(lambda ip: self._load_item(ip[0], epoch, ip[1]),
                                 zip(indices, positions))
                    )
            else:
                waves = [self._load_item(i, epoch, p) for i, p in zip(indices, positions)]
            recs = [self.records[i] for i in indices]
            labels = None
            if self.has_labels:
                labels = np.asarray([r.label_index for r in recs], dtype=np.int64)
            yield AudioBatch(
                waveforms=np.stack(waves).astype(np.float32),
                labels=labels,
                utt_ids=[r.utt_id for r in recs],
            )

    def __iter__(self):
        return self.iter_epoch(0)


def make_loader(records, transform_params, policy=None, loader_params=None,
                seed=0, train=False):
    """Convenience constructor matching the config section layout."""
    loader_params = loader_params or {}
    return BatchLoader(
        records,
        transform_params,
        policy=policy,
        batch_size=loader_params.get("batch_size", 32),
        shuffle=loader_params.get("shuffle", train),
        workers=loader_params.get("workers", 1),
        seed=seed,
        train=train,
    )
