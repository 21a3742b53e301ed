"""Labelled image collections shared by training and the benchmark."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IMAGE_SHAPE = (16, 16, 3)


@dataclass
class LabeledSet:
    images: np.ndarray  # (N, H, W, D)
    labels: np.ndarray  # (N,) int64
    ids: np.ndarray  # (N,) int64 content identities, unique across splits

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, mask_or_idx) -> "LabeledSet":
        return LabeledSet(self.images[mask_or_idx], self.labels[mask_or_idx], self.ids[mask_or_idx])

    def relabel(self, label: int) -> "LabeledSet":
        return LabeledSet(self.images, np.full(len(self.labels), label, dtype=np.int64), self.ids)

    @staticmethod
    def concat(parts: list["LabeledSet"]) -> "LabeledSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            return LabeledSet(np.zeros((0,) + IMAGE_SHAPE), np.zeros(0, np.int64), np.zeros(0, np.int64))
        return LabeledSet(np.concatenate([p.images for p in parts]),
                          np.concatenate([p.labels for p in parts]),
                          np.concatenate([p.ids for p in parts]))

    def save(self, path) -> None:
        # labels and ids ride along as float64 tensors; ids stay below 2**53
        from .numcore import save_tensors
        save_tensors(path, [self.images, self.labels.astype(np.float64), self.ids.astype(np.float64)])

    @classmethod
    def load(cls, path) -> "LabeledSet":
        from .numcore import load_tensors
        images, labels, ids = load_tensors(path)
        return cls(images, labels.astype(np.int64), ids.astype(np.int64))
