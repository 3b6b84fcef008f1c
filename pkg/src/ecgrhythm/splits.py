"""Cross-validation splits and class rebalancing for labeled chunks.

Folds are stratified by dealing each class's shuffled members round-robin,
so per-class fold sizes differ by at most one. Oversampling extends each
class id list with seeded resampling until all classes match the largest.
"""

from __future__ import annotations

from dataclasses import dataclass

from .autodiff import Rng
from .errors import ClassTooSmall
from .records import Chunk, RhythmClass


@dataclass(frozen=True)
class DatasetSplit:
    fold_index: int
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


def ids_by_class(chunks: list[Chunk]) -> dict[RhythmClass, list[str]]:
    out: dict[RhythmClass, list[str]] = {}
    for c in chunks:
        out.setdefault(c.label, []).append(c.chunk_id)
    return out


def stratified_kfold(chunks: list[Chunk], k: int = 5, seed: int = 0) -> list[DatasetSplit]:
    """Deal each class round-robin into k folds; fold f tests on its f-th parts."""
    if k < 2:
        raise ClassTooSmall(f"need k >= 2 folds, got {k}")
    grouped = ids_by_class(chunks)
    for label, ids in grouped.items():
        if len(ids) < k:
            raise ClassTooSmall(
                f"class {label.name} has {len(ids)} chunks, fewer than k={k}")
    rng = Rng(seed)
    fold_tests: list[list[str]] = [[] for _ in range(k)]
    for label in sorted(grouped):
        ids = grouped[label]
        order = rng.split(int(label)).permutation(len(ids))
        for pos, idx in enumerate(order):
            fold_tests[pos % k].append(ids[idx])
    all_ids = [c.chunk_id for c in chunks]
    splits = []
    for f in range(k):
        test = set(fold_tests[f])
        train = tuple(i for i in all_ids if i not in test)
        splits.append(DatasetSplit(fold_index=f, train_ids=train,
                                   test_ids=tuple(fold_tests[f])))
    return splits


def oversample(chunk_ids_by_class: dict[RhythmClass, list[str]], seed: int = 0) -> list[str]:
    """Equalize class counts by resampling with replacement; originals kept."""
    counts = {label: len(ids) for label, ids in chunk_ids_by_class.items() if ids}
    if not counts:
        raise ClassTooSmall("no classes to oversample")
    target = max(counts.values())
    rng = Rng(seed)
    out: list[str] = []
    for label in sorted(chunk_ids_by_class):
        ids = chunk_ids_by_class[label]
        if not ids:
            continue
        out.extend(ids)
        deficit = target - len(ids)
        if deficit > 0:
            picks = rng.split(int(label)).choice(len(ids), size=deficit, replace=True)
            out.extend(ids[i] for i in picks)
    return out
