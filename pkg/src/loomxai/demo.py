"""Deterministic synthetic datasets for demos and acceptance runs.

Each class draws sentences from its own disjoint token pool, so the toy
classifier separates classes by construction and end-to-end checks have a
known answer.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from random import Random
from typing import Any

from . import wire
from .dataset import TextDataset, ingest

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


class BadConfig(Exception):
    pass


@dataclass(frozen=True)
class DemoConfig:
    n_records: int = 200
    classes: tuple[str, ...] = ("pos", "neg")
    seed: int = 7
    vocab_size: int = 30  # tokens per class

    def validate(self) -> None:
        if self.n_records < 1:
            raise BadConfig("n_records must be >= 1")
        if not self.classes:
            raise BadConfig("need at least one class")
        if len(set(self.classes)) != len(self.classes):
            raise BadConfig("class names must be unique")
        if self.vocab_size < 1:
            raise BadConfig("vocab_size must be >= 1")


def class_pools(config: DemoConfig) -> dict[str, list[str]]:
    """Per-class token pools, disjoint across classes, fixed by the seed."""
    config.validate()
    rng = Random(config.seed)
    taken: set[str] = set()
    pools: dict[str, list[str]] = {}
    for label in config.classes:
        pool = []
        while len(pool) < config.vocab_size:
            word = "".join(
                rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(rng.randint(2, 4))
            )
            if word in taken:
                continue
            taken.add(word)
            pool.append(word)
        pools[label] = pool
    return pools


def demo_rows(config: DemoConfig) -> list[dict[str, Any]]:
    """Labeled rows; labels drawn round-robin over the configured classes."""
    pools = class_pools(config)
    rng = Random(config.seed + 1)
    pad = max(1, len(str(config.n_records - 1)))
    rows = []
    for i in range(config.n_records):
        label = config.classes[i % len(config.classes)]
        words = rng.choices(pools[label], k=rng.randint(3, 8))
        rows.append(
            {
                "id": str(i).zfill(pad),
                "text": " ".join(words),
                "label": label,
                "words": len(words),
            }
        )
    return rows


def demo_data(config: DemoConfig) -> TextDataset:
    return ingest(demo_rows(config))


def write_demo_jsonl(config: DemoConfig, path: os.PathLike | str) -> TextDataset:
    """Write the rows as canonical jsonl; same seed, byte-identical file."""
    rows = demo_rows(config)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(wire.encode_value(row) + "\n")
    return ingest(rows)
