"""Appearance palettes, the grid analog of randomized wall and floor textures.

A palette assigns every structural cell type an appearance code. Codes are
rendered into extra one-hot channels next to the structural channels, so a
model that leans on appearance instead of structure fails on unseen
palettes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidArgument

STRUCTURE_TYPES = ("floor", "wall", "kit", "poison", "monster", "ammo")

DEFAULT_PALETTE_COUNT = 100
DEFAULT_TRAIN_FRACTION = 0.9


@dataclass(frozen=True)
class Palette:
    palette_id: int
    codes: tuple[int, ...]


def generate_palettes(count: int, n_codes: int, rng: np.random.Generator) -> list[Palette]:
    """``count`` palettes with pairwise distinct code assignments."""
    if n_codes < 1:
        raise InvalidArgument(f"need at least one appearance channel, got {n_codes}")
    if count > n_codes ** len(STRUCTURE_TYPES):
        raise InvalidArgument(f"cannot draw {count} distinct palettes from {n_codes} appearance codes")
    seen: set[tuple[int, ...]] = set()
    palettes: list[Palette] = []
    while len(palettes) < count:
        codes = tuple(int(c) for c in rng.integers(n_codes, size=len(STRUCTURE_TYPES)))
        if codes in seen:
            continue
        seen.add(codes)
        palettes.append(Palette(len(palettes), codes))
    return palettes


def make_appearance_split(
    n_palettes: int = DEFAULT_PALETTE_COUNT,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    rng: np.random.Generator | None = None,
    *,
    n_codes: int = 4,
) -> tuple[list[Palette], list[Palette]]:
    """Disjoint train and test palettes, each sorted by palette id."""
    if n_palettes < 2:
        raise InvalidArgument(f"a split needs at least two palettes, got {n_palettes}")
    n_train = int(round(n_palettes * train_fraction))
    if n_train <= 0 or n_train >= n_palettes:
        raise InvalidArgument(
            f"train fraction {train_fraction} leaves one side of a {n_palettes}-palette split empty"
        )
    rng = np.random.default_rng(0) if rng is None else rng
    palettes = generate_palettes(n_palettes, n_codes, rng)
    order = rng.permutation(n_palettes)
    train = sorted((palettes[i] for i in order[:n_train]), key=lambda p: p.palette_id)
    test = sorted((palettes[i] for i in order[n_train:]), key=lambda p: p.palette_id)
    return train, test
