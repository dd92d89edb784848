"""CTC phoneme vocabulary: symbol <-> id mapping with the blank fixed at id 0.

The vocabulary is file-driven.  A vocab file is UTF-8 text with one symbol
per line; ``#`` starts a comment and blank lines are ignored.  Line order
defines ids 1..N, and id 0 is always the CTC blank (never listed in the
file).  The shipped default is the 39-phoneme CMU ARPAbet set plus SIL.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

from .errors import DataError

BLANK_ID = 0
SIL = "SIL"


@dataclass(frozen=True)
class Vocabulary:
    """Immutable phoneme inventory.

    ``symbols[i]`` has id ``i + 1``; the blank occupies id 0 and is not a
    member of ``symbols``.
    """

    symbols: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        seen = {}
        for pos, sym in enumerate(self.symbols):
            if not sym:
                raise DataError("empty symbol in vocabulary")
            if not sym.isascii() or sym != sym.upper() or any(c.isspace() for c in sym):
                raise DataError(f"symbol {sym!r} is not uppercase ASCII")
            if sym in seen:
                raise DataError(f"duplicate symbol {sym!r} in vocabulary")
            seen[sym] = pos + 1
        object.__setattr__(self, "_index", seen)

    @property
    def size(self) -> int:
        """Number of CTC classes including the blank."""
        return 1 + len(self.symbols)

    @property
    def blank_id(self) -> int:
        return BLANK_ID

    @property
    def sil_id(self) -> int | None:
        return self._index.get(SIL)

    def id_of(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise DataError(f"unknown symbol {symbol}") from None

    def symbol_of(self, token_id: int) -> str:
        if not 1 <= token_id < self.size:
            raise DataError(f"token id {token_id} outside 1..{self.size - 1}")
        return self.symbols[token_id - 1]


def load_vocab(path) -> Vocabulary:
    """Load a vocabulary file; duplicates and empty files are data errors."""
    symbols = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            text = line.split("#", 1)[0].strip()
            if text:
                symbols.append(text)
    if not symbols:
        raise DataError(f"{path}: vocabulary file defines no symbols")
    return Vocabulary(tuple(symbols))


def default_vocab() -> Vocabulary:
    """The shipped CMU 39-phoneme set plus SIL (size 41 with blank)."""
    ref = importlib.resources.files("phonodec").joinpath("data/phonemes_cmu.txt")
    with importlib.resources.as_file(ref) as path:
        return load_vocab(path)


def encode(vocab: Vocabulary, labels) -> list[int]:
    """Map symbol sequence to id sequence; unknown labels are data errors."""
    return [vocab.id_of(label) for label in labels]


def decode(vocab: Vocabulary, ids) -> list[str]:
    """Inverse of encode for ids in 1..size-1."""
    return [vocab.symbol_of(i) for i in ids]


def split_on_sil(ids, vocab: Vocabulary) -> list[list[int]]:
    """Split an id sequence into word-like groups at SIL boundaries.

    SIL tokens separate groups and are dropped; empty groups are elided.
    A vocabulary without SIL yields a single group (when non-empty).
    """
    sil = vocab.sil_id
    groups = []
    current = []
    for i in ids:
        if sil is not None and i == sil:
            if current:
                groups.append(current)
                current = []
        else:
            current.append(i)
    if current:
        groups.append(current)
    return groups
