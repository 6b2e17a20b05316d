"""Word algebra over cyclic-exclusivity projectors and one unitary letter.

Letters are small integers: projector indices ``1..n``, the unitary letter
``PHAT``, its adjoint ``PHAT_ADJ``, and a removable identity ``IDENT``.  A word
is an ordered letter tuple; the empty word is the identity operator and a
distinguished zero word absorbs products that hit an exclusive projector pair.

The rewrite rules are: projector idempotence, annihilation of cycle-adjacent
projector pairs, cancellation of unitary/adjoint pairs, and identity removal.
Every rule strictly shortens a word, so rewriting terminates; confluence is
covered by the property suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from ._kernels import IDENT, PHAT, PHAT_ADJ, canon_into

Letter = int

_LETTER_LIMIT = 99  # projector indices stay below the reserved codes


def proj(i: int) -> Letter:
    """Letter for projector i (1-based)."""
    if not 1 <= i <= _LETTER_LIMIT:
        raise ValueError(f"projector index out of range: {i}")
    return i


def is_projector(letter: Letter, n: int) -> bool:
    return 1 <= letter <= n


def cycle_edge(i: int, j: int, n: int) -> bool:
    """True when projectors i and j are exclusive (adjacent on the n-cycle)."""
    d = abs(i - j)
    return d == 1 or d == n - 1


@dataclass(frozen=True)
class Word:
    """Canonical or raw letter sequence; ``letters is None`` encodes zero."""

    letters: tuple[int, ...] | None = ()

    @staticmethod
    def zero() -> "Word":
        return _ZERO

    @property
    def is_zero(self) -> bool:
        return self.letters is None

    @property
    def is_identity(self) -> bool:
        return self.letters == ()

    def __len__(self) -> int:
        return 0 if self.letters is None else len(self.letters)

    def __iter__(self) -> Iterator[int]:
        return iter(self.letters or ())

    def __repr__(self) -> str:
        return f"Word({to_string(self)!r})"


_ZERO = Word(letters=None)
IDENTITY = Word(())


def sort_key(word: Word) -> tuple:
    """Length-lexicographic order; zero sorts last."""
    if word.letters is None:
        return (1, ())
    return (0, len(word.letters), word.letters)


def canonicalize(word: Word, n: int) -> Word:
    if word.letters is None:
        return _ZERO
    codes = np.asarray(word.letters, dtype=np.int64)
    out = np.empty(max(len(codes), 1), dtype=np.int64)
    top = canon_into(codes, len(codes), n, out)
    if top < 0:
        return _ZERO
    return Word(tuple(int(c) for c in out[:top]))


def adjoint(word: Word) -> Word:
    """Reversal with the unitary letter starred; projectors are self-adjoint."""
    if word.letters is None:
        return _ZERO
    swapped = tuple(
        PHAT_ADJ if c == PHAT else PHAT if c == PHAT_ADJ else c
        for c in reversed(word.letters)
    )
    return Word(swapped)


def multiply(a: Word, b: Word, n: int) -> Word:
    if a.letters is None or b.letters is None:
        return _ZERO
    return canonicalize(Word(a.letters + b.letters), n)


def evaluate(word: Word, projectors: Iterable[np.ndarray], phat: np.ndarray) -> np.ndarray:
    """Matrix of a word under a concrete realization.

    Parameters
    ----------
    word:
        Any word (canonical or not).
    projectors:
        Sequence of n square matrices for the projector letters.
    phat:
        Unitary matrix substituted for the ``PHAT`` letter.

    Returns
    -------
    The product matrix; the identity word maps to the identity matrix, the
    zero word to the zero matrix.
    """
    mats = list(projectors)
    dim = mats[0].shape[0]
    if word.letters is None:
        return np.zeros((dim, dim), dtype=complex)
    result = np.eye(dim, dtype=complex)
    for c in word.letters:
        if c == IDENT:
            continue
        if c == PHAT:
            factor = phat
        elif c == PHAT_ADJ:
            factor = phat.conj().T
        else:
            factor = mats[c - 1]
        result = result @ factor
    return result


def to_string(word: Word) -> str:
    if word.letters is None:
        return "0"
    if not word.letters:
        return "I"
    parts = []
    for c in word.letters:
        if c == PHAT:
            parts.append("Ph")
        elif c == PHAT_ADJ:
            parts.append("Ph†")
        elif c == IDENT:
            parts.append("I")
        else:
            parts.append(f"P{c}")
    return ".".join(parts)


def parse(text: str) -> Word:
    """Inverse of ``to_string``; accepts 'Ph*' as an ASCII alias for 'Ph†'."""
    text = text.strip()
    if text == "0":
        return _ZERO
    if text == "I":
        return IDENTITY
    letters = []
    for token in text.split("."):
        token = token.strip()
        if token == "I":
            letters.append(IDENT)
        elif token == "Ph":
            letters.append(PHAT)
        elif token in ("Ph†", "Ph*"):
            letters.append(PHAT_ADJ)
        elif token.startswith("P") and token[1:].isdigit():
            letters.append(int(token[1:]))
        else:
            raise ValueError(f"unrecognized letter token: {token!r}")
    return Word(tuple(letters))


def enumerate_words(n: int, max_len: int, include_unitary: bool = True) -> list[Word]:
    """All canonical words up to max_len letters, in length-lex order."""
    alphabet = list(range(1, n + 1))
    if include_unitary:
        alphabet += [PHAT, PHAT_ADJ]
    result = [IDENTITY]
    frontier = [IDENTITY]
    for _ in range(max_len):
        extended = []
        for word in frontier:
            for letter in alphabet:
                cand = Word(word.letters + (letter,))
                if canonicalize(cand, n) == cand:
                    extended.append(cand)
        result.extend(extended)
        frontier = extended
    return sorted(result, key=sort_key)


class NcPoly:
    """Formal real combination of words; zero words are dropped on entry."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Word, float] | None = None):
        self.terms: dict[Word, float] = {}
        if terms:
            for word, coeff in terms.items():
                if word.is_zero or coeff == 0.0:
                    continue
                self.terms[word] = self.terms.get(word, 0.0) + float(coeff)

    @staticmethod
    def from_word(word: Word, coeff: float = 1.0) -> "NcPoly":
        return NcPoly({word: coeff})

    @staticmethod
    def identity() -> "NcPoly":
        return NcPoly({IDENTITY: 1.0})

    def __add__(self, other: "NcPoly") -> "NcPoly":
        merged = dict(self.terms)
        for word, coeff in other.terms.items():
            merged[word] = merged.get(word, 0.0) + coeff
        return NcPoly(merged)

    def __sub__(self, other: "NcPoly") -> "NcPoly":
        return self + other.scale(-1.0)

    def scale(self, factor: float) -> "NcPoly":
        return NcPoly({w: c * factor for w, c in self.terms.items()})

    def mul(self, other: "NcPoly", n: int) -> "NcPoly":
        out: dict[Word, float] = {}
        for wa, ca in self.terms.items():
            for wb, cb in other.terms.items():
                prod = multiply(wa, wb, n)
                if prod.is_zero:
                    continue
                out[prod] = out.get(prod, 0.0) + ca * cb
        return NcPoly(out)

    def adjoint(self) -> "NcPoly":
        return NcPoly({adjoint(w): c for w, c in self.terms.items()})

    def canonicalized(self, n: int) -> "NcPoly":
        out: dict[Word, float] = {}
        for word, coeff in self.terms.items():
            canon = canonicalize(word, n)
            if canon.is_zero:
                continue
            out[canon] = out.get(canon, 0.0) + coeff
        return NcPoly(out)

    def prune(self, eps: float = 0.0) -> "NcPoly":
        return NcPoly({w: c for w, c in self.terms.items() if abs(c) > eps})

    def evaluate(self, projectors: Iterable[np.ndarray], phat: np.ndarray) -> np.ndarray:
        mats = list(projectors)
        dim = mats[0].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for word, coeff in self.terms.items():
            total += coeff * evaluate(word, mats, phat)
        return total

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NcPoly):
            return NotImplemented
        return self.prune().terms == other.prune().terms

    def __repr__(self) -> str:
        if not self.terms:
            return "NcPoly(0)"
        bits = [
            f"{coeff:+g}*{to_string(word)}"
            for word, coeff in sorted(self.terms.items(), key=lambda kv: sort_key(kv[0]))
        ]
        return "NcPoly(" + " ".join(bits) + ")"


def encode_words(index: list[Word]) -> tuple[np.ndarray, np.ndarray]:
    """Pack words into the padded integer matrix the kernels consume."""
    width = max((len(w) for w in index), default=0)
    width = max(width, 1)
    codes = np.full((len(index), width), -1, dtype=np.int64)
    lengths = np.zeros(len(index), dtype=np.int64)
    for row, word in enumerate(index):
        if word.letters is None:
            raise ValueError("zero word cannot be an index entry")
        lengths[row] = len(word.letters)
        for col, letter in enumerate(word.letters):
            codes[row, col] = letter
    return codes, lengths


def decode_word(row: np.ndarray, length: int) -> Word:
    if length < 0:
        return _ZERO
    return Word(tuple(int(c) for c in row[:length]))
