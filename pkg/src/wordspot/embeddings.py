"""Word string embeddings: PHOC, SPOC and DCToW.

All three embeddings map a transcription string onto a fixed-length
attribute vector using a character alphabet:

* PHOC marks the presence (0/1) of each alphabet character inside the
  splits of a horizontal pyramid over the word.
* SPOC is the counting variant of PHOC: each slot holds the number of
  character occurrences assigned to the split.
* DCToW places the character positions of a word into an indicator
  matrix (one row per alphabet character) and keeps a few low-frequency
  DCT coefficients of every row.

Split membership follows the normalized-occupancy rule: a character at
position k of an n-character word occupies the interval [k/n, (k+1)/n]
and belongs to every split it overlaps by at least half of its own
width.  The 50% comparison is carried out in exact rational arithmetic
so that boundary cases (such as the middle character of a three-letter
word against two halves) never flip due to float rounding.
"""

from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
import scipy.fft

from wordspot.ioutil import atomic_write_text

DEFAULT_LEVELS = (2, 3, 4, 5)


def fold_word(text: str) -> str:
    """Normalize a transcription to its case-folded form.

    Raises:
        ValueError: if the folded word is empty.
    """
    folded = text.lower()
    if len(folded) == 0:
        raise ValueError("empty word")
    return folded


def build_alphabet(transcriptions: Iterable[str]) -> str:
    """Collect the unique characters of a corpus into an alphabet string.

    Characters are taken from the case-folded transcriptions and sorted
    by code point, which makes the alphabet (and therefore every vector
    built against it) stable across runs.  Empty transcriptions are
    skipped.

    Raises:
        ValueError: if no non-empty transcription is supplied.
    """
    chars = set()
    for text in transcriptions:
        chars.update(text.lower())
    if not chars:
        raise ValueError("empty corpus")
    return "".join(sorted(chars))


def check_levels(levels: Sequence[int]) -> tuple:
    """Validate a pyramid level set: strictly increasing positive ints."""
    levels = tuple(int(l) for l in levels)
    if not levels or any(l < 1 for l in levels):
        raise ValueError("levels must be positive integers")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")
    return levels


def normalized_occupancy(k: int, n: int):
    """Interval [k/n, (k+1)/n] occupied by the character at position k.

    Returned as a pair of exact fractions.

    Raises:
        ValueError: if not 0 <= k < n.
    """
    if n < 1 or k < 0 or k >= n:
        raise ValueError("index out of range: k=%d, n=%d" % (k, n))
    return (Fraction(k, n), Fraction(k + 1, n))


def char_in_split(occ, split, tol: float = 1e-12) -> bool:
    """Decide whether an occupancy interval belongs to a split interval.

    True iff the overlap covers at least 50% of the occupancy interval.
    Exact when both intervals are given as fractions (as produced by
    :func:`normalized_occupancy`); float inputs are compared with a
    small tolerance to keep boundary cases stable.
    """
    lo = max(occ[0], split[0])
    hi = min(occ[1], split[1])
    overlap = hi - lo
    if overlap <= 0:
        return False
    width = occ[1] - occ[0]
    if isinstance(overlap, Fraction) and isinstance(width, Fraction):
        return 2 * overlap >= width
    return 2 * float(overlap) >= float(width) - tol


def _split_interval(s: int, l: int):
    return (Fraction(s, l), Fraction(s + 1, l))


def _char_indices(alphabet: str) -> dict:
    indices = {c: i for i, c in enumerate(alphabet)}
    if len(indices) != len(alphabet):
        raise ValueError("alphabet contains duplicate characters")
    return indices


def _pyramid_histogram(word, alphabet, levels, binary):
    indices = _char_indices(alphabet)
    word = fold_word(word)
    levels = check_levels(levels)
    n = len(word)
    vec = np.zeros(len(alphabet) * sum(levels), dtype=np.float64)
    offset = 0
    for level in levels:
        for s in range(level):
            split = _split_interval(s, level)
            base = offset + s * len(alphabet)
            for k, char in enumerate(word):
                if char not in indices:
                    raise ValueError("unknown character %r" % char)
                if char_in_split(normalized_occupancy(k, n), split):
                    slot = base + indices[char]
                    if binary:
                        vec[slot] = 1.0
                    else:
                        vec[slot] += 1.0
        offset += level * len(alphabet)
    return vec


def build_phoc(word: str, alphabet: str, levels: Sequence[int] = DEFAULT_LEVELS) -> np.ndarray:
    """Binary pyramidal histogram of characters.

    The output concatenates one histogram per (level, split) in level
    order, splits ascending, alphabet order within a split.  Repeated
    characters inside a split mark presence once.

    Raises:
        ValueError: if the word contains characters outside the alphabet.
    """
    return _pyramid_histogram(word, alphabet, levels, binary=True)


def build_spoc(word: str, alphabet: str, levels: Sequence[int] = DEFAULT_LEVELS) -> np.ndarray:
    """Counting variant of :func:`build_phoc`.

    Each slot counts character occurrences assigned to the split; an
    occurrence overlapping two adjacent splits by exactly half is
    counted in both.
    """
    return _pyramid_histogram(word, alphabet, levels, binary=False)


def dct_row(seq) -> np.ndarray:
    """Orthonormal DCT-II of a 1-D sequence.

    Round-trips with the orthonormal inverse to machine precision.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 1 or seq.size == 0:
        raise ValueError("dct_row expects a non-empty 1-D sequence")
    return scipy.fft.dct(seq, type=2, norm="ortho")


def build_dctow(word: str, alphabet: str, coeff_count: int = 3, select: str = "first") -> np.ndarray:
    """DCT-of-words embedding.

    Builds the |alphabet| x n indicator matrix of character positions,
    applies an orthonormal DCT-II to every row and keeps ``coeff_count``
    coefficients per row, concatenated in alphabet order
    (d = coeff_count * |alphabet|).

    ``select`` picks the coefficients: ``"first"`` (default) keeps the
    lowest-frequency ones, ``"largest"`` keeps those with the largest
    absolute value, in order of appearance.  Rows shorter than
    ``coeff_count`` are zero-padded.
    """
    if select not in ("first", "largest"):
        raise ValueError("select must be 'first' or 'largest', got %r" % select)
    if coeff_count < 1:
        raise ValueError("coeff_count must be >= 1")
    indices = _char_indices(alphabet)
    word = fold_word(word)
    n = len(word)
    matrix = np.zeros((len(alphabet), n), dtype=np.float64)
    for k, char in enumerate(word):
        if char not in indices:
            raise ValueError("unknown character %r" % char)
        matrix[indices[char], k] = 1.0
    out = np.zeros((len(alphabet), coeff_count), dtype=np.float64)
    for i in range(len(alphabet)):
        coeffs = dct_row(matrix[i])
        if select == "first":
            keep = coeffs[:coeff_count]
        else:
            order = np.sort(np.argsort(-np.abs(coeffs), kind="stable")[:coeff_count])
            keep = coeffs[order]
        out[i, : len(keep)] = keep
    return out.reshape(-1)


EMBEDDING_KINDS = ("phoc", "spoc", "dctow")


def embed_word(word: str, alphabet: str, kind: str, levels: Sequence[int] = DEFAULT_LEVELS,
               coeff_count: int = 3) -> np.ndarray:
    """Dispatch to one of the embedding constructors by kind name."""
    if kind == "phoc":
        return build_phoc(word, alphabet, levels)
    if kind == "spoc":
        return build_spoc(word, alphabet, levels)
    if kind == "dctow":
        return build_dctow(word, alphabet, coeff_count)
    raise ValueError("unknown embedding kind %r" % kind)


def embedding_dim(alphabet: str, kind: str, levels: Sequence[int] = DEFAULT_LEVELS,
                  coeff_count: int = 3) -> int:
    """Dimensionality of an embedding without building one."""
    if kind in ("phoc", "spoc"):
        return len(alphabet) * sum(check_levels(levels))
    if kind == "dctow":
        return coeff_count * len(alphabet)
    raise ValueError("unknown embedding kind %r" % kind)


def write_embedding_dump(path, records) -> None:
    """Write embedding records as text, one per line.

    Each record is (name, kind, vector) and becomes
    ``name kind d v1 ... vd`` with floats in shortest round-trip form.
    """
    lines = []
    for name, kind, values in records:
        if not name or any(c.isspace() for c in str(name) + str(kind)):
            raise ValueError("record name and kind must be non-empty and "
                             "whitespace-free: %r %r" % (name, kind))
        values = np.asarray(values, dtype=np.float64)
        parts = [str(name), str(kind), str(values.size)]
        parts.extend(repr(float(v)) for v in values)
        lines.append(" ".join(parts))
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_embedding_dump(path):
    """Read records written by :func:`write_embedding_dump`."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise ValueError("line %d: malformed embedding record" % lineno)
            name, kind, d = parts[0], parts[1], int(parts[2])
            values = np.array([float(v) for v in parts[3:]], dtype=np.float64)
            if values.size != d:
                raise ValueError("line %d: expected %d values, got %d" % (lineno, d, values.size))
            records.append((name, kind, values))
    return records
