"""Corpus manifests, word-image files, and the synthetic corpus generator.

A manifest is a tab-separated text file with a one-line format header.
Each record names an image (a path relative to the manifest, or an
inline ``synth:`` spec rendered on demand), its transcription, its
partition (train / test / query), and an optional cross-validation fold
label.  Optional ``#stopwords:`` metadata lines carry the corpus stop
words.

Images are stored as binary PGM (bit-exact fixtures) or grayscale PNG.
Loading normalizes to the [0, 1] ink-is-one convention, treating files
as dark ink on light paper.
"""

import os
import re
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image

from wordspot import augment, glyphs
from wordspot.errors import ConfigError, DataError
from wordspot.ioutil import atomic_write_bytes, atomic_write_text

MANIFEST_HEADER = "wordspot-manifest\t1"
PARTITIONS = ("train", "test", "query")


@dataclass
class ManifestRecord:
    path: str
    transcription: str
    partition: str
    fold: Optional[int] = None


@dataclass
class CorpusManifest:
    records: List[ManifestRecord] = field(default_factory=list)
    stopwords: Tuple[str, ...] = ()
    root: str = "."

    def partition(self, name):
        if name not in PARTITIONS:
            raise ConfigError("unknown partition %r" % (name,))
        return [r for r in self.records if r.partition == name]

    def transcriptions(self, partition=None):
        records = self.records if partition is None else self.partition(partition)
        return [r.transcription for r in records]


def _validate_record(record, lineno=None):
    where = "" if lineno is None else "line %d: " % lineno
    if record.partition not in PARTITIONS:
        raise DataError("%sunknown partition tag %r" % (where, record.partition))
    if not record.transcription.strip().lower():
        raise DataError("%sempty transcription" % where)
    if not record.path:
        raise DataError("%sempty image path" % where)


def write_manifest(path, manifest):
    lines = [MANIFEST_HEADER]
    if manifest.stopwords:
        lines.append("#stopwords:\t" + "\t".join(manifest.stopwords))
    for record in manifest.records:
        _validate_record(record)
        fold = "-" if record.fold is None else str(record.fold)
        lines.append("\t".join([record.path, record.transcription,
                                record.partition, fold]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_manifest(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise DataError("cannot read manifest %s: %s" % (path, exc)) from exc
    if not lines or lines[0] != MANIFEST_HEADER:
        raise DataError("%s: not a wordspot manifest (bad header line)" % path)
    manifest = CorpusManifest(root=os.path.dirname(os.path.abspath(path)))
    stopwords = []
    seen_paths = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#stopwords:"):
            stopwords.extend(w for w in line.split("\t")[1:] if w)
            continue
        if line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise DataError("%s: line %d: expected 4 tab-separated fields, got %d"
                            % (path, lineno, len(parts)))
        img, transcription, partition, fold_str = parts
        if fold_str == "-":
            fold = None
        else:
            try:
                fold = int(fold_str)
            except ValueError:
                raise DataError("%s: line %d: bad fold label %r"
                                % (path, lineno, fold_str)) from None
        record = ManifestRecord(img, transcription, partition, fold)
        try:
            _validate_record(record, lineno)
        except DataError as exc:
            raise DataError("%s: %s" % (path, exc)) from None
        if record.path in seen_paths:
            raise DataError("%s: line %d: duplicate image path %r"
                            % (path, lineno, record.path))
        seen_paths.add(record.path)
        manifest.records.append(record)
    manifest.stopwords = tuple(stopwords)
    return manifest


def write_pgm(path, image_bytes):
    """Write a 2-d uint8 array as binary PGM (P5, maxval 255)."""
    image_bytes = np.asarray(image_bytes)
    if image_bytes.dtype != np.uint8 or image_bytes.ndim != 2:
        raise DataError("PGM writer expects a 2-d uint8 array")
    h, w = image_bytes.shape
    header = ("P5\n%d %d\n255\n" % (w, h)).encode("ascii")
    atomic_write_bytes(path, header + image_bytes.tobytes())


def read_pgm(path):
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise DataError("cannot read image %s: %s" % (path, exc)) from exc
    match = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if not match:
        raise DataError("%s: corrupt or unsupported PGM header" % path)
    w, h, maxval = (int(match.group(i)) for i in (1, 2, 3))
    if maxval != 255:
        raise DataError("%s: only maxval 255 PGM supported, got %d" % (path, maxval))
    data = raw[match.end():]
    if len(data) < w * h:
        raise DataError("%s: truncated pixel data" % path)
    return np.frombuffer(data[:w * h], dtype=np.uint8).reshape(h, w)


def _read_png_grayscale(path):
    try:
        with Image.open(path) as img:
            if img.mode == "1":
                img = img.convert("L")
            if img.mode != "L":
                raise DataError("%s: not a grayscale image (mode %s)"
                                % (path, img.mode))
            return np.asarray(img, dtype=np.uint8)
    except DataError:
        raise
    except Exception as exc:
        raise DataError("cannot read image %s: %s" % (path, exc)) from exc


_SYNTH_PREFIX = "synth:"


def render_inline_spec(spec_string):
    """Render a ``synth:word=...;height=...;seed=...`` inline image spec."""
    body = spec_string[len(_SYNTH_PREFIX):]
    params = {}
    for chunk in body.split(";"):
        if not chunk:
            continue
        if "=" not in chunk:
            raise DataError("bad inline image spec %r" % spec_string)
        key, value = chunk.split("=", 1)
        params[key] = value
    word = params.pop("word", None)
    if not word:
        raise DataError("inline image spec %r has no word" % spec_string)
    try:
        height = int(params.pop("height", 32))
        seed = int(params.pop("seed", 0))
    except ValueError as exc:
        raise DataError("bad inline image spec %r: %s" % (spec_string, exc)) from exc
    if params:
        raise DataError("inline image spec %r has unknown keys %s"
                        % (spec_string, sorted(params)))
    return glyphs.render_word(word, height=height,
                              rng=np.random.default_rng(seed))


def load_word_image(path, root="."):
    """Load a PGM or PNG word image, normalized so ink is 1.

    ``synth:`` inline specs render deterministically instead of reading
    a file.
    """
    if path.startswith(_SYNTH_PREFIX):
        return render_inline_spec(path)
    full = path if os.path.isabs(path) else os.path.join(root, path)
    if not os.path.exists(full):
        raise DataError("missing image file %s" % full)
    lower = full.lower()
    if lower.endswith(".pgm"):
        raw = read_pgm(full)
    elif lower.endswith(".png"):
        raw = _read_png_grayscale(full)
    else:
        raise DataError("%s: unsupported image format (use .pgm or .png)" % full)
    return augment.normalize_pixels(raw, background="light")


def load_record_image(record, manifest):
    return load_word_image(record.path, root=manifest.root)


@dataclass
class SynthSpec:
    """Recipe for a deterministic synthetic corpus."""

    words: Tuple[str, ...]
    height: int = 32
    train_count: int = 20
    test_count: int = 10
    query_count: int = 0
    seed: int = 0
    char_width: Optional[int] = None

    def __post_init__(self):
        self.words = tuple(self.words)
        if not self.words:
            raise ConfigError("synthetic corpus needs a non-empty word list")
        if len(set(w.lower() for w in self.words)) != len(self.words):
            raise ConfigError("synthetic word list has duplicate classes")
        if self.height < 8:
            raise ConfigError("synthetic image height must be at least 8")
        if min(self.train_count, self.test_count, self.query_count) < 0:
            raise ConfigError("sample counts must be non-negative")
        if self.train_count + self.test_count + self.query_count == 0:
            raise ConfigError("synthetic corpus needs at least one sample per class")


def generate_synthetic_corpus(spec, out_dir):
    """Render the corpus under ``out_dir`` and return its manifest.

    Layout: ``out_dir/images/*.pgm`` plus ``out_dir/manifest.tsv``.
    Fully deterministic: the same spec produces bit-identical files.
    Images store dark ink on light paper, matching the loader's default.
    """
    rng = np.random.default_rng(spec.seed)
    images_dir = os.path.join(out_dir, "images")
    os.makedirs(images_dir, exist_ok=True)
    manifest = CorpusManifest(root=os.path.abspath(out_dir))
    counts = (("train", spec.train_count), ("test", spec.test_count),
              ("query", spec.query_count))
    for word in spec.words:
        folded = word.lower()
        for partition, count in counts:
            for index in range(count):
                ink = glyphs.render_word(folded, height=spec.height, rng=rng,
                                         char_width=spec.char_width)
                as_bytes = np.round(255.0 * (1.0 - ink)).astype(np.uint8)
                name = "%s-%s-%02d.pgm" % (folded, partition, index)
                rel = os.path.join("images", name)
                write_pgm(os.path.join(out_dir, rel), as_bytes)
                manifest.records.append(
                    ManifestRecord(rel, folded, partition, None))
    write_manifest(os.path.join(out_dir, "manifest.tsv"), manifest)
    return manifest


def fold_split(manifest, fold_index, n_folds=4, seed=0):
    """Split a manifest into (train, test) by cross-validation fold.

    Records carrying fold labels use them; otherwise folds are assigned
    deterministically by a seeded within-class shuffle followed by
    round-robin, so every class spreads across folds.  The returned
    manifests re-tag partitions as train/test.
    """
    if n_folds < 2:
        raise ConfigError("n_folds must be at least 2")
    if not 0 <= fold_index < n_folds:
        raise ConfigError("fold index %d out of range for %d folds"
                          % (fold_index, n_folds))
    records = list(manifest.records)
    if not records:
        raise DataError("cannot fold-split an empty manifest")
    labeled = [r.fold is not None for r in records]
    if all(labeled):
        folds = [r.fold for r in records]
    elif any(labeled):
        raise DataError("manifest mixes fold-labeled and unlabeled records")
    else:
        rng = np.random.default_rng(seed)
        folds = [0] * len(records)
        by_class = {}
        for i, r in enumerate(records):
            by_class.setdefault(r.transcription.lower(), []).append(i)
        for label in sorted(by_class):
            indices = np.array(by_class[label])
            rng.shuffle(indices)
            for position, i in enumerate(indices):
                folds[int(i)] = position % n_folds
    train = CorpusManifest(stopwords=manifest.stopwords, root=manifest.root)
    test = CorpusManifest(stopwords=manifest.stopwords, root=manifest.root)
    for record, fold in zip(records, folds):
        target, tag = (test, "test") if fold == fold_index else (train, "train")
        target.records.append(
            ManifestRecord(record.path, record.transcription, tag, fold))
    return train, test
