"""Manifests, image IO, the synthetic corpus, and fold splitting."""

import os

import numpy as np
import pytest

from wordspot import datasets, glyphs
from wordspot.datasets import (
    CorpusManifest,
    ManifestRecord,
    SynthSpec,
    fold_split,
    generate_synthetic_corpus,
    load_manifest,
    load_record_image,
    load_word_image,
    read_pgm,
    write_manifest,
    write_pgm,
)
from wordspot.errors import ConfigError, DataError


# ---------------------------------------------------------------------------
# manifest files
# ---------------------------------------------------------------------------

def _sample_manifest():
    return CorpusManifest(records=[
        ManifestRecord("images/a.pgm", "apple", "train", None),
        ManifestRecord("images/b.pgm", "berry", "test", 2),
        ManifestRecord("synth:word=cat;seed=1", "cat", "query", None),
    ], stopwords=("the", "of"))


def test_manifest_roundtrip(tmp_path):
    path = tmp_path / "manifest.tsv"
    write_manifest(path, _sample_manifest())
    back = load_manifest(path)
    assert [(r.path, r.transcription, r.partition, r.fold) for r in back.records] == [
        ("images/a.pgm", "apple", "train", None),
        ("images/b.pgm", "berry", "test", 2),
        ("synth:word=cat;seed=1", "cat", "query", None),
    ]
    assert back.stopwords == ("the", "of")
    assert back.root == str(tmp_path)


def test_manifest_partition_helpers():
    m = _sample_manifest()
    assert [r.transcription for r in m.partition("train")] == ["apple"]
    assert m.transcriptions("test") == ["berry"]
    with pytest.raises(ConfigError):
        m.partition("validation")


def test_manifest_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("not-a-manifest\n")
    with pytest.raises(DataError, match="header"):
        load_manifest(path)


def test_manifest_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("wordspot-manifest\t1\nimages/a.pgm\tapple\ttrain\t-\n"
                    "images/b.pgm\tberry\tholdout\t-\n")
    with pytest.raises(DataError, match="line 3"):
        load_manifest(path)


def test_manifest_rejects_duplicate_paths(tmp_path):
    path = tmp_path / "dup.tsv"
    path.write_text("wordspot-manifest\t1\nx.pgm\ta\ttrain\t-\nx.pgm\tb\ttest\t-\n")
    with pytest.raises(DataError, match="duplicate"):
        load_manifest(path)


def test_manifest_rejects_wrong_field_count(tmp_path):
    path = tmp_path / "fields.tsv"
    path.write_text("wordspot-manifest\t1\nx.pgm\ta\ttrain\n")
    with pytest.raises(DataError, match="4 tab-separated"):
        load_manifest(path)


def test_manifest_missing_file_is_data_error(tmp_path):
    with pytest.raises(DataError):
        load_manifest(tmp_path / "none.tsv")


def test_manifest_skips_comments_and_blanks(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("wordspot-manifest\t1\n# a comment\n\nx.pgm\ta\ttrain\t-\n")
    assert len(load_manifest(path).records) == 1


# ---------------------------------------------------------------------------
# image IO
# ---------------------------------------------------------------------------

def test_pgm_roundtrip_bit_exact(tmp_path, rng):
    raw = rng.integers(0, 256, size=(13, 29)).astype(np.uint8)
    path = tmp_path / "img.pgm"
    write_pgm(path, raw)
    np.testing.assert_array_equal(read_pgm(path), raw)


def test_pgm_rejects_corrupt_header(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
    with pytest.raises(DataError, match="header"):
        read_pgm(path)


def test_pgm_rejects_truncation(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n4 4\n255\n" + bytes(7))
    with pytest.raises(DataError, match="truncated"):
        read_pgm(path)


def test_load_word_image_inverts_light_background(tmp_path):
    raw = np.full((26, 26), 255, dtype=np.uint8)  # all white paper
    raw[10, 10] = 0  # one ink pixel
    path = tmp_path / "w.pgm"
    write_pgm(path, raw)
    img = load_word_image(str(path))
    assert img.shape == (26, 26)
    assert img[10, 10] == 1.0
    assert img[0, 0] == 0.0
    assert float(img.sum()) == 1.0  # all-white rest maps to all-zero


def test_load_word_image_png(tmp_path, rng):
    from PIL import Image
    raw = rng.integers(0, 256, size=(12, 20)).astype(np.uint8)
    path = tmp_path / "w.png"
    Image.fromarray(raw, mode="L").save(path)
    img = load_word_image(str(path))
    np.testing.assert_allclose(img, 1.0 - raw / 255.0, atol=1e-12)


def test_load_word_image_rejects_color_png(tmp_path, rng):
    from PIL import Image
    rgb = rng.integers(0, 256, size=(8, 8, 3)).astype(np.uint8)
    path = tmp_path / "c.png"
    Image.fromarray(rgb, mode="RGB").save(path)
    with pytest.raises(DataError, match="grayscale"):
        load_word_image(str(path))


def test_load_word_image_missing_and_unsupported(tmp_path):
    with pytest.raises(DataError, match="missing"):
        load_word_image(str(tmp_path / "gone.pgm"))
    path = tmp_path / "x.bmp"
    path.write_bytes(b"BM")
    with pytest.raises(DataError, match="unsupported"):
        load_word_image(str(path))


def test_load_word_image_inline_synth_deterministic():
    a = load_word_image("synth:word=cat;height=24;seed=3")
    b = load_word_image("synth:word=cat;height=24;seed=3")
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0 and a.shape[0] == 24


def test_inline_synth_spec_validation():
    with pytest.raises(DataError, match="no word"):
        load_word_image("synth:height=24")
    with pytest.raises(DataError, match="unknown keys"):
        load_word_image("synth:word=cat;color=red")
    with pytest.raises(DataError):
        load_word_image("synth:word=cat;height=abc")


# ---------------------------------------------------------------------------
# glyph rendering
# ---------------------------------------------------------------------------

def test_render_word_ink_convention(rng):
    img = glyphs.render_word("cat", height=32, rng=rng)
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert img.max() > 0.5  # some ink present
    assert img.shape[0] == 32


def test_render_word_width_grows_with_length(rng):
    short = glyphs.render_word("ab", height=32)
    long = glyphs.render_word("abcdef", height=32)
    assert long.shape[1] > short.shape[1]


def test_render_word_rejects_unsupported():
    with pytest.raises(DataError, match="unsupported character"):
        glyphs.render_word("c4t", height=32)
    with pytest.raises(DataError, match="empty"):
        glyphs.render_word("", height=32)
    with pytest.raises(DataError):
        glyphs.render_word("cat", height=4)


def test_render_word_jitter_changes_with_rng():
    a = glyphs.render_word("cat", height=32, rng=np.random.default_rng(0))
    b = glyphs.render_word("cat", height=32, rng=np.random.default_rng(1))
    assert not np.array_equal(a, b)


def test_supported_characters_cover_alphabet():
    assert set("abcdefghijklmnopqrstuvwxyz") <= set(glyphs.supported_characters())


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

def test_synthetic_corpus_layout(tiny_corpus):
    root, manifest = tiny_corpus
    assert len(manifest.records) == 3 * (4 + 3)
    assert len(manifest.partition("train")) == 12
    assert len(manifest.partition("test")) == 9
    assert (root / "manifest.tsv").exists()
    for record in manifest.records:
        assert os.path.exists(os.path.join(manifest.root, record.path))


def test_synthetic_corpus_deterministic(tmp_path):
    spec = SynthSpec(words=("hat", "pin"), height=24, train_count=2,
                     test_count=1, seed=5)
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    generate_synthetic_corpus(spec, a_dir)
    generate_synthetic_corpus(spec, b_dir)
    for rel in sorted(os.listdir(a_dir / "images")):
        assert (a_dir / "images" / rel).read_bytes() == \
            (b_dir / "images" / rel).read_bytes()
    assert (a_dir / "manifest.tsv").read_text() == (b_dir / "manifest.tsv").read_text()


def test_synthetic_corpus_seed_changes_pixels(tmp_path):
    a = generate_synthetic_corpus(
        SynthSpec(words=("hat",), train_count=1, test_count=0, seed=1),
        tmp_path / "s1")
    b = generate_synthetic_corpus(
        SynthSpec(words=("hat",), train_count=1, test_count=0, seed=2),
        tmp_path / "s2")
    img_a = load_record_image(a.records[0], a)
    img_b = load_record_image(b.records[0], b)
    assert not np.array_equal(img_a, img_b)


def test_synthetic_corpus_intra_class_closer_than_inter(tiny_corpus):
    # same-word renderings differ by jitter only; different words differ
    # structurally.  Compare mean pixel distances at equal shapes.
    root, manifest = tiny_corpus
    by_word = {}
    for record in manifest.partition("train"):
        by_word.setdefault(record.transcription, []).append(
            load_record_image(record, manifest))
    words = sorted(by_word)
    intra, inter = [], []
    for w in words:
        group = by_word[w]
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                intra.append(float(np.abs(group[i] - group[j]).mean()))
    for wa in words:
        for wb in words:
            if wa >= wb:
                continue
            for im_a in by_word[wa]:
                for im_b in by_word[wb]:
                    if im_a.shape == im_b.shape:
                        inter.append(float(np.abs(im_a - im_b).mean()))
    assert intra and inter
    assert float(np.mean(intra)) < float(np.mean(inter))


def test_synth_spec_validation():
    with pytest.raises(ConfigError, match="duplicate"):
        SynthSpec(words=("cat", "CAT"))
    with pytest.raises(ConfigError):
        SynthSpec(words=())
    with pytest.raises(ConfigError):
        SynthSpec(words=("cat",), height=4)
    with pytest.raises(ConfigError):
        SynthSpec(words=("cat",), train_count=0, test_count=0, query_count=0)


def test_synthetic_corpus_unsupported_word_fails(tmp_path):
    spec = SynthSpec(words=("c4t",), train_count=1, test_count=0)
    with pytest.raises(DataError, match="unsupported"):
        generate_synthetic_corpus(spec, tmp_path / "bad")


# ---------------------------------------------------------------------------
# fold splitting
# ---------------------------------------------------------------------------

def _flat_manifest(n_per_class=8, classes=("cat", "dog")):
    records = [ManifestRecord("img-%s-%d.pgm" % (c, i), c, "train", None)
               for c in classes for i in range(n_per_class)]
    return CorpusManifest(records=records)


def test_fold_split_partitions_evenly():
    manifest = _flat_manifest(8)
    train, test = fold_split(manifest, fold_index=0, n_folds=4)
    assert len(test.records) == 4   # 2 per class
    assert len(train.records) == 12
    assert {r.partition for r in test.records} == {"test"}
    assert {r.partition for r in train.records} == {"train"}
    # every class appears in the test fold
    assert {r.transcription for r in test.records} == {"cat", "dog"}


def test_fold_split_folds_cover_everything():
    manifest = _flat_manifest(8)
    seen = set()
    for fold in range(4):
        _, test = fold_split(manifest, fold, n_folds=4, seed=3)
        paths = {r.path for r in test.records}
        assert not (paths & seen)  # folds are disjoint
        seen |= paths
    assert seen == {r.path for r in manifest.records}


def test_fold_split_deterministic():
    manifest = _flat_manifest(6)
    a = fold_split(manifest, 1, n_folds=3, seed=9)[1]
    b = fold_split(manifest, 1, n_folds=3, seed=9)[1]
    assert [r.path for r in a.records] == [r.path for r in b.records]


def test_fold_split_honors_existing_labels():
    records = [ManifestRecord("a.pgm", "x", "train", 0),
               ManifestRecord("b.pgm", "x", "train", 1)]
    train, test = fold_split(CorpusManifest(records=records), 1, n_folds=2)
    assert [r.path for r in test.records] == ["b.pgm"]
    assert [r.path for r in train.records] == ["a.pgm"]


def test_fold_split_rejects_mixed_labeling():
    records = [ManifestRecord("a.pgm", "x", "train", 0),
               ManifestRecord("b.pgm", "x", "train", None)]
    with pytest.raises(DataError, match="mixes"):
        fold_split(CorpusManifest(records=records), 0, n_folds=2)


def test_fold_split_validates_indices():
    manifest = _flat_manifest(4)
    with pytest.raises(ConfigError):
        fold_split(manifest, 4, n_folds=4)
    with pytest.raises(ConfigError):
        fold_split(manifest, 0, n_folds=1)
    with pytest.raises(DataError):
        fold_split(CorpusManifest(), 0, n_folds=2)
