"""Ranking, average precision, evaluation protocols, significance test.

Retrieval ranks a gallery by cosine distance to a query vector, with
ties broken by gallery insertion order.  Two evaluation protocols are
provided: the leave-one-out style (each test item queries the rest,
queries without any relevant item are discarded but stay in the gallery
as distractors; string queries are the unique test transcriptions) and
the competition style (a dedicated query set against the full test set,
nothing discarded, zero-relevant queries are an error).

Two mAP populations are compared with a randomized permutation test:
pool both AP lists, re-partition at random k times, and count how often
the randomized difference of means reaches the observed one.
"""

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np

from wordspot.errors import ConfigError, DataError
from wordspot.ioutil import atomic_write_text


@dataclass
class GalleryItem:
    item_id: str
    vector: np.ndarray
    label: str


class Gallery:
    """Ordered retrieval targets with unique ids and case-folded labels."""

    def __init__(self, items):
        self.items = []
        seen = set()
        dim = None
        for item_id, vector, label in items:
            vector = np.asarray(vector, dtype=np.float64)
            if vector.ndim != 1:
                raise DataError("vector for %r is not 1-d" % (item_id,))
            if dim is None:
                dim = vector.shape[0]
            elif vector.shape[0] != dim:
                raise DataError("vector for %r has dimension %d, expected %d"
                                % (item_id, vector.shape[0], dim))
            if item_id in seen:
                raise DataError("duplicate gallery id %r" % (item_id,))
            seen.add(item_id)
            self.items.append(GalleryItem(str(item_id), vector, str(label).lower()))
        self.dim = dim

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def matrix(self):
        return np.stack([it.vector for it in self.items])


@dataclass
class RankedList:
    query_id: str
    entries: List[Tuple[str, float]]  # (item id, distance), non-decreasing


@dataclass
class APReport:
    protocol: str
    entries: List[Tuple[str, str, float]]  # (query id, label, AP)
    map_value: float
    config: Optional[dict] = None


@dataclass
class SignificanceResult:
    observed_delta: float
    k: int
    p_value: float
    p_std: float
    sided: str
    paired: bool = False


def cosine_distance(a, b):
    """1 - a.b / (|a||b|), clipped into [0, 2] against rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm vector")
    return float(min(2.0, max(0.0, 1.0 - float(np.dot(a, b)) / (na * nb))))


def _distances_to(query, gallery_matrix):
    query = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(query)
    if qn == 0.0:
        raise ValueError("zero-norm vector")
    norms = np.linalg.norm(gallery_matrix, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm vector in gallery")
    dist = 1.0 - (gallery_matrix @ query) / (norms * qn)
    return np.clip(dist, 0.0, 2.0)


def rank(query, gallery, exclude=None):
    """Sort the gallery by ascending cosine distance to the query.

    Ties keep gallery insertion order; ``exclude`` drops one item id
    (the query itself under the leave-one-out protocol).
    """
    items = [it for it in gallery if it.item_id != exclude]
    if not items:
        raise DataError("empty gallery")
    matrix = np.stack([it.vector for it in items])
    dist = _distances_to(query, matrix)
    order = np.argsort(dist, kind="stable")
    return RankedList(
        query_id=str(exclude) if exclude is not None else "",
        entries=[(items[i].item_id, float(dist[i])) for i in order],
    )


def average_precision(relevance, n_relevant_total):
    """AP of a ranked 0/1 relevance sequence given the total relevant count.

    Sum of precision-at-i over relevant positions i, divided by the
    total number of relevant items in the gallery (retrieved or not).
    The sum is accumulated as an exact rational and rounded once, so
    pinned values like 5/6 come out bit-exact.
    """
    if n_relevant_total < 1:
        raise ValueError("n_relevant_total must be >= 1")
    hits = 0
    total = Fraction(0)
    for i, rel in enumerate(relevance, start=1):
        if rel not in (0, 1, False, True):
            raise ValueError("relevance entries must be 0 or 1")
        if rel:
            hits += 1
            total += Fraction(hits, i)
    if hits > n_relevant_total:
        raise ValueError("relevance sequence has %d hits but only %d relevant exist"
                         % (hits, n_relevant_total))
    return float(total / n_relevant_total)


def _ap_of_ranked(ranked, labels_by_id, query_label, n_relevant_total):
    relevance = [1 if labels_by_id[item_id] == query_label else 0
                 for item_id, _ in ranked.entries]
    return average_precision(relevance, n_relevant_total)


def run_qbe_almazan(test_items, stopwords=(), ranked_out=None):
    """Each test item queries all remaining ones; relevance by label.

    Queries whose class has no other member are discarded as queries but
    remain in the gallery as distractors, as are stop-word queries when
    a stop-word list is given.  Pass a list as ``ranked_out`` to collect
    the per-query RankedList objects.
    """
    gallery = test_items if isinstance(test_items, Gallery) else Gallery(test_items)
    if len(gallery) == 0:
        raise DataError("empty test set")
    stop = {str(s).lower() for s in stopwords}
    labels_by_id = {it.item_id: it.label for it in gallery}
    counts = {}
    for it in gallery:
        counts[it.label] = counts.get(it.label, 0) + 1
    entries = []
    for it in gallery:
        if it.label in stop:
            continue
        n_relevant = counts[it.label] - 1
        if n_relevant == 0:
            continue
        ranked = rank(it.vector, gallery, exclude=it.item_id)
        if ranked_out is not None:
            ranked_out.append(ranked)
        ap = _ap_of_ranked(ranked, labels_by_id, it.label, n_relevant)
        entries.append((it.item_id, it.label, ap))
    if not entries:
        raise DataError("no queries with a relevant item in the test set")
    return APReport("qbe-almazan", entries,
                    float(np.mean([e[2] for e in entries])))


def run_qbs_almazan(test_items, embed_fn, stopwords=(), ranked_out=None):
    """Unique test transcriptions (minus stop words) query the test set.

    ``embed_fn(word) -> vector`` supplies the string embedding.  Every
    query has at least one relevant item by construction.  Stop words
    are removed from the query list only; their images stay in the
    gallery as distractors.
    """
    gallery = test_items if isinstance(test_items, Gallery) else Gallery(test_items)
    if len(gallery) == 0:
        raise DataError("empty test set")
    stop = {str(s).lower() for s in stopwords}
    labels_by_id = {it.item_id: it.label for it in gallery}
    counts = {}
    queries = []
    for it in gallery:
        if it.label not in counts:
            counts[it.label] = 0
            if it.label not in stop:
                queries.append(it.label)
        counts[it.label] += 1
    if not queries:
        raise DataError("no queries: every transcription is a stop word")
    entries = []
    for word in queries:
        ranked = rank(embed_fn(word), gallery, exclude=None)
        ranked.query_id = word
        if ranked_out is not None:
            ranked_out.append(ranked)
        ap = _ap_of_ranked(ranked, labels_by_id, word, counts[word])
        entries.append((word, word, ap))
    return APReport("qbs-almazan", entries,
                    float(np.mean([e[2] for e in entries])))


def run_competition_protocol(query_items, test_items, mode="qbe", ranked_out=None):
    """A dedicated query set ranks the full test set; nothing discarded.

    Queries are (id, vector, label) triples — vectors come from images
    in QbE mode and from embedded strings in QbS mode.  A query with no
    relevant test item violates the protocol's assumption and is an
    error naming the query.
    """
    if mode not in ("qbe", "qbs"):
        raise ConfigError("mode must be 'qbe' or 'qbs', got %r" % (mode,))
    gallery = test_items if isinstance(test_items, Gallery) else Gallery(test_items)
    if len(gallery) == 0:
        raise DataError("empty test set")
    queries = query_items if isinstance(query_items, Gallery) else Gallery(query_items)
    if len(queries) == 0:
        raise DataError("empty query set")
    labels_by_id = {it.item_id: it.label for it in gallery}
    counts = {}
    for it in gallery:
        counts[it.label] = counts.get(it.label, 0) + 1
    entries = []
    for q in queries:
        n_relevant = counts.get(q.label, 0)
        if n_relevant == 0:
            raise DataError("query %r (%r) has no relevant item in the test set"
                            % (q.item_id, q.label))
        ranked = rank(q.vector, gallery, exclude=None)
        ranked.query_id = q.item_id
        if ranked_out is not None:
            ranked_out.append(ranked)
        ap = _ap_of_ranked(ranked, labels_by_id, q.label, n_relevant)
        entries.append((q.item_id, q.label, ap))
    return APReport("%s-competition" % mode, entries,
                    float(np.mean([e[2] for e in entries])))


def permutation_std(p_value, k):
    """Standard deviation of the p-value estimate from k permutations."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return math.sqrt(p_value * (1.0 - p_value) / k)


def permutations_needed(s_target):
    """Permutation count that bounds the p-estimate deviation by s_target."""
    if not s_target > 0:
        raise ValueError("s_target must be positive")
    return int(math.ceil(1.0 / (4.0 * s_target * s_target)))


def permutation_test(aps_a, aps_b, k, rng, sided="two", paired=False,
                     smoothing=False, chunk=4096):
    """Randomization test for the difference of mean AP.

    Pooled mode reassigns the concatenated values to two groups of the
    original sizes; paired mode (equal lengths required) swaps each
    pair's assignment instead.  The p-value counts permutations whose
    difference reaches the observed one: ``delta* >= delta`` one-sided
    ("greater"), ``|delta*| >= |delta|`` two-sided.  With ``smoothing``
    the estimate is (count+1)/(k+1).
    """
    a = np.asarray(aps_a, dtype=np.float64)
    b = np.asarray(aps_b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size == 0 or b.size == 0:
        raise ValueError("both AP lists must be non-empty 1-d sequences")
    if k < 1:
        raise ValueError("k must be >= 1")
    if sided not in ("two", "greater"):
        raise ConfigError("sided must be 'two' or 'greater', got %r" % (sided,))
    if paired and a.size != b.size:
        raise ValueError("paired test needs AP lists of equal length")
    observed = float(a.mean() - b.mean())
    threshold = abs(observed) if sided == "two" else observed
    count = 0
    done = 0
    if paired:
        diffs = a - b
        while done < k:
            m = min(chunk, k - done)
            signs = rng.integers(0, 2, size=(m, diffs.size)) * 2 - 1
            deltas = (signs * diffs).mean(axis=1)
            if sided == "two":
                deltas = np.abs(deltas)
            count += int(np.sum(deltas >= threshold))
            done += m
    else:
        pool = np.concatenate([a, b])
        n_a = a.size
        inv_a = 1.0 / n_a
        inv_b = 1.0 / b.size
        total = pool.sum()
        while done < k:
            m = min(chunk, k - done)
            keys = rng.random((m, pool.size))
            order = np.argsort(keys, axis=1, kind="stable")
            sum_a = pool[order[:, :n_a]].sum(axis=1)
            deltas = sum_a * inv_a - (total - sum_a) * inv_b
            if sided == "two":
                deltas = np.abs(deltas)
            count += int(np.sum(deltas >= threshold))
            done += m
    p = (count + 1) / (k + 1) if smoothing else count / k
    return SignificanceResult(observed, k, float(p), permutation_std(p, k),
                              sided, paired)


AP_REPORT_HEADER = "# wordspot-ap-report 1"


def write_ap_report(path, report):
    """One line per query (id, label, AP to 9 decimals) plus a mAP line."""
    lines = ["%s\tprotocol=%s" % (AP_REPORT_HEADER, report.protocol)]
    if report.config is not None:
        lines.append("# config\t%s" % json.dumps(report.config, sort_keys=True))
    for query_id, label, ap in report.entries:
        lines.append("%s\t%s\t%.9f" % (query_id, label, ap))
    lines.append("mAP\t%.9f" % report.map_value)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_ap_report(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise DataError("cannot read report %s: %s" % (path, exc)) from exc
    if not lines or not lines[0].startswith(AP_REPORT_HEADER + "\t"):
        raise DataError("%s: not an AP report file" % path)
    fields = dict(part.split("=", 1) for part in lines[0].split("\t")[1:])
    protocol = fields.get("protocol")
    if not protocol:
        raise DataError("%s: header missing protocol" % path)
    config = None
    entries = []
    map_value = None
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("# config\t"):
            config = json.loads(line.split("\t", 1)[1])
            continue
        parts = line.split("\t")
        if parts[0] == "mAP":
            if len(parts) != 2:
                raise DataError("%s:%d: malformed mAP line" % (path, ln))
            map_value = float(parts[1])
            continue
        if len(parts) != 3:
            raise DataError("%s:%d: expected 3 tab-separated fields" % (path, ln))
        try:
            entries.append((parts[0], parts[1], float(parts[2])))
        except ValueError as exc:
            raise DataError("%s:%d: bad AP value: %s" % (path, ln, exc)) from exc
    if map_value is None:
        raise DataError("%s: missing trailing mAP line" % path)
    if not entries:
        raise DataError("%s: no query lines" % path)
    mean_ap = float(np.mean([e[2] for e in entries]))
    if abs(mean_ap - map_value) > 1e-8:
        raise DataError("%s: mAP line %.9f does not match entry mean %.9f"
                        % (path, map_value, mean_ap))
    return APReport(protocol, entries, map_value, config)


RANKED_LISTS_HEADER = "# wordspot-ranked-lists 1"


def write_ranked_lists(path, ranked_lists, protocol):
    lines = ["%s\tprotocol=%s" % (RANKED_LISTS_HEADER, protocol)]
    for rl in ranked_lists:
        for position, (item_id, dist) in enumerate(rl.entries, start=1):
            lines.append("%s\t%d\t%s\t%s" % (rl.query_id, position, item_id,
                                             repr(float(dist))))
    atomic_write_text(path, "\n".join(lines) + "\n")
