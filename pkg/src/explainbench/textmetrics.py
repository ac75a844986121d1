"""Sentence-level text similarity metrics for scoring explanations against
expert references: BLEU, METEOR (exact-match stage), ROUGE-L, and an
embedding-matching score in the BERTScore style.

All metrics are pure functions of token sequences and stay within [0, 1].
BLEU is unsmoothed and single-reference; METEOR uses exact token matching
only (no stemming or synonymy), choosing among maximum matchings the one
with the fewest chunks.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from math import fsum
from typing import Callable, Optional, Sequence

import numpy as np

from .domain import TaskKind
from .errors import EmbedderFailure, EmptyInput

_PUNCT = ".,!?;:()\"'"
_CHUNK_RE = re.compile(f"[{re.escape(_PUNCT)}]+|[^{re.escape(_PUNCT)}]+")

# exact chunk-minimizing alignment search gives up past this many nodes and
# keeps the best alignment found so far (realistic texts stay far below it)
ALIGNMENT_NODE_CAP = 250_000


@dataclass(frozen=True)
class TokenSeq:
    tokens: tuple

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        for t in self.tokens:
            if not isinstance(t, str) or not t:
                raise ValueError(f"tokens must be non-empty strings, got {t!r}")

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def tokenize(text: str) -> TokenSeq:
    """Lowercase, split on whitespace, detach punctuation runs as tokens."""
    tokens = []
    for chunk in text.lower().split():
        tokens.extend(_CHUNK_RE.findall(chunk))
    return TokenSeq(tuple(tokens))


@dataclass(frozen=True)
class ScoreTriple:
    precision: float
    recall: float
    f1: float


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(hyp: TokenSeq, ref: TokenSeq, n: int):
    """Clipped n-gram counts: (matched up to reference multiplicity, total)."""
    total = max(0, len(hyp) - n + 1)
    if total == 0:
        return 0, 0
    hyp_counts = _ngrams(hyp.tokens, n)
    ref_counts = _ngrams(ref.tokens, n) if len(ref) >= n else Counter()
    clipped = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
    return clipped, total


def bleu(hyp: TokenSeq, ref: TokenSeq, max_n: int = 4) -> float:
    """Unsmoothed sentence BLEU: geometric mean of clipped precisions times
    the brevity penalty; zero whenever any order has no overlap."""
    if len(hyp) == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        clipped, total = modified_precision(hyp, ref, n)
        if total == 0 or clipped == 0:
            return 0.0
        log_sum += math.log(clipped / total)
    brevity = min(1.0, math.exp(1.0 - len(ref) / len(hyp)))
    return brevity * math.exp(log_sum / max_n)


def _chunk_count(pairs) -> int:
    """Chunks = maximal runs contiguous and identically ordered in both."""
    pairs = sorted(pairs)
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or prev != (i - 1, j - 1):
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_alignment(hyp: TokenSeq, ref: TokenSeq):
    """Size and chunk count of a maximum exact matching with fewest chunks.

    Exact-match bipartite blocks are complete per word, so the maximum
    matching size is the sum of per-word minimum counts. Chunk minimization
    is a depth-first search over per-position choices with chunk-count
    pruning (chunk count never decreases as pairs are added in order).
    """
    hyp_t, ref_t = hyp.tokens, ref.tokens
    hyp_counts = Counter(hyp_t)
    ref_counts = Counter(ref_t)
    need = {w: min(c, ref_counts[w]) for w, c in hyp_counts.items()
            if w in ref_counts}
    m = sum(need.values())
    if m == 0:
        return 0, 0

    ref_positions = defaultdict(list)
    for j, w in enumerate(ref_t):
        ref_positions[w].append(j)

    n = len(hyp_t)
    remaining_after = [Counter() for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        remaining_after[i] = remaining_after[i + 1].copy()
        remaining_after[i][hyp_t[i]] += 1

    used = [False] * len(ref_t)
    remaining_need = dict(need)
    best = m + 1
    nodes = 0

    def dfs(i, chunks, last_i, last_j):
        nonlocal best, nodes
        if chunks >= best or nodes > ALIGNMENT_NODE_CAP:
            return
        if i == n:
            best = chunks
            return
        nodes += 1
        w = hyp_t[i]
        wants = remaining_need.get(w, 0)
        if wants > 0:
            # try extending the current chunk first for a good early bound
            candidates = [j for j in ref_positions[w] if not used[j]]
            if last_i == i - 1:
                candidates.sort(key=lambda j: (j != last_j + 1, j))
            for j in candidates:
                used[j] = True
                remaining_need[w] = wants - 1
                extends = (last_i == i - 1 and last_j == j - 1)
                dfs(i + 1, chunks + (0 if extends else 1), i, j)
                remaining_need[w] = wants
                used[j] = False
        # skipping this occurrence is allowed only if enough remain later
        if remaining_after[i + 1][w] >= wants:
            dfs(i + 1, chunks, last_i, last_j)

    dfs(0, 0, -2, -2)
    return m, best


def meteor(hyp: TokenSeq, ref: TokenSeq) -> float:
    """Exact-match METEOR: F-mean weighted toward recall, discounted by the
    fragmentation penalty 0.5·(chunks/matches)³."""
    m, chunks = meteor_alignment(hyp, ref)
    if m == 0:
        return 0.0
    precision = m / len(hyp)
    recall = m / len(ref)
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1.0 - penalty)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, two-row dynamic program."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(hyp: TokenSeq, ref: TokenSeq) -> ScoreTriple:
    if len(hyp) == 0 or len(ref) == 0:
        return ScoreTriple(0.0, 0.0, 0.0)
    lcs = lcs_length(hyp.tokens, ref.tokens)
    precision = lcs / len(hyp)
    recall = lcs / len(ref)
    if precision + recall == 0.0:
        return ScoreTriple(0.0, 0.0, 0.0)
    f1 = 2.0 * precision * recall / (precision + recall)
    return ScoreTriple(precision, recall, f1)


class HashingEmbedder:
    """Deterministic token embedder: character 3-grams feature-hashed into
    a fixed-dimension unit vector. Offline stand-in for a trained encoder;
    any callable mapping tokens to unit vectors satisfies the contract."""

    def __init__(self, dim: int = 64):
        self.dim = dim
        self._cache: dict = {}

    def __call__(self, token: str) -> np.ndarray:
        cached = self._cache.get(token)
        if cached is not None:
            return cached
        vec = np.zeros(self.dim)
        padded = f"#{token}#"
        for i in range(len(padded) - 2):
            digest = hashlib.sha256(padded[i:i + 3].encode("utf-8")).digest()
            idx = int.from_bytes(digest[:4], "big") % self.dim
            vec[idx] += 1.0 if digest[4] % 2 == 0 else -1.0
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            vec[int.from_bytes(digest[:4], "big") % self.dim] = 1.0
            norm = 1.0
        vec = vec / norm
        vec.flags.writeable = False
        self._cache[token] = vec
        return vec


def bert_score(hyp: TokenSeq, ref: TokenSeq,
               embedder: Callable[[str], np.ndarray]) -> ScoreTriple:
    """Greedy max-cosine matching over token embeddings, no idf weighting.

    Per-token maxima clamp at zero so the score stays within [0, 1] even
    for embedders that can produce negative cosines.
    """
    if len(hyp) == 0 or len(ref) == 0:
        return ScoreTriple(0.0, 0.0, 0.0)
    try:
        hyp_vecs = np.stack([np.asarray(embedder(t), dtype=float) for t in hyp])
        ref_vecs = np.stack([np.asarray(embedder(t), dtype=float) for t in ref])
    except Exception as exc:
        raise EmbedderFailure(str(exc)) from exc
    sims = hyp_vecs @ ref_vecs.T
    precision = float(np.maximum(sims.max(axis=1), 0.0).mean())
    recall = float(np.maximum(sims.max(axis=0), 0.0).mean())
    if precision + recall == 0.0:
        return ScoreTriple(0.0, 0.0, 0.0)
    f1 = 2.0 * precision * recall / (precision + recall)
    return ScoreTriple(precision, recall, f1)


# aggregation ------------------------------------------------------------

METRIC_COLUMNS = ("bleu", "meteor", "rouge_l_precision", "bertscore_precision")


@dataclass(frozen=True)
class SampleScores:
    sample_id: str
    bleu: float
    meteor: float
    rouge_l_precision: float
    bertscore_precision: float

    def __post_init__(self):
        for name in METRIC_COLUMNS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def to_json(self) -> dict:
        return {"sample_id": self.sample_id,
                **{name: getattr(self, name) for name in METRIC_COLUMNS}}


@dataclass(frozen=True)
class MetricReport:
    task: TaskKind
    per_sample: tuple
    aggregate: dict

    def to_json(self) -> dict:
        return {"task": self.task.value,
                "per_sample": [row.to_json() for row in self.per_sample],
                "aggregate": dict(self.aggregate)}


def aggregate(rows: Sequence[SampleScores], task: TaskKind) -> MetricReport:
    """Arithmetic per-metric means over the verbatim per-sample rows."""
    rows = tuple(rows)
    if not rows:
        raise EmptyInput("no per-sample rows to aggregate")
    means = {name: fsum(getattr(r, name) for r in rows) / len(rows)
             for name in METRIC_COLUMNS}
    return MetricReport(task=TaskKind(task), per_sample=rows, aggregate=means)


def score_pair(sample_id: str, hypothesis: str, reference: str,
               embedder: Optional[Callable] = None) -> SampleScores:
    embedder = embedder or HashingEmbedder()
    hyp = tokenize(hypothesis)
    ref = tokenize(reference)
    return SampleScores(
        sample_id=sample_id,
        bleu=bleu(hyp, ref),
        meteor=meteor(hyp, ref),
        rouge_l_precision=rouge_l(hyp, ref).precision,
        bertscore_precision=bert_score(hyp, ref, embedder).precision,
    )


def evaluate_pairs(records: Sequence[dict], task: TaskKind,
                   embedder: Optional[Callable] = None) -> MetricReport:
    embedder = embedder or HashingEmbedder()
    rows = [score_pair(r["sample_id"], r["hypothesis"], r["reference"],
                       embedder) for r in records]
    return aggregate(rows, task)


# line-delimited I/O and report rendering -------------------------------

def read_pairs(path) -> list:
    """Line-delimited JSON records {sample_id, task, hypothesis, reference}."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            missing = {"sample_id", "hypothesis", "reference"} - obj.keys()
            if missing:
                raise ValueError(f"{path}:{lineno}: missing {sorted(missing)}")
            records.append(obj)
    return records


def report_to_csv(report: MetricReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", *METRIC_COLUMNS])
    for row in report.per_sample:
        writer.writerow([row.sample_id]
                        + [f"{getattr(row, m):.6f}" for m in METRIC_COLUMNS])
    writer.writerow(["mean"]
                    + [f"{report.aggregate[m]:.6f}" for m in METRIC_COLUMNS])
    return buf.getvalue()


def format_report(report: MetricReport) -> str:
    """Pretty table in the four-metric row shape, embedding score first."""
    agg = report.aggregate
    lines = [
        f"task: {report.task.value}  "
        f"(headline: BERTScore-P {agg['bertscore_precision']:.4f}, "
        f"ROUGE-L-P {agg['rouge_l_precision']:.4f})",
        f"{'sample':<16}{'BLEU':>8}{'METEOR':>8}{'ROUGE-L':>9}{'BERTScore':>11}",
    ]
    for row in report.per_sample:
        lines.append(f"{row.sample_id:<16}{row.bleu:>8.4f}{row.meteor:>8.4f}"
                     f"{row.rouge_l_precision:>9.4f}"
                     f"{row.bertscore_precision:>11.4f}")
    lines.append(f"{'mean':<16}{agg['bleu']:>8.4f}{agg['meteor']:>8.4f}"
                 f"{agg['rouge_l_precision']:>9.4f}"
                 f"{agg['bertscore_precision']:>11.4f}")
    return "\n".join(lines)
