"""Per-instance utility in [0, 1] for all three output modalities.

Natural language uses a three-stage cascade (exact match, numeric
relative error, capped lexical blend).  Time series combines sMAPE and
MAAPE.  Tabular is top-1 accuracy for classification and the
time-series rule for regression.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from difflib import SequenceMatcher
from typing import Sequence

from eywa.bench import Series

# Denominator floor shared by sMAPE and MAAPE.
EPSILON = 1e-2

# Lexical-stage blend weights and cap.
ALPHA = 0.6
BETA = 0.4
TAU = 0.8

_UNICODE_MAP = str.maketrans(
    {
        "\u2018": "'",
        "\u2019": "'",
        "\u201a": "'",
        "\u201c": '"',
        "\u201d": '"',
        "\u201e": '"',
        "\u2013": "-",
        "\u2014": "-",
        "\u2212": "-",
        "\u00a0": " ",
        "\u00d7": "x",
    }
)

_WS_RUN = re.compile(r"\s+")

_FLOAT = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")

_TOKEN = re.compile(r"\\[A-Za-z]+|[A-Za-z]+|[+-]?\d+(?:\.\d+)?|\S")


class MetricError(ValueError):
    """Raised for structurally invalid scorer inputs."""


@dataclass(frozen=True)
class UtilityScore:
    value: float
    stage: str
    terms: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise MetricError(f"utility {self.value} out of [0, 1]")


@dataclass(frozen=True)
class SliceSummary:
    mean_utility: float
    sample_std: float
    n: int


def normalize_text(s: str) -> str:
    """Canonicalize an answer string: map Unicode variants to ASCII,
    drop quote characters, trim, collapse inner whitespace."""
    s = s.translate(_UNICODE_MAP)
    s = s.replace('"', "").replace("'", "")
    return _WS_RUN.sub(" ", s).strip()


def tokenize_answer(s: str) -> list[str]:
    """Split a normalized answer into backslash commands, words, numbers,
    and single symbols.  A sign attaches to a number only at the string
    start or after whitespace; otherwise it is its own symbol token."""
    tokens = []
    for m in _TOKEN.finditer(s):
        tok = m.group()
        if tok[0] in "+-" and len(tok) > 1 and tok[1].isdigit():
            if m.start() > 0 and not s[m.start() - 1].isspace():
                tokens.append(tok[0])
                tok = tok[1:]
        tokens.append(tok)
    return tokens


def token_f1(pred_tokens: Sequence[str], gold_tokens: Sequence[str]) -> float:
    """Multiset-overlap F1 between two token sequences."""
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def char_similarity(a: str, b: str) -> float:
    """Ratcliff/Obershelp ratio 2M/T on the given strings.

    Junk detection is disabled so long strings score deterministically.
    """
    if not a and not b:
        return 1.0
    return SequenceMatcher(None, a, b, autojunk=False).ratio()


def _parse_single_float(s: str) -> float | None:
    if _FLOAT.match(s):
        try:
            return float(s)
        except ValueError:
            return None
    return None


def score_natural_language(pred: str, gold: str) -> UtilityScore:
    """Three-stage cascade: exact match, numeric relative error, then a
    capped blend of token F1 and character similarity."""
    p = normalize_text(pred)
    g = normalize_text(gold)
    if p == g:
        return UtilityScore(value=1.0, stage="exact")
    pf = _parse_single_float(p)
    gf = _parse_single_float(g)
    if pf is not None and gf is not None:
        e_rel = abs(pf - gf) / max(abs(gf), 1e-12)
        return UtilityScore(
            value=math.exp(-e_rel), stage="numeric", terms={"e_rel": e_rel}
        )
    f1 = token_f1(tokenize_answer(p), tokenize_answer(g))
    s_char = char_similarity(p, g)
    value = min(TAU, ALPHA * f1 + BETA * s_char)
    return UtilityScore(
        value=value, stage="lexical", terms={"F1_tok": f1, "S_char": s_char}
    )


def _smape_maape(gold: Sequence[float], pred: Sequence[float]) -> tuple[float, float]:
    h = len(gold)
    smape = sum(
        2 * abs(y - yh) / max(abs(y) + abs(yh), EPSILON)
        for y, yh in zip(gold, pred)
    ) / h
    idx = [t for t in range(h) if abs(gold[t]) > EPSILON]
    if idx:
        maape = sum(
            math.atan(abs(gold[t] - pred[t]) / max(abs(gold[t]), EPSILON))
            for t in idx
        ) / len(idx)
    else:
        maape = 0.0
    return smape, maape


def _score_numeric_sequences(
    gold: Sequence[float], pred: Sequence[float], stage: str
) -> UtilityScore:
    if len(pred) != len(gold):
        raise MetricError(
            f"length mismatch: pred has {len(pred)}, gold has {len(gold)}"
        )
    if not gold:
        raise MetricError("empty sequences")
    for v in (*gold, *pred):
        if not math.isfinite(v):
            raise MetricError("non-finite value")
    smape, maape = _smape_maape(gold, pred)
    value = 1.0 - 0.5 * (smape / 2.0 + maape / (math.pi / 2.0))
    return UtilityScore(
        value=value, stage=stage, terms={"sMAPE": smape, "MAAPE": maape}
    )


def score_time_series(pred: Series, gold: Series) -> UtilityScore:
    """Utility 1 - (sMAPE/2 + MAAPE/(pi/2))/2, values aligned by position."""
    return _score_numeric_sequences(gold.values, pred.values, "ts-combined")


def score_tabular(
    pred: Sequence, gold: Sequence, kind: str = "classification"
) -> UtilityScore:
    """Top-1 accuracy for classification; the time-series rule applied
    row-wise for regression."""
    if len(pred) != len(gold):
        raise MetricError(
            f"length mismatch: pred has {len(pred)}, gold has {len(gold)}"
        )
    if not gold:
        raise MetricError("empty sequences")
    if kind == "classification":
        hits = sum(
            normalize_text(str(p)) == normalize_text(str(g))
            for p, g in zip(pred, gold)
        )
        return UtilityScore(value=hits / len(gold), stage="accuracy")
    if kind == "regression":
        try:
            gold_v = [float(g) for g in gold]
            pred_v = [float(p) for p in pred]
        except (TypeError, ValueError) as exc:
            raise MetricError(f"non-numeric regression cell: {exc}") from None
        return _score_numeric_sequences(gold_v, pred_v, "regression")
    raise MetricError(f"unknown tabular kind {kind!r}")


def aggregate(scores: Sequence[UtilityScore | float]) -> SliceSummary:
    """Unweighted mean and sample (n-1) standard deviation."""
    if not scores:
        raise MetricError("empty score sequence")
    values = [s.value if isinstance(s, UtilityScore) else float(s) for s in scores]
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        std = 0.0
    else:
        std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))
    return SliceSummary(mean_utility=mean, sample_std=std, n=n)
