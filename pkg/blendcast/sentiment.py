"""Lexicon and rule based headline scoring (a VADER-compatible subset).

Implemented rules: lexicon lookup, degree boosters up to three tokens back
(damped 1.0 / 0.95 / 0.9 by distance), negation of a rating by each negator
among the three preceding tokens (x -0.74), and the ``s / sqrt(s^2 + 15)``
normalisation. ALL-CAPS emphasis, ``!``/``?`` amplification, "but" clauses,
"no"/"least" special cases and idioms are not implemented.
"""
import logging
import math
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Union

import numpy as np
import pandas as pd

from .dataset import COMPOUND_COLUMNS, CSV_COLUMNS, parse_dates, read_csv_strict
from .errors import DataError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

ALPHA = 15.0
NEGATION_SCALAR = -0.74
BOOSTER_INCREMENT = 0.293
BOOSTER_DAMPING = (1.0, 0.95, 0.9)

HEADLINE_COLUMNS = ("date", "source", "title")
PRICE_COLUMNS = ("date", "adj_close")
SOURCES = COMPOUND_COLUMNS

NEGATORS = frozenset([
    "aint", "arent", "cannot", "cant", "couldnt", "darent", "didnt", "doesnt",
    "ain't", "aren't", "can't", "couldn't", "daren't", "didn't", "doesn't",
    "dont", "hadnt", "hasnt", "havent", "isnt", "mightnt", "mustnt", "neither",
    "don't", "hadn't", "hasn't", "haven't", "isn't", "mightn't", "mustn't",
    "neednt", "needn't", "never", "none", "nope", "nor", "not", "nothing", "nowhere",
    "oughtnt", "shant", "shouldnt", "uhuh", "wasnt", "werent",
    "oughtn't", "shan't", "shouldn't", "uh-uh", "wasn't", "weren't",
    "without", "wont", "wouldnt", "won't", "wouldn't", "rarely", "seldom", "despite",
])

_UP = [
    "absolutely", "amazingly", "awfully", "completely", "considerable", "considerably",
    "decidedly", "deeply", "effing", "enormous", "enormously", "entirely", "especially",
    "exceptional", "exceptionally", "extreme", "extremely", "fabulously", "flipping",
    "flippin", "frackin", "fracking", "fricking", "frickin", "frigging", "friggin",
    "fully", "fuckin", "fucking", "fuggin", "fugging", "greatly", "hella", "highly",
    "hugely", "incredible", "incredibly", "intensely", "major", "majorly", "more", "most",
    "particularly", "purely", "quite", "really", "remarkably", "so", "substantially",
    "thoroughly", "total", "totally", "tremendous", "tremendously", "uber", "unbelievably",
    "unusually", "utter", "utterly", "very",
]
_DOWN = [
    "almost", "barely", "hardly", "just enough", "kind of", "kinda", "kindof", "kind-of",
    "less", "little", "marginal", "marginally", "occasional", "occasionally", "partly",
    "scarce", "scarcely", "slight", "slightly", "somewhat", "sort of", "sorta", "sortof", "sort-of",
]
BOOSTERS: Dict[str, float] = {**{w: BOOSTER_INCREMENT for w in _UP}, **{w: -BOOSTER_INCREMENT for w in _DOWN}}


@dataclass(frozen=True)
class Lexicon:
    valences: Dict[str, float]
    boosters: Dict[str, float] = field(default_factory=lambda: dict(BOOSTERS))
    negators: FrozenSet[str] = NEGATORS

    def __len__(self) -> int:
        return len(self.valences)

    def __contains__(self, token: str) -> bool:
        return token in self.valences


@dataclass(frozen=True)
class SentimentResult:
    compound: float
    raw_sum: float
    token_count: int


def parse_lexicon(path: PathLike) -> Lexicon:
    """Reads ``token<TAB>mean valence[<TAB>ignored...]`` lines; a repeated token keeps its last value"""
    valences: Dict[str, float] = {}
    lines = 0
    try:
        handle = open(path, encoding="utf-8")
    except FileNotFoundError:
        raise DataError("lexicon file not found", str(path))
    with handle:
        for number, line in enumerate(handle, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            lines += 1
            parts = line.split("\t")
            if len(parts) < 2:
                raise DataError(f"expected token<TAB>valence, got {line!r}", str(path), number)
            token = parts[0].strip().lower()
            try:
                valence = float(parts[1])
            except ValueError:
                raise DataError(f"valence {parts[1]!r} for {token!r} is not a number", str(path), number)
            if not math.isfinite(valence):
                raise DataError(f"valence for {token!r} is not finite", str(path), number)
            if token in valences:
                logger.warning("%s:%d: duplicate token %r, keeping the later valence", path, number, token)
            valences[token] = valence
    if not valences:
        raise DataError("lexicon is empty", str(path))
    logger.info("%s: %d lexicon lines, %d tokens", path, lines, len(valences))
    return Lexicon(valences=valences)


def tokenize(text: str) -> List[str]:
    """Whitespace split; surrounding punctuation is stripped unless that leaves two characters or fewer"""
    tokens = []
    for raw in text.split():
        stripped = raw.strip(string.punctuation)
        tokens.append(raw if len(stripped) <= 2 else stripped)
    return tokens


def normalize(raw_sum: float, alpha: float = ALPHA) -> float:
    if raw_sum == 0.0:
        return 0.0
    return max(-1.0, min(1.0, raw_sum / math.sqrt(raw_sum * raw_sum + alpha)))


def _is_negator(lex: Lexicon, token: str) -> bool:
    return token in lex.negators or "n't" in token


def _token_valence(lex: Lexicon, lowered: List[str], i: int) -> float:
    valence = lex.valences[lowered[i]]
    for distance in range(1, 4):
        if i < distance:
            break
        before = lowered[i - distance]
        if before in lex.valences:
            # rated words never act as modifiers
            continue
        if before in lex.boosters:
            bump = lex.boosters[before] if valence >= 0 else -lex.boosters[before]
            valence += bump * BOOSTER_DAMPING[distance - 1]
        if _is_negator(lex, before):
            valence *= NEGATION_SCALAR
    return valence


def compound_score(lex: Lexicon, title: str) -> SentimentResult:
    tokens = tokenize(title or "")
    lowered = [t.lower() for t in tokens]
    raw_sum = 0.0
    for i, token in enumerate(lowered):
        if token in lex.boosters or token not in lex.valences:
            continue
        raw_sum += _token_valence(lex, lowered, i)
    return SentimentResult(compound=normalize(raw_sum), raw_sum=raw_sum, token_count=len(tokens))


def score_headlines_csv(path: PathLike, lex: Lexicon) -> pd.DataFrame:
    """Mean compound per (date, source), pivoted into one row per date.

    A source without a headline on some date leaves that cell empty (NaN).
    """
    frame = read_csv_strict(path, HEADLINE_COLUMNS)
    frame = frame.dropna(subset=["date", "source"])
    if frame.empty:
        raise DataError("no headlines", str(path))
    frame["title"] = frame["title"].fillna("")
    frame["source"] = frame["source"].str.lower()
    unknown = sorted(set(frame["source"]) - set(SOURCES))
    if unknown:
        raise DataError(f"unknown source(s) {unknown}, allowed: {list(SOURCES)}", str(path))

    frame["date"] = parse_dates(frame["date"], path)
    frame["compound"] = [compound_score(lex, title).compound for title in frame["title"]]
    daily = frame.groupby(["date", "source"])["compound"].mean().unstack("source")
    daily = daily.reindex(columns=list(SOURCES)).sort_index()
    daily.index.name = "date"
    logger.info("%s: scored %d headlines over %d dates", path, len(frame), len(daily))
    return daily


def merge_prices(compounds: pd.DataFrame, prices_csv: PathLike) -> pd.DataFrame:
    """Left-joins daily compounds onto the trading days of ``prices_csv``; the result has the dataset schema"""
    prices = read_csv_strict(prices_csv, PRICE_COLUMNS).dropna(subset=["date"])
    if prices.empty:
        raise DataError("no price rows", str(prices_csv))
    prices["date"] = parse_dates(prices["date"], prices_csv)
    prices = prices.set_index("date")
    merged = prices.join(compounds, how="left")
    merged = merged.reset_index()[list(CSV_COLUMNS)]
    return merged.sort_values("date", kind="stable").reset_index(drop=True)


def to_dataset_frame(compounds: pd.DataFrame) -> pd.DataFrame:
    "Compounds without prices; adj_close stays empty until merged"
    frame = compounds.reset_index()
    frame["adj_close"] = np.nan
    return frame[list(CSV_COLUMNS)]


def write_dataset_csv(frame: pd.DataFrame, path: PathLike) -> None:
    out = frame.copy()
    out["date"] = [d.isoformat() for d in out["date"]]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    out.to_csv(path, index=False, na_rep="")

