"""Behavioral feature vector computed at the final turn of a conversation.

The canonical slot order is fixed by ``FEATURE_NAMES``: general features,
system-induced features, then CTA-specific features (scalar counts, one
slot per phase, one slot per intent). All values are finite float64;
counts and booleans are stored as reals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .dialog import Conversation, Device, Intent, Phase, Turn, Utterance

GENERAL_FEATURES = (
    "session_duration_s",
    "turn_duration_s",
    "avg_turn_duration_s",
    "max_turn_duration_s",
    "turns",
    "utterance_pos",
    "utterance_neg",
    "avg_utterance_pos",
    "avg_utterance_neg",
    "offensive_turns",
    "sensitive_turns",
    "user_word_overlap",
    "system_word_overlap",
    "user_system_word_overlap",
    "avg_user_word_overlap",
    "avg_system_word_overlap",
    "avg_user_system_word_overlap",
    "words_user",
    "words_system",
    "avg_words_user",
    "avg_words_system",
    "unique_user_words",
    "unique_system_words",
)

SYSTEM_INDUCED_FEATURES = (
    "user_latency_s",
    "avg_user_latency_s",
    "max_user_latency_s",
    "system_latency_s",
    "avg_system_latency_s",
    "max_system_latency_s",
    "asr_score",
    "avg_asr_score",
    "min_asr_score",
)

PHASE_FEATURES = tuple(f"phase_{p.value}" for p in Phase)
INTENT_FEATURES = tuple(f"intent_{i.value}" for i in Intent)

CTA_FEATURES = (
    "steps_read",
    "repeated_user_utterance",
    "repeated_system_utterance",
    "resumed",
    "has_screen",
    "screens",
    "searches",
    "repeated_searches",
    "result_pages",
    "started_task",
    "finished_task",
    "fallback_exceptions",
    "domain",
    "curiosities_accepted",
    "curiosities_denied",
    "curiosities_said",
) + PHASE_FEATURES + INTENT_FEATURES

FEATURE_NAMES: tuple[str, ...] = (
    GENERAL_FEATURES + SYSTEM_INDUCED_FEATURES + CTA_FEATURES
)

N_FEATURES = len(FEATURE_NAMES)

_NAME_TO_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}


def feature_index(name: str) -> int:
    """Canonical slot index of a feature name; KeyError on unknown names."""
    return _NAME_TO_INDEX[name]


@dataclass(frozen=True)
class FeatureVector:
    """The canonical behavioral vector, addressable by slot name."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} slots, got shape {v.shape}")
        if not np.isfinite(v).all():
            bad = FEATURE_NAMES[int(np.flatnonzero(~np.isfinite(v))[0])]
            raise ValueError(f"non-finite value in slot {bad!r}")
        object.__setattr__(self, "values", v)

    def __getitem__(self, name: str) -> float:
        return float(self.values[_NAME_TO_INDEX[name]])

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(FEATURE_NAMES, self.values)}


@dataclass(frozen=True)
class Lexicons:
    """Word lists backing the sentiment and content-flag proxies."""

    positive: frozenset[str]
    negative: frozenset[str]
    offensive: frozenset[str] = frozenset()
    sensitive: frozenset[str] = frozenset()


def load_wordlist(path: str | Path) -> frozenset[str]:
    """One lowercase word per line; blank lines and '#' comments ignored."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip().lower()
        if word and not word.startswith("#"):
            words.add(word)
    return frozenset(words)


def load_lexicons(directory: str | Path | None = None) -> Lexicons:
    """Load lexicons from a directory, falling back to the shipped defaults.

    Expected filenames: positive.txt, negative.txt, offensive.txt,
    sensitive.txt. Missing optional files (offensive/sensitive) load empty.
    """
    if directory is None:
        base = resources.files("cta_rater").joinpath("data")
        with resources.as_file(base) as p:
            return load_lexicons(p)
    directory = Path(directory)

    def load(name: str, required: bool) -> frozenset[str]:
        p = directory / name
        if not p.exists():
            if required:
                raise FileNotFoundError(f"missing lexicon file {p}")
            return frozenset()
        return load_wordlist(p)

    return Lexicons(
        positive=load("positive.txt", required=True),
        negative=load("negative.txt", required=True),
        offensive=load("offensive.txt", required=False),
        sensitive=load("sensitive.txt", required=False),
    )


def apply_content_flags(conv: Conversation, lexicons: Lexicons) -> Conversation:
    """Set offensive/sensitive turn flags by wordlist match at ingest.

    Used when the log source did not annotate content flags itself; flags
    already present are kept.
    """
    new_turns = []
    for t in conv.turns:
        toks = set(t.user.tokens)
        offensive = t.flags.offensive or bool(toks & lexicons.offensive)
        sensitive = t.flags.sensitive or bool(toks & lexicons.sensitive)
        if offensive != t.flags.offensive or sensitive != t.flags.sensitive:
            t = replace(
                t, flags=replace(t.flags, offensive=offensive, sensitive=sensitive)
            )
        new_turns.append(t)
    return replace(conv, turns=tuple(new_turns))


def word_overlap(a: Utterance, b: Utterance) -> float:
    """Jaccard overlap of the two token sets; 0.0 when both are empty."""
    sa, sb = set(a.tokens), set(b.tokens)
    union = sa | sb
    if not union:
        return 0.0
    return len(sa & sb) / len(union)


def _turn_duration_s(t: Turn) -> float:
    return (t.system_end_ms - t.user_start_ms) / 1000.0


def _user_latency_s(turns: tuple[Turn, ...], i: int) -> float:
    if i == 0:
        return 0.0
    return (turns[i].user_start_ms - turns[i - 1].system_end_ms) / 1000.0


def _system_latency_s(t: Turn) -> float:
    return (t.system_start_ms - t.user_end_ms) / 1000.0


def extract_general(conv: Conversation, lexicons: Lexicons) -> dict[str, float]:
    """The general feature group, keyed by canonical slot name."""
    turns = conv.turns
    n = len(turns)
    last = turns[-1]
    durations = [_turn_duration_s(t) for t in turns]

    pos = sum(1 for t in turns if set(t.user.tokens) & lexicons.positive)
    neg = sum(1 for t in turns if set(t.user.tokens) & lexicons.negative)

    if n >= 2:
        prev = turns[-2]
        user_ov = word_overlap(prev.user, last.user)
        system_ov = word_overlap(prev.system, last.system)
        user_system_ov = word_overlap(prev.system, last.user)
        avg_user_ov = float(
            np.mean([word_overlap(turns[i - 1].user, turns[i].user) for i in range(1, n)])
        )
        avg_system_ov = float(
            np.mean(
                [word_overlap(turns[i - 1].system, turns[i].system) for i in range(1, n)]
            )
        )
        avg_user_system_ov = float(
            np.mean(
                [word_overlap(turns[i - 1].system, turns[i].user) for i in range(1, n)]
            )
        )
        unique_user = len(set(last.user.tokens) - set(prev.user.tokens))
        unique_system = len(set(last.system.tokens) - set(prev.system.tokens))
    else:
        user_ov = system_ov = user_system_ov = 0.0
        avg_user_ov = avg_system_ov = avg_user_system_ov = 0.0
        unique_user = len(set(last.user.tokens))
        unique_system = len(set(last.system.tokens))

    return {
        "session_duration_s": (turns[-1].system_end_ms - turns[0].user_start_ms) / 1000.0,
        "turn_duration_s": durations[-1],
        "avg_turn_duration_s": float(np.mean(durations)),
        "max_turn_duration_s": float(np.max(durations)),
        "turns": float(n),
        "utterance_pos": float(pos),
        "utterance_neg": float(neg),
        "avg_utterance_pos": pos / n,
        "avg_utterance_neg": neg / n,
        "offensive_turns": float(sum(1 for t in turns if t.flags.offensive)),
        "sensitive_turns": float(sum(1 for t in turns if t.flags.sensitive)),
        "user_word_overlap": user_ov,
        "system_word_overlap": system_ov,
        "user_system_word_overlap": user_system_ov,
        "avg_user_word_overlap": avg_user_ov,
        "avg_system_word_overlap": avg_system_ov,
        "avg_user_system_word_overlap": avg_user_system_ov,
        "words_user": float(len(last.user.tokens)),
        "words_system": float(len(last.system.tokens)),
        "avg_words_user": float(np.mean([len(t.user.tokens) for t in turns])),
        "avg_words_system": float(np.mean([len(t.system.tokens) for t in turns])),
        "unique_user_words": float(unique_user),
        "unique_system_words": float(unique_system),
    }


def extract_system_induced(conv: Conversation) -> dict[str, float]:
    """Latency and ASR-confidence features.

    The per-turn slots use the final turn; aggregates run over all turns
    with the first turn's user latency defined as 0. The ASR aggregate is
    the minimum: low confidence is the informative tail.
    """
    turns = conv.turns
    n = len(turns)
    user_lat = [_user_latency_s(turns, i) for i in range(n)]
    sys_lat = [_system_latency_s(t) for t in turns]
    asr = [t.asr_score for t in turns]
    return {
        "user_latency_s": user_lat[-1],
        "avg_user_latency_s": float(np.mean(user_lat)),
        "max_user_latency_s": float(np.max(user_lat)),
        "system_latency_s": sys_lat[-1],
        "avg_system_latency_s": float(np.mean(sys_lat)),
        "max_system_latency_s": float(np.max(sys_lat)),
        "asr_score": asr[-1],
        "avg_asr_score": float(np.mean(asr)),
        "min_asr_score": float(np.min(asr)),
    }


def extract_cta(conv: Conversation) -> dict[str, float]:
    """Task-assistant specific counts, phases, and intents."""
    turns = conv.turns

    repeated_user = sum(
        1
        for i in range(1, len(turns))
        if turns[i].user.tokens and turns[i].user.tokens == turns[i - 1].user.tokens
    )
    repeated_system = sum(
        1
        for i in range(1, len(turns))
        if turns[i].system.tokens
        and turns[i].system.tokens == turns[i - 1].system.tokens
    )

    search_queries: list[tuple[str, ...]] = []
    repeated_searches = 0
    for t in turns:
        if t.flags.search_request:
            if t.user.tokens in search_queries:
                repeated_searches += 1
            search_queries.append(t.user.tokens)

    out = {
        "steps_read": float(sum(1 for t in turns if t.is_step_reading)),
        "repeated_user_utterance": float(repeated_user),
        "repeated_system_utterance": float(repeated_system),
        "resumed": float(conv.resumed),
        "has_screen": float(conv.device is Device.SCREEN),
        "screens": float(len({t.screen_id for t in turns if t.screen_id is not None})),
        "searches": float(sum(1 for t in turns if t.flags.search_request)),
        "repeated_searches": float(repeated_searches),
        "result_pages": float(sum(1 for t in turns if t.flags.result_page_shown)),
        "started_task": float(any(t.flags.task_started for t in turns)),
        "finished_task": float(any(t.flags.task_finished for t in turns)),
        "fallback_exceptions": float(sum(1 for t in turns if t.flags.fallback)),
        "domain": float(conv.domain.numeric),
        "curiosities_accepted": float(
            sum(1 for t in turns if t.flags.curiosity_accepted)
        ),
        "curiosities_denied": float(sum(1 for t in turns if t.flags.curiosity_denied)),
        "curiosities_said": float(sum(1 for t in turns if t.flags.curiosity_said)),
    }
    for phase in Phase:
        out[f"phase_{phase.value}"] = float(
            sum(1 for t in turns if t.phase is phase)
        )
    for intent in Intent:
        out[f"intent_{intent.value}"] = float(
            sum(1 for t in turns if t.intent is intent)
        )
    return out


def extract(conv: Conversation, lexicons: Lexicons) -> FeatureVector:
    """Concatenate the three groups in canonical slot order."""
    named = {}
    named.update(extract_general(conv, lexicons))
    named.update(extract_system_induced(conv))
    named.update(extract_cta(conv))
    return FeatureVector(np.array([named[n] for n in FEATURE_NAMES]))


def extract_matrix(
    conversations: list[Conversation], lexicons: Lexicons
) -> tuple[list[str], np.ndarray, list[int | None]]:
    """Feature rows for a corpus: (ids, matrix, ratings), row order preserved."""
    ids = [c.id for c in conversations]
    X = np.stack([extract(c, lexicons).values for c in conversations]) if conversations else np.zeros((0, N_FEATURES))
    ratings = [c.rating for c in conversations]
    return ids, X, ratings


@dataclass(frozen=True)
class StandardizeStats:
    """Per-slot training mean and standard deviation."""

    mean: np.ndarray
    std: np.ndarray


def standardize(
    X: np.ndarray, stats: StandardizeStats | None = None
) -> tuple[np.ndarray, StandardizeStats]:
    """Z-score per slot; fit on the input when stats is None, else apply.

    Constant slots (sd below 1e-12) divide by 1. Population sd (ddof=0).
    """
    X = np.asarray(X, dtype=np.float64)
    if not np.isfinite(X).all():
        col = int(np.flatnonzero(~np.isfinite(X).all(axis=0))[0])
        raise ValueError(f"non-finite input in slot {FEATURE_NAMES[col]!r}")
    if stats is None:
        if X.shape[0] == 0:
            raise ValueError("cannot fit standardization stats on an empty matrix")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        stats = StandardizeStats(mean=mean, std=std)
    return (X - stats.mean) / stats.std, stats


def write_features_csv(
    path: str | Path,
    ids: list[str],
    X: np.ndarray,
    ratings: list[int | None],
) -> None:
    """Feature matrix as CSV: conversation_id, canonical slots, rating."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["conversation_id", *FEATURE_NAMES, "rating"])
        for cid, row, rating in zip(ids, X, ratings):
            writer.writerow(
                [cid, *(repr(float(v)) for v in row), "" if rating is None else rating]
            )


def read_features_csv(
    path: str | Path,
) -> tuple[list[str], np.ndarray, list[int | None]]:
    """Inverse of ``write_features_csv``; header must match the canonical order."""
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = ["conversation_id", *FEATURE_NAMES, "rating"]
        if header != expected:
            raise ValueError("feature CSV header does not match canonical slot order")
        ids, rows, ratings = [], [], []
        for row in reader:
            ids.append(row[0])
            rows.append([float(v) for v in row[1 : 1 + N_FEATURES]])
            ratings.append(None if row[-1] == "" else int(row[-1]))
    X = np.array(rows, dtype=np.float64) if rows else np.zeros((0, N_FEATURES))
    return ids, X, ratings
