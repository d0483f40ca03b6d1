"""Read/write conversation corpora and build deterministic splits.

The on-disk format is one JSON object per line. Turn order inside the
``turns`` array is positional; indices are assigned on read. Unknown keys
are rejected in strict mode and logged as warnings otherwise.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path

from .dialog import (
    Conversation,
    Device,
    Domain,
    Intent,
    Phase,
    Turn,
    TurnFlags,
    Utterance,
    validate,
)

logger = logging.getLogger(__name__)

_CONV_KEYS = {"id", "device", "domain", "resumed", "rating", "turns"}
_TURN_KEYS = {
    "user_text",
    "system_text",
    "intent",
    "rg",
    "phase",
    "user_start_ms",
    "user_end_ms",
    "system_start_ms",
    "system_end_ms",
    "asr_score",
    "is_step_reading",
    "step_text",
    "screen_id",
    "flags",
}
_FLAG_KEYS = set(TurnFlags.names())


class CorpusError(Exception):
    """Base class for corpus read failures."""


class CorpusParseError(CorpusError):
    """A line could not be parsed into the log schema."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class CorpusValidationError(CorpusError):
    """A parsed conversation violates a domain invariant."""

    def __init__(self, line_number: int, conversation_id: str, violations):
        details = "; ".join(
            f"{v.field}"
            + (f"[turn {v.turn_index}]" if v.turn_index is not None else "")
            + f": {v.message}"
            for v in violations
        )
        super().__init__(
            f"line {line_number}: conversation {conversation_id!r} invalid: {details}"
        )
        self.line_number = line_number
        self.violations = list(violations)


def _require(obj: dict, key: str, line: int):
    if key not in obj:
        raise CorpusParseError(line, f"missing key {key!r}")
    return obj[key]


def _parse_turn(obj: dict, index: int, line: int, strict: bool) -> Turn:
    if not isinstance(obj, dict):
        raise CorpusParseError(line, f"turn {index} is not an object")
    unknown = set(obj) - _TURN_KEYS
    if unknown:
        msg = f"turn {index} has unknown keys {sorted(unknown)}"
        if strict:
            raise CorpusParseError(line, msg)
        logger.warning("line %d: %s", line, msg)

    flags_obj = obj.get("flags", {})
    if not isinstance(flags_obj, dict):
        raise CorpusParseError(line, f"turn {index}: flags must be an object")
    unknown_flags = set(flags_obj) - _FLAG_KEYS
    if unknown_flags:
        msg = f"turn {index} has unknown flags {sorted(unknown_flags)}"
        if strict:
            raise CorpusParseError(line, msg)
        logger.warning("line %d: %s", line, msg)

    try:
        intent = Intent(_require(obj, "intent", line))
    except ValueError:
        raise CorpusParseError(line, f"turn {index}: unknown intent {obj.get('intent')!r}")
    try:
        phase = Phase(_require(obj, "phase", line))
    except ValueError:
        raise CorpusParseError(line, f"turn {index}: unknown phase {obj.get('phase')!r}")

    return Turn(
        index=index,
        user=Utterance(str(_require(obj, "user_text", line))),
        system=Utterance(str(_require(obj, "system_text", line))),
        intent=intent,
        response_generator=str(_require(obj, "rg", line)),
        phase=phase,
        user_start_ms=int(_require(obj, "user_start_ms", line)),
        user_end_ms=int(_require(obj, "user_end_ms", line)),
        system_start_ms=int(_require(obj, "system_start_ms", line)),
        system_end_ms=int(_require(obj, "system_end_ms", line)),
        asr_score=float(_require(obj, "asr_score", line)),
        is_step_reading=bool(obj.get("is_step_reading", False)),
        step_text=obj.get("step_text"),
        screen_id=obj.get("screen_id"),
        flags=TurnFlags(**{k: bool(v) for k, v in flags_obj.items() if k in _FLAG_KEYS}),
    )


def parse_conversation(obj: dict, line: int = 0, strict: bool = True) -> Conversation:
    """Build a Conversation from one decoded log record."""
    if not isinstance(obj, dict):
        raise CorpusParseError(line, "record is not an object")
    unknown = set(obj) - _CONV_KEYS
    if unknown:
        msg = f"unknown keys {sorted(unknown)}"
        if strict:
            raise CorpusParseError(line, msg)
        logger.warning("line %d: %s", line, msg)

    try:
        device = Device(_require(obj, "device", line))
    except ValueError:
        raise CorpusParseError(line, f"unknown device {obj.get('device')!r}")
    try:
        domain = Domain(_require(obj, "domain", line))
    except ValueError:
        raise CorpusParseError(line, f"unknown domain {obj.get('domain')!r}")

    turns_obj = _require(obj, "turns", line)
    if not isinstance(turns_obj, list):
        raise CorpusParseError(line, "turns must be an array")
    turns = tuple(
        _parse_turn(t, i, line, strict) for i, t in enumerate(turns_obj)
    )
    rating = obj.get("rating")
    return Conversation(
        id=str(_require(obj, "id", line)),
        device=device,
        domain=domain,
        resumed=bool(_require(obj, "resumed", line)),
        turns=turns,
        rating=None if rating is None else int(rating),
    )


def conversation_to_record(conv: Conversation) -> dict:
    """Inverse of ``parse_conversation``; key order is fixed for determinism."""
    return {
        "id": conv.id,
        "device": conv.device.value,
        "domain": conv.domain.value,
        "resumed": conv.resumed,
        "rating": conv.rating,
        "turns": [
            {
                "user_text": t.user.text,
                "system_text": t.system.text,
                "intent": t.intent.value,
                "rg": t.response_generator,
                "phase": t.phase.value,
                "user_start_ms": t.user_start_ms,
                "user_end_ms": t.user_end_ms,
                "system_start_ms": t.system_start_ms,
                "system_end_ms": t.system_end_ms,
                "asr_score": t.asr_score,
                "is_step_reading": t.is_step_reading,
                "step_text": t.step_text,
                "screen_id": t.screen_id,
                "flags": {
                    name: True
                    for name in TurnFlags.names()
                    if getattr(t.flags, name)
                },
            }
            for t in conv.turns
        ],
    }


def read_corpus(path: str | Path, strict: bool = True) -> list[Conversation]:
    """Parse and validate every record of a corpus file, preserving order.

    Raises CorpusParseError with a 1-based line number on malformed input
    and CorpusValidationError when a record breaks a domain invariant.
    """
    path = Path(path)
    conversations: list[Conversation] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_number, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(line_number, f"invalid JSON: {exc.msg}") from exc
            conv = parse_conversation(obj, line_number, strict)
            violations = [v for v in validate(conv) if v.severity == "error"]
            if violations:
                raise CorpusValidationError(line_number, conv.id, violations)
            for v in validate(conv):
                if v.severity == "warning":
                    logger.warning("line %d (%s): %s", line_number, conv.id, v.message)
            conversations.append(conv)
    return conversations


def write_corpus(conversations: list[Conversation], path: str | Path) -> None:
    """Write one JSON record per line; byte-deterministic for equal input."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for conv in conversations:
            fh.write(json.dumps(conversation_to_record(conv), ensure_ascii=False))
            fh.write("\n")


def filter_rated(
    conversations: list[Conversation], min_turns: int = 3
) -> list[Conversation]:
    """Keep rated conversations with at least ``min_turns`` turns, stable order."""
    if min_turns < 1:
        raise ValueError("min_turns must be >= 1")
    return [
        c for c in conversations if c.rating is not None and len(c.turns) >= min_turns
    ]


@dataclass(frozen=True)
class CorpusSplit:
    """Disjoint train/validation/test id lists covering a corpus."""

    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]
    seed: int
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def subset(
        self, conversations: list[Conversation], part: str
    ) -> list[Conversation]:
        ids = set(getattr(self, part))
        return [c for c in conversations if c.id in ids]


def split(
    conversations: list[Conversation],
    seed: int,
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> CorpusSplit:
    """Deterministic shuffled partition into train/validation/test.

    Validation and test sizes are floored; the remainder goes to train.
    """
    if len(conversations) < 3:
        raise ValueError("corpus must contain at least 3 conversations to split")
    if any(f <= 0 for f in fractions):
        raise ValueError("fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")

    ids = [c.id for c in conversations]
    rng = random.Random(seed)
    rng.shuffle(ids)

    n = len(ids)
    n_val = int(n * fractions[1])
    n_test = int(n * fractions[2])
    n_train = n - n_val - n_test
    return CorpusSplit(
        train=tuple(ids[:n_train]),
        validation=tuple(ids[n_train : n_train + n_val]),
        test=tuple(ids[n_train + n_val :]),
        seed=seed,
        fractions=fractions,
    )
