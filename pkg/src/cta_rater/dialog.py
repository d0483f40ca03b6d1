"""Domain types for conversational task assistant logs.

Everything here is immutable after construction and safe to share across
threads. Construction does not validate; ``validate`` reports violations
as data so that ingest can decide whether to raise or warn.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from enum import Enum

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Canonical tokenization: lowercase, split on whitespace/punctuation.

    Punctuation-only fragments are dropped (underscore counts as
    punctuation). Deterministic; empty input yields an empty list.
    """
    return _WORD_RE.findall(text.lower())


class Intent(Enum):
    """Closed 15-way set of user intents, as labeled in the log."""

    SEARCH = "search"
    NONE_OF_THESE = "none_of_these"
    CANCEL = "cancel"
    YES = "yes"
    NO = "no"
    INGREDIENTS = "ingredients"
    START_COOKING = "start_cooking"
    START_STEPS = "start_steps"
    NEXT = "next"
    NEXT_STEP = "next_step"
    MORE_DETAIL = "more_detail"
    TERMINATE_TASK = "terminate_task"
    HELP = "help"
    REPEAT = "repeat"
    FALLBACK = "fallback"


class Phase(Enum):
    """Coarse dialog stage of a turn."""

    GREETING = "greeting"
    SEARCH = "search"
    TASK_OVERVIEW = "task_overview"
    INGREDIENTS = "ingredients"
    STEPS = "steps"
    STEP_DETAIL = "step_detail"
    CONCLUSION = "conclusion"


class Domain(Enum):
    """Task domain; numeric encoding is the feature value."""

    NONE = "none"
    RECIPE = "recipe"
    DIY = "diy"

    @property
    def numeric(self) -> int:
        return _DOMAIN_NUMERIC[self]


_DOMAIN_NUMERIC = {Domain.NONE: 0, Domain.RECIPE: 1, Domain.DIY: 2}


class Device(Enum):
    HEADLESS = "headless"
    SCREEN = "screen"


@dataclass(frozen=True)
class Utterance:
    """Raw surface form plus its cached canonical tokenization."""

    text: str
    tokens: tuple[str, ...] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(tokenize(self.text)))


@dataclass(frozen=True)
class TurnFlags:
    """Per-turn boolean signals carried in the log (absent = false)."""

    offensive: bool = False
    sensitive: bool = False
    search_request: bool = False
    result_page_shown: bool = False
    curiosity_said: bool = False
    curiosity_accepted: bool = False
    curiosity_denied: bool = False
    task_started: bool = False
    task_finished: bool = False
    fallback: bool = False

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class Turn:
    """One user/system exchange with its log-level annotations."""

    index: int
    user: Utterance
    system: Utterance
    intent: Intent
    response_generator: str
    phase: Phase
    user_start_ms: int
    user_end_ms: int
    system_start_ms: int
    system_end_ms: int
    asr_score: float
    is_step_reading: bool = False
    step_text: str | None = None
    screen_id: str | None = None
    flags: TurnFlags = TurnFlags()


@dataclass(frozen=True)
class Conversation:
    """Ordered turns plus session metadata; the unit of prediction."""

    id: str
    device: Device
    domain: Domain
    resumed: bool
    turns: tuple[Turn, ...]
    rating: int | None = None


@dataclass(frozen=True)
class Violation:
    """A single invariant violation found by ``validate``.

    ``severity`` is "error" for hard invariant breaks and "warning" for
    soft inconsistencies (e.g. fallback intent without the fallback flag).
    """

    field: str
    message: str
    turn_index: int | None = None
    severity: str = "error"


def validate(conversation: Conversation) -> list[Violation]:
    """Return every invariant violation; empty iff the conversation is valid.

    Violations are data, not failures: callers choose whether to raise.
    Warnings (severity "warning") do not make a conversation invalid.
    """
    out: list[Violation] = []
    c = conversation

    if not c.turns:
        out.append(Violation("turns", "conversation has no turns"))
        return out

    if c.rating is not None and c.rating not in (1, 2, 3, 4, 5):
        out.append(Violation("rating", f"rating {c.rating} outside 1..5"))

    prev_end: int | None = None
    for i, turn in enumerate(c.turns):
        if turn.index != i:
            out.append(
                Violation("index", f"expected index {i}, got {turn.index}", i)
            )
        ts = (
            turn.user_start_ms,
            turn.user_end_ms,
            turn.system_start_ms,
            turn.system_end_ms,
        )
        if not (ts[0] <= ts[1] <= ts[2] <= ts[3]):
            out.append(
                Violation(
                    "timestamps",
                    f"turn timestamps not ordered: {ts}",
                    i,
                )
            )
        if prev_end is not None and turn.user_start_ms < prev_end:
            out.append(
                Violation(
                    "timestamps",
                    f"user_start_ms {turn.user_start_ms} precedes previous "
                    f"system_end_ms {prev_end}",
                    i,
                )
            )
        prev_end = turn.system_end_ms

        if not 0.0 <= turn.asr_score <= 1.0:
            out.append(
                Violation("asr_score", f"asr_score {turn.asr_score} outside [0,1]", i)
            )
        if turn.is_step_reading and turn.step_text is None:
            out.append(Violation("step_text", "step-reading turn without step_text", i))
        if not turn.is_step_reading and turn.step_text is not None:
            out.append(Violation("step_text", "step_text on a non-step turn", i))
        if (turn.intent is Intent.FALLBACK) != turn.flags.fallback:
            out.append(
                Violation(
                    "fallback",
                    "fallback intent and fallback flag disagree",
                    i,
                    severity="warning",
                )
            )
    return out


def is_valid(conversation: Conversation) -> bool:
    """True iff ``validate`` reports no error-severity violations."""
    return not any(v.severity == "error" for v in validate(conversation))
