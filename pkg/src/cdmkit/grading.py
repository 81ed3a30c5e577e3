"""Deterministic grading of raw model outputs against an answer key.

The default rule handles multiple-choice answers: the first standalone
choice-letter (or run of letters for multi-select keys) found in the
uppercased output is compared against the key.  Extraction failure is a
score of 0 plus a logged warning — grading never raises on messy output.
"""

from __future__ import annotations

import logging
import re
from typing import Callable, Protocol

log = logging.getLogger(__name__)

# A standalone run of choice letters: not butting up against other
# letters/digits on either side, so the "C" in "CASH" never matches but
# "(C)", "C.", "答案：C" and bare "ABD" all do.
_CHOICE_RUN = re.compile(r"(?<![A-Z0-9])[A-D]+(?![A-Z0-9])")
# Text between two runs that still counts as a separator within one answer,
# e.g. "A, B" or "A、B和D" — anything without letters/digits.
_SEPARATOR = re.compile(r"^[^A-Z0-9]*$")


class GradingRule(Protocol):
    def __call__(self, raw_output: str, answer_key: str) -> int: ...


def extract_choice(raw_output: str, multi: bool = False) -> str | None:
    """Pull the answered choice letter(s) out of free-form output.

    Single-select: the first standalone single letter in A–D.
    Multi-select: letters from the first standalone run plus any immediately
    following runs separated only by punctuation, returned sorted
    (order-insensitive comparison).  Returns None when nothing extractable.
    """
    text = raw_output.upper()
    matches = list(_CHOICE_RUN.finditer(text))
    if not matches:
        return None
    if not multi:
        for m in matches:
            if len(m.group()) == 1:
                return m.group()
        return None
    letters = set(matches[0].group())
    end = matches[0].end()
    for m in matches[1:]:
        if not _SEPARATOR.match(text[end : m.start()]):
            break
        letters |= set(m.group())
        end = m.end()
    return "".join(sorted(letters))


def choice_letter_rule(raw_output: str, answer_key: str) -> int:
    key = "".join(sorted(set(answer_key.upper()) & set("ABCD")))
    if not key:
        log.warning("answer key %r contains no choice letters; scoring 0", answer_key)
        return 0
    got = extract_choice(raw_output, multi=len(key) > 1)
    if got is None:
        log.warning("could not extract a choice from output %r; scoring 0", raw_output[:80])
        return 0
    return int(got == key)


DEFAULT_RULE: GradingRule = choice_letter_rule

_RULES: dict[str, GradingRule] = {"choice-letter": choice_letter_rule}


def get_rule(name: str) -> GradingRule:
    try:
        return _RULES[name]
    except KeyError:
        raise KeyError(f"unknown grading rule {name!r}; known: {sorted(_RULES)}") from None


def register_rule(name: str, rule: Callable[[str, str], int]) -> None:
    """Plug in a custom rule (scores must be deterministic and in {0,1})."""
    _RULES[name] = rule


def grade(raw_output: str, answer_key: str, rule: GradingRule | None = None) -> int:
    """Score one attempt: 1 iff the extracted answer matches the key."""
    if not answer_key.strip():
        raise ValueError("empty answer key")
    return (rule or DEFAULT_RULE)(raw_output, answer_key)
