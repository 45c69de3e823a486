"""Extraction of JSON envelopes from raw model replies.

Model replies rarely arrive as clean JSON: they come fenced, prefixed with
prose, suffixed with notes, or in Python-dict style with single quotes
(the relevance judge is *instructed* to answer like {'score': 4.8}).
The extractor scans for the first balanced top-level object, trying each
opening brace in order, and parses with json first and a literal-eval
fallback for the single-quote style.
"""

from __future__ import annotations

import ast
import json


class EnvelopeParseError(ValueError):
    """Raised with the offending raw reply attached."""

    def __init__(self, message: str, raw: str):
        super().__init__(f"{message}; raw reply: {raw[:500]!r}")
        self.raw = raw


def _balanced_span(text: str, start: int) -> str | None:
    """Span of a brace-balanced region starting at text[start] == '{'.

    Tracks string state for both quote styles so braces inside string
    values do not unbalance the scan. Returns None if the region never
    closes.
    """
    depth = 0
    quote: str | None = None
    i = start
    while i < len(text):
        ch = text[i]
        if quote is not None:
            if ch == "\\":
                i += 2
                continue
            if ch == quote:
                quote = None
        elif ch in ("'", '"'):
            quote = ch
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start: i + 1]
        i += 1
    return None


def _parse_dictish(span: str) -> dict | None:
    try:
        obj = json.loads(span)
        return obj if isinstance(obj, dict) else None
    except ValueError:
        pass
    try:
        obj = ast.literal_eval(span)
        return obj if isinstance(obj, dict) else None
    except (ValueError, SyntaxError):
        return None


def extract_object(raw: str) -> dict:
    """First parseable balanced object in `raw`, as a dict."""
    pos = raw.find("{")
    while pos != -1:
        span = _balanced_span(raw, pos)
        if span is not None:
            obj = _parse_dictish(span)
            if obj is not None:
                return obj
        pos = raw.find("{", pos + 1)
    raise EnvelopeParseError("no balanced JSON object found", raw)


def parse_envelope(raw: str, key: str) -> str:
    """Read the string value under `key` in the reply's first JSON object."""
    obj = extract_object(raw)
    if key not in obj:
        raise EnvelopeParseError(f"object is missing key {key!r}", raw)
    value = obj[key]
    if not isinstance(value, str):
        raise EnvelopeParseError(
            f"value under {key!r} is {type(value).__name__}, not a string", raw
        )
    return value


def parse_score(raw: str) -> float:
    """Read a numeric 'score' entry (relevance-judge reply style)."""
    obj = extract_object(raw)
    if "score" not in obj:
        raise EnvelopeParseError("object is missing key 'score'", raw)
    value = obj["score"]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise EnvelopeParseError(
            f"'score' is {type(value).__name__}, not a number", raw
        )
    return float(value)


def format_reminder(key: str) -> str:
    """Line appended to a request on the single automatic re-ask."""
    return (
        f'Reminder: respond with exactly one JSON object of the form '
        f'{{"{key}": "..."}} and nothing else.'
    )
