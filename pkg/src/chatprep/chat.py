"""Parser for CHAT-protocol transcript files (the TalkBank ``.cha`` format).

Only the subset needed for corpus preprocessing is supported: "@" header
records, "*" utterance tiers with optional trailing millisecond alignment,
and "%" dependent tiers (recognized and skipped). Parsing is pure: the same
bytes always produce the same transcript.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Optional

from .errors import (
    BadTimestamp,
    ChatParseError,
    MalformedHeader,
    UnknownLinePrefix,
    UnterminatedTranscript,
)

logger = logging.getLogger(__name__)

# Bare "@" records that carry no value.
_MARKER_KEYS = frozenset({"Begin", "End"})

# Trailing alignment: "start_end" in milliseconds, optionally wrapped in a
# single non-printing control character on either side (CLAN bullet exports
# use 0x15).
_TIMESTAMP_RE = re.compile(
    r"[\x00-\x08\x0b-\x1f]?(\d+)_(\d+)[\x00-\x08\x0b-\x1f]?\s*$"
)
# A trailing token that looks like it was meant to be an alignment pair but
# does not parse as one.
_TIMESTAMP_CANDIDATE_RE = re.compile(r"[\x00-\x08\x0b-\x1f]?([^\s_]*_[^\s]*)\s*$")

_AGE_RE = re.compile(r"^(\d+)")


@dataclass(frozen=True)
class HeaderRecord:
    """One "@" record: ``key`` is the text after "@" up to ":" (or the bare
    marker name), ``value`` the rest of the line."""

    key: str
    value: str = ""


@dataclass(frozen=True)
class ParticipantInfo:
    """Speaker metadata merged from "@Participants" and "@ID" records."""

    speaker_code: str
    language: str = ""
    corpus: str = ""
    age_years: Optional[int] = None
    sex: Optional[str] = None  # "male" | "female" | "unspecified"
    group: Optional[str] = None
    role: str = ""
    education_years: Optional[int] = None


@dataclass(frozen=True)
class Utterance:
    """One "*" tier. ``raw_text`` is the verbatim content without the
    trailing time alignment; ``index`` is the 0-based position among all
    utterances in the file."""

    speaker: str
    raw_text: str
    start_ms: Optional[int] = None
    end_ms: Optional[int] = None
    index: int = 0

    @property
    def timed(self) -> bool:
        return self.start_ms is not None and self.end_ms is not None


@dataclass(frozen=True)
class TimeInterval:
    start_ms: int
    end_ms: int

    def __post_init__(self) -> None:
        if not 0 <= self.start_ms <= self.end_ms:
            raise ValueError(
                f"invalid interval [{self.start_ms}, {self.end_ms}]"
            )

    def as_pair(self) -> list[int]:
        return [self.start_ms, self.end_ms]


@dataclass
class ChatTranscript:
    """Typed model of one ``.cha`` file."""

    uid: str
    headers: list[HeaderRecord] = field(default_factory=list)
    participants: dict[str, ParticipantInfo] = field(default_factory=dict)
    utterances: list[Utterance] = field(default_factory=list)


def parse_cha(source: str | IO[str], uid: str) -> ChatTranscript:
    """Parse CHAT text into a :class:`ChatTranscript`.

    ``source`` is either an open text stream or the file content itself.
    Lines starting with whitespace continue the previous tier; "%" tiers are
    skipped; every other line must start with "@" or "*".
    """
    if isinstance(source, str):
        lines: Iterable[str] = source.splitlines()
    else:
        lines = (line.rstrip("\n").rstrip("\r") for line in source)

    headers: list[HeaderRecord] = []
    participants: dict[str, ParticipantInfo] = {}
    utterances: list[Utterance] = []

    # (kind, payload) of the tier currently being accumulated, where kind is
    # "header" | "utterance" | "dependent".
    pending: Optional[tuple[str, list[str]]] = None
    ended = False

    def flush() -> None:
        nonlocal pending
        if pending is None:
            return
        kind, parts = pending
        pending = None
        if kind == "dependent":
            return
        text = " ".join(parts)
        if kind == "header":
            _add_header(headers, participants, text)
        else:
            utterances.append(_finish_utterance(text, len(utterances)))

    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if lineno == 1 and line.startswith("﻿"):
            line = line[1:]
        if not line:
            continue
        if ended:
            raise ChatParseError(f"line {lineno}: content after @End")
        first = line[0]
        if first in (" ", "\t"):
            if pending is None:
                raise ChatParseError(
                    f"line {lineno}: continuation line with no open tier"
                )
            pending[1].append(line.strip())
        elif first == "@":
            flush()
            pending = ("header", [line])
            if line[1:].strip() == "End":
                flush()
                ended = True
        elif first == "*":
            flush()
            pending = ("utterance", [line])
        elif first == "%":
            flush()
            pending = ("dependent", [line])
        else:
            raise UnknownLinePrefix(f"line {lineno}: {line[:40]!r}")

    flush()
    if not ended:
        raise UnterminatedTranscript(f"{uid}: missing @End")

    transcript = ChatTranscript(
        uid=uid,
        headers=headers,
        participants=participants,
        utterances=utterances,
    )
    _check_structure(transcript)
    return transcript


def read_cha(path: str | Path) -> ChatTranscript:
    """Parse a ``.cha`` file; the uid is the file stem."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        return parse_cha(fh, uid=path.stem)


def utterances_of(transcript: ChatTranscript, speaker: str) -> list[Utterance]:
    """All utterances of ``speaker`` in file order (empty if unknown)."""
    return [u for u in transcript.utterances if u.speaker == speaker]


def speaker_intervals(transcript: ChatTranscript, speaker: str) -> list[TimeInterval]:
    """Time intervals of every fully timestamped utterance of ``speaker``.

    Utterances lacking timestamps are skipped; :func:`untimed_count` reports
    how many were.
    """
    return [
        TimeInterval(u.start_ms, u.end_ms)
        for u in transcript.utterances
        if u.speaker == speaker and u.timed
    ]


def untimed_count(transcript: ChatTranscript, speaker: str) -> int:
    """How many utterances of ``speaker`` lack a full timestamp pair."""
    return sum(
        1 for u in transcript.utterances if u.speaker == speaker and not u.timed
    )


# --- internals ---


def _add_header(
    headers: list[HeaderRecord],
    participants: dict[str, ParticipantInfo],
    line: str,
) -> None:
    body = line[1:]
    if ":" not in body:
        key = body.strip()
        if key not in _MARKER_KEYS:
            raise MalformedHeader(f"@{key}: no ':' after non-marker key")
        headers.append(HeaderRecord(key=key))
        return
    key, _, value = body.partition(":")
    key = key.strip()
    value = value.strip()
    if not key:
        raise MalformedHeader(f"empty header key in {line!r}")
    headers.append(HeaderRecord(key=key, value=value))
    if key == "Participants":
        _parse_participants(participants, value)
    elif key == "ID":
        _parse_id_record(participants, value)


def _parse_participants(participants: dict[str, ParticipantInfo], value: str) -> None:
    # "PAR Participant, INV Investigator"
    for chunk in value.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        code, _, role = chunk.partition(" ")
        existing = participants.get(code)
        if existing is None:
            participants[code] = ParticipantInfo(speaker_code=code, role=role.strip())


def _parse_id_record(participants: dict[str, ParticipantInfo], value: str) -> None:
    # language|corpus|code|age|sex|group|SES|role|education|custom|
    fields = value.split("|")
    fields += [""] * (10 - len(fields))
    language, corpus, code, age, sex, group, _ses, role, education = fields[:9]
    code = code.strip()
    if not code:
        logger.warning("@ID record with empty speaker code: %r", value)
        return
    participants[code] = ParticipantInfo(
        speaker_code=code,
        language=language.strip(),
        corpus=corpus.strip(),
        age_years=_parse_years(age, code, "age"),
        sex=_parse_sex(sex),
        group=group.strip() or None,
        role=role.strip() or participants.get(code, ParticipantInfo(code)).role,
        education_years=_parse_years(education, code, "education"),
    )


def _parse_years(text: str, code: str, what: str) -> Optional[int]:
    # CHAT age syntax "57;" or "57;6.": leading integer years, rest ignored.
    text = text.strip()
    if not text:
        return None
    match = _AGE_RE.match(text)
    if match is None:
        logger.warning("unparseable %s field %r for %s; treating as absent", what, text, code)
        return None
    return int(match.group(1))


def _parse_sex(text: str) -> Optional[str]:
    text = text.strip().lower()
    if not text:
        return None
    if text in ("male", "female"):
        return text
    return "unspecified"


def _finish_utterance(line: str, index: int) -> Utterance:
    body = line[1:]
    speaker, sep, text = body.partition(":")
    if not sep:
        raise ChatParseError(f"utterance tier without ':': {line[:40]!r}")
    speaker = speaker.strip()
    text = text.strip()

    start_ms = end_ms = None
    match = _TIMESTAMP_RE.search(text)
    if match:
        start_ms, end_ms = int(match.group(1)), int(match.group(2))
        if start_ms > end_ms:
            raise BadTimestamp(f"start {start_ms} > end {end_ms} in {line[:40]!r}")
        text = text[: match.start()]
    else:
        candidate = _TIMESTAMP_CANDIDATE_RE.search(text)
        if candidate and any(ch.isdigit() for ch in candidate.group(1)):
            raise BadTimestamp(f"non-numeric alignment pair {candidate.group(1)!r}")

    text = re.sub(r"\t", " ", text).strip()
    return Utterance(
        speaker=speaker,
        raw_text=text,
        start_ms=start_ms,
        end_ms=end_ms,
        index=index,
    )


def _check_structure(t: ChatTranscript) -> None:
    keys = [h.key for h in t.headers]
    ordered = [k for k in keys if k != "PID"]
    if not ordered or ordered[0] != "Begin":
        raise ChatParseError(f"{t.uid}: headers must start with @Begin (after optional @PID)")
    if ordered[-1] != "End":
        raise UnterminatedTranscript(f"{t.uid}: @End is not the final record")
    for u in t.utterances:
        if u.speaker not in t.participants:
            raise ChatParseError(
                f"{t.uid}: utterance speaker {u.speaker!r} not declared in participants"
            )
