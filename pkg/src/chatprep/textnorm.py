"""Toggle-driven cleanup of CHAT utterance text.

Each switch in :class:`TextPipelineConfig` enables one rewrite rule.
Enabled rules run in a fixed order (the config field order, except that
the ``&=`` noise rule runs before the broader ``&`` rule so each toggle
is meaningful on its own):

1.  remove_clear_throat      drop throat-clearing annotations
2.  unwrap_parentheses       "(be)coming" -> "becoming"
3.  remove_bracket_colon     "[: text]" replacement codes
4.  remove_noise_indicators  "&=laughs" style noise tokens
5.  remove_amp_disfluencies  any remaining "&"-prefixed token
6.  remove_unintelligible    bare "xxx" / "xx" tokens
7.  remove_pauses            "(.)", "(..)", "(...)"
8.  remove_slash_brackets    "[/]", "[//]", "[///]"
9.  remove_error_codes       "[* ...]" and "[+ ...]" codes
10. strip_non_alphanumeric   everything but letters, digits, "'", " " -> " "
11. collapse_spaces          whitespace runs -> single space, ends trimmed
12. capitalize_first         upper-case the first character
13. add_final_period         trim trailing spaces, ensure a final "."
14. add_newline              append "\\n" to non-empty text

Every rule is a pure single-pass string rewrite (unwrap_parentheses
iterates internally so nested parentheses fully unwrap).  On text shaped
like CHAT utterances the whole pipeline is idempotent when add_newline
is off.  With every switch off the input is returned unchanged.

:func:`process_corpus` applies the pipeline to one speaker across many
transcripts and writes a TSV plus, per transcript, an alignment sidecar
``alignments/<uid>.json`` (next to the TSV) listing the other speakers'
timed intervals so later audio trimming can silence them.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

from .chat import ChatTranscript, utterances_of
from .errors import DuplicateUid, ManifestSchemaError
from .fileio import atomic_write_text, write_json

_DATASETS = ("db", "wls")

_CONFIG_KEYS = (
    "dataset",
    "input_path",
    "remove_clear_throat",
    "unwrap_parentheses",
    "remove_bracket_colon",
    "remove_amp_disfluencies",
    "remove_unintelligible",
    "remove_pauses",
    "remove_slash_brackets",
    "remove_noise_indicators",
    "remove_error_codes",
    "strip_non_alphanumeric",
    "collapse_spaces",
    "capitalize_first",
    "add_final_period",
    "add_newline",
    "output_path",
)
_TOGGLE_KEYS = _CONFIG_KEYS[2:-1]

TSV_COLUMNS = ("uid", "visit", "speaker", "utt_index", "start_ms", "end_ms", "text")
_TSV_HEADER = "\t".join(TSV_COLUMNS)


@dataclass
class TextPipelineConfig:
    """Switches for the text pipeline, in prompt order."""

    dataset: str = "db"
    input_path: str = ""
    remove_clear_throat: bool = False
    unwrap_parentheses: bool = False
    remove_bracket_colon: bool = False
    remove_amp_disfluencies: bool = False
    remove_unintelligible: bool = False
    remove_pauses: bool = False
    remove_slash_brackets: bool = False
    remove_noise_indicators: bool = False
    remove_error_codes: bool = False
    strip_non_alphanumeric: bool = False
    collapse_spaces: bool = False
    capitalize_first: bool = False
    add_final_period: bool = False
    add_newline: bool = False
    output_path: str = ""

    @classmethod
    def from_dict(cls, data: object) -> "TextPipelineConfig":
        """Build a config from a JSON object, rejecting any key drift."""
        if not isinstance(data, dict):
            raise ManifestSchemaError("text config must be a JSON object")
        unknown = sorted(set(data) - set(_CONFIG_KEYS))
        missing = sorted(set(_CONFIG_KEYS) - set(data))
        if unknown:
            raise ManifestSchemaError("unknown text config keys: " + ", ".join(unknown))
        if missing:
            raise ManifestSchemaError("missing text config keys: " + ", ".join(missing))
        if data["dataset"] not in _DATASETS:
            raise ManifestSchemaError(
                f"dataset must be one of {list(_DATASETS)}, got {data['dataset']!r}"
            )
        for key in ("input_path", "output_path"):
            if not isinstance(data[key], str):
                raise ManifestSchemaError(f"{key} must be a string")
        for key in _TOGGLE_KEYS:
            if not isinstance(data[key], bool):
                raise ManifestSchemaError(f"{key} must be true or false")
        return cls(**data)

    def to_dict(self) -> dict:
        return {key: getattr(self, key) for key in _CONFIG_KEYS}

    @classmethod
    def from_json_file(cls, path: str | Path) -> "TextPipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ManifestSchemaError(f"cannot read text config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_json_file(self, path: str | Path) -> Path:
        return atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")


# Documented pattern set for throat clearing: "&=clears:throat" plus the
# "_"-joined and unseparated spellings, any case.
_CLEAR_THROAT_RE = re.compile(r"&=clears?[:_]?throat\b", re.IGNORECASE)
_PAREN_RE = re.compile(r"\(([A-Za-z']+)\)")
_BRACKET_COLON_RE = re.compile(r"\[:[^\]]*\]")
_NOISE_RE = re.compile(r"&=\S+")
_AMP_RE = re.compile(r"&\S+")
_UNINTELLIGIBLE_RE = re.compile(r"\bxxx?\b")
_PAUSE_RE = re.compile(r"\(\.{1,3}\)")
_SLASH_RE = re.compile(r"\[/{1,3}\]")
_ERROR_CODE_RE = re.compile(r"\[[*+][^\]]*\]")
_WS_RUN_RE = re.compile(r"\s+")


def _unwrap_parentheses(text: str) -> str:
    # Iterate so "((be)come)ing" style nesting unwraps completely; the
    # pattern never matches pause marks, which rule 7 owns.
    while True:
        unwrapped = _PAREN_RE.sub(r"\1", text)
        if unwrapped == text:
            return unwrapped
        text = unwrapped


def _strip_non_alphanumeric(text: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "' " else " " for ch in text)


def _collapse_spaces(text: str) -> str:
    return _WS_RUN_RE.sub(" ", text).strip()


def _capitalize_first(text: str) -> str:
    return text[:1].upper() + text[1:]


def _add_final_period(text: str) -> str:
    # rstrip keeps strip -> period stable when collapse_spaces is off.
    text = text.rstrip()
    if text and not text.endswith("."):
        text += "."
    return text


def _add_newline(text: str) -> str:
    return text + "\n" if text else text


_RULES: tuple[tuple[str, Callable[[str], str]], ...] = (
    ("remove_clear_throat", lambda s: _CLEAR_THROAT_RE.sub("", s)),
    ("unwrap_parentheses", _unwrap_parentheses),
    ("remove_bracket_colon", lambda s: _BRACKET_COLON_RE.sub("", s)),
    ("remove_noise_indicators", lambda s: _NOISE_RE.sub("", s)),
    ("remove_amp_disfluencies", lambda s: _AMP_RE.sub("", s)),
    ("remove_unintelligible", lambda s: _UNINTELLIGIBLE_RE.sub("", s)),
    ("remove_pauses", lambda s: _PAUSE_RE.sub("", s)),
    ("remove_slash_brackets", lambda s: _SLASH_RE.sub("", s)),
    ("remove_error_codes", lambda s: _ERROR_CODE_RE.sub("", s)),
    ("strip_non_alphanumeric", _strip_non_alphanumeric),
    ("collapse_spaces", _collapse_spaces),
    ("capitalize_first", _capitalize_first),
    ("add_final_period", _add_final_period),
    ("add_newline", _add_newline),
)


def normalize_utterance(raw: str, cfg: TextPipelineConfig) -> str:
    """Run the enabled rewrite rules over one utterance's raw text."""
    text = raw
    for flag, rule in _RULES:
        if getattr(cfg, flag):
            text = rule(text)
    return text


@dataclass
class UtteranceRow:
    """One cleaned utterance, as serialized to the corpus TSV."""

    uid: str
    visit: int
    speaker: str
    utt_index: int
    start_ms: Optional[int]
    end_ms: Optional[int]
    text: str


@dataclass
class CorpusOutput:
    """What :func:`process_corpus` wrote and where."""

    rows: list[UtteranceRow]
    tsv_path: Path
    sidecar_paths: list[Path]


def visit_of(uid: str) -> int:
    """Visit index from a trailing "-<n>" uid suffix; 0 when absent."""
    _, sep, tail = uid.rpartition("-")
    if sep and tail.isdigit():
        return int(tail)
    return 0


def transcript_rows(
    transcript: ChatTranscript, cfg: TextPipelineConfig, speaker: str
) -> list[UtteranceRow]:
    """Cleaned, non-empty rows for one speaker of one transcript.

    Row text never carries the optional trailing newline; that switch
    only shapes free-standing normalize_utterance output.
    """
    row_cfg = dataclasses.replace(cfg, add_newline=False)
    visit = visit_of(transcript.uid)
    rows = []
    for utt in utterances_of(transcript, speaker):
        cleaned = normalize_utterance(utt.raw_text, row_cfg)
        if not cleaned:
            continue
        rows.append(
            UtteranceRow(
                uid=transcript.uid,
                visit=visit,
                speaker=utt.speaker,
                utt_index=utt.index,
                start_ms=utt.start_ms,
                end_ms=utt.end_ms,
                text=cleaned,
            )
        )
    return rows


def trim_intervals(transcript: ChatTranscript, speaker: str) -> list[list[int]]:
    """Timed intervals of every speaker other than `speaker`, in file order."""
    return [
        [utt.start_ms, utt.end_ms]
        for utt in transcript.utterances
        if utt.speaker != speaker and utt.timed
    ]


def _format_row(row: UtteranceRow) -> str:
    start = "" if row.start_ms is None else str(row.start_ms)
    end = "" if row.end_ms is None else str(row.end_ms)
    return "\t".join(
        [row.uid, str(row.visit), row.speaker, str(row.utt_index), start, end, row.text]
    )


def process_corpus(
    cfg: TextPipelineConfig,
    transcripts: Iterable[ChatTranscript],
    speaker: str,
    base_dir: str | Path | None = None,
) -> CorpusOutput:
    """Normalize `speaker` across transcripts and write TSV + sidecars.

    Rows are ordered by uid then utterance index, timestamps serialize
    as empty fields when absent, and every write is atomic, so repeat
    runs produce byte-identical files.  A relative cfg.output_path is
    resolved against `base_dir` (default: the current directory).
    """
    out_path = Path(cfg.output_path)
    if not out_path.is_absolute():
        out_path = Path(base_dir or Path.cwd()) / out_path

    ordered = sorted(transcripts, key=lambda t: t.uid)
    seen: set[str] = set()
    for t in ordered:
        if t.uid in seen:
            raise DuplicateUid(f"transcript uid {t.uid!r} appears more than once")
        seen.add(t.uid)

    rows: list[UtteranceRow] = []
    for t in ordered:
        rows.extend(transcript_rows(t, cfg, speaker))

    lines = [_TSV_HEADER]
    lines.extend(_format_row(row) for row in rows)
    atomic_write_text(out_path, "\n".join(lines) + "\n")

    align_dir = out_path.parent / "alignments"
    sidecar_paths = []
    for t in ordered:
        sidecar = align_dir / f"{t.uid}.json"
        write_json(sidecar, {"uid": t.uid, "trim_intervals": trim_intervals(t, speaker)})
        sidecar_paths.append(sidecar)

    return CorpusOutput(rows=rows, tsv_path=out_path, sidecar_paths=sidecar_paths)


def read_rows(path: str | Path) -> list[UtteranceRow]:
    """Read back a TSV written by :func:`process_corpus`."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n")
        if header != _TSV_HEADER:
            raise ManifestSchemaError(f"unexpected TSV header in {path}: {header!r}")
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(TSV_COLUMNS):
                raise ManifestSchemaError(
                    f"{path}:{lineno}: expected {len(TSV_COLUMNS)} fields, got {len(parts)}"
                )
            uid, visit, speaker, utt_index, start, end, text = parts
            rows.append(
                UtteranceRow(
                    uid=uid,
                    visit=int(visit),
                    speaker=speaker,
                    utt_index=int(utt_index),
                    start_ms=int(start) if start else None,
                    end_ms=int(end) if end else None,
                    text=text,
                )
            )
    return rows
