"""Synthetic CHAT corpora for tests: transcripts, tone-coded WAVs, metadata.

Real clinical-interview corpora cannot be redistributed, so tests run
against generated stand-ins.  Generation is sequential and fully
determined by the ``FixtureSpec`` (which embeds the seed): the same
spec always produces byte-identical files.

Ground truth travels with the corpus in ``fixture_manifest.json``:
expected utterance counts, per-kind annotation counts, which rows are
substantive (clean to non-empty text under the all-toggles-on text
pipeline), and the pure tone encoded for every timed utterance.  Tone
frequency is 300 + 50 * utt_index Hz, so a cut segment can be checked
against its source utterance by FFT peak alone.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, write_wav
from .errors import ChatPrepError
from .fileio import atomic_write_text, write_json

ANNOTATION_KINDS = (
    "&-disfluency",
    "pause",
    "retrace",
    "bracket-code",
    "noise",
    "parenthesized",
)

_WORDS = (
    "the", "boy", "girl", "mother", "cookie", "jar", "stool", "sink",
    "water", "dishes", "window", "curtain", "reaching", "falling", "plate",
)
_DISFLUENCIES = ("&um", "&uh", "&-em")
_PAUSES = ("(.)", "(..)", "(...)")
_RETRACES = ("[/]", "[//]", "[///]")
_BRACKET_CODES = ("[+ exc]", "[* s:r]", "[: overflowing]")
_NOISES = ("&=laughs", "&=coughs", "&=clears:throat")
_PARENS = ("fallin(g)", "(be)coming", "washin(g)", "gettin(g)")
_INV_LINES = (
    "just tell me everything that you see happening in that picture .",
    "anything else ?",
    "what about over there ?",
)

_TONE_BASE_HZ = 300
_TONE_STEP_HZ = 50
_AMPLITUDE = 0.3


@dataclass(frozen=True)
class FixtureSpec:
    num_transcripts: int = 5
    utterances_per: tuple[int, int] = (6, 10)
    seed: int = 0
    include_annotations: tuple[str, ...] = ANNOTATION_KINDS
    audio: bool = False
    dataset_shape: str = "db"

    def __post_init__(self):
        if self.num_transcripts < 1:
            raise ChatPrepError("num_transcripts must be at least 1")
        lo, hi = self.utterances_per
        if not 1 <= lo <= hi:
            raise ChatPrepError("utterances_per must be a (min, max) range with 1 <= min <= max")
        unknown = sorted(set(self.include_annotations) - set(ANNOTATION_KINDS))
        if unknown:
            raise ChatPrepError(f"unknown annotation kinds: {', '.join(unknown)}")
        if self.dataset_shape not in ("db", "wls"):
            raise ChatPrepError("dataset_shape must be 'db' or 'wls'")


def _uid(spec: FixtureSpec, index: int) -> str:
    if spec.dataset_shape == "db":
        return f"{index + 1:03d}-{index % 3}"
    return f"wls{20000 + index}"


def _inject(words: list[str], kind: str, rng: random.Random, counter: int) -> list[str]:
    slot = rng.randrange(1, len(words) + 1)
    if kind == "&-disfluency":
        token = _DISFLUENCIES[counter % len(_DISFLUENCIES)]
    elif kind == "pause":
        token = _PAUSES[counter % len(_PAUSES)]
    elif kind == "retrace":
        token = _RETRACES[counter % len(_RETRACES)]
    elif kind == "bracket-code":
        token = _BRACKET_CODES[counter % len(_BRACKET_CODES)]
    elif kind == "noise":
        token = _NOISES[counter % len(_NOISES)]
    else:  # parenthesized: swap a word rather than insert one
        replacement = _PARENS[counter % len(_PARENS)]
        out = list(words)
        out[rng.randrange(len(out))] = replacement
        return out
    return words[:slot] + [token] + words[slot:]


def _tone_track(rows: list[dict], sample_rate: int) -> AudioBuffer:
    # 500 ms of tail silence past the last utterance
    total = (rows[-1]["end_ms"] + 500) * sample_rate // 1000
    samples = np.zeros(total)
    for row in rows:
        if 2 * row["tone_hz"] >= sample_rate:
            raise ChatPrepError(
                f"tone {row['tone_hz']} Hz not representable at {sample_rate} Hz; "
                "use fewer utterances per transcript"
            )
        start = row["start_ms"] * sample_rate // 1000
        end = row["end_ms"] * sample_rate // 1000
        t = np.arange(end - start) / sample_rate
        samples[start:end] = _AMPLITUDE * np.sin(2 * math.pi * row["tone_hz"] * t)
    return AudioBuffer(samples, sample_rate)


def generate_fixture(spec: FixtureSpec, out_dir: str | Path) -> dict:
    """Write the corpus into out_dir and return its ground-truth manifest."""
    out_dir = Path(out_dir)
    rng = random.Random(spec.seed)
    kinds = tuple(k for k in ANNOTATION_KINDS if k in spec.include_annotations)
    sample_rate = 16000 if spec.dataset_shape == "db" else 44100

    transcripts = []
    files: list[str] = []
    metadata_rows = []
    annotation_totals = {kind: 0 for kind in kinds}
    injected = 0

    for index in range(spec.num_transcripts):
        uid = _uid(spec, index)
        num_par = rng.randint(*spec.utterances_per)
        age = rng.randint(50, 95)
        sex = "male" if index % 2 == 0 else "female"
        group = "ProbableAD" if index % 2 == 0 else "Control"
        education = rng.randint(12, 20)

        if spec.dataset_shape == "db":
            id_par = f"@ID:\teng|Pitt|PAR|{age};|{sex}|{group}||Participant|{education}||"
            id_inv = "@ID:\teng|Pitt|INV|||||Investigator|||"
        else:
            id_par = f"@ID:\teng|WLS|PAR|{age};|{sex}|||Participant|{education}||"
            id_inv = "@ID:\teng|WLS|INV|||||Investigator|||"
        lines = [
            f"@PID:\t11312/t-{spec.seed:04d}{index:04d}-1",
            "@Begin",
            "@Languages:\teng",
            "@Participants:\tPAR Participant, INV Investigator",
            id_par,
            id_inv,
            f"@Media:\t{uid}, audio",
        ]

        cursor = 0
        all_rows: list[dict] = []
        annotations_here = {kind: 0 for kind in kinds}
        substantive = 0

        def emit(speaker: str, text: str, duration_ms: int) -> dict:
            nonlocal cursor
            utt_index = len(all_rows)
            start, end = cursor, cursor + duration_ms
            lines.append(f"*{speaker}:\t{text} {start}_{end}")
            row = {
                "speaker": speaker,
                "utt_index": utt_index,
                "start_ms": start,
                "end_ms": end,
                "tone_hz": _TONE_BASE_HZ + _TONE_STEP_HZ * utt_index,
            }
            all_rows.append(row)
            cursor = end + rng.randint(0, 200)
            return row

        emit("INV", _INV_LINES[0], rng.randint(1200, 2000))
        for k in range(num_par):
            if k and k % 4 == 0:
                emit("INV", _INV_LINES[1 + (k // 4) % 2], rng.randint(800, 1500))
            filler_only = "&-disfluency" in kinds and k % 7 == 6
            if filler_only:
                text = f"{_DISFLUENCIES[k % len(_DISFLUENCIES)]} ."
                annotations_here["&-disfluency"] += 1
            else:
                words = rng.sample(_WORDS, rng.randint(4, 7))
                if kinds:
                    kind = kinds[injected % len(kinds)]
                    words = _inject(words, kind, rng, injected)
                    annotations_here[kind] += 1
                    injected += 1
                text = " ".join(words) + " ."
                substantive += 1
            row = emit("PAR", text, rng.randint(1000, 2000))
            row["substantive"] = not filler_only
            if k % 5 == 4:
                lines.append("%mor:\tn|fixture v|check .")

        lines.append("@End")
        cha_name = f"{uid}.cha"
        atomic_write_text(out_dir / cha_name, "\n".join(lines) + "\n")
        files.append(cha_name)

        for kind, count in annotations_here.items():
            annotation_totals[kind] += count

        wav_name = None
        if spec.audio:
            wav_name = f"{uid}.wav"
            write_wav(out_dir / wav_name, _tone_track(all_rows, sample_rate))
            files.append(wav_name)

        transcripts.append(
            {
                "uid": uid,
                "utterances": len(all_rows),
                "par_utterances": num_par,
                "substantive_par_rows": substantive,
                "annotations": annotations_here,
                "wav": wav_name,
                "rows": all_rows,
            }
        )

        metadata_rows.append(
            {
                "uid": uid,
                "age": age,
                "mmse": "NA" if index % 9 == 8 else rng.randint(10, 30),
                "diagnosis_code": 100 if group == "ProbableAD" else 800,
                "fluency": rng.randint(8, 20),
            }
        )

    meta_lines = ["uid\tage\tmmse\tdiagnosis_code\tfluency"]
    for row in metadata_rows:
        meta_lines.append(
            f"{row['uid']}\t{row['age']}\t{row['mmse']}\t{row['diagnosis_code']}\t{row['fluency']}"
        )
    atomic_write_text(out_dir / "metadata.tsv", "\n".join(meta_lines) + "\n")
    files.append("metadata.tsv")

    manifest = {
        "dataset_shape": spec.dataset_shape,
        "seed": spec.seed,
        "sample_rate_hz": sample_rate if spec.audio else None,
        "transcripts": transcripts,
        "totals": {
            "transcripts": spec.num_transcripts,
            "utterances": sum(t["utterances"] for t in transcripts),
            "par_utterances": sum(t["par_utterances"] for t in transcripts),
            "substantive_par_rows": sum(t["substantive_par_rows"] for t in transcripts),
            "annotations": annotation_totals,
            "metadata_rows": len(metadata_rows),
            "metadata_na_cells": sum(1 for r in metadata_rows if r["mmse"] == "NA"),
        },
        "files": sorted(files),
        "metadata_file": "metadata.tsv",
    }
    write_json(out_dir / "fixture_manifest.json", manifest)
    return manifest
