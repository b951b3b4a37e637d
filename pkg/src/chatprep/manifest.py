"""Experiment manifests: generate, validate, canonicalize, diff, replay.

A manifest binds everything needed to repeat a preprocessing run: the
text/audio config files (by relative path, resolved against the
manifest's own directory so the bundle can travel), the ordered uid
lists (data, positive, train/test splits), a free-form method string,
and recorded evaluation metrics.  Metrics are opaque metadata — the
engine preserves and compares them, never recomputes them.

Replaying a manifest over a corpus root re-runs the recorded pipelines
restricted to data_uids and reports a SHA-256 for every file written,
so two runs over the same inputs can be compared byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import shlex
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import audio as audiomod
from . import features as featmod
from .chat import ChatTranscript, TimeInterval, read_cha
from .errors import ConfigUnresolvable, ManifestSchemaError
from .fileio import atomic_write_bytes, sha256_file, write_json
from .textnorm import TextPipelineConfig, process_corpus, transcript_rows, trim_intervals

_UID_LIST_FIELDS = ("data_uids", "positive_uids", "training_uids", "test_uids")
_REQUIRED_KEYS = ("pre_process", *_UID_LIST_FIELDS, "method", "evaluation")
_OPTIONAL_KEYS = ("audio_process", "labels")


@dataclass
class ExperimentManifest:
    pre_process: str
    data_uids: list[str] = field(default_factory=list)
    positive_uids: list[str] = field(default_factory=list)
    training_uids: list[str] = field(default_factory=list)
    test_uids: list[str] = field(default_factory=list)
    method: str = ""
    evaluation: dict[str, float] = field(default_factory=dict)
    audio_process: Optional[str] = None
    labels: Optional[dict[str, str]] = None
    # where relative config paths resolve from; never serialized
    base_dir: Optional[Path] = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, data: object, base_dir: Optional[Path] = None) -> "ExperimentManifest":
        if not isinstance(data, dict):
            raise ManifestSchemaError("manifest must be a JSON object")
        unknown = sorted(set(data) - set(_REQUIRED_KEYS) - set(_OPTIONAL_KEYS))
        if unknown:
            raise ManifestSchemaError(f"unknown manifest keys: {', '.join(unknown)}")
        missing = sorted(set(_REQUIRED_KEYS) - set(data))
        if missing:
            raise ManifestSchemaError(f"missing manifest keys: {', '.join(missing)}")
        if not isinstance(data["pre_process"], str) or not data["pre_process"]:
            raise ManifestSchemaError("pre_process must be a non-empty path string")
        audio_process = data.get("audio_process")
        if audio_process is not None and (not isinstance(audio_process, str) or not audio_process):
            raise ManifestSchemaError("audio_process must be a non-empty path string or null")
        lists: dict[str, list[str]] = {}
        for name in _UID_LIST_FIELDS:
            value = data[name]
            if not isinstance(value, list) or any(not isinstance(u, str) for u in value):
                raise ManifestSchemaError(f"{name} must be a list of uid strings")
            lists[name] = list(value)
        if not isinstance(data["method"], str):
            raise ManifestSchemaError("method must be a string")
        evaluation = data["evaluation"]
        if not isinstance(evaluation, dict) or any(
            not isinstance(k, str) or isinstance(v, bool) or not isinstance(v, (int, float))
            for k, v in evaluation.items()
        ):
            raise ManifestSchemaError("evaluation must map metric names to numbers")
        labels = data.get("labels")
        if labels is not None and (
            not isinstance(labels, dict)
            or any(not isinstance(k, str) or not isinstance(v, str) for k, v in labels.items())
        ):
            raise ManifestSchemaError("labels must map uids to label strings")
        return cls(
            pre_process=data["pre_process"],
            audio_process=audio_process,
            method=data["method"],
            evaluation=dict(evaluation),
            labels=dict(labels) if labels is not None else None,
            base_dir=base_dir,
            **lists,
        )

    def to_dict(self) -> dict:
        out: dict = {"pre_process": self.pre_process}
        if self.audio_process is not None:
            out["audio_process"] = self.audio_process
        for name in _UID_LIST_FIELDS:
            out[name] = list(getattr(self, name))
        out["method"] = self.method
        out["evaluation"] = dict(self.evaluation)
        if self.labels is not None:
            out["labels"] = dict(self.labels)
        return out


def load_manifest(path: str | Path) -> ExperimentManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestSchemaError(f"{path} is not valid JSON: {exc}") from exc
    return ExperimentManifest.from_dict(data, base_dir=path.parent)


def save_manifest(m: ExperimentManifest, path: str | Path) -> Path:
    path = Path(path)
    atomic_write_bytes(path, canonicalize(m))
    m.base_dir = path.parent
    return path


def canonicalize(m: ExperimentManifest) -> bytes:
    """Canonical JSON bytes: sorted keys, arrays in given order, no
    insignificant whitespace, shortest round-trip number form."""
    text = json.dumps(m.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return text.encode("utf-8") + b"\n"


def _resolve(path_str: str, base_dir: Optional[Path]) -> Path:
    p = Path(path_str)
    if p.is_absolute():
        return p
    return (base_dir if base_dir is not None else Path.cwd()) / p


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_manifest(m: ExperimentManifest, resolve_configs: bool = False) -> ValidationReport:
    """Check every invariant and return all findings, not just the first."""
    report = ValidationReport()
    for name in _UID_LIST_FIELDS:
        uids = getattr(m, name)
        dups = sorted({u for u in uids if uids.count(u) > 1})
        if dups:
            report.violations.append(f"duplicate uids in {name}: {', '.join(dups)}")
    data = set(m.data_uids)
    for name in ("positive_uids", "training_uids", "test_uids"):
        stray = [u for u in getattr(m, name) if u not in data]
        if stray:
            report.violations.append(f"{name} ⊄ data_uids: {', '.join(stray)}")
    overlap = [u for u in m.training_uids if u in set(m.test_uids)]
    if overlap:
        report.violations.append(f"split overlap: training_uids ∩ test_uids = {', '.join(overlap)}")
    if m.labels is not None:
        positives = set(m.positive_uids)
        for uid in sorted(m.labels):
            if uid not in data:
                report.violations.append(f"labels lists uid not in data_uids: {uid}")
            if (m.labels[uid] == "positive") != (uid in positives):
                report.violations.append(
                    f"labels disagree with positive_uids for {uid}: {m.labels[uid]!r}"
                )
    if not m.test_uids:
        report.notes.append("test_uids is empty (train-only manifest)")
    if resolve_configs:
        checks = [("pre_process", m.pre_process, TextPipelineConfig)]
        if m.audio_process is not None:
            checks.append(("audio_process", m.audio_process, audiomod.AudioPipelineConfig))
        for name, path_str, cfg_cls in checks:
            path = _resolve(path_str, m.base_dir)
            if not path.is_file():
                report.violations.append(f"{name} config not found: {path}")
                continue
            try:
                cfg_cls.from_json_file(path)
            except ManifestSchemaError as exc:
                report.violations.append(f"{name} config invalid: {exc}")
    return report


@dataclass
class ManifestDiff:
    scalars: dict = field(default_factory=dict)
    uid_lists: dict = field(default_factory=dict)
    evaluation: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)
    configs: dict = field(default_factory=dict)

    @property
    def is_empty(self) -> bool:
        return not (self.scalars or self.uid_lists or self.evaluation or self.labels or self.configs)

    def to_dict(self) -> dict:
        out: dict = {}
        if self.scalars:
            out["scalars"] = {k: list(v) for k, v in self.scalars.items()}
        if self.uid_lists:
            out["uid_lists"] = self.uid_lists
        if self.evaluation:
            out["evaluation"] = self.evaluation
        if self.labels:
            out["labels"] = self.labels
        if self.configs:
            out["configs"] = {
                name: {k: list(v) for k, v in changes.items()}
                for name, changes in self.configs.items()
            }
        return out


def _diff_mapping(a: Optional[dict], b: Optional[dict]) -> dict:
    a = a or {}
    b = b or {}
    added = {k: b[k] for k in sorted(set(b) - set(a))}
    removed = {k: a[k] for k in sorted(set(a) - set(b))}
    changed = {k: [a[k], b[k]] for k in sorted(set(a) & set(b)) if a[k] != b[k]}
    out = {}
    if added:
        out["added"] = added
    if removed:
        out["removed"] = removed
    if changed:
        out["changed"] = changed
    return out


def _read_config_dict(path: Path) -> Optional[dict]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    return data if isinstance(data, dict) else None


def diff_manifests(a: ExperimentManifest, b: ExperimentManifest) -> ManifestDiff:
    diff = ManifestDiff()
    for name in ("pre_process", "audio_process", "method"):
        va, vb = getattr(a, name), getattr(b, name)
        if va != vb:
            diff.scalars[name] = (va, vb)
    for name in _UID_LIST_FIELDS:
        la, lb = getattr(a, name), getattr(b, name)
        if la == lb:
            continue
        sa, sb = set(la), set(lb)
        entry: dict = {}
        added = [u for u in lb if u not in sa]
        removed = [u for u in la if u not in sb]
        if added:
            entry["added"] = added
        if removed:
            entry["removed"] = removed
        # relative order of the uids both sides share
        if [u for u in la if u in sb] != [u for u in lb if u in sa]:
            entry["reordered"] = True
        diff.uid_lists[name] = entry
    diff.evaluation = _diff_mapping(a.evaluation, b.evaluation)
    # an empty labels map and an absent one canonicalize differently
    if (a.labels is None) != (b.labels is None):
        diff.scalars["labels_present"] = (a.labels is not None, b.labels is not None)
    diff.labels = _diff_mapping(a.labels, b.labels)
    for name in ("pre_process", "audio_process"):
        pa, pb = getattr(a, name), getattr(b, name)
        if pa is None or pb is None:
            continue
        ca = _read_config_dict(_resolve(pa, a.base_dir))
        cb = _read_config_dict(_resolve(pb, b.base_dir))
        if ca is None or cb is None or ca == cb:
            continue
        changes = {
            k: (ca.get(k), cb.get(k))
            for k in sorted(set(ca) | set(cb))
            if ca.get(k) != cb.get(k)
        }
        diff.configs[name] = changes
    return diff


def _load_replay_configs(m: ExperimentManifest):
    pre_path = _resolve(m.pre_process, m.base_dir)
    if not pre_path.is_file():
        raise ConfigUnresolvable(f"pre_process config not found: {pre_path}")
    text_cfg = TextPipelineConfig.from_json_file(pre_path)
    audio_cfg = None
    if m.audio_process is not None:
        audio_path = _resolve(m.audio_process, m.base_dir)
        if not audio_path.is_file():
            raise ConfigUnresolvable(f"audio_process config not found: {audio_path}")
        audio_cfg = audiomod.AudioPipelineConfig.from_json_file(audio_path)
    return text_cfg, audio_cfg


def _source_audio(
    corpus_root: Path, uid: str, decoder_command: str, decode_dir: Path
) -> Optional[Path]:
    wav = corpus_root / f"{uid}.wav"
    if wav.is_file():
        return wav
    mp3 = corpus_root / f"{uid}.mp3"
    if mp3.is_file() and decoder_command:
        decode_dir.mkdir(parents=True, exist_ok=True)
        decoded = decode_dir / f"{uid}.wav"
        argv = [
            arg.format(src=str(mp3), dest=str(decoded))
            for arg in shlex.split(decoder_command)
        ]
        try:
            subprocess.run(argv, check=True, capture_output=True)
        except (OSError, subprocess.CalledProcessError):
            return None
        if decoded.is_file():
            return decoded
    return None


def _segment_uid(
    transcript: ChatTranscript,
    wav_path: Path,
    text_cfg: TextPipelineConfig,
    audio_cfg,
) -> list:
    buf = audiomod.read_wav(wav_path)
    buf = audiomod.resample(buf, audio_cfg.target_sample_rate_hz)
    rows = transcript_rows(transcript, text_cfg, "PAR")
    trim = [TimeInterval(s, e) for s, e in trim_intervals(transcript, "PAR")]
    return audiomod.segment_by_transcript(buf, rows, trim).segments


def replay(
    m: ExperimentManifest,
    corpus_root: str | Path,
    out_dir: str | Path,
    jobs: int = 1,
) -> dict:
    """Re-run the recorded pipelines over corpus_root, restricted to data_uids.

    Missing source files are reported and skipped; an unresolvable config
    is fatal.  All outputs land under out_dir (paths in the report are
    relative to it) regardless of the paths recorded inside the configs,
    so a replay never writes outside the directory it was pointed at.
    """
    corpus_root = Path(corpus_root)
    out_dir = Path(out_dir)
    report_check = validate_manifest(m)
    if not report_check.ok:
        raise ManifestSchemaError(
            "manifest fails validation: " + "; ".join(report_check.violations))
    text_cfg, audio_cfg = _load_replay_configs(m)

    missing: list[str] = []
    transcripts: list[ChatTranscript] = []
    audio_sources: dict[str, Path] = {}
    for uid in m.data_uids:
        cha = corpus_root / f"{uid}.cha"
        if not cha.is_file():
            missing.append(uid)
            continue
        wav = None
        if audio_cfg is not None:
            wav = _source_audio(
                corpus_root, uid, audio_cfg.decoder_command, out_dir / "decoded")
            if wav is None:
                missing.append(uid)
                continue
        transcripts.append(read_cha(cha))
        if wav is not None:
            audio_sources[uid] = wav

    # Re-root the recorded output path under out_dir: only the basename
    # of the original destination survives a replay.
    tsv_name = Path(text_cfg.output_path).name or "transcripts.tsv"
    run_cfg = dataclasses.replace(text_cfg, output_path=tsv_name)
    corpus_out = process_corpus(run_cfg, transcripts, "PAR", base_dir=out_dir)
    outputs: list[Path] = [corpus_out.tsv_path, *corpus_out.sidecar_paths]

    if audio_cfg is not None:
        by_uid = {t.uid: t for t in transcripts}
        ordered_uids = sorted(audio_sources)

        def cut(uid: str):
            return _segment_uid(by_uid[uid], audio_sources[uid], text_cfg, audio_cfg)

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                segment_lists = list(pool.map(cut, ordered_uids))
        else:
            segment_lists = [cut(uid) for uid in ordered_uids]

        seg_dir = out_dir / "segments"
        feat_dir = out_dir / "features"
        for segments in segment_lists:
            for seg in segments:
                seg_path = seg_dir / audiomod.segment_filename(seg.uid, seg.utt_index)
                audiomod.write_wav(seg_path, seg.audio)
                outputs.append(seg_path)
                if audio_cfg.feature_method == "NONE":
                    continue
                if audio_cfg.feature_method == "FFT":
                    feats = featmod.fft_features(seg.audio, audio_cfg.feature_order)
                else:
                    feats = featmod.mfcc(
                        seg.audio, audio_cfg.feature_order, scale=audio_cfg.scale_mfcc)
                feat_path = feat_dir / featmod.feature_filename(seg.uid, seg.utt_index)
                featmod.write_feature_file(feat_path, feats)
                outputs.append(feat_path)

    report = {
        "outputs": sorted(
            (
                {"path": p.relative_to(out_dir).as_posix(), "sha256": sha256_file(p)}
                for p in outputs
            ),
            key=lambda entry: entry["path"],
        ),
        "missing_uids": missing,
    }
    write_json(out_dir / "replay_report.json", report)
    return report
