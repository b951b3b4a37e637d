"""Terminal entry point: interactive wizards plus manifest-driven batch mode.

The two wizards walk the question flows of the original interactive
tool (datasets ``db``/``wls``, one question per pipeline switch) and
then immediately execute the configured pipeline.  Alongside their
config JSON they leave a starter ``manifest.json``, so the exact run
can be repeated later with ``chatprep run`` — scripted answers, an
interactive session, and a manifest replay all produce byte-identical
outputs.

Everything is a subcommand of one binary; there is deliberately no
shell-script orchestration between stages.  Exit codes: 0 success,
2 partial (some uids missing their source files), 1 fatal.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Callable, Optional

import click

from .audio import (
    AudioPipelineConfig,
    is_power_of_two,
    read_wav,
    resample,
    segment_by_transcript,
    segment_filename,
    write_wav,
)
from .chat import TimeInterval, read_cha
from .cohort import CohortRule, label_samples, load_metadata
from .errors import ChatPrepError, InvalidAnswer, ManifestSchemaError
from .features import feature_filename, fft_features, mfcc, write_feature_file
from .fileio import atomic_write_text
from .manifest import (
    ExperimentManifest,
    diff_manifests,
    load_manifest,
    replay,
    save_manifest,
    validate_manifest,
)
from .textnorm import (
    _TOGGLE_KEYS,
    TextPipelineConfig,
    process_corpus,
    transcript_rows,
    trim_intervals,
)

_DATASET_PROMPT = "Which dataset you are pre-processing? wls or db?: "

_TEXT_TOGGLE_PROMPTS = (
    "Remove 'clear throat'? (Y/N): ",
    "Remove open parentheses e.g, (be)coming? (Y/N): ",
    "Remove open square brackets eg. [: overflowing]? (Y/N): ",
    "Remove disfluencies prefixed with '&'? (Y/N): ",
    "Remove unintelligible words? (Y/N): ",
    "Remove pauses eg. (.) or (..)? (Y/N): ",
    "Remove forward slashes in square brackets? (Y/N): ",
    "Remove noise indicators e.g. &=breath? (Y/N): ",
    "Remove square brackets indicating an error code? (Y/N): ",
    "Remove all non-alphanumeric characters? (Y/N): ",
    "Replace multiple spaces with a single space? (Y/N): ",
    "Capitalize the first character? (Y/N): ",
    "Add period at the end of every sentence? (Y/N): ",
    "Add newline at the end of every sentence? (Y/N): ",
)

_TEXT_CONFIG_NAME = "text_preprocess.json"
_AUDIO_CONFIG_NAME = "audio_preprocess.json"
_MANIFEST_NAME = "manifest.json"


class Prompter:
    """One question at a time, from the terminal or an answers file.

    Interactive entry re-asks after a rejected answer; in scripted mode
    a rejected or missing answer is fatal (there is nobody to re-ask).
    """

    def __init__(self, answers: Optional[list[str]] = None):
        self.scripted = answers is not None
        self._queue = iter(answers or ())

    def ask(self, prompt: str, parse: Callable[[str], object]):
        while True:
            click.echo(prompt, nl=False)
            if self.scripted:
                line = next(self._queue, None)
                if line is None:
                    raise InvalidAnswer("the answers file ended before the questions did")
                click.echo(line)
            else:
                raw = sys.stdin.readline()
                if raw == "":
                    raise ChatPrepError("unexpected end of input")
                line = raw.rstrip("\n")
            try:
                return parse(line)
            except InvalidAnswer as exc:
                if self.scripted:
                    raise
                click.echo(str(exc))


def _parse_dataset(line: str) -> str:
    value = line.strip().lower()
    if value not in ("db", "wls"):
        raise InvalidAnswer("Please answer wls or db.")
    return value


def _parse_yn(line: str) -> bool:
    value = line.strip().lower()
    if value in ("y", "yes"):
        return True
    if value in ("n", "no"):
        return False
    raise InvalidAnswer("Please answer Y or N.")


def _parse_path(line: str) -> str:
    value = line.strip()
    if not value:
        raise InvalidAnswer("Please enter a path.")
    return value


def _parse_positive_int(line: str) -> int:
    try:
        value = int(line.strip())
    except ValueError:
        raise InvalidAnswer("Please enter a whole number.") from None
    if value <= 0:
        raise InvalidAnswer("Please enter a positive number.")
    return value


def _parse_method(line: str) -> str:
    value = line.strip().upper()
    if value in ("FTT", "FFT"):
        return "FFT"
    if value in ("MFCC", "NONE"):
        return value
    raise InvalidAnswer("Please answer FTT, MFCC or NONE.")


def _make_order_parser(method: str) -> Callable[[str], int]:
    def parse(line: str) -> int:
        try:
            value = int(line.strip())
        except ValueError:
            raise InvalidAnswer("Please enter a whole number.") from None
        if method == "NONE":
            if value != 0:
                raise InvalidAnswer("Enter 0 when no feature extraction is selected.")
        elif method == "FFT":
            if not is_power_of_two(value):
                raise InvalidAnswer("The FFT window size must be a power of two.")
        elif not 1 <= value <= 40:
            raise InvalidAnswer("The number of MFCC coefficients must be between 1 and 40.")
        return value

    return parse


def _read_answers(path: Optional[str]) -> Optional[list[str]]:
    if path is None:
        return None
    return Path(path).read_text(encoding="utf-8").splitlines()


def _load_corpus(input_dir: Path):
    return [read_cha(p) for p in sorted(input_dir.glob("*.cha"))]


@click.group()
def main():
    """Corpus preprocessing for CHAT transcripts and aligned audio."""


@main.command("wizard-text")
@click.option("--answers", type=click.Path(exists=True, dir_okay=False),
              help="File with one answer per line instead of a terminal session.")
def wizard_text(answers):
    """Interactive text-pipeline setup; writes the config and runs it."""
    prompter = Prompter(_read_answers(answers))
    try:
        dataset = prompter.ask(_DATASET_PROMPT, _parse_dataset)
        input_path = prompter.ask("Where are the .cha files located?: ", _parse_path)
        toggles = {
            key: prompter.ask(prompt, _parse_yn)
            for key, prompt in zip(_TOGGLE_KEYS, _TEXT_TOGGLE_PROMPTS)
        }
        output_path = prompter.ask(
            "You data will be stored as .tsv file. Please enter the output path "
            "and file name for your pre-processed transcripts: ",
            _parse_path,
        )
    except (InvalidAnswer, ChatPrepError) as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)

    click.echo("Please stand by, your pre-processing script will be generated shortly...")
    cfg = TextPipelineConfig(
        dataset=dataset, input_path=input_path, output_path=output_path, **toggles)
    bundle_dir = Path(output_path).parent
    cfg.to_json_file(bundle_dir / _TEXT_CONFIG_NAME)
    click.echo("Your text pre-processing json file has been generated!")

    click.echo("Running text pre-processing script now...")
    try:
        transcripts = _load_corpus(Path(input_path))
        process_corpus(cfg, transcripts, "PAR")
        manifest = ExperimentManifest(
            pre_process=_TEXT_CONFIG_NAME,
            data_uids=sorted(t.uid for t in transcripts),
        )
        save_manifest(manifest, bundle_dir / _MANIFEST_NAME)
    except ChatPrepError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    click.echo("Your dataset is now pre-processed!")


def _text_config_for_segmentation(bundle_dir: Path) -> TextPipelineConfig:
    """Segment the same rows a replay would: when the wizard bundle already
    has a manifest with a text config, reuse it; otherwise clean nothing."""
    manifest_path = bundle_dir / _MANIFEST_NAME
    if manifest_path.is_file():
        m = load_manifest(manifest_path)
        cfg_path = bundle_dir / m.pre_process
        if cfg_path.is_file():
            return TextPipelineConfig.from_json_file(cfg_path)
    return TextPipelineConfig()


@main.command("wizard-audio")
@click.option("--answers", type=click.Path(exists=True, dir_okay=False),
              help="File with one answer per line instead of a terminal session.")
def wizard_audio(answers):
    """Interactive audio-pipeline setup; writes the config and runs it."""
    prompter = Prompter(_read_answers(answers))
    try:
        dataset = prompter.ask(_DATASET_PROMPT, _parse_dataset)
        input_path = prompter.ask("Where are the .mp3 files located?: ", _parse_path)
        segment_path = prompter.ask(
            "Where do you want to store the trimmed audio segments? ", _parse_path)
        rate = prompter.ask("Enter sample rate: ", _parse_positive_int)
        method = prompter.ask(
            "Feature extraction methods, selecting from FTT or MFCC or NONE: ",
            _parse_method)
        order = prompter.ask(
            "Enter number of FTT windows size or MFCC, 0 for NONE: ",
            _make_order_parser(method))
        scale = prompter.ask("Scaling MFCC? y/n: ", _parse_yn)
    except (InvalidAnswer, ChatPrepError) as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)

    cfg = AudioPipelineConfig(
        dataset=dataset,
        input_path=input_path,
        segment_output_path=segment_path,
        target_sample_rate_hz=rate,
        feature_method=method,
        feature_order=order,
        scale_mfcc=scale,
    )
    seg_dir = Path(segment_path)
    cfg.to_json_file(seg_dir / _AUDIO_CONFIG_NAME)
    click.echo("Your audio pre-processing json file has been generated!")

    click.echo("Running audio pre-processing script now...")
    try:
        _run_audio_pipeline(cfg, Path(input_path), seg_dir)
        manifest_path = seg_dir / _MANIFEST_NAME
        if manifest_path.is_file():
            m = load_manifest(manifest_path)
            m.audio_process = _AUDIO_CONFIG_NAME
            save_manifest(m, manifest_path)
    except ChatPrepError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    click.echo("Your dataset is now pre-processed!")


def _run_audio_pipeline(cfg: AudioPipelineConfig, input_dir: Path, seg_dir: Path):
    text_cfg = _text_config_for_segmentation(seg_dir)
    click.echo("Starting to convert .mp3 to .wav")
    # nothing to do unless a decoder command is configured; .wav sources
    # are picked up directly
    click.echo("Finished!")
    click.echo("Starting to resample audio to target sample rate...")
    for cha_path in sorted(input_dir.glob("*.cha")):
        wav_path = input_dir / f"{cha_path.stem}.wav"
        if not wav_path.is_file():
            continue
        transcript = read_cha(cha_path)
        buf = resample(read_wav(wav_path), cfg.target_sample_rate_hz)
        rows = transcript_rows(transcript, text_cfg, "PAR")
        trim = [TimeInterval(s, e) for s, e in trim_intervals(transcript, "PAR")]
        for seg in segment_by_transcript(buf, rows, trim).segments:
            write_wav(seg_dir / segment_filename(seg.uid, seg.utt_index), seg.audio)
            if cfg.feature_method == "NONE":
                continue
            if cfg.feature_method == "FFT":
                feats = fft_features(seg.audio, cfg.feature_order)
            else:
                feats = mfcc(seg.audio, cfg.feature_order, scale=cfg.scale_mfcc)
            write_feature_file(
                seg_dir / feature_filename(seg.uid, seg.utt_index), feats)
    click.echo("Finished!")


@main.command("run")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus-root", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Process this many transcripts' audio concurrently.")
def run(manifest_path, corpus_root, out_dir, jobs):
    """Validate a manifest, replay it over a corpus, write the report."""
    try:
        m = load_manifest(manifest_path)
    except ManifestSchemaError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    report = validate_manifest(m, resolve_configs=True)
    for note in report.notes:
        click.echo(f"note: {note}")
    if not report.ok:
        for violation in report.violations:
            click.echo(f"violation: {violation}", err=True)
        sys.exit(1)
    try:
        result = replay(m, corpus_root, out_dir, jobs=jobs)
    except ChatPrepError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    click.echo(f"{len(result['outputs'])} output files written to {out_dir}")
    click.echo(f"replay report: {Path(out_dir) / 'replay_report.json'}")
    if result["missing_uids"]:
        for uid in result["missing_uids"]:
            click.echo(f"missing uid: {uid}", err=True)
        sys.exit(2)


@main.command("validate")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def validate(manifest_path):
    """Check a manifest against every schema rule and invariant."""
    try:
        m = load_manifest(manifest_path)
    except ManifestSchemaError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    report = validate_manifest(m, resolve_configs=True)
    for note in report.notes:
        click.echo(f"note: {note}")
    if not report.ok:
        for violation in report.violations:
            click.echo(f"violation: {violation}", err=True)
        sys.exit(1)
    click.echo("manifest is valid")


@main.command("diff")
@click.argument("manifest_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("manifest_b", type=click.Path(exists=True, dir_okay=False))
def diff(manifest_a, manifest_b):
    """Compare two manifests; exit 0 when equivalent, 1 when they differ."""
    try:
        a = load_manifest(manifest_a)
        b = load_manifest(manifest_b)
    except ManifestSchemaError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    delta = diff_manifests(a, b)
    if delta.is_empty:
        click.echo("manifests are equivalent")
        return
    click.echo(json.dumps(delta.to_dict(), indent=2, sort_keys=True))
    sys.exit(1)


@main.command("select")
@click.option("--metadata", "metadata_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--rule", "rule_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              help="Write the labels as TSV instead of printing them.")
def select(metadata_path, rule_path, out_path):
    """Label every metadata row with a declarative cohort rule."""
    try:
        table = load_metadata(metadata_path)
        rule = CohortRule.from_json_file(rule_path)
        for warning in table.warnings:
            click.echo(f"warning: {warning}", err=True)
        assignments = label_samples(rule, list(table))
    except ChatPrepError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    lines = ["uid\tlabel\treason"]
    lines += [f"{a.uid}\t{a.label}\t{a.reason}" for a in assignments]
    if out_path:
        atomic_write_text(Path(out_path), "\n".join(lines) + "\n")
        click.echo(f"labels written to {out_path}")
    else:
        for line in lines:
            click.echo(line)


if __name__ == "__main__":
    main()
