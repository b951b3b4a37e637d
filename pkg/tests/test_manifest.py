import hashlib
import json
import shutil
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chatprep.audio import AudioPipelineConfig
from chatprep.errors import ConfigUnresolvable, ManifestSchemaError
from chatprep.fixtures import FixtureSpec, generate_fixture
from chatprep.manifest import (
    ExperimentManifest,
    canonicalize,
    diff_manifests,
    load_manifest,
    replay,
    save_manifest,
    validate_manifest,
)
from chatprep.textnorm import TextPipelineConfig


def all_on_text_config(output_path="rows.tsv"):
    flags = {k: True for k in (
        "remove_clear_throat", "unwrap_parentheses", "remove_bracket_colon",
        "remove_amp_disfluencies", "remove_unintelligible", "remove_pauses",
        "remove_slash_brackets", "remove_noise_indicators", "remove_error_codes",
        "strip_non_alphanumeric", "collapse_spaces", "capitalize_first",
        "add_final_period", "add_newline",
    )}
    return TextPipelineConfig(
        dataset="db", input_path="corpus", output_path=output_path, **flags)


def block4_dict(**overrides):
    base = {
        "pre_process": "text_config.json",
        "data_uids": ["001-0", "002-1", "003-2", "004-0"],
        "positive_uids": ["001-0", "003-2"],
        "training_uids": ["001-0", "002-1"],
        "test_uids": ["003-2", "004-0"],
        "method": "fine-tune BERT",
        "evaluation": {"ACC": 0.77, "AUC": 0.77},
    }
    base.update(overrides)
    return base


def bundle(tmp_path, manifest_dict=None, audio=False):
    """Manifest dir with config files beside the manifest JSON."""
    mdir = tmp_path / "bundle"
    mdir.mkdir(exist_ok=True)
    all_on_text_config().to_json_file(mdir / "text_config.json")
    manifest_dict = dict(manifest_dict or block4_dict())
    if audio:
        AudioPipelineConfig(
            dataset="db", target_sample_rate_hz=16000,
            feature_method="MFCC", feature_order=13, scale_mfcc=True,
        ).to_json_file(mdir / "audio_config.json")
        manifest_dict["audio_process"] = "audio_config.json"
    path = mdir / "manifest.json"
    path.write_text(json.dumps(manifest_dict), encoding="utf-8")
    return path


# ---------------------------------------------------------------- schema

def test_round_trip_dict():
    m = ExperimentManifest.from_dict(block4_dict())
    assert m.to_dict() == block4_dict()
    assert m.audio_process is None and m.labels is None


def test_unknown_key_rejected():
    with pytest.raises(ManifestSchemaError, match="unknown"):
        ExperimentManifest.from_dict(block4_dict(extra=1))


def test_missing_key_rejected():
    d = block4_dict()
    del d["evaluation"]
    with pytest.raises(ManifestSchemaError, match="missing"):
        ExperimentManifest.from_dict(d)


@pytest.mark.parametrize("overrides", [
    {"pre_process": ""},
    {"pre_process": 3},
    {"audio_process": ""},
    {"data_uids": "001-0"},
    {"data_uids": [1, 2]},
    {"method": None},
    {"evaluation": {"ACC": True}},
    {"evaluation": {"ACC": "high"}},
    {"evaluation": [0.77]},
    {"labels": {"001-0": 1}},
])
def test_bad_types_rejected(overrides):
    with pytest.raises(ManifestSchemaError):
        ExperimentManifest.from_dict(block4_dict(**overrides))


def test_load_sets_base_dir(tmp_path):
    path = bundle(tmp_path)
    m = load_manifest(path)
    assert m.base_dir == path.parent
    assert m.method == "fine-tune BERT"


def test_load_rejects_bad_json(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{not json")
    with pytest.raises(ManifestSchemaError, match="JSON"):
        load_manifest(p)


def test_save_load_round_trip(tmp_path):
    m = ExperimentManifest.from_dict(block4_dict())
    save_manifest(m, tmp_path / "m.json")
    assert load_manifest(tmp_path / "m.json") == m


# ------------------------------------------------------------ validation

def test_block4_shape_is_valid():
    report = validate_manifest(ExperimentManifest.from_dict(block4_dict()))
    assert report.ok and report.violations == [] and report.notes == []


def test_split_overlap_flagged():
    m = ExperimentManifest.from_dict(block4_dict(test_uids=["001-0", "003-2"]))
    report = validate_manifest(m)
    assert any("split overlap" in v and "001-0" in v for v in report.violations)


def test_positive_outside_data_flagged():
    m = ExperimentManifest.from_dict(block4_dict(positive_uids=["999-9"]))
    report = validate_manifest(m)
    assert any("positive_uids" in v and "999-9" in v for v in report.violations)


def test_duplicates_flagged():
    m = ExperimentManifest.from_dict(block4_dict(data_uids=["001-0", "001-0", "002-1"]))
    report = validate_manifest(m)
    assert any("duplicate" in v and "data_uids" in v for v in report.violations)


def test_all_violations_reported_not_just_first():
    m = ExperimentManifest.from_dict(block4_dict(
        positive_uids=["999-9"], test_uids=["001-0", "002-1"]))
    report = validate_manifest(m)
    assert len(report.violations) >= 2


def test_empty_test_uids_noted_but_valid():
    report = validate_manifest(ExperimentManifest.from_dict(block4_dict(test_uids=[])))
    assert report.ok
    assert any("test_uids" in n for n in report.notes)


def test_labels_must_agree_with_positive_uids():
    m = ExperimentManifest.from_dict(block4_dict(
        labels={"001-0": "negative", "002-1": "negative", "005-1": "positive"}))
    report = validate_manifest(m)
    assert any("disagree" in v and "001-0" in v for v in report.violations)
    assert any("not in data_uids" in v and "005-1" in v for v in report.violations)


def test_agreeing_labels_pass():
    m = ExperimentManifest.from_dict(block4_dict(
        labels={"001-0": "positive", "002-1": "negative"}))
    assert validate_manifest(m).ok


def test_resolve_configs_checks_files(tmp_path):
    path = bundle(tmp_path)
    assert validate_manifest(load_manifest(path), resolve_configs=True).ok

    m = load_manifest(path)
    m.pre_process = "nowhere.json"
    report = validate_manifest(m, resolve_configs=True)
    assert any("not found" in v for v in report.violations)

    (path.parent / "text_config.json").write_text('{"dataset": "db"}')
    report = validate_manifest(load_manifest(path), resolve_configs=True)
    assert any("invalid" in v for v in report.violations)


# ---------------------------------------------------------- canonical form

def test_canonicalize_fixed_point():
    m = ExperimentManifest.from_dict(block4_dict())
    data = canonicalize(m)
    again = canonicalize(ExperimentManifest.from_dict(json.loads(data)))
    assert data == again
    assert data.endswith(b"\n") and b": " not in data


def test_canonicalize_ignores_key_order():
    d = block4_dict()
    reordered = dict(reversed(list(d.items())))
    assert canonicalize(ExperimentManifest.from_dict(d)) == canonicalize(
        ExperimentManifest.from_dict(reordered))


def test_canonicalize_sees_one_uid_change():
    a = ExperimentManifest.from_dict(block4_dict())
    b = ExperimentManifest.from_dict(block4_dict(data_uids=["001-0", "002-1", "003-2", "005-1"]))
    assert canonicalize(a) != canonicalize(b)


def test_uid_order_preserved_in_canonical_form():
    a = ExperimentManifest.from_dict(block4_dict())
    b = ExperimentManifest.from_dict(block4_dict(data_uids=["004-0", "003-2", "002-1", "001-0"]))
    assert canonicalize(a) != canonicalize(b)


# ----------------------------------------------------------------- diff

def test_diff_identical_empty():
    a = ExperimentManifest.from_dict(block4_dict())
    b = ExperimentManifest.from_dict(block4_dict())
    assert diff_manifests(a, b).is_empty
    assert diff_manifests(a, b).to_dict() == {}


def test_diff_added_uid():
    a = ExperimentManifest.from_dict(block4_dict())
    b = ExperimentManifest.from_dict(block4_dict(test_uids=["003-2", "004-0", "002-1"]))
    d = diff_manifests(a, b)
    assert d.uid_lists == {"test_uids": {"added": ["002-1"]}}


def test_diff_method_scalar():
    a = ExperimentManifest.from_dict(block4_dict())
    b = ExperimentManifest.from_dict(block4_dict(method="SVM"))
    d = diff_manifests(a, b)
    assert d.scalars == {"method": ("fine-tune BERT", "SVM")}


def test_diff_reordered_set_equal():
    a = ExperimentManifest.from_dict(block4_dict())
    b = ExperimentManifest.from_dict(block4_dict(data_uids=["002-1", "001-0", "003-2", "004-0"]))
    d = diff_manifests(a, b)
    assert d.uid_lists == {"data_uids": {"reordered": True}}


def test_diff_evaluation_changes():
    a = ExperimentManifest.from_dict(block4_dict())
    b = ExperimentManifest.from_dict(block4_dict(evaluation={"ACC": 0.94, "F1": 0.84}))
    d = diff_manifests(a, b)
    assert d.evaluation == {
        "added": {"F1": 0.84},
        "removed": {"AUC": 0.77},
        "changed": {"ACC": [0.77, 0.94]},
    }


def test_diff_config_contents(tmp_path):
    a_path = bundle(tmp_path)
    b_dir = tmp_path / "other"
    shutil.copytree(a_path.parent, b_dir)
    import dataclasses
    altered = dataclasses.replace(all_on_text_config(), remove_pauses=False)
    altered.to_json_file(b_dir / "text_config.json")
    d = diff_manifests(load_manifest(a_path), load_manifest(b_dir / "manifest.json"))
    assert d.configs == {"pre_process": {"remove_pauses": (True, False)}}
    assert not d.is_empty


_POOL = [f"{i:03d}-{i % 3}" for i in range(1, 7)]


@st.composite
def valid_manifests(draw):
    data = draw(st.lists(st.sampled_from(_POOL), unique=True, min_size=1))
    positive = draw(st.lists(st.sampled_from(data), unique=True))
    shuffled = draw(st.permutations(data))
    cut = draw(st.integers(0, len(data)))
    hold = draw(st.integers(cut, len(data)))
    evaluation = draw(st.dictionaries(
        st.sampled_from(["ACC", "AUC", "F1"]),
        st.floats(0, 1, allow_nan=False).map(abs)))
    return ExperimentManifest(
        pre_process="cfg.json",
        data_uids=list(data),
        positive_uids=list(positive),
        training_uids=list(shuffled[:cut]),
        test_uids=list(shuffled[cut:hold]),
        method=draw(st.sampled_from(["SVM", "fine-tune BERT", ""])),
        evaluation=evaluation,
    )


@settings(max_examples=150, deadline=None)
@given(valid_manifests(), valid_manifests())
def test_diff_empty_iff_canonical_equal(a, b):
    assert validate_manifest(a).ok and validate_manifest(b).ok
    assert diff_manifests(a, b).is_empty == (canonicalize(a) == canonicalize(b))


@settings(max_examples=50, deadline=None)
@given(valid_manifests())
def test_valid_manifests_canonicalize_to_fixed_point(m):
    data = canonicalize(m)
    assert canonicalize(ExperimentManifest.from_dict(json.loads(data))) == data


# ---------------------------------------------------------------- replay

@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    manifest = generate_fixture(
        FixtureSpec(num_transcripts=4, utterances_per=(5, 7), seed=21, audio=True),
        root,
    )
    return root, manifest


def replay_manifest_path(tmp_path, corpus_manifest, audio=False, extra_uids=(), labels=None):
    uids = [t["uid"] for t in corpus_manifest["transcripts"]] + list(extra_uids)
    d = block4_dict(
        data_uids=uids,
        positive_uids=uids[:1],
        training_uids=uids[: len(uids) // 2],
        test_uids=uids[len(uids) // 2 :],
    )
    if labels is not None:
        d["labels"] = labels
    return bundle(tmp_path, d, audio=audio)


def hashes(report):
    return {entry["path"]: entry["sha256"] for entry in report["outputs"]}


def test_replay_text_row_counts(tmp_path, corpus):
    root, fixture = corpus
    path = replay_manifest_path(tmp_path, fixture)
    out = tmp_path / "out"
    report = replay(load_manifest(path), root, out)
    assert report["missing_uids"] == []
    rows = (out / "rows.tsv").read_text().splitlines()
    assert len(rows) - 1 == fixture["totals"]["substantive_par_rows"]
    assert json.loads((out / "replay_report.json").read_text()) == report


def test_replay_outputs_hashes_verify(tmp_path, corpus):
    root, fixture = corpus
    path = replay_manifest_path(tmp_path, fixture, audio=True)
    out = tmp_path / "out"
    report = replay(load_manifest(path), root, out)
    assert report["outputs"] == sorted(report["outputs"], key=lambda e: e["path"])
    for entry in report["outputs"]:
        digest = hashlib.sha256((out / entry["path"]).read_bytes()).hexdigest()
        assert digest == entry["sha256"]
    n_segments = sum(1 for e in report["outputs"] if e["path"].startswith("segments/"))
    n_features = sum(1 for e in report["outputs"] if e["path"].startswith("features/"))
    assert n_segments == n_features == fixture["totals"]["substantive_par_rows"]


def test_replay_twice_identical(tmp_path, corpus):
    root, fixture = corpus
    path = replay_manifest_path(tmp_path, fixture, audio=True)
    m = load_manifest(path)
    r1 = replay(m, root, tmp_path / "a")
    r2 = replay(m, root, tmp_path / "b", jobs=3)
    assert hashes(r1) == hashes(r2)


def test_replay_missing_uid_reported_run_continues(tmp_path, corpus):
    root, fixture = corpus
    path = replay_manifest_path(tmp_path, fixture, extra_uids=["999-9"])
    report = replay(load_manifest(path), root, tmp_path / "out")
    assert report["missing_uids"] == ["999-9"]
    assert (tmp_path / "out" / "rows.tsv").is_file()


def test_replay_missing_wav_skips_uid_entirely(tmp_path, corpus):
    root, fixture = corpus
    clone = tmp_path / "corpus"
    shutil.copytree(root, clone)
    victim = fixture["transcripts"][0]["uid"]
    (clone / f"{victim}.wav").unlink()
    path = replay_manifest_path(tmp_path, fixture, audio=True)
    out = tmp_path / "out"
    report = replay(load_manifest(path), clone, out)
    assert report["missing_uids"] == [victim]
    rows = (out / "rows.tsv").read_text().splitlines()[1:]
    assert not any(r.startswith(victim + "\t") for r in rows)


def test_replay_decoder_hook(tmp_path, corpus):
    root, fixture = corpus
    clone = tmp_path / "corpus"
    shutil.copytree(root, clone)
    victim = fixture["transcripts"][0]["uid"]
    (clone / f"{victim}.wav").rename(clone / f"{victim}.mp3")

    mpath = replay_manifest_path(tmp_path, fixture, audio=True)
    acfg = json.loads((mpath.parent / "audio_config.json").read_text())
    acfg["decoder_command"] = "cp {src} {dest}"
    (mpath.parent / "audio_config.json").write_text(json.dumps(acfg))

    out = tmp_path / "out"
    report = replay(load_manifest(mpath), clone, out)
    assert report["missing_uids"] == []
    assert (out / "decoded" / f"{victim}.wav").is_file()
    assert not any(e["path"].startswith("decoded/") for e in report["outputs"])


def test_replay_unresolvable_config_fatal(tmp_path, corpus):
    root, fixture = corpus
    path = replay_manifest_path(tmp_path, fixture)
    m = load_manifest(path)
    m.pre_process = "gone.json"
    with pytest.raises(ConfigUnresolvable):
        replay(m, root, tmp_path / "out")


def test_replay_invalid_manifest_fatal(tmp_path, corpus):
    root, fixture = corpus
    path = replay_manifest_path(tmp_path, fixture)
    m = load_manifest(path)
    m.test_uids = list(m.training_uids)
    with pytest.raises(ManifestSchemaError, match="split overlap"):
        replay(m, root, tmp_path / "out")
