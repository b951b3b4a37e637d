"""chatprep: reproducible preprocessing for CHAT transcripts and aligned audio."""

from .audio import (
    AudioBuffer,
    AudioPipelineConfig,
    Segment,
    SegmentationResult,
    read_wav,
    render_trimmed,
    resample,
    sample_index,
    segment_by_transcript,
    write_wav,
)
from .chat import (
    ChatTranscript,
    HeaderRecord,
    ParticipantInfo,
    TimeInterval,
    Utterance,
    parse_cha,
    read_cha,
    speaker_intervals,
    untimed_count,
    utterances_of,
)
from .cohort import (
    Band,
    CohortRule,
    LabelAssignment,
    MetadataTable,
    SampleMetadata,
    label_samples,
    load_metadata,
)
from .errors import (
    AudioReadError,
    BadTimestamp,
    ChatParseError,
    ChatPrepError,
    CohortRuleError,
    ConfigUnresolvable,
    DuplicateUid,
    EmptyMetadata,
    InvalidAnswer,
    ManifestSchemaError,
    MissingUidColumn,
    NotRiff,
    NumCoeffsOutOfRange,
    OutputUnwritable,
    OverlappingBands,
    TruncatedData,
    UnsupportedEncoding,
    WindowNotPowerOfTwo,
)
from .features import FeatureMatrix, fft_features, frame_count, mfcc
from .fixtures import FixtureSpec, generate_fixture
from .manifest import (
    ExperimentManifest,
    ManifestDiff,
    ValidationReport,
    canonicalize,
    diff_manifests,
    load_manifest,
    replay,
    save_manifest,
    validate_manifest,
)
from .textnorm import (
    CorpusOutput,
    TextPipelineConfig,
    UtteranceRow,
    normalize_utterance,
    process_corpus,
    read_rows,
    transcript_rows,
    trim_intervals,
)

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "AudioPipelineConfig",
    "AudioReadError",
    "BadTimestamp",
    "Band",
    "ChatParseError",
    "ChatPrepError",
    "ChatTranscript",
    "CohortRule",
    "CohortRuleError",
    "ConfigUnresolvable",
    "CorpusOutput",
    "DuplicateUid",
    "EmptyMetadata",
    "ExperimentManifest",
    "FeatureMatrix",
    "FixtureSpec",
    "HeaderRecord",
    "InvalidAnswer",
    "LabelAssignment",
    "ManifestDiff",
    "ManifestSchemaError",
    "MetadataTable",
    "MissingUidColumn",
    "NotRiff",
    "NumCoeffsOutOfRange",
    "OutputUnwritable",
    "OverlappingBands",
    "ParticipantInfo",
    "SampleMetadata",
    "Segment",
    "SegmentationResult",
    "TextPipelineConfig",
    "TimeInterval",
    "TruncatedData",
    "UnsupportedEncoding",
    "Utterance",
    "UtteranceRow",
    "ValidationReport",
    "WindowNotPowerOfTwo",
    "canonicalize",
    "diff_manifests",
    "fft_features",
    "frame_count",
    "generate_fixture",
    "label_samples",
    "load_manifest",
    "load_metadata",
    "mfcc",
    "normalize_utterance",
    "parse_cha",
    "process_corpus",
    "read_cha",
    "read_rows",
    "read_wav",
    "render_trimmed",
    "replay",
    "resample",
    "sample_index",
    "save_manifest",
    "segment_by_transcript",
    "speaker_intervals",
    "transcript_rows",
    "trim_intervals",
    "untimed_count",
    "utterances_of",
    "validate_manifest",
    "write_wav",
]
