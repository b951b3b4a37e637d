"""Exception types shared across the toolkit."""


class ChatPrepError(Exception):
    """Base class for all toolkit errors."""


# --- transcript parsing ---

class ChatParseError(ChatPrepError):
    """A .cha file violates the supported CHAT subset."""


class MalformedHeader(ChatParseError):
    """An "@" record that is not a bare marker and has no ":" separator."""


class UnterminatedTranscript(ChatParseError):
    """The file ended without an "@End" marker."""


class BadTimestamp(ChatParseError):
    """A trailing underscore pair whose parts are not plain integers."""


class UnknownLinePrefix(ChatParseError):
    """A line starting with something other than "@", "*", "%", or whitespace."""


# --- text pipeline / corpus output ---

class OutputUnwritable(ChatPrepError):
    """An output file or directory could not be created or written."""


class DuplicateUid(ChatPrepError):
    """Two samples in one collection share a uid."""


# --- cohort selection ---

class CohortRuleError(ChatPrepError):
    """A labeling rule violates its structural invariants."""


class OverlappingBands(CohortRuleError):
    """Two age bands of a banded rule intersect."""


class EmptyMetadata(ChatPrepError):
    """A labeling run was given no samples."""


class MissingUidColumn(ChatPrepError):
    """A metadata table has no "uid" column."""


# --- audio ---

class AudioReadError(ChatPrepError):
    """Base class for WAV ingest failures."""


class NotRiff(AudioReadError):
    """The file is not a RIFF/WAVE container."""


class UnsupportedEncoding(AudioReadError):
    """The audio encoding is not PCM integer or 32-bit float."""


class TruncatedData(AudioReadError):
    """The container declares more audio bytes than the file holds."""


# --- features ---

class WindowNotPowerOfTwo(ChatPrepError):
    """FFT feature extraction requires a power-of-two window."""


class NumCoeffsOutOfRange(ChatPrepError):
    """MFCC coefficient count outside [1, 40]."""


# --- manifests ---

class ManifestSchemaError(ChatPrepError):
    """A manifest or config JSON does not match its schema."""


class ConfigUnresolvable(ChatPrepError):
    """A manifest's referenced pre-processing config cannot be loaded."""


# --- CLI ---

class InvalidAnswer(ChatPrepError):
    """A scripted wizard answer failed validation."""
