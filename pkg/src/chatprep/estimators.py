"""scikit-learn-style adapters over the functional modules.

Every underlying operation here is a stateless pure function, so fit()
never learns anything — it only exists so these drop into
sklearn.pipeline.Pipeline and sklearn.base.clone alongside real
estimators.  Parameters mirror the config objects one to one.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin

from .audio import AudioBuffer, resample
from .cohort import CohortRule, SampleMetadata, label_samples
from .features import fft_features, mfcc
from .textnorm import _TOGGLE_KEYS, TextPipelineConfig, normalize_utterance


class TextNormalizer(BaseEstimator, TransformerMixin):
    """Apply the transcript text-cleaning rules to an iterable of strings."""

    def __init__(
        self,
        remove_clear_throat=False,
        unwrap_parentheses=False,
        remove_bracket_colon=False,
        remove_amp_disfluencies=False,
        remove_unintelligible=False,
        remove_pauses=False,
        remove_slash_brackets=False,
        remove_noise_indicators=False,
        remove_error_codes=False,
        strip_non_alphanumeric=False,
        collapse_spaces=False,
        capitalize_first=False,
        add_final_period=False,
        add_newline=False,
    ):
        self.remove_clear_throat = remove_clear_throat
        self.unwrap_parentheses = unwrap_parentheses
        self.remove_bracket_colon = remove_bracket_colon
        self.remove_amp_disfluencies = remove_amp_disfluencies
        self.remove_unintelligible = remove_unintelligible
        self.remove_pauses = remove_pauses
        self.remove_slash_brackets = remove_slash_brackets
        self.remove_noise_indicators = remove_noise_indicators
        self.remove_error_codes = remove_error_codes
        self.strip_non_alphanumeric = strip_non_alphanumeric
        self.collapse_spaces = collapse_spaces
        self.capitalize_first = capitalize_first
        self.add_final_period = add_final_period
        self.add_newline = add_newline

    @classmethod
    def all_on(cls) -> "TextNormalizer":
        return cls(**{key: True for key in _TOGGLE_KEYS})

    def _config(self) -> TextPipelineConfig:
        return TextPipelineConfig(**{key: getattr(self, key) for key in _TOGGLE_KEYS})

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[str]:
        cfg = self._config()
        return [normalize_utterance(text, cfg) for text in X]


class AudioResampler(BaseEstimator, TransformerMixin):
    def __init__(self, target_hz: int = 16000):
        self.target_hz = target_hz

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[AudioBuffer]:
        return [resample(buf, self.target_hz) for buf in X]


class FftFeaturizer(BaseEstimator, TransformerMixin):
    """One magnitude-spectrum matrix (frames x window/2+1) per buffer."""

    def __init__(self, window_size: int = 256):
        self.window_size = window_size

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return [fft_features(buf, self.window_size).values for buf in X]


class MfccFeaturizer(BaseEstimator, TransformerMixin):
    def __init__(self, num_coeffs: int = 13, scale: bool = False):
        self.num_coeffs = num_coeffs
        self.scale = scale

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return [mfcc(buf, self.num_coeffs, scale=self.scale).values for buf in X]


class CohortLabeler(BaseEstimator):
    """Rule-driven labeling; predict returns one label string per sample."""

    def __init__(self, rule: CohortRule = None):
        self.rule = rule

    def fit(self, X, y=None):
        if self.rule is None:
            raise ValueError("CohortLabeler needs a rule before use")
        return self

    def predict(self, X) -> list[str]:
        self.fit(X)
        samples = list(X)
        if samples and not isinstance(samples[0], SampleMetadata):
            raise TypeError("CohortLabeler expects SampleMetadata inputs")
        return [a.label for a in label_samples(self.rule, samples)]
