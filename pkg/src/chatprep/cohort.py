"""Declarative cohort labeling over per-sample metadata.

A :class:`CohortRule` comes in three forms:

- ``threshold``: one cutoff on one numeric field, direction given by
  ``positive_when`` (le/lt/ge/gt, always explicit).
- ``banded_threshold``: the cutoff depends on the sample's age band.
  Bands are half-open ``[age_min, age_max)``, must not overlap, and
  must tile their declared range with no gaps; JSON ``null`` bounds
  mean unbounded.
- ``code_map``: integer codes mapped to positive/negative; the two
  code sets must be disjoint.

Labeling never throws on odd samples: a missing field, an age no band
covers, or a code in neither set yields an ``excluded`` assignment
whose reason spells out what was looked at.  Every input sample gets
exactly one assignment, in input order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from .errors import (
    CohortRuleError,
    DuplicateUid,
    EmptyMetadata,
    MissingUidColumn,
    OverlappingBands,
)

Scalar = Union[str, int, float]

_COMPARATORS = {
    "le": operator.le,
    "lt": operator.lt,
    "ge": operator.ge,
    "gt": operator.gt,
}

_FORMS = ("threshold", "banded_threshold", "code_map")

# metadata header spellings accepted for the typed fields
_COLUMN_ALIASES = {
    "uid": "uid",
    "age": "age_years",
    "age_years": "age_years",
    "mmse": "mmse",
    "diagnosis_code": "diagnosis_code",
    "dx": "diagnosis_code",
    "fluency": "fluency_score",
    "fluency_score": "fluency_score",
}


@dataclass
class SampleMetadata:
    """Typed per-sample metadata; unanticipated columns land in `extra`."""

    uid: str
    age_years: Optional[float] = None
    mmse: Optional[float] = None
    diagnosis_code: Optional[int] = None
    fluency_score: Optional[float] = None
    extra: dict[str, Scalar] = field(default_factory=dict)


@dataclass
class MetadataTable:
    """Samples plus the parse-warning tally from :func:`load_metadata`."""

    samples: list[SampleMetadata]
    warnings: list[str]

    def __iter__(self):
        return iter(self.samples)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class Band:
    """Half-open age band [age_min, age_max) with its own cutoff."""

    age_min: float
    age_max: float
    cutoff: float
    positive_when: str

    def __post_init__(self):
        if self.positive_when not in _COMPARATORS:
            raise CohortRuleError(f"positive_when must be one of {sorted(_COMPARATORS)}")
        if not self.age_min < self.age_max:
            raise CohortRuleError(
                f"band [{self.age_min}, {self.age_max}) is empty or inverted"
            )

    def covers(self, age: float) -> bool:
        return self.age_min <= age < self.age_max


@dataclass(frozen=True)
class CohortRule:
    form: str
    field: str
    cutoff: Optional[float] = None
    positive_when: Optional[str] = None
    bands: tuple[Band, ...] = ()
    positive_codes: frozenset[int] = frozenset()
    negative_codes: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.form not in _FORMS:
            raise CohortRuleError(f"form must be one of {list(_FORMS)}, got {self.form!r}")
        if not self.field:
            raise CohortRuleError("rule needs a metadata field name")
        if self.form == "threshold":
            if self.cutoff is None or self.positive_when is None:
                raise CohortRuleError("threshold rule needs cutoff and positive_when")
            if self.positive_when not in _COMPARATORS:
                raise CohortRuleError(
                    f"positive_when must be one of {sorted(_COMPARATORS)}"
                )
        elif self.form == "banded_threshold":
            self._check_bands()
        else:
            overlap = self.positive_codes & self.negative_codes
            if overlap:
                raise CohortRuleError(
                    f"codes {sorted(overlap)} appear as both positive and negative"
                )

    def _check_bands(self):
        if not self.bands:
            raise CohortRuleError("banded rule needs at least one band")
        ordered = sorted(self.bands, key=lambda b: b.age_min)
        for left, right in zip(ordered, ordered[1:]):
            if right.age_min < left.age_max:
                raise OverlappingBands(
                    f"bands [{left.age_min}, {left.age_max}) and "
                    f"[{right.age_min}, {right.age_max}) overlap"
                )
            if right.age_min > left.age_max:
                raise CohortRuleError(
                    f"bands leave a gap between {left.age_max} and {right.age_min}"
                )

    # --- JSON form ---

    @classmethod
    def from_dict(cls, data: object) -> "CohortRule":
        if not isinstance(data, dict):
            raise CohortRuleError("rule must be a JSON object")
        form = data.get("form")
        if form not in _FORMS:
            raise CohortRuleError(f"form must be one of {list(_FORMS)}, got {form!r}")
        allowed = {"form", "field"}
        if form == "threshold":
            allowed |= {"cutoff", "positive_when"}
        elif form == "banded_threshold":
            allowed |= {"bands"}
        else:
            allowed |= {"positive_codes", "negative_codes"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise CohortRuleError(f"unknown rule keys for {form}: {', '.join(unknown)}")

        kwargs: dict = {"form": form, "field": data.get("field", "")}
        if form == "threshold":
            kwargs["cutoff"] = data.get("cutoff")
            kwargs["positive_when"] = data.get("positive_when")
        elif form == "banded_threshold":
            raw_bands = data.get("bands")
            if not isinstance(raw_bands, list):
                raise CohortRuleError("banded rule needs a 'bands' list")
            kwargs["bands"] = tuple(_band_from_dict(b) for b in raw_bands)
        else:
            kwargs["positive_codes"] = _code_set(data.get("positive_codes"), "positive_codes")
            kwargs["negative_codes"] = _code_set(data.get("negative_codes"), "negative_codes")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out: dict = {"form": self.form, "field": self.field}
        if self.form == "threshold":
            out["cutoff"] = self.cutoff
            out["positive_when"] = self.positive_when
        elif self.form == "banded_threshold":
            out["bands"] = [
                {
                    "age_min": None if math.isinf(b.age_min) else b.age_min,
                    "age_max": None if math.isinf(b.age_max) else b.age_max,
                    "cutoff": b.cutoff,
                    "positive_when": b.positive_when,
                }
                for b in sorted(self.bands, key=lambda b: b.age_min)
            ]
        else:
            out["positive_codes"] = sorted(self.positive_codes)
            out["negative_codes"] = sorted(self.negative_codes)
        return out

    @classmethod
    def from_json_file(cls, path: str | Path) -> "CohortRule":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise CohortRuleError(f"cannot read rule file {path}: {exc}") from exc
        return cls.from_dict(data)


def _band_from_dict(data: object) -> Band:
    if not isinstance(data, dict):
        raise CohortRuleError("each band must be a JSON object")
    unknown = sorted(set(data) - {"age_min", "age_max", "cutoff", "positive_when"})
    if unknown:
        raise CohortRuleError(f"unknown band keys: {', '.join(unknown)}")
    if "cutoff" not in data or "positive_when" not in data:
        raise CohortRuleError("each band needs cutoff and positive_when")
    age_min = data.get("age_min")
    age_max = data.get("age_max")
    return Band(
        age_min=-math.inf if age_min is None else float(age_min),
        age_max=math.inf if age_max is None else float(age_max),
        cutoff=data["cutoff"],
        positive_when=data["positive_when"],
    )


def _code_set(value: object, name: str) -> frozenset[int]:
    if value is None:
        return frozenset()
    if not isinstance(value, list) or not all(isinstance(c, int) for c in value):
        raise CohortRuleError(f"{name} must be a list of integers")
    return frozenset(value)


@dataclass(frozen=True)
class LabelAssignment:
    uid: str
    label: str  # positive | negative | excluded
    reason: str


def _field_value(sample: SampleMetadata, name: str):
    if name in ("uid", "extra"):
        return None
    if hasattr(sample, name):
        return getattr(sample, name)
    return sample.extra.get(name)


def _fmt(value) -> str:
    if isinstance(value, float) and value.is_integer() and not math.isinf(value):
        return str(int(value))
    return str(value)


def _compare(uid: str, field_name: str, value, positive_when: str, cutoff, prefix="") -> LabelAssignment:
    hit = _COMPARATORS[positive_when](value, cutoff)
    label = "positive" if hit else "negative"
    reason = f"{prefix}{field_name}={_fmt(value)} {positive_when} {_fmt(cutoff)}: {label}"
    return LabelAssignment(uid=uid, label=label, reason=reason)


def _label_one(rule: CohortRule, sample: SampleMetadata) -> LabelAssignment:
    if rule.form == "banded_threshold":
        age = sample.age_years
        if age is None:
            return LabelAssignment(sample.uid, "excluded", "missing age_years")
        band = next((b for b in rule.bands if b.covers(age)), None)
        if band is None:
            return LabelAssignment(
                sample.uid, "excluded", f"no band covers age_years={_fmt(age)}"
            )
        value = _field_value(sample, rule.field)
        if value is None:
            return LabelAssignment(sample.uid, "excluded", f"missing {rule.field}")
        if not isinstance(value, (int, float)):
            return LabelAssignment(
                sample.uid, "excluded", f"{rule.field}={value!r} is not numeric"
            )
        prefix = f"age_years={_fmt(age)} in [{_fmt(band.age_min)}, {_fmt(band.age_max)}); "
        return _compare(sample.uid, rule.field, value, band.positive_when, band.cutoff, prefix)

    value = _field_value(sample, rule.field)
    if value is None:
        return LabelAssignment(sample.uid, "excluded", f"missing {rule.field}")

    if rule.form == "threshold":
        if not isinstance(value, (int, float)):
            return LabelAssignment(
                sample.uid, "excluded", f"{rule.field}={value!r} is not numeric"
            )
        return _compare(sample.uid, rule.field, value, rule.positive_when, rule.cutoff)

    # code_map
    if value in rule.positive_codes:
        return LabelAssignment(sample.uid, "positive", f"{rule.field}={value} in positive codes")
    if value in rule.negative_codes:
        return LabelAssignment(sample.uid, "negative", f"{rule.field}={value} in negative codes")
    return LabelAssignment(
        sample.uid, "excluded", f"{rule.field}={value} in neither code set"
    )


def label_samples(
    rule: CohortRule, metadata: Iterable[SampleMetadata]
) -> list[LabelAssignment]:
    """Assign positive/negative/excluded to every sample, in input order."""
    samples = list(metadata)
    if not samples:
        raise EmptyMetadata("no samples to label")
    return [_label_one(rule, s) for s in samples]


# --- metadata files ---


def _parse_number(token: str):
    """(value, warning) pair; empty cells are absent without a warning."""
    token = token.strip()
    if not token:
        return None, False
    try:
        return int(token), False
    except ValueError:
        pass
    try:
        return float(token), False
    except ValueError:
        return None, True


def load_metadata(path: str | Path) -> MetadataTable:
    """Read a delimiter-separated metadata table (TSV or CSV by header sniff)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8-sig")
    stream = io.StringIO(text)
    header_line = stream.readline()
    if not header_line.strip():
        raise MissingUidColumn(f"{path}: empty file has no 'uid' column")
    delimiter = "\t" if "\t" in header_line else ","
    stream.seek(0)
    reader = csv.reader(stream, delimiter=delimiter)
    header = [cell.strip().lower() for cell in next(reader)]
    if "uid" not in header:
        raise MissingUidColumn(f"{path}: header {header} has no 'uid' column")

    samples: list[SampleMetadata] = []
    warnings: list[str] = []
    seen: set[str] = set()
    for lineno, row in enumerate(reader, start=2):
        if not any(cell.strip() for cell in row):
            continue
        cells = dict(zip(header, row + [""] * (len(header) - len(row))))
        uid = cells.get("uid", "").strip()
        if not uid:
            warnings.append(f"{path}:{lineno}: row without uid skipped")
            continue
        if uid in seen:
            raise DuplicateUid(f"{path}:{lineno}: duplicate uid {uid!r}")
        seen.add(uid)
        sample = SampleMetadata(uid=uid)
        for column, raw in cells.items():
            target = _COLUMN_ALIASES.get(column)
            if target == "uid":
                continue
            if target is None:
                value, warn = _parse_number(raw)
                if warn or value is None:
                    if raw.strip():
                        sample.extra[column] = raw.strip()
                else:
                    sample.extra[column] = value
                continue
            value, warn = _parse_number(raw)
            if warn:
                warnings.append(
                    f"{path}:{lineno}: {column}={raw.strip()!r} is not numeric; treated as absent"
                )
                continue
            if value is None:
                continue
            if target == "diagnosis_code":
                if isinstance(value, float):
                    if value.is_integer():
                        value = int(value)
                    else:
                        warnings.append(
                            f"{path}:{lineno}: {column}={raw.strip()!r} is not an integer code; treated as absent"
                        )
                        continue
                sample.diagnosis_code = value
            else:
                setattr(sample, target, value)
        samples.append(sample)
    return MetadataTable(samples=samples, warnings=warnings)
