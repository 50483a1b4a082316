"""Dataset ingestion, validation and serialization.

Samples and subject metadata are read from JSONL (one object per line) or CSV
(header row) files with fixed field names::

    samples: subject_id, session_id, device_id, environment,
             pgt_x_cm, pgt_y_cm, pgt_z_cm, ddev_x, ddev_y, ddev_z
             [, pdev_u, pdev_v]
    meta:    subject_id, age, gender_appearance, ipd_mm,
             contact_lenses, eye_makeup

The loader never drops a record silently: every record is either loaded or
reported as a violation.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import SchemaError
from .metrics import DEPTH_SANITY_CM, ENVIRONMENTS, GazeSample, SubjectMeta

logger = logging.getLogger(__name__)

SAMPLE_FIELDS = (
    "subject_id",
    "session_id",
    "device_id",
    "environment",
    "pgt_x_cm",
    "pgt_y_cm",
    "pgt_z_cm",
    "ddev_x",
    "ddev_y",
    "ddev_z",
)
PIXEL_FIELDS = ("pdev_u", "pdev_v")
META_FIELDS = ("subject_id", "age", "gender_appearance", "ipd_mm", "contact_lenses", "eye_makeup")

RENORM_BAND = 1e-3
# below this deviation from unit norm a vector is taken as-is (keeps round trips bit-exact)
_UNIT_EXACT = 1e-12


@dataclass(frozen=True)
class Violation:
    source: str  # "samples" or "meta"
    line: int
    field: str | None
    message: str

    def __str__(self) -> str:
        where = f"{self.source} line {self.line}"
        if self.field:
            where += f", field '{self.field}'"
        return f"{where}: {self.message}"


@dataclass(frozen=True)
class Provenance:
    samples_path: str
    meta_path: str
    samples_digest: str
    meta_digest: str

    @property
    def digest(self) -> str:
        return hashlib.sha256((self.samples_digest + self.meta_digest).encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented collection of gaze samples plus subject metadata."""

    subject_id: np.ndarray
    session_id: np.ndarray
    device_id: np.ndarray
    environment: np.ndarray
    p_gt: np.ndarray  # (n, 3) cm
    d_dev: np.ndarray  # (n, 3) unit
    meta: dict[str, SubjectMeta]
    p_dev: np.ndarray | None = None  # (n, 2) px
    provenance: Provenance | None = None
    violations: tuple[Violation, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.p_gt)

    @property
    def d_gt(self) -> np.ndarray:
        return self.p_gt / np.linalg.norm(self.p_gt, axis=1, keepdims=True)

    @property
    def depth_cm(self) -> np.ndarray:
        return np.linalg.norm(self.p_gt, axis=1)

    def samples(self) -> Iterator[GazeSample]:
        for i in range(len(self)):
            yield GazeSample(
                str(self.subject_id[i]),
                str(self.session_id[i]),
                str(self.device_id[i]),
                str(self.environment[i]),
                self.p_gt[i],
                self.d_dev[i],
                None if self.p_dev is None else self.p_dev[i],
            )

    def subset(self, mask) -> "Dataset":
        return Dataset(
            self.subject_id[mask],
            self.session_id[mask],
            self.device_id[mask],
            self.environment[mask],
            self.p_gt[mask],
            self.d_dev[mask],
            self.meta,
            None if self.p_dev is None else self.p_dev[mask],
        )

    def content_digest(self) -> str:
        """Digest of the canonical serialization (equals the loaded-file digest after a round trip)."""
        s = hashlib.sha256(samples_bytes(self)).hexdigest()
        m = hashlib.sha256(meta_bytes(self.meta)).hexdigest()
        return hashlib.sha256((s + m).encode()).hexdigest()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        same_pdev = (self.p_dev is None and other.p_dev is None) or (
            self.p_dev is not None and other.p_dev is not None and np.array_equal(self.p_dev, other.p_dev)
        )
        return (
            len(self) == len(other)
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("subject_id", "session_id", "device_id", "environment", "p_gt", "d_dev")
            )
            and same_pdev
            and self.meta == other.meta
        )

    __hash__ = None  # type: ignore[assignment]


def from_samples(samples: list[GazeSample], meta: dict[str, SubjectMeta]) -> Dataset:
    """Build a :class:`Dataset` from record objects."""
    has_pdev = bool(samples) and all(s.p_dev is not None for s in samples)
    return Dataset(
        subject_id=np.array([s.subject_id for s in samples], dtype=object),
        session_id=np.array([s.session_id for s in samples], dtype=object),
        device_id=np.array([s.device_id for s in samples], dtype=object),
        environment=np.array([s.environment for s in samples], dtype=object),
        p_gt=np.array([s.p_gt for s in samples], dtype=float).reshape(-1, 3),
        d_dev=np.array([s.d_dev for s in samples], dtype=float).reshape(-1, 3),
        meta=dict(meta),
        p_dev=np.array([s.p_dev for s in samples], dtype=float) if has_pdev else None,
    )


# -- reading ---------------------------------------------------------------


def _is_jsonl(path: Path, text: str) -> bool:
    if path.suffix.lower() in (".jsonl", ".ndjson", ".json"):
        return True
    if path.suffix.lower() == ".csv":
        return False
    return text.lstrip().startswith("{")


def _records(path: Path, text: str) -> Iterator[tuple[int, dict | None, str | None]]:
    """Yield ``(line_number, record, parse_error)``; blank lines are skipped."""
    if _is_jsonl(path, text):
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, None, f"invalid JSON: {exc.msg}"
                continue
            if not isinstance(rec, dict):
                yield lineno, None, "record is not a JSON object"
                continue
            yield lineno, rec, None
    else:
        reader = csv.DictReader(io.StringIO(text))
        for rec in reader:
            if not any((v or "").strip() for v in rec.values() if isinstance(v, str)):
                continue
            yield reader.line_num, rec, None


class _Reject(Exception):
    def __init__(self, field: str | None, message: str):
        self.field = field
        self.message = message


def _get(rec: dict, key: str):
    if key not in rec or rec[key] is None or rec[key] == "":
        raise _Reject(key, "missing value")
    return rec[key]


def _num(rec: dict, key: str) -> float:
    raw = _get(rec, key)
    if isinstance(raw, bool):
        raise _Reject(key, f"expected a number, got {raw!r}")
    try:
        x = float(raw)
    except (TypeError, ValueError):
        raise _Reject(key, f"expected a number, got {raw!r}") from None
    if not math.isfinite(x):
        raise _Reject(key, f"non-finite value {raw!r}")
    return x


def _flag(rec: dict, key: str) -> bool:
    raw = _get(rec, key)
    if isinstance(raw, bool):
        return raw
    s = str(raw).strip().lower()
    if s in ("true", "1", "yes"):
        return True
    if s in ("false", "0", "no"):
        return False
    raise _Reject(key, f"expected a boolean, got {raw!r}")


def _parse_meta(rec: dict) -> SubjectMeta:
    sid = str(_get(rec, "subject_id"))
    age = _num(rec, "age")
    ipd = _num(rec, "ipd_mm")
    if age < 0:
        raise _Reject("age", f"age {age:g} < 0")
    if not 45.0 <= ipd <= 85.0:
        raise _Reject("ipd_mm", f"ipd {ipd:g} mm outside [45, 85]")
    return SubjectMeta(
        subject_id=sid,
        age=age,
        gender_appearance=str(_get(rec, "gender_appearance")),
        ipd_mm=ipd,
        contact_lenses=_flag(rec, "contact_lenses"),
        eye_makeup=_flag(rec, "eye_makeup"),
    )


def _parse_sample(rec: dict, meta: dict[str, SubjectMeta]):
    sid = str(_get(rec, "subject_id"))
    session = str(_get(rec, "session_id"))
    device = str(_get(rec, "device_id"))
    env = str(_get(rec, "environment"))
    if env not in ENVIRONMENTS:
        raise _Reject("environment", f"expected one of {ENVIRONMENTS}, got {env!r}")
    p = np.array([_num(rec, "pgt_x_cm"), _num(rec, "pgt_y_cm"), _num(rec, "pgt_z_cm")])
    d = np.array([_num(rec, "ddev_x"), _num(rec, "ddev_y"), _num(rec, "ddev_z")])
    depth = float(np.linalg.norm(p))
    if not DEPTH_SANITY_CM[0] <= depth <= DEPTH_SANITY_CM[1]:
        raise _Reject("pgt_x_cm", f"gaze-point distance {depth:.4g} cm outside {DEPTH_SANITY_CM}")
    n = float(np.linalg.norm(d))
    if abs(n - 1.0) > RENORM_BAND:
        raise _Reject("ddev_x", f"d_dev norm {n:.6g} is not within {RENORM_BAND:g} of 1")
    if abs(n - 1.0) > _UNIT_EXACT:
        d = d / n
    if sid not in meta:
        raise _Reject("subject_id", f"subject {sid!r} has no metadata")
    pdev = None
    if rec.get("pdev_u") not in (None, "") or rec.get("pdev_v") not in (None, ""):
        pdev = np.array([_num(rec, "pdev_u"), _num(rec, "pdev_v")])
    return sid, session, device, env, p, d, pdev


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _read(path: Path) -> tuple[str, bytes]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IOError(f"cannot read {path}: {exc}") from exc
    return data.decode("utf-8"), data


def load_meta(meta_path, strictness: str = "strict") -> tuple[dict[str, SubjectMeta], list[Violation], bytes]:
    text, raw = _read(Path(meta_path))
    meta: dict[str, SubjectMeta] = {}
    violations: list[Violation] = []
    for lineno, rec, err in _records(Path(meta_path), text):
        try:
            if err is not None:
                raise _Reject(None, err)
            m = _parse_meta(rec)
            if m.subject_id in meta:
                raise _Reject("subject_id", f"duplicate subject {m.subject_id!r}")
            meta[m.subject_id] = m
        except _Reject as rej:
            if strictness == "strict":
                raise SchemaError(f"meta: {rej.message}", line=lineno, field=rej.field) from None
            violations.append(Violation("meta", lineno, rej.field, rej.message))
    return meta, violations, raw


def load_dataset(samples_path, meta_path, strictness: str = "strict") -> Dataset:
    """Parse and validate a samples file plus its subject-metadata file.

    ``strictness="strict"`` raises :class:`SchemaError` on the first bad record;
    ``"report"`` collects every violation in ``Dataset.violations`` and loads the
    remaining records.
    """
    if strictness not in ("strict", "report"):
        raise ValueError("strictness must be 'strict' or 'report'")
    meta, violations, meta_raw = load_meta(meta_path, strictness)
    text, raw = _read(Path(samples_path))

    cols: dict[str, list] = {k: [] for k in ("sid", "session", "device", "env", "p", "d", "pdev")}
    for lineno, rec, err in _records(Path(samples_path), text):
        try:
            if err is not None:
                raise _Reject(None, err)
            row = _parse_sample(rec, meta)
        except _Reject as rej:
            if strictness == "strict":
                raise SchemaError(rej.message, line=lineno, field=rej.field) from None
            violations.append(Violation("samples", lineno, rej.field, rej.message))
            continue
        for key, value in zip(cols, row):
            cols[key].append(value)

    if violations:
        logger.warning("%d schema violations in %s / %s", len(violations), samples_path, meta_path)
    pdev = None
    if cols["pdev"] and all(v is not None for v in cols["pdev"]):
        pdev = np.array(cols["pdev"], dtype=float)
    return Dataset(
        subject_id=np.array(cols["sid"], dtype=object),
        session_id=np.array(cols["session"], dtype=object),
        device_id=np.array(cols["device"], dtype=object),
        environment=np.array(cols["env"], dtype=object),
        p_gt=np.array(cols["p"], dtype=float).reshape(-1, 3),
        d_dev=np.array(cols["d"], dtype=float).reshape(-1, 3),
        meta=meta,
        p_dev=pdev,
        provenance=Provenance(str(samples_path), str(meta_path), _digest(raw), _digest(meta_raw)),
        violations=tuple(violations),
    )


# -- writing ---------------------------------------------------------------


def samples_bytes(ds: Dataset) -> bytes:
    lines = []
    for i in range(len(ds)):
        rec = {
            "subject_id": str(ds.subject_id[i]),
            "session_id": str(ds.session_id[i]),
            "device_id": str(ds.device_id[i]),
            "environment": str(ds.environment[i]),
            "pgt_x_cm": float(ds.p_gt[i, 0]),
            "pgt_y_cm": float(ds.p_gt[i, 1]),
            "pgt_z_cm": float(ds.p_gt[i, 2]),
            "ddev_x": float(ds.d_dev[i, 0]),
            "ddev_y": float(ds.d_dev[i, 1]),
            "ddev_z": float(ds.d_dev[i, 2]),
        }
        if ds.p_dev is not None:
            rec["pdev_u"] = float(ds.p_dev[i, 0])
            rec["pdev_v"] = float(ds.p_dev[i, 1])
        lines.append(json.dumps(rec, separators=(",", ":")))
    return ("\n".join(lines) + "\n").encode() if lines else b""


def meta_bytes(meta: dict[str, SubjectMeta]) -> bytes:
    lines = []
    for sid in sorted(meta):
        m = meta[sid]
        rec = {
            "subject_id": m.subject_id,
            "age": m.age,
            "gender_appearance": m.gender_appearance,
            "ipd_mm": m.ipd_mm,
            "contact_lenses": m.contact_lenses,
            "eye_makeup": m.eye_makeup,
        }
        lines.append(json.dumps(rec, separators=(",", ":")))
    return ("\n".join(lines) + "\n").encode() if lines else b""


def write_dataset(ds: Dataset, samples_path, meta_path) -> None:
    """Write ``ds`` as canonical JSONL (samples and metadata)."""
    try:
        Path(samples_path).write_bytes(samples_bytes(ds))
        Path(meta_path).write_bytes(meta_bytes(ds.meta))
    except OSError as exc:
        raise IOError(f"cannot write dataset: {exc}") from exc


def file_digest(path) -> str:
    return _digest(Path(path).read_bytes())
