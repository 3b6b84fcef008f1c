"""Record ingestion: headers, packed signal data, rhythm annotations, chunks.

Header files are ASCII: a record line "record_id n_leads fs n_samples"
followed by one line per lead, "file format gain [adc_res adc_zero
init_value checksum block_size] lead_name". Signal payloads are either
packed 12-bit two-channel ("212") or little-endian 16-bit. Annotations are
a text export, one "elapsed_time sample_index rhythm_token" line each.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import (ChecksumMismatch, MalformedHeader, TruncatedData,
                     UnknownRhythmToken, UnsupportedFormat)

log = logging.getLogger(__name__)

SUPPORTED_FORMATS = (212, 16)
DEFAULT_GAIN = 200.0
LIMB_LEAD_NAMES = {"I", "II", "III", "MLI", "MLII", "MLIII"}


class RhythmClass(IntEnum):
    """The five rhythm categories, with stable class-head ids."""

    SINUS = 0
    ASYS = 1
    TACHY = 2
    VFVFL = 3
    VT = 4

    @property
    def dirname(self) -> str:
        return self.name.lower()


RHYTHM_TOKENS = {
    "(N": RhythmClass.SINUS,
    "(ASYS": RhythmClass.ASYS,
    "(SVTA": RhythmClass.TACHY,
    "(VF": RhythmClass.VFVFL,
    "(VFL": RhythmClass.VFVFL,
    "(VT": RhythmClass.VT,
}


@dataclass(frozen=True)
class LeadMeta:
    file: str
    fmt: int
    gain: float
    name: str
    checksum: int | None = None


@dataclass(frozen=True)
class RecordMeta:
    record_id: str
    n_leads: int
    sample_rate_hz: float
    n_samples: int
    leads: tuple[LeadMeta, ...]


@dataclass
class EcgRecord:
    record_id: str
    sample_rate_hz: float
    gain_adu_per_mv: float
    leads: list[tuple[str, np.ndarray]]

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise MalformedHeader(f"sample rate must be positive, got {self.sample_rate_hz}")
        lengths = {len(s) for _, s in self.leads}
        if len(lengths) > 1:
            raise MalformedHeader(f"leads differ in length: {sorted(lengths)}")
        for name, s in self.leads:
            if s.size and not np.isfinite(s).all():
                raise MalformedHeader(f"non-finite samples in lead {name}")

    @property
    def n_samples(self) -> int:
        return len(self.leads[0][1]) if self.leads else 0


@dataclass(frozen=True)
class RhythmAnnotation:
    sample_index: int
    label: RhythmClass


@dataclass
class Chunk:
    record_id: str
    start_index: int
    samples: np.ndarray
    sample_rate_hz: float
    label: RhythmClass

    @property
    def chunk_id(self) -> str:
        return f"{self.record_id}:{self.start_index}"


def parse_header(text: str) -> RecordMeta:
    """Parse a record header into metadata; raises on structural problems."""
    lines = [ln.strip() for ln in text.splitlines()
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise MalformedHeader("empty header")
    fields = lines[0].split()
    if len(fields) < 4:
        raise MalformedHeader(f"record line needs 4 fields, got {len(fields)}: {lines[0]!r}")
    record_id = fields[0]
    try:
        n_leads = int(fields[1])
        fs = float(fields[2])
        n_samples = int(fields[3])
    except ValueError as exc:
        raise MalformedHeader(f"non-numeric field in record line {lines[0]!r}") from exc
    if n_leads <= 0:
        raise MalformedHeader(f"record claims {n_leads} leads")
    if fs <= 0:
        raise MalformedHeader(f"sample rate must be positive, got {fs}")
    if n_samples < 0:
        raise MalformedHeader(f"negative sample count {n_samples}")
    if len(lines) - 1 < n_leads:
        raise MalformedHeader(f"expected {n_leads} lead lines, found {len(lines) - 1}")

    leads = []
    for ln in lines[1:1 + n_leads]:
        toks = ln.split()
        if len(toks) < 4:
            raise MalformedHeader(f"lead line needs at least 4 fields: {ln!r}")
        try:
            fmt = int(toks[1].split("x")[0].split(":")[0])
        except ValueError as exc:
            raise MalformedHeader(f"non-numeric format in lead line {ln!r}") from exc
        gain_tok = toks[2].split("(")[0].split("/")[0]
        try:
            gain = float(gain_tok)
        except ValueError as exc:
            raise MalformedHeader(f"non-numeric gain in lead line {ln!r}") from exc
        if gain == 0:
            gain = DEFAULT_GAIN
        checksum = None
        if len(toks) >= 8:
            try:
                checksum = int(toks[6])
            except ValueError:
                checksum = None
        name = toks[-1]
        if fmt not in SUPPORTED_FORMATS:
            raise UnsupportedFormat(f"lead {name}: storage format {fmt} not supported "
                                    f"(expected one of {SUPPORTED_FORMATS})")
        leads.append(LeadMeta(file=toks[0], fmt=fmt, gain=gain, name=name,
                              checksum=checksum))
    return RecordMeta(record_id=record_id, n_leads=n_leads, sample_rate_hz=fs,
                      n_samples=n_samples, leads=tuple(leads))


def _check_lead_checksum(digital: np.ndarray, lead: LeadMeta) -> None:
    if lead.checksum is None:
        return
    total = int(digital.sum()) & 0xFFFF
    if total >= 0x8000:
        total -= 0x10000
    if total != lead.checksum:
        raise ChecksumMismatch(
            f"lead {lead.name}: checksum {total}, header says {lead.checksum}")


def read_signal_212(data: bytes, meta: RecordMeta) -> EcgRecord:
    """Unpack two-channel 12-bit data: one byte triplet holds one sample pair."""
    if meta.n_leads != 2:
        raise UnsupportedFormat(f"format 212 stores 2 leads, header says {meta.n_leads}")
    n = meta.n_samples
    needed = n * 3
    if len(data) < needed:
        raise TruncatedData(f"need {needed} bytes for {n} sample pairs, got {len(data)}")
    raw = np.frombuffer(data[:needed], dtype=np.uint8).astype(np.int64)
    first = raw[0::3] + 256 * (raw[1::3] & 0x0F)
    second = raw[2::3] + 256 * (raw[1::3] >> 4)
    first[first > 2047] -= 4096
    second[second > 2047] -= 4096
    leads = []
    for digital, lead in zip((first, second), meta.leads):
        _check_lead_checksum(digital, lead)
        leads.append((lead.name, digital.astype(np.float64) / lead.gain))
    return EcgRecord(record_id=meta.record_id, sample_rate_hz=meta.sample_rate_hz,
                     gain_adu_per_mv=meta.leads[0].gain, leads=leads)


def read_signal_16(data: bytes, meta: RecordMeta) -> EcgRecord:
    """Unpack interleaved little-endian 16-bit samples."""
    n = meta.n_samples
    needed = n * meta.n_leads * 2
    if len(data) < needed:
        raise TruncatedData(f"need {needed} bytes for {n} samples x {meta.n_leads} "
                            f"leads, got {len(data)}")
    raw = np.frombuffer(data[:needed], dtype="<i2").astype(np.int64)
    leads = []
    for i, lead in enumerate(meta.leads):
        digital = raw[i::meta.n_leads]
        _check_lead_checksum(digital, lead)
        leads.append((lead.name, digital.astype(np.float64) / lead.gain))
    return EcgRecord(record_id=meta.record_id, sample_rate_hz=meta.sample_rate_hz,
                     gain_adu_per_mv=meta.leads[0].gain, leads=leads)


def read_signal(data: bytes, meta: RecordMeta) -> EcgRecord:
    fmt = meta.leads[0].fmt
    if fmt == 212:
        return read_signal_212(data, meta)
    if fmt == 16:
        return read_signal_16(data, meta)
    raise UnsupportedFormat(f"storage format {fmt} not supported")


def read_annotations(text: str) -> list[RhythmAnnotation]:
    """Parse rhythm-change lines; unknown tokens raise, unsorted input is repaired."""
    out = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        if len(toks) < 3:
            raise MalformedHeader(f"annotation line {line_no} needs 3 fields: {line!r}")
        try:
            sample = int(toks[1])
        except ValueError as exc:
            raise MalformedHeader(
                f"annotation line {line_no}: bad sample index {toks[1]!r}") from exc
        if sample < 0:
            raise MalformedHeader(f"annotation line {line_no}: negative sample index")
        token = next((t for t in toks[2:] if t.startswith("(")), toks[2])
        label = RHYTHM_TOKENS.get(token)
        if label is None:
            raise UnknownRhythmToken(token, line_no)
        out.append(RhythmAnnotation(sample_index=sample, label=label))
    if any(out[i].sample_index > out[i + 1].sample_index for i in range(len(out) - 1)):
        warnings.warn("annotations out of order; sorting by sample index",
                      stacklevel=2)
        out.sort(key=lambda a: a.sample_index)
    return out


def select_lead(record: EcgRecord, lead_policy: str = "limb") -> np.ndarray:
    """Pick the working lead: first limb-named lead, a named lead, or an index."""
    if lead_policy == "limb":
        for name, samples in record.leads:
            if name.upper() in LIMB_LEAD_NAMES:
                return samples
        return record.leads[0][1]
    for name, samples in record.leads:
        if name == lead_policy:
            return samples
    try:
        return record.leads[int(lead_policy)][1]
    except (ValueError, IndexError):
        raise MalformedHeader(f"no lead matches policy {lead_policy!r}")


def extract_chunks(record: EcgRecord, annotations: list[RhythmAnnotation],
                   span_s: float = 13.0, lead_policy: str = "limb") -> list[Chunk]:
    """Cut one labeled window per annotation whose rhythm lasts the full span.

    Windows start at the annotation and run span_s forward; any window that
    would cross the next annotation or the record end is discarded.
    """
    if not record.leads:
        raise MalformedHeader("record has no leads")
    n_window = round(span_s * record.sample_rate_hz)
    if n_window < 2:
        raise MalformedHeader(f"window of {n_window} samples is too short")
    samples = select_lead(record, lead_policy)
    n = len(samples)
    chunks = []
    discarded = 0
    for i, ann in enumerate(annotations):
        start = ann.sample_index
        end = start + n_window
        boundary = annotations[i + 1].sample_index if i + 1 < len(annotations) else n
        if start >= n or end > min(boundary, n):
            discarded += 1
            continue
        chunks.append(Chunk(record_id=record.record_id, start_index=start,
                            samples=samples[start:end].copy(),
                            sample_rate_hz=record.sample_rate_hz, label=ann.label))
    if discarded:
        log.info("record %s: %d of %d annotations yielded no chunk",
                 record.record_id, discarded, len(annotations))
    return chunks


def tile_chunks(record: EcgRecord, span_s: float = 13.0,
                label: RhythmClass = RhythmClass.SINUS,
                lead_policy: str = "limb") -> list[Chunk]:
    """Cut non-overlapping windows over a whole record under one label.

    Used for rhythm databases without change annotations (normal sinus).
    """
    n_window = round(span_s * record.sample_rate_hz)
    samples = select_lead(record, lead_policy)
    chunks = []
    for start in range(0, len(samples) - n_window + 1, n_window):
        chunks.append(Chunk(record_id=record.record_id, start_index=start,
                            samples=samples[start:start + n_window].copy(),
                            sample_rate_hz=record.sample_rate_hz, label=label))
    return chunks


# --- chunk store ---

def save_chunk(chunk: Chunk, root: Path) -> Path:
    """Write one chunk: f32 payload plus JSON sidecar, under its class dir."""
    root = Path(root)
    class_dir = root / chunk.label.dirname
    class_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{chunk.record_id}_{chunk.start_index}"
    payload = class_dir / f"{stem}.f32"
    payload.write_bytes(chunk.samples.astype("<f4").tobytes())
    sidecar = {
        "record_id": chunk.record_id,
        "start_index": chunk.start_index,
        "fs": chunk.sample_rate_hz,
        "label": chunk.label.name,
    }
    (class_dir / f"{stem}.json").write_text(json.dumps(sidecar, indent=1))
    return payload


def save_chunks(chunks: list[Chunk], root: Path) -> int:
    for c in chunks:
        save_chunk(c, root)
    return len(chunks)


def load_chunks(root: Path) -> list[Chunk]:
    """Read every chunk under a store directory, sorted by (class, id)."""
    root = Path(root)
    chunks = []
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for sidecar_path in sorted(class_dir.glob("*.json")):
            sidecar = json.loads(sidecar_path.read_text())
            payload = sidecar_path.with_suffix(".f32")
            samples = np.frombuffer(payload.read_bytes(), dtype="<f4").astype(np.float64)
            chunks.append(Chunk(
                record_id=sidecar["record_id"],
                start_index=int(sidecar["start_index"]),
                samples=samples,
                sample_rate_hz=float(sidecar["fs"]),
                label=RhythmClass[sidecar["label"]],
            ))
    return chunks


def load_record(header_path: Path) -> EcgRecord:
    """Read a record given its header path; the signal file sits beside it."""
    header_path = Path(header_path)
    meta = parse_header(header_path.read_text())
    signal_path = header_path.parent / meta.leads[0].file
    return read_signal(signal_path.read_bytes(), meta)
