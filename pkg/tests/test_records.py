import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgrhythm import records as rec
from ecgrhythm.errors import (ChecksumMismatch, MalformedHeader, TruncatedData,
                              UnknownRhythmToken, UnsupportedFormat)
from ecgrhythm.records import RhythmClass

RNG = np.random.default_rng(7)


def pack212(pairs):
    """Independent bit-twiddling packer for two-channel 12-bit data."""
    out = bytearray()
    for a, b in pairs:
        ua, ub = a & 0xFFF, b & 0xFFF
        out.append(ua & 0xFF)
        out.append(((ua >> 8) & 0x0F) | (((ub >> 8) & 0x0F) << 4))
        out.append(ub & 0xFF)
    return bytes(out)


def make_header(record_id="x", n_leads=2, fs=250, n_samples=0, fmt=212,
                gain=200, names=("MLII", "V1"), checksums=None):
    lines = [f"{record_id} {n_leads} {fs} {n_samples}"]
    for i in range(n_leads):
        if checksums is not None:
            lines.append(f"{record_id}.dat {fmt} {gain} 12 0 0 {checksums[i]} 0 {names[i]}")
        else:
            lines.append(f"{record_id}.dat {fmt} {gain} {names[i]}")
    return "\n".join(lines) + "\n"


# --- header parsing ---

def test_parse_header_well_formed():
    meta = rec.parse_header(make_header(fs=250, n_samples=525000))
    assert meta.record_id == "x"
    assert meta.n_leads == 2
    assert meta.sample_rate_hz == 250
    assert meta.n_samples == 525000
    assert len(meta.leads) == 2
    assert meta.leads[0].fmt == 212
    assert meta.leads[0].gain == 200
    assert meta.leads[1].name == "V1"


def test_parse_header_zero_leads():
    with pytest.raises(MalformedHeader):
        rec.parse_header("x 0 250 1000\n")


def test_parse_header_360hz_fixture():
    meta = rec.parse_header(make_header(record_id="r360", fs=360, n_samples=7200))
    assert meta.sample_rate_hz == 360
    assert meta.n_samples == 7200


def test_parse_header_non_numeric():
    with pytest.raises(MalformedHeader):
        rec.parse_header("x two 250 1000\nx.dat 212 200 MLII\n")


def test_parse_header_missing_lead_lines():
    with pytest.raises(MalformedHeader):
        rec.parse_header("x 2 250 1000\nx.dat 212 200 MLII\n")


def test_parse_header_unsupported_format():
    with pytest.raises(UnsupportedFormat):
        rec.parse_header(make_header(fmt=80))


def test_parse_header_gain_zero_defaults():
    meta = rec.parse_header(make_header(gain=0))
    assert meta.leads[0].gain == rec.DEFAULT_GAIN


def test_parse_header_checksum_optional():
    meta = rec.parse_header(make_header())
    assert meta.leads[0].checksum is None
    meta = rec.parse_header(make_header(checksums=(-5, 17)))
    assert meta.leads[0].checksum == -5
    assert meta.leads[1].checksum == 17


# --- 212 signal unpacking ---

def test_read_212_first_pair():
    meta = rec.parse_header(make_header(n_samples=1))
    record = rec.read_signal_212(bytes([0x01, 0x00, 0x02]), meta)
    assert record.leads[0][1][0] == pytest.approx(1 / 200)
    assert record.leads[1][1][0] == pytest.approx(2 / 200)


def test_read_212_most_negative_value():
    meta = rec.parse_header(make_header(n_samples=1))
    data = pack212([(-2048, -2048)])
    record = rec.read_signal_212(data, meta)
    assert record.leads[0][1][0] == pytest.approx(-2048 / 200)
    assert record.leads[1][1][0] == pytest.approx(-2048 / 200)


def test_read_212_empty_record():
    meta = rec.parse_header(make_header(n_samples=0))
    record = rec.read_signal_212(b"", meta)
    assert record.n_samples == 0
    assert len(record.leads) == 2


def test_read_212_truncated():
    meta = rec.parse_header(make_header(n_samples=10))
    with pytest.raises(TruncatedData):
        rec.read_signal_212(bytes(10), meta)


def test_read_212_roundtrip_random_extremes():
    n = 10_000
    a = RNG.integers(-2048, 2048, n)
    b = RNG.integers(-2048, 2048, n)
    a[0], b[0], a[1], b[1] = -2048, 2047, 2047, -2048
    meta = rec.parse_header(make_header(n_samples=n, gain=1))
    record = rec.read_signal_212(pack212(list(zip(a, b))), meta)
    assert np.array_equal(record.leads[0][1].astype(np.int64), a)
    assert np.array_equal(record.leads[1][1].astype(np.int64), b)


@given(st.lists(st.tuples(st.integers(-2048, 2047), st.integers(-2048, 2047)),
                min_size=1, max_size=50))
@settings(max_examples=200, deadline=None)
def test_read_212_roundtrip_property(pairs):
    meta = rec.parse_header(make_header(n_samples=len(pairs), gain=1))
    record = rec.read_signal_212(pack212(pairs), meta)
    got = list(zip(record.leads[0][1].astype(np.int64).tolist(),
                   record.leads[1][1].astype(np.int64).tolist()))
    assert got == [tuple(p) for p in pairs]


def test_read_212_checksum_checked_when_present():
    vals = [(10, -3), (5, 7)]
    sums = (15, 4)
    meta = rec.parse_header(make_header(n_samples=2, gain=1, checksums=sums))
    record = rec.read_signal_212(pack212(vals), meta)
    assert record.n_samples == 2
    meta_bad = rec.parse_header(make_header(n_samples=2, gain=1, checksums=(99, 4)))
    with pytest.raises(ChecksumMismatch):
        rec.read_signal_212(pack212(vals), meta_bad)


def test_read_16_roundtrip():
    vals = np.array([[100, -200], [300, -400], [0, 32767]], dtype=np.int16)
    meta = rec.parse_header(make_header(n_samples=3, fmt=16, gain=1))
    record = rec.read_signal(vals.astype("<i2").tobytes(), meta)
    assert np.array_equal(record.leads[0][1].astype(np.int64), vals[:, 0])
    assert np.array_equal(record.leads[1][1].astype(np.int64), vals[:, 1])


# --- annotations ---

def test_read_annotation_single_line():
    anns = rec.read_annotations("0:01.000 250 (VT\n")
    assert anns == [rec.RhythmAnnotation(250, RhythmClass.VT)]


def test_vf_and_vfl_merge():
    anns = rec.read_annotations("0:00.000 0 (VFL\n0:10.000 2500 (VF\n")
    assert [a.label for a in anns] == [RhythmClass.VFVFL, RhythmClass.VFVFL]


def test_unknown_token_raises_with_token():
    with pytest.raises(UnknownRhythmToken) as exc:
        rec.read_annotations("0:00.000 0 (AFIB\n")
    assert exc.value.token == "(AFIB"


def test_annotations_comments_and_blanks_skipped():
    text = "# comment line\n\n0:00.000 0 (N\n0:30.000 7500 (ASYS\n"
    anns = rec.read_annotations(text)
    assert [a.label for a in anns] == [RhythmClass.SINUS, RhythmClass.ASYS]


def test_annotations_rdann_style_aux_column():
    anns = rec.read_annotations("0:01.000 250 + 0 0 0 (SVTA\n")
    assert anns == [rec.RhythmAnnotation(250, RhythmClass.TACHY)]


def test_unsorted_annotations_repaired_with_warning():
    text = "0:30.000 7500 (VT\n0:00.000 0 (N\n"
    with pytest.warns(UserWarning):
        anns = rec.read_annotations(text)
    assert [a.sample_index for a in anns] == [0, 7500]


# --- chunk extraction ---

def make_record(n=15000, fs=250.0, names=("MLII", "V5")):
    sig = RNG.standard_normal(n)
    return rec.EcgRecord(record_id="demo", sample_rate_hz=fs, gain_adu_per_mv=200,
                         leads=[(names[0], sig), (names[1], sig * 0.5)])


def test_extract_chunks_both_windows_fit():
    # 60 s at 250 Hz with changes at 0 s and 30 s: both 13 s windows fit.
    record = make_record(n=15000, fs=250.0)
    anns = [rec.RhythmAnnotation(0, RhythmClass.SINUS),
            rec.RhythmAnnotation(7500, RhythmClass.VT)]
    chunks = rec.extract_chunks(record, anns)
    assert len(chunks) == 2
    assert [c.label for c in chunks] == [RhythmClass.SINUS, RhythmClass.VT]
    assert all(len(c.samples) == 3250 for c in chunks)
    assert chunks[1].start_index == 7500


def test_extract_chunks_insufficient_tail():
    record = make_record(n=15000, fs=250.0)
    anns = [rec.RhythmAnnotation(14500, RhythmClass.VT)]  # 2 s before the end
    assert rec.extract_chunks(record, anns) == []


def test_extract_chunks_crossing_next_annotation_discarded():
    record = make_record(n=15000, fs=250.0)
    anns = [rec.RhythmAnnotation(0, RhythmClass.SINUS),
            rec.RhythmAnnotation(1000, RhythmClass.VT)]  # 4 s of sinus only
    chunks = rec.extract_chunks(record, anns)
    assert [c.label for c in chunks] == [RhythmClass.VT]


def test_extract_chunks_window_length_is_rounded_span():
    record = make_record(n=4000, fs=250.0)
    anns = [rec.RhythmAnnotation(0, RhythmClass.VT)]
    chunks = rec.extract_chunks(record, anns, span_s=13.0)
    assert len(chunks[0].samples) == 3250


def test_extract_chunks_picks_limb_lead():
    record = make_record()
    record.leads = [("V5", record.leads[0][1] * 2), ("MLII", record.leads[1][1])]
    anns = [rec.RhythmAnnotation(0, RhythmClass.VT)]
    chunks = rec.extract_chunks(record, anns)
    np.testing.assert_array_equal(chunks[0].samples, record.leads[1][1][:3250])


def test_extract_chunks_falls_back_to_lead0():
    record = make_record(names=("ECG1", "ECG2"))
    anns = [rec.RhythmAnnotation(0, RhythmClass.VT)]
    chunks = rec.extract_chunks(record, anns)
    np.testing.assert_array_equal(chunks[0].samples, record.leads[0][1][:3250])


def test_tile_chunks_nonoverlapping():
    record = make_record(n=10000, fs=250.0)
    chunks = rec.tile_chunks(record)
    assert len(chunks) == 3  # floor(10000 / 3250)
    assert all(c.label == RhythmClass.SINUS for c in chunks)
    starts = [c.start_index for c in chunks]
    assert starts == [0, 3250, 6500]


# --- chunk store ---

def test_chunk_store_roundtrip(tmp_path):
    record = make_record(n=15000, fs=250.0)
    anns = [rec.RhythmAnnotation(0, RhythmClass.SINUS),
            rec.RhythmAnnotation(7500, RhythmClass.VT)]
    chunks = rec.extract_chunks(record, anns)
    rec.save_chunks(chunks, tmp_path)
    assert (tmp_path / "sinus").is_dir()
    assert (tmp_path / "vt").is_dir()
    loaded = rec.load_chunks(tmp_path)
    assert len(loaded) == 2
    by_id = {c.chunk_id: c for c in loaded}
    for c in chunks:
        got = by_id[c.chunk_id]
        assert got.label == c.label
        assert got.sample_rate_hz == c.sample_rate_hz
        np.testing.assert_allclose(got.samples, c.samples, atol=1e-6)


def test_load_record_from_files(tmp_path):
    n = 100
    a = RNG.integers(-2048, 2048, n)
    b = RNG.integers(-2048, 2048, n)
    (tmp_path / "r1.hea").write_text(make_header(record_id="r1", n_samples=n, gain=1))
    (tmp_path / "r1.dat").write_bytes(pack212(list(zip(a, b))))
    record = rec.load_record(tmp_path / "r1.hea")
    assert record.record_id == "r1"
    assert np.array_equal(record.leads[0][1].astype(np.int64), a)
