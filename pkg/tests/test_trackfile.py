import numpy as np
import pytest

from celllineage.imagecore import LabelMask
from celllineage.linker import LineageGraph, Track
from celllineage.trackfile import (
    TrackFileError,
    TrackFileRecord,
    format_track_file,
    lineage_from_records,
    parse_track_file,
    read_track_file,
    records_from_lineage,
    write_track_file,
)


def sample_graph():
    g = LineageGraph()
    g.tracks = {
        1: Track(1, 1, 4, 0),
        2: Track(2, 5, 9, 1),
        3: Track(3, 5, 7, 1),
    }
    return g


def test_parse_basic():
    recs = parse_track_file("1 1 4 0\n2 5 9 1\n3 5 7 1\n")
    assert recs == [
        TrackFileRecord(1, 1, 4, 0),
        TrackFileRecord(2, 5, 9, 1),
        TrackFileRecord(3, 5, 7, 1),
    ]


def test_parse_skips_blank_lines():
    assert len(parse_track_file("1 1 2 0\n\n  \n2 3 4 1\n")) == 2


def test_parse_rejections():
    with pytest.raises(TrackFileError):
        parse_track_file("1 1 4\n")  # short line
    with pytest.raises(TrackFileError):
        parse_track_file("1 one 4 0\n")  # non-integer
    with pytest.raises(TrackFileError):
        parse_track_file("0 1 4 0\n")  # non-positive id
    with pytest.raises(TrackFileError):
        parse_track_file("1 1 4 0\n1 5 6 0\n")  # duplicate id
    with pytest.raises(TrackFileError):
        parse_track_file("1 5 4 0\n")  # B > E
    with pytest.raises(TrackFileError):
        parse_track_file("1 1 4 -1\n")  # negative parent
    with pytest.raises(TrackFileError):
        parse_track_file("1 1 4 9\n")  # dangling parent
    with pytest.raises(TrackFileError):
        parse_track_file("1 1 4 0\n2 7 9 1\n")  # parent gap


def test_format_lf_endings():
    text = format_track_file([TrackFileRecord(1, 1, 4, 0), TrackFileRecord(2, 5, 6, 1)])
    assert text == "1 1 4 0\n2 5 6 1\n"
    assert "\r" not in text


def test_round_trip_text():
    text = "1 1 4 0\n2 5 9 1\n3 5 7 1\n"
    assert format_track_file(parse_track_file(text)) == text


def test_records_from_lineage_sorted():
    g = sample_graph()
    recs = records_from_lineage(g)
    assert [r.label for r in recs] == [1, 2, 3]
    assert recs[1] == TrackFileRecord(2, 5, 9, 1)


def test_lineage_from_records_with_masks():
    recs = [TrackFileRecord(1, 1, 2, 0)]
    m = np.zeros((4, 4), dtype=np.int32)
    m[1:3, 1:3] = 1
    masks = [LabelMask(m), LabelMask(m.copy())]
    g = lineage_from_records(recs, masks)
    assert g.assignments == {1: {1: 1}, 2: {1: 1}}
    g.validate()


def test_lineage_from_records_validates():
    # mask label outside the declared track span
    recs = [TrackFileRecord(1, 1, 1, 0)]
    m = np.zeros((4, 4), dtype=np.int32)
    m[1:3, 1:3] = 1
    with pytest.raises(ValueError):
        lineage_from_records(recs, [LabelMask(np.zeros((4, 4), dtype=np.int32)), LabelMask(m)])


def test_file_round_trip(tmp_path):
    g = sample_graph()
    path = tmp_path / "res_track.txt"
    write_track_file(str(path), g)
    raw = path.read_bytes()
    assert raw == b"1 1 4 0\n2 5 9 1\n3 5 7 1\n"
    back = read_track_file(str(path))
    assert {tid: (tr.birth, tr.end, tr.parent) for tid, tr in back.tracks.items()} == {
        1: (1, 4, 0),
        2: (5, 9, 1),
        3: (5, 7, 1),
    }
    # byte-identical second write
    path2 = tmp_path / "again.txt"
    write_track_file(str(path2), back)
    assert path2.read_bytes() == raw


def test_random_round_trips():
    rng = np.random.default_rng(0)
    for _ in range(30):
        n = int(rng.integers(1, 10))
        recs = []
        for label in range(1, n + 1):
            birth = int(rng.integers(1, 10))
            end = birth + int(rng.integers(0, 10))
            parent = 0
            candidates = [r for r in recs if r.end == birth - 1]
            if candidates and rng.random() < 0.5:
                parent = int(rng.choice([r.label for r in candidates]))
            recs.append(TrackFileRecord(label, birth, end, parent))
        text = format_track_file(recs)
        assert parse_track_file(text) == recs
        assert format_track_file(parse_track_file(text)) == text
