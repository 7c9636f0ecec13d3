from __future__ import annotations

import json

import pytest

from tuso.errors import CorruptJournal
from tuso.journal import (
    JournalWriter,
    canonical_lines,
    canonical_text,
    journal_fingerprint,
    last_round_boundary,
    read_journal,
)


def _write_lines(path, events):
    with JournalWriter(path) as writer:
        for event in events:
            writer.write(event)
    return path


class TestWriterAndReader:
    def test_round_trip_adds_timestamp(self, tmp_path):
        path = _write_lines(tmp_path / "j.ldjson", [{"ev": "run_start", "seed": 7}])
        events, truncated = read_journal(path)
        assert not truncated
        assert len(events) == 1
        assert events[0]["ev"] == "run_start"
        assert events[0]["seed"] == 7
        assert isinstance(events[0]["at"], float)

    def test_explicit_at_not_overwritten(self, tmp_path):
        path = _write_lines(tmp_path / "j.ldjson", [{"ev": "x", "at": 123.0}])
        events, _ = read_journal(path)
        assert events[0]["at"] == 123.0

    def test_lines_are_key_sorted_json(self, tmp_path):
        path = _write_lines(tmp_path / "j.ldjson", [{"zeta": 1, "alpha": 2, "ev": "x"}])
        line = path.read_text().splitlines()[0]
        keys = list(json.loads(line))
        assert keys == sorted(keys)

    def test_append_mode_keeps_existing(self, tmp_path):
        path = _write_lines(tmp_path / "j.ldjson", [{"ev": "a"}])
        with JournalWriter(path, append=True) as writer:
            writer.write({"ev": "b"})
        events, _ = read_journal(path)
        assert [e["ev"] for e in events] == ["a", "b"]

    def test_write_mode_truncates(self, tmp_path):
        path = _write_lines(tmp_path / "j.ldjson", [{"ev": "a"}])
        _write_lines(path, [{"ev": "b"}])
        events, _ = read_journal(path)
        assert [e["ev"] for e in events] == ["b"]

    def test_creates_parent_dirs(self, tmp_path):
        path = tmp_path / "deep" / "nested" / "j.ldjson"
        _write_lines(path, [{"ev": "a"}])
        assert path.is_file()

    def test_truncated_final_line_dropped_with_warning(self, tmp_path):
        path = _write_lines(tmp_path / "j.ldjson", [{"ev": "a"}, {"ev": "b"}])
        with open(path, "a") as fh:
            fh.write('{"ev": "half')
        with pytest.warns(RuntimeWarning, match="truncated final record"):
            events, truncated = read_journal(path)
        assert truncated
        assert [e["ev"] for e in events] == ["a", "b"]

    def test_malformed_mid_file_raises_with_index(self, tmp_path):
        path = _write_lines(tmp_path / "j.ldjson", [{"ev": "a"}, {"ev": "b"}])
        lines = path.read_text().splitlines()
        lines[0] = "not json at all"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorruptJournal) as exc_info:
            read_journal(path)
        assert exc_info.value.index == 0

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "j.ldjson"
        path.write_text('{"ev": "a"}\n\n\n{"ev": "b"}\n')
        events, truncated = read_journal(path)
        assert [e["ev"] for e in events] == ["a", "b"]
        assert not truncated

    def test_empty_file(self, tmp_path):
        path = tmp_path / "j.ldjson"
        path.write_text("")
        assert read_journal(path) == ([], False)


class TestCanonicalization:
    def test_strips_volatile_keys_recursively(self):
        events = [
            {
                "ev": "execution",
                "at": 1.0,
                "duration": 2.5,
                "latency": 0.1,
                "score": 0.4,
                "nested": {"elapsed": 9.0, "kept": 1, "list": [{"created_at": 3}]},
            }
        ]
        (line,) = canonical_lines(events)
        record = json.loads(line)
        assert record == {"ev": "execution", "score": 0.4, "nested": {"kept": 1, "list": [{}]}}

    def test_drops_resumed_events(self):
        events = [{"ev": "a"}, {"ev": "resumed", "from_round": 2}, {"ev": "b"}]
        lines = canonical_lines(events)
        assert len(lines) == 2
        assert all("resumed" not in line for line in lines)

    def test_started_at_stripped(self):
        (line,) = canonical_lines([{"ev": "run_start", "started_at": 9.0, "seed": 1}])
        assert json.loads(line) == {"ev": "run_start", "seed": 1}

    def test_canonical_text_ignores_timing_differences(self, tmp_path):
        a = _write_lines(tmp_path / "a.ldjson", [{"ev": "x", "score": 1, "duration": 0.5}])
        b = _write_lines(tmp_path / "b.ldjson", [{"ev": "x", "score": 1, "duration": 9.9}])
        assert canonical_text(a) == canonical_text(b)
        assert journal_fingerprint(a) == journal_fingerprint(b)

    def test_fingerprint_sensitive_to_semantics(self, tmp_path):
        a = _write_lines(tmp_path / "a.ldjson", [{"ev": "x", "score": 1}])
        b = _write_lines(tmp_path / "b.ldjson", [{"ev": "x", "score": 2}])
        assert journal_fingerprint(a) != journal_fingerprint(b)


class TestLastRoundBoundary:
    def test_zero_when_no_boundary(self, tmp_path):
        path = _write_lines(
            tmp_path / "j.ldjson", [{"ev": "run_start"}, {"ev": "execution"}]
        )
        assert last_round_boundary(path) == 0

    def test_offset_after_init_done(self, tmp_path):
        path = _write_lines(
            tmp_path / "j.ldjson",
            [{"ev": "run_start"}, {"ev": "init_done"}, {"ev": "round_start"}],
        )
        offset = last_round_boundary(path)
        text = path.read_bytes()[:offset].decode()
        assert text.splitlines()[-1].find("init_done") >= 0
        assert "round_start" not in text

    def test_last_round_end_wins(self, tmp_path):
        events = [
            {"ev": "run_start"},
            {"ev": "init_done"},
            {"ev": "round_end", "round": 1},
            {"ev": "round_end", "round": 2},
            {"ev": "action", "round": 3},
        ]
        path = _write_lines(tmp_path / "j.ldjson", events)
        kept = path.read_bytes()[: last_round_boundary(path)].decode()
        assert '"round": 2' in kept
        assert '"round": 3' not in kept

    def test_run_end_is_a_boundary(self, tmp_path):
        path = _write_lines(
            tmp_path / "j.ldjson",
            [{"ev": "run_start"}, {"ev": "init_done"}, {"ev": "run_end"}],
        )
        assert last_round_boundary(path) == len(path.read_bytes())

    def test_garbage_tail_ignored(self, tmp_path):
        path = _write_lines(tmp_path / "j.ldjson", [{"ev": "init_done"}])
        boundary = last_round_boundary(path)
        with open(path, "a") as fh:
            fh.write('{"ev": "round_end"')  # unfinished write
        assert last_round_boundary(path) == boundary
