import copy
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devprints import eventlog as ev

LISTING = {
    "session": "c51973e3-562a-4b65-b6df-49f4c37792e1",
    "timestamp_begin": "2020-09-18T09:00:06.054Z",
    "username": "87788",
    "graduation": "IGE",
    "projectname": "PythaconResolution",
    "filename": "P4.py",
    "extension": "py",
    "categoryName": "NavBarToolbar",
    "commandName": "Run",
    "platform": "JetBrains s.r.o. / PyCharmCore",
    "platform_branch": "PyCharm",
    "platform_version": "2020.2.1",
    "java": "11.0.8+10-b944.31",
    "os": "Mac OS X 10.15.6",
    "os_arch": "x86_64",
    "country": "Portugal",
    "city": "Lisbon",
}


def record(**overrides):
    r = dict(LISTING, **overrides)
    r["hash"] = ev.record_digest({k: v for k, v in r.items() if k != "hash"})
    return r


def stream(records):
    return "\n".join(json.dumps(r) for r in records)


def stamp(ms):
    return f"2020-09-18T09:00:{ms // 1000:02d}.{ms % 1000:03d}Z"


class TestParse:
    def test_listing_record(self):
        log = ev.parse_events(json.dumps([record()]))
        assert len(log.sessions) == 1 and len(log) == 1
        e = log.sessions[0].events[0]
        assert e.get("os") == "Mac OS X 10.15.6"
        assert e.command == "Run" and e.category == "NavBarToolbar"
        assert e.case_id == "87788"
        assert ev.format_timestamp(e.timestamp) == "2020-09-18T09:00:06.054Z"

    def test_empty_array(self):
        assert ev.parse_events("[]").sessions == ()

    def test_three_records_ordered_by_time(self):
        recs = [record(timestamp_begin=stamp(ms)) for ms in (3000, 1000, 2000)]
        log = ev.parse_events(stream(recs))
        (session,) = log.sessions
        times = [e.timestamp for e in session.events]
        assert times == sorted(times) and len(times) == 3

    def test_malformed_json_reports_byte_offset(self):
        text = json.dumps(record()) + "\n" + '{"session": oops}'
        with pytest.raises(ev.ParseError) as info:
            ev.parse_events(text.encode())
        assert info.value.offset >= len(json.dumps(record())) + 1

    def test_missing_field_is_collected(self):
        bad = record()
        del bad["commandName"]
        log = ev.parse_events(stream([record(), bad]))
        assert len(log) == 1
        assert log.errors[0].index == 1 and "commandName" in log.errors[0].message

    def test_all_bad_is_fatal(self):
        with pytest.raises(ev.LogValidationError):
            ev.parse_events(stream([{"session": "x"}]))

    def test_meta_line_is_skipped(self):
        text = json.dumps({ev.META_KEY: {"seed": 1}}) + "\n" + json.dumps(record())
        log = ev.parse_events(text)
        assert len(log) == 1 and log.errors == ()

    def test_timestamp_forms(self):
        a = ev.parse_timestamp("2020-09-18T09:00:06.054Z")
        assert ev.parse_timestamp("2020-09-18T09:00:06.054123+00:00") == a
        assert ev.parse_timestamp("2020-09-18 10:00:06.054+01:00") == a


class TestHashes:
    def test_ok_mismatch_missing(self):
        tampered = record(timestamp_begin=stamp(7000))
        tampered["filename"] = "P5.py"
        missing = record(timestamp_begin=stamp(8000))
        del missing["hash"]
        log = ev.parse_events(stream([record(), tampered, missing]))
        report = ev.verify_hashes(log)
        assert dict(report.verdicts) == {0: "ok", 1: "hash-mismatch", 2: "hash-missing"}
        assert report.counts == {"ok": 1, "hash-mismatch": 1, "hash-missing": 1}
        assert report.tampered == 1

    def test_digest_follows_documented_serialization(self):
        import hashlib

        fields = sorted(LISTING.items())
        text = "|".join(f"{k}={v}" for k, v in fields)
        assert ev.record_digest(LISTING) == hashlib.md5(text.encode()).hexdigest()
        assert ev.record_digest(LISTING, b"s3cret") == hashlib.md5(b"s3cret" + text.encode()).hexdigest()

    def test_secret_matters(self):
        r = dict(LISTING)
        r["hash"] = ev.record_digest(LISTING, b"k")
        log = ev.parse_events(json.dumps([r]))
        assert ev.verify_hashes(log, b"k").counts["ok"] == 1
        assert ev.verify_hashes(log).tampered == 1

    def test_pure(self):
        log = ev.parse_events(stream([record()]))
        before = copy.deepcopy(log)
        ev.verify_hashes(log)
        assert log == before


class TestDedupe:
    def test_exact_duplicate(self):
        assert len(ev.dedupe(ev.parse_events(stream([record(), record()])))) == 1

    def test_first_kept(self):
        log = ev.parse_events(stream([record(commandName="Save"), record(commandName="Run")]))
        (e,) = ev.dedupe(log).events()
        assert e.command == "Save"

    def test_one_millisecond_apart(self):
        log = ev.parse_events(stream([record(timestamp_begin=stamp(1000)), record(timestamp_begin=stamp(1001))]))
        assert len(ev.dedupe(log)) == 2

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(["u1", "u2"]), st.integers(0, 5)), min_size=1, max_size=20))
    def test_idempotent_and_matches_scan(self, keys):
        recs = [record(username=u, timestamp_begin=stamp(t)) for u, t in keys]
        once = ev.dedupe(ev.parse_events(stream(recs)))
        assert ev.dedupe(once) == once
        expected, seen = [], set()
        for i, k in enumerate(keys):
            if k not in seen:
                seen.add(k)
                expected.append(i)
        assert [e.seq for e in once.events()] == expected


class TestRecode:
    @pytest.mark.parametrize("command,category,activity", [
        ("Run", "NavBarToolbar", "Executing"),
        ("Accepted_Answer", "Mooshak", "Accepted_Answer"),
        ("Wrong_Answer", "Mooshak", "Wrong_Answer"),
        ("EditorBackSpace", "EditorActions", "Editing"),
        ("GotoDeclaration", "Navigation", "Navigating"),
        ("StepOver", "Debugger", "Debugging"),
        ("RenameElement", "RefactoringMenu", "Refactoring"),
        ("Whatever", "Unknown", "Spurious"),
    ])
    def test_default_map(self, command, category, activity):
        log = ev.parse_events(stream([record(commandName=command, categoryName=category)]))
        (e,) = ev.recode_activities(log).events()
        assert e.activity_name == activity
        assert e.command == command

    def test_first_rule_wins_and_csv_roundtrip(self, tmp_path):
        amap = ev.ActivityMap((
            ev.ActivityRule("commandName", "^Run$", "Debugging"),
            ev.ActivityRule("commandName", "Run", "Executing"),
        ))
        path = tmp_path / "map.csv"
        path.write_text(amap.to_csv())
        loaded = ev.ActivityMap.from_csv(path)
        assert loaded == amap
        log = ev.parse_events(stream([record()]))
        assert ev.recode_activities(log, loaded).events()[0].activity_name == "Debugging"

    def test_rejects_unknown_label(self):
        with pytest.raises(ValueError):
            ev.ActivityMap((ev.ActivityRule("commandName", "x", "Coding"),))

    def test_preserves_count_and_order(self):
        recs = [record(timestamp_begin=stamp(i), commandName=c) for i, c in enumerate(["Run", "Save", "Back"])]
        log = ev.parse_events(stream(recs))
        recoded = ev.recode_activities(log)
        assert [e.seq for e in recoded.events()] == [e.seq for e in log.events()]


class TestSessions:
    def test_partition_by_username(self):
        recs = [record(username=u, timestamp_begin=stamp(i)) for i, u in enumerate("aabba")]
        log = ev.parse_events(stream(recs))
        assert sorted(s.case_id for s in ev.sessionize(log, "username")) == ["a", "b"]

    def test_single_event(self):
        (s,) = ev.sessionize(ev.parse_events(stream([record()])), "session")
        assert len(s) == 1

    def test_missing_key_names_event(self):
        log = ev.parse_events(stream([record()]))
        with pytest.raises(ev.LogValidationError, match="#0"):
            ev.sessionize(log, "team")

    @settings(max_examples=30, deadline=None)
    @given(st.randoms())
    def test_shuffle_invariant(self, rnd):
        recs = [record(username=rnd.choice("xy"), timestamp_begin=stamp(i * 7)) for i in range(12)]
        shuffled = list(recs)
        rnd.shuffle(shuffled)
        a = [(s.case_id, [e.timestamp for e in s.events]) for s in ev.sessionize(ev.parse_events(stream(recs)))]
        b = [(s.case_id, [e.timestamp for e in s.events]) for s in ev.sessionize(ev.parse_events(stream(shuffled)))]
        assert a == b

    def test_equal_timestamps_keep_input_order(self):
        recs = [record(commandName=c) for c in ("Run", "Save")]
        (s,) = ev.sessionize(ev.parse_events(stream(recs)))
        assert [e.command for e in s.events] == ["Run", "Save"]


class TestSentences:
    def test_levels(self):
        recs = [record(commandName="Run", timestamp_begin=stamp(1)),
                record(commandName="SaveAll", categoryName="EditorActions", timestamp_begin=stamp(2))]
        sessions = ev.sessionize(ev.recode_activities(ev.parse_events(stream(recs))))
        assert ev.to_sentences(sessions, "command").sentences == (("Run", "SaveAll"),)
        assert ev.to_sentences(sessions, "activity").sentences == (("Executing", "Editing"),)
        assert ev.to_sentences(sessions, "category").vocabulary.tokens == ("EditorActions", "NavBarToolbar")

    def test_empty(self):
        corpus = ev.to_sentences([], "command")
        assert corpus.sentences == () and len(corpus.vocabulary) == 0

    def test_token_count(self):
        r = random.Random(0)
        recs = [record(username=r.choice("abc"), timestamp_begin=stamp(i)) for i in range(30)]
        sessions = ev.sessionize(ev.parse_events(stream(recs)))
        assert ev.to_sentences(sessions).n_tokens == sum(len(s) for s in sessions) == 30

    def test_unknown_level(self):
        sessions = ev.sessionize(ev.parse_events(stream([record()])))
        with pytest.raises(ValueError):
            ev.to_sentences(sessions, "file")


class TestCanonical:
    def test_jsonl_roundtrip(self):
        recs = [record(username=u, timestamp_begin=stamp(i)) for i, u in enumerate("abab")]
        log = ev.recode_activities(ev.parse_events(stream(recs)))
        back = ev.loads_jsonl(ev.dumps_jsonl(log), case_key="username")
        def rows(lg):
            return [(e.case_id, e.activity_name, e.timestamp, e.attributes, e.hash)
                    for s in lg.sessions for e in s.events]

        assert rows(back) == rows(log)

    def test_csv_columns(self):
        log = ev.recode_activities(ev.parse_events(stream([record()])))
        lines = ev.dumps_csv(log).splitlines()
        assert lines[0] == "case_id,timestamp,activity,command,category"
        assert lines[1] == "87788,2020-09-18T09:00:06.054Z,Executing,Run,NavBarToolbar"

    def test_merge_preserves_input_order(self):
        a = ev.parse_events(stream([record(timestamp_begin=stamp(5))]))
        b = ev.parse_events(stream([record(timestamp_begin=stamp(1), username="z")]))
        merged = ev.merge_logs([a, b])
        assert [e.seq for e in merged.events()] == [0, 1]
        assert [s.case_id for s in merged.sessions] == ["87788", "z"]
