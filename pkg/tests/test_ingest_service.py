"""Tests for event parsing, relationship aggregation and the edge list."""
import io
import json
import random

import pytest

from src.config.settings import IngestConfig, RelationshipCriteria
from src.errors import DataError, MalformedRecordError
from src.models import InteractionEvent, Relationship
from src.services.ingest_service import (
    EventParser,
    build_relationships,
    filter_relationships,
    parse_events,
    read_edge_list,
    write_edge_list,
)
from src.utils.date_utils import parse_timestamp
from tests.conftest import T0, csv_stream, events_between

DAY = 86400


class TestParseEvents:
    def test_golden_log_accounting(self, golden_events_path):
        with open(golden_events_path, newline="") as fh:
            events, stats = parse_events(fh)

        assert stats.total == 20
        assert stats.accepted == 18
        assert stats.anonymous_dropped == 1
        assert stats.malformed_dropped == 1
        assert len(events) == 18
        assert all(e.source_id for e in events)

    def test_anonymous_record_dropped(self):
        stream = csv_stream("source,target,timestamp,anonymous", [
            "a,b,2020-01-01T00:00:00Z,false",
            ",b,2020-01-02T00:00:00Z,true",
        ])
        events, stats = parse_events(stream)
        assert [e.source_id for e in events] == ["a"]
        assert stats.anonymous_dropped == 1

    def test_empty_stream(self):
        events, stats = parse_events(io.StringIO(""))
        assert events == []
        assert stats.total == stats.accepted == stats.anonymous_dropped == stats.malformed_dropped == 0

    def test_missing_timestamp_is_skipped_and_counted(self):
        stream = csv_stream("source,target,timestamp", [
            "a,b,2020-01-01T00:00:00Z",
            "a,c,2020-01-02T00:00:00Z",
            "a,d,2020-01-03T00:00:00Z",
            "a,e,",
        ])
        events, stats = parse_events(stream)
        assert len(events) == 3
        assert stats.malformed_dropped == 1

    def test_strict_policy_raises(self):
        stream = csv_stream("source,target,timestamp", ["a,b,not-a-date"])
        with pytest.raises(MalformedRecordError) as info:
            parse_events(stream, IngestConfig(strict=True))
        assert info.value.record_number == 2

    def test_short_row_is_malformed(self):
        stream = csv_stream("source,target,timestamp", ["a,b"])
        _, stats = parse_events(stream)
        assert stats.malformed_dropped == 1

    def test_unix_timestamps(self):
        stream = csv_stream("source,target,timestamp", [f"a,b,{T0}", "a,b,1.5"])
        events, stats = parse_events(stream, IngestConfig(timestamp_format="unix"))
        assert [e.timestamp for e in events] == [T0]
        assert stats.malformed_dropped == 1

    def test_jsonl_with_inline_labels(self):
        lines = [
            {"source": "a", "target": "b", "timestamp": "2020-01-01T00:00:00Z", "label_update": 1, "label_targeted": "false"},
            {"source": "a", "target": "b", "timestamp": "2020-02-01T00:00:00Z", "text": "hello"},
            "not an object",
        ]
        stream = io.StringIO("\n".join(json.dumps(line) for line in lines) + "\n{broken\n")
        events, stats = parse_events(stream, IngestConfig(format="jsonl"))
        assert len(events) == 2
        assert events[0].label.update_encouragement and not events[0].label.targeted
        assert events[1].label is None and events[1].text == "hello"
        assert stats.malformed_dropped == 2

    def test_event_ids_default_to_record_ordinal(self):
        stream = csv_stream("source,target,timestamp", ["a,b,2020-01-01", "a,c,2020-01-02"])
        events, _ = parse_events(stream)
        assert [e.event_id for e in events] == ["r1", "r2"]

    def test_ordinals_continue_across_streams(self):
        parser = EventParser()
        first = list(parser.parse(csv_stream("source,target,timestamp", ["a,b,2020-01-01"])))
        second = list(parser.parse(csv_stream("source,target,timestamp", ["a,c,2020-01-02"])))
        assert first[0].event_id == "r1" and second[0].event_id == "r2"
        assert parser.stats.total == 2


class TestBuildRelationships:
    def test_five_events_over_three_months(self):
        first = parse_timestamp("2020-01-01T00:00:00Z")
        last = parse_timestamp("2020-04-01T00:00:00Z")
        events = events_between("A", "B", [first, first + 10 * DAY, first + 40 * DAY, first + 70 * DAY, last])
        (rel,) = build_relationships(events)
        assert rel.event_count == 5
        assert rel.duration_months == pytest.approx(91 / 30.44)
        assert rel.contact_frequency == pytest.approx(5 / (91 / 30.44))
        assert rel.contact_frequency == pytest.approx(1.672, abs=1e-3)

    def test_reciprocal_pairs_stay_separate(self):
        events = events_between("A", "B", [T0]) + events_between("B", "A", [T0])
        rels = build_relationships(events)
        assert [r.key for r in rels] == [("A", "B"), ("B", "A")]

    def test_single_event_has_zero_duration(self):
        (rel,) = build_relationships(events_between("A", "B", [T0]))
        assert rel.event_count == 1
        assert rel.duration_months == 0
        assert rel.contact_frequency is None

    def test_duplicate_timestamps_are_distinct_events(self):
        (rel,) = build_relationships(events_between("A", "B", [T0, T0, T0]))
        assert rel.event_count == 3

    def test_order_independent(self):
        rng = random.Random(7)
        events = []
        for i in range(300):
            events.extend(events_between(f"s{rng.randrange(20)}", f"t{rng.randrange(20)}", [T0 + rng.randrange(10**8)], prefix=str(i)))
        expected = build_relationships(events)
        for _ in range(5):
            rng.shuffle(events)
            assert build_relationships(events) == expected

    @pytest.mark.parametrize("shards", [2, 3, 16])
    def test_sharding_matches_sequential(self, golden_events_path, shards):
        with open(golden_events_path, newline="") as fh:
            events, _ = parse_events(fh)
        assert build_relationships(events, shards=shards) == build_relationships(events)

    def test_counts_cover_every_record(self, golden_events_path):
        with open(golden_events_path, newline="") as fh:
            events, stats = parse_events(fh)
        total = sum(r.event_count for r in build_relationships(events))
        assert total + stats.anonymous_dropped + stats.malformed_dropped == stats.total


class TestFilterRelationships:
    def rel(self, count, days):
        return Relationship(source_id="a", target_id="b", event_count=count, first_ts=T0, last_ts=T0 + int(days * DAY))

    def test_single_event_excluded(self):
        assert filter_relationships([self.rel(1, 200)]) == []

    def test_short_span_excluded(self):
        assert filter_relationships([self.rel(2, 10)]) == []

    def test_ten_events_over_152_days(self):
        (kept,) = filter_relationships([self.rel(10, 152)])
        assert kept.contact_frequency == pytest.approx(2.003, abs=1e-3)

    def test_exactly_one_month_is_kept(self):
        rel = Relationship(source_id="a", target_id="b", event_count=2, first_ts=T0, last_ts=T0 + 2630016)
        assert filter_relationships([rel]) == [rel]

    def test_frequency_bounded_by_count(self):
        rels = [self.rel(c, d) for c in (2, 5, 40) for d in (31, 100, 1000)]
        for rel in filter_relationships(rels):
            assert 0 < rel.contact_frequency <= rel.event_count

    def test_zero_duration_threshold_still_needs_a_span(self):
        criteria = RelationshipCriteria(min_events=1, min_duration_months=0.0)
        assert filter_relationships([self.rel(3, 0)], criteria) == []


class TestEdgeList:
    def test_golden_edge_list(self, golden_events_path, fixtures_dir):
        with open(golden_events_path, newline="") as fh:
            events, _ = parse_events(fh)
        out = io.StringIO()
        write_edge_list(filter_relationships(build_relationships(events)), out)
        assert out.getvalue() == (fixtures_dir / "edges.golden.tsv").read_text()

    def test_round_trip_is_exact(self):
        rng = random.Random(3)
        rels = [
            Relationship(source_id=f"s{i}", target_id=f"t{i}", event_count=rng.randint(2, 500),
                         first_ts=T0 + rng.randrange(10**6), last_ts=T0 + 10**7 + rng.randrange(10**8))
            for i in range(200)
        ]
        out = io.StringIO()
        assert write_edge_list(rels, out) == 200
        out.seek(0)
        back = read_edge_list(out)
        assert back == rels
        assert [r.contact_frequency for r in back] == [r.contact_frequency for r in rels]

    @pytest.mark.parametrize("source_id, target_id", [
        ('"Quoth" Raven', "plain"),
        ("a\tb", "c\td"),
        ("line\nbreak", 'tab\tand "quote"'),
        ("trailing space ", "  leading"),
    ])
    def test_awkward_ids_round_trip(self, source_id, target_id):
        rels = [
            Relationship(source_id=source_id, target_id=target_id, event_count=3,
                         first_ts=T0, last_ts=T0 + 10**7),
            Relationship(source_id="x", target_id="y", event_count=2, first_ts=T0, last_ts=T0 + 10**7),
        ]
        out = io.StringIO()
        write_edge_list(rels, out)
        out.seek(0)
        assert read_edge_list(out) == rels

    def test_missing_columns_rejected(self):
        with pytest.raises(DataError):
            read_edge_list(io.StringIO("source\ttarget\n"))

    def test_bad_row_rejected(self):
        text = "source\ttarget\tevent_count\tfirst_ts\tlast_ts\tcontact_frequency\na\tb\tx\t2020-01-01T00:00:00Z\t2020-03-01T00:00:00Z\t1.0\n"
        with pytest.raises(DataError):
            read_edge_list(io.StringIO(text))


def test_event_requires_ids_unless_anonymous():
    with pytest.raises(ValueError):
        InteractionEvent(source_id="", target_id="b", timestamp=T0)
    assert InteractionEvent(source_id="", target_id="b", timestamp=T0, anonymous=True).anonymous
