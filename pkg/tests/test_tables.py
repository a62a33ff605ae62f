"""Core table behavior: indexes, uniqueness, retention, snapshots."""

import random

import pytest

from fedtrace.errors import DeviceBusyError, DuplicateVisitorError
from fedtrace.tables import (
    ContactEvent,
    ContactsTable,
    LocationFix,
    LocationsTable,
    MasterTable,
    RetentionPolicy,
    SymbolicLocation,
    TokenIssuer,
    VisitRecord,
    VisitTable,
    validate_phone,
)


def loc(col, row, zone="hall"):
    return SymbolicLocation(zone, (col, row), 1.0)


class TestVisitTable:
    def test_insert_then_lookup_by_phone(self):
        table = VisitTable()
        rec = VisitRecord("5551234", "F1", "v1", 1000)
        table.insert(rec)
        assert table.lookup_by_phone("5551234", (0, 2000)) == [rec]
        assert table.lookup_by_visitor("v1") == rec

    def test_same_phone_two_visits_distinct_visitors(self):
        table = VisitTable()
        table.insert(VisitRecord("5551234", "F1", "v1", 1000))
        table.insert(VisitRecord("5551234", "F1", "v2", 5000))
        hits = table.lookup_by_phone("5551234", (0, 10000))
        assert [r.visitor for r in hits] == ["v1", "v2"]

    def test_duplicate_visitor_rejected(self):
        table = VisitTable()
        table.insert(VisitRecord("5551234", "F1", "v1", 1000))
        with pytest.raises(DuplicateVisitorError):
            table.insert(VisitRecord("5559999", "F2", "v1", 2000))

    def test_unknown_phone_empty(self):
        assert VisitTable().lookup_by_phone("5550000", (0, 10)) == []

    def test_period_filter_matches_brute_force(self):
        rng = random.Random(11)
        table = VisitTable()
        rows = []
        for i in range(200):
            rec = VisitRecord(
                phone=f"555000{rng.randrange(5)}",
                facility="F1",
                visitor=f"v{i}",
                time=rng.randrange(0, 10_000),
            )
            rows.append(rec)
            table.insert(rec)
        for _ in range(50):
            phone = f"555000{rng.randrange(5)}"
            a = rng.randrange(0, 10_000)
            b = rng.randrange(a, 10_000)
            expected = sorted(
                (r for r in rows if r.phone == phone and a <= r.time <= b),
                key=lambda r: (r.time, r.visitor),
            )
            assert table.lookup_by_phone(phone, (a, b)) == expected

    def test_period_boundaries_closed(self):
        table = VisitTable()
        table.insert(VisitRecord("55500001", "F1", "v1", 500))
        assert len(table.lookup_by_phone("55500001", (500, 500))) == 1

    def test_lookup_after_wipe_absent(self):
        table = VisitTable()
        table.insert(VisitRecord("55500001", "F1", "v1", 500))
        assert table.wipe_expired(501) == 1
        assert table.lookup_by_visitor("v1") is None
        assert table.lookup_by_phone("55500001", (0, 1000)) == []


class TestMasterTable:
    def test_lookup_window(self):
        table = MasterTable()
        table.open_assignment("v1", "D7", 1000)
        table.close("D7", 4600)
        assert table.lookup("v1", 9999) == ("D7", (1000, 4600))

    def test_open_visit_window_ends_at_query_time(self):
        table = MasterTable()
        table.open_assignment("v1", "D7", 1000)
        assert table.lookup("v1", 5000) == ("D7", (1000, 5000))

    def test_unknown_visitor(self):
        assert MasterTable().lookup("nope", 0) is None

    def test_reverse_lookup(self):
        table = MasterTable()
        table.open_assignment("v1", "D7", 1000)
        table.close("D7", 4600)
        assert table.reverse_lookup("D7", 2000) == "v1"
        assert table.reverse_lookup("D7", 9000) is None

    def test_reverse_lookup_device_reuse(self):
        table = MasterTable()
        table.open_assignment("v1", "D7", 1000)
        table.close("D7", 2000)
        table.open_assignment("v2", "D7", 3000)
        table.close("D7", 4000)
        assert table.reverse_lookup("D7", 1500) == "v1"
        assert table.reverse_lookup("D7", 3500) == "v2"
        assert table.reverse_lookup("D7", 2500) is None

    def test_overlapping_assignment_rejected(self):
        table = MasterTable()
        table.open_assignment("v1", "D7", 1000)
        with pytest.raises(DeviceBusyError):
            table.open_assignment("v2", "D7", 2000)
        table.close("D7", 3000)
        # closed intervals: reissuing at the exact hand-back second overlaps
        with pytest.raises(DeviceBusyError):
            table.open_assignment("v2", "D7", 3000)
        table.open_assignment("v2", "D7", 3001)

    def test_windows_never_overlap_randomized(self):
        rng = random.Random(13)
        table = MasterTable()
        t = 0
        for i in range(300):
            t += rng.randrange(1, 50)
            try:
                table.open_assignment(f"v{i}", f"D{rng.randrange(8)}", t)
            except DeviceBusyError:
                pass
            if rng.random() < 0.6:
                device = f"D{rng.randrange(8)}"
                rec = table.open_record(device)
                if rec is not None and rec.time_in <= t:
                    table.close(device, t)
        by_device = {}
        for rec in table.records():
            by_device.setdefault(rec.device, []).append(rec)
        horizon = t + 1000
        for recs in by_device.values():
            windows = sorted(r.window(horizon) for r in recs)
            for (a0, a1), (b0, b1) in zip(windows, windows[1:]):
                assert a1 < b0, "closed windows intersect"


class TestContactsTable:
    def test_symmetric_storage(self):
        table = ContactsTable()
        table.insert_event(ContactEvent("A", "B", 100, 2.0))
        assert table.events_for("A") == table.events_for("B")
        assert len(table.events_for("A")) == 1

    def test_mutual_sightings_merge(self):
        table = ContactsTable(dedup_window=5)
        assert table.add_reading("A", "B", 100, 2.0) == 1
        assert table.add_reading("B", "A", 101, 3.0) == 0
        events = table.events_for("A")
        assert len(events) == 1
        assert events[0].time == 100
        assert events[0].distance == pytest.approx(2.5)

    def test_reingest_is_idempotent(self):
        table = ContactsTable()
        readings = [("A", "B", 100, 2.0), ("B", "A", 101, 3.0), ("A", "C", 200, 1.0)]
        for r in readings:
            table.add_reading(*r)
        snapshot = table.all_events()
        for r in readings:
            assert table.add_reading(*r) == 0
        assert table.all_events() == snapshot

    def test_cross_batch_merge(self):
        # A's log arrives at its hand-back, B's later; the pair still merges.
        table = ContactsTable(dedup_window=5)
        table.add_reading("A", "B", 100, 2.0)
        assert table.event_count() == 1
        table.add_reading("B", "A", 103, 4.0)
        assert table.event_count() == 1
        [event] = table.all_events()
        assert (event.time, event.distance) == (100, 3.0)

    def test_unmatched_reading_is_still_an_event(self):
        table = ContactsTable(dedup_window=5)
        table.add_reading("A", "B", 100, 2.0)
        table.add_reading("A", "B", 300, 2.5)
        assert [e.time for e in table.events_for("B")] == [100, 300]

    def test_wipe_drops_old_events_and_pending(self):
        table = ContactsTable()
        table.add_reading("A", "B", 100, 2.0)
        table.add_reading("B", "A", 100, 2.0)
        table.add_reading("A", "C", 500, 1.0)
        assert table.wipe_expired(200) == 1
        assert table.events_for("B") == []
        assert len(table.events_for("C")) == 1


class TestLocationsTable:
    def test_insert_and_window_filter(self):
        table = LocationsTable()
        for t in (100, 50, 150):
            table.insert(LocationFix("D1", loc(1, 2), t))
        fixes = table.fixes_for("D1", 60, 150)
        assert [f.time for f in fixes] == [100, 150]

    def test_duplicate_device_time_ignored(self):
        table = LocationsTable()
        assert table.insert(LocationFix("D1", loc(1, 2), 100))
        assert not table.insert(LocationFix("D1", loc(3, 4), 100))
        assert len(table) == 1

    def test_wipe(self):
        table = LocationsTable()
        table.insert(LocationFix("D1", loc(1, 2), 100))
        table.insert(LocationFix("D1", loc(1, 2), 200))
        assert table.wipe_expired(150) == 1
        assert [f.time for f in table.fixes_for("D1")] == [200]


class TestRetention:
    def test_nothing_stale_deletes_zero(self):
        table = VisitTable()
        table.insert(VisitRecord("55500001", "F1", "v1", 1000))
        policy = RetentionPolicy()
        assert table.wipe_expired(policy.cutoff(1000 + policy.horizon)) == 0

    def test_boundary_one_second_too_old(self):
        policy = RetentionPolicy()
        now = 5_000_000
        table = ContactsTable()
        table.insert_event(ContactEvent("A", "B", policy.cutoff(now) - 1, 1.0))
        assert table.wipe_expired(policy.cutoff(now)) == 1

    def test_mixed_state_matches_brute_force(self):
        rng = random.Random(7)
        policy = RetentionPolicy(horizon=1000)
        now = 10_000
        cutoff = policy.cutoff(now)

        visits = VisitTable()
        master = MasterTable()
        contacts = ContactsTable()
        locations = LocationsTable()
        times = [rng.randrange(0, now) for _ in range(400)]
        expected_stale = 0
        for i, t in enumerate(times):
            kind = i % 4
            if kind == 0:
                visits.insert(VisitRecord(f"5550{i:04d}", "F1", f"v{i}", t))
                expected_stale += t < cutoff
            elif kind == 1:
                device = f"M{i}"
                master.open_assignment(f"m{i}", device, t)
                if rng.random() < 0.7:
                    out = t + rng.randrange(0, 500)
                    master.close(device, out)
                    expected_stale += out < cutoff
                else:
                    expected_stale += t < cutoff
            elif kind == 2:
                contacts.insert_event(ContactEvent(f"A{i}", f"B{i}", t, 1.0))
                expected_stale += t < cutoff
            else:
                locations.insert(LocationFix(f"D{i}", loc(0, 0), t))
                expected_stale += t < cutoff

        deleted = (
            visits.wipe_expired(cutoff)
            + master.wipe_expired(cutoff)
            + contacts.wipe_expired(cutoff)
            + locations.wipe_expired(cutoff)
        )
        assert deleted == expected_stale
        assert all(r.time >= cutoff for r in visits.records())
        assert all(e.time >= cutoff for e in contacts.all_events())
        assert all(f.time >= cutoff for f in locations.all_fixes())
        for rec in master.records():
            assert (rec.time_in if rec.time_out is None else rec.time_out) >= cutoff


class TestIndexCoherence:
    def test_visit_indexes_after_random_ops(self):
        rng = random.Random(3)
        table = VisitTable()
        live = []
        for i in range(500):
            t = rng.randrange(0, 100_000)
            rec = VisitRecord(f"555{rng.randrange(40):05d}", "F1", f"v{i}", t)
            table.insert(rec)
            live.append(rec)
            if rng.random() < 0.1:
                cutoff = rng.randrange(0, 100_000)
                table.wipe_expired(cutoff)
                live = [r for r in live if r.time >= cutoff]
        assert sorted(table.records(), key=lambda r: r.visitor) == sorted(
            live, key=lambda r: r.visitor
        )
        for rec in live:
            assert table.lookup_by_visitor(rec.visitor) == rec
            assert rec in table.lookup_by_phone(rec.phone, (0, 100_000))

    def test_contact_symmetry_random(self):
        rng = random.Random(5)
        table = ContactsTable()
        for i in range(300):
            a, b = rng.sample([f"D{k}" for k in range(12)], 2)
            table.add_reading(a, b, rng.randrange(0, 5000), rng.uniform(0.5, 10))
        for event in table.all_events():
            assert event in table.events_for(event.device_a)
            assert event in table.events_for(event.device_b)


class TestTokens:
    def test_seeded_tokens_unique_at_scale(self):
        issuer = TokenIssuer(random.Random(123))
        seen = {issuer.issue() for _ in range(1_000_000)}
        assert len(seen) == 1_000_000

    def test_default_tokens_unique_and_well_formed(self):
        issuer = TokenIssuer()
        tokens = [issuer.issue() for _ in range(100_000)]
        assert len(set(tokens)) == len(tokens)
        assert all(len(t) == 32 and set(t) <= set("0123456789abcdef") for t in tokens)

    def test_seeded_tokens_reproducible(self):
        a = TokenIssuer(random.Random(9))
        b = TokenIssuer(random.Random(9))
        assert [a.issue() for _ in range(10)] == [b.issue() for _ in range(10)]


class TestSnapshots:
    def test_round_trip_all_tables(self):
        visits = VisitTable()
        visits.insert(VisitRecord("55500001", "F1", "v1", 1000))
        master = MasterTable()
        master.open_assignment("v1", "D1", 1000)
        master.close("D1", 2000)
        master.open_assignment("v2", "D2", 1500)
        contacts = ContactsTable()
        contacts.insert_event(ContactEvent("D1", "D2", 1600, 2.5))
        locations = LocationsTable()
        locations.insert(LocationFix("D2", loc(3, 4, "cafe"), 1700))

        for original, fresh in (
            (visits, VisitTable()),
            (master, MasterTable()),
            (contacts, ContactsTable()),
            (locations, LocationsTable()),
        ):
            lines = list(original.to_lines())
            assert "\t" in lines[0]
            fresh.load_lines(lines)
            assert list(fresh.to_lines()) == lines


def test_phone_validation():
    assert validate_phone("55512345") == "55512345"
    assert validate_phone("999888777666555") == "999888777666555"
    for bad in ("", "1234567", "1234567890123456", "555-1234", "phone"):
        with pytest.raises(Exception):
            validate_phone(bad)
