"""HTTP endpoints, wire codecs, and wire/in-process equivalence."""

import json
import random

import pytest
from fastapi.testclient import TestClient

from fedtrace.context import SurfacePair
from fedtrace.facility import Facility, InProcessFacilityClient
from fedtrace.location import ProximityHit, Trajectory
from fedtrace.messages import FacilityQuery, FacilityResponse, SurfaceParams
from fedtrace.positioning import GatewayReading, PathLossModel, ProximityParams, grid_layout
from fedtrace.registration import FacilityEntry, Registry
from fedtrace.service import (
    HttpFacilityClient,
    create_facility_app,
    create_registry_app,
    query_from_dict,
    query_to_dict,
    response_from_dict,
    response_to_dict,
)
from fedtrace.sim import (
    build_system,
    phone_for,
    run_scenario,
    two_facility_spec,
)
from fedtrace.tables import LocationFix, SymbolicLocation
from fedtrace.trace import TraceRequest, report_to_dict, run_trace
from fedtrace.u2u import ContactHit, RawReading

TOKEN = "test-secret"
NOISELESS = PathLossModel(noise_sigma=0.0)


def wire_client(facility, capture=None):
    app = create_facility_app(facility, TOKEN)
    return HttpFacilityClient(TestClient(app), TOKEN, capture=capture)


def registry_test_client(registry):
    return TestClient(create_registry_app(registry, TOKEN))


def auth_headers():
    return {"Authorization": f"Bearer {TOKEN}"}


class TestFacilityEndpoints:
    def test_exchange_round_trip(self):
        facility = Facility("F1", "u2u")
        client = wire_client(facility)
        device = client.exchange("a" * 32, "D1", 100)
        assert device == "D1"
        assert facility.master.open_record("D1") is not None
        visitor = client.hand_back("D1", 200)
        assert visitor == "a" * 32

    def test_wrong_mode_query_rejected(self):
        from fedtrace.errors import UnsupportedModeError

        facility = Facility("F1", "u2u")
        client = wire_client(facility)
        client.exchange("a" * 32, "D1", 100)
        query = FacilityQuery(
            request_id="q-1",
            visitor="a" * 32,
            mode="location",
            now=500,
            period=(0, 500),
        )
        with pytest.raises(UnsupportedModeError):
            client.trace_query(query)

    def test_ingest_then_query_equals_in_process(self):
        readings = [
            RawReading("D1", "D2", 100, -65.0),
            RawReading("D2", "D1", 101, -66.0),
            RawReading("D1", "D3", 140, -70.0),
        ]
        wire_facility = Facility("F1", "u2u", model=NOISELESS)
        local_facility = Facility("F1", "u2u", model=NOISELESS)
        client = wire_client(wire_facility)
        for visitor, device in (("a" * 32, "D1"), ("b" * 32, "D2"), ("c" * 32, "D3")):
            client.exchange(visitor, device, 0)
            local_facility.exchange(visitor, device, 0)
        result = client.ingest_u2u(readings)
        local_stats = local_facility.ingest_u2u(readings)
        assert result["stored"] == local_stats.events_stored
        query = FacilityQuery("q-1", "a" * 32, "u2u", 1000, (0, 1000))
        over_wire = client.trace_query(query)
        in_process = local_facility.answer_trace_query(query)
        assert over_wire.hits == list(in_process.hits)
        assert over_wire.diagnostics == in_process.diagnostics

    def test_location_ingest_over_wire(self):
        layout = grid_layout(20, 20)
        facility = Facility("F2", "location", layout=layout, model=NOISELESS)
        client = wire_client(facility)
        from fedtrace.positioning import rssi_from_distance
        import math

        readings = [
            GatewayReading(
                g.id, "D1", 100, rssi_from_distance(math.hypot(10.3 - g.x, 10.3 - g.y), NOISELESS)
            )
            for g in layout.gateways
        ]
        result = client.ingest_location(readings)
        assert result["stored"] == 1
        assert len(facility.locations) == 1

    def test_auth_required(self):
        facility = Facility("F1", "u2u")
        raw = TestClient(create_facility_app(facility, TOKEN))
        response = raw.post("/exchange", json={"visitor": "a" * 32, "device": "D1", "time": 1})
        assert response.status_code == 401
        assert response.json()["error"]["code"] == "unauthorized"

    def test_malformed_body_is_machine_readable_4xx(self):
        facility = Facility("F1", "u2u")
        raw = TestClient(create_facility_app(facility, TOKEN))
        response = raw.post("/exchange", json={"device": "D1"}, headers=auth_headers())
        assert 400 <= response.status_code < 500
        assert response.json()["error"]["code"] == "invalid_request"


class TestRegistryEndpoints:
    def build(self):
        facility = Facility("F1", "u2u", device_pool=[f"D{i}" for i in range(50)])
        registry = Registry(token_rng=random.Random(12))
        registry.register_facility(
            FacilityEntry("F1", "u2u", "generic", InProcessFacilityClient(facility))
        )
        return registry, facility

    def test_signin_and_case_flow(self):
        registry, facility = self.build()
        api = registry_test_client(registry)
        response = api.post(
            "/signin",
            json={"phone": "5550001111", "facility": "F1", "time": 1000},
            headers=auth_headers(),
        )
        assert response.status_code == 200
        body = response.json()
        assert body["sms"]["destination"] == "5550001111"
        assert body["visitor"] in body["sms"]["body"]
        facility.hand_back(body["device"], 2000)

        case = api.post(
            "/case",
            json={"phone": "5550001111", "period": [0, 5000]},
            headers=auth_headers(),
        )
        assert case.status_code == 200
        assert case.json()["report"]["patient"] == "5550001111"
        trace_id = case.json()["trace_id"]
        fetched = api.get(f"/report/{trace_id}", headers=auth_headers())
        assert fetched.json() == case.json()

    def test_case_unknown_phone_is_empty_success(self):
        registry, _ = self.build()
        api = registry_test_client(registry)
        response = api.post(
            "/case",
            json={"phone": "5559990000", "period": [0, 5000]},
            headers=auth_headers(),
        )
        assert response.status_code == 200
        assert response.json()["report"]["contacts"] == []

    def test_unknown_report_404(self):
        registry, _ = self.build()
        api = registry_test_client(registry)
        response = api.get("/report/trace-9999", headers=auth_headers())
        assert response.status_code == 404

    def test_gov_id_signin(self):
        registry, _ = self.build()
        api = registry_test_client(registry)
        response = api.post(
            "/signin",
            json={"gov_id": "99887766", "facility": "F1", "time": 1000},
            headers=auth_headers(),
        )
        assert response.json()["sms"]["destination"] == "machine"

    def test_badge_signin(self):
        registry, facility = self.build()
        registry.register_frequent("5550002222", "F1", "D7")
        api = registry_test_client(registry)
        response = api.post(
            "/signin",
            json={"badge": "D7", "facility": "F1", "time": 1000},
            headers=auth_headers(),
        )
        assert response.status_code == 200
        assert response.json()["device"] == "D7"

    def test_wipe_endpoint(self):
        registry, _ = self.build()
        api = registry_test_client(registry)
        api.post(
            "/signin",
            json={"phone": "5550001111", "facility": "F1", "time": 1000},
            headers=auth_headers(),
        )
        horizon = registry.policy.horizon
        response = api.post("/wipe", json={"now": 1001 + horizon}, headers=auth_headers())
        assert response.json() == {"deleted": 1}
        assert len(registry.visits) == 0

    def test_device_conflict_maps_to_409(self):
        registry, _ = self.build()
        api = registry_test_client(registry)
        api.post(
            "/signin",
            json={"phone": "5550001111", "facility": "F1", "time": 1000, "device": "D1"},
            headers=auth_headers(),
        )
        dup = api.post(
            "/signin",
            json={"phone": "5550003333", "facility": "F1", "time": 1001, "device": "D1"},
            headers=auth_headers(),
        )
        assert dup.status_code == 409
        assert dup.json()["error"]["code"] == "device_busy"


class TestRoundTripCodecs:
    def random_query(self, rng):
        return FacilityQuery(
            request_id=f"q-{rng.randrange(10_000):04d}",
            visitor="".join(rng.choices("0123456789abcdef", k=32)),
            mode=rng.choice(["u2u", "location"]),
            now=rng.randrange(0, 2**31),
            period=(rng.randrange(0, 1000), rng.randrange(1000, 2000)),
            params=ProximityParams(
                radius=round(rng.uniform(0.5, 50.0), 4), window=rng.randrange(1, 4000)
            ),
            surface=(
                SurfaceParams(rng.randrange(0, 600), rng.randrange(0, 4000))
                if rng.random() < 0.5
                else None
            ),
            want_trajectory=rng.random() < 0.5,
        )

    def random_response(self, rng):
        mode = rng.choice(["u2u", "location"])
        visitor = lambda: "".join(rng.choices("0123456789abcdef", k=32))
        if mode == "u2u":
            hits = [
                ContactHit(visitor(), rng.randrange(0, 10_000), round(rng.uniform(0.1, 15), 4))
                for _ in range(rng.randrange(0, 8))
            ]
        else:
            hits = [
                ProximityHit(
                    visitor(),
                    SymbolicLocation("zone" + str(rng.randrange(3)), (rng.randrange(30), rng.randrange(30)), 1.0),
                    rng.randrange(0, 10_000),
                    round(rng.uniform(0.0, 10.0), 4),
                    rng.randrange(0, 600),
                )
                for _ in range(rng.randrange(0, 8))
            ]
        trajectory = None
        if mode == "location" and rng.random() < 0.7:
            patient = visitor()
            trajectory = Trajectory(
                patient,
                tuple(
                    LocationFix(
                        "",
                        SymbolicLocation("hall", (rng.randrange(30), rng.randrange(30)), 1.0),
                        t,
                    )
                    for t in range(0, rng.randrange(5, 50), 5)
                ),
            )
        surface = [
            SurfacePair(visitor(), (rng.randrange(30), rng.randrange(30)), 100, 500)
            for _ in range(rng.randrange(0, 3) if mode == "location" else 0)
        ]
        cells = (
            [[rng.randrange(5) for _ in range(4)] for _ in range(3)]
            if mode == "location"
            else None
        )
        return FacilityResponse(
            request_id=f"q-{rng.randrange(10_000):04d}",
            mode=mode,
            hits=hits,
            trajectory=trajectory,
            surface_pairs=surface,
            cell_counts=cells,
            diagnostics={"unmapped": rng.randrange(5)},
        )

    def test_query_round_trip_fuzz(self):
        rng = random.Random(2)
        for _ in range(200):
            query = self.random_query(rng)
            encoded = json.loads(json.dumps(query_to_dict(query)))
            assert query_from_dict(encoded) == query

    def test_response_round_trip_fuzz(self):
        rng = random.Random(3)
        for _ in range(200):
            response = self.random_response(rng)
            encoded = json.loads(json.dumps(response_to_dict(response)))
            visitor = response.trajectory.visitor if response.trajectory else "p"
            decoded = response_from_dict(encoded, visitor)
            assert decoded.request_id == response.request_id
            assert decoded.mode == response.mode
            assert list(decoded.hits) == list(response.hits)
            assert decoded.surface_pairs == list(response.surface_pairs)
            assert decoded.cell_counts == response.cell_counts
            assert decoded.diagnostics == response.diagnostics
            if response.trajectory is None:
                assert decoded.trajectory is None
            else:
                assert decoded.trajectory.visitor == response.trajectory.visitor
                assert [
                    (f.location, f.time) for f in decoded.trajectory.fixes
                ] == [(f.location, f.time) for f in response.trajectory.fixes]


class TestWireEquivalence:
    def test_trace_over_wire_equals_in_process(self):
        from fedtrace.sim import InfectionPlan, PlannedContact

        plan = InfectionPlan(
            patient=0,
            planted=(
                PlannedContact(1, "F1", 200, 120, 1.5),
                PlannedContact(2, "F2", 700, 150, 2.0),
            ),
        )
        spec = two_facility_spec(606, visitors=25, duration=1400, visit_duration_mean=300.0, plan=plan)
        run = run_scenario(spec)
        registry = run.system.registry
        period = (spec.base_time, spec.base_time + spec.duration)
        request = TraceRequest(patient=phone_for(0), period=period)

        in_process = report_to_dict(run_trace(registry, request))

        # same facilities, now reached over HTTP
        for fid, facility in run.system.facilities.items():
            entry = registry.directory[fid]
            registry.directory[fid] = FacilityEntry(
                entry.facility_id,
                entry.mode,
                entry.facility_type,
                wire_client(facility),
                entry.layout,
            )
        registry.trace_cache.clear()
        over_wire = report_to_dict(run_trace(registry, request))
        assert over_wire == in_process

    def test_facility_bound_traffic_has_no_phone(self):
        spec = two_facility_spec(607, visitors=30, duration=900, visit_duration_mean=240.0)
        capture = []
        system = build_system(spec, client_factory=lambda f: wire_client(f, capture=capture))
        run = run_scenario(spec, system=system)
        period = (spec.base_time, spec.base_time + spec.duration)
        run_trace(system.registry, TraceRequest(patient=phone_for(0), period=period))
        assert capture, "expected captured facility-bound requests"
        blob = b"\n".join(capture)
        for person in range(spec.visitors):
            assert phone_for(person).encode() not in blob
