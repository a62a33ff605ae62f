"""Facility-owned digital contact tracing at desk scale.

Facilities log visitor proximity through pseudonymous radio devices, a
government registry maps pseudonyms to phone numbers, and a federated
trace identifies contacts of a confirmed patient without any facility
ever learning an identity.
"""

from .context import (
    ContextProfile,
    Heatmap,
    SurfacePair,
    build_heatmap,
    cell_counts,
    default_profile,
    filter_persistence,
    filter_signal_profile,
    filter_wall_occlusion,
    surface_contacts,
)
from .errors import FedTraceError
from .facility import Facility, InProcessFacilityClient
from .location import (
    ProximityHit,
    Trajectory,
    get_trajectory,
    ingest_gateway_readings,
    query_proximity,
)
from .messages import FacilityQuery, FacilityResponse, SurfaceParams
from .positioning import (
    FacilityLayout,
    Gateway,
    GatewayReading,
    PathLossModel,
    ProximityParams,
    Zone,
    distance_from_rssi,
    grid_layout,
    rssi_from_distance,
    st_range_query,
    trilaterate,
    trilaterate_point,
)
from .registration import (
    DeviceAssignment,
    FacilityEntry,
    FrequentVisitorLink,
    Registry,
    SmsEvent,
)
from .tables import (
    ContactEvent,
    ContactsTable,
    LocationFix,
    LocationsTable,
    MasterRecord,
    MasterTable,
    RetentionPolicy,
    SymbolicLocation,
    TokenIssuer,
    VisitRecord,
    VisitTable,
)
from .trace import TraceReport, TraceRequest, report_to_dict, report_to_json, run_trace
from .u2u import ContactHit, RawReading, ingest_device_logs, query_contacts

__version__ = "0.1.0"
