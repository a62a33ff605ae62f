"""Exception hierarchy shared by the registry, facility, and service layers."""


class FedTraceError(Exception):
    """Base class; carries a stable machine-readable code for the wire."""

    code = "error"


class InvalidPhoneError(FedTraceError):
    code = "invalid_phone"


class DuplicateVisitorError(FedTraceError):
    """A pseudonym was issued twice. Signals a token-generator bug."""

    code = "duplicate_visitor"


class UnknownVisitorError(FedTraceError):
    code = "unknown_visitor"


class DeviceBusyError(FedTraceError):
    """Device already handed out (open assignment exists)."""

    code = "device_busy"


class UnknownDeviceError(FedTraceError):
    code = "unknown_device"


class DevicePoolExhaustedError(FedTraceError):
    code = "device_pool_exhausted"


class NotSignedInError(FedTraceError):
    """Sign-out (or hand-back) of a device with no open assignment."""

    code = "not_signed_in"


class UnknownBadgeError(FedTraceError):
    code = "unknown_badge"


class UnknownFacilityError(FedTraceError):
    code = "unknown_facility"


class UnsupportedModeError(FedTraceError):
    """Facility asked to answer a query for a mode it does not run."""

    code = "unsupported_mode"


class LayoutError(FedTraceError):
    code = "bad_layout"


class InvalidRequestError(FedTraceError):
    code = "invalid_request"


class InfeasiblePlanError(FedTraceError):
    """Scenario plan cannot be realized (e.g. more planted contacts than visitors)."""

    code = "infeasible_plan"


class FacilityUnreachableError(FedTraceError):
    """Raised by facility clients when the facility cannot be queried."""

    code = "facility_unreachable"
