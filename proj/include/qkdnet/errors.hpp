#pragma once

#include <stdexcept>
#include <string>

namespace qkdnet {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input text (JSON/CSV that cannot be read at all).
struct ParseError : Error {
    using Error::Error;
};

/// Structurally readable input that violates a schema or domain invariant.
struct ValidationError : Error {
    using Error::Error;
};

struct NoRouteError : Error {
    using Error::Error;
};

/// Linear system has fewer independent equations than unknowns.
struct UnderdeterminedError : Error {
    using Error::Error;
};

struct UncalibratedError : Error {
    using Error::Error;
};

/// Calibration residuals exceed configured bounds, or anchors are infeasible.
struct CalibrationError : Error {
    using Error::Error;
};

struct ScheduleError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct DeviceMismatchError : Error {
    using Error::Error;
};

struct DeviceBusyError : Error {
    using Error::Error;
};

struct PortConflictError : Error {
    using Error::Error;
};

struct NotGeneratingError : Error {
    using Error::Error;
};

struct StaleReportError : Error {
    using Error::Error;
};

} // namespace qkdnet
