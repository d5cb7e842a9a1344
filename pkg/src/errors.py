"""errors.py

Exceptions raised by the simulator and the checkers, and the exit codes the
command line maps them to.
"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECK_FAILURE = 2
EXIT_SCHEDULING = 3
EXIT_PACKING = 4


class HardSphereError(Exception):
    """Base class for every error raised by this package."""

    exit_code = EXIT_SCHEDULING


class ConfigError(HardSphereError, ValueError):
    """A run configuration value is missing or out of range."""

    exit_code = EXIT_USAGE


class CheckFailure(HardSphereError):
    """A verification check did not pass."""

    exit_code = EXIT_CHECK_FAILURE


class OverlapError(HardSphereError, ValueError):
    """Two spheres overlap by more than the overlap tolerance."""


class ContactError(HardSphereError, ValueError):
    """A collision was requested for a pair not at contact or not incoming."""


class SchedulingError(HardSphereError, RuntimeError):
    """The event loop hit a pathology it refuses to resolve."""


class MultipleCollisionError(SchedulingError):
    """Three or more particles meet within the event time tolerance."""


class EventLimitError(SchedulingError):
    """More collisions than ``max_events`` were processed."""


class NotDispersedError(SchedulingError):
    """The trajectory has (or may have) future collisions."""


class PackingError(HardSphereError):
    """An ensemble cannot place its spheres without overlap."""

    exit_code = EXIT_PACKING


def exit_code_for(exc: BaseException) -> int:
    """Return the command line exit code for an exception."""
    if isinstance(exc, HardSphereError):
        return exc.exit_code
    if isinstance(exc, ValueError):
        return EXIT_USAGE
    return EXIT_SCHEDULING
