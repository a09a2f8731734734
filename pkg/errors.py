"""
Exception hierarchy for the stereo spoofing lab.
Library modules raise these; only stereospoof.py turns them into exit codes.
"""


class StereoSpoofError(Exception):
    """Base class for every error raised by the lab."""


class DisparityError(StereoSpoofError, ValueError):
    """Non-positive disparity: the point sits at or beyond infinity."""


class BehindCameraError(StereoSpoofError, ValueError):
    """A world point with z <= 0 cannot be projected."""


class DomainError(StereoSpoofError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class GeometryError(StereoSpoofError, ValueError):
    """Invalid rig/attack geometry or mismatched image dimensions."""


class ConfigError(StereoSpoofError, ValueError):
    """Invalid matcher or analysis configuration."""


class ScheduleError(StereoSpoofError, ValueError):
    """Malformed injection schedule (overlapping events, bad depths)."""


class ScenarioParseError(StereoSpoofError):
    """Scenario file could not be parsed. `lineno` points at the offending line (1-based, 0 if unknown)."""

    def __init__(self, message, lineno=0, source="<scenario>"):
        self.lineno = lineno
        self.source = source
        where = f"{source}:{lineno}" if lineno else source
        super().__init__(f"{where}: {message}")


class ImageFormatError(StereoSpoofError, ValueError):
    """Malformed or unsupported image / point-cloud file."""
