"""
Pinhole stereo model for the spoofing lab.

Image coordinates are relative to the principal point (u right, v down), so a
glare and its lens-flare orb are simply sign-flipped. World frame is centered
on the rig midpoint: x right, y down, z forward, optical centers at x = -b/2
(left) and x = +b/2 (right).
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

from errors import BehindCameraError, DisparityError, DomainError, GeometryError
from spoof_constants import (
    DEFAULT_BASELINE_M,
    DEFAULT_FOCAL_LENGTH_PX,
    DEFAULT_IMAGE_HEIGHT_PX,
    DEFAULT_IMAGE_WIDTH_PX,
    DEFAULT_INTENSITY_PRIMARY,
    DEFAULT_INTENSITY_SECONDARY,
    DEFAULT_PIXEL_PITCH_M,
    OA_DEPTH_STEP_M,
)

logger = logging.getLogger(__name__)

# Relative slack, in steps, for treating a float as an exact half-step tie.
TIE_TOLERANCE = 1e-9


class Pattern(str, Enum):
    XSHAPE = "x"
    TRAPEZOID = "trapezoid"
    TRIANGLE = "triangle"


class Mode(str, Enum):
    BEAMS = "beams"
    ORBS = "orbs"
    COMBINED = "combined"

    @property
    def has_beams(self):
        return self in (Mode.BEAMS, Mode.COMBINED)

    @property
    def has_orbs(self):
        return self in (Mode.ORBS, Mode.COMBINED)


class Camera(str, Enum):
    LEFT = "left"
    RIGHT = "right"


class Reason(str, Enum):
    FEASIBLE = "Feasible"
    BEHIND_CAMERA = "BehindCamera"
    WITHIN_FOCAL_LENGTH = "WithinFocalLength"
    DEGENERATE_SEPARATION = "DegenerateSeparation"


class Source(str, Enum):
    BEAMS_X = "BeamsX"
    BEAMS_TRAPEZOID = "BeamsTrapezoid"
    ORBS_X = "OrbsX"
    ORBS_TRAPEZOID = "OrbsTrapezoid"

    @property
    def is_x(self):
        return self in (Source.BEAMS_X, Source.ORBS_X)

    @property
    def is_beams(self):
        return self in (Source.BEAMS_X, Source.BEAMS_TRAPEZOID)


# ── Domain types ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class StereoRig:
    focal_length_px: float
    baseline_m: float
    image_width_px: int
    image_height_px: int
    principal_point: tuple = None
    pixel_pitch_m_per_px: float = DEFAULT_PIXEL_PITCH_M

    def __post_init__(self):
        if self.principal_point is None:
            object.__setattr__(self, "principal_point",
                               (self.image_width_px / 2.0, self.image_height_px / 2.0))
        if not self.focal_length_px > 0:
            raise GeometryError(f"focal_length_px must be > 0, got {self.focal_length_px}")
        if not self.baseline_m > 0:
            raise GeometryError(f"baseline_m must be > 0, got {self.baseline_m}")
        if self.image_width_px <= 0 or self.image_height_px <= 0:
            raise GeometryError(
                f"image dimensions must be > 0, got {self.image_width_px}x{self.image_height_px}")
        if not self.pixel_pitch_m_per_px > 0:
            raise GeometryError(f"pixel pitch must be > 0, got {self.pixel_pitch_m_per_px}")
        cx, cy = self.principal_point
        if not (0 <= cx < self.image_width_px and 0 <= cy < self.image_height_px):
            raise GeometryError(f"principal point {self.principal_point} lies outside the image")

    @property
    def focal_length_m(self):
        return self.focal_length_px * self.pixel_pitch_m_per_px

    @property
    def cx(self):
        return self.principal_point[0]

    @property
    def cy(self):
        return self.principal_point[1]

    @property
    def shape(self):
        """(height, width) in numpy order."""
        return (self.image_height_px, self.image_width_px)

    def to_pixel(self, point):
        """ImagePoint -> (col, row) in array coordinates."""
        return (self.cx + point.u, self.cy + point.v)

    def from_pixel(self, col, row, camera=None):
        return ImagePoint(col - self.cx, row - self.cy, camera or Camera.LEFT)

    def in_frame(self, point):
        col, row = self.to_pixel(point)
        return 0 <= col < self.image_width_px and 0 <= row < self.image_height_px

    def to_dict(self):
        return {
            "focal_length_px": self.focal_length_px,
            "baseline_m": self.baseline_m,
            "image_width_px": self.image_width_px,
            "image_height_px": self.image_height_px,
            "principal_point": list(self.principal_point),
            "pixel_pitch_m_per_px": self.pixel_pitch_m_per_px,
        }

    @classmethod
    def from_dict(cls, data):
        pp = data.get("principal_point")
        return cls(
            focal_length_px=float(data.get("focal_length_px", DEFAULT_FOCAL_LENGTH_PX)),
            baseline_m=float(data.get("baseline_m", DEFAULT_BASELINE_M)),
            image_width_px=int(data.get("image_width_px", DEFAULT_IMAGE_WIDTH_PX)),
            image_height_px=int(data.get("image_height_px", DEFAULT_IMAGE_HEIGHT_PX)),
            principal_point=tuple(float(c) for c in pp) if pp else None,
            pixel_pitch_m_per_px=float(data.get("pixel_pitch_m_per_px", DEFAULT_PIXEL_PITCH_M)),
        )


def default_rig():
    """640x360 rig with f=700 px and b=0.12 m."""
    return StereoRig(
        focal_length_px=DEFAULT_FOCAL_LENGTH_PX,
        baseline_m=DEFAULT_BASELINE_M,
        image_width_px=DEFAULT_IMAGE_WIDTH_PX,
        image_height_px=DEFAULT_IMAGE_HEIGHT_PX,
    )


@dataclass(frozen=True)
class AttackGeometry:
    separation_m: float
    distance_m: float
    lateral_offset_m: float = 0.0
    pattern: Pattern = Pattern.XSHAPE
    mode: Mode = Mode.BEAMS
    intensity_primary: float = DEFAULT_INTENSITY_PRIMARY
    intensity_secondary: float = DEFAULT_INTENSITY_SECONDARY

    def __post_init__(self):
        object.__setattr__(self, "pattern", Pattern(self.pattern))
        object.__setattr__(self, "mode", Mode(self.mode))
        if not self.separation_m > 0:
            raise GeometryError(f"separation_m must be > 0, got {self.separation_m}")
        if not self.distance_m > 0:
            raise GeometryError(f"distance_m must be > 0, got {self.distance_m}")
        if not (0 <= self.intensity_secondary < self.intensity_primary <= 1.0):
            raise GeometryError(
                "intensities must satisfy 0 <= secondary < primary <= 1, "
                f"got primary={self.intensity_primary} secondary={self.intensity_secondary}")

    def to_dict(self):
        return {
            "separation_m": self.separation_m,
            "distance_m": self.distance_m,
            "lateral_offset_m": self.lateral_offset_m,
            "pattern": self.pattern.value,
            "mode": self.mode.value,
            "intensity_primary": self.intensity_primary,
            "intensity_secondary": self.intensity_secondary,
        }


@dataclass(frozen=True)
class ImagePoint:
    u: float
    v: float
    which_camera: Camera = Camera.LEFT

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise GeometryError(f"image point must be finite, got ({self.u}, {self.v})")

    def radius(self):
        return math.hypot(self.u, self.v)


@dataclass(frozen=True)
class FakeDepthPrediction:
    depth_m: float
    exists: bool
    reason: Reason
    source: Source
    # Negative formula value, but multi-pixel blobs may still match into a far fake depth.
    far_match_possible: bool = field(default=False)

    def to_dict(self):
        return {
            "source": self.source.value,
            "depth_m": self.depth_m,
            "exists": self.exists,
            "reason": self.reason.value,
        }


# ── Operations ──────────────────────────────────────────────────────────

def triangulate(rig, left_u, right_u):
    """Depth from a left/right horizontal correspondence: f*b / (u_l - u_r)."""
    disparity = left_u - right_u
    if not disparity > 0:
        raise DisparityError(f"non-positive disparity {disparity} px (point at or beyond infinity)")
    return rig.focal_length_px * rig.baseline_m / disparity


def project(rig, world_point):
    """Project a rig-frame point (meters) into both cameras."""
    x, y, z = world_point
    if not z > 0:
        raise BehindCameraError(f"cannot project point with z={z} m")
    f = rig.focal_length_px
    half_b = rig.baseline_m / 2.0
    v = f * y / z
    left = ImagePoint(f * (x + half_b) / z, v, Camera.LEFT)
    right = ImagePoint(f * (x - half_b) / z, v, Camera.RIGHT)
    return left, right


def back_project(rig, row, col, depth_m):
    """Pixel + depth -> (x, y, z) in the left-camera frame."""
    f = rig.focal_length_px
    return ((col - rig.cx) * depth_m / f, (row - rig.cy) * depth_m / f, depth_m)


def orb_position(glare):
    """Lens-flare orb is the glare reflected through the principal point."""
    return ImagePoint(-glare.u, -glare.v, glare.which_camera)


def source_positions(geo):
    """World coordinates of the two light sources P (left) and Q (right)."""
    half_d = geo.separation_m / 2.0
    p = (-half_d + geo.lateral_offset_m, 0.0, geo.distance_m)
    q = (half_d + geo.lateral_offset_m, 0.0, geo.distance_m)
    return p, q


def _classify(rig, depth_m, source, degenerate=False):
    if degenerate:
        return FakeDepthPrediction(math.inf, False, Reason.DEGENERATE_SEPARATION, source)
    if depth_m <= 0:
        return FakeDepthPrediction(depth_m, False, Reason.BEHIND_CAMERA, source,
                                   far_match_possible=True)
    if depth_m <= rig.focal_length_m:
        return FakeDepthPrediction(depth_m, False, Reason.WITHIN_FOCAL_LENGTH, source)
    return FakeDepthPrediction(depth_m, True, Reason.FEASIBLE, source)


def predict_fake_depth(rig, geo):
    """Closed-form fake depths for the requested pattern and mode.

    Beams X:          z_x =  b z / (d + b)
    Beams trapezoid:  z_t =  b z / (b - d)
    Orbs X:           z_x = -b z / (d + b)
    Orbs trapezoid:   z_t =  b z / (d - b)

    Triangle behaves as the union of X and trapezoid, since unequal
    intensities collapse it into one of the two.
    """
    b = rig.baseline_m
    d = geo.separation_m
    z = geo.distance_m
    want_x = geo.pattern in (Pattern.XSHAPE, Pattern.TRIANGLE)
    want_t = geo.pattern in (Pattern.TRAPEZOID, Pattern.TRIANGLE)
    degenerate = d == b

    predictions = []
    if geo.mode.has_beams:
        if want_x:
            predictions.append(_classify(rig, b * z / (d + b), Source.BEAMS_X))
        if want_t:
            depth = math.inf if degenerate else b * z / (b - d)
            predictions.append(_classify(rig, depth, Source.BEAMS_TRAPEZOID, degenerate))
    if geo.mode.has_orbs:
        if want_x:
            predictions.append(_classify(rig, -b * z / (d + b), Source.ORBS_X))
        if want_t:
            depth = math.inf if degenerate else b * z / (d - b)
            predictions.append(_classify(rig, depth, Source.ORBS_TRAPEZOID, degenerate))

    logger.debug(f"Predictions for b={b} d={d} z={z} {geo.pattern.value}/{geo.mode.value}: "
                 f"{[(p.source.value, round(p.depth_m, 4), p.reason.value) for p in predictions]}")
    return predictions


def feasible_predictions(predictions):
    return [p for p in predictions if p.exists]


def round_to_oa_step(depth_m, step_m=OA_DEPTH_STEP_M, ties_up=True):
    """Snap a depth to the OA system's step size: nearest multiple, never below one step.

    Values within TIE_TOLERANCE of a half step count as ties, so 0.12 * 7 / 1.12
    (0.7499... in floats) is a tie like 0.75 is.
    """
    if not depth_m > 0:
        raise DomainError(f"depth must be > 0, got {depth_m}")
    if not step_m > 0:
        raise DomainError(f"step must be > 0, got {step_m}")
    steps = depth_m / step_m
    if ties_up:
        snapped = math.floor(steps + 0.5 + TIE_TOLERANCE) * step_m
    else:
        snapped = math.ceil(steps - 0.5 - TIE_TOLERANCE) * step_m
    return max(snapped, step_m)


def fake_disparity(rig, geo):
    """Disparity of the X-shape beams correspondence: f (d + b) / z."""
    return rig.focal_length_px * (geo.separation_m + rig.baseline_m) / geo.distance_m
