"""
Synthetic stereo pairs with injected light-source artifacts.

Backgrounds are rectified: every row carries one exact disparity, so the right
view is the left texture resampled at x + D. Attack artifacts are additive
Gaussian blobs in radiance space (0..255 scale, glares overdriven past full
well), followed by a global auto-exposure gain and 8-bit quantization.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.ndimage import gaussian_filter

from errors import GeometryError
from geometry import ImagePoint, Pattern, orb_position, project, source_positions
from spoof_constants import (
    AE_TARGET_MEAN,
    DEFAULT_FLAT_DEPTH_M,
    GLARE_MIN_RADIUS_PX,
    GLARE_OVERDRIVE,
    GLARE_RADIUS_REF_PX,
    GLARE_REF_DISTANCE_M,
    MAX_AMBIENT_LUX,
    ORB_GREEN,
    ORB_RADIUS_RATIO,
    ORB_RELATIVE_INTENSITY,
    TEXTURE_BLUR_SIGMA_PX,
    TEXTURE_MAX,
    TEXTURE_MIN,
    TRIANGLE_JITTER,
    WHITE,
)

logger = logging.getLogger(__name__)

REFERENCE_FOCAL_PX = 700.0
BLOB_EXTENT_SIGMAS = 4.0


class Background(str, Enum):
    FLAT_TEXTURED = "flat"
    FRONTOPARALLEL_WALL = "wall"
    CORRIDOR = "corridor"


# ── Domain types ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SceneSpec:
    background: Background = Background.FLAT_TEXTURED
    ambient_lux: float = 0.0
    texture_seed: int = 0
    depth_m: float = DEFAULT_FLAT_DEPTH_M
    near_m: float = 0.0
    far_m: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "background", Background(self.background))
        if not (0.0 <= self.ambient_lux <= MAX_AMBIENT_LUX):
            raise GeometryError(f"ambient_lux must be in [0, {MAX_AMBIENT_LUX}], got {self.ambient_lux}")
        if self.background == Background.CORRIDOR:
            if not (0 < self.near_m < self.far_m):
                raise GeometryError(f"corridor needs 0 < near_m < far_m, got {self.near_m}, {self.far_m}")
        elif not self.depth_m > 0:
            raise GeometryError(f"scene depth must be > 0, got {self.depth_m}")

    @classmethod
    def flat_textured(cls, seed=0, ambient_lux=0.0):
        return cls(Background.FLAT_TEXTURED, ambient_lux, seed, DEFAULT_FLAT_DEPTH_M)

    @classmethod
    def wall(cls, depth_m, ambient_lux=0.0, seed=0):
        return cls(Background.FRONTOPARALLEL_WALL, ambient_lux, seed, depth_m)

    @classmethod
    def corridor(cls, near_m, far_m, ambient_lux=0.0, seed=0):
        return cls(Background.CORRIDOR, ambient_lux, seed, near_m=near_m, far_m=far_m)

    def row_depths(self, height):
        """Scene depth per image row. Corridors run far (top) to near (bottom), linear in 1/z."""
        if self.background != Background.CORRIDOR:
            return np.full(height, self.depth_m, dtype=np.float64)
        t = np.linspace(0.0, 1.0, height) if height > 1 else np.ones(1)
        inv = 1.0 / self.far_m + (1.0 / self.near_m - 1.0 / self.far_m) * t
        return 1.0 / inv

    def reference_depth(self):
        """Single depth used as the 'true' background for fake-depth detection."""
        if self.background == Background.CORRIDOR:
            return 2.0 / (1.0 / self.near_m + 1.0 / self.far_m)
        return self.depth_m


@dataclass(frozen=True)
class GlareSpec:
    center: ImagePoint
    radius_px: float
    peak_intensity: float
    sigma_px: float = 0.0
    color: tuple = WHITE
    gain: float = GLARE_OVERDRIVE

    def __post_init__(self):
        if not self.radius_px > 0:
            raise GeometryError(f"radius_px must be > 0, got {self.radius_px}")
        if not (0 < self.peak_intensity <= 1.0):
            raise GeometryError(f"peak_intensity must be in (0, 1], got {self.peak_intensity}")
        if not self.sigma_px:
            object.__setattr__(self, "sigma_px", self.radius_px / 2.0)

    @property
    def amplitude(self):
        """Peak radiance on the 0..255 scale, before auto exposure."""
        return self.peak_intensity * 255.0 * self.gain


@dataclass
class AttackLayout:
    left_glares: list = field(default_factory=list)
    right_glares: list = field(default_factory=list)
    left_orbs: list = field(default_factory=list)
    right_orbs: list = field(default_factory=list)
    width: int = 0
    height: int = 0
    principal_point: tuple = (0.0, 0.0)

    def __iter__(self):
        return iter((self.left_glares, self.right_glares, self.left_orbs, self.right_orbs))

    @property
    def empty(self):
        return not any(self)

    def to_pixel(self, point):
        return (self.principal_point[0] + point.u, self.principal_point[1] + point.v)


@dataclass
class StereoFrame:
    left: np.ndarray
    right: np.ndarray
    width: int
    height: int
    timestamp_s: float = 0.0
    exposure_gain: float = 1.0

    def __post_init__(self):
        expected = (self.height, self.width, 3)
        if self.left.shape != expected or self.right.shape != expected:
            raise GeometryError(
                f"stereo images must both be {expected}, got {self.left.shape} and {self.right.shape}")


@dataclass(frozen=True)
class AutoExposure:
    enabled: bool = True
    target_mean: float = AE_TARGET_MEAN

    def gain_for(self, *radiance):
        """Global gain that pulls the metered mean (clipped, 0..1) down to target_mean."""
        if not self.enabled:
            return 1.0
        metered = np.mean([np.clip(r, 0.0, 255.0).mean() for r in radiance]) / 255.0
        if metered <= 0:
            return 1.0
        return min(1.0, self.target_mean / metered)


# ── Background ───────────────────────────────────────────────────────────

def ground_truth_disparity(rig, scene):
    """Per-pixel background disparity f*b/Z for the scene, shape (H, W)."""
    row_disp = rig.focal_length_px * rig.baseline_m / scene.row_depths(rig.image_height_px)
    return np.repeat(row_disp[:, None], rig.image_width_px, axis=1)


def _texture(rig, scene, pad):
    rng = np.random.default_rng(scene.texture_seed)
    noise = rng.random((rig.image_height_px, rig.image_width_px + pad))
    tex = gaussian_filter(noise, sigma=TEXTURE_BLUR_SIGMA_PX, mode="reflect")
    lo, hi = tex.min(), tex.max()
    tex = (tex - lo) / (hi - lo) if hi > lo else np.zeros_like(tex)
    tex = TEXTURE_MIN + tex * (TEXTURE_MAX - TEXTURE_MIN)
    return tex * (scene.ambient_lux / MAX_AMBIENT_LUX)


def render_scene(rig, scene, timestamp_s=0.0):
    """Rectified background pair; the right view samples the left texture at x + D(row)."""
    h, w = rig.shape
    row_disp = ground_truth_disparity(rig, scene)[:, 0]
    pad = int(math.ceil(row_disp.max())) + 2
    tex = _texture(rig, scene, pad)

    xs = np.arange(w, dtype=np.float64)
    tex_xs = np.arange(w + pad, dtype=np.float64)
    left_gray = tex[:, :w]
    right_gray = np.empty((h, w), dtype=np.float64)
    for row in range(h):
        right_gray[row] = np.interp(xs + row_disp[row], tex_xs, tex[row])

    left = np.repeat(np.clip(np.rint(left_gray), 0, 255).astype(np.uint8)[:, :, None], 3, axis=2)
    right = np.repeat(np.clip(np.rint(right_gray), 0, 255).astype(np.uint8)[:, :, None], 3, axis=2)
    logger.debug(f"Rendered {scene.background.value} scene {w}x{h} at {scene.ambient_lux} lux, "
                 f"disparity {row_disp.min():.2f}-{row_disp.max():.2f} px")
    return StereoFrame(left, right, w, h, timestamp_s)


# ── Attack placement ─────────────────────────────────────────────────────

def glare_radius_px(rig, distance_m):
    radius = GLARE_RADIUS_REF_PX * (GLARE_REF_DISTANCE_M / distance_m) * (rig.focal_length_px / REFERENCE_FOCAL_PX)
    return max(radius, GLARE_MIN_RADIUS_PX)


def _orb_for(glare):
    radius = glare.radius_px * ORB_RADIUS_RATIO
    return GlareSpec(
        center=orb_position(glare.center),
        radius_px=radius,
        peak_intensity=glare.peak_intensity * ORB_RELATIVE_INTENSITY,
        color=ORB_GREEN,
        gain=1.0,
    )


def place_attack(rig, geo, seed=0):
    """Glares of P and Q in both cameras, plus the orbs of the bright ones when mode has orbs."""
    p_world, q_world = source_positions(geo)
    p_left, p_right = project(rig, p_world)
    q_left, q_right = project(rig, q_world)
    radius = glare_radius_px(rig, geo.distance_m)
    hi, lo = geo.intensity_primary, geo.intensity_secondary

    if geo.pattern == Pattern.XSHAPE:
        peaks = {"p_left": lo, "q_left": hi, "p_right": hi, "q_right": lo}
        bright = {"q_left", "p_right"}
    elif geo.pattern == Pattern.TRAPEZOID:
        peaks = {"p_left": hi, "q_left": lo, "p_right": lo, "q_right": hi}
        bright = {"p_left", "q_right"}
    else:
        rng = np.random.default_rng(seed)
        jitter = rng.uniform(-TRIANGLE_JITTER, TRIANGLE_JITTER, size=4)
        names = ("p_left", "q_left", "p_right", "q_right")
        peaks = {name: min(1.0, hi * (1.0 + j)) for name, j in zip(names, jitter)}
        bright = set(names)

    centers = {"p_left": p_left, "q_left": q_left, "p_right": p_right, "q_right": q_right}
    # A zero-intensity source emits nothing.
    glares = {name: GlareSpec(centers[name], radius, peaks[name]) for name in centers if peaks[name] > 0}

    layout = AttackLayout(
        left_glares=[glares[n] for n in ("p_left", "q_left") if n in glares],
        right_glares=[glares[n] for n in ("p_right", "q_right") if n in glares],
        width=rig.image_width_px,
        height=rig.image_height_px,
        principal_point=rig.principal_point,
    )
    if geo.mode.has_orbs:
        for name in ("p_left", "q_left"):
            if name in bright:
                layout.left_orbs.append(_orb_for(glares[name]))
        for name in ("p_right", "q_right"):
            if name in bright:
                layout.right_orbs.append(_orb_for(glares[name]))

    off_frame = [name for name, g in glares.items() if not rig.in_frame(g.center)]
    if off_frame:
        logger.debug(f"Glares outside the frame: {off_frame}")
    logger.debug(f"Placed {geo.pattern.value}/{geo.mode.value} attack: radius {radius:.2f} px, "
                 f"{len(layout.left_orbs) + len(layout.right_orbs)} orbs")
    return layout


# ── Compositing ──────────────────────────────────────────────────────────

def _splat(radiance, spec, col, row):
    """Add one Gaussian blob in place, evaluated only inside its 4-sigma window."""
    h, w = radiance.shape[:2]
    reach = int(math.ceil(BLOB_EXTENT_SIGMAS * spec.sigma_px))
    c0, c1 = max(0, int(math.floor(col)) - reach), min(w, int(math.ceil(col)) + reach + 1)
    r0, r1 = max(0, int(math.floor(row)) - reach), min(h, int(math.ceil(row)) + reach + 1)
    if c0 >= c1 or r0 >= r1:
        return
    xs = np.arange(c0, c1, dtype=np.float64) - col
    ys = np.arange(r0, r1, dtype=np.float64) - row
    profile = np.exp(-(ys[:, None] ** 2 + xs[None, :] ** 2) / (2.0 * spec.sigma_px ** 2))
    blob = spec.amplitude * profile
    for ch in range(3):
        radiance[r0:r1, c0:c1, ch] += blob * spec.color[ch]


def composite(frame, layout, exposure=None):
    """Add glares and orbs to a frame, then apply the auto-exposure gain and quantize."""
    if layout.width != frame.width or layout.height != frame.height:
        raise GeometryError(
            f"attack layout is {layout.width}x{layout.height} but frame is {frame.width}x{frame.height}")
    exposure = exposure or AutoExposure()
    left_glares, right_glares, left_orbs, right_orbs = layout

    views = []
    for image, specs in ((frame.left, left_glares + left_orbs), (frame.right, right_glares + right_orbs)):
        radiance = image.astype(np.float64)
        for spec in specs:
            col, row = layout.to_pixel(spec.center)
            _splat(radiance, spec, col, row)
        views.append(radiance)

    gain = exposure.gain_for(*views)
    left, right = (np.clip(np.rint(v * gain), 0, 255).astype(np.uint8) for v in views)
    logger.debug(f"Composited {sum(len(s) for s in layout)} artifacts, AE gain {gain:.4f}")
    return StereoFrame(left, right, frame.width, frame.height, frame.timestamp_s, gain)


def render_attack(rig, scene, geo=None, exposure=None, seed=0):
    """render_scene -> place_attack -> composite. `geo=None` renders the clean scene through the same AE."""
    frame = render_scene(rig, scene)
    if geo is None:
        layout = AttackLayout(width=rig.image_width_px, height=rig.image_height_px,
                              principal_point=rig.principal_point)
    else:
        layout = place_attack(rig, geo, seed)
    return composite(frame, layout, exposure), layout


def orb_green_peak(frame, layout):
    """Largest raw G value at any in-frame orb center; 0 when there are none."""
    best = 0
    for image, orbs in ((frame.left, layout.left_orbs), (frame.right, layout.right_orbs)):
        for orb in orbs:
            col, row = layout.to_pixel(orb.center)
            c, r = int(round(col)), int(round(row))
            if 0 <= c < frame.width and 0 <= r < frame.height:
                best = max(best, int(image[r, c, 1]))
    return best
