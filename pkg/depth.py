"""
Classic stereo matchers: SAD block matching and census/Hamming semi-global
matching, plus disparity -> depth -> point cloud conversion.

Cost volumes are (H, W, D) with index i <-> disparity min_disp + i. Integer
costs throughout so the winner (and its tie-break toward the smallest
disparity) is exact and reproducible.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from errors import ConfigError
from geometry import back_project, feasible_predictions, predict_fake_depth
from spoof_constants import (
    CENSUS_SIZE,
    DEFAULT_BLOCK_SIZE,
    DEFAULT_LR_CONSISTENCY_PX,
    DEFAULT_MAX_DISP,
    DEFAULT_UNIQUENESS_RATIO,
    GRAY_WEIGHTS,
    INVALID,
    NEAR_INFINITY_DISPARITY_PX,
    SEARCH_WINDOW_FRAC,
    SEARCH_WINDOW_MARGIN_PX,
    SGM_P1,
    SGM_P2,
)

logger = logging.getLogger(__name__)

# Costs for disparities that would sample outside the right image.
SAD_OUT_OF_RANGE = np.iinfo(np.int64).max // 4
CENSUS_OUT_OF_RANGE = CENSUS_SIZE * CENSUS_SIZE  # one more than the largest Hamming distance

# Max cost-volume elements handled per row band during winner selection.
BAND_ELEMENTS = 4_000_000


class Algorithm(str, Enum):
    BLOCK_SAD = "bm"
    SEMI_GLOBAL = "sgm"


@dataclass(frozen=True)
class MatcherConfig:
    algorithm: Algorithm = Algorithm.BLOCK_SAD
    block_size: int = DEFAULT_BLOCK_SIZE
    min_disp: int = 0
    max_disp: int = DEFAULT_MAX_DISP
    sgm_p1: int = SGM_P1
    sgm_p2: int = SGM_P2
    uniqueness_ratio: float = DEFAULT_UNIQUENESS_RATIO
    lr_consistency_px: float = DEFAULT_LR_CONSISTENCY_PX  # None disables the check
    subpixel: bool = True

    def __post_init__(self):
        try:
            object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        except ValueError as e:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}") from e
        if self.block_size < 3 or self.block_size % 2 == 0:
            raise ConfigError(f"block_size must be odd and >= 3, got {self.block_size}")
        if not (0 <= self.min_disp < self.max_disp):
            raise ConfigError(f"need 0 <= min_disp < max_disp, got ({self.min_disp}, {self.max_disp})")
        if self.sgm_p1 < 0 or self.sgm_p2 < 0:
            raise ConfigError(f"SGM penalties must be non-negative, got p1={self.sgm_p1} p2={self.sgm_p2}")
        if self.sgm_p2 <= self.sgm_p1 and not (self.sgm_p1 == 0 and self.sgm_p2 == 0):
            raise ConfigError(f"sgm_p2 must exceed sgm_p1, got p1={self.sgm_p1} p2={self.sgm_p2}")
        if self.uniqueness_ratio < 1.0:
            raise ConfigError(f"uniqueness_ratio must be >= 1.0, got {self.uniqueness_ratio}")
        if self.lr_consistency_px is not None and self.lr_consistency_px < 0:
            raise ConfigError(f"lr_consistency_px must be >= 0, got {self.lr_consistency_px}")

    @property
    def num_disparities(self):
        return self.max_disp - self.min_disp + 1

    @property
    def border_px(self):
        if self.algorithm == Algorithm.SEMI_GLOBAL:
            return CENSUS_SIZE // 2
        return self.block_size // 2

    def to_dict(self):
        return {
            "algorithm": self.algorithm.value,
            "block_size": self.block_size,
            "min_disp": self.min_disp,
            "max_disp": self.max_disp,
            "sgm_p1": self.sgm_p1,
            "sgm_p2": self.sgm_p2,
            "uniqueness_ratio": self.uniqueness_ratio,
            "lr_consistency_px": self.lr_consistency_px,
            "subpixel": self.subpixel,
        }


@dataclass
class DisparityMap:
    values: np.ndarray
    valid: np.ndarray
    disp_range: tuple

    @property
    def valid_count(self):
        return int(self.valid.sum())


@dataclass
class DepthMap:
    values: np.ndarray
    valid: np.ndarray
    rig: object

    @property
    def valid_count(self):
        return int(self.valid.sum())


# ── Preprocessing ────────────────────────────────────────────────────────

def to_gray(image):
    """(H, W, 3) uint8 -> (H, W) uint8 luma, rounded. 2-D input passes through."""
    image = np.asarray(image)
    if image.ndim == 2:
        return image.astype(np.uint8)
    luma = image.astype(np.float64) @ np.asarray(GRAY_WEIGHTS)
    return np.clip(np.rint(luma), 0, 255).astype(np.uint8)


def census_transform(gray, size=CENSUS_SIZE):
    """size x size census: one bit per neighbour, set when the neighbour is darker than the center."""
    if size % 2 == 0 or size < 3 or size * size - 1 > 32:
        raise ConfigError(f"census size must be odd in [3, 5], got {size}")
    half = size // 2
    g = np.asarray(gray, dtype=np.int32)
    h, w = g.shape
    padded = np.pad(g, half, mode="edge")
    codes = np.zeros((h, w), dtype=np.uint32)
    one = np.uint32(1)
    for dy in range(-half, half + 1):
        for dx in range(-half, half + 1):
            if dy == 0 and dx == 0:
                continue
            neighbour = padded[half + dy:half + dy + h, half + dx:half + dx + w]
            codes = np.left_shift(codes, one) | (neighbour < g).astype(np.uint32)
    return codes


def _popcount32(x):
    x = x.astype(np.uint32)
    x = x - ((x >> np.uint32(1)) & np.uint32(0x55555555))
    x = (x & np.uint32(0x33333333)) + ((x >> np.uint32(2)) & np.uint32(0x33333333))
    x = (x + (x >> np.uint32(4))) & np.uint32(0x0F0F0F0F)
    return ((x * np.uint32(0x01010101)) >> np.uint32(24)).astype(np.int32)


def _box_sum(img, size):
    """Exact integer window sums; entries whose window leaves the image stay 0."""
    h, w = img.shape
    half = size // 2
    out = np.zeros((h, w), dtype=np.int64)
    if h < size or w < size:
        return out
    ii = np.zeros((h + 1, w + 1), dtype=np.int64)
    ii[1:, 1:] = img.cumsum(axis=0).cumsum(axis=1)
    out[half:h - half, half:w - half] = (
        ii[size:, size:] - ii[:h - size + 1, size:] - ii[size:, :w - size + 1] + ii[:h - size + 1, :w - size + 1]
    )
    return out


# ── Cost volumes ─────────────────────────────────────────────────────────

def sad_cost_volume(left_gray, right_gray, min_disp, max_disp, block_size):
    """SAD over block_size x block_size windows. Windows leaving either image get SAD_OUT_OF_RANGE."""
    left = np.asarray(left_gray, dtype=np.int64)
    right = np.asarray(right_gray, dtype=np.int64)
    h, w = left.shape
    half = block_size // 2
    volume = np.full((h, w, max_disp - min_disp + 1), SAD_OUT_OF_RANGE, dtype=np.int64)
    for i, d in enumerate(range(min_disp, max_disp + 1)):
        if d + 2 * half >= w:
            break
        diff = np.zeros((h, w), dtype=np.int64)
        diff[:, d:] = np.abs(left[:, d:] - right[:, :w - d])
        box = _box_sum(diff, block_size)
        volume[half:h - half, d + half:w - half, i] = box[half:h - half, d + half:w - half]
    return volume


def census_cost_volume(left_codes, right_codes, min_disp, max_disp):
    """Hamming distance between census codes of L(x) and R(x - d)."""
    h, w = left_codes.shape
    volume = np.full((h, w, max_disp - min_disp + 1), CENSUS_OUT_OF_RANGE, dtype=np.int32)
    for i, d in enumerate(range(min_disp, max_disp + 1)):
        if d >= w:
            break
        volume[:, d:, i] = _popcount32(np.bitwise_xor(left_codes[:, d:], right_codes[:, :w - d]))
    return volume


# ── Semi-global aggregation ──────────────────────────────────────────────

PATHS = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1))


def _path_step(cost, prev, p1, p2):
    """L = C + min(Lprev(d), Lprev(d +- 1) + p1, min Lprev + p2) - min Lprev."""
    min_prev = prev.min(axis=-1, keepdims=True)
    best = prev.copy()
    best[..., 1:] = np.minimum(best[..., 1:], prev[..., :-1] + p1)
    best[..., :-1] = np.minimum(best[..., :-1], prev[..., 1:] + p1)
    best = np.minimum(best, min_prev + p2)
    return cost + best - min_prev


def aggregate_paths(cost, p1=SGM_P1, p2=SGM_P2):
    """Sum of the 8 directional path costs. A path starts (L = C) where its predecessor leaves the image."""
    cost = np.asarray(cost, dtype=np.int32)
    h, w, n_disp = cost.shape
    total = np.zeros((h, w, n_disp), dtype=np.int32)
    for dy, dx in PATHS:
        if dy == 0:
            cols = range(w) if dx == 1 else range(w - 1, -1, -1)
            prev = np.zeros((h, n_disp), dtype=np.int32)
            for x in cols:
                prev = _path_step(cost[:, x, :], prev, p1, p2)
                total[:, x, :] += prev
        else:
            rows = range(h) if dy == 1 else range(h - 1, -1, -1)
            prev = np.zeros((w, n_disp), dtype=np.int32)
            for y in rows:
                if dx == 1:
                    shifted = np.zeros_like(prev)
                    shifted[1:] = prev[:-1]
                elif dx == -1:
                    shifted = np.zeros_like(prev)
                    shifted[:-1] = prev[1:]
                else:
                    shifted = prev
                prev = _path_step(cost[y], shifted, p1, p2)
                total[y] += prev
        logger.debug(f"Aggregated path ({dy}, {dx})")
    return total


# ── Winner selection ─────────────────────────────────────────────────────

def _take(volume, index):
    return np.take_along_axis(volume, index[..., None], axis=2)[..., 0]


def _right_winner(volume, disparities):
    """Right-view winners from the left volume: C_R(x, d) = C_L(x + d, d)."""
    n, w, n_disp = volume.shape
    big = np.iinfo(volume.dtype).max
    right = np.full_like(volume, big)
    for i, d in enumerate(disparities):
        if d < w:
            right[:, :w - d, i] = volume[:, d:, i]
    return np.argmin(right, axis=2)


def _select(volume, cfg):
    """Winner-take-all with uniqueness, sub-pixel and left-right checks for one row band."""
    volume = volume.astype(np.int64)
    n, w, n_disp = volume.shape
    disparities = np.arange(cfg.min_disp, cfg.max_disp + 1)

    best = np.argmin(volume, axis=2)
    best_cost = _take(volume, best)

    masked = volume.copy()
    big = np.iinfo(np.int64).max
    for offset in (-1, 0, 1):
        np.put_along_axis(masked, np.clip(best + offset, 0, n_disp - 1)[..., None], big, axis=2)
    second = masked.min(axis=2)
    valid = best_cost * cfg.uniqueness_ratio < second

    values = (best + cfg.min_disp).astype(np.float64)
    if cfg.subpixel and n_disp >= 3:
        inner = (best > 0) & (best < n_disp - 1)
        centre = np.clip(best, 1, n_disp - 2)
        c0 = _take(volume, centre - 1).astype(np.float64)
        c1 = _take(volume, centre).astype(np.float64)
        c2 = _take(volume, centre + 1).astype(np.float64)
        denom = c0 - 2.0 * c1 + c2
        usable = inner & (denom > 0) & (np.maximum(c0, c2) < SAD_OUT_OF_RANGE)
        delta = np.where(usable, (c0 - c2) / (2.0 * np.where(usable, denom, 1.0)), 0.0)
        values += np.clip(delta, -0.5, 0.5)

    xs = np.arange(w)[None, :]
    x_right = xs - (best + cfg.min_disp)
    valid &= x_right - cfg.border_px >= 0
    if cfg.lr_consistency_px is not None:
        right_best = _right_winner(volume, disparities)
        partner = np.take_along_axis(right_best, np.clip(x_right, 0, w - 1), axis=1)
        valid &= (x_right >= 0) & (np.abs(best - partner) <= cfg.lr_consistency_px)
    return values, valid


def _select_banded(volume, cfg):
    h, w, n_disp = volume.shape
    rows_per_band = max(1, BAND_ELEMENTS // max(1, w * n_disp))
    values = np.empty((h, w), dtype=np.float64)
    valid = np.empty((h, w), dtype=bool)
    for r0 in range(0, h, rows_per_band):
        r1 = min(h, r0 + rows_per_band)
        values[r0:r1], valid[r0:r1] = _select(volume[r0:r1], cfg)
    return values, valid


# ── Operations ──────────────────────────────────────────────────────────

def _check_frame(frame, cfg):
    if cfg.block_size > frame.width or cfg.block_size > frame.height:
        raise ConfigError(f"block_size {cfg.block_size} exceeds image {frame.width}x{frame.height}")
    if cfg.max_disp >= frame.width:
        raise ConfigError(f"max_disp {cfg.max_disp} must be below image width {frame.width}")


def match(frame, cfg=None):
    """Dense left-view disparity for a rectified StereoFrame."""
    cfg = cfg or MatcherConfig()
    _check_frame(frame, cfg)
    left = to_gray(frame.left)
    right = to_gray(frame.right)
    h, w = left.shape

    if cfg.algorithm == Algorithm.BLOCK_SAD:
        # SAD windows are row-local, so bands of rows (plus a block halo) are independent.
        half = cfg.block_size // 2
        rows_per_band = max(1, BAND_ELEMENTS // max(1, w * cfg.num_disparities))
        values = np.empty((h, w), dtype=np.float64)
        valid = np.zeros((h, w), dtype=bool)
        for r0 in range(0, h, rows_per_band):
            r1 = min(h, r0 + rows_per_band)
            s0, s1 = max(0, r0 - half), min(h, r1 + half)
            volume = sad_cost_volume(left[s0:s1], right[s0:s1], cfg.min_disp, cfg.max_disp, cfg.block_size)
            band_values, band_valid = _select(volume[r0 - s0:r1 - s0], cfg)
            values[r0:r1], valid[r0:r1] = band_values, band_valid
    else:
        costs = census_cost_volume(census_transform(left), census_transform(right), cfg.min_disp, cfg.max_disp)
        volume = aggregate_paths(costs, cfg.sgm_p1, cfg.sgm_p2)
        values, valid = _select_banded(volume, cfg)

    border = cfg.border_px
    if border:
        valid[:border, :] = False
        valid[h - border:, :] = False
        valid[:, :border] = False
        valid[:, w - border:] = False
    values = np.where(valid, values, INVALID)
    logger.info(f"Matched {w}x{h} with {cfg.algorithm.value}, disparities {cfg.min_disp}-{cfg.max_disp}: "
                f"{int(valid.sum())} valid pixels")
    return DisparityMap(values, valid, (cfg.min_disp, cfg.max_disp))


def to_depth(disp, rig):
    """Z = f*b / disparity. Disparities at or below the near-infinity cutoff become invalid."""
    if disp.values.shape != rig.shape:
        raise ConfigError(f"disparity map {disp.values.shape} does not match rig {rig.shape}")
    valid = disp.valid & (disp.values > NEAR_INFINITY_DISPARITY_PX)
    safe = np.where(valid, disp.values, 1.0)
    values = np.where(valid, rig.focal_length_px * rig.baseline_m / safe, INVALID)
    return DepthMap(values, valid, rig)


def to_point_cloud(depth, rig=None):
    """Back-project every valid pixel into the left-camera frame. Returns an (N, 3) array in meters."""
    rig = rig or depth.rig
    rows, cols = np.nonzero(depth.valid)
    if rows.size == 0:
        return np.empty((0, 3), dtype=np.float64)
    x, y, z = back_project(rig, rows.astype(np.float64), cols.astype(np.float64), depth.values[rows, cols])
    return np.column_stack([x, y, z])


def auto_disparity_range(rig, geo=None, background_depth_m=None, margin_px=8, block_size=DEFAULT_BLOCK_SIZE):
    """Search range covering the background and every attack disparity that could be matched."""
    f, b = rig.focal_length_px, rig.baseline_m
    candidates = [float(DEFAULT_MAX_DISP) - margin_px]
    if background_depth_m:
        candidates.append(f * b / background_depth_m)
    if geo is not None:
        candidates.append(f * b / geo.distance_m)
        for pred in predict_fake_depth(rig, geo):
            if pred.depth_m > 0 and math.isfinite(pred.depth_m):
                candidates.append(f * b / pred.depth_m)
    max_disp = int(math.ceil(max(candidates))) + margin_px
    cap = rig.image_width_px - block_size - 1
    if max_disp > cap:
        logger.warning(f"Disparity range {max_disp} px capped at {cap} px by the image width")
        max_disp = cap
    return 0, max_disp


def prediction_disparity_range(rig, geo, rel_window=SEARCH_WINDOW_FRAC, margin_px=SEARCH_WINDOW_MARGIN_PX,
                               block_size=DEFAULT_BLOCK_SIZE):
    """Narrow search range around the feasible fake disparities only.

    Returns None when nothing is feasible or the window falls outside what the
    image width can match.
    """
    f, b = rig.focal_length_px, rig.baseline_m
    disparities = [f * b / p.depth_m for p in feasible_predictions(predict_fake_depth(rig, geo))]
    if not disparities:
        return None
    lo = max(0, int(math.floor(min(disparities) * (1.0 - rel_window))) - margin_px)
    hi = int(math.ceil(max(disparities) * (1.0 + rel_window))) + margin_px
    hi = min(hi, rig.image_width_px - block_size - 1)
    if lo >= hi:
        logger.info(f"Fake disparity {max(disparities):.1f} px is beyond the matchable range")
        return None
    return lo, hi
