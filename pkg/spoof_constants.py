"""
Constants and lookup tables for the stereo spoofing lab.
Kept apart from the modules that use them so experiments can tune one place.
"""

# ── Default victim rig ──────────────────────────────────────────────────
# Baseline that puts a d=1 m, z=4 m X-shape fake depth at 0.43 m.
# Focal length and pixel pitch are assumptions, not vendor values.
DEFAULT_FOCAL_LENGTH_PX = 700.0
DEFAULT_BASELINE_M = 0.12
DEFAULT_IMAGE_WIDTH_PX = 640
DEFAULT_IMAGE_HEIGHT_PX = 360
DEFAULT_PIXEL_PITCH_M = 3e-6

# ── Attack defaults ─────────────────────────────────────────────────────
DEFAULT_SEPARATION_M = 1.0
DEFAULT_INTENSITY_PRIMARY = 1.0
DEFAULT_INTENSITY_SECONDARY = 0.55
TRIANGLE_JITTER = 0.05

# ── Obstacle avoidance ──────────────────────────────────────────────────
OA_THRESHOLD_M = 6.0
OA_DEPTH_STEP_M = 0.5

# ── Rendering ───────────────────────────────────────────────────────────
MAX_AMBIENT_LUX = 4000.0
# Full-daylight texture range before exposure: above the AE target, below full well.
TEXTURE_MIN = 190.0
TEXTURE_MAX = 254.0
TEXTURE_BLUR_SIGMA_PX = 1.0
DEFAULT_FLAT_DEPTH_M = 20.0

# Glare radius is 12 px at 4 m on the default rig, scaling with f/z.
GLARE_RADIUS_REF_PX = 12.0
GLARE_REF_DISTANCE_M = 4.0
GLARE_MIN_RADIUS_PX = 2.0
# Glare radiance above full well; cores stay clipped after auto exposure.
GLARE_OVERDRIVE = 4.0

ORB_RELATIVE_INTENSITY = 0.8
ORB_RADIUS_RATIO = 0.75
WHITE = (1.0, 1.0, 1.0)
ORB_GREEN = (0.35, 1.0, 0.35)

AE_TARGET_MEAN = 100.0 / 255.0

# ITU-R BT.601 luma weights
GRAY_WEIGHTS = (0.299, 0.587, 0.114)

# ── Matching ────────────────────────────────────────────────────────────
DEFAULT_BLOCK_SIZE = 9
DEFAULT_MAX_DISP = 64
CENSUS_SIZE = 5
SGM_P1 = 8
SGM_P2 = 32
DEFAULT_UNIQUENESS_RATIO = 1.15
DEFAULT_LR_CONSISTENCY_PX = 1.0
NEAR_INFINITY_DISPARITY_PX = 0.1
INVALID = -1.0
# Sweep search window around each predicted disparity: +-10% plus a few pixels.
SEARCH_WINDOW_FRAC = 0.1
SEARCH_WINDOW_MARGIN_PX = 3

# ── Fake-depth detection ────────────────────────────────────────────────
DEVIATION_FRAC = 0.30
MIN_BLOB_AREA_PX = 25
SATURATION_LEVEL = 250
SATURATION_FRAC_THRESHOLD = 0.002
# Disparity tolerance around the prediction; 0.2 bounds the depth error at 25%.
PREDICTION_GATE_FRAC = 0.2
SWEEP_PASS_REL_ERROR = 0.25

# ── Flight simulator ────────────────────────────────────────────────────
SIM_DT_S = 0.02
VELOCITY_TAU_S = 0.3
V_AVOID_MPS = 1.0
MAX_SPEED_MPS = 5.0
SENSOR_RANGE_M = 30.0
SECTOR_HALF_ANGLE_DEG = 45.0
SECTORS = ("forward", "backward", "left", "right")

# ── Report colors (matplotlib hex / fpdf RGB) ───────────────────────────
LAB_DARK_BLUE = (0, 51, 102)
LAB_ELECTRIC_BLUE = (0, 102, 204)
LAB_LIGHT_BLUE = (200, 220, 240)
LAB_RED_LIGHT = (255, 220, 220)
LAB_WHITE = (255, 255, 255)
LAB_GRAY = (128, 128, 128)
LAB_DARK = (40, 40, 40)

FAKE_BLOB_COLOR = "#E88E8E"
TRUE_PATH_COLOR = "#5B9BD5"
ATTACK_PATH_COLOR = "#ED7D31"
INJECTION_SPAN_COLOR = "#FFCCCC"
