"""
Configuration and environment variables for the stereo spoofing lab.
Kept out of stereospoof.py so the library modules can read it too.
"""

import os
import logging

logger = logging.getLogger(__name__)

# ── Output ───────────────────────────────────────────────────────────────
OUTPUT_DIR = os.environ.get("STEREOSPOOF_OUT", "out")

# ── Logging ──────────────────────────────────────────────────────────────
LOG_LEVEL = os.environ.get("STEREOSPOOF_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# ── Sweep workers ────────────────────────────────────────────────────────
try:
    SWEEP_WORKERS = max(1, int(os.environ.get("STEREOSPOOF_WORKERS", os.cpu_count() or 1)))
except ValueError:
    logger.warning(f"Ignoring non-integer STEREOSPOOF_WORKERS={os.environ.get('STEREOSPOOF_WORKERS')!r}")
    SWEEP_WORKERS = os.cpu_count() or 1


def output_dir(override=None):
    """Resolve the output directory: explicit flag, then STEREOSPOOF_OUT, then 'out'.

    Read at call time so tests can monkeypatch the environment.
    """
    if override:
        return override
    return os.environ.get("STEREOSPOOF_OUT", OUTPUT_DIR)


# ── Optional Module Availability ─────────────────────────────────────────
# PDF summaries need matplotlib + fpdf2; the rest of the lab runs without them.

try:
    from report_generator import generate_attack_pdf, generate_sim_pdf  # noqa: F401
    HAS_REPORTS = True
except ImportError as _report_err:
    HAS_REPORTS = False
    logger.warning(f"PDF report module unavailable: {_report_err}")
