"""Shared fixtures. Modules live flat at the repo root, so put it on sys.path."""

import os
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from geometry import StereoRig, default_rig  # noqa: E402


@pytest.fixture
def rig():
    """640x360, f=700 px, b=0.12 m."""
    return default_rig()


@pytest.fixture
def small_rig():
    """Half-resolution rig for the semi-global matcher, whose full cost volume is held in memory."""
    return StereoRig(focal_length_px=350.0, baseline_m=0.12, image_width_px=320, image_height_px=180)


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    path = tmp_path / "out"
    monkeypatch.setenv("STEREOSPOOF_OUT", str(path))
    return path
