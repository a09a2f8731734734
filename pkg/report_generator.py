#!/usr/bin/env python3
"""
PDF summaries for attack runs and flight simulations.
Charts are drawn with matplotlib (Agg) into a temp dir and embedded with fpdf2.
"""

import logging
import os
import tempfile
import unicodedata
from datetime import datetime

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from fpdf import FPDF

from spoof_constants import (
    ATTACK_PATH_COLOR,
    FAKE_BLOB_COLOR,
    INJECTION_SPAN_COLOR,
    LAB_DARK,
    LAB_DARK_BLUE,
    LAB_ELECTRIC_BLUE,
    LAB_GRAY,
    LAB_LIGHT_BLUE,
    LAB_RED_LIGHT,
    LAB_WHITE,
    OA_THRESHOLD_M,
    TRUE_PATH_COLOR,
)

logger = logging.getLogger(__name__)


def sanitize_for_pdf(text):
    if not text or not isinstance(text, str):
        return str(text) if text else ""
    replacements = {
        '–': '-', '—': '--', '‘': "'", '’': "'",
        '“': '"', '”': '"', '…': '...', '±': '+/-',
        '≤': '<=', '≥': '>=', '∞': 'inf', '·': '*',
    }
    for char, replacement in replacements.items():
        text = text.replace(char, replacement)
    result = []
    for ch in text:
        try:
            ch.encode('latin-1')
            result.append(ch)
        except UnicodeEncodeError:
            decomposed = unicodedata.normalize('NFKD', ch)
            ascii_chars = decomposed.encode('ascii', 'ignore').decode('ascii')
            result.append(ascii_chars if ascii_chars else '?')
    return ''.join(result)


def _fmt(value, unit=""):
    if value is None:
        return "N/A"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        if not np.isfinite(value):
            return "N/A" if np.isnan(value) else "inf"
        return f"{value:.3f}{unit}"
    return f"{value}{unit}"


# ── Charts ─────────────────────────────────────────────────────────────────

def create_attack_chart(run, tmpdir):
    """Left image, disparity map and depth map side by side; the fake-depth blob centroid is marked."""
    depth_map = run.depth
    disp = np.where(run.disparity.valid, run.disparity.values, np.nan)
    depth = np.where(depth_map.valid, depth_map.values, np.nan)

    fig, (ax1, ax2, ax3) = plt.subplots(1, 3, figsize=(15, 4))
    ax1.imshow(run.frame.left)
    ax1.set_title("Left camera")
    im2 = ax2.imshow(disp, cmap="viridis")
    ax2.set_title("Disparity (px)")
    fig.colorbar(im2, ax=ax2, fraction=0.046)
    im3 = ax3.imshow(depth, cmap="magma_r", vmin=0, vmax=max(OA_THRESHOLD_M * 2, np.nanmax(depth) if np.isfinite(depth).any() else 1.0))
    ax3.set_title("Depth (m)")
    fig.colorbar(im3, ax=ax3, fraction=0.046)

    report = run.report
    if report.detected and report.blob_center is not None:
        col = report.blob_center.u + depth_map.rig.cx
        row = report.blob_center.v + depth_map.rig.cy
        for ax in (ax1, ax2, ax3):
            ax.plot(col, row, marker="o", markersize=14, markerfacecolor="none",
                    markeredgecolor=FAKE_BLOB_COLOR, markeredgewidth=2)
    for ax in (ax1, ax2, ax3):
        ax.axis("off")

    plt.tight_layout()
    path = os.path.join(tmpdir, "attack.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def create_trajectory_chart(traj, tmpdir, baseline=None):
    """Top view of the path (top) and forward / lateral velocity over time with injection spans (bottom)."""
    from flightsim import ObservationSource, body_axes

    forward, right = body_axes(traj.scenario.heading_rad)
    t = np.array([p.t for p in traj.points])
    pos = np.array([p.state.position for p in traj.points])
    vel = np.array([p.state.velocity for p in traj.points])
    injected = np.array([p.observation.source == ObservationSource.MANIPULATED for p in traj.points])

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(11, 10))

    if baseline is not None:
        base = np.array([p.state.position for p in baseline.points])
        ax1.plot(base[:, 0], base[:, 1], color=TRUE_PATH_COLOR, linewidth=2, label="No attack")
    ax1.plot(pos[:, 0], pos[:, 1], color=ATTACK_PATH_COLOR, linewidth=2, label="Under injection")
    ax1.plot(pos[0, 0], pos[0, 1], marker="s", color="#003366", label="Start")
    for ob in traj.scenario.obstacles:
        ax1.add_patch(plt.Circle((ob.x, ob.y), ob.radius, color="#A5A5A5", alpha=0.6))
    ax1.set_xlabel("East (m)")
    ax1.set_ylabel("North (m)")
    ax1.set_title(f"{traj.scenario.name} - Top View")
    ax1.set_aspect("equal", adjustable="datalim")
    ax1.legend(loc="upper left", fontsize=8)

    ax2.plot(t, vel @ forward, color="#003366", linewidth=1.5, label="Forward velocity")
    ax2.plot(t, vel @ right, color=ATTACK_PATH_COLOR, linewidth=1.5, label="Lateral velocity (right +)")
    ax2.axhline(y=0, color="gray", linewidth=0.8, linestyle=":")
    # Shade each contiguous run of manipulated observations.
    edges = np.flatnonzero(np.diff(np.concatenate([[0], injected.astype(int), [0]])))
    for start, stop in zip(edges[::2], edges[1::2]):
        ax2.axvspan(t[start], t[min(stop, len(t) - 1)], color=INJECTION_SPAN_COLOR, alpha=0.6, linewidth=0)
    ax2.set_xlabel("Time (s)")
    ax2.set_ylabel("Velocity (m/s)")
    ax2.set_title("Velocity Response (shaded: depth injection active)")
    ax2.legend(loc="upper right", fontsize=8)

    plt.tight_layout()
    path = os.path.join(tmpdir, "trajectory.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


# ── PDF Report Class ──────────────────────────────────────────────────────

class LabReportPDF(FPDF):
    title_text = "Stereo Depth Spoofing Lab"

    def header(self):
        self.set_font("Helvetica", "B", 11)
        self.set_text_color(*LAB_DARK_BLUE)
        self.cell(0, 8, self.title_text, ln=True, align="L")
        self.set_draw_color(*LAB_ELECTRIC_BLUE)
        self.set_line_width(0.5)
        page_w = self.w - self.r_margin
        self.line(10, self.get_y(), page_w, self.get_y())
        self.ln(4)

    def footer(self):
        self.set_y(-15)
        self.set_font("Helvetica", "I", 8)
        self.set_text_color(*LAB_GRAY)
        self.cell(0, 10,
                  f"Page {self.page_no()}/{{nb}}  |  Generated {datetime.now().strftime('%m/%d/%Y')}",
                  align="C")

    def key_value_table(self, title, rows, highlight=None):
        """Two-column table; rows whose key is in `highlight` get a light red fill."""
        highlight = highlight or set()
        self.set_font("Helvetica", "B", 13)
        self.set_text_color(*LAB_DARK_BLUE)
        self.cell(0, 9, sanitize_for_pdf(title), ln=True)
        self.set_font("Helvetica", "B", 9)
        self.set_fill_color(*LAB_DARK_BLUE)
        self.set_text_color(*LAB_WHITE)
        self.cell(80, 6, "Field", fill=True, border=1)
        self.cell(0, 6, "Value", fill=True, border=1, ln=True)
        self.set_font("Helvetica", "", 9)
        for i, (key, value) in enumerate(rows):
            if key in highlight:
                self.set_fill_color(*LAB_RED_LIGHT)
            else:
                self.set_fill_color(*(LAB_LIGHT_BLUE if i % 2 else LAB_WHITE))
            self.set_text_color(*LAB_DARK)
            self.cell(80, 6, sanitize_for_pdf(str(key)), fill=True, border=1)
            self.cell(0, 6, sanitize_for_pdf(str(value)), fill=True, border=1, ln=True)
        self.ln(4)

    def add_chart(self, chart_path, title):
        if chart_path and os.path.exists(chart_path):
            self.add_page()
            self.set_font("Helvetica", "B", 14)
            self.set_text_color(*LAB_DARK_BLUE)
            self.cell(0, 10, sanitize_for_pdf(title), ln=True)
            self.ln(2)
            chart_w = self.w - self.l_margin - self.r_margin
            self.image(chart_path, x=self.l_margin, w=chart_w)


def _new_pdf(title):
    pdf = LabReportPDF()
    pdf.alias_nb_pages()
    pdf.set_auto_page_break(auto=True, margin=20)
    pdf.add_page()
    pdf.set_font("Helvetica", "B", 20)
    pdf.set_text_color(*LAB_DARK_BLUE)
    pdf.cell(0, 14, sanitize_for_pdf(title), ln=True)
    pdf.ln(2)
    return pdf


# ── Report Generators ─────────────────────────────────────────────────────

def generate_attack_pdf(run, rig, geo, out_path):
    """One-page attack summary plus the image/disparity/depth chart."""
    tmpdir = tempfile.mkdtemp(prefix="attack_report_")
    report = run.report
    pdf = _new_pdf("Attack Run Summary")

    setup = [
        ("Focal length", f"{rig.focal_length_px:g} px"),
        ("Baseline", f"{rig.baseline_m:g} m"),
        ("Image", f"{rig.image_width_px}x{rig.image_height_px}"),
        ("Matcher", run.matcher.algorithm.value),
        ("Disparity range", f"{run.matcher.min_disp}-{run.matcher.max_disp} px"),
    ]
    if geo is not None:
        setup += [
            ("Pattern / mode", f"{geo.pattern.value} / {geo.mode.value}"),
            ("Source separation d", f"{geo.separation_m:g} m"),
            ("Attack distance z", f"{geo.distance_m:g} m"),
        ]
    else:
        setup.append(("Attack", "none (clean scene)"))
    pdf.key_value_table("Setup", setup)

    predicted = report.predicted
    results = [
        ("Fake depth detected", _fmt(report.detected)),
        ("Blob area", _fmt(report.blob_area_px, " px")),
        ("Measured depth", _fmt(report.measured_depth_m, " m")),
        ("Predicted source", predicted.source.value if predicted else "N/A"),
        ("Predicted depth", _fmt(predicted.depth_m, " m") if predicted else "N/A"),
        ("Prediction status", predicted.reason.value if predicted else "N/A"),
        ("Relative error", _fmt(report.relative_error)),
        ("OA triggered (< 6 m)", _fmt(report.success)),
        ("Saturation verdict", run.saturation.verdict.value),
        ("Saturated fraction", f"{run.saturation.flagged_fraction * 100:.3f}%"),
    ]
    pdf.key_value_table("Result", results, highlight={"OA triggered (< 6 m)"} if report.success else None)

    pdf.add_chart(create_attack_chart(run, tmpdir), "Left Image, Disparity and Depth")
    pdf.output(out_path)
    logger.info(f"Wrote attack report {out_path}")
    return out_path


def generate_sim_pdf(traj, summary, out_path, baseline=None):
    tmpdir = tempfile.mkdtemp(prefix="sim_report_")
    sc = traj.scenario
    pdf = _new_pdf(f"Flight Simulation: {sc.name}")
    pdf.key_value_table("Scenario", [
        ("Mode", sc.mode.value),
        ("Duration", f"{sc.duration_s:g} s"),
        ("Time step", f"{sc.dt_s:g} s"),
        ("Injection events", len(sc.schedule.events)),
        ("Repeat period", _fmt(sc.schedule.repeat_period_s, " s")),
    ])
    pdf.key_value_table("Summary", [(k.replace("_", " "), _fmt(v)) for k, v in summary.items()])
    pdf.add_chart(create_trajectory_chart(traj, tmpdir, baseline), "Trajectory")
    pdf.output(out_path)
    logger.info(f"Wrote simulation report {out_path}")
    return out_path
