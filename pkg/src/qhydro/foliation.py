"""Orthogonality of the S = const and I = const foliations.

g = grad I . grad S (I the dimensionless phase) is taken pointwise from the
log-derivative jet, so it never depends on an unwrapped phase.  2D level sets
come from marching squares; where S- and I-contours cross, the tangent angle
is audited against the angle predicted from the local g.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import kernels
from .errors import ValidationError
from .fields import Grid, masked_max, masked_rms
from .madelung import MadelungFields, PhaseField

FAMILIES = ("S-const", "I-const")
MIN_SCAN_POINTS = 4
ZERO_TOLERANCE = 1e-10


@dataclass
class OrthogonalityReport:
    g_field: np.ndarray = field(repr=False)
    g_max: float
    g_rms: float
    l_scale: float
    scaling_exponent: float | None = None

    @property
    def g_max_dimensionless(self) -> float:
        return self.g_max * self.l_scale ** 2


def gradient_product(fields: MadelungFields) -> np.ndarray:
    """grad I . grad S on the mask, NaN elsewhere."""
    return np.sum(fields.grad_phase * fields.grad_S, axis=0)


def orthogonality_field(fields: MadelungFields) -> OrthogonalityReport:
    if fields.mask.count == 0:
        raise ValidationError("empty mask")
    g = gradient_product(fields)
    return OrthogonalityReport(g, masked_max(g, fields.mask), masked_rms(g, fields.mask), fields.constants.l)


@dataclass
class ScanResult:
    hbar: np.ndarray
    norms: np.ndarray
    slope: float
    stderr: float
    band: tuple[float, float]
    identically_zero: bool
    strictly_decreasing: bool

    def to_dict(self) -> dict:
        return {
            "hbar": self.hbar.tolist(), "g_norms": self.norms.tolist(), "slope": self.slope,
            "stderr": self.stderr, "band": list(self.band), "identically_zero": self.identically_zero,
            "strictly_decreasing": self.strictly_decreasing,
        }


def semiclassical_scan(states, hbar_values, norm: str = "max", confidence: float = 0.95) -> ScanResult:
    """Fit log ||g|| against log hbar over a family of decompositions.

    ``states`` holds one MadelungFields per hbar value.  ``strictly_decreasing``
    means ||g|| shrinks at every step towards smaller hbar, and a positive
    slope means g vanishes as hbar -> 0.  When every norm is below
    ZERO_TOLERANCE the family is flagged identically zero and the slope is NaN.
    """
    states = list(states)
    h = np.asarray(hbar_values, dtype=float)
    if len(states) != len(h):
        raise ValidationError("one state per hbar value is required")
    if len(h) < MIN_SCAN_POINTS:
        raise ValidationError(f"fit underdetermined: need at least {MIN_SCAN_POINTS} hbar values")
    if np.any(h <= 0) or len(np.unique(h)) != len(h):
        raise ValidationError("hbar values must be positive and distinct")
    reports = [orthogonality_field(s) for s in states]
    norms = np.array([r.g_max if norm == "max" else r.g_rms for r in reports])
    order = np.argsort(h)
    h, norms = h[order], norms[order]
    if np.all(norms < ZERO_TOLERANCE):
        return ScanResult(h, norms, float("nan"), float("nan"), (float("nan"), float("nan")), True, False)
    if np.any(norms <= 0):
        raise ValidationError("cannot fit a power law through zero norms")
    fit = stats.linregress(np.log(h), np.log(norms))
    t = stats.t.ppf(0.5 + confidence / 2, len(h) - 2)
    band = (float(fit.slope - t * fit.stderr), float(fit.slope + t * fit.stderr))
    decreasing = bool(np.all(np.diff(norms) > 0))
    for r in reports:
        r.scaling_exponent = float(fit.slope)
    return ScanResult(h, norms, float(fit.slope), float(fit.stderr), band, False, decreasing)


@dataclass
class Polyline:
    level: float
    points: np.ndarray
    closed: bool


@dataclass
class LevelSetBundle:
    family: str
    levels: list[float]
    polylines: list[Polyline]
    grid: Grid
    segments: dict = field(default_factory=dict, repr=False)

    def lines_at(self, level: float) -> list[Polyline]:
        return [p for p in self.polylines if p.level == level]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "segment_id", "x", "y"])
            for sid, p in enumerate(self.polylines):
                for x, y in p.points:
                    w.writerow([repr(p.level), sid, repr(float(x)), repr(float(y))])
        return path


PADDING = ("wrap", "phase", "none")


def _pad(f: np.ndarray, padding: str) -> np.ndarray:
    if padding == "none":
        return f
    if padding == "wrap":
        return np.pad(f, ((0, 1), (0, 1)), mode="wrap")
    if padding == "phase":
        # continue the phase across each seam by the wrapped increment
        for axis in (0, 1):
            first = np.take(f, [0], axis=axis)
            last = np.take(f, [-1], axis=axis)
            f = np.concatenate([f, last + np.angle(np.exp(1j * (first - last)))], axis=axis)
        return f
    raise ValidationError(f"unknown padding {padding!r}")


def _join(segments: np.ndarray, edges: np.ndarray) -> list[tuple[np.ndarray, bool]]:
    """Chain segments sharing an edge id into polylines."""
    owners: dict[int, list[int]] = {}
    for s, (ea, eb) in enumerate(edges.tolist()):
        owners.setdefault(ea, []).append(s)
        owners.setdefault(eb, []).append(s)
    used = np.zeros(len(segments), dtype=bool)

    def other(seg: int, edge: int) -> int | None:
        for t in owners[edge]:
            if t != seg and not used[t]:
                return t
        return None

    def walk(seg: int, edge: int) -> list[tuple[float, float]]:
        # follow the chain leaving ``seg`` through ``edge``
        pts = []
        while True:
            nxt = other(seg, edge)
            if nxt is None:
                return pts
            used[nxt] = True
            ea, eb = edges[nxt]
            x0, y0, x1, y1 = segments[nxt]
            if ea == edge:
                pts.append((x1, y1))
                edge = eb
            else:
                pts.append((x0, y0))
                edge = ea
            seg = nxt

    # start from open ends first so boundary-terminated lines come out whole
    degree = {e: len(v) for e, v in owners.items()}
    starts = [s for s, (ea, eb) in enumerate(edges.tolist()) if degree[ea] == 1 or degree[eb] == 1]
    order = starts + list(range(len(segments)))
    lines = []
    for s in order:
        if used[s]:
            continue
        used[s] = True
        ea, eb = edges[s]
        x0, y0, x1, y1 = segments[s]
        if degree[int(eb)] == 1:  # make the open end the start
            ea, eb, x0, y0, x1, y1 = eb, ea, x1, y1, x0, y0
        forward = walk(s, int(eb))
        closed = bool(forward) and forward[-1] == (x0, y0)
        backward = [] if closed else walk(s, int(ea))
        pts = backward[::-1] + [(x0, y0), (x1, y1)] + forward
        lines.append((np.array(pts, dtype=float), closed))
    return lines


def _to_physical(points: np.ndarray, grid: Grid) -> np.ndarray:
    return np.asarray(grid.origin) + points * np.asarray(grid.spacing)


def _level_segments(fp: np.ndarray, level: float):
    segs, cells, edges = kernels.marching_squares(fp, float(level))
    nx, ny = fp.shape
    finite = np.isfinite(fp)
    good_cell = (finite[:-1, :-1] & finite[1:, :-1] & finite[1:, 1:] & finite[:-1, 1:]).reshape(-1)
    keep = good_cell[cells] if len(cells) else np.zeros(0, dtype=bool)
    return segs[keep], cells[keep], edges[keep]


def extract_level_sets(
    f: np.ndarray,
    grid: Grid,
    levels,
    family: str = "S-const",
    padding: str | None = None,
    phase: PhaseField | None = None,
    nonintegrability_tolerance: float = 1e-8,
) -> LevelSetBundle:
    """Marching-squares contours of a 2D field in physical coordinates.

    Off-mask samples (NaN) are skipped cell by cell.  ``padding`` defaults to
    periodic wrap for S and phase-continuous wrap for I.  For the I family a
    PhaseField may be passed; a vortex (nonintegrability above tolerance) is
    rejected because I is then not single valued.
    """
    if grid.dim != 2:
        raise ValidationError("level sets need a 2D grid")
    if family not in FAMILIES:
        raise ValidationError(f"unknown family {family!r}")
    if family == "I-const" and phase is not None:
        if phase.nonintegrability >= nonintegrability_tolerance:
            raise ValidationError(f"vortex defect: phase nonintegrability {phase.nonintegrability:.3g}")
        f = phase.I
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValidationError("field does not match grid")
    padding = padding or ("wrap" if family == "S-const" else "phase")
    fp = _pad(f, padding)
    levels = [float(v) for v in np.atleast_1d(levels)]
    polylines, raw = [], {}
    for level in levels:
        segs, cells, edges = _level_segments(fp, level)
        raw[level] = (segs, cells)
        for pts, closed in _join(segs, edges):
            polylines.append(Polyline(level, _to_physical(pts, grid), closed))
    return LevelSetBundle(family, levels, polylines, grid, raw)


def extract_slice(f: np.ndarray, axis: int, index: int) -> np.ndarray:
    """2D slice of a 3D field normal to ``axis`` at grid ``index``."""
    f = np.asarray(f)
    if f.ndim != 3:
        raise ValidationError("slice extraction needs a 3D field")
    return np.take(f, index, axis=axis)


def _bilinear(values: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Values at fractional index points with periodic wrap."""
    nx, ny = values.shape[-2:]
    i0 = np.floor(p[:, 0]).astype(int)
    j0 = np.floor(p[:, 1]).astype(int)
    tx, ty = p[:, 0] - i0, p[:, 1] - j0
    i1, j1 = (i0 + 1) % nx, (j0 + 1) % ny
    i0, j0 = i0 % nx, j0 % ny
    v = values
    return (v[..., i0, j0] * (1 - tx) * (1 - ty) + v[..., i1, j0] * tx * (1 - ty)
            + v[..., i0, j1] * (1 - tx) * ty + v[..., i1, j1] * tx * ty)


@dataclass
class CrossingAudit:
    points: np.ndarray = field(repr=False)
    measured_deg: np.ndarray = field(repr=False)
    predicted_deg: np.ndarray = field(repr=False)
    local_g: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return len(self.measured_deg)

    @property
    def max_prediction_error(self) -> float:
        return float(np.max(np.abs(self.measured_deg - self.predicted_deg))) if self.count else 0.0

    def max_deviation_where(self, g_l2_below: float, l_scale: float = 1.0) -> tuple[float, int]:
        """Largest |angle - 90| among crossings with |g| l^2 below the threshold, and their count."""
        sel = np.abs(self.local_g) * l_scale ** 2 < g_l2_below
        if not np.any(sel):
            return 0.0, 0
        return float(np.max(np.abs(self.measured_deg[sel] - 90.0))), int(np.sum(sel))

    def summary(self, g_l2_below: float = 0.01, l_scale: float = 1.0) -> dict:
        dev, n_sel = self.max_deviation_where(g_l2_below, l_scale)
        out = {"crossings": self.count, "max_prediction_error_deg": self.max_prediction_error,
               "g_l2_threshold": g_l2_below, "crossings_below_threshold": n_sel,
               "max_deviation_below_threshold_deg": dev}
        if self.count:
            d = np.abs(self.measured_deg - 90.0)
            out.update({"mean_deviation_deg": float(d.mean()), "max_deviation_deg": float(d.max())})
        return out


def _tangent_angles(seg_a, seg_b, h) -> np.ndarray:
    ta = (seg_a[:, 2:] - seg_a[:, :2]) * h
    tb = (seg_b[:, 2:] - seg_b[:, :2]) * h
    cos = np.abs(np.sum(ta * tb, axis=1)) / (np.linalg.norm(ta, axis=1) * np.linalg.norm(tb, axis=1))
    return np.degrees(np.arccos(np.clip(cos, 0.0, 1.0)))


def crossing_audit(fields: MadelungFields, s_levels, i_levels, phase: PhaseField) -> CrossingAudit:
    """Angles at which S- and I-contours cross, against the local-g prediction.

    The tangent angle equals the angle between grad S and grad I, so its
    predicted value is arccos(|g| / (|grad I| |grad S|)).
    """
    grid = fields.grid
    s_bundle = extract_level_sets(fields.S, grid, s_levels, "S-const")
    i_bundle = extract_level_sets(phase.I, grid, i_levels, "I-const", phase=phase)
    h = np.asarray(grid.spacing)
    gS = np.nan_to_num(fields.grad_S)
    gI = np.nan_to_num(fields.grad_phase)
    pts_all, meas, pred, gloc = [], [], [], []
    for ls in s_bundle.levels:
        sa, ca = s_bundle.segments[ls]
        for li in i_bundle.levels:
            sb, cb = i_bundle.segments[li]
            if not len(sa) or not len(sb):
                continue
            pts, ia, ib = kernels.segment_crossings(sa, ca, sb, cb)
            if not len(pts):
                continue
            meas.append(_tangent_angles(sa[ia], sb[ib], h))
            a = _bilinear(gS, pts)
            b = _bilinear(gI, pts)
            g = np.sum(a * b, axis=0)
            norm = np.linalg.norm(a, axis=0) * np.linalg.norm(b, axis=0)
            with np.errstate(invalid="ignore", divide="ignore"):
                pred.append(np.degrees(np.arccos(np.clip(np.abs(g) / norm, 0.0, 1.0))))
            gloc.append(g)
            pts_all.append(_to_physical(pts, grid))
    if not meas:
        empty = np.zeros(0)
        return CrossingAudit(np.zeros((0, 2)), empty, empty, empty)
    return CrossingAudit(np.concatenate(pts_all), np.concatenate(meas), np.concatenate(pred), np.concatenate(gloc))


def write_summary(path, audit: CrossingAudit, bundles=(), extra: dict | None = None, l_scale: float = 1.0) -> Path:
    path = Path(path)
    doc = {"crossing_angles": audit.summary(l_scale=l_scale),
           "level_sets": [{"family": b.family, "levels": b.levels, "polylines": len(b.polylines)} for b in bundles]}
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return path
