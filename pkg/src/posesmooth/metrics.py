"""Position, Procrustes-aligned position and acceleration errors."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, ConfigError, ShapeError
from .numerics import svd_small_batch

log = logging.getLogger(__name__)

WORST_FRACTION = 0.01


def _joints(x):
    """Accept a PoseSequence or an array of shape (L, N, D)."""
    if hasattr(x, "joints"):
        return x.joints()
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"expected (L, N, D) joints, got shape {arr.shape}")
    return arr


def _pair(pred, gt):
    p, g = _joints(pred), _joints(gt)
    if p.shape != g.shape:
        raise ShapeError(f"prediction {p.shape} and ground truth {g.shape} differ")
    return p, g


def mpjpe(pred, gt):
    """Returns ``(mean, per_frame)``: per frame, the mean joint Euclidean error."""
    p, g = _pair(pred, gt)
    per_frame = np.linalg.norm(p - g, axis=2).mean(axis=1)
    return float(per_frame.mean()), per_frame


def procrustes_transform(pred_frame, gt_frame):
    """Similarity transform ``(scale, rot, trans)`` best mapping ``pred_frame``
    onto ``gt_frame`` (both N x D); apply as ``scale * pred @ rot.T + trans``."""
    s, r, t, ok = _procrustes_batch(np.asarray(pred_frame, dtype=np.float64)[None],
                                    np.asarray(gt_frame, dtype=np.float64)[None])
    if not ok[0]:
        raise AlignmentError("cannot align a frame whose joints all coincide")
    return float(s[0]), r[0], t[0]


def procrustes_align(pred_frame, gt_frame):
    scale, rot, trans = procrustes_transform(pred_frame, gt_frame)
    return scale * np.asarray(pred_frame) @ rot.T + trans


def _procrustes_batch(p, g):
    nb, n, d = p.shape
    if d not in (2, 3):
        raise ShapeError(f"Procrustes alignment needs 2-D or 3-D joints, got D={d}")
    if n < d:
        raise ShapeError(f"Procrustes alignment needs at least {d} joints, got {n}")
    mu_p = p.mean(axis=1, keepdims=True)
    mu_g = g.mean(axis=1, keepdims=True)
    x = p - mu_p
    y = g - mu_g
    var = np.einsum("bnd,bnd->b", x, x)
    ok = var > 1e-20 * np.maximum(np.einsum("bnd,bnd->b", p, p), 1e-300)
    ok &= var > 0
    cov = np.einsum("bni,bnj->bij", x, y)
    u, sv, vt = svd_small_batch(cov)
    v = np.transpose(vt, (0, 2, 1))
    ut = np.transpose(u, (0, 2, 1))
    z = np.ones((nb, d))
    z[:, -1] = np.sign(np.linalg.det(v @ ut))
    z[z == 0] = 1.0
    rot = v @ (z[:, :, None] * ut)
    scale = np.einsum("bd,bd->b", sv, z) / np.where(ok, var, 1.0)
    trans = mu_g[:, 0, :] - scale[:, None] * np.einsum("bij,bj->bi", rot, mu_p[:, 0, :])
    return scale, rot, trans, ok


def pa_mpjpe(pred, gt, return_per_frame=False):
    """MPJPE after per-frame similarity alignment; degenerate frames are skipped."""
    p, g = _pair(pred, gt)
    scale, rot, trans, ok = _procrustes_batch(p, g)
    aligned = scale[:, None, None] * np.einsum("bnj,bij->bni", p, rot) + trans[:, None, :]
    per_frame = np.linalg.norm(aligned - g, axis=2).mean(axis=1)
    if not ok.all():
        log.warning("pa_mpjpe: skipped %d degenerate frame(s): %s",
                    int((~ok).sum()), np.nonzero(~ok)[0][:10].tolist())
        per_frame = np.where(ok, per_frame, np.nan)
    value = float(np.nanmean(per_frame)) if ok.any() else math.nan
    return (value, per_frame) if return_per_frame else value


def accel_error(pred, gt):
    """Returns ``(mean, per_frame)`` with ``per_frame`` of length L-2."""
    p, g = _pair(pred, gt)
    if p.shape[0] < 3:
        raise ShapeError(f"acceleration error needs at least 3 frames, got {p.shape[0]}")
    acc_p = p[2:] - 2.0 * p[1:-1] + p[:-2]
    acc_g = g[2:] - 2.0 * g[1:-1] + g[:-2]
    per_frame = np.linalg.norm(acc_p - acc_g, axis=2).mean(axis=1)
    return float(per_frame.mean()), per_frame


def worst_count(n, fraction):
    return max(1, math.ceil(fraction * n - 1e-9))


def worst_percent(per_frame, fraction=WORST_FRACTION, companion=None):
    """Mean of the ``ceil(fraction * n)`` largest values.

    When ``companion`` (same length, NaN where undefined) is given, also
    returns its mean over the same frame indices, ignoring NaN entries.
    """
    values = np.asarray(per_frame, dtype=np.float64)
    if values.size == 0:
        raise ConfigError("worst_percent of an empty series")
    if not 0.0 < fraction <= 1.0:
        raise ConfigError("fraction must lie in (0, 1]")
    idx = np.argsort(-values, kind="stable")[:worst_count(values.size, fraction)]
    worst = float(values[idx].mean())
    if companion is None:
        return worst, None
    comp = np.asarray(companion, dtype=np.float64)
    if comp.shape != values.shape:
        raise ShapeError("companion series must match the main series length")
    picked = comp[idx]
    picked = picked[~np.isnan(picked)]
    return worst, (float(picked.mean()) if picked.size else math.nan)


@dataclass
class MetricsReport:
    mpjpe: float
    pa_mpjpe: float
    accel: float
    mpjpe_worst1: float
    accel_worst1: float
    per_frame_mpjpe: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    per_frame_accel: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    units: str = "unitless"

    SCALAR_FIELDS = ("mpjpe", "pa_mpjpe", "accel", "mpjpe_worst1", "accel_worst1")

    def scalars(self):
        return {k: getattr(self, k) for k in self.SCALAR_FIELDS}

    def to_dict(self, per_frame=True):
        d = {k: _json_float(v) for k, v in self.scalars().items()}
        d["units"] = self.units
        if per_frame:
            d["per_frame_mpjpe"] = [float(v) for v in self.per_frame_mpjpe]
            d["per_frame_accel"] = [float(v) for v in self.per_frame_accel]
        return d

    def csv_header(self):
        return ",".join(self.SCALAR_FIELDS + ("units",))

    def csv_row(self):
        return ",".join([format(v, ".17g") for v in self.scalars().values()] + [self.units])


def _json_float(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)


def evaluate(pred, gt, accel_worst_mode="corresponding", units=None):
    """Full report. ``accel_worst_mode`` is ``"corresponding"`` (Accel at the
    worst-MPJPE frames) or ``"independent"`` (worst 1% of Accel itself)."""
    p, g = _pair(pred, gt)
    m, per_m = mpjpe(p, g)
    a, per_a = accel_error(p, g)
    pa = pa_mpjpe(p, g) if p.shape[2] in (2, 3) and p.shape[1] >= p.shape[2] else math.nan
    # accel frame k is centred on sequence frame k + 1
    accel_by_frame = np.concatenate([[np.nan], per_a, [np.nan]])
    if accel_worst_mode == "corresponding":
        m1, a1 = worst_percent(per_m, WORST_FRACTION, accel_by_frame)
    elif accel_worst_mode == "independent":
        m1, _ = worst_percent(per_m, WORST_FRACTION)
        a1, _ = worst_percent(per_a, WORST_FRACTION)
    else:
        raise ConfigError(f"unknown accel_worst_mode {accel_worst_mode!r}")
    if units is None:
        units = getattr(gt, "units", "unitless")
    return MetricsReport(m, pa, a, m1, a1, per_m, per_a, units)


def aggregate(reports):
    """Unweighted mean of the scalar fields over several sequences."""
    if not reports:
        raise ConfigError("cannot aggregate zero reports")
    vals = {k: float(np.nanmean([getattr(r, k) for r in reports]))
            if not all(math.isnan(getattr(r, k)) for r in reports) else math.nan
            for k in MetricsReport.SCALAR_FIELDS}
    return MetricsReport(**vals, units=reports[0].units)
