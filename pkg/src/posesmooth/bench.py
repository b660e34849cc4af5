"""Method comparison tables: learned model vs. low-pass filters."""
import csv
import io
import math
import time
from dataclasses import dataclass, field

from . import metrics
from .filters import FilterSpec, apply_filter
from .windowing import smooth_sequence

DEFAULT_WINDOW = 32


@dataclass
class BenchRow:
    method: str
    accel: float
    mpjpe: float
    pa_mpjpe: float
    throughput: float
    extra: dict = field(default_factory=dict)


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    units: str = "unitless"

    def row(self, method):
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "accel", "mpjpe", "pa_mpjpe", "throughput_windows_per_s"])
        for r in self.rows:
            w.writerow([r.method] + [_full(v) for v in (r.accel, r.mpjpe, r.pa_mpjpe, r.throughput)])
        return buf.getvalue()

    def to_markdown(self):
        lines = [
            "| Method | Accel | MPJPE | PA-MPJPE | Windows/s |",
            "|---|---:|---:|---:|---:|",
        ]
        for r in self.rows:
            cells = [_fmt2(v) for v in (r.accel, r.mpjpe, r.pa_mpjpe)]
            tp = "-" if math.isnan(r.throughput) else f"{r.throughput:.0f}"
            lines.append(f"| {r.method} | " + " | ".join(cells) + f" | {tp} |")
        lines.append("")
        lines.append(f"Units: {self.units} (Accel per frame^2).")
        return "\n".join(lines) + "\n"


def _full(v):
    return "" if v is None or math.isnan(v) else repr(float(v))


def _fmt2(v):
    return "-" if v is None or math.isnan(v) else f"{v:.2f}"


def _score(outputs, pairs):
    return metrics.aggregate([metrics.evaluate(o, p.clean) for o, p in zip(outputs, pairs)])


def _windows_equivalent(pairs, window_t):
    return sum(max(p.noisy.length - window_t + 1, 1) for p in pairs)


def _timed(fn, pairs):
    t0 = time.perf_counter()
    outs = [fn(p.noisy) for p in pairs]
    return outs, time.perf_counter() - t0


def run_bench(test_pairs, model=None, filters=(), step_s=1, model_label="smoothnet",
              scale=1.0):
    """Evaluate the noisy input, the model (if any) and every filter.

    Throughput is expressed in model-sized windows per second so filters and
    the model are comparable. ``scale`` multiplies every reported error
    (e.g. 1000 for metres -> mm).
    """
    window_t = model.config.window_t if model is not None else DEFAULT_WINDOW
    n_windows = _windows_equivalent(test_pairs, window_t)
    units = test_pairs[0].clean.units if scale == 1.0 else f"{test_pairs[0].clean.units}*{scale:g}"
    report = BenchReport(units=units)

    def add(name, outs, seconds):
        agg = _score(outs, test_pairs)
        tp = n_windows / seconds if seconds and seconds > 0 else math.nan
        report.rows.append(BenchRow(name, agg.accel * scale, agg.mpjpe * scale,
                                    agg.pa_mpjpe * scale, tp))

    # the raw input is timed as an identity pass so every row has a throughput
    outs, secs = _timed(lambda s: s.with_frames(s.frames.copy()), test_pairs)
    add("input", outs, secs)
    if model is not None:
        outs, secs = _timed(lambda s: smooth_sequence(model, s, step_s), test_pairs)
        add(model_label, outs, secs)
    for spec in filters:
        spec = spec if isinstance(spec, FilterSpec) else FilterSpec.from_dict(spec)
        outs, secs = _timed(lambda s: apply_filter(s, spec), test_pairs)
        add(spec.label, outs, secs)
    return report


def gaussian_grid(sigmas=(1, 1.5, 2, 2.5, 3, 3.5, 4, 5, 6, 7, 8, 10, 12, 16)):
    """Gaussian filters with window ~ 6 sigma + 1 (odd)."""
    return [FilterSpec("gaussian", window=2 * int(math.ceil(3 * s)) + 1, sigma=float(s))
            for s in sigmas]


def matched_filter_rows(report, method, tolerance=0.25, prefix="gaussian"):
    """Filter rows whose Accel lies within ``tolerance`` of ``method``'s Accel."""
    ref = report.row(method).accel
    return [r for r in report.rows
            if r.method.startswith(prefix) and abs(r.accel - ref) <= tolerance * ref]


def window_sweep(test_pairs, models, step_s=1):
    """Accel/MPJPE for models trained at different window sizes.

    ``models`` maps window size to checkpoint.
    """
    rows = []
    for w in sorted(models):
        outs = [smooth_sequence(models[w], p.noisy, step_s) for p in test_pairs]
        agg = _score(outs, test_pairs)
        rows.append(BenchRow(f"W={w}", agg.accel, agg.mpjpe, agg.pa_mpjpe, math.nan,
                             {"window": w}))
    return BenchReport(rows, units=test_pairs[0].clean.units)

