"""End-point error and accuracy metrics over dynamic / static foreground and background."""
import json
from dataclasses import dataclass, field

import numpy as np

CATEGORIES = ("dynamic_fg", "static_fg", "static_bg")
METRICS = ("epe", "acc_s", "acc_r")
DYNAMIC_SPEED = 0.5  # m/s
STRICT = (0.05, 0.05)
RELAXED = (0.1, 0.1)


class EmptyMask(ValueError):
    pass


@dataclass(frozen=True)
class GroundTruth:
    flow: np.ndarray
    fg_mask: np.ndarray
    dt: float


def _vectors(f):
    return np.asarray(getattr(f, "vectors", f), dtype=np.float64).reshape(-1, 3)


def _masked_errors(pred, gt, mask):
    pred, gt = _vectors(pred), _vectors(gt)
    if pred.shape != gt.shape:
        raise ValueError("pred and gt differ in length")
    mask = np.ones(len(gt), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("mask selects no points")
    err = np.linalg.norm(pred[mask] - gt[mask], axis=1)
    return err, np.linalg.norm(gt[mask], axis=1)


def epe(pred, gt, mask=None):
    """Mean L2 norm of the flow error over the masked points."""
    err, _ = _masked_errors(pred, gt, mask)
    return float(err.mean())


def accuracy(pred, gt, mask=None, abs_thresh=0.05, rel_thresh=0.05):
    """Percent of masked points with error <= abs_thresh or error / |gt| <= rel_thresh.

    The relative test is skipped for points whose ground truth is exactly zero.
    """
    err, norm = _masked_errors(pred, gt, mask)
    ok = err <= abs_thresh
    nz = norm > 0
    ok[nz] |= err[nz] / norm[nz] <= rel_thresh
    return 100.0 * float(ok.mean())


def categorize(gt):
    """Category index per point (see ``CATEGORIES``)."""
    if not gt.dt > 0:
        raise ValueError("dt must be > 0")
    speed = np.linalg.norm(_vectors(gt.flow), axis=1) / gt.dt
    fg = np.asarray(gt.fg_mask, dtype=bool)
    cat = np.full(len(fg), 2, dtype=np.int64)
    cat[fg & (speed > DYNAMIC_SPEED)] = 0
    cat[fg & ~(speed > DYNAMIC_SPEED)] = 1
    return cat


def crop_range(scan, half_extent):
    """Points with ``|x| <= half_extent`` and ``|y| <= half_extent``."""
    if not half_extent > 0:
        raise ValueError("half_extent must be > 0")
    pts = getattr(scan, "points", scan)
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    return (np.abs(pts[:, 0]) <= half_extent) & (np.abs(pts[:, 1]) <= half_extent)


@dataclass
class EvalReport:
    """Per-category metrics; categories without points have count 0 and no metrics."""

    counts: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)  # category -> {epe, acc_s, acc_r}

    def get(self, category, metric):
        return self.metrics.get(category, {}).get(metric)

    def to_flat(self):
        flat = {}
        for c in CATEGORIES:
            flat[f"{c}.count"] = int(self.counts.get(c, 0))
            for m in METRICS:
                v = self.get(c, m)
                if v is not None:
                    flat[f"{c}.{m}"] = v
        return flat

    @classmethod
    def from_flat(cls, flat):
        report = cls()
        for c in CATEGORIES:
            report.counts[c] = int(flat.get(f"{c}.count", 0))
            vals = {m: float(flat[f"{c}.{m}"]) for m in METRICS if f"{c}.{m}" in flat}
            if vals:
                report.metrics[c] = vals
        return report

    def to_json(self):
        return json.dumps(self.to_flat(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls.from_flat(json.loads(text))

    def to_text(self):
        lines = []
        for c in CATEGORIES:
            lines.append(f"{c}.count {int(self.counts.get(c, 0))}")
            for m in METRICS:
                v = self.get(c, m)
                if v is not None:
                    lines.append(f"{c}.{m} {v:.6f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        flat = {}
        for line in text.splitlines():
            if line.strip():
                key, value = line.split()
                flat[key] = int(value) if key.endswith(".count") else float(value)
        return cls.from_flat(flat)

    def table(self):
        """Human-readable table, one row per category."""
        rows = [f"{'category':<12}{'count':>9}{'EPE (m)':>11}{'Acc-S (%)':>11}{'Acc-R (%)':>11}"]
        for c in CATEGORIES:
            n = int(self.counts.get(c, 0))
            if c in self.metrics:
                m = self.metrics[c]
                rows.append(f"{c:<12}{n:>9}{m['epe']:>11.4f}{m['acc_s']:>11.2f}{m['acc_r']:>11.2f}")
            else:
                rows.append(f"{c:<12}{n:>9}{'-':>11}{'-':>11}{'-':>11}")
        return "\n".join(rows) + "\n"


def evaluate(pred, gt, scan, half_extent=32.0, dt=None):
    """Crop, categorize and score. ``gt`` is a GroundTruth (its dt is used unless given)."""
    dt = gt.dt if dt is None else dt
    gt_flow = _vectors(gt.flow)
    pred = _vectors(pred)
    if not (len(pred) == len(gt_flow) == len(gt.fg_mask) == len(getattr(scan, "points", scan))):
        raise ValueError("pred, gt, mask and scan must have equal lengths")
    in_range = crop_range(scan, half_extent)
    cat = categorize(GroundTruth(gt_flow, gt.fg_mask, dt))
    report = EvalReport()
    for i, c in enumerate(CATEGORIES):
        mask = in_range & (cat == i)
        report.counts[c] = int(mask.sum())
        if mask.any():
            report.metrics[c] = {
                "epe": epe(pred, gt_flow, mask),
                "acc_s": accuracy(pred, gt_flow, mask, *STRICT),
                "acc_r": accuracy(pred, gt_flow, mask, *RELAXED),
            }
    return report
