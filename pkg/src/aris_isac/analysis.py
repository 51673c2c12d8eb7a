"""Summaries of sweep CSVs: per-point medians and the trend checks built on them."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np


def read_rows(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for key in ("sweep_value", "gamma_r_db", "min_sinr_margin_db", "bs_power_used_w",
                    "ris_power_used_w", "wall_ms"):
            r[key] = float(r[key])
        r["seed"] = int(r["seed"])
        r["outer_iters"] = int(r["outer_iters"])
    return rows


def medians(rows: list[dict], mode: str, column: str = "gamma_r_db") -> tuple[np.ndarray, np.ndarray]:
    """Sweep values and the median of ``column`` over seeds for one mode."""
    groups = defaultdict(list)
    for r in rows:
        if r["mode"] == mode:
            groups[r["sweep_value"]].append(r[column])
    xs = np.array(sorted(groups))
    return xs, np.array([np.median(groups[x]) for x in xs])


def per_seed(rows: list[dict], mode: str, column: str = "gamma_r_db") -> dict:
    """``{seed: values ordered by sweep value}``."""
    out = defaultdict(list)
    for r in sorted((r for r in rows if r["mode"] == mode), key=lambda r: (r["seed"], r["sweep_value"])):
        out[r["seed"]].append(r[column])
    return {s: np.array(v) for s, v in out.items()}


def non_decreasing(values, tol: float = 0.0) -> bool:
    return bool(np.all(np.diff(values) >= -tol))


def high_end_slope(xs, ys, per: float = 5.0) -> float:
    """Slope of the last segment rescaled to ``per`` units of the sweep variable."""
    return float((ys[-1] - ys[-2]) / (xs[-1] - xs[-2]) * per)


def median_gap(rows: list[dict], mode_a: str, mode_b: str, at: float) -> float:
    """Median over seeds of ``gamma_r_db(mode_a) - gamma_r_db(mode_b)`` at sweep value ``at``."""
    a = {r["seed"]: r["gamma_r_db"] for r in rows if r["mode"] == mode_a and r["sweep_value"] == at}
    b = {r["seed"]: r["gamma_r_db"] for r in rows if r["mode"] == mode_b and r["sweep_value"] == at}
    seeds = sorted(set(a) & set(b))
    if not seeds:
        raise ValueError(f"no common seeds for {mode_a} and {mode_b} at {at}")
    return float(np.median([a[s] - b[s] for s in seeds]))


def status_counts(rows: list[dict]) -> dict:
    out: dict[str, int] = defaultdict(int)
    for r in rows:
        out[r["status"]] += 1
    return dict(out)


# relative slack allowed when judging a median curve as monotone; matches the
# per-round ascent tolerance of the alternating updates
MONOTONE_RTOL = 1e-6


def _monotone(ys, increasing: bool = True, rtol: float = MONOTONE_RTOL) -> bool:
    ys = np.asarray(ys, dtype=float)
    lin = 10 ** (ys / 10)
    if not increasing:
        lin = lin[::-1]
    return bool(np.all(lin[1:] >= lin[:-1] * (1 - rtol)))


def trend_checks(power_rows: list[dict], sinr_rows: list[dict], element_rows: list[dict]) -> list[tuple]:
    """``(name, passed, detail)`` for the five trend claims on the median curves."""
    out = []
    xs, act = medians(power_rows, "active_isac")
    _, pas = medians(power_rows, "passive_isac")
    _, rad = medians(power_rows, "radar_only_active")
    gaps_ap = [median_gap(power_rows, "active_isac", "passive_isac", x) for x in xs]
    out.append(("active beats passive by >= 10 dB", min(gaps_ap) >= 10.0,
                "gaps " + ", ".join(f"{g:.2f}" for g in gaps_ap) + " dB"))
    gaps_ra = [median_gap(power_rows, "radar_only_active", "active_isac", x) for x in xs]
    out.append(("radar-only >= active, gap <= 6 dB", min(gaps_ra) >= 0.0 and max(gaps_ra) <= 6.0,
                "gaps " + ", ".join(f"{g:.3f}" for g in gaps_ra) + " dB"))
    slope = high_end_slope(xs, act)
    out.append(("non-decreasing in P_BS and saturating", _monotone(act) and slope < 0.5,
                "medians " + ", ".join(f"{y:.3f}" for y in act) + f" dB; slope {slope:.3g} dB/5 dBm"))
    _, by_m = medians(element_rows, "active_isac")
    out.append(("non-decreasing in M", _monotone(by_m),
                "medians " + ", ".join(f"{y:.3f}" for y in by_m) + " dB"))
    _, by_g = medians(sinr_rows, "active_isac")
    out.append(("non-increasing in the SINR target", _monotone(by_g, increasing=False),
                "medians " + ", ".join(f"{y:.3f}" for y in by_g) + " dB"))
    return out
