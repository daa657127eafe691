"""Social cost, efficiency ratios, and file emission for finished runs.

The social cost of a profile is the worst-case average velocity over
the day (a Rawlsian welfare number): since the velocity model is
affine decreasing, it is fully determined by the most crowded
interval. The unconstrained optimum spreads the fleet as evenly as the
integers allow, so it has a closed form from the ceiling of the mean
load.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .game import GameConfig, Occupancy, Population, VelocityModel, occupancy
from .learning import Trace


@dataclass(frozen=True)
class Summary:
    """Headline numbers of one run, as written to ``summary.json``.

    ``s_nash`` is the social cost of the final (ideally certified)
    profile, ``s_preference`` that of the profile where everyone uses
    their preferred interval, and ``s_optimal`` the closed-form optimum;
    the ratios divide the optimum by each, so 1 means fully efficient.
    """

    s_nash: float
    s_optimal: float
    s_preference: float
    ratio_nash: float
    ratio_preference: float
    iterations: int
    converged: bool
    certified_at: int | None
    final_occupancy: dict[str, list[int]]


def social_cost(occ: Occupancy, vm: VelocityModel) -> float:
    """Worst-case average velocity of a profile [km/h]."""
    peak = int(occ.n.max()) if occ.n.size else 0
    return float(vm.a * peak + vm.b)


def optimal_social_cost(N: int, M: int, R: int, vm: VelocityModel) -> float:
    """Best achievable worst-case velocity: the fleet split as evenly as possible."""
    if N + M < 0 or R < 1:
        raise ValueError("need N + M >= 0 and R >= 1")
    peak = -((N + M) // -R)  # ceil((N + M) / R)
    return float(vm.a * peak + vm.b)


def _ratio(optimal: float, achieved: float) -> float:
    return optimal / achieved if achieved != 0.0 else math.inf


def summarize(trace: Trace, cfg: GameConfig, pop: Population) -> Summary:
    """Build the summary of a finished run."""
    final = occupancy(trace.final_profile, cfg.R)
    preferred = occupancy(pop.preference_profile(), cfg.R)
    s_nash = social_cost(final, cfg.velocity)
    s_opt = optimal_social_cost(pop.n_cars, pop.n_trucks, cfg.R, cfg.velocity)
    s_pref = social_cost(preferred, cfg.velocity)
    return Summary(
        s_nash=s_nash,
        s_optimal=s_opt,
        s_preference=s_pref,
        ratio_nash=_ratio(s_opt, s_nash),
        ratio_preference=_ratio(s_opt, s_pref),
        iterations=trace.iterations,
        converged=trace.converged,
        certified_at=trace.certified_at,
        final_occupancy={"n": [int(v) for v in final.n], "m": [int(v) for v in final.m]},
    )


def car_group_counts(profile, pop: Population, R: int) -> dict[float, list[int]]:
    """Final interval counts of the cars, grouped by value of time."""
    out: dict[float, list[int]] = {}
    for delta in sorted(set(pop.car_value_of_time.tolist())):
        mask = pop.car_value_of_time == delta
        counts = np.bincount(profile.z[mask] - 1, minlength=R)
        out[float(delta)] = [int(v) for v in counts]
    return out


def _fmt(value: float) -> str:
    return format(value, ".17g")


def emit(trace: Trace, summary: Summary, out_dir: str | Path,
         formats: Iterable[str] = ("csv", "json")) -> dict[str, Path]:
    """Write run artifacts; returns the paths written, keyed by format.

    ``csv`` writes ``occupancy.csv`` (header ``t,r,n_r,m_r``, one row per
    iteration and interval), ``json`` writes ``summary.json``, and
    ``truck_csv`` writes the optional ``truck_occupancy.csv``
    (``t,r,m_r``). Floats carry 17 significant digits; re-running the
    same seed reproduces the files byte for byte.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    formats = set(formats)
    unknown = formats - {"csv", "json", "truck_csv"}
    if unknown:
        raise ValueError(f"unknown emit formats: {sorted(unknown)}")
    written: dict[str, Path] = {}
    R = trace.occupancy.shape[1] if trace.occupancy.size else 0
    if "csv" in formats:
        lines = ["t,r,n_r,m_r"]
        for t in range(trace.iterations):
            for r in range(R):
                lines.append(f"{t},{r + 1},{trace.occupancy[t, r]},{trace.truck_occupancy[t, r]}")
        path = out / "occupancy.csv"
        _write(path, "\n".join(lines) + "\n")
        written["csv"] = path
    if "truck_csv" in formats:
        lines = ["t,r,m_r"]
        for t in range(trace.iterations):
            for r in range(R):
                lines.append(f"{t},{r + 1},{trace.truck_occupancy[t, r]}")
        path = out / "truck_occupancy.csv"
        _write(path, "\n".join(lines) + "\n")
        written["truck_csv"] = path
    if "json" in formats:
        doc = asdict(summary)
        for key in ("s_nash", "s_optimal", "s_preference", "ratio_nash", "ratio_preference"):
            if not math.isfinite(doc[key]):
                doc[key] = None
        path = out / "summary.json"
        _write(path, json.dumps(doc, indent=2) + "\n")
        written["json"] = path
    return written


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
