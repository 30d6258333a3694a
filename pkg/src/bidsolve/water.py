"""Household water-storage tank as a reset-control problem.

Each day the household may flush the tank (reset to an empty, fresh tank),
then orders ``u`` litres and consumes PRP-distributed demand ``d``:

    next level  = max(xi + u - d, 0)
    stage cost  = c u + p max(d - xi - u, 0) + q(tau) max(xi + u - d, 0)
    flush cost  = c_f x

with ``q(tau) = holding_slope * tau`` evaluated at the post-flush age.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import DiscreteNoise, PolicyTable, ResetProblem, StateGrid, validate_problem
from .demand import PRPParams, discretize

ZONES = (
    "flush-and-reorder-small",
    "order-up-to",
    "do-nothing",
    "flush-and-reorder-large",
)
POLICY_COLUMNS = ("t", "x_low_L", "x_high_L", "flush", "order_L")


class StructureWarning(UserWarning):
    """A policy age splits into more zones than the four-zone pattern allows."""


class PolicyFormatError(ValueError):
    pass


@dataclass(frozen=True)
class WaterParams:
    purchase_cost: float = 0.25
    shortage_penalty: float = 0.5
    flush_penalty: float = 0.5
    holding_slope: float = 15.0
    event_rate: float = 40.0
    duration_rate: float = 2.0
    horizon_cap: int = 6
    discount: float = 0.8
    x_max: float = 120.0
    n_x: int = 241
    u_max: float = 120.0
    n_u: int = 241
    n_atoms: int = 500
    seed: int = 0

    def __post_init__(self):
        errors = self.errors()
        if errors:
            raise ValueError("invalid water parameters: " + "; ".join(errors))

    def errors(self) -> list[str]:
        out = []
        for name in ("purchase_cost", "shortage_penalty", "flush_penalty"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                out.append(f"{name}: must be finite and >= 0, got {val!r}")
        if not (math.isfinite(self.holding_slope) and self.holding_slope > 0):
            out.append(f"holding_slope: must be > 0, got {self.holding_slope!r}")
        if not self.event_rate >= 0:
            out.append(f"event_rate: must be >= 0, got {self.event_rate!r}")
        if not self.duration_rate > 0:
            out.append(f"duration_rate: must be > 0, got {self.duration_rate!r}")
        if not (isinstance(self.horizon_cap, int) and self.horizon_cap >= 1):
            out.append(f"horizon_cap: must be an integer >= 1, got {self.horizon_cap!r}")
        if not 0 <= self.discount < 1:
            out.append(f"discount: must lie in [0, 1), got {self.discount!r}")
        if not self.x_max > 0:
            out.append(f"x_max: must be > 0, got {self.x_max!r}")
        if not self.u_max >= 0:
            out.append(f"u_max: must be >= 0, got {self.u_max!r}")
        for name in ("n_x", "n_u"):
            val = getattr(self, name)
            if not (isinstance(val, int) and val >= 2):
                out.append(f"{name}: must be an integer >= 2, got {val!r}")
        if not (isinstance(self.n_atoms, int) and self.n_atoms >= 2):
            out.append(f"n_atoms: must be an integer >= 2, got {self.n_atoms!r}")
        return out

    @property
    def demand(self) -> PRPParams:
        return PRPParams(self.event_rate, self.duration_rate)

    def holding(self, tau):
        return self.holding_slope * tau


@dataclass
class WaterInstance:
    params: WaterParams
    problem: ResetProblem
    grid: StateGrid
    noise: DiscreteNoise


def _make_evaluators(params: WaterParams):
    c, pen, cf = params.purchase_cost, params.shortage_penalty, params.flush_penalty
    slope = params.holding_slope

    def dynamics(x, t, u, d):
        return np.maximum(x + u - d, 0.0)

    def stage_cost(x, t, u, d):
        surplus = x + u - d
        return c * u - pen * np.minimum(surplus, 0.0) + slope * t * np.maximum(surplus, 0.0)

    def reset_cost(x, t, d):
        return cf * x + 0.0 * d

    return dynamics, stage_cost, reset_cost


def build_problem(params: WaterParams, noise: DiscreteNoise | None = None) -> WaterInstance:
    """Instantiate the tank problem; ``noise`` defaults to seeded PRP atoms."""
    dynamics, stage_cost, reset_cost = _make_evaluators(params)
    problem = ResetProblem(
        reset_state=0.0,
        horizon_cap=params.horizon_cap,
        discount=params.discount,
        control_grid=np.linspace(0.0, params.u_max, params.n_u),
        dynamics=dynamics,
        stage_cost=stage_cost,
        reset_cost=reset_cost,
    )
    grid = StateGrid(0.0, params.x_max, params.n_x)
    if noise is None:
        noise = discretize(params.demand, params.n_atoms, params.seed)
    report = validate_problem(problem, grid, noise)
    if report:
        raise ValueError("water instance inadmissible: " + "; ".join(report))
    return WaterInstance(params, problem, grid, noise)


# -- policy structure -------------------------------------------------------


@dataclass
class Zone:
    label: str
    x_low: float
    x_high: float
    first: int
    last: int


@dataclass
class ZoneClassification:
    zones: dict = field(default_factory=dict)

    def count(self, t: int) -> int:
        return len(self.zones[t])

    def thresholds(self, t: int) -> list[float]:
        """Tank levels (L) where the action type changes at age t."""
        return [z.x_low for z in self.zones[t][1:]]

    @property
    def structure_ok(self) -> bool:
        return all(len(z) <= 4 for z in self.zones.values())


def _label_points(reset_col, control_col):
    kind = np.where(reset_col == 1, 0, np.where(control_col > 0, 1, 2))
    labels = []
    seen_keep = False
    for k in kind:
        if k == 0:
            labels.append(ZONES[3] if seen_keep else ZONES[0])
        else:
            seen_keep = True
            labels.append(ZONES[1] if k == 1 else ZONES[2])
    return labels


def classify_zones(policy: PolicyTable, grid: StateGrid, ages=None) -> ZoneClassification:
    """Split each age's tank-level axis into contiguous action zones.

    Flush points below the first non-flush point are the small-tank flush
    zone, those above it the large-tank flush zone.  Warns with
    ``StructureWarning`` when an age has more than four zones.
    """
    x = grid.points
    k = policy.horizon_cap
    ages = range(k + 1) if ages is None else ages
    out = ZoneClassification()
    for t in ages:
        labels = _label_points(policy.reset[:, t], policy.control[:, t])
        zones = []
        for i, lab in enumerate(labels):
            if zones and zones[-1].label == lab:
                zones[-1].last = i
                zones[-1].x_high = float(x[i])
            else:
                zones.append(Zone(lab, float(x[i]), float(x[i]), i, i))
        out.zones[t] = zones
        if len(zones) > 4:
            warnings.warn(
                f"age {t}: {len(zones)} zones (" + ", ".join(z.label for z in zones) + ")",
                StructureWarning,
                stacklevel=2,
            )
    return out


# -- pamphlet export --------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def action_text(flush: int, order: float) -> str:
    if flush:
        return f"empty tank, then order {order:g} L"
    if order > 0:
        return f"order {order:g} L"
    return "do nothing"


def policy_rows(policy: PolicyTable, grid: StateGrid) -> list[dict]:
    """Merge consecutive grid points with identical actions into table rows."""
    x = grid.points
    rows = []
    for t in range(policy.horizon_cap + 1):
        start = 0
        for i in range(1, x.size + 1):
            if i < x.size and (
                policy.reset[i, t] == policy.reset[start, t]
                and policy.control[i, t] == policy.control[start, t]
            ):
                continue
            flush, order = int(policy.reset[start, t]), float(policy.control[start, t])
            rows.append({
                "t": t,
                "x_low_L": float(x[start]),
                "x_high_L": float(x[i - 1]),
                "flush": flush,
                "order_L": order,
                "action": action_text(flush, order),
            })
            start = i
    return rows


def policy_to_csv(policy: PolicyTable, grid: StateGrid) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(POLICY_COLUMNS)
    for row in policy_rows(policy, grid):
        writer.writerow([
            row["t"], _fmt(row["x_low_L"]), _fmt(row["x_high_L"]), row["flush"], _fmt(row["order_L"])
        ])
    return buf.getvalue()


def policy_to_json(policy: PolicyTable, grid: StateGrid, params: WaterParams | None = None) -> str:
    doc = {
        "params": asdict(params) if params is not None else None,
        "grid": {"lower": grid.lower, "upper": grid.upper, "n_points": grid.n_points},
        "horizon_cap": policy.horizon_cap,
        "rows": policy_rows(policy, grid),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def export_policy(policy: PolicyTable, grid: StateGrid, path, fmt: str = "csv",
                  params: WaterParams | None = None) -> None:
    if fmt == "csv":
        text = policy_to_csv(policy, grid)
    elif fmt == "json":
        text = policy_to_json(policy, grid, params)
    else:
        raise ValueError(f"unknown policy format {fmt!r}")
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _rows_from_csv(text: str) -> list[dict]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != POLICY_COLUMNS:
        raise PolicyFormatError(f"header must be {','.join(POLICY_COLUMNS)}, got {header!r}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != len(POLICY_COLUMNS):
            raise PolicyFormatError(f"row {lineno}: expected {len(POLICY_COLUMNS)} fields, got {len(rec)}")
        try:
            rows.append({
                "t": int(rec[0]),
                "x_low_L": float(rec[1]),
                "x_high_L": float(rec[2]),
                "flush": int(rec[3]),
                "order_L": float(rec[4]),
                "line": lineno,
            })
        except ValueError as exc:
            raise PolicyFormatError(f"row {lineno}: {exc}") from None
    return rows


def parse_policy(text: str, grid: StateGrid, horizon_cap: int, fmt: str = "csv") -> PolicyTable:
    """Rebuild a PolicyTable from exported text, rejecting incomplete tables."""
    if fmt == "csv":
        rows = _rows_from_csv(text)
    elif fmt == "json":
        try:
            doc = json.loads(text)
            rows = [dict(r, line=n) for n, r in enumerate(doc["rows"], start=1)]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise PolicyFormatError(f"malformed policy JSON: {exc}") from None
    else:
        raise ValueError(f"unknown policy format {fmt!r}")

    x = grid.points
    k = horizon_cap
    reset = np.full((x.size, k + 1), -1, dtype=np.int8)
    control = np.full((x.size, k + 1), np.nan)
    for row in rows:
        t, where = row["t"], f"row {row['line']}"
        if not 0 <= t <= k:
            raise PolicyFormatError(f"{where}: age t={t} outside 0..{k}")
        if row["flush"] not in (0, 1):
            raise PolicyFormatError(f"{where}: flush must be 0 or 1")
        if not row["order_L"] >= 0:
            raise PolicyFormatError(f"{where}: order_L must be >= 0")
        sel = (x >= row["x_low_L"]) & (x <= row["x_high_L"])
        if not sel.any():
            raise PolicyFormatError(f"{where}: interval covers no grid point")
        if np.any(reset[sel, t] >= 0):
            raise PolicyFormatError(f"{where}: overlaps an earlier row for t={t}")
        reset[sel, t] = row["flush"]
        control[sel, t] = row["order_L"]
    for t in range(k + 1):
        missing = np.flatnonzero(reset[:, t] < 0)
        if missing.size == x.size:
            raise PolicyFormatError(f"missing rows for t={t}")
        if missing.size:
            raise PolicyFormatError(
                f"t={t}: no row covers x={x[missing[0]]!r} L ({missing.size} grid points uncovered)"
            )
    if np.any(reset[:, k] != 1):
        raise PolicyFormatError(f"t={k} rows must all flush")
    return PolicyTable(reset, control)


def load_policy(path, grid: StateGrid, horizon_cap: int) -> PolicyTable:
    fmt = "json" if str(path).endswith(".json") else "csv"
    with open(path, newline="") as fh:
        return parse_policy(fh.read(), grid, horizon_cap, fmt)
