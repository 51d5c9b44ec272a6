"""Monthly bilateral trade panels: ingestion, sector mapping, shares, deviations.

The pipeline is load_trades -> apply_sector_map -> build_panel. A panel holds,
per (partner, sector, month), the partner's share of the reporter's sector
trade in percentage points together with five partner-level control
covariates (annual values repeated across months, growth covariates lagged
one calendar year). Month indices count from January 2016 (t = 0).

deviation_series benchmarks a reporter's total monthly trade value against
its 2016-2017 calendar-month averages, so seasonality cancels before the
quarterly aggregation. synth_panel generates seeded synthetic trade and
control files with a known planted treatment effect for estimator checks.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataFormatError
from .io_utils import fmt, write_csv_atomic, write_text_atomic

BASE_YEAR = 2016  # month-index origin (January 2016 -> t = 0)
BASELINE_YEARS = (2016, 2017)
WORLD_CODE = "WLD"

SECTOR_NAMES = ("agriculture", "apparel", "chemicals", "machinery", "materials",
                "metals", "minerals", "miscellaneous", "transport")

# one representative HS chapter per sector, used by the synthetic generator
_SECTOR_CHAPTER = {"agriculture": "01", "minerals": "25", "chemicals": "28",
                   "materials": "39", "apparel": "50", "metals": "72",
                   "machinery": "84", "transport": "86", "miscellaneous": "90"}

CONTROL_COLUMNS = ("pop_growth", "gdp_pc_growth", "geo_dist", "socio_cond",
                   "invest_profile")
PANEL_CONTROLS = ("pop_growth_lag", "gdp_pc_growth_lag", "geo_dist", "socio_cond",
                  "invest_profile")
# growth covariates enter lagged one calendar year; the other three contemporaneous
_LAGGED = {"pop_growth_lag": ("pop_growth", 1), "gdp_pc_growth_lag": ("gdp_pc_growth", 1),
           "geo_dist": ("geo_dist", 0), "socio_cond": ("socio_cond", 0),
           "invest_profile": ("invest_profile", 0)}


def month_index(year: int, month: int) -> int:
    return (year - BASE_YEAR) * 12 + (month - 1)


def index_month(t: int) -> tuple[int, int]:
    return BASE_YEAR + t // 12, t % 12 + 1


@dataclass(frozen=True)
class TradeRecord:
    reporter: str
    partner: str
    flow: str  # "X" exports, "M" imports
    hs2: str
    year: int
    month: int
    value: float


@dataclass(frozen=True)
class SectorFlow:
    """A trade record aggregated to one of the named sectors."""
    reporter: str
    partner: str
    flow: str
    sector: str
    year: int
    month: int
    value: float


@dataclass(frozen=True)
class SectorMap:
    mapping: dict

    def __post_init__(self):
        if not self.mapping:
            raise DataFormatError("sector map is empty")
        for hs2, name in self.mapping.items():
            if not name:
                raise DataFormatError(f"sector map has empty sector name for chapter {hs2!r}")

    @classmethod
    def from_csv(cls, path: str | Path) -> "SectorMap":
        mapping = {}
        with open(path, encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [c.strip() for c in header] != ["hs2", "sector"]:
                raise DataFormatError(f"{path}: sector map header must be 'hs2,sector'")
            for lineno, row in enumerate(reader, start=2):
                if not row or not any(c.strip() for c in row):
                    continue
                if len(row) != 2:
                    raise DataFormatError(f"{path}: row {lineno} has {len(row)} cells, expected 2")
                hs2 = row[0].strip()
                if hs2 in mapping:
                    raise DataFormatError(f"{path}: chapter {hs2!r} mapped twice (row {lineno})")
                mapping[hs2] = row[1].strip()
        return cls(mapping)

    def sector(self, hs2: str) -> str:
        return self.mapping[hs2]

    def sectors(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.mapping.values())))


def default_sector_map() -> SectorMap:
    """The bundled 97-chapter map onto the nine canonical sector names."""
    with resources.files("gvckit.data").joinpath("hs2_sectors.csv").open(encoding="utf-8") as fh:
        mapping = {}
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row:
                mapping[row[0]] = row[1]
    return SectorMap(mapping)


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

TRADE_HEADER = ["reporter", "partner", "flow", "hs2", "year", "month", "value"]
CONTROLS_HEADER = ["country", "year"] + list(CONTROL_COLUMNS)


def load_trades(path: str | Path) -> list[TradeRecord]:
    """Parse the canonical trade CSV; duplicate keys are summed with a warning."""
    path = Path(path)
    merged: dict[tuple, float] = {}
    dup_keys = []
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != TRADE_HEADER:
            raise DataFormatError(f"{path}: trade header must be "
                                  f"'{','.join(TRADE_HEADER)}', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != len(TRADE_HEADER):
                raise DataFormatError(f"{path}: row {lineno} has {len(row)} cells, "
                                      f"expected {len(TRADE_HEADER)}")
            reporter, partner, flow, hs2 = (c.strip() for c in row[:4])
            try:
                year, month = int(row[4]), int(row[5])
                value = float(row[6])
            except ValueError:
                raise DataFormatError(f"{path}: non-numeric year/month/value at row "
                                      f"{lineno}") from None
            if flow not in ("X", "M"):
                raise DataFormatError(f"{path}: row {lineno} flow must be X or M, got {flow!r}")
            if not 1 <= month <= 12:
                raise DataFormatError(f"{path}: row {lineno} month {month} outside 1..12")
            if value < 0:
                raise DataFormatError(f"{path}: row {lineno} has negative value {value}")
            if reporter == partner:
                raise DataFormatError(f"{path}: row {lineno} reporter equals partner "
                                      f"({reporter!r})")
            key = (reporter, partner, flow, hs2, year, month)
            if key in merged:
                dup_keys.append(key)
            merged[key] = merged.get(key, 0.0) + value
    if dup_keys:
        warnings.warn(f"{path}: summed {len(dup_keys)} duplicate trade key(s), "
                      f"e.g. {dup_keys[0]}", stacklevel=2)
    return [TradeRecord(*key, value) for key, value in merged.items()]


def write_trades_csv(records, path: str | Path) -> None:
    rows = [[r.reporter, r.partner, r.flow, r.hs2, r.year, r.month, float(r.value)]
            for r in records]
    write_csv_atomic(path, TRADE_HEADER, rows)


def load_controls(path: str | Path) -> dict[tuple[str, int], dict[str, float]]:
    """Controls CSV -> {(country, year): {covariate: value}}."""
    path = Path(path)
    out: dict[tuple[str, int], dict[str, float]] = {}
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != CONTROLS_HEADER:
            raise DataFormatError(f"{path}: controls header must be "
                                  f"'{','.join(CONTROLS_HEADER)}', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != len(CONTROLS_HEADER):
                raise DataFormatError(f"{path}: row {lineno} has {len(row)} cells, "
                                      f"expected {len(CONTROLS_HEADER)}")
            try:
                year = int(row[1])
                values = {name: float(cell) for name, cell in zip(CONTROL_COLUMNS, row[2:])}
            except ValueError:
                raise DataFormatError(f"{path}: non-numeric cell at row {lineno}") from None
            if not all(np.isfinite(v) for v in values.values()):
                raise DataFormatError(f"{path}: non-finite covariate at row {lineno}")
            key = (row[0].strip(), year)
            if key in out:
                raise DataFormatError(f"{path}: duplicate control row for {key} (row {lineno})")
            out[key] = values
    return out


def write_controls_csv(rows, path: str | Path) -> None:
    """rows: iterable of (country, year, dict-of-covariates)."""
    out = [[c, y] + [float(vals[name]) for name in CONTROL_COLUMNS] for c, y, vals in rows]
    write_csv_atomic(path, CONTROLS_HEADER, out)


def apply_sector_map(records, smap: SectorMap) -> list[SectorFlow]:
    """Tag records with sectors and aggregate to (reporter,partner,flow,sector,year,month)."""
    missing = sorted({r.hs2 for r in records if r.hs2 not in smap.mapping})
    if missing:
        raise DataFormatError(f"sector map does not cover chapter(s): {', '.join(missing)}")
    agg: dict[tuple, float] = {}
    for r in records:
        key = (r.reporter, r.partner, r.flow, smap.sector(r.hs2), r.year, r.month)
        agg[key] = agg.get(key, 0.0) + r.value
    return [SectorFlow(*key, value) for key, value in sorted(agg.items())]


# ---------------------------------------------------------------------------
# Panel construction
# ---------------------------------------------------------------------------

@dataclass
class Panel:
    """Balanced (partner x sector x month) share panel for one reporter/flow."""
    reporter: str
    flow: str
    denominator: str
    df: pd.DataFrame
    partners: tuple[str, ...]
    sectors: tuple[str, ...]
    t_range: tuple[int, int]
    meta: dict = field(default_factory=dict)


def build_panel(flows, controls, reporter: str, flow: str,
                denominator: str = "included") -> Panel:
    """Build the share panel for one reporter/flow from sector-tagged flows.

    denominator="included" divides by the sum over the included partners;
    "world" divides by a supplied world-total row (partner code WLD).
    Missing (partner, sector, month) cells become explicit share-0 rows,
    counted in meta["imputed_zero_cells"].
    """
    if denominator not in ("included", "world"):
        raise ValueError(f"denominator must be 'included' or 'world', got {denominator!r}")
    if isinstance(controls, (str, Path)):
        controls = load_controls(controls)

    mine = [f for f in flows if f.reporter == reporter and f.flow == flow]
    if not mine:
        raise DataFormatError(f"no records for reporter {reporter!r} flow {flow!r}")
    world = {(f.sector, month_index(f.year, f.month)): f.value
             for f in mine if f.partner == WORLD_CODE}
    mine = [f for f in mine if f.partner != WORLD_CODE]
    if denominator == "world" and not world:
        raise DataFormatError(f"denominator 'world' needs partner {WORLD_CODE!r} total rows")

    partners = tuple(sorted({f.partner for f in mine}))
    sectors = tuple(sorted({f.sector for f in mine}))
    ts = [month_index(f.year, f.month) for f in mine]
    t_lo, t_hi = min(ts), max(ts)
    values = {(f.partner, f.sector, month_index(f.year, f.month)): f.value for f in mine}

    years = sorted({index_month(t)[0] for t in range(t_lo, t_hi + 1)})
    needed_years = sorted(set(years) | {y - 1 for y in years})
    gaps = [(p, y) for p in partners for y in needed_years if (p, y) not in controls]
    if gaps:
        shown = ", ".join(f"({p}, {y})" for p, y in gaps[:12])
        more = "" if len(gaps) <= 12 else f" and {len(gaps) - 12} more"
        raise DataFormatError(f"controls missing for (partner, year): {shown}{more}")

    denom = {}
    for sec in sectors:
        for t in range(t_lo, t_hi + 1):
            if denominator == "included":
                denom[(sec, t)] = sum(values.get((p, sec, t), 0.0) for p in partners)
            else:
                denom[(sec, t)] = world.get((sec, t), 0.0)

    rows = []
    imputed = []
    zero_denom = sorted(k for k, v in denom.items() if v == 0.0)
    for p in partners:
        for sec in sectors:
            for t in range(t_lo, t_hi + 1):
                year, month = index_month(t)
                v = values.get((p, sec, t))
                if v is None:
                    v = 0.0
                    imputed.append((p, sec, t))
                d = denom[(sec, t)]
                share = 100.0 * v / d if d > 0 else 0.0
                ctrl = [controls[(p, year - _LAGGED[c][1])][_LAGGED[c][0]]
                        for c in PANEL_CONTROLS]
                rows.append((p, sec, t, year, month, share, *ctrl))

    df = pd.DataFrame(rows, columns=["partner", "sector", "t", "year", "month",
                                     "share", *PANEL_CONTROLS])
    meta = {"reporter": reporter, "flow": flow, "denominator": denominator,
            "imputed_zero_cells": len(imputed), "imputed_cells": imputed,
            "zero_denominator_cells": zero_denom}
    return Panel(reporter=reporter, flow=flow, denominator=denominator, df=df,
                 partners=partners, sectors=sectors, t_range=(t_lo, t_hi), meta=meta)


# ---------------------------------------------------------------------------
# Baseline-relative deviations
# ---------------------------------------------------------------------------

@dataclass
class DeviationSeries:
    """Per-period deviations of total trade value from 2016-2017 baselines.

    Deviation is a signed fraction (value / seasonal baseline mean - 1);
    None marks periods whose baseline mean is zero.
    """
    reporter: str
    flow: str
    granularity: str  # "month" | "quarter"
    points: list  # [(label, float | None)]


def deviation_series(records, reporter: str, flow: str,
                     granularity: str = "quarter") -> DeviationSeries:
    """Seasonality-matched deviation series for one reporter and flow.

    Each month is benchmarked against the mean of the same calendar month
    over 2016 and 2017; quarterly deviations average the three monthly ones.
    """
    if granularity not in ("month", "quarter"):
        raise ValueError(f"granularity must be 'month' or 'quarter', got {granularity!r}")
    totals: dict[tuple[int, int], float] = {}
    for r in records:
        if r.reporter == reporter and r.flow == flow and r.partner != WORLD_CODE:
            key = (r.year, r.month)
            totals[key] = totals.get(key, 0.0) + r.value
    if not totals:
        raise DataFormatError(f"no records for reporter {reporter!r} flow {flow!r}")

    base: dict[int, float] = {}
    for m in range(1, 13):
        vals = [totals[(y, m)] for y in BASELINE_YEARS if (y, m) in totals]
        if not vals:
            raise DataFormatError(f"baseline years {BASELINE_YEARS} have no data for "
                                  f"calendar month {m:02d}")
        base[m] = sum(vals) / len(vals)

    monthly = []
    for (y, m) in sorted(totals):
        dev = totals[(y, m)] / base[m] - 1.0 if base[m] != 0.0 else None
        monthly.append(((y, m), dev))
    if granularity == "month":
        return DeviationSeries(reporter, flow, "month",
                               [(f"{y}-{m:02d}", dev) for (y, m), dev in monthly])

    quarters: dict[tuple[int, int], list] = {}
    for (y, m), dev in monthly:
        quarters.setdefault((y, (m - 1) // 3 + 1), []).append(dev)
    points = []
    for (y, q) in sorted(quarters):
        devs = quarters[(y, q)]
        agg = None if any(d is None for d in devs) else sum(devs) / len(devs)
        points.append((f"{y}Q{q}", agg))
    return DeviationSeries(reporter, flow, "quarter", points)


def write_deviations_csv(path: str | Path, series_list) -> None:
    header = ["reporter", "flow", "granularity", "period", "deviation", "defined"]
    rows = []
    for s in series_list:
        for label, dev in s.points:
            if dev is None:
                rows.append([s.reporter, s.flow, s.granularity, label, "", False])
            else:
                rows.append([s.reporter, s.flow, s.granularity, label, float(dev), True])
    write_csv_atomic(path, header, rows)


# ---------------------------------------------------------------------------
# Synthetic panels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PanelEffect:
    """A planted treatment: +magnitude_pp on one partner-sector share from start_t on."""
    partner: str
    sector: str
    start_t: int
    magnitude_pp: float


@dataclass(frozen=True)
class SynthPanelSpec:
    partners: tuple[str, ...]
    months: int
    seed: int
    reporter: str = "CHN"
    flow: str = "X"
    sectors: tuple[str, ...] = ("machinery", "materials", "chemicals")
    effects: tuple[PanelEffect, ...] = ()
    noise_sd: float = 0.0
    total_base: float = 1000.0
    control_amplitude: float = 1.0


@dataclass
class SynthPanelResult:
    records: list
    controls: list  # (country, year, {covariate: value})
    truth: dict
    shares: np.ndarray  # realized shares, (partners, sectors, months)


def synth_panel(spec: SynthPanelSpec) -> SynthPanelResult:
    """Generate a seeded monthly trade panel with known planted effects.

    Baseline partner shares come from a floored Dirichlet draw per sector.
    A planted effect adds magnitude_pp to the treated share from start_t on
    and scales the other partners down proportionally, so shares keep summing
    to 100. Noise is Gaussian, recentred across partners within each
    (sector, month) cell, which preserves the closure exactly.
    """
    P, S, T = len(spec.partners), len(spec.sectors), spec.months
    if P < 2:
        raise ValueError("need at least two partners")
    by_sector = {}
    for eff in spec.effects:
        if eff.partner not in spec.partners:
            raise ValueError(f"effect partner {eff.partner!r} not among partners")
        if eff.sector not in spec.sectors:
            raise ValueError(f"effect sector {eff.sector!r} not among sectors")
        if not 0 <= eff.start_t < T:
            raise ValueError(f"effect start month {eff.start_t} outside 0..{T - 1}")
        if eff.sector in by_sector:
            raise ValueError(f"at most one planted effect per sector ({eff.sector!r})")
        by_sector[eff.sector] = eff

    rng = np.random.default_rng(spec.seed)
    # floored Dirichlet keeps every baseline share comfortably positive
    base = 100.0 * (0.3 / P + 0.7 * rng.dirichlet(np.full(P, 5.0), size=S))  # (S, P)

    for eff in spec.effects:
        s = spec.sectors.index(eff.sector)
        i = spec.partners.index(eff.partner)
        b = base[s, i]
        if not 0.0 <= b + eff.magnitude_pp <= 100.0:
            raise ValueError(f"magnitude {eff.magnitude_pp:+g}pp on baseline {b:.3g}pp "
                             "leaves the treated share outside [0, 100]")

    shares = np.repeat(base.T[:, :, None], T, axis=2)  # (P, S, T)
    implied = {}
    for eff in spec.effects:
        s = spec.sectors.index(eff.sector)
        i = spec.partners.index(eff.partner)
        b = base[s, i]
        factor = (100.0 - b - eff.magnitude_pp) / (100.0 - b)
        shares[:, s, eff.start_t:] *= factor
        shares[i, s, eff.start_t:] = b + eff.magnitude_pp
        # the proportional scale-down shifts the control mean by -m/(P-1),
        # so the exact DiD interaction coefficient is m * P / (P - 1)
        implied[(eff.partner, eff.sector)] = eff.magnitude_pp * P / (P - 1)

    if spec.noise_sd > 0:
        noise = rng.normal(0.0, spec.noise_sd, size=(P, S, T))
        noise -= noise.mean(axis=0, keepdims=True)
        # scale each (sector, month) noise vector down just enough to keep all
        # shares nonnegative; scaling preserves the zero cross-partner mean
        with np.errstate(divide="ignore"):
            headroom = np.where(noise < 0.0, shares / np.maximum(-noise, 1e-300), np.inf)
        alpha = np.minimum(1.0, 0.99 * headroom.min(axis=0, keepdims=True))
        shares = shares + alpha * noise

    # smooth seasonal sector totals, deterministic per seed
    t_grid = np.arange(T)
    sector_scale = rng.uniform(0.5, 2.0, size=S)
    totals = (spec.total_base * sector_scale[:, None]
              * (1.0 + 0.2 * np.sin(2.0 * np.pi * t_grid[None, :] / 12.0)
                 + 0.003 * t_grid[None, :]))

    records = []
    for s, sector in enumerate(spec.sectors):
        hs2 = _SECTOR_CHAPTER.get(sector, "90")
        for i, partner in enumerate(spec.partners):
            for t in range(T):
                year, month = index_month(t)
                value = shares[i, s, t] / 100.0 * totals[s, t]
                records.append(TradeRecord(spec.reporter, partner, spec.flow, hs2,
                                           year, month, float(value)))

    years = sorted({index_month(t)[0] for t in range(T)})
    control_years = [years[0] - 1] + years
    # each covariate: a partner-specific level plus its own smooth year path
    # shared across partners; partner levels are absorbed by fixed effects and
    # common paths cannot track partner-specific share movements, so the
    # covariates are genuine nuisance regressors in this data-generating process
    nc = len(CONTROL_COLUMNS)
    slope = rng.uniform(-0.2, 0.2, size=nc)
    freq = rng.uniform(0.5, 1.3, size=nc)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=nc)
    levels = rng.uniform(-1.0, 3.0, size=(P, nc))
    controls = []
    for i, partner in enumerate(spec.partners):
        for k, y in enumerate(control_years):
            path = spec.control_amplitude * (slope * k + 0.3 * np.sin(freq * k + phase))
            vals = {name: float(levels[i, j] + path[j])
                    for j, name in enumerate(CONTROL_COLUMNS)}
            controls.append((partner, y, vals))

    truth = {
        "seed": spec.seed,
        "reporter": spec.reporter,
        "flow": spec.flow,
        "partners": list(spec.partners),
        "sectors": list(spec.sectors),
        "months": T,
        "noise_sd": spec.noise_sd,
        "effects": [{"partner": e.partner, "sector": e.sector, "start_t": e.start_t,
                     "magnitude_pp": e.magnitude_pp,
                     "implied_gamma_pp": implied[(e.partner, e.sector)]}
                    for e in spec.effects],
        "base_shares": {sector: {p: float(base[s, i]) for i, p in enumerate(spec.partners)}
                        for s, sector in enumerate(spec.sectors)},
    }
    return SynthPanelResult(records=records, controls=controls, truth=truth, shares=shares)


def write_truth_json(truth: dict, path: str | Path) -> None:
    write_text_atomic(path, json.dumps(truth, indent=2, sort_keys=True) + "\n")
