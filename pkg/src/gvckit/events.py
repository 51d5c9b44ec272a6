"""Difference-in-differences event studies on trade-share panels.

One regression per (focal partner, sector): the share is regressed on a
post-window dummy, the treated-x-post interaction, partner fixed effects,
and the five control covariates, over baseline-plus-post months only. The
control group is the pool of all other partners. With full partner fixed
effects the standalone treated dummy is not separately identified, so it is
absorbed rather than estimated; the interaction coefficient gamma is the
estimate of interest.

Inference defaults to heteroskedasticity-robust (HC1) standard errors with
two-sided p-values from the t distribution on n - rank degrees of freedom;
classic and cluster-by-partner modes are available.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy import stats

from .errors import DegenerateFitError, InsufficientDataError
from .io_utils import write_csv_atomic
from .panel import PANEL_CONTROLS, Panel, month_index

SE_MODES = ("robust", "classic", "cluster")


# ---------------------------------------------------------------------------
# Event windows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EventWindow:
    """Paired baseline and post spans, as inclusive (year, month) ranges."""
    label: str
    baseline: tuple[tuple[int, int], tuple[int, int]]
    post: tuple[tuple[int, int], tuple[int, int]]

    def __post_init__(self):
        b0, b1 = (month_index(*self.baseline[0]), month_index(*self.baseline[1]))
        p0, p1 = (month_index(*self.post[0]), month_index(*self.post[1]))
        if b0 > b1 or p0 > p1:
            raise ValueError(f"window {self.label!r}: span start after end")
        if b1 >= p0:
            raise ValueError(f"window {self.label!r}: baseline must precede the post span")

    def baseline_ts(self) -> range:
        return range(month_index(*self.baseline[0]), month_index(*self.baseline[1]) + 1)

    def post_ts(self) -> range:
        return range(month_index(*self.post[0]), month_index(*self.post[1]) + 1)


#: Pre-trade-war baseline and the three disruption windows.
BUILTIN_WINDOWS = {
    "A": EventWindow("A", ((2016, 1), (2018, 9)), ((2018, 10), (2019, 12))),
    "B": EventWindow("B", ((2016, 1), (2018, 9)), ((2020, 1), (2022, 1))),
    "C": EventWindow("C", ((2016, 1), (2018, 9)), ((2022, 2), (2023, 12))),
}


# ---------------------------------------------------------------------------
# OLS core
# ---------------------------------------------------------------------------

@dataclass
class RegressionFit:
    names: tuple[str, ...]        # kept columns, original order
    beta: np.ndarray
    cov: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    n: int
    rank: int
    dof: int
    se_mode: str
    dropped: tuple[str, ...] = ()

    def coef(self, name: str) -> float:
        return float(self.beta[self.names.index(name)])

    def se(self, name: str) -> float:
        k = self.names.index(name)
        return float(math.sqrt(max(self.cov[k, k], 0.0)))

    def params(self) -> dict[str, float]:
        return {nm: float(b) for nm, b in zip(self.names, self.beta)}


def _independent_columns(X: np.ndarray) -> list[int]:
    """Greedy rank-revealing pass: keep each column unless it is (numerically)
    in the span of the columns kept before it, so redundancy is always charged
    to the later column."""
    n, k = X.shape
    thresh = max(n, k) * np.finfo(float).eps * np.linalg.norm(X, axis=0).max(initial=0.0)
    keep = list(range(k))
    while keep:
        diag = np.abs(np.diag(np.linalg.qr(X[:, keep], mode="r")))
        bad = np.nonzero(diag <= thresh)[0]
        if bad.size == 0:
            return keep
        keep = [j for i, j in enumerate(keep) if i not in set(bad.tolist())]
    return keep


def estimate_ols(y, X, se_mode: str = "robust", names=None, clusters=None) -> RegressionFit:
    """OLS via QR with explicit rank handling.

    Rank-deficient designs get their redundant columns dropped with a warning
    (later columns lose to earlier ones), never silently pseudo-inverted.
    se_mode picks the covariance: "robust" (HC1), "classic", or "cluster"
    (CR1, requires a clusters array aligned with the rows).
    """
    y = np.ascontiguousarray(y, dtype=float)
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValueError(f"misaligned shapes: y {y.shape}, X {X.shape}")
    if not (np.isfinite(y).all() and np.isfinite(X).all()):
        raise ValueError("non-finite values in y or X")
    if se_mode not in SE_MODES:
        raise ValueError(f"se_mode must be one of {SE_MODES}, got {se_mode!r}")
    if se_mode == "cluster" and clusters is None:
        raise ValueError("se_mode 'cluster' needs a clusters array")
    n, k = X.shape
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(k))
    if len(names) != k:
        raise ValueError(f"{len(names)} names for {k} columns")

    kept_idx = _independent_columns(X)
    rank = len(kept_idx)
    dropped = tuple(names[j] for j in range(k) if j not in set(kept_idx))
    if dropped:
        warnings.warn(f"dropping collinear column(s): {', '.join(dropped)}", stacklevel=2)
    Xk = X[:, kept_idx]
    if n <= rank:
        raise InsufficientDataError(f"{n} observations for {rank} independent columns")

    Q, R = scipy.linalg.qr(Xk, mode="economic")
    beta = scipy.linalg.solve_triangular(R, Q.T @ y)
    fitted = Xk @ beta
    resid = y - fitted
    dof = n - rank

    rinv = scipy.linalg.solve_triangular(R, np.eye(rank))
    xtx_inv = rinv @ rinv.T
    if se_mode == "classic":
        sigma2 = float(resid @ resid) / dof
        cov = sigma2 * xtx_inv
    elif se_mode == "robust":
        meat = (Xk * (resid ** 2)[:, None]).T @ Xk
        cov = (n / dof) * (xtx_inv @ meat @ xtx_inv)
    else:
        clusters = np.asarray(clusters)
        if clusters.shape[0] != n:
            raise ValueError("clusters array misaligned with rows")
        labels = np.unique(clusters)
        ng = len(labels)
        if ng < 2:
            raise ValueError("cluster covariance needs at least two clusters")
        meat = np.zeros((rank, rank))
        for lab in labels:
            idx = clusters == lab
            sg = Xk[idx].T @ resid[idx]
            meat += np.outer(sg, sg)
        c = (ng / (ng - 1)) * ((n - 1) / dof)
        cov = c * (xtx_inv @ meat @ xtx_inv)

    return RegressionFit(names=tuple(names[j] for j in kept_idx), beta=beta, cov=cov,
                         residuals=resid, fitted=fitted, n=n, rank=rank, dof=dof,
                         se_mode=se_mode, dropped=dropped)


# ---------------------------------------------------------------------------
# Event-study estimates
# ---------------------------------------------------------------------------

@dataclass
class EffectEstimate:
    partner: str
    sector: str
    gamma: float | None
    se: float | None
    t_stat: float | None
    p_value: float | None
    significant: bool
    alpha: float
    estimable: bool = True
    note: str = ""


@dataclass
class EffectMatrix:
    reporter: str
    flow: str
    window: EventWindow
    partners: tuple[str, ...]
    sectors: tuple[str, ...]
    cells: dict  # (partner, sector) -> EffectEstimate
    meta: dict = field(default_factory=dict)


def _tail(gamma: float, se: float, dof: int) -> tuple[float, float]:
    """Two-sided t-test; a zero standard error degenerates to p in {0, 1}."""
    if se > 0.0:
        t = gamma / se
        return t, float(2.0 * stats.t.sf(abs(t), dof))
    return (math.inf, 0.0) if gamma != 0.0 else (0.0, 1.0)


def run_event_study(panel: Panel, focal: str, sector: str, window: EventWindow,
                    se_mode: str = "robust", alpha: float = 0.10,
                    exclude=()) -> EffectEstimate:
    """Estimate the treated-x-post coefficient for one partner-sector cell.

    Observations are the panel rows for `sector` within the window's baseline
    and post spans; `exclude` removes partners from the control pool. Raises
    InsufficientDataError / DegenerateFitError for cells that cannot be
    estimated.
    """
    df = panel.df
    if focal not in panel.partners:
        raise InsufficientDataError(f"focal partner {focal!r} not in panel")
    if sector not in panel.sectors:
        raise InsufficientDataError(f"sector {sector!r} not in panel")
    drop = set(exclude) - {focal}
    ts = set(window.baseline_ts()) | set(window.post_ts())
    sub = df[(df["sector"] == sector) & df["t"].isin(ts) & ~df["partner"].isin(drop)]
    sub = sub.sort_values(["partner", "t"], kind="mergesort")
    partners = sorted(sub["partner"].unique())
    if focal not in partners:
        raise InsufficientDataError(f"no in-window rows for focal {focal!r}")
    if len(partners) < 2:
        raise InsufficientDataError("need at least two partners (treated + controls)")
    post_ts = set(window.post_ts())
    t_vals = sub["t"].to_numpy()
    if not (set(t_vals) & post_ts) or not (set(t_vals) - post_ts):
        raise InsufficientDataError("window needs observations in both spans")

    y = sub["share"].to_numpy(dtype=float)
    if np.ptp(y) == 0.0:
        raise DegenerateFitError(f"all shares identical ({y[0]:g}) for sector {sector!r}")

    post = np.isin(t_vals, list(post_ts)).astype(float)
    treat = (sub["partner"] == focal).to_numpy(dtype=float)
    controls = sub[list(PANEL_CONTROLS)].to_numpy(dtype=float)
    # partner dummies, first (reference) level dropped; the standalone treat
    # dummy is collinear with them and is absorbed by construction. Controls
    # come last so that a redundant covariate, not a fixed effect, is what
    # gets dropped on rank-deficient panels.
    fe = np.column_stack([(sub["partner"] == p).to_numpy(dtype=float)
                          for p in partners[1:]]) if len(partners) > 1 else np.empty((len(y), 0))
    X = np.column_stack([np.ones_like(y), post, treat * post, fe, controls])
    names = ["const", "post", "treat_post"] + [f"fe_{p}" for p in partners[1:]] + list(PANEL_CONTROLS)

    clusters = sub["partner"].to_numpy() if se_mode == "cluster" else None
    fit = estimate_ols(y, X, se_mode=se_mode, names=names, clusters=clusters)
    if "treat_post" not in fit.names:
        raise DegenerateFitError("interaction column is collinear; cell not estimable")
    gamma = fit.coef("treat_post")
    se = fit.se("treat_post")
    t, p = _tail(gamma, se, fit.dof)
    return EffectEstimate(partner=focal, sector=sector, gamma=gamma, se=se,
                          t_stat=t, p_value=p, significant=p < alpha, alpha=alpha)


def scan_all(panel: Panel, window: EventWindow, se_mode: str = "robust",
             alpha: float = 0.10, exclude=()) -> EffectMatrix:
    """run_event_study over every (partner, sector); failures become
    explicit not-estimable cells. No multiple-testing adjustment is applied;
    meta records the number of tests for post-hoc corrections."""
    cells = {}
    for p in panel.partners:
        for s in panel.sectors:
            try:
                cells[(p, s)] = run_event_study(panel, p, s, window,
                                                se_mode=se_mode, alpha=alpha,
                                                exclude=exclude)
            except (InsufficientDataError, DegenerateFitError) as exc:
                cells[(p, s)] = EffectEstimate(partner=p, sector=s, gamma=None, se=None,
                                               t_stat=None, p_value=None, significant=False,
                                               alpha=alpha, estimable=False, note=str(exc))
    meta = {"alpha": alpha, "se_mode": se_mode, "denominator": panel.denominator,
            "n_tests": len(cells), "treat_main_effect": "absorbed by partner fixed effects",
            "excluded_partners": sorted(set(exclude))}
    return EffectMatrix(reporter=panel.reporter, flow=panel.flow, window=window,
                        partners=panel.partners, sectors=panel.sectors,
                        cells=cells, meta=meta)


def dual_positive(exports: EffectMatrix, imports: EffectMatrix,
                  alpha: float | None = None) -> list[tuple[str, str]]:
    """Cells significantly positive in both matrices, sorted lexicographically.

    With alpha given, significance is re-thresholded at p < alpha; otherwise
    each matrix's stored flags are used. Vocabularies are intersected with a
    warning when they differ.
    """
    partners = set(exports.partners) & set(imports.partners)
    sectors = set(exports.sectors) & set(imports.sectors)
    if (partners != set(exports.partners) or partners != set(imports.partners)
            or sectors != set(exports.sectors) or sectors != set(imports.sectors)):
        warnings.warn("matrices have different partner/sector vocabularies; "
                      "using the intersection", stacklevel=2)

    def positive(cell: EffectEstimate) -> bool:
        if not cell.estimable or cell.gamma is None or cell.gamma <= 0.0:
            return False
        return cell.p_value < alpha if alpha is not None else cell.significant

    out = []
    for p in sorted(partners):
        for s in sorted(sectors):
            ce, ci = exports.cells.get((p, s)), imports.cells.get((p, s))
            if ce is not None and ci is not None and positive(ce) and positive(ci):
                out.append((p, s))
    return out


def aggregate_sector_effect(matrix: EffectMatrix, sectors, panel: Panel,
                            window: EventWindow, se_mode: str | None = None,
                            alpha: float | None = None) -> dict[str, EffectEstimate]:
    """Re-estimate gamma per partner on the summed share of a sector set.

    This is a re-estimation on an aggregated panel (shares are additive
    within a month), not an average of per-sector coefficients.
    """
    sectors = tuple(sorted(set(sectors)))
    missing = [s for s in sectors if s not in panel.sectors]
    if missing:
        raise ValueError(f"sector(s) not in panel: {', '.join(missing)}")
    se_mode = se_mode if se_mode is not None else matrix.meta.get("se_mode", "robust")
    alpha = alpha if alpha is not None else matrix.meta.get("alpha", 0.10)

    label = "+".join(sectors)
    df = panel.df[panel.df["sector"].isin(sectors)]
    grouped = (df.groupby(["partner", "t", "year", "month", *PANEL_CONTROLS],
                          as_index=False)["share"].sum())
    grouped["sector"] = label
    agg_panel = Panel(reporter=panel.reporter, flow=panel.flow,
                      denominator=panel.denominator, df=grouped,
                      partners=panel.partners, sectors=(label,),
                      t_range=panel.t_range, meta=dict(panel.meta))

    out = {}
    for p in panel.partners:
        try:
            out[p] = run_event_study(agg_panel, p, label, window,
                                     se_mode=se_mode, alpha=alpha)
        except (InsufficientDataError, DegenerateFitError) as exc:
            out[p] = EffectEstimate(partner=p, sector=label, gamma=None, se=None,
                                    t_stat=None, p_value=None, significant=False,
                                    alpha=alpha, estimable=False, note=str(exc))
    return out


# ---------------------------------------------------------------------------
# CSV emitters
# ---------------------------------------------------------------------------

def write_effects_csv(path: str | Path, matrices) -> None:
    header = ["reporter", "flow", "window", "partner", "sector", "gamma", "se", "t",
              "p", "significant", "estimable"]
    rows = []
    for m in matrices:
        for p in m.partners:
            for s in m.sectors:
                c = m.cells[(p, s)]
                if c.estimable:
                    rows.append([m.reporter, m.flow, m.window.label, p, s,
                                 float(c.gamma), float(c.se), float(c.t_stat),
                                 float(c.p_value), c.significant, True])
                else:
                    rows.append([m.reporter, m.flow, m.window.label, p, s,
                                 "", "", "", "", False, False])
    write_csv_atomic(path, header, rows)


def write_dual_positive_csv(path: str | Path, pairs) -> None:
    write_csv_atomic(path, ["partner", "sector"], [[p, s] for p, s in pairs])


def write_heatmap_csv(path: str | Path, matrices) -> None:
    """Pivot of gamma by partner (rows) x sector (columns); insignificant and
    not-estimable cells are blank, mirroring a masked heatmap."""
    matrices = list(matrices)
    sectors = sorted({s for m in matrices for s in m.sectors})
    header = ["reporter", "flow", "window", "partner"] + sectors
    rows = []
    for m in matrices:
        for p in m.partners:
            row = [m.reporter, m.flow, m.window.label, p]
            for s in sectors:
                c = m.cells.get((p, s))
                keep = c is not None and c.estimable and c.significant
                row.append(float(c.gamma) if keep else "")
            rows.append(row)
    write_csv_atomic(path, header, rows)
