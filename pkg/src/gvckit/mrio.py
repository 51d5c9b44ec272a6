"""Multi-regional input-output tables: loading, validation, coefficient algebra.

An MRIO table records, for G countries x N sectors, the intermediate-flow
matrix Z, final demand Y (pre-summed to one column per destination country),
the value-added row VA, and gross output X. Everything downstream consumes
the derived coefficient system: input coefficients A = Z / X (columnwise),
value-added coefficients V = 1 - colsum(A), the global Leontief inverse
B = (I - A)^-1 and per-country local inverses L_s = (I_N - A_ss)^-1.

Tables are immutable once built and safe to share across workers. A seeded
synthetic-world generator produces balanced desk-scale tables for testing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import DataFormatError, NumericalError, UnknownCodeError
from .io_utils import fmt, write_text_atomic

# Fixed numerical contract, recorded in run manifests.
BALANCE_RTOL = 1e-6      # accounting-balance relative tolerance
LEONTIEF_RESID_TOL = 1e-9   # max-norm bound on ||B(I-A) - I|| and local analogues
CLOSURE_TOL = 1e-10      # bound on |sum_i V[i] B[i,j] - 1| over positive-output columns
COND_LIMIT = 1e12        # condition estimate above this is a numerical failure


@dataclass(frozen=True, eq=False)
class MrioTable:
    """One year's world input-output accounts for G countries x N sectors.

    Row/column index (t, i) flattens to t*N + i with countries and sectors in
    listed order. Arrays are coerced to float64 and frozen read-only.
    """

    year: int
    countries: tuple[str, ...]
    sectors: tuple[str, ...]
    Z: np.ndarray   # (G*N, G*N) intermediate flows
    Y: np.ndarray   # (G*N, G) final demand, one column per destination
    VA: np.ndarray  # (G*N,) value added
    X: np.ndarray   # (G*N,) gross output

    def __post_init__(self):
        countries = tuple(str(c) for c in self.countries)
        sectors = tuple(str(s) for s in self.sectors)
        if len(set(countries)) != len(countries):
            raise DataFormatError("duplicate country codes: %s" % _dupes(countries))
        if len(set(sectors)) != len(sectors):
            raise DataFormatError("duplicate sector codes: %s" % _dupes(sectors))
        if not countries or not sectors:
            raise DataFormatError("need at least one country and one sector")
        gn = len(countries) * len(sectors)
        arrays = {}
        for name, shape in (("Z", (gn, gn)), ("Y", (gn, len(countries))),
                            ("VA", (gn,)), ("X", (gn,))):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise DataFormatError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            arrays[name] = arr
        object.__setattr__(self, "countries", countries)
        object.__setattr__(self, "sectors", sectors)
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    @property
    def G(self) -> int:
        return len(self.countries)

    @property
    def N(self) -> int:
        return len(self.sectors)

    def country_index(self, code: str) -> int:
        try:
            return self.countries.index(code)
        except ValueError:
            raise UnknownCodeError(f"country {code!r} not in table "
                                   f"(have {', '.join(self.countries)})") from None

    def block(self, code: str) -> slice:
        """Row/column slice of the G*N axis belonging to one country."""
        t = self.country_index(code)
        return slice(t * self.N, (t + 1) * self.N)

    def label(self, flat_index: int) -> str:
        """Human-readable 'COUNTRY/SECTOR' label for a flat row/column index."""
        return f"{self.countries[flat_index // self.N]}/{self.sectors[flat_index % self.N]}"


@dataclass(frozen=True, eq=False)
class CoefMatrices:
    """Coefficient system derived from one table.

    A and V follow the zero-output convention: columns with X[j] = 0 carry
    A[:, j] = 0 and V[j] = 0. L is stacked per country, shape (G, N, N).
    """

    A: np.ndarray
    V: np.ndarray
    B: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        for name in ("A", "V", "B", "L"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass
class Finding:
    """One validation finding with a location and a magnitude."""
    code: str
    location: str
    magnitude: float
    message: str

    def __str__(self):
        return f"[{self.code}] {self.message}"


@dataclass
class ValidationReport:
    violations: list[Finding] = field(default_factory=list)
    warnings: list[Finding] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        lines = [f"violations: {len(self.violations)}, warnings: {len(self.warnings)}"]
        lines += [f"  VIOLATION {f}" for f in self.violations]
        lines += [f"  warning   {f}" for f in self.warnings]
        return "\n".join(lines)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for the seeded synthetic-world generator."""
    G: int
    N: int
    seed: int
    density: float = 0.6
    inventory: bool = False
    year: int = 2019


def _dupes(items) -> str:
    seen, out = set(), []
    for it in items:
        if it in seen and it not in out:
            out.append(it)
        seen.add(it)
    return ", ".join(repr(d) for d in out)


# ---------------------------------------------------------------------------
# Canonical CSV ("mrio-canonical v1")
# ---------------------------------------------------------------------------
# Row 1: year,<G>,<N>
# Row 2: G country codes.  Row 3: N sector codes.
# Then G*N rows of Z (G*N columns), G*N rows of Y (G columns),
# one VA row (G*N columns), one X row (G*N columns).

def load_mrio(path: str | Path) -> MrioTable:
    """Parse a canonical MRIO CSV. Purely structural; run validate_mrio after."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataFormatError(f"{path}: empty file")

    header = rows[0]
    if len(header) != 3:
        raise DataFormatError(f"{path}: row 1 must be 'year,G,N', got {len(header)} cells")
    try:
        year, g, n = (int(c) for c in header)
    except ValueError:
        raise DataFormatError(f"{path}: row 1 must hold three integers, got {header}") from None
    if g < 1 or n < 1:
        raise DataFormatError(f"{path}: row 1 declares G={g}, N={n}; both must be positive")

    gn = g * n
    expected_rows = 3 + gn + gn + 2
    if len(rows) != expected_rows:
        raise DataFormatError(f"{path}: expected {expected_rows} rows for G={g}, N={n}, "
                              f"found {len(rows)}")

    countries = [c.strip() for c in rows[1]]
    if len(countries) != g:
        raise DataFormatError(f"{path}: row 2 has {len(rows[1])} country codes, expected {g}")
    dup = _dupes(countries)
    if dup:
        raise DataFormatError(f"{path}: row 2 has duplicated country code(s) {dup}")
    sectors = [c.strip() for c in rows[2]]
    if len(sectors) != n:
        raise DataFormatError(f"{path}: row 3 has {len(rows[2])} sector codes, expected {n}")
    dup = _dupes(sectors)
    if dup:
        raise DataFormatError(f"{path}: row 3 has duplicated sector code(s) {dup}")

    def parse_block(start: int, nrows: int, ncols: int, what: str) -> np.ndarray:
        out = np.empty((nrows, ncols))
        for i in range(nrows):
            row = rows[start + i]
            if len(row) != ncols:
                raise DataFormatError(f"{path}: {what} row {start + i + 1} has {len(row)} "
                                      f"cells, expected {ncols}")
            for j, cell in enumerate(row):
                try:
                    out[i, j] = float(cell)
                except ValueError:
                    raise DataFormatError(f"{path}: non-numeric cell {cell!r} at row "
                                          f"{start + i + 1}, column {j + 1} ({what})") from None
        return out

    z = parse_block(3, gn, gn, "Z")
    y = parse_block(3 + gn, gn, g, "Y")
    va = parse_block(3 + 2 * gn, 1, gn, "VA")[0]
    x = parse_block(3 + 2 * gn + 1, 1, gn, "X")[0]
    return MrioTable(year=year, countries=tuple(countries), sectors=tuple(sectors),
                     Z=z, Y=y, VA=va, X=x)


def write_mrio(table: MrioTable, path: str | Path) -> None:
    """Emit a table in the canonical CSV layout (exact float round-trip)."""
    lines = [f"{table.year},{table.G},{table.N}",
             ",".join(table.countries),
             ",".join(table.sectors)]
    for row in table.Z:
        lines.append(",".join(fmt(v) for v in row))
    for row in table.Y:
        lines.append(",".join(fmt(v) for v in row))
    lines.append(",".join(fmt(v) for v in table.VA))
    lines.append(",".join(fmt(v) for v in table.X))
    write_text_atomic(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _rel(diff: float, *scales: float) -> float:
    denom = max(*(abs(s) for s in scales), 1e-300)
    return abs(diff) / denom


def validate_mrio(table: MrioTable) -> ValidationReport:
    """Check the accounting identities and sign conventions.

    Passes iff both balances hold within BALANCE_RTOL and no negative Z, VA,
    or X entries exist. Negative Y cells are warnings (inventory drawdowns)
    as long as each Y column sum stays nonnegative.
    """
    rep = ValidationReport()
    gn = table.G * table.N

    if table.G < 2:
        rep.violations.append(Finding(
            "world-size", "countries", float(table.G),
            f"table has G={table.G} countries; at least 2 are required"))

    col_lhs = table.Z.sum(axis=0) + table.VA
    row_lhs = table.Z.sum(axis=1) + table.Y.sum(axis=1)
    for j in range(gn):
        r = _rel(table.X[j] - col_lhs[j], table.X[j], col_lhs[j])
        if r > BALANCE_RTOL:
            rep.violations.append(Finding(
                "column-balance", f"column {j} ({table.label(j)})", r,
                f"X[{j}] = {table.X[j]:.6g} vs inputs+VA = {col_lhs[j]:.6g} "
                f"(relative gap {r:.3g})"))
    for i in range(gn):
        r = _rel(table.X[i] - row_lhs[i], table.X[i], row_lhs[i])
        if r > BALANCE_RTOL:
            rep.violations.append(Finding(
                "row-balance", f"row {i} ({table.label(i)})", r,
                f"X[{i}] = {table.X[i]:.6g} vs sales+final = {row_lhs[i]:.6g} "
                f"(relative gap {r:.3g})"))

    for name, arr in (("Z", table.Z), ("VA", table.VA), ("X", table.X)):
        neg = np.argwhere(np.atleast_2d(arr) < 0)
        for idx in neg:
            loc = tuple(int(v) for v in idx)
            rep.violations.append(Finding(
                f"negative-{name}", f"{name}{loc}", float(np.atleast_2d(arr)[tuple(idx)]),
                f"{name} entry at {loc} is negative"))

    for (i, u) in np.argwhere(table.Y < 0):
        rep.warnings.append(Finding(
            "negative-Y", f"Y[{i},{u}] ({table.label(i)} -> {table.countries[u]})",
            float(table.Y[i, u]),
            f"negative final-demand cell Y[{i},{u}] = {table.Y[i, u]:.6g} "
            "(inventory drawdown)"))
    ycolsum = table.Y.sum(axis=0)
    for u in range(table.G):
        if ycolsum[u] < -1e-12 * max(np.abs(table.Y[:, u]).sum(), 1.0):
            rep.violations.append(Finding(
                "negative-Y-column", f"Y column {u} ({table.countries[u]})",
                float(ycolsum[u]),
                f"final demand of {table.countries[u]} sums to {ycolsum[u]:.6g} < 0"))
    return rep


# ---------------------------------------------------------------------------
# Coefficients and Leontief inverses
# ---------------------------------------------------------------------------

def coefficients(table: MrioTable) -> CoefMatrices:
    """Build A, V, the global inverse B, and the per-country local inverses L.

    Dense LU factorization with a condition estimate and residual
    verification; one Newton refinement pass is applied if the residual bound
    fails, then the bound is enforced. Columns with X[j] = 0 follow the
    zero-output convention (A column and V entry set to 0).
    """
    gn = table.G * table.N
    x = table.X
    pos = x > 0
    a = np.zeros((gn, gn))
    np.divide(table.Z, x[None, :], out=a, where=pos[None, :])
    v = np.where(pos, 1.0 - a.sum(axis=0), 0.0)

    m = np.eye(gn) - a
    anorm = np.abs(m).sum(axis=0).max()
    lu, piv = scipy.linalg.lu_factor(m)
    rcond, info = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond <= 0 or 1.0 / rcond > COND_LIMIT:
        cond = np.inf if rcond <= 0 else 1.0 / rcond
        raise NumericalError(f"(I - A) is near-singular: 1-norm condition estimate "
                             f"{cond:.3e} exceeds {COND_LIMIT:.0e}")
    b = scipy.linalg.lu_solve((lu, piv), np.eye(gn))
    resid = np.abs(b @ m - np.eye(gn)).max()
    if resid > LEONTIEF_RESID_TOL:
        b = b @ (2.0 * np.eye(gn) - m @ b)
        resid = np.abs(b @ m - np.eye(gn)).max()
        if resid > LEONTIEF_RESID_TOL:
            raise NumericalError(f"Leontief residual {resid:.3e} still above "
                                 f"{LEONTIEF_RESID_TOL:.0e} after refinement")

    n = table.N
    eye_n = np.eye(n)
    local = np.empty((table.G, n, n))
    for s in range(table.G):
        blk = slice(s * n, (s + 1) * n)
        ms = eye_n - a[blk, blk]
        try:
            ls = np.linalg.solve(ms, eye_n)
        except np.linalg.LinAlgError:
            raise NumericalError(f"(I - A_ss) for country {table.countries[s]} "
                                 "is singular") from None
        lres = np.abs(ls @ ms - eye_n).max()
        if lres > LEONTIEF_RESID_TOL:
            ls = ls @ (2.0 * eye_n - ms @ ls)
            lres = np.abs(ls @ ms - eye_n).max()
            if lres > LEONTIEF_RESID_TOL:
                raise NumericalError(f"local Leontief residual {lres:.3e} for country "
                                     f"{table.countries[s]} above {LEONTIEF_RESID_TOL:.0e}")
        local[s] = ls

    closure = np.abs((v @ b)[pos] - 1.0).max(initial=0.0)
    if closure > CLOSURE_TOL:
        raise NumericalError(f"value closure |sum_i V[i] B[i,j] - 1| = {closure:.3e} "
                             f"exceeds {CLOSURE_TOL:.0e}")
    return CoefMatrices(A=a, V=v, B=b, L=local)


# ---------------------------------------------------------------------------
# Synthetic worlds
# ---------------------------------------------------------------------------

def synth_mrio(spec: SynthSpec) -> MrioTable:
    """Generate a balanced synthetic world, deterministic per seed.

    Column sums of the generated A never exceed 0.8, Y is drawn positive
    (one small negative cell when the inventory flag is set), and X = B * y
    so both accounting balances hold by construction.
    """
    if spec.G < 2 or spec.N < 1:
        raise ValueError(f"need G >= 2 and N >= 1, got G={spec.G}, N={spec.N}")
    if not 0.0 <= spec.density <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {spec.density}")
    rng = np.random.default_rng(spec.seed)
    g, n = spec.G, spec.N
    gn = g * n

    raw = rng.random((gn, gn)) * (rng.random((gn, gn)) < spec.density)
    targets = rng.uniform(0.2, 0.8, size=gn)
    colsums = raw.sum(axis=0)
    scale = np.divide(targets, colsums, out=np.zeros(gn), where=colsums > 0)
    a = raw * scale[None, :]

    y = rng.uniform(0.1, 1.0, size=(gn, g))
    for u in range(g):
        y[u * n:(u + 1) * n, u] *= 2.0  # home bias in final demand
    if spec.inventory:
        i = int(rng.integers(0, gn))
        u = int(rng.integers(0, g))
        y[i, u] = -0.05 * y[i, u]

    x = np.linalg.solve(np.eye(gn) - a, y.sum(axis=1))
    z = a * x[None, :]
    va = (1.0 - a.sum(axis=0)) * x

    countries = tuple(f"S{k:02d}" for k in range(g))
    sectors = tuple(f"C{k + 1}" for k in range(n))
    return MrioTable(year=spec.year, countries=countries, sectors=sectors,
                     Z=z, Y=y, VA=va, X=x)
