"""Bilateral gross-export decomposition and GVC participation/position indices.

Gross exports from country s to r, E = A_sr X_r + Y_sr, split into eight
labeled value-added groups (domestic value added absorbed abroad, returned
home, double counted, and the foreign mirror terms). The groups sum back to
E identically, and the first five carry exactly the domestic content
(V_s B_ss) * E, which is what the conservation tests pin down.

Participation and position indices are ratios of group sums over a sector
subset: forward = re-exported + re-imported domestic value added (groups 3-4),
backward = importer and third-country value added (groups 6-7), both as
shares of total gross exports; position is the difference of log(1 + share).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidPairError, UnknownCodeError
from .io_utils import write_csv_atomic
from .mrio import CoefMatrices, MrioTable

GROUP_LABELS = {
    "G1": "Domestic value added of final exports",
    "G2": "Domestic value added of intermediate exports absorbed by direct importers",
    "G3": "Domestic value added re-exported to third countries",
    "G4": "Domestic value added returned to the exporting country via re-imports",
    "G5": "Double counted domestic value added",
    "G6": "Direct importer's value added embedded in exports",
    "G7": "Third-country value added implicitly in domestic exports",
    "G8": "Foreign value-added double-counting terms",
}
GROUP_KEYS = tuple(GROUP_LABELS)


@dataclass(frozen=True, eq=False)
class DecompGroups:
    """Eight grouped value-added components of one bilateral export flow.

    Each group is a sector vector (length N, currency units); `E` is the
    gross-export vector they sum to.
    """

    exporter: str
    importer: str
    year: int
    sectors: tuple[str, ...]
    E: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    G3: np.ndarray
    G4: np.ndarray
    G5: np.ndarray
    G6: np.ndarray
    G7: np.ndarray
    G8: np.ndarray

    def group(self, key: str) -> np.ndarray:
        return getattr(self, key)

    def group_sum(self) -> np.ndarray:
        total = np.zeros_like(self.E)
        for key in GROUP_KEYS:
            total = total + self.group(key)
        return total

    def domestic(self) -> np.ndarray:
        """Groups 1-5: value added originating in the exporter."""
        return self.G1 + self.G2 + self.G3 + self.G4 + self.G5

    def foreign(self) -> np.ndarray:
        """Groups 6-8: importer and third-country value added."""
        return self.G6 + self.G7 + self.G8


@dataclass(frozen=True)
class GvcIndices:
    """Participation/position over one sector subset of one bilateral flow.

    All numeric fields are None when the subset's gross exports are <= 0
    (`defined` is False): a no-trade cell is distinct from a zero index.
    """

    forward_share: float | None
    backward_share: float | None
    participation: float | None
    position: float | None
    sector_subset: tuple[str, ...]
    defined: bool


def gross_exports(table: MrioTable, coef: CoefMatrices, s: str, r: str) -> np.ndarray:
    """Sector vector of gross exports from s to r: intermediates plus final demand."""
    if s == r:
        raise InvalidPairError(f"exporter and importer are both {s!r}")
    sblk, rblk = table.block(s), table.block(r)
    r_idx = table.country_index(r)
    return coef.A[sblk, rblk] @ table.X[rblk] + table.Y[sblk, r_idx]


def _zero_blocks(vec: np.ndarray, *blocks: slice) -> np.ndarray:
    out = vec.copy()
    for blk in blocks:
        out[blk] = 0.0
    return out


def decompose(table: MrioTable, coef: CoefMatrices, s: str, r: str) -> DecompGroups:
    """Decompose the s -> r gross-export vector into the eight groups."""
    s_idx, r_idx = table.country_index(s), table.country_index(r)
    if s_idx == r_idx:
        raise InvalidPairError(f"exporter and importer are both {s!r}")
    ydiag, ysum = _demand_vectors(table)
    return _decompose_pair(table, coef, s_idx, r_idx, ydiag, ysum)


def _demand_vectors(table: MrioTable):
    """Stacked own-final-demand vector Y_tt and row sums of Y."""
    n = table.N
    ydiag = np.empty(table.G * n)
    for t in range(table.G):
        ydiag[t * n:(t + 1) * n] = table.Y[t * n:(t + 1) * n, t]
    return ydiag, table.Y.sum(axis=1)


def _decompose_pair(table: MrioTable, coef: CoefMatrices, s_idx: int, r_idx: int,
                    ydiag: np.ndarray, ysum: np.ndarray) -> DecompGroups:
    n = table.N
    sblk = slice(s_idx * n, (s_idx + 1) * n)
    rblk = slice(r_idx * n, (r_idx + 1) * n)

    a_sr = coef.A[sblk, rblk]
    x_r = table.X[rblk]
    y_sr = table.Y[sblk, r_idx]
    e = a_sr @ x_r + y_sr

    vb_ss = coef.V[sblk] @ coef.B[sblk, sblk]
    vl_ss = coef.V[sblk] @ coef.L[s_idx]
    vb_rs = coef.V[rblk] @ coef.B[rblk, sblk]
    # third-country value-added row: sum over t outside {s, r}; exactly zero
    # in a two-country world because the masked vector vanishes
    vb_ts = _zero_blocks(coef.V, sblk, rblk) @ coef.B[:, sblk]

    b_r = coef.B[rblk, :]
    b_rr = coef.B[rblk, rblk]
    b_rs = coef.B[rblk, sblk]
    l_rr = coef.L[r_idx]
    y_rr = table.Y[rblk, r_idx]
    y_rs = table.Y[rblk, s_idx]
    y_ss = table.Y[sblk, s_idx]

    g1 = vb_ss * y_sr
    g2 = vl_ss * (a_sr @ (b_rr @ y_rr))

    # demand absorbed in third countries, reached through r's production
    third_own = b_r @ _zero_blocks(ydiag, sblk, rblk)
    r_to_third = np.delete(table.Y[rblk, :], [s_idx, r_idx], axis=1).sum(axis=1)
    onward = b_r @ _zero_blocks(ysum - table.Y[:, s_idx] - ydiag, sblk, rblk)
    g3 = vl_ss * (a_sr @ (third_own + b_rr @ r_to_third + onward))

    back_home = b_rr @ y_rs + b_r @ _zero_blocks(table.Y[:, s_idx], sblk, rblk) + b_rs @ y_ss
    g4 = vl_ss * (a_sr @ back_home)

    s_exports_final = np.delete(table.Y[sblk, :], [s_idx], axis=1).sum(axis=1)
    g5 = vl_ss * (a_sr @ (b_rs @ s_exports_final)) + (vb_ss - vl_ss) * (a_sr @ x_r)

    absorbed_in_r = y_sr + a_sr @ (l_rr @ y_rr)
    g6 = vb_rs * absorbed_in_r
    g7 = vb_ts * absorbed_in_r
    g8 = (vb_rs + vb_ts) * (a_sr @ (x_r - l_rr @ y_rr))

    return DecompGroups(
        exporter=table.countries[s_idx], importer=table.countries[r_idx],
        year=table.year, sectors=table.sectors, E=e,
        G1=g1, G2=g2, G3=g3, G4=g4, G5=g5, G6=g6, G7=g7, G8=g8)


def decompose_all(table: MrioTable, coef: CoefMatrices) -> list[DecompGroups]:
    """Decompose every ordered pair s != r, sorted lexicographically by codes."""
    ydiag, ysum = _demand_vectors(table)
    order = sorted(range(table.G), key=lambda t: table.countries[t])
    out = []
    for s_idx in order:
        for r_idx in order:
            if s_idx != r_idx:
                out.append(_decompose_pair(table, coef, s_idx, r_idx, ydiag, ysum))
    return out


# ---------------------------------------------------------------------------
# Indices
# ---------------------------------------------------------------------------

def indices(groups: DecompGroups, sector_subset) -> GvcIndices:
    """Participation and position over a sector subset (ratios of sums).

    Forward share: re-exported plus re-imported domestic value added (groups
    3-4) over gross exports. Backward share: importer plus third-country
    value added (groups 6-7) over gross exports. Undefined (all None) when
    the subset's gross exports are <= 0.
    """
    subset = tuple(sector_subset)
    if not subset:
        raise UnknownCodeError("sector subset is empty")
    unknown = [c for c in subset if c not in groups.sectors]
    if unknown:
        raise UnknownCodeError(f"sector code(s) {', '.join(map(repr, unknown))} not in "
                               f"table sectors")
    mask = np.array([c in set(subset) for c in groups.sectors])

    e_tot = float(groups.E[mask].sum())
    if e_tot <= 0.0:
        return GvcIndices(None, None, None, None, subset, defined=False)
    fwd = float((groups.G3 + groups.G4)[mask].sum()) / e_tot
    bwd = float((groups.G6 + groups.G7)[mask].sum()) / e_tot
    return GvcIndices(
        forward_share=fwd,
        backward_share=bwd,
        participation=fwd + bwd,
        position=math.log1p(fwd) - math.log1p(bwd),
        sector_subset=subset,
        defined=True,
    )


def indices_series(tables, s: str, r: str, sector_subset) -> list[tuple[int, GvcIndices]]:
    """One (year, GvcIndices) entry per table, ascending by year.

    Undefined cells are carried through with defined=False, never dropped.
    """
    from .mrio import coefficients

    tables = sorted(tables, key=lambda t: t.year)
    if not tables:
        raise ValueError("need at least one table")
    ref = tables[0]
    for t in tables[1:]:
        if t.countries != ref.countries or t.sectors != ref.sectors:
            raise ValueError(f"table for year {t.year} has different country/sector "
                             f"lists than year {ref.year}")
    out = []
    for t in tables:
        coef = coefficients(t)
        out.append((t.year, indices(decompose(t, coef, s, r), sector_subset)))
    return out


# ---------------------------------------------------------------------------
# CSV emitters
# ---------------------------------------------------------------------------

def write_decomp_csv(path: str | Path, all_groups) -> None:
    """decomp.csv: one row per (year, exporter, importer, sector)."""
    header = ["year", "exporter", "importer", "sector", "E"] + list(GROUP_KEYS)
    rows = []
    for g in all_groups:
        for k, sector in enumerate(g.sectors):
            rows.append([g.year, g.exporter, g.importer, sector, float(g.E[k])]
                        + [float(g.group(key)[k]) for key in GROUP_KEYS])
    write_csv_atomic(path, header, rows)


def write_indices_csv(path: str | Path, records) -> None:
    """indices.csv rows from (year, exporter, importer, group_name, GvcIndices)."""
    header = ["year", "exporter", "importer", "sector_group", "forward_share",
              "backward_share", "participation", "position", "defined"]
    rows = []
    for year, exporter, importer, group_name, ix in records:
        if ix.defined:
            rows.append([year, exporter, importer, group_name, ix.forward_share,
                         ix.backward_share, ix.participation, ix.position, True])
        else:
            rows.append([year, exporter, importer, group_name, "", "", "", "", False])
    write_csv_atomic(path, header, rows)
