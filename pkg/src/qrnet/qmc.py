"""Base-2 digital nets (Sobol' construction), randomizations and diagnostics.

Points are generated to 32 bits of depth from an embedded direction-number
table (primitive-polynomial construction, dimensions up to 32); a table in the
published text format (d, s, a, m_i per line) can be supplied to override the
embedded one. Randomizations: nested uniform scrambling with hash-derived
permutation bits (O(1) memory, reproducible by seed) and per-dimension digital
(XOR) shift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BITS = 32
_SCALE = 2.0**-BITS
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# Primitive-polynomial table, dimensions 2..32, one line per dimension in the
# published "d s a m_i" format (dimension 1 is the plain van der Corput radix-2
# sequence and needs no entry).
_TABLE = """\
2 1 0 1
3 2 1 1 3
4 3 1 1 3 1
5 3 2 1 1 1
6 4 1 1 1 3 3
7 4 4 1 3 5 13
8 5 2 1 1 5 5 17
9 5 4 1 1 5 5 5
10 5 7 1 1 7 11 19
11 5 11 1 1 5 1 1
12 5 13 1 1 1 3 11
13 5 14 1 3 5 5 31
14 6 1 1 3 3 9 7 49
15 6 13 1 1 1 15 21 21
16 6 16 1 3 1 13 27 49
17 6 19 1 1 1 15 7 5
18 6 22 1 3 1 15 13 25
19 6 25 1 1 5 5 19 61
20 7 1 1 3 7 11 23 15 103
21 7 4 1 3 7 13 13 15 69
22 7 7 1 1 3 13 7 35 63
23 7 8 1 3 5 9 1 25 53
24 7 14 1 3 1 13 9 35 107
25 7 19 1 3 1 5 27 61 31
26 7 21 1 1 5 11 19 41 61
27 7 28 1 3 5 3 3 13 69
28 7 31 1 1 7 13 1 19 1
29 7 32 1 3 7 5 13 19 59
30 7 37 1 1 3 9 25 29 41
31 7 41 1 3 5 13 23 1 55
32 7 42 1 3 7 3 13 59 17
"""


class UnsupportedDimensionError(ValueError):
    pass


def _parse_table(text: str) -> dict[int, tuple[int, int, list[int]]]:
    rows = {}
    for line in text.strip().splitlines():
        parts = line.split()
        if not parts or parts[0].lower() == "d":
            continue  # tolerate the usual header line
        d, s, a = int(parts[0]), int(parts[1]), int(parts[2])
        m = [int(x) for x in parts[3 : 3 + s]]
        if len(m) != s:
            raise ValueError(f"direction table row for d={d} lists {len(m)} m-values, needs {s}")
        rows[d] = (s, a, m)
    return rows


def _direction_column(s: int, a: int, m_init: list[int]) -> np.ndarray:
    """32 direction integers v_k = m_k * 2^(32-k) for one dimension."""
    m = list(m_init)
    for k in range(s, BITS):
        new = m[k - s] ^ (m[k - s] << s)
        for i in range(1, s):
            if (a >> (s - 1 - i)) & 1:
                new ^= m[k - i] << i
        m.append(new)
    v = np.array([m[k] << (BITS - 1 - k) for k in range(BITS)], dtype=np.uint64)
    return v.astype(np.uint32)


@dataclass
class DigitalNet:
    """Immutable digital-net generator: direction numbers for p dimensions."""

    dimension: int
    directions: np.ndarray  # (p, BITS) uint32

    @classmethod
    def sobol(cls, dimension: int, table_path: str | None = None) -> "DigitalNet":
        if dimension < 1:
            raise ValueError("dimension must be at least 1")
        table = _parse_table(_TABLE) if table_path is None else _parse_table(
            open(table_path).read()
        )
        max_dim = max(table.keys(), default=1)
        if dimension > max_dim:
            raise UnsupportedDimensionError(
                f"dimension {dimension} exceeds the direction table (max {max_dim})"
            )
        cols = [np.array([1 << (BITS - 1 - k) for k in range(BITS)], dtype=np.uint32)]
        for d in range(2, dimension + 1):
            s, a, m = table[d]
            cols.append(_direction_column(s, a, m))
        return cls(dimension=dimension, directions=np.vstack(cols[:dimension]))


@dataclass
class PointSet:
    """n x p points in [0,1) plus the provenance of their randomization."""

    points: np.ndarray
    randomization: str  # "raw" | "scrambled" | "digital_shift"
    seed: int | None = None
    index_offset: int = 0

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]


def _raw_ints(net: DigitalNet, n: int, index_offset: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be at least 1")
    if index_offset < 0 or index_offset + n > 1 << BITS:
        raise ValueError("index range exceeds the 32-bit point budget")
    idx = np.arange(index_offset, index_offset + n, dtype=np.uint64)
    gray = idx ^ (idx >> np.uint64(1))
    x = np.zeros((n, net.dimension), dtype=np.uint32)
    for b in range(BITS):
        rows = ((gray >> np.uint64(b)) & np.uint64(1)).astype(bool)
        if rows.any():
            x[rows] ^= net.directions[:, b]
    return x


def sobol_raw(
    p: int, n: int, index_offset: int = 0, net: DigitalNet | None = None
) -> PointSet:
    """Deterministic Sobol' points index_offset .. index_offset+n-1 (origin at 0)."""
    net = net or DigitalNet.sobol(p)
    x = _raw_ints(net, n, index_offset)
    return PointSet(x * _SCALE, "raw", seed=None, index_offset=index_offset)


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):  # uint64 wraparound is the point
        z = (z + _GOLDEN).astype(np.uint64)
        z ^= z >> np.uint64(30)
        z *= _MIX1
        z ^= z >> np.uint64(27)
        z *= _MIX2
        z ^= z >> np.uint64(31)
    return z


def _dim_key(seed: int, j: int) -> np.uint64:
    with np.errstate(over="ignore"):
        return _mix64(np.uint64(seed) ^ (np.uint64(j + 1) * _GOLDEN))


def owen_scramble(
    net: DigitalNet, n: int, seed: int, index_offset: int = 0
) -> PointSet:
    """Nested uniform scrambling of the first n net points, to 32 bits.

    The permutation bit at every node of the binary digit tree is a keyed hash
    of (seed, dimension, node path), so no permutation tree is materialized and
    the scramble is reproducible. Output values sit at dyadic cell centres, so
    every coordinate is strictly inside (0, 1).
    """
    x = _raw_ints(net, n, index_offset)
    out = np.empty_like(x)
    for j in range(net.dimension):
        key = _dim_key(seed, j)
        col = x[:, j].astype(np.uint64)
        scrambled = col.copy()
        for k in range(BITS):
            prefix = col >> np.uint64(BITS - k) if k else np.zeros(n, dtype=np.uint64)
            node = (np.uint64(1) << np.uint64(k)) + prefix
            flip = _mix64(key ^ (node * _GOLDEN)) & np.uint64(1)
            scrambled ^= flip << np.uint64(BITS - 1 - k)
        out[:, j] = scrambled.astype(np.uint32)
    pts = (out + 0.5) * _SCALE
    return PointSet(pts, "scrambled", seed=seed, index_offset=index_offset)


def digital_shift(
    net: DigitalNet,
    n: int,
    seed: int,
    index_offset: int = 0,
    words: np.ndarray | None = None,
) -> PointSet:
    """Per-dimension 32-bit XOR shift of the first n net points.

    The shift words derive from the seed; passing explicit words (e.g. zeros)
    overrides them. A zero word reproduces the raw points exactly.
    """
    x = _raw_ints(net, n, index_offset)
    if words is None:
        keys = np.array([_dim_key(seed, j) for j in range(net.dimension)], dtype=np.uint64)
        words = (_mix64(keys ^ np.uint64(0xD1B54A32D192ED03)) & np.uint64(0xFFFFFFFF)).astype(
            np.uint32
        )
    else:
        words = np.asarray(words, dtype=np.uint32)
        if words.shape != (net.dimension,):
            raise ValueError("words must provide one 32-bit word per dimension")
    pts = (x ^ words[None, :]) * _SCALE
    return PointSet(pts, "digital_shift", seed=seed, index_offset=index_offset)


# -- star discrepancy ---------------------------------------------------------


@dataclass
class DiscrepancyResult:
    value: float
    exact: bool
    grid_m: int | None = None


def star_discrepancy(points, grid_m: int | None = None) -> DiscrepancyResult:
    """Star discrepancy: exact for p <= 2, guaranteed grid upper bound for p <= 5.

    The bound for p in {3,4,5} is taken over a uniform refinement grid with
    grid_m cells per axis (reported in the result); it never understates the
    true value.
    """
    pts = points.points if isinstance(points, PointSet) else np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, p = pts.shape
    if p == 1:
        x = np.sort(pts[:, 0])
        i = np.arange(1, n + 1)
        val = np.maximum(np.abs(x - (i - 1) / n), np.abs(x - i / n)).max()
        return DiscrepancyResult(float(val), exact=True)
    if p == 2:
        return DiscrepancyResult(_star_2d_exact(pts), exact=True)
    if p <= 5:
        default = {3: 64, 4: 32, 5: 16}[p]
        m = grid_m or default
        return DiscrepancyResult(_star_grid_bound(pts, m), exact=False, grid_m=m)
    raise UnsupportedDimensionError("star discrepancy supported for p <= 5 only")


def _star_2d_exact(pts: np.ndarray) -> float:
    n = pts.shape[0]
    xs = np.unique(np.concatenate([pts[:, 0], [1.0]]))
    ys = np.unique(np.concatenate([pts[:, 1], [1.0]]))
    # counts over the candidate grid via 2-D prefix sums of rank histograms
    xi_le = np.searchsorted(xs, pts[:, 0], side="left")  # index of first >= value
    yi_le = np.searchsorted(ys, pts[:, 1], side="left")
    H = np.zeros((len(xs) + 1, len(ys) + 1))
    np.add.at(H, (xi_le + 1, yi_le + 1), 1.0)
    cum = H.cumsum(0).cumsum(1)
    count_le = cum[1:, 1:]  # points with x <= xs[i], y <= ys[j]
    count_lt = cum[:-1, :-1]  # points with x < xs[i], y < ys[j]
    vol = np.outer(xs, ys)
    over = (count_le / n - vol).max()
    under = (vol - count_lt / n).max()
    return float(max(over, under, 0.0))


def _star_grid_bound(pts: np.ndarray, m: int) -> float:
    n, p = pts.shape
    edges = np.linspace(0.0, 1.0, m + 1)
    idx = [np.clip(np.searchsorted(edges, pts[:, j], side="right") - 1, 0, m - 1) for j in range(p)]
    H = np.zeros((m + 1,) * p)
    np.add.at(H, tuple(i + 1 for i in idx), 1.0)
    for ax in range(p):
        H = H.cumsum(axis=ax)
    # H[k1..kp] = #points with coordinate j < edges[k_j] (strictly below, since
    # points on a grid line land in the cell to its right)
    grid = edges
    vol_axes = np.ix_(*[grid] * p)
    vol = np.ones((m + 1,) * p)
    for g in vol_axes:
        vol = vol * g
    count_hi = H[(slice(1, None),) * p]  # counts below the upper grid corner
    count_lo = H[(slice(0, m),) * p]
    vol_lo = vol[(slice(0, m),) * p]
    vol_hi = vol[(slice(1, None),) * p]
    over = (count_hi / n - vol_lo).max()
    under = (vol_hi - count_lo / n).max()
    return float(max(over, under, 0.0))
