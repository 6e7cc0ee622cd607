"""Regular column-weight LDPC codes with systematic encoding and sum-product decoding.

Construction: columns are placed one at a time; each column picks its
``column_weight`` check rows at random among the least-loaded rows, never
reusing a row that already shares a column with a row chosen for this
column.  That keeps row weights balanced and removes every length-4 cycle.
Gauss-Jordan elimination over GF(2) then selects parity columns, and the
columns are reordered so every codeword reads ``[message | parity]``.

LLR convention: positive means bit 0 is more likely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import Stream

LLR_CLIP = 50.0
_T_CLIP = 1.0 - 1e-15


class LdpcConstructionError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LdpcCode:
    n: int
    k_info: int
    H: np.ndarray            # (n - k_info, n) uint8, columns ordered [message | parity]
    parity_map: np.ndarray   # (n - k_info, k_info) uint8; parity = parity_map @ u mod 2
    seed: int
    column_weight: int

    @property
    def m(self) -> int:
        return self.n - self.k_info

    @property
    def rate(self) -> float:
        return self.k_info / self.n

    def syndrome(self, codewords: np.ndarray) -> np.ndarray:
        c = np.atleast_2d(np.asarray(codewords, dtype=np.float64))
        return (c @ self.H.T.astype(np.float64)).astype(np.int64) % 2

    def is_codeword(self, c) -> bool:
        return not self.syndrome(c).any()

    def __post_init__(self):
        object.__setattr__(self, "_graph", _Graph(self.H))

    @property
    def graph(self) -> "_Graph":
        return self._graph  # type: ignore[attr-defined]


def _place_columns(n: int, m: int, wc: int, stream: Stream) -> np.ndarray:
    deg = np.zeros(m, dtype=np.int64)
    neighbours = [set() for _ in range(m)]
    rows_of_col = np.empty((n, wc), dtype=np.int64)
    draws = stream.uniform((n, wc))
    for j in range(n):
        chosen: list[int] = []
        forbidden = np.zeros(m, dtype=bool)
        for t in range(wc):
            allowed = ~forbidden
            if not allowed.any():
                raise LdpcConstructionError("ran out of admissible rows")
            dmin = deg[allowed].min()
            cand = np.flatnonzero(allowed & (deg == dmin))
            r = int(cand[int(draws[j, t] * cand.size) % cand.size])
            chosen.append(r)
            forbidden[r] = True
            forbidden[list(neighbours[r])] = True
        for r in chosen:
            deg[r] += 1
            neighbours[r].update(c for c in chosen if c != r)
        rows_of_col[j] = chosen
    return rows_of_col


def _gf2_rref(H: np.ndarray):
    """Gauss-Jordan over GF(2) on bit-packed rows.

    Pivots are searched from the last column backwards so that parity bits
    land at the tail of the codeword whenever possible.  Returns the reduced
    rows (unpacked), pivot column per row and the rank.
    """
    m, n = H.shape
    words = (n + 63) // 64
    padded = np.zeros((m, words * 64), dtype=np.uint8)
    padded[:, :n] = H
    packed = np.packbits(padded, axis=1, bitorder="little").view(np.uint64).copy()
    pivots: list[int] = []
    row = 0
    for col in range(n - 1, -1, -1):
        if row == m:
            break
        w, b = divmod(col, 64)
        bit = np.uint64(1) << np.uint64(b)
        has = (packed[row:, w] & bit) != 0
        hits = np.flatnonzero(has)
        if hits.size == 0:
            continue
        p = row + hits[0]
        if p != row:
            packed[[row, p]] = packed[[p, row]]
        col_bits = (packed[:, w] & bit) != 0
        col_bits[row] = False
        targets = np.flatnonzero(col_bits)
        if targets.size:
            packed[targets] ^= packed[row]
        pivots.append(col)
        row += 1
    rref = np.unpackbits(packed.view(np.uint8), axis=1, bitorder="little")[:, :n]
    return rref, pivots, row


def ldpc_build(n: int, k_info: int, column_weight: int = 3, seed: int = 0, max_retries: int = 8) -> LdpcCode:
    """Seeded (n, k_info) code; re-seeds when the parity matrix is rank deficient."""
    if not 0 < k_info < n:
        raise ValueError("need 0 < k_info < n")
    m = n - k_info
    if column_weight > m:
        raise ValueError("column weight exceeds the number of checks")
    for attempt in range(max_retries):
        stream = Stream(seed, "ldpc", n, k_info, column_weight, attempt)
        try:
            rows_of_col = _place_columns(n, m, column_weight, stream)
        except LdpcConstructionError:
            continue
        H = np.zeros((m, n), dtype=np.uint8)
        H[rows_of_col, np.arange(n)[:, None]] = 1
        rref, pivots, rank = _gf2_rref(H)
        if rank < m:
            continue
        pivot_set = set(pivots)
        info_cols = [c for c in range(n) if c not in pivot_set]
        order = np.array(info_cols + pivots)
        parity_map = rref[:, info_cols].astype(np.uint8)
        code = LdpcCode(n, k_info, H[:, order].copy(), parity_map, seed, column_weight)
        return code
    raise LdpcConstructionError(f"no full-rank ({n}, {k_info}) code after {max_retries} attempts")


def ldpc_encode(code: LdpcCode, message) -> np.ndarray:
    """Systematic encoding; accepts one message (k,) or a batch (B, k)."""
    u = np.asarray(message, dtype=np.uint8)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    if u.shape[1] != code.k_info:
        raise ValueError(f"message length {u.shape[1]} != k_info {code.k_info}")
    parity = (u.astype(np.float64) @ code.parity_map.T.astype(np.float64)).astype(np.int64) % 2
    c = np.concatenate([u, parity.astype(np.uint8)], axis=1)
    return c[0] if single else c


class _Graph:
    """Edge lists of the Tanner graph, ordered by variable node."""

    def __init__(self, H: np.ndarray):
        chk, var = np.nonzero(H)
        order = np.lexsort((chk, var))
        self.var = var[order]
        self.chk = chk[order]
        self.n_var = H.shape[1]
        self.n_chk = H.shape[0]
        self.var_starts = np.searchsorted(self.var, np.arange(self.n_var))
        self.by_chk = np.argsort(self.chk, kind="stable")
        self.chk_starts = np.searchsorted(self.chk[self.by_chk], np.arange(self.n_chk))


def ldpc_decode_bp(code: LdpcCode, llrs, max_iters: int = 50):
    """Sum-product decoding with per-codeword early stopping.

    Returns ``(message_bits, converged, iterations)``; for a batch of LLR rows
    the three results are arrays over the batch.
    """
    L = np.asarray(llrs, dtype=np.float64)
    single = L.ndim == 1
    L = np.clip(np.atleast_2d(L), -LLR_CLIP, LLR_CLIP)
    if L.shape[1] != code.n:
        raise ValueError(f"expected {code.n} LLRs per codeword, got {L.shape[1]}")
    g = code.graph
    B = L.shape[0]
    hard = (L < 0).astype(np.uint8)
    iters = np.zeros(B, dtype=np.int64)
    converged = _syndrome_ok(g, hard)
    active = np.flatnonzero(~converged)
    v2c = L[active][:, g.var]
    for it in range(1, max_iters + 1):
        if active.size == 0:
            break
        # check-node update in the log|tanh| domain
        t = np.tanh(np.clip(v2c[:, g.by_chk], -2 * LLR_CLIP, 2 * LLR_CLIP) / 2.0)
        neg = t < 0
        mag = np.log(np.maximum(np.abs(t), 1e-300))
        mag_sum = np.add.reduceat(mag, g.chk_starts, axis=1)
        neg_sum = np.add.reduceat(neg.astype(np.int64), g.chk_starts, axis=1)
        chk_of_edge = g.chk[g.by_chk]
        excl = np.exp(np.minimum(mag_sum[:, chk_of_edge] - mag, 0.0))
        sign = np.where((neg_sum[:, chk_of_edge] - neg) % 2 == 1, -1.0, 1.0)
        c2v_chk = 2.0 * np.arctanh(np.minimum(excl, _T_CLIP)) * sign
        c2v = np.empty_like(c2v_chk)
        c2v[:, g.by_chk] = c2v_chk
        # variable-node update
        post = L[active] + np.add.reduceat(c2v, g.var_starts, axis=1)
        v2c = post[:, g.var] - c2v
        h = (post < 0).astype(np.uint8)
        hard[active] = h
        iters[active] = it
        ok = _syndrome_ok(g, h)
        converged[active[ok]] = True
        keep = ~ok
        active = active[keep]
        v2c = v2c[keep]
    msg = hard[:, :code.k_info]
    if single:
        return msg[0], bool(converged[0]), int(iters[0])
    return msg, converged, iters


def _syndrome_ok(g: _Graph, hard: np.ndarray) -> np.ndarray:
    bits = hard[:, g.var[g.by_chk]].astype(np.int64)
    parity = np.add.reduceat(bits, g.chk_starts, axis=1) % 2
    return ~parity.any(axis=1)


def bpsk_llrs(codewords: np.ndarray, ebn0_db: float, rate: float, stream: Stream) -> np.ndarray:
    """Channel LLRs for unit-energy BPSK (0 -> +1) over real AWGN at a given Eb/N0."""
    esn0 = rate * 10.0 ** (ebn0_db / 10.0)
    sigma2 = 1.0 / (2.0 * esn0)
    x = 1.0 - 2.0 * np.asarray(codewords, dtype=np.float64)
    y = x + np.sqrt(sigma2) * stream.normal(x.shape)
    return 2.0 * y / sigma2
