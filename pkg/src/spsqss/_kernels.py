"""Per-round sampling kernels.

Every uniform is a pure function of ``(seed, round, slot)`` through a
splitmix64 counter stream, so the numba loop and the vectorized numpy path
produce identical arrays for any chunking or evaluation order.
"""

from __future__ import annotations

import numpy as np

from spsqss._accel import HAVE_NUMBA, DISABLED_BY_ENV, njit

GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
S30, S27, S31, S11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)
ONE = np.uint64(1)
INV53 = 2.0**-53

N_SLOTS = 32
SLOT_HERALD = 0
SLOT_VBS = 1  # six slots: (H, V) photon of each user
SLOT_SURVIVE = 7  # three slots
SLOT_PATTERN = 10
SLOT_SETTING = 11  # three slots
SLOT_LOSS = 14  # three slots
SLOT_BRANCH = 17
SLOT_BITS = 18  # three slots
SLOT_ASSIGN = 21  # three slots
SLOT_FLIP = 24
SLOT_ANNOUNCE = 25

LOST = 2
HERALD_FAIL, HERALD_PLUS, HERALD_MINUS = 0, 1, 2

OUTPUT_FIELDS = ("herald", "pattern", "i", "j", "k", "a", "b", "c", "lost", "flipped", "announced")


def allocate(n: int) -> dict:
    out = {f: np.zeros(n, dtype=np.int8) for f in OUTPUT_FIELDS}
    out["pattern"][:] = -1
    return out


@njit(cache=True)
def _uniform(seed, ctr):
    z = seed + (ctr + ONE) * GAMMA
    z = (z ^ (z >> S30)) * MIX1
    z = (z ^ (z >> S27)) * MIX2
    z = z ^ (z >> S31)
    return float(z >> S11) * INV53


if not hasattr(_uniform, "py_func"):
    # uncompiled fallback: numpy scalars warn on the intended uint64 wraparound
    _uniform_raw = _uniform

    def _uniform(seed, ctr):
        with np.errstate(over="ignore"):
            return _uniform_raw(seed, ctr)


def uniforms(seed: np.uint64, rounds: np.ndarray, slot: int) -> np.ndarray:
    """Vectorized counterpart of ``_uniform`` for an array of round indices."""
    with np.errstate(over="ignore"):
        ctr = rounds.astype(np.uint64) * np.uint64(N_SLOTS) + np.uint64(slot)
        z = seed + (ctr + ONE) * GAMMA
        z = (z ^ (z >> S30)) * MIX1
        z = (z ^ (z >> S27)) * MIX2
        z = z ^ (z >> S31)
    return (z >> S11).astype(np.float64) * INV53


@njit(cache=True)
def _run_numba(
    seed, start, n, fast, p_d, T, eta_t, pat_cdf, pat_class, herald_cdf,
    p_a, bob_cdf, p_c, eta_l, F, pplus, random_assign, advanced, q, announce,
    herald_o, pattern_o, i_o, j_o, k_o, a_o, b_o, c_o, lost_o, flip_o, ann_o,
):
    NS = np.uint64(N_SLOTS)
    for r in range(n):
        base = np.uint64(start + r) * NS
        if fast:
            if not _uniform(seed, base + np.uint64(SLOT_HERALD)) < p_d:
                continue
            u = _uniform(seed, base + np.uint64(SLOT_PATTERN))
            idx = 0
            while idx < herald_cdf.shape[0] - 1 and u >= herald_cdf[idx]:
                idx += 1
        else:
            ok = True
            for user in range(3):
                h_tx = _uniform(seed, base + np.uint64(SLOT_VBS + 2 * user)) < T
                v_tx = _uniform(seed, base + np.uint64(SLOT_VBS + 2 * user + 1)) < T
                if h_tx == v_tx:
                    ok = False
            for user in range(3):
                if not _uniform(seed, base + np.uint64(SLOT_SURVIVE + user)) < eta_t:
                    ok = False
            if not ok:
                continue
            u = _uniform(seed, base + np.uint64(SLOT_PATTERN))
            idx = 0
            while idx < pat_cdf.shape[0] - 1 and u >= pat_cdf[idx]:
                idx += 1
            if pat_class[idx] == HERALD_FAIL:
                continue
        herald_o[r] = pat_class[idx]
        pattern_o[r] = idx
        ii = 1 if _uniform(seed, base + np.uint64(SLOT_SETTING)) < p_a else 2
        ub = _uniform(seed, base + np.uint64(SLOT_SETTING + 1))
        jj = 1 if ub < bob_cdf[0] else (2 if ub < bob_cdf[1] else 3)
        kk = 1 if _uniform(seed, base + np.uint64(SLOT_SETTING + 2)) < p_c else 2
        i_o[r], j_o[r], k_o[r] = ii, jj, kk
        d0 = _uniform(seed, base + np.uint64(SLOT_LOSS)) < eta_l
        d1 = _uniform(seed, base + np.uint64(SLOT_LOSS + 1)) < eta_l
        d2 = _uniform(seed, base + np.uint64(SLOT_LOSS + 2)) < eta_l
        ghz = _uniform(seed, base + np.uint64(SLOT_BRANCH)) < F
        a = 1 if _uniform(seed, base + np.uint64(SLOT_BITS)) < 0.5 else 0
        b = 1 if _uniform(seed, base + np.uint64(SLOT_BITS + 1)) < 0.5 else 0
        uc = _uniform(seed, base + np.uint64(SLOT_BITS + 2))
        if d0 and d1 and d2 and ghz:
            plus = uc < pplus[ii - 1, jj - 1, kk - 1]
            c = (a ^ b) if plus else (a ^ b ^ 1)
        else:
            c = 1 if uc < 0.5 else 0
        lost = 0
        if not d0:
            a = LOST
            lost |= 1
        if not d1:
            b = LOST
            lost |= 2
        if not d2:
            c = LOST
            lost |= 4
        if random_assign:
            if a == LOST:
                a = 1 if _uniform(seed, base + np.uint64(SLOT_ASSIGN)) < 0.5 else 0
            if b == LOST:
                b = 1 if _uniform(seed, base + np.uint64(SLOT_ASSIGN + 1)) < 0.5 else 0
            if c == LOST:
                c = 1 if _uniform(seed, base + np.uint64(SLOT_ASSIGN + 2)) < 0.5 else 0
        keygen = jj == 1 and ii == kk
        if keygen:
            if advanced and a != LOST and _uniform(seed, base + np.uint64(SLOT_FLIP)) < q:
                a ^= 1
                flip_o[r] = 1
            if _uniform(seed, base + np.uint64(SLOT_ANNOUNCE)) < announce:
                ann_o[r] = 1
        a_o[r], b_o[r], c_o[r] = a, b, c
        lost_o[r] = lost


def _sample_index(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    # first index with cdf[idx] > u, clipped like the scalar scan
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


def _run_numpy(
    seed, start, n, fast, p_d, T, eta_t, pat_cdf, pat_class, herald_cdf,
    p_a, bob_cdf, p_c, eta_l, F, pplus, random_assign, advanced, q, announce, out,
):
    rounds = np.arange(start, start + n, dtype=np.uint64)
    if fast:
        sel = uniforms(seed, rounds, SLOT_HERALD) < p_d
        r = rounds[sel]
        idx = _sample_index(herald_cdf, uniforms(seed, r, SLOT_PATTERN))
    else:
        ok = np.ones(n, dtype=bool)
        for user in range(3):
            h_tx = uniforms(seed, rounds, SLOT_VBS + 2 * user) < T
            v_tx = uniforms(seed, rounds, SLOT_VBS + 2 * user + 1) < T
            ok &= h_tx != v_tx
        for user in range(3):
            ok &= uniforms(seed, rounds, SLOT_SURVIVE + user) < eta_t
        r = rounds[ok]
        idx = _sample_index(pat_cdf, uniforms(seed, r, SLOT_PATTERN))
        keep = pat_class[idx] != HERALD_FAIL
        r, idx = r[keep], idx[keep]
    pos = (r - np.uint64(start)).astype(np.int64)
    out["herald"][pos] = pat_class[idx]
    out["pattern"][pos] = idx

    ii = np.where(uniforms(seed, r, SLOT_SETTING) < p_a, 1, 2)
    ub = uniforms(seed, r, SLOT_SETTING + 1)
    jj = np.where(ub < bob_cdf[0], 1, np.where(ub < bob_cdf[1], 2, 3))
    kk = np.where(uniforms(seed, r, SLOT_SETTING + 2) < p_c, 1, 2)
    d = [uniforms(seed, r, SLOT_LOSS + m) < eta_l for m in range(3)]
    ghz = uniforms(seed, r, SLOT_BRANCH) < F
    a = (uniforms(seed, r, SLOT_BITS) < 0.5).astype(np.int8)
    b = (uniforms(seed, r, SLOT_BITS + 1) < 0.5).astype(np.int8)
    uc = uniforms(seed, r, SLOT_BITS + 2)
    full = d[0] & d[1] & d[2] & ghz
    plus = uc < pplus[ii - 1, jj - 1, kk - 1]
    c = np.where(full, np.where(plus, a ^ b, a ^ b ^ 1), (uc < 0.5).astype(np.int8)).astype(np.int8)
    vals = [a, b, c]
    lost = np.zeros(r.size, dtype=np.int8)
    for m in range(3):
        vals[m] = np.where(d[m], vals[m], LOST).astype(np.int8)
        lost |= np.where(d[m], 0, 1 << m).astype(np.int8)
    if random_assign:
        for m in range(3):
            coin = (uniforms(seed, r, SLOT_ASSIGN + m) < 0.5).astype(np.int8)
            vals[m] = np.where(vals[m] == LOST, coin, vals[m]).astype(np.int8)
    keygen = (jj == 1) & (ii == kk)
    flip = keygen & bool(advanced) & (vals[0] != LOST) & (uniforms(seed, r, SLOT_FLIP) < q)
    vals[0] = np.where(flip, vals[0] ^ 1, vals[0]).astype(np.int8)
    ann = keygen & (uniforms(seed, r, SLOT_ANNOUNCE) < announce)
    for name, v in zip(("i", "j", "k", "a", "b", "c", "lost", "flipped", "announced"),
                       (ii, jj, kk, vals[0], vals[1], vals[2], lost, flip, ann)):
        out[name][pos] = v


CHUNK = 1 << 18


def run_rounds(n: int, params: dict, backend: str) -> dict:
    """Fill the per-round output arrays for rounds ``0..n-1``."""
    out = allocate(n)
    if backend == "numba":
        _run_numba(
            params["seed"], 0, n, params["fast"], params["p_d"], params["T"], params["eta_t"],
            params["pat_cdf"], params["pat_class"], params["herald_cdf"], params["p_a"],
            params["bob_cdf"], params["p_c"], params["eta_l"], params["F"], params["pplus"],
            params["random_assign"], params["advanced"], params["q"], params["announce"],
            *(out[f] for f in OUTPUT_FIELDS),
        )
        return out
    for start in range(0, n, CHUNK):
        m = min(CHUNK, n - start)
        view = {f: arr[start:start + m] for f, arr in out.items()}
        _run_numpy(
            params["seed"], start, m, params["fast"], params["p_d"], params["T"], params["eta_t"],
            params["pat_cdf"], params["pat_class"], params["herald_cdf"], params["p_a"],
            params["bob_cdf"], params["p_c"], params["eta_l"], params["F"], params["pplus"],
            params["random_assign"], params["advanced"], params["q"], params["announce"], view,
        )
    return out


def default_backend() -> str:
    return "numba" if HAVE_NUMBA and not DISABLED_BY_ENV else "numpy"
