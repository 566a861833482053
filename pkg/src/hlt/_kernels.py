"""Compiled inner loops. Everything here is nogil so callers can fan out over threads."""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def quantize(planes, bins, out):
    """``min(floor(v * bins), bins - 1)`` per value, computed in float64, clipped at 0."""
    nb, h, w = planes.shape
    top = bins - 1
    for b in range(nb):
        for r in range(h):
            for c in range(w):
                v = np.float64(planes[b, r, c]) * bins
                if v <= 0.0:
                    out[b, r, c] = 0
                elif v >= top:
                    out[b, r, c] = top
                else:
                    out[b, r, c] = np.uint8(np.int64(v))
    return out


@njit(cache=True, nogil=True)
def integral_tables(bin_index, bins):
    """Summed-area tables of the one-hot bin indicator, shape (B, bins, H+1, W+1)."""
    nb, h, w = bin_index.shape
    out = np.zeros((nb, bins, h + 1, w + 1), np.int32)
    row = np.zeros(bins, np.int32)
    for b in range(nb):
        for r in range(h):
            row[:] = 0
            for c in range(w):
                row[bin_index[b, r, c]] += 1
                for k in range(bins):
                    out[b, k, r + 1, c + 1] = out[b, k, r, c + 1] + row[k]
    return out


@njit(cache=True, nogil=True)
def integral_tables_for(bin_index, bands, bin_ids):
    """Summed-area tables for selected (band, bin) pairs only, shape (K, H+1, W+1)."""
    _, h, w = bin_index.shape
    kk = bands.shape[0]
    out = np.zeros((kk, h + 1, w + 1), np.int32)
    for k in range(kk):
        b = bands[k]
        v = bin_ids[k]
        for r in range(h):
            acc = 0
            for c in range(w):
                if bin_index[b, r, c] == v:
                    acc += 1
                out[k, r + 1, c + 1] = out[k, r, c + 1] + acc
    return out


@njit(cache=True, nogil=True, error_model="numpy")
def min_chi2_map(tables, q, bands_per_group, shapes, out):
    """Per-pixel minimum chi-square distance over centred, border-clamped windows.

    ``tables`` holds only the (band, bin) pairs where the reference ``q`` is
    positive. Bins where ``q`` is zero contribute ``p`` each, and those sum to
    ``1 - sum(p over tabled bins)``, so with both vectors normalised the
    distance is ``1 + sum q(q - 3p)/(p + q)`` over the tabled pairs.
    """
    kk, h1, w1 = tables.shape
    h = h1 - 1
    w = w1 - 1
    for r in range(h):
        for c in range(w):
            out[r, c] = np.inf
    chi = np.empty(w)
    inv = np.empty(w)
    for s in range(shapes.shape[0]):
        sw = shapes[s, 0]
        sh = shapes[s, 1]
        hw = sw // 2
        hh = sh // 2
        # interior columns have an unclamped window: hw <= c <= w - sw + hw
        cl = min(hw, w)
        ch = max(w - sw + hw + 1, cl)
        for r in range(h):
            r0 = max(r - hh, 0)
            r1 = min(r - hh + sh, h)
            for c in range(w):
                c0 = max(c - hw, 0)
                c1 = min(c - hw + sw, w)
                inv[c] = 1.0 / (bands_per_group * (r1 - r0) * (c1 - c0))
                chi[c] = 1.0
            for k in range(kk):
                qk = q[k]
                a = tables[k, r1]
                b = tables[k, r0]
                for c in range(cl):
                    c1 = min(c - hw + sw, w)
                    p = (a[c1] - b[c1] - a[0] + b[0]) * inv[c]
                    chi[c] += qk * (qk - 3.0 * p) / (p + qk)
                for c in range(cl, ch):
                    c0 = c - hw
                    c1 = c0 + sw
                    p = (a[c1] - b[c1] - a[c0] + b[c0]) * inv[c]
                    chi[c] += qk * (qk - 3.0 * p) / (p + qk)
                for c in range(ch, w):
                    c0 = max(c - hw, 0)
                    p = (a[w] - b[w] - a[c0] + b[c0]) * inv[c]
                    chi[c] += qk * (qk - 3.0 * p) / (p + qk)
            for c in range(w):
                v = chi[c]
                if v < 0.0:
                    v = 0.0
                if v < out[r, c]:
                    out[r, c] = v
    return out


@njit(cache=True, nogil=True)
def otsu_pair(hist):
    """Best (a, b) for two thresholds, same objective and tie rule as the numpy search.

    Classes are bins ``0..a``, ``a+1..b`` and ``b+1..``; the score is
    ``sum_j S_j^2 / N_j`` and the first maximum in row-major order wins.
    """
    nb = hist.shape[0]
    cn = np.empty(nb)
    cs = np.empty(nb)
    n = 0.0
    s = 0.0
    for i in range(nb):
        n += hist[i]
        s += hist[i] * i
        cn[i] = n
        cs[i] = s
    best = -np.inf
    ba = 0
    bb = 1
    for a in range(nb - 1):
        na = cn[a]
        sa = cs[a]
        head = sa * sa / na if na > 0 else 0.0
        for b in range(a + 1, nb - 1):
            nm = cn[b] - na
            sm = cs[b] - sa
            mid = sm * sm / nm if nm > 0 else 0.0
            nt = n - cn[b]
            st = s - cs[b]
            tail = st * st / nt if nt > 0 else 0.0
            total = head + mid + tail
            if total > best:
                best = total
                ba = a
                bb = b
    return ba, bb
