"""NumPy implementation of the sampler kernels.

Same signatures and semantics as the compiled ``_kernels`` extension; used when
the extension is not built or when ``BETAGAS_PURE_PYTHON=1``.
"""
import math

import numpy as np


def _field(t, poly, bamp, bwid, tx0, tdx, tv, td):
    t = np.asarray(t, dtype=float)
    s = t * t
    out = np.zeros_like(t)
    for c in poly[::-1]:
        out = out * s + c
    if bamp != 0.0:
        out = out + bamp * np.exp(-bwid * s)
    n = len(tv)
    if n > 1:
        u = (t - tx0) / tdx
        inside = (u >= 0.0) & (u <= n - 1)
        i = np.clip(np.floor(u).astype(np.int64), 0, n - 2)
        r = u - i
        r2, r3 = r * r, r * r * r
        herm = ((2.0 * r3 - 3.0 * r2 + 1.0) * tv[i] + (r3 - 2.0 * r2 + r) * td[i] * tdx
                + (-2.0 * r3 + 3.0 * r2) * tv[i + 1] + (r3 - r2) * td[i + 1] * tdx)
        out = out + np.where(inside, herm, 0.0)
    return out


def _field_deriv(t, poly, bamp, bwid, tx0, tdx, tv, td):
    t = np.asarray(t, dtype=float)
    s = t * t
    out = np.zeros_like(t)
    for k in range(len(poly) - 1, 0, -1):
        out = out * s + 2.0 * k * poly[k]
    out = out * t
    if bamp != 0.0:
        out = out - 2.0 * bamp * bwid * t * np.exp(-bwid * s)
    n = len(tv)
    if n > 1:
        u = (t - tx0) / tdx
        inside = (u >= 0.0) & (u <= n - 1)
        i = np.clip(np.floor(u).astype(np.int64), 0, n - 2)
        r = u - i
        r2 = r * r
        herm = ((6.0 * r2 - 6.0 * r) * tv[i] + (3.0 * r2 - 4.0 * r + 1.0) * td[i] * tdx
                + (-6.0 * r2 + 6.0 * r) * tv[i + 1] + (3.0 * r2 - 2.0 * r) * td[i + 1] * tdx) / tdx
        out = out + np.where(inside, herm, 0.0)
    return out


def _pair(d, ha, hb):
    out = np.zeros_like(d)
    for a, b in zip(ha, hb):
        out = out + a * np.exp(-b * d * d)
    return out


def field_value(t, poly, bamp, bwid, tx0, tdx, tv, td):
    return float(_field(t, poly, bamp, bwid, tx0, tdx, tv, td))


def energy(x, nscale, beta, poly, bamp, bwid, tx0, tdx, tv, td, ha, hb):
    x = np.asarray(x, dtype=float)
    iu = np.triu_indices(len(x), 1)
    d = x[iu[0]] - x[iu[1]]
    if np.any(d == 0.0):
        return math.inf
    e = nscale * float(np.sum(_field(x, poly, bamp, bwid, tx0, tdx, tv, td)))
    e -= beta * float(np.sum(np.log(np.abs(d))))
    if len(ha):
        e += float(np.sum(_pair(d, ha, hb)))
    return e


def gradient(x, nscale, beta, poly, bamp, bwid, tx0, tdx, tv, td, ha, hb):
    x = np.asarray(x, dtype=float)
    diff = x[:, None] - x[None, :]
    off = ~np.eye(len(x), dtype=bool)
    if np.any(diff[off] == 0.0):
        raise ValueError("gradient undefined at coincident particles")
    inv = np.zeros_like(diff)
    inv[off] = 1.0 / diff[off]
    g = nscale * _field_deriv(x, poly, bamp, bwid, tx0, tdx, tv, td) - beta * inv.sum(axis=1)
    for a, b in zip(ha, hb):
        g = g + (-2.0 * a * b * diff * np.exp(-b * diff * diff)).sum(axis=1)
    return g


def metropolis_block(x, nscale, beta, poly, bamp, bwid, tx0, tdx, tv, td, ha, hb,
                     sites, increments, log_u):
    """Single-site random-walk Metropolis moves; updates ``x`` in place."""
    accepted = 0
    has_pair = len(ha) > 0
    for l, inc, lu in zip(sites, increments, log_u):
        y0 = x[l]
        y1 = y0 + inc
        others = np.delete(x, l)
        d1 = y1 - others
        if np.any(d1 == 0.0):
            continue
        d0 = y0 - others
        dlog = float(np.sum(np.log(np.abs(d1 / d0))))
        dE = (nscale * float(_field(y1, poly, bamp, bwid, tx0, tdx, tv, td)
                             - _field(y0, poly, bamp, bwid, tx0, tdx, tv, td))
              - beta * dlog)
        if has_pair:
            dE += float(np.sum(_pair(d1, ha, hb) - _pair(d0, ha, hb)))
        if lu < -dE:
            x[l] = y1
            accepted += 1
    return accepted
