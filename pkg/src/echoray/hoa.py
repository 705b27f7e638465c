"""Real spherical harmonics up to order 9 via Cartesian recurrences.

ACN channel ordering (index l*l + l + m), no Condon-Shortley phase.
N3D normalization satisfies sum_m Y_{l,m}(d)^2 = 2l + 1 for any unit d;
SN3D divides each degree by sqrt(2l + 1).

The evaluation path is purely polynomial in (x, y, z): sectoral terms come
from the complex-product recurrence on (x + iy)^m and the zonal/tesseral
terms from the associated-Legendre three-term recurrence with the sin^m
factor absorbed, so no trigonometric calls are made.
"""

from __future__ import annotations

import numpy as np

MAX_ORDER = 9

_UNIT_TOL = 1e-3


def _build_tables(max_order: int):
    """Exact recurrence/normalization coefficients, computed at import."""
    L = max_order
    # N3D norm for (l, m >= 0): sqrt((2l+1) (l-m)!/(l+m)!) * (sqrt(2) if m > 0)
    norm = np.zeros((L + 1, L + 1))
    for l in range(L + 1):
        for m in range(l + 1):
            ratio = 1.0
            for k in range(l - m + 1, l + m + 1):
                ratio *= k
            norm[l, m] = np.sqrt((2 * l + 1) / ratio) * (np.sqrt(2.0) if m > 0 else 1.0)
    # A_l^m = P_l^m(z) / sin^m(theta), no phase:
    #   A_m^m     = (2m-1)!!
    #   A_{m+1}^m = (2m+1) z A_m^m
    #   A_l^m     = ((2l-1) z A_{l-1}^m - (l+m-1) A_{l-2}^m) / (l-m)
    diag = np.zeros(L + 1)
    diag[0] = 1.0
    for m in range(1, L + 1):
        diag[m] = diag[m - 1] * (2 * m - 1)
    rec_a = np.zeros((L + 1, L + 1))  # coefficient of z * A_{l-1}^m
    rec_b = np.zeros((L + 1, L + 1))  # coefficient of A_{l-2}^m
    for m in range(L + 1):
        for l in range(m + 2, L + 1):
            rec_a[l, m] = (2 * l - 1) / (l - m)
            rec_b[l, m] = (l + m - 1) / (l - m)
    return norm, diag, rec_a, rec_b


_NORM, _DIAG, _REC_A, _REC_B = _build_tables(MAX_ORDER)

# divide (not multiply by the reciprocal) so SN3D = N3D / sqrt(2l+1) holds
# bit-exactly per channel
_SN3D_DIVISOR = np.array(
    [np.sqrt(2 * l + 1) for l in range(MAX_ORDER + 1) for _ in range(2 * l + 1)])


def acn_index(l: int, m: int) -> int:
    """ACN channel index for degree l, order m."""
    return l * l + l + m


def sh_eval_batch(directions: np.ndarray, order: int, norm: str = "N3D") -> np.ndarray:
    """Evaluate real SH for each row of `directions`.

    Parameters
    ----------
    directions : (n, 3) array of unit vectors.
    order : maximum degree L, 0 <= L <= 9.
    norm : "N3D" or "SN3D".

    Returns
    -------
    (n, (L+1)^2) row-major coefficient matrix, ACN channel order.
    """
    if not (0 <= order <= MAX_ORDER):
        raise ValueError(f"order must be in [0, {MAX_ORDER}], got {order}")
    if norm not in ("N3D", "SN3D"):
        raise ValueError(f"unknown normalization {norm!r}")
    d = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if d.shape[1] != 3:
        raise ValueError("directions must have shape (n, 3)")
    n = d.shape[0]
    L = order
    nch = (L + 1) ** 2
    if n == 0:
        return np.zeros((0, nch))

    lens = np.sqrt(np.einsum("ij,ij->i", d, d))
    bad = np.abs(lens - 1.0) >= _UNIT_TOL
    if np.any(bad):
        row = int(np.argmax(bad))
        raise ValueError(
            f"direction at row {row} is not unit length (|d| = {lens[row]:.6g})")
    d = d / lens[:, None]
    x, y, z = d[:, 0], d[:, 1], d[:, 2]

    out = np.empty((n, nch))

    # c_m = Re[(x+iy)^m], s_m = Im[(x+iy)^m]; the sin^m(theta) factor is
    # carried inside these, matching the A_l^m scaling above. Every channel
    # is then a z-polynomial times c_m or s_m.
    c_prev = np.ones(n)
    s_prev = np.zeros(n)
    for m in range(0, L + 1):
        if m > 0:
            c_curr = x * c_prev - y * s_prev
            s_curr = x * s_prev + y * c_prev
            c_prev, s_prev = c_curr, s_curr
        cm, sm = c_prev, s_prev

        a_lm_prev2 = None
        a_lm_prev = np.full(n, _DIAG[m])
        for l in range(m, L + 1):
            if l == m:
                a = a_lm_prev
            elif l == m + 1:
                a = (2 * m + 1) * z * a_lm_prev
                a_lm_prev2, a_lm_prev = a_lm_prev, a
            else:
                a = _REC_A[l, m] * z * a_lm_prev - _REC_B[l, m] * a_lm_prev2
                a_lm_prev2, a_lm_prev = a_lm_prev, a
            base = _NORM[l, m] * a
            if m == 0:
                out[:, acn_index(l, 0)] = base
            else:
                out[:, acn_index(l, m)] = base * cm
                out[:, acn_index(l, -m)] = base * sm

    if norm == "SN3D":
        out /= _SN3D_DIVISOR[:nch]
    return out


def sh_eval(direction, order: int, norm: str = "N3D") -> np.ndarray:
    """Real SH coefficients of a single unit direction; see sh_eval_batch."""
    return sh_eval_batch(np.asarray(direction, dtype=np.float64)[None, :], order, norm)[0]
