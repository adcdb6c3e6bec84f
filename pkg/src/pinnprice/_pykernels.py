"""Pure-Python/NumPy versions of the hot kernels.

Same signatures and results as the compiled ``_ckernels`` module; used when
the extension is not built or ``PINNPRICE_PURE_PYTHON=1`` is set.

Stream layout for the tanh jet kernels (first axis of every array):

    0                      value
    1 .. n_first           first derivatives w.r.t. each input coordinate
    n_first+1 ..           second derivatives, one stream per entry of ``pairs``

``pairs`` is an int array of shape (n_pairs, 2) holding the *stream* indices
(1-based, into the first-derivative block) of the two factors.
"""

import numpy as np


def tanh_jet_forward(Z, n_first, pairs):
    """Push pre-activation streams ``Z`` (ns, N, w) through tanh.

    Returns ``(A, h, s)`` with ``h = tanh(Z[0])`` and ``s = 1 - h**2``.
    """
    h = np.tanh(Z[0])
    s = 1.0 - h * h
    A = np.empty_like(Z)
    A[0] = h
    if n_first:
        A[1:1 + n_first] = s * Z[1:1 + n_first]
    if len(pairs):
        s2 = -2.0 * h * s
        for p in range(len(pairs)):
            i, j = pairs[p]
            q = 1 + n_first + p
            A[q] = s * Z[q] + s2 * Z[i] * Z[j]
    return A, h, s


def tanh_jet_backward(GA, Z, h, s, n_first, pairs):
    """Adjoint of :func:`tanh_jet_forward`: map dL/dA to dL/dZ."""
    GZ = np.empty_like(GA)
    gh = GA[0].copy()
    gs = np.zeros_like(h)
    for k in range(1, 1 + n_first):
        GZ[k] = s * GA[k]
        gs += GA[k] * Z[k]
    if len(pairs):
        s2 = -2.0 * h * s
        gs2 = np.zeros_like(h)
        for p in range(len(pairs)):
            i, j = pairs[p]
            q = 1 + n_first + p
            g = GA[q]
            GZ[q] = s * g
            gs += g * Z[q]
            gs2 += g * Z[i] * Z[j]
            GZ[i] += s2 * Z[j] * g
            GZ[j] += s2 * Z[i] * g
        gs += -2.0 * h * gs2
        gh += -2.0 * s * gs2
    gh += -2.0 * h * gs
    GZ[0] = s * gh
    return GZ


def psor_csr(indptr, indices, data, b, lower, x, omega, tol, max_sweeps):
    """Projected SOR on ``A x >= b, x >= lower, (x - lower)(A x - b) = 0``.

    Rows are swept in storage order; ``x`` is updated in place. Rows whose
    ``lower`` is ``-inf`` are plain (unprojected) SOR rows. Stops once the
    largest update in a sweep falls below ``tol``.

    Returns ``(sweeps, last_max_change)``.
    """
    n = len(b)
    ip = indptr.tolist()
    ind = indices.tolist()
    val = data.tolist()
    bl = b.tolist()
    lo = lower.tolist()
    xs = x.tolist()
    diag = [0.0] * n
    for row in range(n):
        for k in range(ip[row], ip[row + 1]):
            if ind[k] == row:
                diag[row] = val[k]
    change = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        change = 0.0
        for row in range(n):
            acc = bl[row]
            for k in range(ip[row], ip[row + 1]):
                col = ind[k]
                if col != row:
                    acc -= val[k] * xs[col]
            old = xs[row]
            new = old + omega * (acc / diag[row] - old)
            if new < lo[row]:
                new = lo[row]
            xs[row] = new
            d = abs(new - old)
            if d > change:
                change = d
        if change < tol:
            break
    x[:] = xs
    return sweeps, change
