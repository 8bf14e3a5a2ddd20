"""Backends for the seven-term coupling sweep of the moment transport solver.

The sweep is the one compute-bound loop in the package that is not
FFT-shaped: for every spectral shift it gathers seven wrapped lattice
translates of a rank-4 array, applies per-term phase factors, and
accumulates.  A numba version and a pure-numpy version are provided,
selected once at import time:

* numba importable and ``SPECKLESIM_NO_NUMBA`` unset (or ``"0"``): compiled
  kernel, parallel over the leading axis;
* otherwise: numpy rolls and broadcasting.

Both paths execute the same floating-point operations in the same order,
so their outputs agree bit for bit.  ``backend_name()`` reports the choice;
``benchmarks/bench_backends.py`` times the two side by side.

Kernel contract (shared by both implementations): accumulate into ``out``

    out += w * (t1 + t2 + t3 + t4 + t5 + t6 + t7)

where ``nu`` has shape (m, m, m, m), ``s`` is the integer lattice shift of
the current coupling wavenumber, and the terms pull wrapped translates of
``nu`` weighted by phase matrices:

    t1 = m1[a, c] * m1[b, d] * nu[a-s, b-s, c, d]
    t2 = m1[a, c] * b2[b, d] * nu[a-s, b,   c, d-s]
    t3 = m3[a, c] * m1[b, d] * nu[a+s, b-s, c, d]
    t4 = m3[a, c] * b2[b, d] * nu[a+s, b,   c, d-s]
    t5 = -2 * nu[a, b, c, d]
    t6 = c6[b, d] * nu[a, b-s, c, d-s]
    t7 = c7[b, d] * nu[a, b+s, c, d-s]

(all indices modulo m).  The phase matrices encode the transport-phase
difference between each node and the node its shift pulls from, computed
with the wrapped coordinates so that the discrete conservation law of the
zero-frequency slice holds exactly; they are built by the caller.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["apply_coupling", "backend_name", "coupling_numba", "coupling_numpy"]


def coupling_numpy(nu, out, s, m1, m3, b2, c6, c7, w):
    a1 = m1[:, None, :, None]
    a3 = m3[:, None, :, None]
    b1 = m1[None, :, None, :]
    b4 = b2[None, :, None, :]
    t1 = (a1 * b1) * np.roll(nu, (s, s), axis=(0, 1))
    t2 = (a1 * b4) * np.roll(nu, (s, s), axis=(0, 3))
    t3 = (a3 * b1) * np.roll(nu, (-s, s), axis=(0, 1))
    t4 = (a3 * b4) * np.roll(nu, (-s, s), axis=(0, 3))
    t5 = -2.0 * nu
    t6 = c6[None, :, None, :] * np.roll(nu, (s, s), axis=(1, 3))
    t7 = c7[None, :, None, :] * np.roll(nu, (-s, s), axis=(1, 3))
    out += w * (t1 + t2 + t3 + t4 + t5 + t6 + t7)


_flag = os.environ.get("SPECKLESIM_NO_NUMBA", "").strip()
coupling_numba = None
if _flag in ("", "0"):
    try:
        import numba
    except ImportError:
        numba = None
    if numba is not None:

        @numba.njit(cache=True, parallel=True)
        def _coupling_jit(nu, out, s, m1, m3, b2, c6, c7, w):  # pragma: no cover
            m = nu.shape[0]
            for a in numba.prange(m):
                am = (a - s) % m
                ap = (a + s) % m
                for b in range(m):
                    bm = (b - s) % m
                    bp = (b + s) % m
                    for c in range(m):
                        f1 = m1[a, c]
                        f3 = m3[a, c]
                        for d in range(m):
                            dm = (d - s) % m
                            t1 = (f1 * m1[b, d]) * nu[am, bm, c, d]
                            t2 = (f1 * b2[b, d]) * nu[am, b, c, dm]
                            t3 = (f3 * m1[b, d]) * nu[ap, bm, c, d]
                            t4 = (f3 * b2[b, d]) * nu[ap, b, c, dm]
                            t5 = -2.0 * nu[a, b, c, d]
                            t6 = c6[b, d] * nu[a, bm, c, dm]
                            t7 = c7[b, d] * nu[a, bp, c, dm]
                            out[a, b, c, d] += w * (t1 + t2 + t3 + t4 + t5 + t6 + t7)

        coupling_numba = _coupling_jit


def backend_name() -> str:
    return "numpy" if coupling_numba is None else "numba"


def apply_coupling(nu, out, s, m1, m3, b2, c6, c7, w) -> None:
    impl = coupling_numpy if coupling_numba is None else coupling_numba
    impl(nu, out, s, m1, m3, b2, c6, c7, w)
