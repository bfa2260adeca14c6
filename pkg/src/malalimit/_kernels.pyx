# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the MALA chain and the Euler-Maruyama limit scheme.

Both routines mutate ``x`` in place and consume pre-drawn standard normals,
so the random stream is owned by the Python driver and identical for every
backend.  Model codes: 0 for Psi = 0, 1 for Psi(x) = sqrt(1 + ||x||_s^2).
"""

from libc.math cimport sqrt, isnan

import numpy as np


cdef inline double _grad(const double[::1] x, const double[::1] w, double[::1] g,
                         Py_ssize_t n, int model) noexcept nogil:
    # fills g with grad Psi(x) and returns Psi(x)
    cdef Py_ssize_t j
    cdef double acc = 0.0, psi
    if model == 0:
        for j in range(n):
            g[j] = 0.0
        return 0.0
    for j in range(n):
        acc = acc + w[j] * x[j] * x[j]
    psi = sqrt(1.0 + acc)
    for j in range(n):
        g[j] = w[j] * x[j] / psi
    return psi


def advance_chain(double[::1] x,
                  const double[::1] lam,
                  const double[::1] lam_sq,
                  const double[::1] inv_lam_sq,
                  const double[::1] w,
                  int model,
                  double delta,
                  const double[:, ::1] xi,
                  const double[::1] logu,
                  double[::1] S_out,
                  double[::1] Q_out,
                  unsigned char[::1] acc_out,
                  double[:, ::1] X_out=None):
    """Run ``xi.shape[0]`` MALA steps from ``x``; returns the number of accepted moves.

    When ``X_out`` is given the state after step ``k`` is copied to ``X_out[k]``.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t steps = xi.shape[0]
    cdef Py_ssize_t k, j
    cdef double[::1] y = np.empty(n)
    cdef double[::1] gx = np.zeros(n)
    cdef double[::1] gy = np.zeros(n)
    cdef double[::1] tmp
    cdef double a = 1.0 - delta
    cdef double sq = sqrt(2.0 * delta)
    cdef double cm_x = 0.0, cm_y, psi_x, psi_y, gg_x = 0.0, gg_y
    cdef double i1, i2, i3, q, cross_y, cross_x, thresh
    cdef long accepted = 0
    cdef bint trace = X_out is not None

    with nogil:
        psi_x = _grad(x, w, gx, n, model)
        for j in range(n):
            cm_x = cm_x + x[j] * x[j] * inv_lam_sq[j]
            gg_x = gg_x + lam_sq[j] * gx[j] * gx[j]

        for k in range(steps):
            cm_y = 0.0
            for j in range(n):
                y[j] = a * x[j] - delta * lam_sq[j] * gx[j] + sq * lam[j] * xi[k, j]
                cm_y = cm_y + y[j] * y[j] * inv_lam_sq[j]
            i1 = -0.25 * delta * (cm_y - cm_x)
            i2 = 0.0
            i3 = 0.0
            psi_y = 0.0
            gg_y = 0.0
            if model != 0:
                psi_y = _grad(y, w, gy, n, model)
                cross_y = 0.0
                cross_x = 0.0
                for j in range(n):
                    cross_y = cross_y + (x[j] - a * y[j]) * gy[j]
                    cross_x = cross_x + (y[j] - a * x[j]) * gx[j]
                    gg_y = gg_y + lam_sq[j] * gy[j] * gy[j]
                i2 = -0.5 * (cross_y - cross_x) - (psi_y - psi_x)
                i3 = -0.25 * delta * (gg_y - gg_x)
            q = i1 + i2 + i3
            Q_out[k] = q
            thresh = q if q < 0.0 else 0.0
            if (not isnan(q)) and logu[k] <= thresh:
                acc_out[k] = 1
                accepted += 1
                for j in range(n):
                    x[j] = y[j]
                tmp = gx
                gx = gy
                gy = tmp
                cm_x = cm_y
                psi_x = psi_y
                gg_x = gg_y
            else:
                acc_out[k] = 0
            S_out[k] = cm_x / n
            if trace:
                for j in range(n):
                    X_out[k, j] = x[j]
    return accepted


def advance_sde(double[::1] x,
                const double[::1] lam,
                const double[::1] lam_sq,
                const double[::1] w,
                int model,
                double dt,
                const double[::1] h,
                const double[:, ::1] xi):
    """Euler-Maruyama steps of dx = h(t) F(x) dt + sqrt(2 h(t)) dW, F(x) = -x - C grad Psi(x)."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t steps = xi.shape[0]
    cdef Py_ssize_t k, j
    cdef double[::1] g = np.empty(n)
    cdef double drift, amp
    with nogil:
        for k in range(steps):
            _grad(x, w, g, n, model)
            drift = dt * h[k]
            amp = sqrt(2.0 * h[k] * dt)
            for j in range(n):
                x[j] = x[j] + drift * (-x[j] - lam_sq[j] * g[j]) + amp * lam[j] * xi[k, j]
