"""NumPy implementation of the inner loops, used when the extension is unavailable.

Signatures and in-place semantics mirror ``_kernels.pyx`` exactly.
"""

import numpy as np


def _grad(x, w, model):
    if model == 0:
        return 0.0, np.zeros_like(x)
    psi = np.sqrt(1.0 + np.dot(w, x * x))
    return psi, w * x / psi


def advance_chain(x, lam, lam_sq, inv_lam_sq, w, model, delta, xi, logu, S_out, Q_out, acc_out, X_out=None):
    n = x.shape[0]
    a = 1.0 - delta
    sq = np.sqrt(2.0 * delta)
    psi_x, gx = _grad(x, w, model)
    cm_x = np.dot(inv_lam_sq, x * x)
    gg_x = np.dot(lam_sq, gx * gx)
    noise = sq * lam * xi
    accepted = 0
    for k in range(xi.shape[0]):
        y = a * x - delta * lam_sq * gx + noise[k]
        cm_y = np.dot(inv_lam_sq, y * y)
        q = -0.25 * delta * (cm_y - cm_x)
        psi_y, gy, gg_y = 0.0, gx, 0.0
        if model != 0:
            psi_y, gy = _grad(y, w, model)
            gg_y = np.dot(lam_sq, gy * gy)
            q += -0.5 * (np.dot(x - a * y, gy) - np.dot(y - a * x, gx)) - (psi_y - psi_x)
            q += -0.25 * delta * (gg_y - gg_x)
        Q_out[k] = q
        if not np.isnan(q) and logu[k] <= min(q, 0.0):
            acc_out[k] = 1
            accepted += 1
            x[:] = y
            gx, cm_x, psi_x, gg_x = gy, cm_y, psi_y, gg_y
        else:
            acc_out[k] = 0
        S_out[k] = cm_x / n
        if X_out is not None:
            X_out[k] = x
    return accepted


def advance_sde(x, lam, lam_sq, w, model, dt, h, xi):
    for k in range(xi.shape[0]):
        _, g = _grad(x, w, model)
        x += dt * h[k] * (-x - lam_sq * g) + np.sqrt(2.0 * h[k] * dt) * lam * xi[k]
