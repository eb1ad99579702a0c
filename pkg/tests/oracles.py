"""Independent reference implementations used as test oracles.

These are written directly from the textbook formulas with dense matrices and
explicit loops, sharing no code with the package.
"""
import math

import numpy as np

C0 = 299792458.0


def plane_reflect(p, mva):
    """Reflect ``p`` across the plane with wall point ``m/2`` and normal ``m/|m|``."""
    m = np.asarray(mva, dtype=float)
    n = m / math.sqrt(float(m @ m))
    w = 0.5 * m
    p = np.asarray(p, dtype=float)
    return p - 2.0 * float((p - w) @ n) * n


def det3(a):
    """3x3 determinant by cofactor expansion along the first row."""
    return (a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))


def va_antennas(pa_center, pa_rotation, template, mva_seq):
    """Place each PA antenna globally, then mirror it point by point across the surfaces in order."""
    out = []
    for m in range(template.shape[1]):
        q = np.asarray(pa_center, dtype=float) + np.asarray(pa_rotation) @ template[:, m]
        for mva in mva_seq:
            q = plane_reflect(q, mva)
        out.append(q)
    return np.array(out).T


def distances(layout, agent):
    out = []
    for m in range(layout.shape[1]):
        acc = 0.0
        for i in range(3):
            acc += (layout[i, m] - agent[i]) ** 2
        out.append(math.sqrt(acc))
    return np.array(out)


def manifold(fc, bandwidth, n_freq, lengths):
    """Frequency-fastest stacking of exp(-j 2 pi f_k d_m / c)."""
    df = bandwidth / n_freq
    kappa = [k - (n_freq - 1) / 2.0 for k in range(n_freq)]
    out = []
    for d in lengths:
        for k in kappa:
            out.append(complex(np.exp(-2j * math.pi * (fc + df * k) * d / C0)))
    return np.array(out)


def projector_perp(psi):
    n = psi.shape[0]
    return np.eye(n) - psi @ np.linalg.pinv(psi)


def noise_energy(psi, y):
    r = np.outer(y, y.conj())
    return float(np.trace(projector_perp(psi) @ r).real)


def source_cov(psi, y, sigma2):
    """P = Psi^+ (R - sigma2 I) Psi^+^H with the dense rank-one R."""
    pinv = np.linalg.pinv(psi)
    r = np.outer(y, y.conj())
    return pinv @ (r - sigma2 * np.eye(len(y))) @ pinv.conj().T


def cn_logpdf(x, mean, cov):
    """Log density of a circular complex Gaussian via dense LU."""
    n = len(x)
    d = x - mean
    sign, logdet = np.linalg.slogdet(cov)
    quad = (d.conj() @ np.linalg.solve(cov, d)).real
    return float(-n * math.log(math.pi) - logdet.real - quad)


def det_loglik(psi, y):
    """Deterministic profile log-likelihood: Gaussian density with sigma2 = |P_perp y|^2 / N."""
    n = len(y)
    alpha = np.linalg.pinv(psi) @ y
    s2 = noise_energy(psi, y) / n
    return cn_logpdf(y, psi @ alpha, s2 * np.eye(n))


def sto_loglik(psi, y, p, sigma2):
    alpha = np.linalg.pinv(psi) @ y
    r = psi @ p @ psi.conj().T + sigma2 * np.eye(len(y))
    return cn_logpdf(y, psi @ alpha, r)


def fuse_precision(h_meas, h_pred, r_meas, r_pred):
    """Precision-weighted LMMSE form R_f (R_m^-1 h_m + R_p^-1 h_p)."""
    im = np.linalg.inv(r_meas)
    ip = np.linalg.inv(r_pred)
    r_f = np.linalg.inv(im + ip)
    return r_f @ (im @ h_meas + ip @ h_pred)


def path_gain(weights, truth):
    acc = 0j
    for w, h in zip(weights, truth):
        nrm = math.sqrt(sum(abs(x) ** 2 for x in w))
        if nrm == 0:
            continue
        acc += sum(np.conj(a) * b for a, b in zip(w, h)) / nrm
    return abs(acc) ** 2


def channel_snr(truth, noise_vars):
    total = 0.0
    for h, s2 in zip(truth, noise_vars):
        total += sum(abs(x) ** 2 for x in h) / len(h) / s2
    return total / len(truth)


def weighted_moments(states, weights):
    d = states.shape[1]
    mean = np.zeros(d)
    for x, w in zip(states, weights):
        mean += w * x
    cov = np.zeros((d, d))
    for x, w in zip(states, weights):
        cov += w * np.outer(x - mean, x - mean)
    return mean, cov


def random_complex(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
