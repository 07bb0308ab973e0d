"""Independent reference implementations used as test oracles.

These deliberately avoid the library's own computational paths: the
data-fidelity oracle minimizes the penalized likelihood objective by
projected gradient descent, and the non-local means oracle is a naive
per-pixel quadruple loop.
"""

import numpy as np


def prox_objective(xhat, x, y, factor, sigma_w, sigma_lambda):
    """Penalized negative log-likelihood the proximal update minimizes."""
    h, w = xhat.shape
    lr = xhat.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
    data = 0.5 / sigma_w**2 * np.sum((y - lr) ** 2)
    coupling = 0.5 / sigma_lambda**2 * np.sum((x - xhat) ** 2)
    return data + coupling


def prox_by_projected_gradient(x, y, factor, sigma_w, sigma_lambda,
                               tol=1e-10, max_iters=200_000):
    """Minimize the proximal objective over nonnegative images.

    Plain projected gradient with the exact Lipschitz step; iterates until
    successive updates move less than ``tol`` in infinity norm.
    """
    h, w = x.shape
    lip = 1.0 / (sigma_w**2 * factor**2) + 1.0 / sigma_lambda**2
    step = 1.0 / lip
    xhat = np.maximum(x, 0.0)
    for _ in range(max_iters):
        lr = xhat.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
        back = np.repeat(np.repeat(lr - y, factor, axis=0), factor, axis=1)
        grad = back / (sigma_w**2 * factor**2) + (xhat - x) / sigma_lambda**2
        new = np.maximum(xhat - step * grad, 0.0)
        if np.max(np.abs(new - xhat)) < tol:
            return new
        xhat = new
    return xhat


def nlm_reference(x, patch_radius, search_radius, bandwidth):
    """Quadratic-time non-local means, one pixel at a time.

    Mirrors the production definition (edge padding, full windows, plain
    exponential weights) with scalar accumulation in the same offset and
    tap order, so results must agree bit for bit.
    """
    h, w = x.shape
    pad = patch_radius + search_radius
    xp = np.pad(x, pad, mode="edge")
    inv_h2 = 1.0 / bandwidth**2
    out = np.zeros_like(x)
    for i in range(h):
        for j in range(w):
            num = 0.0
            den = 0.0
            for dy in range(-search_radius, search_radius + 1):
                for dx in range(-search_radius, search_radius + 1):
                    dist = 0.0
                    for u in range(-patch_radius, patch_radius + 1):
                        for v in range(-patch_radius, patch_radius + 1):
                            a = xp[pad + i + u, pad + j + v]
                            b = xp[pad + i + dy + u, pad + j + dx + v]
                            d = a - b
                            dist += d * d
                    weight = np.exp(-dist * inv_h2)
                    num += weight * xp[pad + i + dy, pad + j + dx]
                    den += weight
            out[i, j] = num / den
    return out
