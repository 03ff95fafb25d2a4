"""Independent reference computations used by several test modules."""

import numpy as np
from scipy import integrate


def gauss(z):
    return np.exp(-0.5 * z ** 2) / np.sqrt(2 * np.pi)


def u_l(z, order):
    """Order-l kernel from the binomial sum, evaluated directly."""
    from math import comb

    z = np.asarray(z, dtype=float)
    return sum(comb(order, j) * (-1) ** (j + 1) * gauss(z / j) / j for j in range(1, order + 1))


def laplace_decon_kernel(x, h, sigma=1.0, order=2):
    """Closed form for Laplace noise and the Gaussian order-l kernel.

    With ``1/q_hat = 1 + sigma^2 t^2`` the kernel is ``K_h - sigma^2 K_h''``,
    and ``phi''(y) = (y^2 - 1) phi(y)``.
    """
    from math import comb

    x = np.asarray(x, dtype=float)
    out = 0.0
    for j in range(1, order + 1):
        c = comb(order, j) * (-1) ** (j + 1)
        s = h * j
        y = x / s
        out = out + c * (gauss(y) / s - sigma ** 2 * (y ** 2 - 1) * gauss(y) / s ** 3)
    return out


def decon_kernel_quad(x, h, K_ft, inv_q):
    """``(1/pi) int_0^inf cos(t x) K_hat(h t) / q_hat(t) dt`` by adaptive quadrature."""
    x = float(x)
    upper = 40.0 / h
    val, _ = integrate.quad(lambda t: np.cos(t * x) * K_ft(h * t) * inv_q(t), 0.0, upper,
                            limit=2000, epsabs=1e-11, epsrel=1e-10)
    return val / np.pi
