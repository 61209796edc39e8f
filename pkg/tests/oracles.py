"""Reference values computed without the package under test."""
import math

import numpy as np

# lowest 32 torus Stokes eigenvalues (L = 2 pi), from the half-plane of
# wavevectors with two phases each:
#   |k|^2 = 1: (1,0), (0,1)               -> 4 modes
#   |k|^2 = 2: (1,1), (1,-1)              -> 4
#   |k|^2 = 4: (2,0), (0,2)               -> 4
#   |k|^2 = 5: (2,1), (2,-1), (1,2), (1,-2) -> 8
#   |k|^2 = 8: (2,2), (2,-2)              -> 4
#   |k|^2 = 9: (3,0), (0,3)               -> 4
#   |k|^2 = 10: first 4 of (3,1), (3,-1), (1,3), (1,-3)
TORUS32_EIGS = [1.0] * 4 + [2.0] * 4 + [4.0] * 4 + [5.0] * 8 + [8.0] * 4 + [9.0] * 4 + [10.0] * 4


def torus_eigs_bruteforce(n_modes, side=2 * math.pi):
    ks = []
    r = int(math.isqrt(n_modes)) + 2
    for k1 in range(-r, r + 1):
        for k2 in range(-r, r + 1):
            if k1 > 0 or (k1 == 0 and k2 > 0):
                ks.append(k1 * k1 + k2 * k2)
    ks.sort()
    vals = [k for k in ks for _ in (0, 1)][:n_modes]
    return [(2 * math.pi / side) ** 2 * v for v in vals]


def dirichlet_laplacian_lambda1(side, grid_points):
    """Five-point Dirichlet Laplacian, closed form: 2 * (4/h^2) sin^2(pi h / 2L)."""
    h = side / grid_points
    return 2 * 4 / h ** 2 * math.sin(math.pi * h / (2 * side)) ** 2


def implicit_factor(nu, lam, dt):
    return 1.0 / (1.0 + nu * lam * dt)


def ou_tail_moments(c0, f, sigma, lam, nu, dt, steps):
    """Mean and second moment of every mode of the linear semi-implicit scheme

        c_{m+1} = rho (c_m + dt f + s dW),   rho = 1 / (1 + nu lam dt)

    at m = 0..steps, in closed form (geometric sums).  Arrays over modes.
    """
    c0, f, sigma, lam = (np.asarray(x, dtype=float) for x in (c0, f, sigma, lam))
    rho = 1.0 / (1.0 + nu * lam * dt)
    m = np.arange(steps + 1)[:, None]
    r_m = rho[None, :] ** m
    geo = np.where(np.isclose(rho, 1.0), m, rho * (1 - r_m) / (1 - rho))
    geo2 = rho ** 2 * (1 - r_m ** 2) / (1 - rho ** 2)
    mean = r_m * c0 + dt * f * geo
    var = sigma ** 2 * dt * geo2
    return mean, mean ** 2 + var


def trapezoid(y, dt):
    return dt * (np.sum(y, axis=0) - 0.5 * (y[0] + y[-1]))


def gbm_exact(u0, a, b, T, w_T):
    return u0 * np.exp((a - 0.5 * b * b) * T + b * w_T)
