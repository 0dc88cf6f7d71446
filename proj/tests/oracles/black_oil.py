"""Independent evaluation of the black-oil correlations used as frozen test fixtures.

Run: python3 tests/oracles/black_oil.py
"""
import math

PSI = 6894.757293168361
P_STD, T_STD = 101325.0, (60.0 - 32.0) / 1.8 + 273.15
AIR, WATER = 1.2232, 999.016
SCF = 5.614583333333333

gor, wc, pb, tb = 50.0, 0.3, 50e5, 293.15
rho_o, rho_w, rho_g = 867.0, 1020.0, 0.997


def f_of(t_k):
    return (t_k - 273.15) * 9.0 / 5.0 + 32.0


def standing_rs(p, t):
    def br(p_, t_):
        return (p_ / PSI / 18.2 + 1.4) * 10.0 ** (-0.00091 * f_of(t_))
    r = br(p, t) / br(pb, tb)
    return gor if r >= 1 else gor * r ** 1.2048


def pseudo():
    g = rho_g / AIR
    return (756.8 - 131.0 * g - 3.6 * g * g) * PSI, (169.2 + 349.5 * g - 74.0 * g * g) * 5.0 / 9.0


def dak(z, ppr, tpr):
    a = [0.3265, -1.0700, -0.5339, 0.01569, -0.05165, 0.5475, -0.7361, 0.1844, 0.1056, 0.6134, 0.7210]
    rho = 0.27 * ppr / (z * tpr)
    t = tpr
    val = (1 + (a[0] + a[1] / t + a[2] / t**3 + a[3] / t**4 + a[4] / t**5) * rho
           + (a[5] + a[6] / t + a[7] / t**2) * rho**2
           - a[8] * (a[6] / t + a[7] / t**2) * rho**5
           + a[9] * (1 + a[10] * rho**2) * rho**2 / t**3 * math.exp(-a[10] * rho**2))
    return z - val


def z_bisect(p, t):
    pc, tc = pseudo()
    lo, hi = 0.2, 1.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if dak(lo, p / pc, t / tc) * dak(mid, p / pc, t / tc) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def lee_mu(p, t):
    z = z_bisect(p, t)
    bg = P_STD * t * z / (p * T_STD)
    rg = rho_g / bg
    m = 28.97 * rho_g / AIR
    tr = t * 1.8
    k = (9.4 + 0.02 * m) * tr**1.5 / (209 + 19 * m + tr)
    x = 3.5 + 986 / tr + 0.01 * m
    y = 2.4 - 0.2 * x
    return 1e-7 * k * math.exp(x * (rg / 1000) ** y)


def standing_bo(rs, t):
    f = rs * SCF * math.sqrt((rho_g / AIR) / (rho_o / WATER)) + 1.25 * f_of(t)
    return 0.9759 + 0.00012 * f**1.2


if __name__ == "__main__":
    p, t = 10e5, 298.15
    print(f"rs_10bar_25C   = {standing_rs(p, t)!r}")
    print(f"z_10bar_25C    = {z_bisect(p, t)!r}")
    print(f"mu_gas_10bar   = {lee_mu(p, t)!r}")
    print(f"bo_dead_std    = {standing_bo(0.0, T_STD)!r}")
    print(f"bo_10bar_25C   = {standing_bo(standing_rs(p, t), t)!r}")
    print(f"rho_liq_case   = {(0.997 * 35 + (867 * 0.7 + 1020 * 0.3)) / 1.1!r}")
