#!/usr/bin/env python3
"""Independent reference values frozen into the C++ tests.

Everything here is computed without the library: mpmath bisection for
scalar roots, scipy ODE integration for xi*, and plain quadrature for the
aggregate integrals. Re-run to regenerate the constants:

    python3 tests/oracles/compute_expected.py
"""
import math

import mpmath as mp
import numpy as np
from scipy.integrate import quad, solve_ivp

mp.mp.dps = 40


def bisect(f, lo, hi, tol=mp.mpf("1e-30")):
    flo = f(lo)
    for _ in range(400):
        mid = (lo + hi) / 2
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return (lo + hi) / 2


def phi(t, r):
    return (r * t - 1 + mp.e ** (-r * t)) / r


def phi_inv(x, r):
    return bisect(lambda t: phi(t, r) - x, mp.mpf(0), mp.mpf(x) + 10 / mp.mpf(r) + 10)


def main():
    print("W(1)              =", mp.nstr(bisect(lambda w: w * mp.e ** w - 1, mp.mpf(0), mp.mpf(1)), 17))
    print("W(-e^-2)          =", mp.nstr(bisect(lambda w: w * mp.e ** w + mp.e ** -2, mp.mpf(-1), mp.mpf(0)), 17))
    print("phi(1, 1)         =", mp.nstr(phi(mp.mpf(1), mp.mpf(1)), 17))
    print("phi(200, .02)     =", mp.nstr(phi(mp.mpf(200), mp.mpf("0.02")), 17))
    print("phi_inv(200, .02) =", mp.nstr(phi_inv(mp.mpf(200), mp.mpf("0.02")), 17))
    print("phi_inv(350, .02) =", mp.nstr(phi_inv(mp.mpf(350), mp.mpf("0.02")), 17))
    tau = bisect(lambda t: t / 2 - (1 - mp.e ** -t) / 2 - mp.mpf("0.5"), mp.mpf(0), mp.mpf(10))
    print("monopoly tau r=1 x0=.5 =", mp.nstr(tau, 17))
    print("monopoly u r=1 x0=.5   =", mp.nstr((1 + bisect(lambda w: w * mp.e ** w + mp.e ** -2, mp.mpf(-1), mp.mpf(0))) ** 2 / 4, 17))
    print("Y_T r=1 T=2 x0=.7      =", mp.nstr(mp.mpf("0.6") / (1 - mp.e ** -2), 17))
    print("psi Exp(1) eps=1 x=1   =", mp.nstr(2 + (1 - mp.e ** -1), 17))

    # Exp(1), r = eps = 1: xi* from the ODE, independent of psi/phi.
    r = eps = lam = 1.0
    S = lambda x: math.exp(-lam * x)
    rhs = lambda t, y: [(1 - math.exp(-r * t)) / (2 + eps * S(y[0]))]
    sol = solve_ivp(rhs, (0, 80), [0.0], method="DOP853", rtol=1e-13, atol=1e-15, dense_output=True)
    xi = lambda t: float(sol.sol(t)[0])

    g = lambda s: r * S(xi(s)) / (2 + eps * S(xi(s)))
    q0 = quad(lambda s: g(s) * math.exp(-r * s), 0, 80, limit=500, epsabs=1e-14, epsrel=1e-13)[0]
    print("Exp(1) Q*_0 (quad)     = %.15g" % q0)
    # fine-grid Riemann (midpoint) sum of the same Fubini integrand
    n = 400000
    h = 80.0 / n
    s = (np.arange(n) + 0.5) * h
    xs = sol.sol(s)[0]
    Ss = np.exp(-lam * xs)
    riemann = np.sum(r * Ss / (2 + eps * Ss) * np.exp(-r * s)) * h
    print("Exp(1) Q*_0 (riemann)  = %.15g" % riemann)

    # Terminal fixed point for T in the sweep: Gamma by quadrature in x0.
    for T in (1.0, 2.0, 5.0, 10.0, 20.0):
        xiT = xi(T)
        beta = (1 - math.exp(-r * T)) / (2 * r)

        def gamma(Q):
            cap = max(1 - eps * Q, 0.0)
            b = xiT + beta * cap
            part1 = quad(lambda x: (x - xiT) / beta * lam * math.exp(-lam * x), xiT, b, epsabs=1e-15, epsrel=1e-14)[0]
            part2 = cap * math.exp(-lam * b)
            return 0.5 * (part1 + part2)

        lo, hi = 0.0, 0.5
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid - gamma(mid) > 0:
                hi = mid
            else:
                lo = mid
        Qs = 0.5 * (lo + hi)
        print("T=%-4g xi*(T)=%.15g  Q*_T=%.15g  bound=%.15g" % (T, xiT, Qs, S(xiT) / (2 + eps * S(xiT))))


if __name__ == "__main__":
    main()
