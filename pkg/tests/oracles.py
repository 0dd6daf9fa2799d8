"""Independent reference values computed with mpmath.

These deliberately avoid every routine of the package under test.
"""

import mpmath as mp

mp.mp.dps = 20


def fbm_kernel(H, t, s, c_H=None, b_H=None):
    """Molchan-Golosov kernel by direct adaptive quadrature."""
    H, t, s = mp.mpf(H), mp.mpf(t), mp.mpf(s)
    a = H - mp.mpf(1) / 2
    if s >= t:
        return mp.mpf(0)
    if H > 0.5:
        c = mp.sqrt(H * (2 * H - 1) / mp.beta(2 - 2 * H, a)) if c_H is None else c_H
        # w = (u - s)^a removes the endpoint singularity
        return c * s ** (-a) * mp.quad(lambda w: (s + w ** (1 / a)) ** a / a, [0, (t - s) ** a])
    inner = mp.quad(lambda u: u ** (a - 1) * (u - s) ** a, [s, t])
    return b_H * ((t / s) ** a * (t - s) ** a - a * s ** (-a) * inner)


def fbm_cell_integral(H, t, a, b, **kw):
    return mp.quad(lambda s: fbm_kernel(H, t, s, **kw), [a, (a + b) / 2, b])


def fbm_covariance(H, t, s):
    """Unit-variance fBm covariance."""
    t, s = mp.mpf(t), mp.mpf(s)
    return (t ** (2 * H) + s ** (2 * H) - abs(t - s) ** (2 * H)) / 2


def rl_kernel(alpha, t, s):
    """(1/Gamma(alpha)) int_s^t (u - s)^(alpha - 1) du by its antiderivative."""
    if s >= t:
        return mp.mpf(0)
    return (mp.mpf(t) - s) ** alpha / mp.gamma(alpha + 1)


def lognormal_call_price(S0, K, r, sigma, T):
    """Discounted E[(S_T - K)^+] by quadrature over the standard normal."""
    S0, K, r, sigma, T = map(mp.mpf, (S0, K, r, sigma, T))
    z0 = (mp.log(K / S0) - (r - sigma**2 / 2) * T) / (sigma * mp.sqrt(T))

    def integrand(z):
        ST = S0 * mp.exp((r - sigma**2 / 2) * T + sigma * mp.sqrt(T) * z)
        return (ST - K) * mp.npdf(z)

    return mp.exp(-r * T) * mp.quad(integrand, [z0, z0 + 10, mp.inf])


# (S0, K, r, sigma, T): at, in and out of the money, short and long maturities,
# low and high volatility, zero and negative rates
BS_CASES = [
    (100, 100, 0.05, 0.2, 1.0),
    (100, 90, 0.05, 0.2, 1.0),
    (100, 110, 0.05, 0.2, 1.0),
    (100, 100, 0.0, 0.2, 1.0),
    (100, 100, -0.01, 0.3, 2.0),
    (50, 60, 0.03, 0.5, 0.25),
    (50, 40, 0.03, 0.1, 0.5),
    (1, 1, 0.0, 1.0, 1.0),
    (100, 150, 0.02, 0.25, 5.0),
    (100, 70, 0.08, 0.15, 3.0),
    (10, 10.5, 0.01, 0.05, 0.1),
    (250, 200, 0.04, 0.35, 10.0),
]
