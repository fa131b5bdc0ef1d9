"""Independent high-precision oracle for the constants frozen into the test-suite.

Run ``python3 tests/oracles/frozen.py`` to regenerate; needs mpmath, which the
package itself does not use.
"""
import mpmath as mp

mp.mp.dps = 30


def wrapped_second_moment(n_x, var):
    """Circular second moment of the node-sampled, lattice-summed Gaussian."""
    sigma = mp.sqrt(var)
    num = den = mp.mpf(0)
    for i in range(n_x):
        d = mp.mpf(min(i, n_x - i)) / n_x
        w = mp.nsum(lambda k: mp.npdf(d + k, 0, sigma), [-mp.inf, mp.inf])
        num += d**2 * w
        den += w
    return num / den


def hopf_cole(amp, T, x, kmax=40):
    """-log of the heat flow (time |T|, unit-variance-per-time) of exp(-amp cos 2 pi x)."""
    total = mp.besseli(0, amp)
    for k in range(1, kmax):
        total += 2 * (-1) ** k * mp.besseli(k, amp) * mp.e ** (-2 * mp.pi**2 * k**2 * abs(T)) * mp.cos(2 * mp.pi * k * x)
    return -mp.log(total)


def gibbs_moments(amp, n, x):
    """Mean and variance of v under N(0, 1/n)(v) exp(-amp cos 2 pi (x - v)) on the real line."""
    sigma = 1 / mp.sqrt(n)
    w = lambda v: mp.npdf(v, 0, sigma) * mp.e ** (-amp * mp.cos(2 * mp.pi * (x - v)))
    lim = [-12 * sigma, 12 * sigma]
    z = mp.quad(w, lim)
    m1 = mp.quad(lambda v: v * w(v), lim) / z
    m2 = mp.quad(lambda v: v**2 * w(v), lim) / z
    return m1, m2 - m1**2


if __name__ == "__main__":
    print("wrapped_second_moment(256, 0.01) =", mp.nstr(wrapped_second_moment(256, mp.mpf("0.01")), 20))
    for x in ("0", "0.25", "0.5"):
        print(f"hopf_cole(0.1, 0.5, {x}) =", mp.nstr(hopf_cole(mp.mpf("0.1"), mp.mpf("0.5"), mp.mpf(x)), 20))
    for x in ("0.125", "0.25"):
        m, v = gibbs_moments(mp.mpf("0.1"), 32, mp.mpf(x))
        print(f"gibbs_moments(0.1, 32, {x}) =", mp.nstr(m, 20), mp.nstr(v, 20))
