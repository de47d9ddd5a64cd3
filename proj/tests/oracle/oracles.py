"""Independent high-precision values frozen into the C++ tests.

Run: python3 tests/oracle/oracles.py
"""
import mpmath as mp

mp.mp.dps = 40
E = lambda l: mp.e**l + mp.e**(-l) - 2


def tangency(alpha, beta_prod):
    # symmetric two-component system: P = (E - c l + alpha)^2 - beta_prod,
    # tangency of E(l) - c l + alpha = -sqrt(beta_prod)
    s = mp.sqrt(beta_prod)
    g = lambda l: (E(l) + alpha + s) / l
    lstar = mp.findroot(lambda l: mp.diff(g, l), 1)
    return g(lstar), lstar


def roots(alpha, beta_prod, c):
    s = mp.sqrt(beta_prod)
    f = lambda l: E(l) - c * l + alpha + s
    _, ls = tangency(alpha, beta_prod)
    return mp.findroot(f, (mp.mpf('1e-6'), ls), solver='bisect'), mp.findroot(f, (ls, 20), solver='bisect')


print("holling2 (alpha -1, beta 2)")
cs, ls = tangency(-1, 4)
print("  c_star", mp.nstr(cs, 20), "lambda*", mp.nstr(ls, 20))
c = mp.mpf('1.1') * cs
l1, l2 = roots(-1, 4, c)
print("  c", mp.nstr(c, 20), "lambda1", mp.nstr(l1, 20), "lambda2", mp.nstr(l2, 20))
# barred polynomial at K: alpha -1, beta 1/2
fb = lambda l: E(l) - c * l - 1
rho = -mp.findroot(lambda l: fb(l) + mp.mpf(1) / 2, (-5, 0), solver='bisect')
print("  rho", mp.nstr(rho, 20))
lam_bar = mp.findroot(lambda l: fb(l) - mp.mpf(1) / 2, (ls, 20), solver='bisect')
print("  lambda_bar", mp.nstr(lam_bar, 20))
cc = cs * (1 + mp.mpf('1e-6'))
a, b = roots(-1, 4, cc)
print("  gap at c*(1+1e-6)", mp.nstr(b - a, 12))

print("ricker (a .5, p 4, q 1, m 1): A0 = [[-1, .5], [4, -1]]")
cs, ls = tangency(-1, 2)
print("  c_star", mp.nstr(cs, 20))
c = mp.mpf('1.1') * cs
l1, l2 = roots(-1, 2, c)
print("  c", mp.nstr(c, 20), "lambda1", mp.nstr(l1, 20), "lambda2", mp.nstr(l2, 20))

print("lower threshold d=1 alpha=1: min (E + 1)/l")
g = lambda l: (E(l) + 1) / l
lm = mp.findroot(lambda l: mp.diff(g, l), 1)
print("  value", mp.nstr(g(lm), 20), "argmin", mp.nstr(lm, 20))
print("d=1 alpha=-1 c=2 l=1: E - 2 - 1 =", mp.nstr(E(1) - 3, 20))
