"""Independent reference values, written without importing the package under test."""

import math

import numpy as np


def heis_law(p, r):
    """(x,y,z)o(x',y',z') = (x+x', y+y', z+z'+(xy'-yx')/2), written out by hand."""
    x, y, z = p
    a, b, c = r
    return (x + a, y + b, z + c + 0.5 * (x * b - y * a))


def heis_X(u, p, h=1e-5):
    """X1 = d_x - y/2 d_z, X2 = d_y + x/2 d_z applied by ordinary partials."""
    x, y, z = p

    def d(k):
        e = [0.0, 0.0, 0.0]
        e[k] = h
        return (u(x + e[0], y + e[1], z + e[2]) - u(x - e[0], y - e[1], z - e[2])) / (2 * h)

    return d(0) - 0.5 * y * d(2), d(1) + 0.5 * x * d(2)


def heat_sine(x, t, length=1.0):
    return np.exp(-(math.pi / length) ** 2 * t) * np.sin(math.pi * x / length)


def lstsq_slope(k, y):
    """Closed-form ordinary least-squares slope."""
    k = np.asarray(k, dtype=float)
    y = np.asarray(y, dtype=float)
    kb, yb = k.mean(), y.mean()
    return float(np.sum((k - kb) * (y - yb)) / np.sum((k - kb) ** 2))


def heisenberg_norm(p):
    """(x^4 + y^4 + z^2)^(1/4): coordinate-wise powers 2 l!/j with l = 2."""
    x, y, z = p
    return (x ** 4 + y ** 4 + z * z) ** 0.25
