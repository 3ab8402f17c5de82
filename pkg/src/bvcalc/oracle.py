"""Independent 1D verification oracle.

Computes the two-term functional value for piecewise-affine profiles and
polynomial-density reference measures by direct summation over a fixed
fine partition plus an explicit jump/atom ledger.  Deliberately shares no
code with the evaluation pipeline: descriptions come in as plain dicts,
the integrand formulas are written out inline, and the summation is a
bare midpoint loop.
"""

from __future__ import annotations

import math

ORACLE_POINTS = 100_000
_MATCH = 1e-12


def _slope_at(x, breaks, slopes):
    k = 0
    for b in breaks:
        if x >= b:
            k += 1
        else:
            break
    return slopes[k]


def _poly(x, coeffs):
    out = 0.0
    for c in reversed(coeffs):
        out = out * x + c
    return out


def _integrand_pair(f_desc):
    """(F(x, t), F_infinity(x, t)) as plain closures."""
    kind = f_desc["kind"]
    modulated = bool(f_desc.get("modulated", False))

    if kind == "norm":
        base = abs
        base_inf = abs
    elif kind == "area":
        base = lambda t: math.sqrt(1.0 + t * t)
        base_inf = abs
    elif kind == "shifted-norm":
        a0 = float(f_desc.get("A0", 0.3))
        c = float(f_desc.get("c", 0.4))
        base = lambda t: abs(t - a0) + c
        base_inf = abs
    elif kind == "w-shape":
        base = lambda t: abs(abs(t) - 1.0)
        base_inf = abs
    else:
        raise ValueError(f"oracle does not know integrand kind {kind!r}")

    if modulated:
        return (
            lambda x, t: (1.0 + 0.5 * x) * base(t),
            lambda x, t: (1.0 + 0.5 * x) * base_inf(t),
        )
    return (lambda x, t: base(t)), (lambda x, t: base_inf(t))


def oracle_1d(u_desc, mu_desc, f_desc, domain=(0.0, 1.0), npoints=ORACLE_POINTS):
    """Functional value integral F(x, dDu/dmu) dmu + recession term, by a
    direct midpoint sum over ``npoints`` sub-intervals plus the explicit
    ledger of jumps and atoms.

    ``u_desc``: {"breaks": [...], "slopes": [...], "jumps": [[pos, height]...]}
    ``mu_desc``: {"poly": [c0, c1, ...]} density coefficients, "atoms": [[pos, w]...]
    ``f_desc``: {"kind": ..., "modulated": bool, ...}
    """
    a, b = float(domain[0]), float(domain[1])
    breaks = [float(t) for t in u_desc.get("breaks", ())]
    slopes = [float(s) for s in u_desc.get("slopes", (0.0,))]
    jumps = [(float(t), float(d)) for t, d in u_desc.get("jumps", ())]
    coeffs = [float(c) for c in mu_desc.get("poly", (1.0,))]
    atoms = [(float(p), float(w)) for p, w in mu_desc.get("atoms", ())]

    F, F_inf = _integrand_pair(f_desc)

    # partition aligned with the slope breakpoints (uniform within each
    # smooth stretch), so the midpoint sum never straddles a kink
    edges = [a] + [t for t in breaks if a < t < b] + [b]

    def cell_terms():
        for lo, hi in zip(edges[:-1], edges[1:]):
            slope = _slope_at(0.5 * (lo + hi), breaks, slopes)
            count = max(1, round(npoints * (hi - lo) / (b - a)))
            step = (hi - lo) / count
            for k in range(count):
                x = lo + (k + 0.5) * step
                dens = _poly(x, coeffs)
                yield F(x, slope / dens) * dens * step

    total = math.fsum(cell_terms())

    for pos, height in jumps:
        atom_w = 0.0
        for p, w in atoms:
            if abs(p - pos) <= _MATCH:
                atom_w = w
                break
        if atom_w > 0.0:
            total += F(pos, height / atom_w) * atom_w
        else:
            total += F_inf(pos, height)

    for p, w in atoms:
        if any(abs(p - pos) <= _MATCH for pos, _ in jumps):
            continue
        total += F(p, 0.0) * w

    return total
