"""Counting oracles written independently of the package's vectorized code."""
from fractions import Fraction


def rate(out, groups, which):
    members = [o for o, g in zip(out, groups) if g == which]
    return Fraction(sum(1 for o in members if o == 1), len(members))


def minmax(a, b):
    hi = max(a, b)
    if hi == 0:
        return Fraction(1)
    return min(a, b) / hi


def dp(out, groups):
    return minmax(rate(out, groups, 0), rate(out, groups, 1))


def cdd(out, groups, strata):
    """Returns (summary or None, {stratum: ratio or None})."""
    per = {}
    sizes = {}
    for r in sorted(set(strata), key=str):
        rows = [(o, g) for o, g, s in zip(out, groups, strata) if s == r]
        sizes[r] = len(rows)
        plus = [g for o, g in rows if o == 1]
        minus = [g for o, g in rows if o == 0]
        if not plus or not minus:
            per[r] = None
            continue
        p_plus = Fraction(sum(1 for g in plus if g == 0), len(plus))
        p_minus = Fraction(sum(1 for g in minus if g == 0), len(minus))
        if max(p_plus, p_minus) == 0:
            per[r] = None
            continue
        per[r] = min(p_plus, p_minus) / max(p_plus, p_minus)
    total = sum(sizes[r] for r in per if per[r] is not None)
    if total == 0:
        return None, per
    return sum(Fraction(sizes[r], total) * per[r] for r in per if per[r] is not None), per


def accuracy(pred, truth):
    return Fraction(sum(1 for a, b in zip(pred, truth) if a == b), len(truth))
