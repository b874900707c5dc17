"""Exact sparse series in conjugate variable pairs with explicit truncation.

A series lives on a :class:`Region`: a set of variables arranged as a forest
where a child is "much smaller" than its parent (``|child| << |parent|``).
Every variable ``v`` carries a holomorphic exponent ``r`` and an
antiholomorphic exponent ``s`` (the exponent of ``vbar``), with ``r - s`` an
integer.

The natural graded coordinates of a monomial are not the raw exponents but
the *ratio coordinates*: the coordinate of ``v`` is the sum of the exponents
over the subtree rooted at ``v``.  For a chain ``x >> y >> z`` this rewrites
``x^a y^b z^c`` as ``x^(a+b+c) (y/x)^(b+c) (z/y)^c``, so the coordinate of
``y`` is the exponent of ``y/x``.  For a root the coordinate is the total
degree.  Holomorphic and antiholomorphic coordinates are tracked separately.

Truncation is explicit.  Each series has a window: for every coordinate a
``cap`` (``None`` means uncapped) and a ``floor`` (``None`` means unbounded
below).  The stored terms are exactly the terms of the underlying infinite
series whose capped coordinates are all ``<= cap``; everything below the
caps is exact.  Operations compute the largest window on which their result
is still exact.

Keys of the term map are tuples ``(r_0, s_0, r_1, s_1, ...)`` of
:class:`~fractions.Fraction` in the variable order of the region.  Zero
coefficients are never stored.
"""

import json
from fractions import Fraction
from functools import lru_cache
from math import gcd

from . import mutations

__all__ = [
    "Region", "RegionSeries", "biseries", "monomial", "constant",
    "series_add", "series_mul", "derive", "binom_expand", "power_of_linear",
    "substitute", "exp_derivation", "negate_var", "coeff_extract",
    "exponent_classes", "binomial", "rational_power", "compare",
]


def _frac(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        raise TypeError("floating point values are not accepted")
    return Fraction(x)


def _is_int(x):
    return x.denominator == 1


@lru_cache(maxsize=65536)
def binomial(a, k):
    """Generalized binomial coefficient ``C(a, k)`` for rational ``a``."""
    a = Fraction(a)
    out = Fraction(1)
    for i in range(k):
        out = out * (a - i) / (i + 1)
    return out


def _iroot(n, q):
    """Exact integer ``q``-th root of ``n >= 0`` or ``None``."""
    if n < 2:
        return n
    lo, hi = 1, 1 << (n.bit_length() // q + 1)
    while lo <= hi:
        mid = (lo + hi) // 2
        m = mid ** q
        if m == n:
            return mid
        if m < n:
            lo = mid + 1
        else:
            hi = mid - 1
    return None


def rational_power(c, e):
    """``c ** e`` for positive rational ``c`` when the result is rational."""
    c, e = _frac(c), _frac(e)
    if c <= 0:
        raise ValueError("rational_power needs a positive base")
    q = e.denominator
    num, den = _iroot(c.numerator, q), _iroot(c.denominator, q)
    if num is None or den is None:
        raise ValueError(f"{c}^{e} is not rational")
    return Fraction(num, den) ** e.numerator


def _pair_power(c, cbar, r, s):
    """Value of ``c^r cbar^s`` for a conjugate pair of leading coefficients.

    For a negative real coefficient the formal convention
    ``(-a)^r (-a)^s = (-1)^(r-s) a^(r+s)`` applies (the same rule as
    :func:`negate_var`).
    """
    if c > 0 and c == cbar:
        return rational_power(c, r + s)
    if c > 0 and cbar > 0:
        return rational_power(c, r) * rational_power(cbar, s)
    if c == cbar:
        d = r - s
        if not _is_int(d):
            raise ValueError("r - s must be an integer")
        sign = -1 if d.numerator % 2 else 1
        return sign * rational_power(-c, r + s)
    raise ValueError("leading coefficients of opposite sign are not conjugate")


# ---------------------------------------------------------------------------
# regions


class Region:
    """Variables arranged in a forest; a child is much smaller than its parent.

    >>> R = Region.chain("xyz")
    >>> R.coords((1, 1, 2, 2, 3, 3))
    (6, 6, 5, 5, 3, 3)
    """

    __slots__ = ("names", "parents", "subtree", "_index", "_hash")

    def __init__(self, names, parent=None):
        names = tuple(names)
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names")
        index = {n: i for i, n in enumerate(names)}
        parent = dict(parent or {})
        parents = []
        for n in names:
            p = parent.get(n)
            if p is not None and p not in index:
                raise ValueError(f"unknown parent {p!r}")
            parents.append(None if p is None else index[p])
        self.names = names
        self.parents = tuple(parents)
        self._index = index
        # acyclicity and subtrees
        sub = [[i] for i in range(len(names))]
        for i in range(len(names)):
            seen = {i}
            j = self.parents[i]
            while j is not None:
                if j in seen:
                    raise ValueError("region parent map has a cycle")
                seen.add(j)
                sub[j].append(i)
                j = self.parents[j]
        self.subtree = tuple(tuple(sorted(s)) for s in sub)
        self._hash = hash((self.names, self.parents))

    @classmethod
    def chain(cls, names):
        """Chain ``names[0] >> names[1] >> ...``."""
        names = tuple(names)
        return cls(names, {b: a for a, b in zip(names, names[1:])})

    def __len__(self):
        return len(self.names)

    def __eq__(self, other):
        return (isinstance(other, Region) and self.names == other.names
                and self.parents == other.parents)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        par = {n: self.names[p] for n, p in zip(self.names, self.parents)
               if p is not None}
        return f"Region({self.names!r}, {par!r})"

    def index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"variable {name!r} not in region {self.names}") from None

    def parent(self, name):
        p = self.parents[self.index(name)]
        return None if p is None else self.names[p]

    def children(self, name):
        i = self.index(name)
        return tuple(self.names[j] for j, p in enumerate(self.parents) if p == i)

    def ancestors(self, name):
        """Proper ancestors, nearest first."""
        out = []
        j = self.parents[self.index(name)]
        while j is not None:
            out.append(self.names[j])
            j = self.parents[j]
        return tuple(out)

    def is_strict_descendant(self, v, w):
        return w in self.ancestors(v)

    def path_below(self, v, w):
        """Variables from ``v`` up to, but excluding, its ancestor ``w``."""
        if not self.is_strict_descendant(v, w):
            raise ValueError(f"{v!r} is not below {w!r} in the region")
        out = [v]
        while True:
            p = self.parent(out[-1])
            if p == w:
                return tuple(out)
            out.append(p)

    def coords(self, key):
        """Ratio coordinates ``(hol_0, antihol_0, hol_1, ...)`` of a key."""
        out = []
        for sub in self.subtree:
            if len(sub) == 1:
                out.append(key[2 * sub[0]])
                out.append(key[2 * sub[0] + 1])
            else:
                out.append(sum(key[2 * j] for j in sub))
                out.append(sum(key[2 * j + 1] for j in sub))
        return tuple(out)

    def coord_names(self):
        out = []
        for n in self.names:
            out.extend((n, n + "bar"))
        return tuple(out)


# ---------------------------------------------------------------------------
# window arithmetic (None as cap means +infinity, as floor means -infinity)


def _cap_min(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def _floor_min(a, b):
    if a is None or b is None:
        return None
    return min(a, b)


def _floor_add(a, b):
    if a is None or b is None:
        return None
    return a + b


class _Unbounded(Exception):
    pass


def _cap_plus_floor(cap, floor):
    if cap is None:
        return None
    if floor is None:
        raise _Unbounded
    return cap + floor


# ---------------------------------------------------------------------------
# the series type


class RegionSeries:
    """Truncated series on a :class:`Region`.

    ``caps`` and ``floors`` are tuples indexed like :meth:`Region.coords`.
    When ``floors`` is omitted it is read off from the stored terms; that is
    only sound when the caller knows the true series has no terms hidden
    below the stored support (true for exact finite series and for one
    variable series with a single capped coordinate per component).
    """

    __slots__ = ("region", "terms", "caps", "floors", "space_tag")

    def __init__(self, region, terms=None, caps=None, floors=None,
                 space_tag="T", _trusted=False):
        self.region = region
        n2 = 2 * len(region)
        self.space_tag = space_tag
        caps = (None,) * n2 if caps is None else tuple(
            None if c is None else _frac(c) for c in caps)
        if len(caps) != n2:
            raise ValueError("caps has the wrong length")
        self.caps = caps
        if _trusted:
            self.terms = terms
        else:
            clean = {}
            for k, c in (terms or {}).items():
                k = tuple(_frac(e) for e in k)
                if len(k) != n2:
                    raise ValueError("exponent key has the wrong length")
                for i in range(0, n2, 2):
                    if not _is_int(k[i] - k[i + 1]):
                        raise ValueError(
                            f"exponents {k[i]}, {k[i + 1]} of "
                            f"{region.names[i // 2]} differ by a non-integer")
                c = _frac(c)
                if c:
                    clean[k] = clean.get(k, 0) + c
            self.terms = {k: c for k, c in clean.items()
                          if c and self._inside(k)}
        if _trusted and floors is not None:
            # the caller vouches for the floors; skip the support scan
            self.floors = tuple(None if f is None else _frac(f) for f in floors)
            return
        support = self._support_floors()
        if floors is None:
            floors = tuple(sf if sf is not None else cp
                           for sf, cp in zip(support, caps))
        else:
            floors = tuple(None if f is None else _frac(f) for f in floors)
            if len(floors) != n2:
                raise ValueError("floors has the wrong length")
            for f, sf in zip(floors, support):
                if f is not None and sf is not None and sf < f:
                    raise ValueError("stored term lies below the declared floor")
        self.floors = floors

    # -- helpers -----------------------------------------------------------
    def _inside(self, key):
        caps = self.caps
        if all(c is None for c in caps):
            return True
        co = self.region.coords(key)
        return all(c is None or x <= c for x, c in zip(co, caps))

    def _support_floors(self):
        n2 = 2 * len(self.region)
        if not self.terms:
            return (None,) * n2
        mins = None
        for k in self.terms:
            co = self.region.coords(k)
            mins = list(co) if mins is None else [min(a, b) for a, b in zip(mins, co)]
        return tuple(mins)

    def _new(self, terms, caps=None, floors=None, trusted=True):
        return RegionSeries(self.region, terms,
                            self.caps if caps is None else caps,
                            self.floors if floors is None else floors,
                            self.space_tag, _trusted=trusted)

    # -- basic protocol ------------------------------------------------------
    def __bool__(self):
        return bool(self.terms)

    def __len__(self):
        return len(self.terms)

    def __eq__(self, other):
        if not isinstance(other, RegionSeries):
            return NotImplemented
        return self.region == other.region and self.terms == other.terms

    __hash__ = None

    def __repr__(self):
        return f"<RegionSeries {self.region.names} {len(self.terms)} terms>"

    def __str__(self):
        return to_text(self)

    def __add__(self, other):
        return series_add(self, other)

    def __sub__(self, other):
        return series_add(self, -other)

    def __neg__(self):
        return self._new({k: -c for k, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, RegionSeries):
            return series_mul(self, other)
        other = _frac(other)
        if not other:
            return self._new({})
        return self._new({k: c * other for k, c in self.terms.items()})

    __rmul__ = __mul__

    def coeff(self, *exps):
        """Coefficient of a key; for one variable ``coeff(r, s)``."""
        return self.terms.get(tuple(_frac(e) for e in exps), Fraction(0))

    def with_tag(self, tag):
        return RegionSeries(self.region, self.terms, self.caps, self.floors,
                            tag, _trusted=True)

    def truncate(self, caps):
        """Restrict to a smaller window (new caps are intersected)."""
        caps = tuple(_cap_min(a, None if b is None else _frac(b))
                     for a, b in zip(self.caps, caps))
        out = RegionSeries(self.region, {}, caps, self.floors, self.space_tag)
        out.terms = {k: c for k, c in self.terms.items() if out._inside(k)}
        return out

    def with_floors(self, floors):
        return RegionSeries(self.region, self.terms, self.caps, floors,
                            self.space_tag, _trusted=True)

    def conj(self):
        """Swap holomorphic and antiholomorphic exponents."""
        def sw(t):
            out = []
            for i in range(0, len(t), 2):
                out.extend((t[i + 1], t[i]))
            return tuple(out)
        return RegionSeries(self.region, {sw(k): c for k, c in self.terms.items()},
                            sw(self.caps), sw(self.floors), self.space_tag,
                            _trusted=True)

    def is_holomorphic(self):
        return all(k[i] == 0 for k in self.terms for i in range(1, len(k), 2))

    def var_exponents(self, key, name):
        i = self.region.index(name)
        return key[2 * i], key[2 * i + 1]


def biseries(terms, cap=None, var="p", floor=None, cap_bar="same"):
    """One-variable series ``sum a_{r,s} p^r pbar^s`` from ``{(r, s): a}``.

    ``cap`` bounds both components unless ``cap_bar`` is given separately.
    """
    if cap_bar == "same":
        cap_bar = cap
    floors = None
    if floor is not None:
        floors = (floor, floor)
    return RegionSeries(Region((var,)), terms, (cap, cap_bar), floors,
                        space_tag="bi")


def monomial(region, exps, coeff=1, caps=None, space_tag="T"):
    """Monomial from ``{name: (r, s)}``; missing variables get exponent 0."""
    key = [Fraction(0)] * (2 * len(region))
    for name, (r, s) in exps.items():
        i = region.index(name)
        key[2 * i], key[2 * i + 1] = _frac(r), _frac(s)
    key = tuple(key)
    co = region.coords(key)
    return RegionSeries(region, {key: coeff}, caps, co, space_tag)


def constant(region, value=1, caps=None, space_tag="T"):
    return monomial(region, {}, value, caps, space_tag)


def _check_same(a, b):
    if a.region != b.region:
        raise ValueError(f"shape mismatch: {a.region} vs {b.region}")
    if a.space_tag != b.space_tag:
        raise ValueError(f"space mismatch: {a.space_tag} vs {b.space_tag}")


def series_add(a, b):
    """Sum on the intersection of the two windows."""
    _check_same(a, b)
    caps = tuple(_cap_min(x, y) for x, y in zip(a.caps, b.caps))
    floors = tuple(_floor_min(x, y) for x, y in zip(a.floors, b.floors))
    out = dict(a.terms)
    for k, c in b.terms.items():
        v = out.get(k, 0) + c
        if v:
            out[k] = v
        else:
            out.pop(k, None)
    res = RegionSeries(a.region, {}, caps, floors, a.space_tag)
    if caps != a.caps or caps != b.caps:
        out = {k: c for k, c in out.items() if res._inside(k)}
    res.terms = out
    return res


def _common_den(*series):
    d = 1
    for s in series:
        for k in s.terms:
            for e in k:
                q = e.denominator
                if q != 1:
                    d = d * q // gcd(d, q)
    return d


def series_mul(a, b):
    """Cauchy product truncated to the largest window where it is exact.

    The cap of a coordinate is ``min(cap_a + floor_b, cap_b + floor_a)``;
    floors add.  A finite cap meeting an unbounded-below floor means the
    product is not determined by the stored data and raises ``ValueError``.
    """
    _check_same(a, b)
    try:
        caps = tuple(_cap_min(_cap_plus_floor(ca, fb), _cap_plus_floor(cb, fa))
                     for ca, cb, fa, fb in zip(a.caps, b.caps, a.floors, b.floors))
    except _Unbounded:
        raise ValueError("product is not well-defined: a capped factor meets "
                         "a factor that is unbounded below") from None
    floors = tuple(_floor_add(x, y) for x, y in zip(a.floors, b.floors))
    res = RegionSeries(a.region, {}, caps, floors, a.space_tag)
    if not a.terms or not b.terms:
        return res
    # integer-scaled exponents make the inner loop cheap
    D = _common_den(a, b)
    region = a.region
    capped = [i for i, c in enumerate(caps) if c is not None]
    icaps = [(caps[i] * D).__floor__() for i in capped]

    def prep(s):
        out = []
        for k, c in s.terms.items():
            ik = tuple(int(e * D) for e in k)
            co = region.coords(ik)
            out.append((ik, c, tuple(co[i] for i in capped)))
        return out

    A, B = prep(a), prep(b)
    if capped:
        # sort b by its first capped coordinate for an early break
        B.sort(key=lambda t: t[2][0])
    acc = {}
    for ka, ca, xa in A:
        slack = [m - x for m, x in zip(icaps, xa)]
        for kb, cb, xb in B:
            if capped:
                if xb[0] > slack[0]:
                    break
                if any(x > s for x, s in zip(xb, slack)):
                    continue
            k = tuple(p + q for p, q in zip(ka, kb))
            acc[k] = acc.get(k, 0) + ca * cb
    cache = {}

    def back(e):
        v = cache.get(e)
        if v is None:
            v = cache[e] = Fraction(e, D)
        return v

    res.terms = {tuple(back(e) for e in k): c for k, c in acc.items() if c}
    return res


def derive(f, var, bar=False):
    """Termwise derivative ``d/dvar`` (or ``d/dvarbar`` when ``bar``)."""
    i = f.region.index(var)
    slot = 2 * i + (1 if bar else 0)
    out = {}
    for k, c in f.terms.items():
        e = k[slot]
        if e:
            nk = list(k)
            nk[slot] = e - 1
            out[tuple(nk)] = c * e
    caps, floors = list(f.caps), list(f.floors)
    for j in (i,) + tuple(f.region.index(a) for a in f.region.ancestors(var)):
        s = 2 * j + (1 if bar else 0)
        if caps[s] is not None:
            caps[s] -= 1
        if floors[s] is not None:
            floors[s] -= 1
    return RegionSeries(f.region, out, caps, floors, f.space_tag, _trusted=True)


def negate_var(f, var):
    """Formal limit ``var -> -var``: multiply each term by ``(-1)^(r-s)``."""
    i = f.region.index(var)
    if mutations.enabled("negate_sign"):
        return f._new(dict(f.terms))
    out = {}
    for k, c in f.terms.items():
        d = k[2 * i] - k[2 * i + 1]
        out[k] = -c if d.numerator % 2 else c
    return f._new(out)


def _shift_caps(caps, co, sign=-1):
    return tuple(None if c is None else c + sign * x for c, x in zip(caps, co))


def power_of_linear(region, lead, rest, alpha, beta, caps, lead_sign=1,
                    space_tag="T"):
    """Expand ``(s L + sum c_v V)^alpha (conjugate)^beta`` with ``L`` dominant.

    ``lead`` is the variable ``L``, ``lead_sign`` is ``s = +-1`` and ``rest``
    maps each smaller variable ``V`` (a strict descendant of ``L``) to a
    rational coefficient.  Negative leads use ``(-L)^a (-Lbar)^b =
    (-1)^(a-b) L^a Lbar^b``.
    """
    alpha, beta = _frac(alpha), _frac(beta)
    if not _is_int(alpha - beta):
        raise ValueError("alpha - beta must be an integer")
    n2 = 2 * len(region)
    caps = (None,) * n2 if caps is None else tuple(caps)
    li = region.index(lead)
    lead_key = [Fraction(0)] * n2
    lead_key[2 * li], lead_key[2 * li + 1] = alpha, beta
    lead_key = tuple(lead_key)
    lead_co = region.coords(lead_key)
    rel_caps = _shift_caps(caps, lead_co)
    zero = (Fraction(0),) * n2
    u_terms, ubar_terms = {}, {}
    for v, c in rest.items():
        c = _frac(c)
        if not c:
            continue
        if not region.is_strict_descendant(v, lead):
            raise ValueError(f"{v!r} is not smaller than {lead!r} in this region")
        k = list(zero)
        vi = region.index(v)
        k[2 * vi] += 1
        k[2 * li] -= 1
        u_terms[tuple(k)] = u_terms.get(tuple(k), 0) + c / lead_sign
        kb = list(zero)
        kb[2 * vi + 1] += 1
        kb[2 * li + 1] -= 1
        ubar_terms[tuple(kb)] = ubar_terms.get(tuple(kb), 0) + c / lead_sign
    one = RegionSeries(region, {zero: 1}, rel_caps, region.coords(zero),
                       space_tag, _trusted=True)

    def one_plus_power(uterms, a):
        if not uterms or a == 0:
            return one
        u = RegionSeries(region, uterms, rel_caps, (Fraction(0),) * n2, space_tag)
        nat = a >= 0 and _is_int(a)
        # every u term must raise some capped coordinate or the sum is infinite
        if not nat:
            for k in u.terms:
                co = region.coords(k)
                if not any(x > 0 and cp is not None for x, cp in zip(co, rel_caps)):
                    raise ValueError("expansion does not terminate inside the window")
        total = one
        pw = one
        kk = 0
        while True:
            kk += 1
            if nat and kk > a:
                break
            pw = series_mul(pw, u)
            if not pw.terms:
                break
            total = series_add(total, pw * binomial(a, kk))
        return total

    body = series_mul(one_plus_power(u_terms, alpha),
                      one_plus_power(ubar_terms, beta))
    sign = 1
    if lead_sign == -1 and (alpha - beta).numerator % 2:
        sign = -1
    elif lead_sign not in (1, -1):
        raise ValueError("lead_sign must be +1 or -1")
    out = {tuple(x + y for x, y in zip(k, lead_key)): sign * c
           for k, c in body.terms.items()}
    floors = tuple(None if f is None else f + x
                   for f, x in zip(body.floors, lead_co))
    return RegionSeries(region, out, caps, floors, space_tag)


def binom_expand(alpha, beta, region, big, small, caps=None, space_tag="T"):
    """Expansion of ``(big - small)^alpha (bigbar - smallbar)^beta``
    in the domain ``|big| > |small|``."""
    return power_of_linear(region, big, {small: -1}, alpha, beta, caps,
                           space_tag=space_tag)


def _leading(series):
    """Return ``(key, coeff)`` of the term below every other term."""
    best = None
    for k in series.terms:
        co = series.region.coords(k)
        if best is None or all(x <= y for x, y in zip(co, best[1])):
            best = (k, co)
    if best is None:
        raise ValueError("cannot substitute the zero series")
    for k in series.terms:
        co = series.region.coords(k)
        if not all(x >= y for x, y in zip(co, best[1])):
            raise ValueError("inner series has no single leading monomial")
    return best[0], series.terms[best[0]]


def _normalized_tail(series, lead_key, lead_c):
    """``series / (c m) - 1`` together with its window."""
    n2 = len(lead_key)
    co = series.region.coords(lead_key)
    out = {}
    for k, c in series.terms.items():
        nk = tuple(x - y for x, y in zip(k, lead_key))
        out[nk] = c / lead_c
    zero = (Fraction(0),) * n2
    out[zero] = out.get(zero, 0) - 1
    if not out[zero]:
        del out[zero]
    caps = _shift_caps(series.caps, co)
    h = RegionSeries(series.region, out, caps, (Fraction(0),) * n2,
                     series.space_tag)
    return h, co


_POWER_CACHE = {}
_POWER_CACHE_SIZE = 16


def _powers(h):
    """List ``[1, h, h^2, ...]`` until the window kills the power.

    Repeated substitutions into the same inner series (the usual case when
    many outers are pushed through one cross-ratio expansion) reuse the
    powers; the cache is keyed on the content of ``h``.
    """
    key = (h.region, h.caps, frozenset(h.terms.items()))
    hit = _POWER_CACHE.get(key)
    if hit is None:
        # each power is kept as (key, coords, coeff) triples; coordinates
        # are linear in the key, so callers can shift them without
        # recomputing
        hit = [[(k, h.region.coords(k), v) for k, v in pw.terms.items()]
               for pw in _compute_powers(h)]
        if len(_POWER_CACHE) >= _POWER_CACHE_SIZE:
            _POWER_CACHE.pop(next(iter(_POWER_CACHE)))
        _POWER_CACHE[key] = hit
    return hit


def _compute_powers(h):
    n2 = 2 * len(h.region)
    zero = (Fraction(0),) * n2
    one = RegionSeries(h.region, {zero: 1}, h.caps, zero, h.space_tag,
                       _trusted=True)
    pows = [one]
    if not h.terms:
        return pows
    for k in h.terms:
        co = h.region.coords(k)
        if not any(x > 0 and cp is not None for x, cp in zip(co, h.caps)):
            raise ValueError("substitution does not terminate inside the window")
    while True:
        nxt = series_mul(pows[-1], h)
        if not nxt.terms:
            return pows
        pows.append(nxt)


def substitute(outer, inner, inner_conj=None):
    """Substitute ``p = inner`` and ``pbar = inner_conj`` into a one-variable
    series ``outer = sum a_{r,s} p^r pbar^s``.

    ``inner`` must be holomorphic of the form ``c m (1 + h)`` with ``m`` a
    monomial below every other term and ``h`` strictly positive in some
    capped coordinate, so that real powers are ``c^r m^r sum_k C(r, k) h^k``.
    ``inner_conj`` defaults to the conjugate of ``inner``.  On a coordinate
    where the leading valuation ``lam`` is positive, the output cap is at
    most ``lam * cap(outer)``.  A positive valuation is only required when
    ``outer`` is truncated; an exact finite ``outer`` such as ``p^a pbar^b``
    may be substituted into any ``c m (1 + h)``.
    """
    if len(outer.region) != 1:
        raise ValueError("outer must be a one-variable series")
    if inner_conj is None:
        inner_conj = inner.conj()
    _check_same(inner, inner_conj)
    if not inner.is_holomorphic() or not inner_conj.conj().is_holomorphic():
        raise ValueError("substitution needs a holomorphic inner series and "
                         "an antiholomorphic conjugate")
    region = inner.region
    n2 = 2 * len(region)
    m, c = _leading(inner)
    mb, cb = _leading(inner_conj)
    h, lam = _normalized_tail(inner, m, c)
    hb, lamb = _normalized_tail(inner_conj, mb, cb)
    bounded = outer.caps == (None, None)
    if not bounded and not any(x > 0 for x in lam[0::2]):
        raise ValueError("inner series has no strictly positive valuation; "
                         "substitution is not defined")
    cap_r, cap_s = outer.caps
    floor_r, floor_s = outer.floors
    if outer.terms and (floor_r is None or floor_s is None):
        raise ValueError("outer series must be bounded below")

    def cap_for(cp, l, cap_p, floor_p):
        # (1+h)^r is exact up to cp - l and m^r moves coordinates by l*r
        if l >= 0:
            low = l * floor_p
        elif cap_p is not None:
            low = l * cap_p
        else:
            low = None
        if cp is None:
            v = None
        elif low is None:
            raise ValueError("substitution window is empty")
        else:
            v = cp - l + low
        if l > 0 and cap_p is not None:
            v = _cap_min(v, l * cap_p)
        return v

    def floor_for(l, cap_p, floor_p):
        if l >= 0:
            return l * floor_p
        return None if cap_p is None else l * cap_p

    caps, floors = [], []
    for i in range(n2):
        if i % 2 == 0:
            src, l, cp_, fp_ = inner, lam[i], cap_r, floor_r
        else:
            src, l, cp_, fp_ = inner_conj, lamb[i], cap_s, floor_s
        if not outer.terms:
            caps.append(src.caps[i])
            floors.append(None)
            continue
        caps.append(cap_for(src.caps[i], l, cp_, fp_))
        floors.append(floor_for(l, cp_, fp_))
    result = RegionSeries(region, {}, caps, None, inner.space_tag)
    if not outer.terms:
        return result
    hp, hbp = _powers(h), _powers(hb)

    capped = [(i, cp) for i, cp in enumerate(result.caps) if cp is not None]

    def expand_power(pows, lead, e):
        terms = {}
        shift = tuple(e * y for y in lead)
        cshift = region.coords(shift)
        room = [(i, cp - cshift[i]) for i, cp in capped]
        for kk, pw in enumerate(pows):
            b = binomial(e, kk)
            if not b:
                continue
            for k, co, v in pw:
                if all(co[i] <= r for i, r in room):
                    nk = tuple(x + y for x, y in zip(k, shift))
                    terms[nk] = terms.get(nk, 0) + b * v
        return terms

    by_r = {}
    for (r, s), a in outer.terms.items():
        by_r.setdefault(r, []).append((s, a))
    s_cache = {}
    acc = {}
    for r, lst in by_r.items():
        pr = expand_power(hp, m, r)
        q = {}
        for s, a in lst:
            if s not in s_cache:
                s_cache[s] = expand_power(hbp, mb, s)
            w = a * _pair_power(c, cb, r, s)
            for k, v in s_cache[s].items():
                q[k] = q.get(k, 0) + w * v
        # holomorphic and antiholomorphic slots are disjoint: merge keys.
        # Each part was already checked against its own caps, so the merged
        # key is inside the window.
        qs = [(k2[1::2], v2) for k2, v2 in q.items()]
        for k1, v1 in pr.items():
            even = k1[0::2]
            for odd, v2 in qs:
                k = tuple(x for pair in zip(even, odd) for x in pair)
                acc[k] = acc.get(k, 0) + v1 * v2
    result.terms = {k: v for k, v in acc.items() if v}
    result.floors = tuple(floors)
    return result


def exp_derivation(f, target, amount, sign=1):
    """Apply ``exp(sign * amount * d/dtarget)`` (and its conjugate), that is
    substitute ``target -> target + sign * amount`` by binomial re-expansion.

    Only legal when ``amount`` is strictly smaller than ``target`` in the
    region; otherwise coefficients become infinite sums and ``ValueError``
    is raised.  The window is unchanged because every coordinate on the path
    from ``amount`` up to ``target`` only increases.
    """
    if amount is None or sign == 0:
        return f
    region = f.region
    path = region.path_below(amount, target)
    ti, vi = region.index(target), region.index(amount)
    path_idx = [region.index(p) for p in path]
    sign = _frac(sign)
    out = {}
    for key, c in f.terms.items():
        co = region.coords(key)
        a, b = key[2 * ti], key[2 * ti + 1]

        def kmax(e, off):
            if e >= 0 and _is_int(e):
                lim = int(e)
            else:
                lim = None
            for j in path_idx:
                cp = f.caps[2 * j + off]
                if cp is not None:
                    room = int((cp - co[2 * j + off]).__floor__())
                    lim = room if lim is None else min(lim, room)
            if lim is None:
                raise ValueError("shift does not terminate inside the window")
            return lim

        ka, kb = kmax(a, 0), kmax(b, 1)
        for i in range(ka + 1):
            bi = binomial(a, i)
            if not bi:
                continue
            for j in range(kb + 1):
                bj = binomial(b, j)
                if not bj:
                    continue
                nk = list(key)
                nk[2 * ti] -= i
                nk[2 * vi] += i
                nk[2 * ti + 1] -= j
                nk[2 * vi + 1] += j
                nk = tuple(nk)
                out[nk] = out.get(nk, 0) + c * bi * bj * sign ** (i + j)
    return f._new({k: v for k, v in out.items() if v})


def coeff_extract(f, var, a, a_conj):
    """Coefficient of ``var^a varbar^a_conj`` as a series in the other
    variables.

    Children of ``var`` are reattached to its parent.  Ancestors lose ``a``
    from their coordinates, so their caps drop by ``a``.
    """
    a, a_conj = _frac(a), _frac(a_conj)
    region = f.region
    i = region.index(var)
    kids = region.children(var)
    for off, e in ((0, a), (1, a_conj)):
        cp = f.caps[2 * i + off]
        if cp is not None and len(kids) > 1:
            raise ValueError("cannot extract from a capped variable with "
                             "several children")
        if cp is not None and not kids and e > cp:
            raise ValueError("requested exponent lies outside the window")
    names = tuple(n for n in region.names if n != var)
    parent = {}
    for n in names:
        p = region.parent(n)
        if p == var:
            p = region.parent(var)
        parent[n] = p
    new_region = Region(names, parent)
    anc = set(region.ancestors(var))
    caps, floors = [], []
    for n in names:
        j = region.index(n)
        for off, e in ((0, a), (1, a_conj)):
            cp, fl = f.caps[2 * j + off], f.floors[2 * j + off]
            if n in anc:
                cp = None if cp is None else cp - e
                fl = None if fl is None else fl - e
            elif n in kids:
                vc = f.caps[2 * i + off]
                cp = _cap_min(cp, None if vc is None else vc - e)
            caps.append(cp)
            floors.append(fl)
    out = {}
    for k, c in f.terms.items():
        if k[2 * i] == a and k[2 * i + 1] == a_conj:
            out[k[:2 * i] + k[2 * i + 2:]] = c
    return RegionSeries(new_region, out, caps, floors, f.space_tag)


def exponent_classes(f):
    """Residues ``r mod 1`` of the holomorphic exponents that occur.

    For several variables the classes are tuples, one residue per variable.
    """
    out = set()
    for k in f.terms:
        res = tuple(k[i] - (k[i].__floor__()) for i in range(0, len(k), 2))
        out.add(res[0] if len(res) == 1 else res)
    return out


def compare(a, b):
    """Mismatches of two series on the intersection of their windows.

    Returns a list of ``(key, lhs, rhs)``, sorted canonically.
    """
    if a.region != b.region:
        raise ValueError("shape mismatch")
    caps = tuple(_cap_min(x, y) for x, y in zip(a.caps, b.caps))
    ta, tb = a.truncate(caps).terms, b.truncate(caps).terms
    bad = []
    for k in set(ta) | set(tb):
        x, y = ta.get(k, Fraction(0)), tb.get(k, Fraction(0))
        if x != y:
            bad.append((k, x, y))
    bad.sort(key=lambda t: _sort_key(t[0]))
    return bad


# ---------------------------------------------------------------------------
# serialization


def _sort_key(k):
    return (sum(k), k)


def fmt_q(x):
    """Rational as ``num/den`` (or ``num`` when integral)."""
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _monomial_text(region, k):
    parts = []
    for i, n in enumerate(region.names):
        r, s = k[2 * i], k[2 * i + 1]
        if r:
            parts.append(n if r == 1 else f"{n}^{fmt_q(r)}")
        if s:
            parts.append(n + "bar" if s == 1 else f"{n}bar^{fmt_q(s)}")
    return " ".join(parts) if parts else "1"


def to_text(f):
    """One term per line, ``coeff * v^r vbar^s ...``, sorted canonically."""
    if not f.terms:
        return "0"
    lines = []
    for k in sorted(f.terms, key=_sort_key):
        lines.append(f"{fmt_q(f.terms[k])} * {_monomial_text(f.region, k)}")
    return "\n".join(lines)


def to_json(f):
    """Canonically sorted list of ``{"exponents": {...}, "coeff": "a/b"}``."""
    out = []
    for k in sorted(f.terms, key=_sort_key):
        ex = {}
        for i, n in enumerate(f.region.names):
            if k[2 * i]:
                ex[n] = fmt_q(k[2 * i])
            if k[2 * i + 1]:
                ex[n + "bar"] = fmt_q(k[2 * i + 1])
        out.append({"exponents": ex, "coeff": fmt_q(f.terms[k])})
    return out


def to_document(f):
    """JSON-ready description including region and window."""
    return {
        "vars": list(f.region.names),
        "parent": {n: f.region.parent(n) for n in f.region.names},
        "space": f.space_tag,
        "window": {
            name: {"floor": None if fl is None else fmt_q(fl),
                   "cap": None if cp is None else fmt_q(cp)}
            for name, fl, cp in zip(f.region.coord_names(), f.floors, f.caps)
        },
        "terms": to_json(f),
    }


def from_json(region, items, caps=None, floors=None, space_tag="T"):
    """Inverse of :func:`to_json` for a known region."""
    if isinstance(items, str):
        items = json.loads(items)
    terms = {}
    for it in items:
        key = [Fraction(0)] * (2 * len(region))
        for name, e in it["exponents"].items():
            bar = name.endswith("bar") and name not in region.names
            base = name[:-3] if bar else name
            key[2 * region.index(base) + (1 if bar else 0)] = Fraction(e)
        terms[tuple(key)] = terms.get(tuple(key), 0) + Fraction(it["coeff"])
    return RegionSeries(region, terms, caps, floors, space_tag)


def from_document(doc):
    region = Region(doc["vars"], doc.get("parent"))
    names = region.coord_names()
    w = doc.get("window", {})
    caps = [None if w.get(n, {}).get("cap") is None else Fraction(w[n]["cap"])
            for n in names]
    floors = [None if w.get(n, {}).get("floor") is None else Fraction(w[n]["floor"])
              for n in names]
    return from_json(region, doc["terms"], caps, floors, doc.get("space", "T"))
