"""Functions on the thrice-punctured sphere stored through chart expansions.

A function ``f`` with conformal singularities at ``0, 1, oo`` is represented
by its series at the six standard local coordinates (charts)::

    p,  p/(p-1),  1-p,  1-1/p,  1/p,  1/(1-p)

The expansion at chart ``chi`` is the series of ``q -> f(chi^{-1}(q))`` at
``q = 0``.  All six charts are Moebius maps permuting ``{0, 1, oo}``, so the
same six maps also describe the action of the symmetric group ``S_4`` on
cross-ratios.  Expansions are one-variable series in ``p`` (see
:func:`artifact.series.biseries`).
"""

import re
from fractions import Fraction
from itertools import permutations

from .series import (
    RegionSeries, Region, biseries, binomial, substitute, series_add, compare,
    fmt_q, to_json, from_json,
)

# ---------------------------------------------------------------------------
# permutations of {1, 2, 3, 4}
#
# A permutation is a tuple ``s`` with ``s[i-1]`` the image of ``i``.
# Composition is ``(s t)(i) = s(t(i))``.

IDENTITY = (1, 2, 3, 4)


def perm_from_cycles(text, n=4):
    """``"(12)(34)"`` -> ``(2, 1, 4, 3)``; ``""`` or ``"id"`` -> identity."""
    img = list(range(1, n + 1))
    text = text.strip()
    if text in ("", "id", "1", "()"):
        return tuple(img)
    cycles = re.findall(r"\(([0-9 ,]*)\)", text)
    if "".join("(" + c + ")" for c in cycles).replace(" ", "") != text.replace(" ", ""):
        raise ValueError(f"cannot parse permutation {text!r}")
    # a product of cycles acts right to left, like :func:`compose`
    out = tuple(img)
    for cyc in cycles:
        pts = [int(ch) for ch in cyc if ch.isdigit()]
        step = list(range(1, n + 1))
        for a, b in zip(pts, pts[1:] + pts[:1]):
            step[a - 1] = b
        out = compose(out, tuple(step))
    return out


def compose(s, t):
    """``(s t)(i) = s(t(i))``."""
    return tuple(s[t[i] - 1] for i in range(len(t)))


def inverse(s):
    out = [0] * len(s)
    for i, v in enumerate(s):
        out[v - 1] = i + 1
    return tuple(out)


def cycle_string(s):
    seen, parts = set(), []
    for i in range(1, len(s) + 1):
        if i in seen or s[i - 1] == i:
            seen.add(i)
            continue
        cyc, j = [], i
        while j not in seen:
            seen.add(j)
            cyc.append(str(j))
            j = s[j - 1]
        parts.append("(" + "".join(cyc) + ")")
    return "".join(parts) or "id"


ALL_PERMS = tuple(tuple(p) for p in permutations(IDENTITY))
KLEIN = tuple(perm_from_cycles(c) for c in ("", "(12)(34)", "(13)(24)", "(14)(23)"))

# ---------------------------------------------------------------------------
# Moebius maps permuting {0, 1, oo}

INF = "oo"


class Moebius:
    """``t -> (a t + b) / (c t + d)`` with rational entries, up to scale."""

    __slots__ = ("m",)

    def __init__(self, a, b, c, d):
        m = tuple(Fraction(x) for x in (a, b, c, d))
        if m[0] * m[3] - m[1] * m[2] == 0:
            raise ValueError("singular matrix")
        # normalize the projective class: first nonzero entry equals 1
        lead = next(x for x in m if x)
        self.m = tuple(x / lead for x in m)

    def __eq__(self, other):
        return isinstance(other, Moebius) and self.m == other.m

    def __hash__(self):
        return hash(self.m)

    def __repr__(self):
        return "Moebius(%s)" % ", ".join(fmt_q(x) for x in self.m)

    def __call__(self, t):
        a, b, c, d = self.m
        if t == INF:
            return INF if c == 0 else a / c
        t = Fraction(t)
        den = c * t + d
        if den == 0:
            return INF
        return (a * t + b) / den

    def __matmul__(self, other):
        """Composition ``(self @ other)(t) = self(other(t))``."""
        a, b, c, d = self.m
        e, f, g, h = other.m
        return Moebius(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)

    def inverse(self):
        a, b, c, d = self.m
        return Moebius(d, -b, -c, a)

    def on_points(self):
        """Permutation of ``(0, 1, oo)`` as a dict."""
        return {x: self(x) for x in (Fraction(0), Fraction(1), INF)}


#: the six charts, each as the Moebius map ``p -> chi(p)``
CHARTS = {
    "p": Moebius(1, 0, 0, 1),
    "p/(p-1)": Moebius(1, 0, 1, -1),
    "1-p": Moebius(-1, 1, 0, 1),
    "1-1/p": Moebius(1, -1, 1, 0),
    "1/p": Moebius(0, 1, 1, 0),
    "1/(1-p)": Moebius(0, 1, -1, 1),
}
CHART_NAMES = tuple(CHARTS)
_BY_MAP = {m: name for name, m in CHARTS.items()}

#: for each of the six maps g: g(t) and 1 - g(t) as (sign, k, m) meaning
#: sign * t^k (1-t)^m
_FACTORS = {
    "p": ((1, 1, 0), (1, 0, 1)),
    "p/(p-1)": ((-1, 1, -1), (1, 0, -1)),
    "1-p": ((1, 0, 1), (1, 1, 0)),
    "1-1/p": ((-1, -1, 1), (1, -1, 0)),
    "1/p": ((1, -1, 0), (-1, -1, 1)),
    "1/(1-p)": ((1, 0, -1), (-1, 1, -1)),
}


def chart_name(m):
    """Name of the chart equal to the Moebius map ``m``."""
    try:
        return _BY_MAP[m]
    except KeyError:
        raise ValueError(f"{m!r} does not permute 0, 1, oo") from None


def partner(chart):
    """The chart ``chi/(chi-1)`` centred at the same point as ``chi``."""
    return chart_name(CHARTS["p/(p-1)"] @ CHARTS[chart])


def center(chart):
    """Point of ``{0, 1, oo}`` where ``chart`` vanishes."""
    return CHARTS[chart].inverse()(0)


class AutElement:
    """Automorphism of ``{0, 1, oo}`` attached to a permutation in S4.

    ``matrix`` is ``t_sigma``; ``sigma . xi = t_sigma^{-1}(xi)``, so the
    cross-ratio map is :attr:`on_xi`.
    """

    __slots__ = ("matrix", "perm")

    def __init__(self, matrix):
        self.matrix = matrix
        self.perm = matrix.on_points()

    @property
    def on_xi(self):
        return self.matrix.inverse()

    @property
    def name(self):
        """``sigma . p`` written as a chart-like expression."""
        return chart_name(self.on_xi)

    def __eq__(self, other):
        return isinstance(other, AutElement) and self.matrix == other.matrix

    def __hash__(self):
        return hash(self.matrix)

    def __repr__(self):
        return f"AutElement(sigma.p = {self.name})"

    def __matmul__(self, other):
        return AutElement(self.matrix @ other.matrix)


# coset representatives and the image sigma . p, read off the orbit table
_COSET_TABLE = {
    "": "p",
    "(12)": "p/(p-1)",
    "(23)": "1/p",
    "(13)": "1-p",
    "(123)": "1-1/p",
    "(132)": "1/(1-p)",
}


def _build_s4_table():
    table = {}
    for rep, image in _COSET_TABLE.items():
        s = perm_from_cycles(rep)
        t = AutElement(CHARTS[image].inverse())
        for k in KLEIN:
            table[compose(s, k)] = t
    return table


S4_TABLE = _build_s4_table()


def s4_to_aut(sigma):
    """Automorphism ``t_sigma`` of ``{0, 1, oo}``; kernel is the Klein group."""
    if isinstance(sigma, str):
        sigma = perm_from_cycles(sigma)
    return S4_TABLE[tuple(sigma)]


def cross_ratio(z):
    z1, z2, z3, z4 = (Fraction(v) for v in z)
    return (z1 - z2) * (z3 - z4) / ((z1 - z3) * (z2 - z4))


def permuted_cross_ratio(sigma, z):
    """``(sigma . xi)(z) = xi(z_{sigma 1}, ..., z_{sigma 4})``."""
    return cross_ratio([z[sigma[i] - 1] for i in range(4)])


# ---------------------------------------------------------------------------
# rational exact forms: {(a, b): c} means sum c p^a (1-p)^b


def _form_clean(form):
    return {k: Fraction(v) for k, v in form.items() if v}


def parse_exact_form(text):
    """Parse ``"3/2*p^2*(1-p)^-1 - p + 1"`` into ``{(a, b): c}``."""
    s = text.replace(" ", "")
    if not s:
        raise ValueError("empty expression")
    if s[0] not in "+-":
        s = "+" + s
    # split on + or - that are not inside parentheses
    terms, depth, start = [], 0, 0
    for i, ch in enumerate(s):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch in "+-" and depth == 0 and i > 0 and s[i - 1] not in "^*":
            terms.append(s[start:i])
            start = i
    terms.append(s[start:])
    out = {}
    for t in terms:
        sign = -1 if t[0] == "-" else 1
        coeff, a, b = Fraction(sign), 0, 0
        for fac in filter(None, t[1:].split("*")):
            m = re.fullmatch(r"(p|\(1-p\))(?:\^(-?\d+))?", fac)
            if m:
                e = int(m.group(2) or 1)
                if m.group(1) == "p":
                    a += e
                else:
                    b += e
                continue
            if re.fullmatch(r"\d+(/\d+)?", fac):
                coeff *= Fraction(fac)
                continue
            raise ValueError(f"cannot parse factor {fac!r} in {text!r}")
        out[(a, b)] = out.get((a, b), 0) + coeff
    return _form_clean(out)


def format_exact_form(form):
    if not form:
        return "0"
    parts = []
    for (a, b), c in sorted(form.items()):
        facs = []
        if a:
            facs.append("p" if a == 1 else f"p^{a}")
        if b:
            facs.append("(1-p)" if b == 1 else f"(1-p)^{b}")
        body = "*".join(facs)
        mag = abs(c)
        if body:
            term = body if mag == 1 else f"{fmt_q(mag)}*{body}"
        else:
            term = fmt_q(mag)
        parts.append(("-" if c < 0 else "+") + term)
    out = "".join(parts)
    return out[1:] if out[0] == "+" else out


def compose_form(form, mapname):
    """Exact form of ``t -> f(g(t))`` for one of the six maps ``g``."""
    (s1, k1, m1), (s2, k2, m2) = _FACTORS[mapname]
    out = {}
    for (a, b), c in form.items():
        key = (k1 * a + k2 * b, m1 * a + m2 * b)
        out[key] = out.get(key, 0) + c * s1 ** (a % 2) * s2 ** (b % 2)
    return _form_clean(out)


def evaluate_form(form, t):
    t = Fraction(t)
    return sum((c * t ** a * (1 - t) ** b for (a, b), c in form.items()), Fraction(0))


def _expand_form(form, cap):
    """Series in ``p`` of ``sum c p^a (1-p)^b`` with exponents ``<= cap``."""
    terms = {}
    for (a, b), c in form.items():
        k = 0
        while a + k <= cap:
            bk = binomial(b, k)
            if b >= 0 and k > b:
                break
            if bk:
                key = (Fraction(a + k), Fraction(0))
                terms[key] = terms.get(key, 0) + c * bk * (-1) ** k
            k += 1
    lo = min((a for a, _ in form), default=0)
    return biseries(terms, cap, floor=None).with_floors(
        (Fraction(min(lo, cap)), Fraction(0)))


# ---------------------------------------------------------------------------
# chart functions


class ChartFunction:
    """A function on the punctured sphere given by some chart expansions.

    ``expansions`` maps chart names to one-variable series; ``exact_form``
    optionally holds the function as a Laurent polynomial in ``p`` and
    ``1-p``.
    """

    def __init__(self, expansions=None, exact_form=None, builder=None):
        self.expansions = dict(expansions or {})
        for name in self.expansions:
            if name not in CHARTS:
                raise ValueError(f"unknown chart {name!r}")
        self.exact_form = None if exact_form is None else _form_clean(exact_form)
        # optional ``order -> ChartFunction`` used to deepen a truncation
        self.builder = builder

    def __repr__(self):
        ef = "" if self.exact_form is None else f" exact={format_exact_form(self.exact_form)}"
        return f"<ChartFunction charts={sorted(self.expansions)}{ef}>"

    def has_chart(self, chart):
        return chart in self.expansions or partner(chart) in self.expansions

    def chart(self, chart):
        """Expansion at ``chart``; derived from the partner chart if absent.

        The partner ``chi' = chi/(chi-1)`` is centred at the same point and
        ``j(chi', f)(q) = j(chi, f)(q/(q-1))``.
        """
        if chart in self.expansions:
            return self.expansions[chart]
        other = partner(chart)
        if other in self.expansions:
            return limit_to_partner(self.expansions[other])
        raise KeyError(f"chart {chart!r} is not available")

    def series_at(self, chart, cap):
        """Expansion at ``chart`` exact at least up to exponent ``cap``.

        Functions with an exact form (or a builder) are re-expanded to the
        requested order; otherwise the stored expansion is returned as is
        and its own window tells how far it can be trusted.
        """
        cap = Fraction(cap).__ceil__() if cap is not None else None
        if self.exact_form is not None and cap is not None:
            inv = chart_name(CHARTS[chart].inverse())
            return _expand_form(compose_form(self.exact_form, inv), max(cap, 0))
        if self.builder is not None and cap is not None:
            stored = self.expansions.get(chart)
            if stored is None or any(c is not None and c < cap for c in stored.caps):
                return self.builder(max(cap, 0)).chart(chart)
        return self.chart(chart)

    def to_json(self):
        out = {"expansions": {c: to_json(s) for c, s in sorted(self.expansions.items())},
               "caps": {c: [None if x is None else fmt_q(x) for x in s.caps]
                        for c, s in sorted(self.expansions.items())}}
        if self.exact_form is not None:
            out["exact_form"] = format_exact_form(self.exact_form)
        return out

    @classmethod
    def from_json(cls, doc, order=None):
        """Build from ``{"exact_form": str, "expansions": {...}}``.

        With an ``exact_form`` and an ``order`` the six expansions are
        generated by :func:`make_rational`.
        """
        form = doc.get("exact_form")
        if isinstance(form, str):
            form = parse_exact_form(form)
        if form is not None and order is not None and not doc.get("expansions"):
            return make_rational(form, order)
        if doc.get("builtin") == "ising":
            return ising_function(order if order is not None else 4)
        exps = {}
        region = Region(("p",))
        for name, items in (doc.get("expansions") or {}).items():
            caps = (doc.get("caps") or {}).get(name)
            caps = None if caps is None else [None if c is None else Fraction(c) for c in caps]
            exps[name] = from_json(region, items, caps, space_tag="bi")
        return cls(exps, form)


def limit_to_partner(series):
    """``lim_{p -> p/(p-1)}``: substitute ``p -> -sum_{n>=1} p^n``."""
    if not series.terms:
        return series
    cap, cap_bar = series.caps
    if cap is None or cap_bar is None:
        raise ValueError("partner chart needs a truncated expansion")
    low = min(series.floors[0], series.floors[1])
    n = int((max(cap, cap_bar) - low).__ceil__()) + 2
    inner = biseries({(k, 0): -1 for k in range(1, n + 1)}, n, cap_bar=None)
    inner = inner.with_floors((Fraction(1), Fraction(0)))
    out = substitute(series, inner)
    return out.truncate(series.caps).with_tag("bi")


def make_rational(form, order):
    """All six chart expansions of an exact Laurent polynomial in ``p, 1-p``.

    ``form`` may be a dict ``{(a, b): c}`` or a string accepted by
    :func:`parse_exact_form`.  ``order`` is the exponent cap of each series.
    """
    if isinstance(form, str):
        form = parse_exact_form(form)
    form = _form_clean(form)
    order = Fraction(order)
    exps = {}
    for name in CHART_NAMES:
        inv = chart_name(CHARTS[name].inverse())
        exps[name] = _expand_form(compose_form(form, inv), order)
    return ChartFunction(exps, form)


def act_s4(sigma, f):
    """``sigma . f`` defined by ``(sigma . f)(xi) = f(sigma . xi)``.

    Chart expansions are relabelled with ``j(chi, sigma f) = j(chi o t_sigma, f)``.
    """
    if isinstance(sigma, str):
        sigma = perm_from_cycles(sigma)
    t = s4_to_aut(sigma).matrix
    exps = {}
    for name, m in CHARTS.items():
        src = chart_name(m @ t)
        if f.has_chart(src):
            exps[name] = f.chart(src)
    form = None
    if f.exact_form is not None:
        form = compose_form(f.exact_form, chart_name(t.inverse()))
    if not exps and f.expansions:
        raise KeyError("no chart needed by this permutation is available")
    builder = None
    if f.builder is not None:
        inner = f.builder
        builder = lambda order: act_s4(sigma, inner(order))  # noqa: E731
    return ChartFunction(exps, form, builder)


def ising_function(order):
    """Chart expansions of ``|1 - sqrt(1-p)|^(1/2) + |1 + sqrt(1-p)|^(1/2)``
    with ``|z| = z zbar``.

    Both charts centred at 0 and at 1 are filled (the function is invariant
    under ``p -> 1-p``); the charts at infinity are left empty.
    """
    order = Fraction(order)
    n = int(order.__ceil__()) + 2
    # sqrt(1-p) = 1 + sum_{k>=1} w_k p^k, so A = 1 - sqrt(1-p) and
    # B = 1 + sqrt(1-p) are read off directly
    w = {(Fraction(k), Fraction(0)): binomial(Fraction(1, 2), k) * (-1) ** k
         for k in range(1, n + 1)}
    A = biseries({k: -v for k, v in w.items()}, n, cap_bar=None)
    A = A.with_floors((Fraction(1), Fraction(0)))
    w[(Fraction(0), Fraction(0))] = Fraction(2)
    B = biseries(w, n, cap_bar=None).with_floors((Fraction(0), Fraction(0)))
    half = biseries({(Fraction(1, 2), Fraction(1, 2)): 1})
    f = series_add(substitute(half, A), substitute(half, B))
    f = f.truncate((order, order)).with_tag("bi")
    return ChartFunction({"p": f, "1-p": f}, builder=ising_function)


class Classification:
    def __init__(self, kind, exact_form=None):
        self.kind = kind
        self.exact_form = exact_form

    def __repr__(self):
        if self.exact_form is None:
            return f"Classification({self.kind})"
        return f"Classification({self.kind}, {format_exact_form(self.exact_form)})"


def holomorphic_classify(f):
    """Decide whether ``f`` is a Laurent polynomial in ``p`` and ``1-p``.

    Returns a :class:`Classification` with kind ``"rational"`` (and the
    reconstructed form), ``"not-holomorphic"`` when some expansion depends
    on ``pbar``, or ``"undetermined"`` when the stored windows cannot decide.
    """
    if not f.has_chart("p"):
        return Classification("undetermined")
    for s in f.expansions.values():
        if not s.is_holomorphic():
            return Classification("not-holomorphic")
    if f.exact_form is not None:
        return Classification("rational", dict(f.exact_form))
    if not (f.has_chart("1-p") and f.has_chart("1/p")):
        return Classification("undetermined")
    at0, at1, atinf = f.chart("p"), f.chart("1-p"), f.chart("1/p")
    form = {}
    # principal part at 1: coefficients of (1-p)^{-m}
    for (r, s), c in at1.terms.items():
        if r < 0:
            form[(0, int(r))] = c
    # highest power of p from the expansion at infinity
    top = max([-int(r) for (r, s) in atinf.terms] + [0])
    cap0 = at0.caps[0]
    if cap0 is not None and top > cap0:
        return Classification("undetermined")
    rest = series_add(at0, -_expand_form(form, at0.caps[0] if cap0 is not None else top))
    for (r, s), c in rest.terms.items():
        if r <= top:
            form[(int(r), 0)] = form.get((int(r), 0), 0) + c
    form = _form_clean(form)
    check = make_rational(form, max([c for s in f.expansions.values()
                                     for c in s.caps if c is not None] + [0]))
    for name, s in f.expansions.items():
        if compare(check.chart(name), s):
            return Classification("undetermined")
    return Classification("rational", form)
