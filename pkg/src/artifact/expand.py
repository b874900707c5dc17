"""Parenthesized products, four-point expansions and the maps between them.

A parenthesization such as ``"1(2(34))"`` is a full binary tree whose
leaves are point labels.  Each internal node carries a variable
``z_i - z_j`` where ``i`` and ``j`` are the edge numbers of its two children
(the edge number of a node is that of its right child), and the region of
the tree says that a child variable is much smaller than its parent.  A
trailing ``*`` leaf stands for a point fixed at the origin.

Four-point functions are sums of a free part
``prod (z_i - z_j)^a_ij (zbar_i - zbar_j)^b_ij`` times ``f(xi)`` where ``xi``
is the cross-ratio and ``f`` is a :class:`~artifact.charts.ChartFunction`.
:func:`e_A` expands such a function in the region of a tree.

Windows: an integer or rational ``order`` caps every ratio coordinate of
the tree's region except the total degree, which stays uncapped.
"""

import math
import re
from fractions import Fraction

from . import mutations
from .charts import (
    ChartFunction, act_s4, compose, perm_from_cycles, s4_to_aut,
)
from .reports import CheckReport, FAIL, INCONCLUSIVE, PASS, combine
from .series import (
    Region, RegionSeries, _frac, _is_int, _monomial_text,
    binomial, biseries, derive, exp_derivation, negate_var, power_of_linear,
    series_add, series_mul, substitute,
)

__all__ = [
    "ParenError", "UnsupportedTransform", "Parenthesization", "parse_paren",
    "FreeCorTerm", "Cor4Elem", "GCor2Term", "GCor2Elem", "tau",
    "expand_free", "expand_xi", "e_A", "v_inverse", "diff_kernel_check",
    "transform", "formal_dual", "gcor2_expand", "gcor2_dual", "q_prefactor",
    "s4_act_cor4", "times_monomial", "rename", "s_A", "conformal_operators",
    "transform_chain", "gcor2_invert", "gcor_limit", "gcor2_region", "chart_for",
    "xi_term", "free_floors",
]

STAR = "*"


class ParenError(ValueError):
    """Malformed parenthesization; ``pos`` is a 0-based string offset."""

    def __init__(self, msg, pos=None):
        self.pos = pos
        super().__init__(msg if pos is None else f"{msg} at position {pos}")


class UnsupportedTransform(ValueError):
    pass


# ---------------------------------------------------------------------------
# trees


class _Node:
    __slots__ = ("label", "left", "right", "parent", "edge", "var", "depth")

    def __init__(self, label=None, left=None, right=None):
        self.label, self.left, self.right = label, left, right
        self.parent = None
        self.edge = label
        self.var = None
        self.depth = 0

    @property
    def is_leaf(self):
        return self.left is None


def _parse(text):
    pos = 0
    n = len(text)

    def factor():
        nonlocal pos
        if pos >= n:
            raise ParenError("unexpected end of input", pos)
        ch = text[pos]
        if ch in "123456789" or ch == STAR:
            pos += 1
            return _Node(label=ch if ch == STAR else int(ch))
        if ch == "(":
            start = pos
            pos += 1
            items = group()
            if pos >= n or text[pos] != ")":
                raise ParenError("unbalanced parenthesis opened", start)
            pos += 1
            if len(items) != 2:
                raise ParenError(f"group has {len(items)} factors, a full binary "
                                 "tree needs exactly 2", start)
            return _Node(left=items[0], right=items[1])
        if ch == ")":
            raise ParenError("unbalanced closing parenthesis", pos)
        raise ParenError(f"unexpected character {ch!r}", pos)

    def group():
        items = []
        while pos < n and text[pos] != ")":
            items.append(factor())
        return items

    items = group()
    if pos < n:
        raise ParenError("unbalanced closing parenthesis", pos)
    if len(items) == 1 and not items[0].is_leaf:
        return items[0]
    if len(items) != 2:
        raise ParenError(f"expression has {len(items)} top-level factors, "
                         "a full binary tree needs exactly 2", 0)
    return _Node(left=items[0], right=items[1])


def _render(node, top=True):
    if node.is_leaf:
        return str(node.label)
    body = _render(node.left, False) + _render(node.right, False)
    return body if top else f"({body})"


def _shape(node):
    if node.is_leaf:
        return "." if node.label != STAR else STAR
    return "(" + _shape(node.left) + _shape(node.right) + ")"


class Parenthesization:
    """A parsed tree with edge numbers, node variables and region.

    Variable names: four-leaf trees without ``*`` use ``x, y, z`` in preorder
    of the internal nodes; trees with ``*`` use ``z{i}{j}`` for ``z_i - z_j``
    and ``z{i}`` for ``z_i - z_* = z_i``; other trees use ``x{i}`` where
    ``i`` is the edge number of the node's left child.
    """

    def __init__(self, text):
        text = text.strip().replace(" ", "")
        if text and set(text) - set("0123456789()*"):
            bad = next(i for i, ch in enumerate(text) if ch not in "0123456789()*")
            raise ParenError(f"unexpected character {text[bad]!r}", bad)
        root = _parse(text)
        self.root = root
        self.leaves = []
        self.nodes = []
        self._collect(root, None, 0)
        labels = [lf.label for lf in self.leaves]
        nums = [x for x in labels if x != STAR]
        if len(set(nums)) != len(nums):
            dup = next(x for x in nums if nums.count(x) > 1)
            raise ParenError(f"duplicate label {dup}", text.index(str(dup), text.index(str(dup)) + 1))
        if labels.count(STAR) > 1:
            raise ParenError("more than one '*' leaf", text.rindex(STAR))
        self.star = STAR in labels
        if self.star and labels[-1] != STAR:
            raise ParenError("'*' must be the rightmost leaf", text.index(STAR))
        if sorted(nums) != list(range(1, len(nums) + 1)):
            raise ParenError(f"labels {sorted(nums)} are not 1..{len(nums)}", 0)
        self.n = len(nums)
        self.text = _render(root)
        self._leaf = {lf.label: lf for lf in self.leaves}
        self._assign_vars()
        names = tuple(nd.var for nd in self.nodes)
        parent = {nd.var: nd.parent.var for nd in self.nodes if nd.parent is not None}
        self.region = Region(names, parent)
        self._by_var = {nd.var: nd for nd in self.nodes}

    def _collect(self, node, parent, depth):
        node.parent, node.depth = parent, depth
        if node.is_leaf:
            self.leaves.append(node)
            return
        self.nodes.append(node)
        self._collect(node.left, node, depth + 1)
        self._collect(node.right, node, depth + 1)
        node.edge = node.right.edge

    def _assign_vars(self):
        if self.star:
            for nd in self.nodes:
                l, r = nd.left.edge, nd.right.edge
                nd.var = f"z{l}" if r == STAR else f"z{l}{r}"
        elif self.n == 4:
            for nd, name in zip(self.nodes, "xyz"):
                nd.var = name
        else:
            for nd in self.nodes:
                nd.var = f"x{nd.left.edge}"

    # -- basic protocol ----------------------------------------------------
    def __str__(self):
        return self.text

    def __repr__(self):
        return f"Parenthesization({self.text!r})"

    def __eq__(self, other):
        return isinstance(other, Parenthesization) and self.text == other.text

    def __hash__(self):
        return hash(self.text)

    @property
    def shape(self):
        return _shape(self.root)

    @property
    def labels(self):
        return [lf.label for lf in self.leaves]

    @property
    def variables(self):
        return tuple(nd.var for nd in self.nodes)

    def node_difference(self, var):
        """``(i, j)`` with ``var = z_i - z_j``."""
        nd = self._by_var[var]
        return nd.left.edge, nd.right.edge

    def describe(self):
        """``{var: "z_i - z_j"}`` in preorder."""
        out = {}
        for nd in self.nodes:
            i, j = nd.left.edge, nd.right.edge
            out[nd.var] = f"z{i}" if j == STAR else f"z{i} - z{j}"
        return out

    def is_channel(self):
        """True for the four-point shape ``(..)(..)`` (with or without ``*``)."""
        base = self.collapse_star() if self.star else self
        return base.n == 4 and base.shape == "((..)(..))"

    def space_tag(self):
        if self.star:
            return "T_star"
        return "T_channel" if self.is_channel() else "T"

    # -- linear forms --------------------------------------------------------
    def _up_form(self, label, top):
        """``z_label - z_edge(top)`` as ``{var: coeff}`` (label below ``top``)."""
        out = {}
        node = self._leaf[label]
        while node is not top:
            par = node.parent
            if par is None:
                raise ValueError(f"leaf {label} is not below the given node")
            if par.left is node:
                out[par.var] = out.get(par.var, 0) + 1
            node = par
        return out

    def _lca(self, a, b):
        anc = set()
        node = self._leaf[a]
        while node is not None:
            anc.add(id(node))
            node = node.parent
        node = self._leaf[b]
        while id(node) not in anc:
            node = node.parent
        return node

    def _inside(self, node, label):
        x = self._leaf[label]
        while x is not None:
            if x is node:
                return True
            x = x.parent
        return False

    def difference(self, i, j):
        """``z_i - z_j = sign * lead + sum rest[v] v`` in node variables."""
        if i == j:
            raise ValueError("difference of a label with itself")
        top = self._lca(i, j)
        fi, fj = self._up_form(i, top), self._up_form(j, top)
        form = dict(fi)
        for v, c in fj.items():
            form[v] = form.get(v, 0) - c
        lead = top.var
        sign = form.pop(lead)
        rest = {v: c for v, c in form.items() if c}
        return lead, sign, rest

    def position(self, label):
        """``z_label`` (with the root edge at the origin) as ``{var: coeff}``."""
        return self._up_form(label, self.root)

    # -- derived trees -------------------------------------------------------
    def collapse_star(self):
        """Remove the ``*`` leaf by replacing ``(X*)`` with ``X``."""
        if not self.star:
            return self
        return Parenthesization(_render(_drop_star(self.root)))

    def relabel(self, sigma):
        """The tree ``sigma A``: leaf ``i`` becomes ``sigma(i)``."""
        sigma = _as_perm(sigma)
        text = "".join(str(sigma[int(ch) - 1]) if ch.isdigit() else ch
                       for ch in self.text)
        return Parenthesization(text)

    def standard(self):
        """``(S, sigma)`` with ``S`` labelled ``1..n`` left to right and
        ``self = sigma S``."""
        count = iter(range(1, self.n + 1))
        text = "".join(str(next(count)) if ch.isdigit() else ch for ch in self.text)
        sigma = tuple(lbl for lbl in self.labels if lbl != STAR)
        return Parenthesization(text), sigma


def _drop_star(node):
    if node.is_leaf:
        return _Node(label=node.label)
    if node.right.is_leaf and node.right.label == STAR:
        return _drop_star(node.left)
    return _Node(left=_drop_star(node.left), right=_drop_star(node.right))


def parse_paren(s):
    """Parse a parenthesization such as ``"1(2(34))"`` or ``"1(2(3(4*)))"``."""
    if isinstance(s, Parenthesization):
        return s
    return Parenthesization(s)


def _as_perm(sigma):
    if isinstance(sigma, str):
        return perm_from_cycles(sigma)
    return tuple(sigma)


# ---------------------------------------------------------------------------
# the assignment P4 -> S4 of the cross-ratio representative

_TAU_STANDARD = {
    "(12)(34)": "",
    "((12)3)4": "",
    "(1(23))4": "(13)",
    "1((23)4)": "(13)",
    "1(2(34))": "",
}


def tau(A):
    """Permutation attached to a four-leaf tree (the ``*`` leaf is dropped).

    Fixed on the five standard trees and extended by
    ``tau(sigma A) = sigma tau(A)``.
    """
    A = parse_paren(A).collapse_star()
    if A.n != 4:
        raise ValueError("tau is defined on four-leaf trees")
    std, sigma = A.standard()
    entry = _TAU_STANDARD[std.text]
    if std.text == "1((23)4)" and mutations.enabled("tau_entry"):
        entry = ""
    return compose(sigma, perm_from_cycles(entry))


def chart_for(A):
    """Chart whose expansion is substituted in :func:`e_A` for tree ``A``."""
    return s4_to_aut(tau(A)).name


# ---------------------------------------------------------------------------
# free parts


def _pair_key(k):
    if isinstance(k, str):
        if not re.fullmatch(r"\d\d", k):
            raise ValueError(f"bad pair {k!r}")
        return int(k[0]), int(k[1])
    i, j = k
    return int(i), int(j)


class FreeCorTerm:
    """``coeff * prod_{i<j} (z_i - z_j)^alpha_ij (zbar_i - zbar_j)^beta_ij``.

    Pairs may be given in either order; a reversed pair ``(j, i)`` is folded
    with ``(z_j - z_i)^a (conj)^b = (-1)^(a-b) (z_i - z_j)^a (conj)^b``.
    """

    __slots__ = ("coeff", "alpha", "beta")

    def __init__(self, coeff=1, alpha=None, beta=None):
        coeff = _frac(coeff)
        al, be = {}, {}
        alpha = dict(alpha or {})
        beta = dict(beta or {})
        for k in set(alpha) | set(beta):
            i, j = _pair_key(k)
            a = _frac(alpha.get(k, 0))
            b = _frac(beta.get(k, 0))
            if not _is_int(a - b):
                raise ValueError(f"exponents {a}, {b} of pair {i}{j} differ by "
                                 "a non-integer")
            if i == j:
                raise ValueError("pair with equal labels")
            if i > j:
                i, j = j, i
                if (a - b).numerator % 2:
                    coeff = -coeff
            al[(i, j)] = al.get((i, j), 0) + a
            be[(i, j)] = be.get((i, j), 0) + b
        self.coeff = coeff
        self.alpha = {k: v for k, v in al.items() if v or be[k]}
        self.beta = {k: be[k] for k in self.alpha}

    def __repr__(self):
        parts = [f"({i}{j})^({self.alpha[(i, j)]},{self.beta[(i, j)]})"
                 for i, j in sorted(self.alpha)]
        return f"FreeCorTerm({self.coeff} {' '.join(parts)})"

    def __eq__(self, other):
        return (isinstance(other, FreeCorTerm) and self.coeff == other.coeff
                and self.alpha == other.alpha and self.beta == other.beta)

    def __hash__(self):
        return hash((self.coeff, tuple(sorted(self.alpha.items())),
                     tuple(sorted(self.beta.items()))))

    def __mul__(self, other):
        if not isinstance(other, FreeCorTerm):
            return FreeCorTerm(self.coeff * _frac(other), self.alpha, self.beta)
        al, be = dict(self.alpha), dict(self.beta)
        for k in other.alpha:
            al[k] = al.get(k, 0) + other.alpha[k]
            be[k] = be.get(k, 0) + other.beta[k]
        return FreeCorTerm(self.coeff * other.coeff, al, be)

    __rmul__ = __mul__

    def exponent(self, i, j):
        return self.alpha.get((i, j), Fraction(0)), self.beta.get((i, j), Fraction(0))

    def total(self):
        """Total holomorphic and antiholomorphic degree."""
        return sum(self.alpha.values(), Fraction(0)), sum(self.beta.values(), Fraction(0))

    def permuted(self, sigma):
        """``sigma . t``: the factor of pair ``(i, j)`` moves to ``(sigma i, sigma j)``."""
        sigma = _as_perm(sigma)
        al, be = {}, {}
        for (i, j), a in self.alpha.items():
            k = (sigma[i - 1], sigma[j - 1])
            al[k], be[k] = a, self.beta[(i, j)]
        return FreeCorTerm(self.coeff, al, be)

    def to_json(self):
        from .series import fmt_q
        return {
            "coeff": fmt_q(self.coeff),
            "alpha": {f"{i}{j}": fmt_q(v) for (i, j), v in sorted(self.alpha.items())},
            "beta": {f"{i}{j}": fmt_q(v) for (i, j), v in sorted(self.beta.items())},
        }

    @classmethod
    def from_json(cls, doc):
        return cls(Fraction(doc.get("coeff", "1")),
                   {k: Fraction(v) for k, v in (doc.get("alpha") or {}).items()},
                   {k: Fraction(v) for k, v in (doc.get("beta") or {}).items()})


class Cor4Elem:
    """Finite sum of ``free term * f(xi)``; ``f`` may be ``None`` (meaning 1)."""

    def __init__(self, terms=()):
        self.terms = []
        for t in terms:
            if isinstance(t, FreeCorTerm):
                t = (t, None)
            self.terms.append((t[0], t[1]))

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    def __add__(self, other):
        return Cor4Elem(self.terms + other.terms)

    def scaled(self, c):
        return Cor4Elem([(t * c, f) for t, f in self.terms])

    def to_json(self):
        out = []
        for t, f in self.terms:
            d = t.to_json()
            if f is not None:
                d["f"] = f.to_json()
            out.append(d)
        return {"terms": out}

    @classmethod
    def from_json(cls, doc, order=None):
        terms = []
        for d in doc["terms"]:
            f = d.get("f")
            terms.append((FreeCorTerm.from_json(d),
                          None if f is None else ChartFunction.from_json(f, order)))
        return cls(terms)


def q_prefactor(h, hbar):
    """Free term with the exponent pattern of the prefactor ``Q(h, z)``.

    ``alpha_12 = -2 h2``, ``alpha_34 = h1 - h2 - h3 - h4``,
    ``alpha_14 = h2 - h1 + h3 - h4``, ``alpha_13 = h2 - h1 - h3 + h4`` and
    ``alpha_23 = alpha_24 = 0``; ``beta`` likewise from ``hbar``.
    """
    h = [_frac(v) for v in h]
    hb = [_frac(v) for v in hbar]
    if len(h) != 4 or len(hb) != 4:
        raise ValueError("need four weights")
    for a, b in zip(h, hb):
        if not _is_int(a - b):
            raise ValueError("h - hbar must be an integer for every point")
    flip = -1 if mutations.enabled("q_exponent") else 1

    def pattern(w):
        h1, h2, h3, h4 = w
        return {(1, 2): -2 * h2, (3, 4): h1 - h2 - h3 - h4,
                (1, 4): h2 - h1 + h3 - h4, (1, 3): h2 - h1 + flip * (-h3) + h4}

    return FreeCorTerm(1, pattern(h), pattern(hb))


def s4_act_cor4(sigma, phi):
    """``(sigma . phi)(z) = phi(z_{sigma 1}, ..., z_{sigma 4})``."""
    sigma = _as_perm(sigma)
    if isinstance(phi, FreeCorTerm):
        return phi.permuted(sigma)
    return Cor4Elem([(t.permuted(sigma), None if f is None else act_s4(sigma, f))
                     for t, f in phi])


# ---------------------------------------------------------------------------
# windows


def _target_caps(A, order):
    """``order`` on every coordinate except the total degree of each root."""
    if isinstance(order, tuple):
        return order
    order = None if order is None else _frac(order)
    caps = []
    for name in A.region.names:
        root = A.region.parent(name) is None
        caps.extend((None, None) if root else (order, order))
    return tuple(caps)


def _minus(caps, floors):
    return tuple(None if c is None else c - f for c, f in zip(caps, floors))


def _plus(a, b):
    return tuple(None if x is None or y is None else x + y for x, y in zip(a, b))


def times_monomial(g, exps, coeff=1):
    """Multiply by ``coeff * prod v^r vbar^s`` from ``{v: (r, s)}``."""
    region = g.region
    key = [Fraction(0)] * (2 * len(region))
    for v, (r, s) in exps.items():
        i = region.index(v)
        key[2 * i] += _frac(r)
        key[2 * i + 1] += _frac(s)
    key = tuple(key)
    co = region.coords(key)
    coeff = _frac(coeff)
    terms = {tuple(a + b for a, b in zip(k, key)): c * coeff
             for k, c in g.terms.items()} if coeff else {}
    return RegionSeries(region, terms, _plus(g.caps, co), _plus(g.floors, co),
                        g.space_tag, _trusted=True)


def rename(g, region, mapping, space_tag=None, new_caps=None):
    """Move ``g`` onto ``region`` sending variable ``v`` to ``mapping[v]``.

    Variables of ``region`` that are not images carry exponent 0; their
    caps come from ``new_caps`` (a dict, default uncapped) and their floors
    are 0.  Caps and floors of images are copied, which is only meaningful
    when the subtree structure is preserved (checked by :func:`transform`).
    """
    n2 = 2 * len(region)
    idx = [(2 * g.region.index(v), 2 * region.index(w)) for v, w in mapping.items()]
    terms = {}
    for k, c in g.terms.items():
        nk = [Fraction(0)] * n2
        for a, b in idx:
            nk[b], nk[b + 1] = k[a], k[a + 1]
        terms[tuple(nk)] = c
    caps, floors = [None] * n2, [Fraction(0)] * n2
    for name in region.names:
        j = 2 * region.index(name)
        cp = (new_caps or {}).get(name)
        caps[j] = caps[j + 1] = cp
    for a, b in idx:
        caps[b], caps[b + 1] = g.caps[a], g.caps[a + 1]
        floors[b], floors[b + 1] = g.floors[a], g.floors[a + 1]
    # a new variable's coordinate is the sum of the coordinates of the
    # topmost images below it, so its floor is the sum of their floors
    images = {w: v for v, w in mapping.items()}
    for name in region.names:
        if name in images:
            continue
        j = 2 * region.index(name)
        below = [w for w in images
                 if region.is_strict_descendant(w, name)
                 and not any(u in images for u in region.ancestors(w)
                             if region.is_strict_descendant(u, name))]
        for off in (0, 1):
            total = Fraction(0)
            for w in below:
                f = g.floors[2 * g.region.index(images[w]) + off]
                total = None if (f is None or total is None) else total + f
            floors[j + off] = total
    return RegionSeries(region, terms, caps, floors,
                        g.space_tag if space_tag is None else space_tag,
                        _trusted=True)


# ---------------------------------------------------------------------------
# expansions of free parts


def _factors(t, A):
    """``(lead, sign, rest, a, b, floor_coords)`` for each nontrivial pair."""
    out = []
    region = A.region
    for (i, j), a in sorted(t.alpha.items()):
        b = t.beta[(i, j)]
        lead, sign, rest = A.difference(i, j)
        key = [Fraction(0)] * (2 * len(region))
        li = region.index(lead)
        key[2 * li], key[2 * li + 1] = a, b
        out.append((lead, sign, rest, a, b, region.coords(tuple(key))))
    return out


def free_floors(t, A):
    """Coordinates of the leading monomial of ``expand_free(t, A)``."""
    A = parse_paren(A)
    fl = (Fraction(0),) * (2 * len(A.region))
    for *_, co in _factors(t, A):
        fl = _plus(fl, co)
    return fl


def _expand_free_caps(t, A, caps):
    region = A.region
    tag = A.space_tag()
    facs = _factors(t, A)
    total = (Fraction(0),) * (2 * len(region))
    for *_, co in facs:
        total = _plus(total, co)
    zero = (Fraction(0),) * (2 * len(region))
    out = RegionSeries(region, {zero: t.coeff}, None, zero, tag, _trusted=True)
    if not t.coeff:
        return RegionSeries(region, {}, caps, None, tag)
    for lead, sign, rest, a, b, co in facs:
        others = tuple(x - y for x, y in zip(total, co))
        fcaps = _minus(caps, others)
        fac = power_of_linear(region, lead, rest, a, b, fcaps, lead_sign=sign,
                              space_tag=tag)
        out = series_mul(out, fac)
    return out.truncate(caps)


def expand_free(t, A, order):
    """Expansion of a free term in the region of ``A``, exact up to ``order``
    on every ratio coordinate."""
    A = parse_paren(A)
    if not isinstance(t, FreeCorTerm):
        t = FreeCorTerm(1, t)
    return _expand_free_caps(t, A, _target_caps(A, order))


def xi_term(A):
    """The cross-ratio ``tau(A) . xi`` written as a free term."""
    s = tau(A)
    a = {(s[0], s[1]): 1, (s[2], s[3]): 1, (s[0], s[2]): -1, (s[1], s[3]): -1}
    return FreeCorTerm(1, a, {})


def expand_xi(A, order):
    """Expansion of ``tau(A) . xi`` in the region of ``A``."""
    A = parse_paren(A)
    return expand_free(xi_term(A), A, order)


def _substituted_chart(f, A, caps):
    """``j(chart, f)`` with ``p`` replaced by the expansion of the cross-ratio,
    exact on ``caps``."""
    chart = chart_for(A)
    xt = xi_term(A)
    lam = free_floors(xt, A)
    # the chart expansion must reach far enough for every capped coordinate
    need = [Fraction(0), Fraction(0)]
    for i, (c, l) in enumerate(zip(caps, lam)):
        if c is not None and l > 0:
            need[i % 2] = max(need[i % 2], c / l)
    cap_p = max(need)
    return _substitute_xi(f.series_at(chart, cap_p), A, caps)


def _substitute_xi(series, A, caps):
    xt = xi_term(A)
    lam = free_floors(xt, A)
    fl = series.floors
    if series.terms and (fl[0] is None or fl[1] is None):
        raise ValueError("chart expansion is unbounded below")
    inner_caps = []
    for i, (c, l) in enumerate(zip(caps, lam)):
        if c is None:
            inner_caps.append(None)
            continue
        # the conjugate of the holomorphic inner series serves the pbar
        # side, so both sides are widened with the smaller floor; rounding
        # down only widens further and lets outers from different exponent
        # classes share one expansion
        fp = Fraction(math.floor(min(fl[0], fl[1]))) if series.terms else Fraction(0)
        inner_caps.append(c + l - l * fp if l >= 0 else c)
    inner = _cached_free(xt, A, tuple(inner_caps))
    return substitute(series, inner)


_FREE_CACHE = {}


def _cached_free(t, A, caps):
    key = (t, A.text, caps)
    if key not in _FREE_CACHE:
        if len(_FREE_CACHE) >= 16:
            _FREE_CACHE.pop(next(iter(_FREE_CACHE)))
        _FREE_CACHE[key] = _expand_free_caps(t, A, caps)
    return _FREE_CACHE[key]


def s_A(outer, A, order):
    """``outer(p)`` with ``p`` replaced by the expansion of ``tau(A) . xi``.

    The inner expansion is taken deep enough that the result is exact up to
    ``order`` on every ratio coordinate that ``outer``'s window allows.
    """
    A = parse_paren(A)
    return _substitute_xi(outer, A, _target_caps(A, order)).with_tag(A.space_tag())


def _sub_floors(f, A):
    chart = chart_for(A)
    lam = free_floors(xi_term(A), A)
    series = f.series_at(chart, 0)
    fl = series.floors
    return tuple(l * fl[i % 2] for i, l in enumerate(lam))


def e_A(phi, A, order):
    """Expansion of a four-point function in the region of ``A``.

    Each summand is ``expand_free(t) * j(tau(A).p, f)(p -> tau(A).xi)``.
    """
    A = parse_paren(A)
    if A.collapse_star().n != 4:
        raise ValueError("e_A is defined for four-point trees")
    if isinstance(phi, FreeCorTerm):
        phi = Cor4Elem([phi])
    target = _target_caps(A, order)
    out = RegionSeries(A.region, {}, target, None, A.space_tag())
    for t, f in phi:
        if f is None:
            part = _expand_free_caps(t, A, target)
        else:
            sub_fl = _sub_floors(f, A)
            free_fl = free_floors(t, A)
            free = _expand_free_caps(t, A, _minus(target, sub_fl))
            sub = _substituted_chart(f, A, _minus(target, free_fl)).with_tag(A.space_tag())
            part = series_mul(free, sub).truncate(target)
        out = series_add(out, part)
    return out


# ---------------------------------------------------------------------------
# differential operators and the inverse maps


def _kernel_report(name, s, count=1):
    if s.terms:
        k = min(s.terms, key=lambda k: (sum(k), k))
        return CheckReport(name, FAIL, [(_monomial_text(s.region, k), s.terms[k], 0)],
                           compared=len(s.terms))
    return CheckReport(name, PASS, (), s.caps, compared=count)


#: default tree whose point positions define each operator family
_FAMILY_TREES = {"S": "1(2(34))", "S'": "(12)(34)", "S''": "1(23)",
                 "GCor-Euler": "1(2(34))", "translation": "1(2(3(4*)))"}


def _accumulate(acc, term):
    return term if acc is None else series_add(acc, term)


def _apply_linear(g, form, bar):
    """``sum_w c_w * w * g`` for a linear form ``{w: c_w}``."""
    out = None
    for w, c in sorted(form.items()):
        if c:
            out = _accumulate(out, times_monomial(g, {w: (0, 1) if bar else (1, 0)}, c))
    return out


def conformal_operators(g, tree, bar=False, weights=None):
    """``(translation, dilation, special)`` applied to ``g``.

    The operators are ``sum_i d/dz_i``, ``sum_i (z_i d/dz_i + h_i)`` and
    ``sum_i (z_i^2 d/dz_i + 2 h_i z_i)`` over the points of ``tree``,
    rewritten in its node variables with the root point (or ``*``) at the
    origin.  ``g`` must live on a region with the same shape as the tree;
    its variables are matched to the tree's in order.  Translation is
    ``None`` unless the tree has a ``*`` leaf.
    """
    tree = parse_paren(tree)
    if g.region.parents != tree.region.parents:
        raise ValueError("series region does not match the tree")
    ren = dict(zip(tree.region.names, g.region.names))
    pos = {}
    for lf in tree.leaves:
        if lf.label != STAR:
            pos[lf.label] = {ren[v]: c for v, c in tree.position(lf.label).items()}
    pos[STAR] = {}
    pos[tree.root.edge] = {}
    trans = dil = spec = None
    for nd in tree.nodes:
        v = ren[nd.var]
        dv = derive(g, v, bar)
        dil = _accumulate(dil, times_monomial(dv, {v: (0, 1) if bar else (1, 0)}))
        # (z_a^2 - z_b^2) d/dv = v (z_a + z_b) d/dv
        form = dict(pos[nd.left.edge])
        for w, c in pos[nd.right.edge].items():
            form[w] = form.get(w, 0) + c
        vd = times_monomial(dv, {v: (0, 1) if bar else (1, 0)})
        spec = _accumulate(spec, _apply_linear(vd, form, bar))
        if tree.star and nd.right.edge == STAR:
            trans = _accumulate(trans, dv)
    if weights is not None:
        weights = {int(k): _frac(w) for k, w in weights.items()}
        dil = series_add(dil, g * sum(weights.values()))
        lin = {}
        for i, w in weights.items():
            for v, c in pos[i].items():
                lin[v] = lin.get(v, 0) + 2 * w * c
        extra = _apply_linear(g, lin, bar)
        if extra is not None:
            spec = series_add(spec, extra)
    return trans, dil, spec


def diff_kernel_check(g, family="S", h=None, hbar=None, tree=None):
    """Apply the operators of a family termwise; pass iff all vanish.

    ``S``, ``S'`` and ``S''`` are the dilation and special conformal
    operators (and conjugates) on the trees ``1(2(34))``, ``(12)(34)`` and
    ``1(23)``; on a chain they read ``D0 = sum v d/dv`` and
    ``D1 = sum v^2 d/dv``, on the channel tree ``D1`` has the term
    ``(y^2 + 2xy) d/dy``.  ``GCor-Euler`` adds the weights: ``D0 + sum h_i``
    and ``D1 + 2 sum h_i z_i``.  ``translation`` checks ``sum d/dz_i`` on a
    tree with a ``*`` leaf.  ``tree`` overrides the default tree.
    """
    if family not in _FAMILY_TREES:
        raise ValueError(f"unknown family {family!r}")
    tree = parse_paren(tree or _FAMILY_TREES[family])
    name = f"kernel {family}"
    if g.region.parents != tree.region.parents:
        return CheckReport(name, FAIL, [("region shape does not match " + tree.text, 1, 0)])
    if not g.terms:
        return CheckReport(name, INCONCLUSIVE, (), g.caps,
                           detail="series is zero on its window")
    if family == "GCor-Euler" and (h is None or hbar is None):
        raise ValueError("GCor-Euler needs weights h and hbar")
    reports = []
    for bar in (False, True):
        tag = "bar" if bar else ""
        w = None
        if family == "GCor-Euler":
            w = dict(enumerate(hbar if bar else h, start=1))
        trans, dil, spec = conformal_operators(g, tree, bar, w)
        if family == "translation":
            if trans is None:
                raise ValueError("translation family needs a tree with '*'")
            reports.append(_kernel_report(f"T{tag}", trans, len(g.terms)))
            continue
        reports.append(_kernel_report(f"D0{tag}", dil, len(g.terms)))
        reports.append(_kernel_report(f"D1{tag}", spec, len(g.terms)))
    return combine(name, reports, g.caps)


_CHAIN = parse_paren("1(2(34))")
_CHANNEL = parse_paren("(12)(34)")


def v_inverse(g, A, check=True):
    """Inverse of ``outer -> substitute(outer, expand_xi(A))`` on the kernel.

    With ``check`` the input is first run through :func:`diff_kernel_check`
    and rejected when it is not a solution.

    For ``1(2(34))`` this is the formal limit ``(x, y, z) -> (oo, 1, p)``;
    for ``(12)(34)`` each ``(y/x)^n (z/x)^m`` (conjugates ``r, s``) becomes
    ``p^((n+m)/2) pbar^((r+s)/2)``.
    """
    A = parse_paren(A)
    family = {"1(2(34))": "S", "(12)(34)": "S'"}.get(A.text)
    if family is None:
        raise ValueError("v_inverse is defined for 1(2(34)) and (12)(34)")
    if g.region != A.region:
        raise ValueError("series does not live on the region of the tree")
    rep = diff_kernel_check(g, family) if check else None
    if rep is not None and rep.status == FAIL:
        mono, lhs, _ = rep.witnesses[0]
        raise ValueError(f"series is not in the solution space: {mono} -> {lhs}")
    region = g.region
    out = {}
    if family == "S":
        # only terms with x and y coordinates zero survive the limit;
        # test the cheap y coordinate before forming the others
        ysub = region.subtree[1]
        for k, c in g.terms.items():
            if sum(k[2 * j] for j in ysub) or sum(k[2 * j + 1] for j in ysub):
                continue
            co = region.coords(k)
            if co[0] == 0 and co[1] == 0:
                key = (co[4], co[5])
                out[key] = out.get(key, 0) + c
        cap = (g.caps[4], g.caps[5])
        if (g.caps[2] is not None and g.caps[2] < 0) or (g.caps[3] is not None and g.caps[3] < 0):
            cap = (Fraction(-1), Fraction(-1))
    else:
        # y and z are leaves of the channel region, so their ratio
        # coordinates are the key entries themselves
        acc = {}
        for k, c in g.terms.items():
            key = (k[2] + k[4], k[3] + k[5])
            acc[key] = acc.get(key, 0) + c
        for (a, b), c in acc.items():
            key = (a / 2, b / 2)
            out[key] = out.get(key, 0) + c
        cap = []
        for off in (0, 1):
            cy, cz = g.caps[2 + off], g.caps[4 + off]
            fy, fz = g.floors[2 + off], g.floors[4 + off]
            cands = []
            if cy is not None:
                cands.append((cy + fz) / 2 if fz is not None else None)
            if cz is not None:
                cands.append((cz + fy) / 2 if fy is not None else None)
            if any(c is None for c in cands):
                raise ValueError("window of the channel series is not bounded below")
            cap.append(min(cands) if cands else None)
        cap = tuple(cap)
    return biseries({k: v for k, v in out.items() if v
                     and (cap[0] is None or k[0] <= cap[0])
                     and (cap[1] is None or k[1] <= cap[1])},
                    cap[0], cap_bar=cap[1])


# ---------------------------------------------------------------------------
# transforms between regions


def _plan(F, G):
    """Images ``{var_F: (lead_G, sign, rest)}`` or raise UnsupportedTransform."""
    if F.star and not G.star:
        raise UnsupportedTransform("cannot drop the '*' point")
    if sorted(map(str, F.labels)) != sorted(map(str, G.labels)) and not (
            G.star and not F.star
            and sorted(map(str, F.labels)) == sorted(str(x) for x in G.labels if x != STAR)):
        raise UnsupportedTransform("trees have different labels")
    images = {}
    for v in F.variables:
        i, j = F.node_difference(v)
        images[v] = G.difference(i, j)
    leads = [im[0] for im in images.values()]
    if len(set(leads)) != len(leads):
        raise UnsupportedTransform(
            f"{F} -> {G}: two variables share a leading term; the change of "
            "variables would need a shift by a larger variable")
    for v in F.variables:
        sub_f = {images[w][0] for w in F.region.names
                 if w == v or F.region.is_strict_descendant(w, v)}
        lead = images[v][0]
        sub_g = {w for w in G.region.names
                 if w == lead or G.region.is_strict_descendant(w, lead)}
        if sub_f != sub_g & set(leads):
            raise UnsupportedTransform(
                f"{F} -> {G}: the region order of {v} is not preserved")
    return images


def transform(g, source, target, extra_cap=None):
    """Re-expand ``g = e_source(phi)`` as ``e_target(phi)``.

    Works by renaming each variable to its leading term in the target tree,
    negating where that leading term enters with a minus sign, and then
    applying ``exp(c w d/dv)`` shifts, deepest target first.  Pairs whose
    change of variables would need a shift by a larger variable (such as
    the channel tree to a chain) raise :class:`UnsupportedTransform`.
    Target variables that are not images of source variables (the extra
    point of a ``*`` tree) get cap ``extra_cap`` (default: the largest cap
    of ``g``).
    """
    F, G = parse_paren(source), parse_paren(target)
    if F == G:
        return g
    if g.region != F.region:
        raise ValueError("series does not live on the region of the source tree")
    images = _plan(F, G)
    if extra_cap is None:
        finite = [c for c in g.caps if c is not None]
        extra_cap = max(finite) if finite else None
    mapping = {v: im[0] for v, im in images.items()}
    extra = {w: extra_cap for w in G.region.names if w not in mapping.values()}
    h = rename(g, G.region, mapping, G.space_tag(), extra)
    for v, (lead, sign, rest) in images.items():
        if sign == -1:
            h = negate_var(h, lead)
    order = sorted(images.items(), key=lambda kv: -len(G.region.ancestors(kv[1][0])))
    for v, (lead, sign, rest) in order:
        for w, c in sorted(rest.items()):
            h = exp_derivation(h, lead, w, sign * c)
    return h


def transform_chain(g, path, extra_cap=None):
    """Compose :func:`transform` along a list of trees."""
    path = [parse_paren(p) for p in path]
    for a, b in zip(path, path[1:]):
        g = transform(g, a, b, extra_cap)
    return g


def _is_star_chain(A):
    nd = A.root
    while not nd.is_leaf:
        if not nd.left.is_leaf:
            return False
        nd = nd.right
    return nd.label == STAR


def formal_dual(g, term, source="1(2(3(4*)))"):
    """``I_d(P^{-1} g)`` for a ``*`` chain ``a(b(c(d*)))``.

    ``P = prod (-1)^(a-b) (z_i z_j)^a (zbar_i zbar_j)^b`` is built from the
    exponents of ``term``; ``I_d`` inverts every variable and reverses the
    chain.  The result lives on ``d(c(b(a*)))``.
    """
    A = parse_paren(source)
    if not _is_star_chain(A):
        raise UnsupportedTransform("the dual map needs a chain tree ending in '*'")
    if g.region != A.region:
        raise ValueError("series does not live on the region of the source tree")
    labels = [x for x in A.labels if x != STAR]
    B = parse_paren("".join(f"{x}(" for x in reversed(labels[1:]))
                    + f"{labels[0]}*" + ")" * (len(labels) - 1))
    exps, sign = {}, 1
    for (i, j), a in term.alpha.items():
        b = term.beta[(i, j)]
        for k in (i, j):
            r, s = exps.get(f"z{k}", (0, 0))
            exps[f"z{k}"] = (r - a, s - b)
        if (a - b).numerator % 2:
            sign = -sign
    h = times_monomial(g, exps, sign)
    region = A.region
    # every term must have one total degree for the window to transform
    tot = {(region.coords(k)[0], region.coords(k)[1]) for k in h.terms}
    if len(tot) > 1:
        raise ValueError("dual map needs a homogeneous series")
    c1 = tot.pop() if tot else (Fraction(0), Fraction(0))
    terms = {}
    for k, c in h.terms.items():
        nk = [Fraction(0)] * len(k)
        for v in region.names:
            i, j = region.index(v), B.region.index(v)
            nk[2 * j], nk[2 * j + 1] = -k[2 * i], -k[2 * i + 1]
        terms[tuple(nk)] = c
    # coordinates of the reversed chain: new(v_k) = old(v_{k+1}) - total
    names = region.names
    caps, floors = [None] * len(h.caps), [None] * len(h.caps)
    for pos in range(len(names)):
        v_new = names[len(names) - 1 - pos]  # B's variable at depth pos
        j = B.region.index(v_new)
        for off in (0, 1):
            if pos == 0:
                caps[2 * j + off] = None
                floors[2 * j + off] = -c1[off]
            else:
                # depth pos in B corresponds to depth n-pos in A
                i = region.index(names[len(names) - pos])
                cp, fl = h.caps[2 * i + off], h.floors[2 * i + off]
                caps[2 * j + off] = None if cp is None else cp - c1[off]
                floors[2 * j + off] = None if fl is None else fl - c1[off]
    return RegionSeries(B.region, terms, caps, floors, B.space_tag())


# ---------------------------------------------------------------------------
# two-point functions with two insertions (the limit z_1 -> oo, z_4 -> 0)


class GCor2Term:
    """``coeff z1^a1 z2^a2 (z1-z2)^a12 (conjugates b1, b2, b12) f(z2/z1)``."""

    __slots__ = ("coeff", "a1", "a2", "a12", "b1", "b2", "b12", "f")

    def __init__(self, coeff=1, a1=0, a2=0, a12=0, b1=0, b2=0, b12=0, f=None):
        self.coeff = _frac(coeff)
        self.a1, self.a2, self.a12 = _frac(a1), _frac(a2), _frac(a12)
        self.b1, self.b2, self.b12 = _frac(b1), _frac(b2), _frac(b12)
        for a, b in ((self.a1, self.b1), (self.a2, self.b2), (self.a12, self.b12)):
            if not _is_int(a - b):
                raise ValueError("exponent pairs must differ by integers")
        self.f = f

    def __repr__(self):
        return (f"GCor2Term({self.coeff}; {self.a1},{self.a2},{self.a12}; "
                f"{self.b1},{self.b2},{self.b12}; f={self.f!r})")


class GCor2Elem:
    def __init__(self, terms=()):
        self.terms = list(terms)

    def __iter__(self):
        return iter(self.terms)


_GCOR_REGIONS = {
    "z1>z2": (("z1", "z2"), "p"),
    "z2>z1": (("z2", "z1"), "1/p"),
    "z2>z0": (("z2", "z0"), "1-1/p"),
}


def gcor2_region(which):
    return Region.chain(_GCOR_REGIONS[which][0])


def gcor2_expand(mu, region, order):
    """Expansion in ``|z1|>|z2|``, ``|z2|>|z1|`` or ``|z2|>|z1-z2|``.

    The last uses ``z0 = z1 - z2``.  ``order`` caps the coordinate of the
    smaller variable.
    """
    if region not in _GCOR_REGIONS:
        raise ValueError(f"unknown region {region!r}")
    if isinstance(mu, GCor2Term):
        mu = GCor2Elem([mu])
    (big, small), chart = _GCOR_REGIONS[region]
    R = Region.chain((big, small))
    caps = (None, None, _frac(order), _frac(order))
    out = RegionSeries(R, {}, caps, None, "U")
    for t in mu:
        out = series_add(out, _gcor2_term(t, region, R, caps, chart))
    return out


def _gcor2_term(t, region, R, caps, chart):
    # each factor as (lead, {rest: coeff}, a, b, lead_sign)
    if region == "z1>z2":
        facs = [("z1", {}, t.a1, t.b1, 1), ("z2", {}, t.a2, t.b2, 1),
                ("z1", {"z2": -1}, t.a12, t.b12, 1)]
        inner = {(Fraction(-1), Fraction(0), Fraction(1), Fraction(0)): 1}
    elif region == "z2>z1":
        facs = [("z1", {}, t.a1, t.b1, 1), ("z2", {}, t.a2, t.b2, 1),
                ("z2", {"z1": 1}, t.a12, t.b12, -1)]
        inner = {(Fraction(-1), Fraction(0), Fraction(1), Fraction(0)): 1}
    else:
        facs = [("z2", {"z0": 1}, t.a1, t.b1, 1), ("z2", {}, t.a2, t.b2, 1),
                ("z0", {}, t.a12, t.b12, 1)]
        inner = {(Fraction(-1), Fraction(0), Fraction(1), Fraction(0)): -1}
    fl = []
    for lead, rest, a, b, s in facs:
        key = [Fraction(0)] * 4
        i = R.index(lead)
        key[2 * i], key[2 * i + 1] = a, b
        fl.append(R.coords(tuple(key)))
    total = (Fraction(0),) * 4
    for co in fl:
        total = _plus(total, co)
    sub = None
    if t.f is not None:
        inner_s = RegionSeries(R, inner, None, None, "U")
        sub_cap = _minus(caps, total)
        series = t.f.series_at(chart, sub_cap[2])
        sub = substitute(series, inner_s).with_tag("U")
        total = _plus(total, sub.floors)
    zero = (Fraction(0),) * 4
    out = RegionSeries(R, {zero: t.coeff}, None, zero, "U", _trusted=True)
    for (lead, rest, a, b, s), co in zip(facs, fl):
        if not a and not b:
            continue
        fc = _minus(caps, tuple(x - y for x, y in zip(total, co)))
        out = series_mul(out, power_of_linear(R, lead, rest, a, b, fc,
                                              lead_sign=s, space_tag="U"))
    if sub is not None:
        out = series_mul(out, sub)
    return out.truncate(caps)


def gcor2_dual(g):
    """Substitute ``z0 -> -z0/(z2 (z2 + z0))`` and ``z2 -> 1/z2``.

    Input and output live on the chain ``z2 >> z0``; a term
    ``z2^a z0^b`` (conjugates ``c, d``) becomes
    ``(-1)^(b-d) z2^(-a-2b) z0^b (1 + z0/z2)^(-b)`` (and conjugate).
    """
    R = g.region
    if R.names != ("z2", "z0"):
        raise ValueError("gcor2_dual expects a series on z2 >> z0")
    cap, cap_bar = g.caps[2], g.caps[3]
    out = {}
    cache = {}

    def tail(e, c):
        key = (e, c)
        if key not in cache:
            lst = []
            k = 0
            while c is None or k <= c:
                b = binomial(-e, k)
                if b:
                    lst.append((k, b))
                if c is None:
                    if _is_int(-e) and -e >= 0 and k >= -e:
                        break
                    if not (_is_int(-e) and -e >= 0):
                        raise ValueError("dual needs a capped z0 coordinate")
                k += 1
            cache[key] = lst
        return cache[key]

    for k, c in g.terms.items():
        a, ab, b, bb = k
        sign = -1 if (b - bb).numerator % 2 else 1
        room = None if cap is None else cap - b
        room_bar = None if cap_bar is None else cap_bar - bb
        for i, ci in tail(b, room):
            for j, cj in tail(bb, room_bar):
                nk = (-a - 2 * b - i, -ab - 2 * bb - j, b + i, bb + j)
                out[nk] = out.get(nk, 0) + sign * c * ci * cj
    floors = (None, None, g.floors[2], g.floors[3])
    return RegionSeries(R, {k: v for k, v in out.items() if v}, g.caps, floors, g.space_tag)


def gcor2_invert(mu):
    """``I_Y mu``: the GCor2 element ``mu(1/z1, 1/z2)``."""
    out = []
    for t in mu:
        sign = -1 if (t.a12 - t.b12).numerator % 2 else 1
        f = None if t.f is None else act_s4("(23)", t.f)
        out.append(GCor2Term(sign * t.coeff, -t.a1 - t.a12, -t.a2 - t.a12, t.a12,
                             -t.b1 - t.b12, -t.b2 - t.b12, t.b12, f))
    return GCor2Elem(out)


def gcor_limit(t, f=None):
    """GCor2 term obtained from a four-point summand by sending ``z1 -> oo``
    and ``z4 -> 0`` (renaming ``z2, z3`` to ``z1, z2``)."""
    a = lambda i, j: t.exponent(i, j)  # noqa: E731
    return GCor2Term(t.coeff, a(2, 4)[0], a(3, 4)[0], a(2, 3)[0],
                     a(2, 4)[1], a(3, 4)[1], a(2, 3)[1], f)
