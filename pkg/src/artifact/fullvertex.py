"""Full vertex algebras built from an even lattice and a projection.

The construction: an even lattice ``L`` with Gram matrix ``G``, a twisted
group algebra ``C[L^]`` spanned by ``e_alpha``, and a projection ``p`` of
``H = L (x) Q`` splitting it into a holomorphic part ``H_l = im p`` and an
anti-holomorphic part ``H_r = ker p``.  The Fock space is spanned by
creation monomials on ground states ``e_alpha``.

All vectors of ``H`` are tuples of rationals in the lattice basis.  The
Heisenberg modes are taken along a rational orthogonal frame ``u_0, ...``
of ``H_l`` followed by one of ``H_r`` (orthogonal for the form
``(h, h')_p = (ph, ph') - (pbar h, pbar h')``), so oscillators with
different frame indices commute.  A basis state is a pair
``(modes, alpha)`` where ``modes`` is a sorted tuple of ``(i, k)`` meaning
the creation operator ``u_i(-k)``, ``k >= 1``.

Vertex operators are computed from the grading: for homogeneous ``a`` and
``b`` every basis state in ``Y(a, z) b`` determines its own power of ``z``
(the output weight minus the weights of ``a`` and ``b``).  The internal
routine :meth:`LatticeFVA.vertex_sum` therefore returns the sum of all
modes ``sum_t a(t) b`` up to a cap on the output level, and the series is
recovered by reading off weights.
"""

import itertools
import math
from fractions import Fraction
from functools import lru_cache

from . import mutations
from .expand import STAR, parse_paren, _target_caps
from .series import RegionSeries, _frac, binomial

__all__ = [
    "EvenLattice", "TwistedGroupAlgebra", "Projection", "FockState",
    "LatticeFVA", "make_lattice_fva", "LatticeError", "narain_point",
]


class LatticeError(ValueError):
    """Invalid lattice, projection or configuration."""


# ---------------------------------------------------------------------------
# small exact linear algebra


def _vec(v):
    return tuple(_frac(x) for x in v)


def _matvec(m, v):
    return tuple(sum((a * b for a, b in zip(row, v)), Fraction(0)) for row in m)


def _matmul(a, b):
    cols = list(zip(*b))
    return tuple(tuple(sum((x * y for x, y in zip(row, c)), Fraction(0)) for c in cols)
                 for row in a)


def _identity(n):
    return tuple(tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n))


def _det(m):
    m = [list(r) for r in m]
    n = len(m)
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if m[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            det = -det
        det *= m[c][c]
        for r in range(c + 1, n):
            f = m[r][c] / m[c][c]
            for k in range(c, n):
                m[r][k] -= f * m[c][k]
    return det


def _column_basis(m):
    """A basis of the column space of ``m`` (as vectors)."""
    cols = [tuple(r[j] for r in m) for j in range(len(m[0]))]
    basis, reduced = [], []
    for c in cols:
        v = list(c)
        for b, piv in reduced:
            if v[piv]:
                f = v[piv] / b[piv]
                v = [x - f * y for x, y in zip(v, b)]
        piv = next((i for i, x in enumerate(v) if x), None)
        if piv is not None:
            reduced.append((v, piv))
            basis.append(c)
    return basis


def _orthogonal_basis(vectors, form):
    """Rational orthogonal basis of ``span(vectors)`` for a form that is
    non-degenerate on that span."""
    todo = [tuple(v) for v in vectors]
    out = []
    while todo:
        pick = next((v for v in todo if form(v, v)), None)
        if pick is None:
            # an isotropic basis; some sum of two vectors has nonzero norm
            for a, b in itertools.combinations(range(len(todo)), 2):
                s = tuple(x + y for x, y in zip(todo[a], todo[b]))
                if form(s, s):
                    todo[a] = s
                    pick = s
                    break
            if pick is None:
                raise LatticeError("the form is degenerate on this subspace")
        todo.remove(pick)
        n = form(pick, pick)
        out.append(pick)
        todo = [tuple(x - form(v, pick) / n * y for x, y in zip(v, pick)) for v in todo]
        todo = [v for v in todo if any(v)]
    return out


# ---------------------------------------------------------------------------
# lattice data


class EvenLattice:
    """A non-degenerate even lattice given by its Gram matrix."""

    def __init__(self, gram):
        gram = tuple(tuple(int(x) for x in row) for row in gram)
        n = len(gram)
        if n == 0 or any(len(r) != n for r in gram):
            raise LatticeError("Gram matrix must be square and non-empty")
        for i in range(n):
            for j in range(n):
                if gram[i][j] != gram[j][i]:
                    raise LatticeError("Gram matrix is not symmetric")
            if gram[i][i] % 2:
                raise LatticeError(f"lattice is odd: (b{i}, b{i}) = {gram[i][i]}")
        if _det(gram) == 0:
            raise LatticeError("Gram matrix is degenerate")
        self.gram = gram
        self.rank = n

    def __repr__(self):
        return f"EvenLattice({[list(r) for r in self.gram]})"

    def pair(self, a, b):
        return sum((a[i] * self.gram[i][j] * b[j]
                    for i in range(self.rank) for j in range(self.rank)), 0)

    def zero(self):
        return (0,) * self.rank


class TwistedGroupAlgebra:
    """``C[L^]`` with ``e_a e_b = eps(a, b) e_{a+b}``.

    The cocycle is bimultiplicative with ``eps(b_i, b_j) = 1`` for ``i <= j``
    and ``(-1)^(b_i, b_j)`` for ``i > j`` on the lattice basis.
    """

    def __init__(self, lattice):
        self.lattice = lattice

    def cocycle(self, a, b):
        g = self.lattice.gram
        n = self.lattice.rank
        if mutations.enabled("cocycle_sign"):
            return 1
        e = sum(a[i] * b[j] * g[i][j] for i in range(n) for j in range(i))
        return -1 if e % 2 else 1

    def product(self, a, b):
        """``e_a e_b`` as ``(sign, a + b)``."""
        return self.cocycle(a, b), tuple(x + y for x, y in zip(a, b))


class Projection:
    """A rational idempotent on ``H`` checked against a lattice."""

    def __init__(self, matrix, lattice, definite=True):
        m = tuple(_vec(r) for r in matrix)
        n = lattice.rank
        if len(m) != n or any(len(r) != n for r in m):
            raise LatticeError(f"projection must be {n}x{n}")
        if _matmul(m, m) != m:
            raise LatticeError("p is not a projection (p^2 != p)")
        self.matrix = m
        self.bar = tuple(tuple(Fraction(int(i == j)) - m[i][j] for j in range(n))
                         for i in range(n))
        self.lattice = lattice
        G = lattice.gram
        # ker p and ker(1 - p) must be orthogonal: (1-p)^T G p = 0
        for i in range(n):
            for j in range(n):
                s = sum(self.bar[k][i] * G[k][l] * m[l][j]
                        for k in range(n) for l in range(n))
                if s:
                    raise LatticeError("ker p and ker(1-p) are not orthogonal")
        self.left_basis = _column_basis(m) if any(any(r) for r in m) else []
        self.right_basis = _column_basis(self.bar) if any(any(r) for r in self.bar) else []
        if definite:
            self._check_definite()

    def _check_definite(self):
        g = self.lattice.pair
        for v in _orthogonal_basis(self.left_basis, g):
            if g(v, v) <= 0:
                raise LatticeError("ker(1-p) is not positive definite")
        for v in _orthogonal_basis(self.right_basis, g):
            if g(v, v) >= 0:
                raise LatticeError("ker p is not negative definite")

    def left(self, h):
        return _matvec(self.matrix, h)

    def right(self, h):
        return _matvec(self.bar, h)


# ---------------------------------------------------------------------------
# states


def _merge(m1, m2):
    if not m1:
        return m2
    if not m2:
        return m1
    return tuple(sorted(m1 + m2))


def _remove_one(modes, item):
    i = modes.index(item)
    return modes[:i] + modes[i + 1:]


class FockState:
    """A finite linear combination of basis states ``(modes, alpha)``."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {k: _frac(c) for k, c in (terms or {}).items() if c}

    @classmethod
    def basis(cls, modes=(), alpha=(), coeff=1):
        modes = tuple(sorted((int(i), int(k)) for i, k in modes))
        if any(k < 1 for _, k in modes):
            raise ValueError("creation depths must be positive")
        return cls({(modes, tuple(int(a) for a in alpha)): coeff})

    def __repr__(self):
        if not self.terms:
            return "FockState(0)"
        return "FockState(" + " + ".join(
            f"{c}*{_key_text(k)}" for k, c in sorted(self.terms.items())) + ")"

    def __eq__(self, other):
        return isinstance(other, FockState) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __bool__(self):
        return bool(self.terms)

    def __add__(self, other):
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0) + c
        return FockState(out)

    def __sub__(self, other):
        return self + other * -1

    def __mul__(self, c):
        c = _frac(c)
        return FockState({k: v * c for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def coeff(self, modes=(), alpha=()):
        return self.terms.get((tuple(sorted(modes)), tuple(alpha)), Fraction(0))

    def to_json(self):
        return [{"modes": [[i, -k] for i, k in key[0]], "ground": list(key[1]),
                 "coeff": _q(c)} for key, c in sorted(self.terms.items())]

    @classmethod
    def from_json(cls, doc):
        """Inverse of :meth:`to_json`; mode entries are ``[frame index, n]``
        with ``n < 0``."""
        out = cls()
        for item in doc:
            modes = []
            for i, n in item.get("modes", []):
                if int(n) >= 0:
                    raise ValueError(f"mode index {n} is not a creation mode")
                modes.append((int(i), -int(n)))
            out = out + cls.basis(modes, item["ground"], Fraction(item.get("coeff", 1)))
        return out


def _q(x):
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _key_text(key):
    modes, alpha = key
    parts = [f"u{i}({-k})" for i, k in modes]
    return "".join(parts) + f"e{list(alpha)}"


def _add_into(acc, key, c):
    v = acc.get(key, 0) + c
    if v:
        acc[key] = v
    else:
        acc.pop(key, None)


# ---------------------------------------------------------------------------
# the algebra


class LatticeFVA:
    """The full vertex algebra ``F_{L, H, p}``.

    ``definite`` records whether ``p`` lies in the positive/negative
    definite locus; the invariant form and the spectrum need it.
    """

    def __init__(self, lattice, projection, definite=True):
        self.lattice = lattice
        self.algebra = TwistedGroupAlgebra(lattice)
        self.projection = projection
        self.definite = definite
        n = lattice.rank
        self.rank = n
        G = lattice.gram
        P, Pb = projection.matrix, projection.bar

        def gram_of(m, sign):
            return tuple(tuple(sign * sum(m[k][i] * G[k][l] * m[l][j]
                                          for k in range(n) for l in range(n))
                               for j in range(n)) for i in range(n))

        self._left_gram = gram_of(P, 1)
        self._right_gram = gram_of(Pb, -1)
        self._form_gram = tuple(tuple(a + b for a, b in zip(r1, r2))
                                for r1, r2 in zip(self._left_gram, self._right_gram))
        self._weights = {}
        left = _orthogonal_basis(projection.left_basis, self.form_p)
        right = _orthogonal_basis(projection.right_basis, self.form_p)
        self.frame = tuple(left) + tuple(right)
        self.frame_norms = tuple(self.form_p(u, u) for u in self.frame)
        self.sides = tuple([0] * len(left) + [1] * len(right))
        self.central_charge = (len(left), len(right))
        self.vacuum_key = ((), (0,) * n)
        self._caches = {}

    @property
    def _cache(self):
        # one memo table per set of active mutation sites, so results
        # computed without a mutation never leak into a mutated run
        return self._caches.setdefault(mutations.current(), {})

    def __repr__(self):
        return (f"<LatticeFVA rank={self.rank} c={self.central_charge} "
                f"gram={[list(r) for r in self.lattice.gram]}>")

    # -- forms and weights -------------------------------------------------
    @staticmethod
    def _bilinear(m, h, k):
        return sum((h[i] * m[i][j] * k[j] for i in range(len(h)) for j in range(len(k))
                    if h[i] and k[j]), Fraction(0))

    def form_p(self, h, k):
        """``(h, k)_p = (ph, pk) - (pbar h, pbar k)``."""
        return self._bilinear(self._form_gram, h, k)

    def left_form(self, h, k):
        return self._bilinear(self._left_gram, h, k)

    def right_form(self, h, k):
        return self._bilinear(self._right_gram, h, k)

    def ground_weight(self, alpha):
        """``((p a, p a)_p / 2, (pbar a, pbar a)_p / 2)``."""
        w = self._weights.get(alpha)
        if w is None:
            w = (self.left_form(alpha, alpha) / 2, self.right_form(alpha, alpha) / 2)
            self._weights[alpha] = w
        return w

    def level(self, modes):
        ll = lr = 0
        for i, k in modes:
            if self.sides[i]:
                lr += k
            else:
                ll += k
        return ll, lr

    def key_weight(self, key):
        h, hb = self.ground_weight(key[1])
        ll, lr = self.level(key[0])
        return h + ll, hb + lr

    def weight_parts(self, v):
        """Split ``v`` into homogeneous components ``{(h, hbar): FockState}``."""
        out = {}
        for k, c in v.terms.items():
            out.setdefault(self.key_weight(k), {})[k] = c
        return {w: FockState(t) for w, t in sorted(out.items())}

    def weight(self, v):
        """``(h, hbar)`` of a homogeneous nonzero state."""
        parts = self.weight_parts(v)
        if len(parts) != 1:
            raise ValueError("state is not homogeneous")
        return next(iter(parts))

    def frame_components(self, h):
        """``{i: c_i}`` with ``h = sum c_i u_i``."""
        out = {}
        for i, (u, q) in enumerate(zip(self.frame, self.frame_norms)):
            c = self.form_p(h, u) / q
            if c:
                out[i] = c
        return out

    # -- states --------------------------------------------------------------
    def vacuum(self):
        return FockState({self.vacuum_key: 1})

    def ground(self, alpha, coeff=1):
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.rank:
            raise ValueError(f"lattice vector must have {self.rank} coordinates")
        return FockState({((), alpha): coeff})

    def state(self, modes, alpha, coeff=1):
        """``u_{i1}(n1) ... e_alpha`` from ``[(frame index, n), ...]``, ``n < 0``."""
        ms = []
        for i, n in modes:
            if not 0 <= int(i) < len(self.frame):
                raise ValueError(f"frame index {i} out of range")
            if int(n) >= 0:
                raise ValueError("state modes must be creation modes (n < 0)")
            ms.append((int(i), -int(n)))
        return FockState.basis(ms, alpha, coeff)

    def vacuum_coefficient(self, v):
        """``<1, v>``: the coefficient of the vacuum."""
        return v.terms.get(self.vacuum_key, Fraction(0))

    # -- Heisenberg action -----------------------------------------------------
    def _frame_act_key(self, i, n, key, out, c):
        modes, alpha = key
        if n < 0:
            _add_into(out, (_merge(modes, ((i, -n),)), alpha), c)
        elif n == 0:
            ck = ("u0", i, alpha)
            v = self._cache.get(ck)
            if v is None:
                v = self._cache[ck] = self.form_p(self.frame[i], alpha)
            if v:
                _add_into(out, key, c * v)
        else:
            m = modes.count((i, n))
            if m:
                _add_into(out, (_remove_one(modes, (i, n)), alpha),
                          c * m * n * self.frame_norms[i])

    def frame_act(self, i, n, v):
        """``u_i(n) v`` for the frame vector ``u_i``."""
        out = {}
        for key, c in v.terms.items():
            self._frame_act_key(i, n, key, out, c)
        return FockState(out)

    def heisenberg_act(self, h, n, v):
        """``h(n) v`` for ``h`` in ``H`` (lattice coordinates, rationals)."""
        h = _vec(h)
        n = int(n)
        if n == 0:
            out = {}
            for key, c in v.terms.items():
                val = self.form_p(h, key[1])
                if val:
                    _add_into(out, key, c * val)
            return FockState(out)
        out = {}
        for i, ci in self.frame_components(h).items():
            for key, c in v.terms.items():
                self._frame_act_key(i, n, key, out, c * ci)
        return FockState(out)

    # -- vertex operators ------------------------------------------------------
    def _creation_poly(self, alpha, capl, capr):
        """``E^-(alpha)`` as ``{modes: coeff}`` truncated at the given levels."""
        ck = ("E-", alpha, capl, capr)
        if ck in self._cache:
            return self._cache[ck]
        comps = self.frame_components(alpha)
        poly = {(): Fraction(1)}
        for i, ci in sorted(comps.items()):
            cap = capr if self.sides[i] else capl
            if cap < 1:
                continue
            # exp(c sum_k u(-k)/k) = prod_k sum_m (c/k)^m u(-k)^m / m!
            factor = {(): Fraction(1)}
            for k in range(1, cap + 1):
                new = {}
                for mono, val in factor.items():
                    used = sum(kk for _, kk in mono)
                    m = 0
                    while used + m * k <= cap:
                        term = (ci / k) ** m / math.factorial(m)
                        new[mono + ((i, k),) * m] = val * term
                        m += 1
                factor = new
            poly = {tuple(sorted(a + b)): x * y for a, x in poly.items()
                    for b, y in factor.items()}
        self._cache[ck] = poly
        return poly

    def _annihilate(self, alpha, key):
        """``E^+(alpha) b`` for a basis state ``b``, as ``{key: coeff}``."""
        comps = self.frame_components(alpha)
        total = {key: Fraction(1)}
        term = {key: Fraction(1)}
        step = 1
        while term:
            new = {}
            for (modes, beta), c in term.items():
                for (i, k) in set(modes):
                    ci = comps.get(i)
                    if not ci:
                        continue
                    m = modes.count((i, k))
                    # -(c_i / k) u_i(k) contributes -c_i q_i m
                    val = -ci * self.frame_norms[i] * m / step
                    _add_into(new, (_remove_one(modes, (i, k)), beta), c * val)
            term = new
            for k2, c2 in term.items():
                _add_into(total, k2, c2)
            step += 1
        return total

    def _vertex_key(self, akey, bkey, capl, capr):
        """``sum_t a(t) b`` for basis states, outputs with level <= caps."""
        ck = ("Y", akey, bkey, capl, capr)
        if ck in self._cache:
            return self._cache[ck]
        out = {}
        if capl >= 0 and capr >= 0:
            amodes, alpha = akey
            if not amodes:
                self._vertex_ground(alpha, bkey, capl, capr, out)
            else:
                self._vertex_desc(akey, bkey, capl, capr, out)
        self._cache[ck] = out
        return out

    def _vertex_ground(self, alpha, bkey, capl, capr, out):
        sign, gamma = self.algebra.product(alpha, bkey[1])
        for (modes, _), c in self._annihilate(alpha, bkey).items():
            ll, lr = self.level(modes)
            if ll > capl or lr > capr:
                continue
            for cre, v in self._creation_poly(alpha, capl - ll, capr - lr).items():
                _add_into(out, (_merge(modes, cre), gamma), sign * c * v)

    def _vertex_desc(self, akey, bkey, capl, capr, out):
        amodes, alpha = akey
        i, depth = amodes[0]
        rest = (amodes[1:], alpha)
        n = depth - 1
        right = self.sides[i]
        cap = capr if right else capl
        # creation part: sum_{m >= n} C(m, n) u_i(-m-1) Y(rest, z) b
        inner = self._vertex_key(rest, bkey, capl, capr)
        for (modes, gamma), c in inner.items():
            lvl = self.level(modes)[right]
            m = n
            while lvl + m + 1 <= cap:
                coef = math.comb(m, n)
                _add_into(out, (_merge(modes, ((i, m + 1),)), gamma), c * coef)
                m += 1
        # annihilation part: sum_{m >= 0} C(-m-1, n) Y(rest, z) u_i(m) b
        bmodes, beta = bkey
        ks = {0} | {k for j, k in bmodes if j == i}
        for m in sorted(ks):
            tmp = {}
            self._frame_act_key(i, m, bkey, tmp, Fraction(1))
            coef = binomial(-m - 1, n)
            for k2, c2 in tmp.items():
                for k3, c3 in self._vertex_key(rest, k2, capl, capr).items():
                    _add_into(out, k3, c2 * c3 * coef)

    def _level_caps(self, gamma, wcap):
        h, hb = self.ground_weight(gamma)
        return math.floor(wcap[0] - h), math.floor(wcap[1] - hb)

    def vertex_sum(self, a, b, weight_cap):
        """``sum_{r,s} a(r,s) b`` restricted to output weights ``<= weight_cap``.

        ``weight_cap`` is a pair ``(h_max, hbar_max)``.
        """
        out = {}
        for ak, ac in a.terms.items():
            for bk, bc in b.terms.items():
                gamma = tuple(x + y for x, y in zip(ak[1], bk[1]))
                capl, capr = self._level_caps(gamma, weight_cap)
                if capl < 0 or capr < 0:
                    continue
                for k, c in self._vertex_key(ak, bk, capl, capr).items():
                    _add_into(out, k, ac * bc * c)
        return FockState(out)

    def vertex_series(self, a, b, window):
        """``Y(a, z) b`` as ``{(r, s): FockState}`` meaning ``z^r zbar^s``.

        ``window`` caps the output level above the lowest possible weight:
        every returned coefficient is exact, and all coefficients whose
        state has weight at most ``min weight + window`` (on each side) are
        returned.
        """
        window = int(window)
        out = {}
        for wa, pa in self.weight_parts(a).items():
            for wb, pb in self.weight_parts(b).items():
                for ak, ac in pa.terms.items():
                    for bk, bc in pb.terms.items():
                        gamma = tuple(x + y for x, y in zip(ak[1], bk[1]))
                        for k, c in self._vertex_key(ak, bk, window, window).items():
                            w = self.key_weight(k)
                            e = (w[0] - wa[0] - wb[0], w[1] - wa[1] - wb[1])
                            out.setdefault(e, {})
                            _add_into(out[e], k, ac * bc * c)
        return {e: FockState(t) for e, t in sorted(out.items()) if t}

    def mode(self, a, r, s, b):
        """``a(r, s) b``: the coefficient of ``z^(-r-1) zbar^(-s-1)``."""
        r, s = _frac(r), _frac(s)
        out = FockState()
        for wa, pa in self.weight_parts(a).items():
            for wb, pb in self.weight_parts(b).items():
                target = (wa[0] + wb[0] - r - 1, wa[1] + wb[1] - s - 1)
                got = self.vertex_sum(pa, pb, target)
                out = out + FockState({k: c for k, c in got.terms.items()
                                       if self.key_weight(k) == target})
        return out

    # -- conformal vectors -------------------------------------------------------
    def omega(self, side=0):
        """``omega = 1/2 sum_i u_i(-1) u_i(-1) 1 / (u_i, u_i)_p`` over one side."""
        terms = {}
        for i, q in enumerate(self.frame_norms):
            if self.sides[i] == side:
                terms[(((i, 1), (i, 1)), self.vacuum_key[1])] = 1 / (2 * q)
        return FockState(terms)

    def virasoro(self, n, side, v):
        """``L(n) v`` (side ``"L"`` or 0) or ``Lbar(n) v`` (side ``"Lbar"`` or 1).

        Uses the quadratic normal-ordered expression in the Heisenberg modes
        of one side; :meth:`virasoro_via_omega` computes the same operator as
        a mode of ``Y(omega, z)``.
        """
        side = {"L": 0, "Lbar": 1, "L̄": 1, 0: 0, 1: 1}[side]
        n = int(n)
        out = {}
        for key, c in v.terms.items():
            ck = ("L", n, side, key)
            img = self._cache.get(ck)
            if img is None:
                img = self._sugawara_key(n, side, key)
                self._cache[ck] = img
            for k2, c2 in img.items():
                _add_into(out, k2, c * c2)
        return FockState(out)

    def _sugawara_key(self, n, side, key):
        # L(n) = 1/2 sum_i 1/q_i sum_m :u_i(m) u_i(n - m):, with the larger
        # mode acting first; a mode above the deepest one present kills
        top = max((k for _, k in key[0]), default=0)
        lo, hi = min(n, 0) - top - 1, max(n, 0) + top + 1
        out = {}
        for i, q in enumerate(self.frame_norms):
            if self.sides[i] != side:
                continue
            for a in range(lo, hi + 1):
                b = n - a
                first, second = (a, b) if a >= b else (b, a)
                if first > top:
                    continue
                tmp = {}
                self._frame_act_key(i, first, key, tmp, Fraction(1))
                for k2, c2 in tmp.items():
                    self._frame_act_key(i, second, k2, out, c2 / (2 * q))
        return {k: c for k, c in out.items() if c}

    def virasoro_via_omega(self, n, side, v):
        """``L(n) v`` computed as the mode ``omega(n + 1, -1)`` of the
        vertex operator of the conformal vector (slow; used as a cross-check)."""
        side = {"L": 0, "Lbar": 1, "L̄": 1, 0: 0, 1: 1}[side]
        n = int(n)
        if side == 0:
            return self.mode(self.omega(0), n + 1, -1, v)
        return self.mode(self.omega(1), -1, n + 1, v)

    def D(self, v):
        return self.virasoro(-1, 0, v)

    def Dbar(self, v):
        return self.virasoro(-1, 1, v)

    # -- invariant form -----------------------------------------------------------
    def invariant_form(self, a, b):
        """The invariant bilinear form with ``(1, 1) = 1``.

        For homogeneous ``a, b`` of equal weight ``(h, hbar)`` it is
        ``(-1)^(h - hbar)`` times ``<1, Y(a, z) b>`` (a single monomial
        ``z^(-2h) zbar^(-2hbar)``); different weights are orthogonal.
        """
        if not self.definite:
            raise LatticeError("the invariant form needs a definite projection")
        total = Fraction(0)
        pb = self.weight_parts(b)
        for wa, part_a in self.weight_parts(a).items():
            part_b = pb.get(wa)
            if part_b is None:
                continue
            spin = wa[0] - wa[1]
            sign = -1 if spin.numerator % 2 else 1
            total += sign * self.vacuum_coefficient(self.vertex_sum(part_a, part_b, (0, 0)))
        return total

    # -- correlators ----------------------------------------------------------------
    def correlator(self, A, states, order):
        """The parenthesized correlation function ``S_A`` on a window.

        ``states`` lists the states at points ``1..n``; a ``*`` leaf is the
        vacuum at the origin.  ``order`` caps every ratio coordinate of the
        region of ``A`` except the total degree (as in
        :func:`artifact.expand.e_A`).  States are split into homogeneous
        parts and the result is summed.
        """
        A = parse_paren(A)
        if len(states) != A.n:
            raise ValueError(f"{A} needs {A.n} states, got {len(states)}")
        caps = _target_caps(A, order)
        parts = [list(self.weight_parts(s).items()) for s in states]
        region = A.region
        nodes = {nd.var: nd for nd in A.nodes}
        terms = {}
        for combo in itertools.product(*parts):
            weights = [w for w, _ in combo]
            hom = [p for _, p in combo]
            top = self._tree(A, A.root, hom, weights, caps, top=True)
            for (charges, levels), c in top.get(self.vacuum_key, {}).items():
                charge = dict(charges)
                exps = []
                for j, name in enumerate(region.names):
                    nd = nodes[name]
                    gl = self._subtree_charge(A, nd.left, charge)
                    gr = self._subtree_charge(A, nd.right, charge)
                    exps.append(levels[2 * j] + self.left_form(gl, gr))
                    exps.append(levels[2 * j + 1] + self.right_form(gl, gr))
                _add_into(terms, tuple(exps), c)
        return RegionSeries(region, terms, caps, None, A.space_tag())

    def _subtree_charge(self, A, node, charge):
        total = [0] * self.rank
        for lf in A.leaves:
            if lf.label != STAR and A._inside(node, lf.label):
                total = [x + y for x, y in zip(total, charge[lf.label])]
        return tuple(total)

    def _tree(self, A, node, states, weights, caps, top=False):
        """``{state key: {(leaf charges, level offsets): coeff}}`` for the
        subtree at ``node``.

        The exponent of a node variable is the ground-state part fixed by
        the leaf charges plus the integer ``level(out) - level(left) -
        level(right)``; only the integer part is tracked here.
        """
        region = A.region
        zero = (0,) * (2 * len(region))
        if node.is_leaf:
            if node.label == STAR:
                return {self.vacuum_key: {((), zero): Fraction(1)}}
            return {k: {(((node.label, k[1]),), zero): c}
                    for k, c in states[node.label - 1].terms.items()}
        left = self._tree(A, node.left, states, weights, caps)
        right = self._tree(A, node.right, states, weights, caps)
        labels = [lf.label for lf in A.leaves if A._inside(node, lf.label) and lf.label != STAR]
        hsum = (sum((weights[i - 1][0] for i in labels), Fraction(0)),
                sum((weights[i - 1][1] for i in labels), Fraction(0)))
        j = region.index(node.var)
        if top:
            wcap = (Fraction(0), Fraction(0))
        else:
            cl, cr = caps[2 * j], caps[2 * j + 1]
            if cl is None or cr is None:
                raise ValueError("correlator needs a finite order")
            wcap = (cl + hsum[0], cr + hsum[1])
        out = {}
        for kl, lterms in left.items():
            ll = self.level(kl[0])
            for kr, rterms in right.items():
                lr = self.level(kr[0])
                gamma = tuple(x + y for x, y in zip(kl[1], kr[1]))
                if top and any(gamma):
                    continue
                capl, capr = self._level_caps(gamma, wcap)
                if capl < 0 or capr < 0:
                    continue
                pairs = None
                for k, c in self._vertex_key(kl, kr, capl, capr).items():
                    if top and k != self.vacuum_key:
                        continue
                    if pairs is None:
                        pairs = [(tuple(sorted(ca + cb)), tuple(x + y for x, y in zip(ea, eb)),
                                  va * vb)
                                 for (ca, ea), va in lterms.items()
                                 for (cb, eb), vb in rterms.items()]
                    lo = self.level(k[0])
                    d0, d1 = lo[0] - ll[0] - lr[0], lo[1] - ll[1] - lr[1]
                    bucket = out.setdefault(k, {})
                    for charges, base, v in pairs:
                        e = list(base)
                        e[2 * j] += d0
                        e[2 * j + 1] += d1
                        _add_into(bucket, (charges, tuple(e)), v * c)
        return {k: v for k, v in out.items() if v}

    # -- bases ---------------------------------------------------------------------
    def _mode_sets(self, side, level):
        """All sorted creation-mode tuples on one side with the given level."""
        idx = [i for i, sd in enumerate(self.sides) if sd == side]
        slots = [(i, k) for k in range(1, level + 1) for i in idx]
        out = []

        def rec(start, left, acc):
            if left == 0:
                out.append(tuple(sorted(acc)))
                return
            for j in range(start, len(slots)):
                i, k = slots[j]
                if k <= left:
                    rec(j, left - k, acc + [(i, k)])

        rec(0, level, [])
        return out

    def basis(self, max_energy, alpha_box):
        """Basis keys ``(modes, alpha)`` with ``h + hbar <= max_energy`` and
        every lattice coordinate of ``alpha`` bounded by ``alpha_box``."""
        E = _frac(max_energy)
        rng = range(-int(alpha_box), int(alpha_box) + 1)
        keys = []
        for alpha in itertools.product(rng, repeat=self.rank):
            h, hb = self.ground_weight(alpha)
            if h + hb > E:
                continue
            n = 0
            while h + hb + n <= E:
                m = 0
                while h + hb + n + m <= E:
                    for ml in self._mode_sets(0, n):
                        for mr in self._mode_sets(1, m):
                            keys.append((tuple(sorted(ml + mr)), tuple(alpha)))
                    m += 1
                n += 1
        keys.sort(key=lambda k: (sum(self.key_weight(k)), k))
        return keys

    # -- spectrum -------------------------------------------------------------------
    def spectrum(self, max_energy, alpha_box):
        """Rows ``(h, hbar, alpha, dim)`` with ``h + hbar <= max_energy``.

        ``alpha_box`` bounds every lattice coordinate of ``alpha`` in
        absolute value.  Dimensions count colored partitions of the levels.
        """
        if not self.definite:
            raise LatticeError("the spectrum is only discrete for a definite projection")
        E = _frac(max_energy)
        cl, cr = self.central_charge
        rows = []
        rng = range(-int(alpha_box), int(alpha_box) + 1)
        for alpha in itertools.product(rng, repeat=self.rank):
            h, hb = self.ground_weight(alpha)
            if h + hb > E:
                continue
            n = 0
            while h + hb + n <= E:
                m = 0
                while h + hb + n + m <= E:
                    d = _colored_partitions(n, cl) * _colored_partitions(m, cr)
                    if d:
                        rows.append((h + n, hb + m, tuple(alpha), d))
                    m += 1
                n += 1
        rows.sort(key=lambda r: (r[0] + r[1], r[0], r[2]))
        return rows


@lru_cache(maxsize=None)
def _colored_partitions(n, colors):
    """Number of partitions of ``n`` where each part carries one of
    ``colors`` colors."""
    if n == 0:
        return 1
    if colors == 0:
        return 0
    # generating function prod_k (1 - q^k)^(-colors)
    coeffs = [1] + [0] * n
    for k in range(1, n + 1):
        for _ in range(colors):
            for j in range(k, n + 1):
                coeffs[j] += coeffs[j - k]
    return coeffs[n]


def make_lattice_fva(gram, p=None, mode="P>"):
    """Build ``F_{L, H, p}``.

    ``mode`` is ``"P>"`` (definite; validated) or ``"P"`` (any orthogonal
    projection).  ``p`` defaults to the identity.
    """
    if mode not in ("P", "P>"):
        raise ValueError("mode must be 'P' or 'P>'")
    lattice = gram if isinstance(gram, EvenLattice) else EvenLattice(gram)
    if p is None:
        p = _identity(lattice.rank)
    proj = Projection(p, lattice, definite=(mode == "P>"))
    fva = LatticeFVA(lattice, proj, definite=(mode == "P>"))
    # (-,-)_p must be non-degenerate; the frame has full rank exactly then
    if len(fva.frame) != lattice.rank:
        raise LatticeError("(-,-)_p is degenerate")
    return fva


def narain_point():
    """``II(1,1)`` with ``p`` the projection onto ``span(z - w)``."""
    half = Fraction(1, 2)
    return make_lattice_fva([[0, -1], [-1, 0]], [[half, -half], [-half, half]])
