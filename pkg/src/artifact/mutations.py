"""Single-site fault injection used to show that the checks can fail.

A handful of places in the engine consult :func:`enabled` before applying a
sign or an exponent.  Tests (and the hidden ``--mutate`` CLI flag) switch a
site on with :func:`active`; normal use never touches this module.
"""

import contextvars
from contextlib import contextmanager

#: the documented mutation sites
SITES = {
    "cocycle_sign": "lattice cocycle ignores the (-1)^(a,b) factor for i > j",
    "negate_sign": "negate_var drops the (-1)^(r-s) factor",
    "tau_entry": "the tau table sends 1((23)4) to the identity instead of (13)",
    "q_exponent": "the Q(h, z) prefactor uses +h3 instead of -h3 in alpha_13",
}

_active = contextvars.ContextVar("artifact_mutations", default=frozenset())


def enabled(name):
    return name in _active.get()


def current():
    """The frozenset of active mutation sites."""
    return _active.get()


@contextmanager
def active(*names):
    """Enable the named mutation sites inside a ``with`` block."""
    for n in names:
        if n not in SITES:
            raise KeyError(f"unknown mutation site {n!r}")
    token = _active.set(_active.get() | frozenset(names))
    try:
        yield
    finally:
        _active.reset(token)
