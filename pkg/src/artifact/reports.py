"""Pass/fail reports with concrete witness coefficients."""

from fractions import Fraction

from .series import _monomial_text, compare, fmt_q

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive-window"


class CheckReport:
    """Outcome of one check.

    ``witnesses`` is a list of ``(monomial, lhs, rhs)`` where ``monomial`` is
    a printable label.  A failing report always carries at least one
    witness.  ``compared`` counts the coefficients that were looked at.
    """

    def __init__(self, name, status, witnesses=(), window=None, detail="",
                 compared=0):
        if status not in (PASS, FAIL, INCONCLUSIVE):
            raise ValueError(f"bad status {status!r}")
        witnesses = list(witnesses)
        if status == FAIL and not witnesses:
            raise ValueError("a failing report needs a witness")
        self.name = name
        self.status = status
        self.witnesses = witnesses
        self.window = window
        self.detail = detail
        self.compared = compared

    @property
    def ok(self):
        return self.status == PASS

    def __bool__(self):
        return self.ok

    def __repr__(self):
        return f"<CheckReport {self.name}: {self.status}>"

    def line(self):
        head = {PASS: "PASS", FAIL: "FAIL", INCONCLUSIVE: "INCONCLUSIVE"}[self.status]
        out = f"{head} {self.name}"
        if self.window is not None:
            out += f" [window {self.window}]"
        if self.status == FAIL:
            mono, lhs, rhs = self.witnesses[0]
            out += f": {mono}: {fmt_q(lhs)} != {fmt_q(rhs)}"
        elif self.detail:
            out += f": {self.detail}"
        return out

    def to_json(self):
        return {
            "name": self.name,
            "status": self.status,
            "window": None if self.window is None else str(self.window),
            "witnesses": [{"monomial": str(m), "lhs": fmt_q(a), "rhs": fmt_q(b)}
                          for m, a, b in self.witnesses],
        }


def series_report(name, lhs, rhs, window=None, label="", limit=5):
    """Compare two series on their common window.

    The report is inconclusive when both sides are empty on the window,
    because then nothing was actually checked.
    """
    bad = compare(lhs, rhs)
    prefix = f"{label} " if label else ""
    wits = [(prefix + _monomial_text(lhs.region, k), a, b) for k, a, b in bad[:limit]]
    compared = len(set(lhs.terms) | set(rhs.terms))
    if bad:
        return CheckReport(name, FAIL, wits, window, compared=compared)
    if compared == 0:
        return CheckReport(name, INCONCLUSIVE, (), window,
                           detail="no coefficients inside the window",
                           compared=0)
    return CheckReport(name, PASS, (), window, compared=compared)


def combine(name, reports, window=None):
    """Fold several reports into one; the first failure supplies witnesses."""
    reports = list(reports)
    fails = [r for r in reports if r.status == FAIL]
    total = sum(r.compared for r in reports)
    if fails:
        wits = []
        for r in fails:
            wits.extend((f"{r.name}: {m}", a, b) for m, a, b in r.witnesses[:1])
        return CheckReport(name, FAIL, wits, window, compared=total)
    if reports and all(r.status == INCONCLUSIVE for r in reports):
        return CheckReport(name, INCONCLUSIVE, (), window,
                           detail="every sub-check was inconclusive")
    n = sum(1 for r in reports if r.status == PASS)
    return CheckReport(name, PASS, (), window,
                       detail=f"{n} sub-checks, {total} coefficients",
                       compared=total)


def value_report(name, pairs, window=None):
    """Compare explicit ``(label, lhs, rhs)`` triples of rationals."""
    pairs = [(m, Fraction(a), Fraction(b)) for m, a, b in pairs]
    bad = [(m, a, b) for m, a, b in pairs if a != b]
    if bad:
        return CheckReport(name, FAIL, bad, window, compared=len(pairs))
    if not pairs:
        return CheckReport(name, INCONCLUSIVE, (), window, detail="nothing compared")
    return CheckReport(name, PASS, (), window, compared=len(pairs))
