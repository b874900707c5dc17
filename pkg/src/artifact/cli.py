"""Command line front end.

    artifact expand --cor4 phi.json --paren "1(2(34))" --order 3
    artifact correlator --lattice L.json --projection P.json --states S.json --paren "1(2(3(4*)))" --order 2
    artifact check --lattice L.json --projection P.json --all --order 3
    artifact spectrum --lattice L.json --projection P.json --max-energy 1

Rationals are printed as ``num/den`` strings; ``--format json`` gives the
canonical series document.  ``check`` exits with status 0 exactly when
every selected check passes.
"""

import argparse
import json
import sys
from fractions import Fraction

from . import mutations
from .expand import Cor4Elem, ParenError, UnsupportedTransform, e_A, parse_paren
from .fullvertex import FockState, LatticeError, make_lattice_fva
from .series import fmt_q, to_document, to_text
from . import verify

SUITES = ("axioms", "skew", "locality", "bootstrap", "consistency", "s4", "qp")
S4_GENERATORS = ("(12)", "(23)", "(34)", "(14)(23)")


class ConfigError(ValueError):
    """A configuration file is missing or malformed."""


def _load(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} file {path} is not valid JSON: {exc}") from None


def _order(text):
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"order must be a rational, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("order must be non-negative")
    return value


def load_algebra(lattice_path, projection_path=None, mode="P>"):
    doc = _load(lattice_path, "lattice")
    gram = doc.get("gram") if isinstance(doc, dict) else None
    if gram is None:
        raise ConfigError("lattice file needs a 'gram' entry")
    if "rank" in doc and int(doc["rank"]) != len(gram):
        raise ConfigError(f"lattice rank {doc['rank']} does not match the Gram matrix")
    p = None
    if projection_path:
        pdoc = _load(projection_path, "projection")
        if not isinstance(pdoc, dict) or "p" not in pdoc:
            raise ConfigError("projection file needs a 'p' entry")
        p = [[Fraction(str(x)) for x in row] for row in pdoc["p"]]
        mode = pdoc.get("mode", mode)
    return make_lattice_fva(gram, p, mode)


def load_states(path):
    """A states file holds a list of states; a state is a list of terms
    ``{"modes": [[index, n], ...], "ground": [...], "coeff": "a/b"}`` (a
    single term may stand alone)."""
    doc = _load(path, "states")
    if isinstance(doc, dict):
        doc = doc.get("states", [doc])
    out = []
    for item in doc:
        terms = [item] if isinstance(item, dict) else item
        try:
            out.append(FockState.from_json(terms))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad state entry {item!r}: {exc}") from None
    return out


def default_states(F):
    """Four ground states with total charge zero built from the first two
    basis vectors."""
    n = F.rank
    b0 = tuple(int(i == 0) for i in range(n))
    b1 = tuple(int(i == 1) for i in range(n)) if n > 1 else b0
    neg = lambda v: tuple(-x for x in v)  # noqa: E731
    return [F.ground(b0), F.ground(b1), F.ground(neg(b0)), F.ground(neg(b1))]


def _print_series(g, fmt, out):
    if fmt == "json":
        out.write(json.dumps(to_document(g), indent=2, sort_keys=True) + "\n")
    else:
        out.write(f"# region {list(g.region.names)}\n")
        out.write(to_text(g) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_expand(args, out):
    doc = _load(args.cor4, "Cor4")
    phi = Cor4Elem.from_json(doc, order=args.order)
    g = e_A(phi, parse_paren(args.paren), args.order)
    _print_series(g, args.format, out)
    return 0


def cmd_correlator(args, out):
    F = load_algebra(args.lattice, args.projection, args.mode)
    states = load_states(args.states)
    A = parse_paren(args.paren)
    g = F.correlator(A, states, args.order)
    total = [sum(col) for col in zip(*(k[1] for s in states for k in list(s.terms)[:1]))]
    if not g.terms and any(total):
        sys.stderr.write("note: the states have nonzero total charge; the correlator vanishes\n")
    _print_series(g, args.format, out)
    return 0


def _selected(args):
    if args.all:
        return list(SUITES)
    chosen = [s for s in SUITES if getattr(args, s)]
    chosen += [s for s in (args.suite or []) if s not in chosen]
    for s in chosen:
        if s not in SUITES:
            raise ConfigError(f"unknown suite {s!r}; choose from {', '.join(SUITES)}")
    return chosen or list(SUITES)


def run_checks(F, states, suites, order, paren=None):
    """Run the selected suites; returns a list of reports."""
    order = int(order)
    reports = []
    grounds = [s for s in states if len(s.terms) == 1 and not next(iter(s.terms))[0]]
    for suite in suites:
        if suite == "axioms":
            reports.append(verify.check_axioms(F, 10, order))
            reports.append(verify.check_heisenberg(F, 5))
            reports.append(verify.check_virasoro(F, 3))
            v = verify.sample_states(F, 1, seed=1)[0]
            b = [tuple(int(i == j) for i in range(F.rank)) for j in range(F.rank)]
            reports.append(verify.check_lattice_commutator(F, b[0], b[-1], v, order))
        elif suite == "skew":
            reports.append(verify.check_skew(F, states[0], states[1], order))
        elif suite == "locality":
            trip = grounds[:3] if len(grounds) >= 3 else default_states(F)[:3]
            reports.append(verify.check_locality(F, *trip, order))
        elif suite == "bootstrap":
            for pair in ("s/t", "s/u"):
                reports.append(verify.check_bootstrap(F, states[:4], pair, order))
        elif suite == "consistency":
            trees = [paren] if paren else verify.Q4_TREES
            for A in trees:
                reports.append(verify.check_consistency(F, states[:4], A, order))
        elif suite == "s4":
            for sigma in S4_GENERATORS:
                reports.append(verify.check_s4(F, states[:4], sigma, order))
        elif suite == "qp":
            if F.definite:
                reports.append(verify.check_qp_structure(F, order))
    return sorted(reports, key=lambda r: r.name)


def cmd_check(args, out):
    F = load_algebra(args.lattice, args.projection, args.mode)
    states = load_states(args.states) if args.states else default_states(F)
    if len(states) < 4:
        raise ConfigError("check needs four states")
    suites = _selected(args)
    order = 3 if args.order is None else args.order
    with mutations.active(*(args.mutate or [])):
        reports = run_checks(F, states, suites, order, args.paren)
    if args.format == "json":
        out.write(json.dumps([r.to_json() for r in reports], indent=2, sort_keys=True) + "\n")
    else:
        for r in reports:
            out.write(r.line() + "\n")
    return 0 if reports and all(r.ok for r in reports) else 1


def cmd_spectrum(args, out):
    F = load_algebra(args.lattice, args.projection, args.mode)
    rows = F.spectrum(args.max_energy, args.box)
    if args.format == "json":
        out.write(json.dumps([{"h": fmt_q(h), "hbar": fmt_q(hb), "alpha": list(a), "dim": d}
                              for h, hb, a, d in rows], indent=2) + "\n")
    else:
        out.write("h\thbar\talpha\tdim\n")
        for h, hb, a, d in rows:
            out.write(f"{fmt_q(h)}\t{fmt_q(hb)}\t{list(a)}\t{d}\n")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    ap = argparse.ArgumentParser(prog="artifact", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, lattice=True):
        p.add_argument("--format", choices=("text", "json"), default="text")
        if lattice:
            p.add_argument("--lattice", required=True, help="JSON file {rank, gram}")
            p.add_argument("--projection", help="JSON file {p: [[rational]]}; default identity")
            p.add_argument("--mode", choices=("P>", "P"), default="P>",
                           help="P> validates definiteness (default)")

    p = sub.add_parser("expand", help="expand a four-point function in the region of a tree")
    common(p, lattice=False)
    p.add_argument("--cor4", required=True, help="Cor4 element JSON")
    p.add_argument("--paren", required=True)
    p.add_argument("--order", type=_order, required=True)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("correlator", help="parenthesized correlator of lattice states")
    common(p)
    p.add_argument("--states", required=True)
    p.add_argument("--paren", required=True)
    p.add_argument("--order", type=_order, required=True)
    p.set_defaults(func=cmd_correlator)

    p = sub.add_parser("check", help="run verification suites")
    common(p)
    p.add_argument("--states", help="four states; default: ground states of charge zero")
    p.add_argument("--order", type=_order)
    p.add_argument("--paren", help="restrict --consistency to one tree")
    p.add_argument("--suite", action="append", help=f"one of {', '.join(SUITES)}")
    p.add_argument("--all", action="store_true")
    for s in SUITES:
        p.add_argument(f"--{s}", action="store_true")
    p.add_argument("--mutate", action="append", choices=sorted(mutations.SITES),
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("spectrum", help="list (h, hbar, alpha, dim) up to an energy")
    common(p)
    p.add_argument("--max-energy", type=Fraction, required=True)
    p.add_argument("--box", type=int, default=2, help="bound on lattice coordinates")
    p.set_defaults(func=cmd_spectrum)
    return ap


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except ParenError as exc:
        sys.stderr.write(f"error: {exc}\n")
    except (ConfigError, LatticeError, UnsupportedTransform, KeyError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
    return 2


if __name__ == "__main__":
    sys.exit(main())
