"""Plain-text model files.

A file is a list of sections.  Each section starts with a ``[name]`` header;
``#`` starts a comment; blank lines are ignored.  Sections:

    [states]        one name per line (or several per line)
    [actions]       one name per line (or several per line)
    [feasible]      state = action action ...
    [q0]            state = probability          (unlisted states get 0)
    [discount]      a single number in [0, 1)
    [payoff]        state action next_state = value   (unlisted entries are 0)
    [kernel]        state action = p_1 p_2 ... p_n    (one probability per state, in order)
    [theta_grid]    one parameter vector per line
    [family i]      kernel rows for grid point i, same format as [kernel]

Numbers are decimal literals or ratios such as ``2/3``.  Probability vectors
within 1e-12 of summing to one are renormalized (sums within 1e-14 are taken
as written); anything worse is an error that names the offending line.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .model import PROB_TOL, FiniteMdp, FiniteSmdp, validate

ROUNDING = 1e-14      # row sums this close to one are float noise and kept as written


class ModelFileError(ValueError):
    """Malformed model file; ``line`` is 1-based (0 when the problem is not tied to a line)."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _number(token: str, line: int) -> float:
    try:
        if "/" in token:
            return float(Fraction(token))
        return float(token)
    except (ValueError, ZeroDivisionError):
        raise ModelFileError(f"not a number: {token!r}", line) from None


def _sections(text: str) -> dict:
    sections: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = " ".join(line[1:-1].split())
            if current in sections:
                raise ModelFileError(f"duplicate section [{current}]", lineno)
            sections[current] = []
            continue
        if current is None:
            raise ModelFileError("content before the first section header", lineno)
        sections[current].append((lineno, line))
    return sections


def _require(sections: dict, name: str):
    if name not in sections:
        raise ModelFileError(f"missing section [{name}]")
    return sections[name]


def _split_eq(line: str, lineno: int, n_left: int) -> tuple:
    if "=" not in line:
        raise ModelFileError("expected 'key = value'", lineno)
    left, right = line.split("=", 1)
    keys = left.split()
    if len(keys) != n_left:
        raise ModelFileError(f"expected {n_left} name(s) before '='", lineno)
    return keys, right.split()


def _index(names: list, name: str, kind: str, lineno: int) -> int:
    try:
        return names.index(name)
    except ValueError:
        raise ModelFileError(f"unknown {kind} {name!r}", lineno) from None


def _probability_row(values: list, lineno: int, what: str) -> np.ndarray:
    row = np.array(values, dtype=float)
    if np.any(row < -PROB_TOL) or abs(row.sum() - 1.0) > PROB_TOL:
        raise ModelFileError(f"{what} is not a probability vector (sum={row.sum():.17g})", lineno)
    if np.all(row >= 0) and abs(row.sum() - 1.0) <= ROUNDING:
        return row
    row = np.clip(row, 0.0, None)
    return row / row.sum()


def _kernel(entries, states, actions, feasible, label) -> np.ndarray:
    n_s, n_x = len(states), len(actions)
    k = np.zeros((n_s, n_x, n_s))
    seen = np.zeros((n_s, n_x), bool)
    for lineno, line in entries:
        (s_name, x_name), vals = _split_eq(line, lineno, 2)
        s = _index(states, s_name, "state", lineno)
        x = _index(actions, x_name, "action", lineno)
        if not feasible[s, x]:
            raise ModelFileError(f"{label} row for infeasible pair ({s_name}, {x_name})", lineno)
        if seen[s, x]:
            raise ModelFileError(f"duplicate {label} row ({s_name}, {x_name})", lineno)
        if len(vals) != n_s:
            raise ModelFileError(f"{label} row ({s_name}, {x_name}) has {len(vals)} entries, expected {n_s}",
                                 lineno)
        k[s, x] = _probability_row([_number(v, lineno) for v in vals], lineno,
                                   f"{label} row ({s_name}, {x_name})")
        seen[s, x] = True
    missing = np.argwhere(feasible & ~seen)
    if missing.size:
        s, x = missing[0]
        raise ModelFileError(f"{label} has no row for feasible pair ({states[s]}, {actions[x]})")
    return k


def parse_model(text: str) -> FiniteSmdp:
    """Parse model-file text; raises ``ModelFileError`` on any malformation or invalid model."""
    sec = _sections(text)
    states = [tok for _, line in _require(sec, "states") for tok in line.split()]
    actions = [tok for _, line in _require(sec, "actions") for tok in line.split()]
    for kind, names in (("state", states), ("action", actions)):
        if not names:
            raise ModelFileError(f"no {kind}s listed")
        if len(set(names)) != len(names):
            raise ModelFileError(f"duplicate {kind} names")
    n_s, n_x = len(states), len(actions)

    feasible = np.zeros((n_s, n_x), bool)
    for lineno, line in _require(sec, "feasible"):
        (s_name,), acts = _split_eq(line, lineno, 1)
        s = _index(states, s_name, "state", lineno)
        for a in acts:
            feasible[s, _index(actions, a, "action", lineno)] = True
    for s in np.flatnonzero(~feasible.any(axis=1)):
        raise ModelFileError(f"state {states[s]!r} has no feasible action")

    q0 = np.zeros(n_s)
    for lineno, line in _require(sec, "q0"):
        (s_name,), vals = _split_eq(line, lineno, 1)
        if len(vals) != 1:
            raise ModelFileError("expected a single probability", lineno)
        q0[_index(states, s_name, "state", lineno)] = _number(vals[0], lineno)
    q0 = _probability_row(q0, _require(sec, "q0")[0][0] if sec["q0"] else 0, "q0")

    disc = _require(sec, "discount")
    if len(disc) != 1 or len(disc[0][1].split()) != 1:
        raise ModelFileError("[discount] must hold a single number", disc[0][0] if disc else 0)
    delta = _number(disc[0][1].strip(), disc[0][0])
    if not 0.0 <= delta < 1.0:
        raise ModelFileError(f"discount {delta} is outside [0, 1)", disc[0][0])

    payoff = np.zeros((n_s, n_x, n_s))
    for lineno, line in sec.get("payoff", []):
        (s_name, x_name, t_name), vals = _split_eq(line, lineno, 3)
        s = _index(states, s_name, "state", lineno)
        x = _index(actions, x_name, "action", lineno)
        t = _index(states, t_name, "state", lineno)
        if not feasible[s, x]:
            raise ModelFileError(f"payoff for infeasible pair ({s_name}, {x_name})", lineno)
        if len(vals) != 1:
            raise ModelFileError("expected a single payoff value", lineno)
        payoff[s, x, t] = _number(vals[0], lineno)

    kernel = _kernel(_require(sec, "kernel"), states, actions, feasible, "kernel")

    grid_rows = []
    for lineno, line in _require(sec, "theta_grid"):
        grid_rows.append([_number(v, lineno) for v in line.split()])
        if len(grid_rows[-1]) != len(grid_rows[0]):
            raise ModelFileError("parameter vectors have different dimensions", lineno)
    if not grid_rows:
        raise ModelFileError("[theta_grid] is empty")
    family = []
    for i in range(len(grid_rows)):
        family.append(_kernel(_require(sec, f"family {i}"), states, actions, feasible, f"family {i}"))
    extra = [name for name in sec if name.startswith("family ") and name not in
             {f"family {i}" for i in range(len(grid_rows))}]
    if extra:
        raise ModelFileError(f"section [{extra[0]}] has no matching grid point")
    known = {"states", "actions", "feasible", "q0", "discount", "payoff", "kernel", "theta_grid"}
    unknown = [name for name in sec if name not in known and not name.startswith("family ")]
    if unknown:
        raise ModelFileError(f"unknown section [{unknown[0]}]")

    mdp = FiniteMdp(states, actions, feasible, q0, kernel, payoff, delta)
    smdp = FiniteSmdp(mdp, np.array(grid_rows), np.array(family))
    report = validate(smdp)
    if not report.ok:
        raise ModelFileError("model is invalid: " + "; ".join(report.issues))
    return smdp


def read_model(path) -> FiniteSmdp:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def _fmt(v: float) -> str:
    return repr(float(v))


def format_model(smdp: FiniteSmdp) -> str:
    """Serialize a model.

    ``parse_model(format_model(m))`` equals ``m`` up to the renormalization of
    rows, and formatting the result again reproduces the same text.
    """
    base = smdp.base
    lines = ["[states]"] + list(base.states)
    lines += ["", "[actions]"] + list(base.actions)
    lines += ["", "[feasible]"]
    lines += [f"{s} = " + " ".join(base.actions[x] for x in np.flatnonzero(base.feasible[i]))
              for i, s in enumerate(base.states)]
    lines += ["", "[q0]"]
    lines += [f"{s} = {_fmt(base.q0[i])}" for i, s in enumerate(base.states) if base.q0[i] != 0]
    lines += ["", "[discount]", _fmt(base.discount)]
    lines += ["", "[payoff]"]
    for s, x, t in np.argwhere(base.payoff != 0):
        lines.append(f"{base.states[s]} {base.actions[x]} {base.states[t]} = {_fmt(base.payoff[s, x, t])}")

    def kernel_lines(k):
        return [f"{base.states[s]} {base.actions[x]} = " + " ".join(_fmt(v) for v in k[s, x])
                for s, x in np.argwhere(base.feasible)]

    lines += ["", "[kernel]"] + kernel_lines(base.kernel)
    lines += ["", "[theta_grid]"] + [" ".join(_fmt(v) for v in row) for row in smdp.theta_grid]
    for i in range(smdp.n_theta):
        lines += ["", f"[family {i}]"] + kernel_lines(smdp.family[i])
    return "\n".join(lines) + "\n"


def write_model(smdp: FiniteSmdp, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_model(smdp))
