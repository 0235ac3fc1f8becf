"""Exact-rational calculus over communication resource inequalities.

An inequality  LHS >= RHS  says a protocol exists turning the LHS resources
into the RHS resources, with rates as exact `fractions.Fraction`s.  Basis
symbols: [q->q] qubits, [qq] ebits, [c->c] cbits, [q->qq] cobits, [0]
zero-bits, [alpha] subspace-limited alpha-bits (one alpha per derivation),
and <psi_...> state terms.  `=(c)`-style relations are bidirectional and/or
catalytic.

The engine does three things:

* `load_knowledge_base(bindings)` instantiates the bundled relations at an
  exact binding of alpha and the entropy symbols (hA, hAcondB, ...);
* `combine(steps, mode)` sums scaled, possibly reversed relations, chains
  state terms, and cancels resources appearing on both sides -- except that
  one-shot mode never cancels ebits (catalysts cannot be recycled there);
  cancelling ebits is exactly what marks a combination catalytic;
* `check_derivation(target, steps, mode)` passes iff the combined result
  dominates the target up to adding the same non-negative resources to both
  sides, and a catalytic derivation never certifies a non-catalytic claim.

Everything is exact; no floats enter or leave.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import StateError

# canonical basis symbols (the bracket text is the symbol)
QBIT = "[q->q]"
EBIT = "[qq]"
CBIT = "[c->c]"
COBIT = "[q->qq]"
ZBIT = "[0]"
ABIT = "[alpha]"
BASIS_SYMBOLS = (QBIT, EBIT, CBIT, COBIT, ZBIT, ABIT)


def is_state_symbol(sym: str) -> bool:
    return sym.startswith("<")


# ---------------------------------------------------------------------------
# exact expression evaluation
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"\s*(\d+\.\d+|\d+|[A-Za-z_][A-Za-z_0-9]*|[()+\-*/])")


def _tokenize_expr(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise StateError(f"cannot tokenize expression at: {text[pos:]!r}")
        out.append(m.group(1))
        pos = m.end()
    return out


def eval_expr(text: str, bindings: dict) -> Fraction:
    """Evaluate +-*/() over exact rationals with named symbols."""
    tokens = _tokenize_expr(text)
    idx = [0]

    def peek():
        return tokens[idx[0]] if idx[0] < len(tokens) else None

    def take():
        tok = peek()
        idx[0] += 1
        return tok

    def factor():
        tok = take()
        if tok is None:
            raise StateError(f"unexpected end of expression in {text!r}")
        if tok == "(":
            val = expr()
            if take() != ")":
                raise StateError(f"unbalanced parentheses in {text!r}")
            return val
        if tok == "-":
            return -factor()
        if tok == "+":
            return factor()
        if re.fullmatch(r"\d+", tok):
            return Fraction(int(tok))
        if re.fullmatch(r"\d+\.\d+", tok):
            return Fraction(tok)  # exact decimal
        if tok in bindings:
            return Fraction(bindings[tok])
        raise StateError(f"unbound symbol {tok!r} in expression {text!r}")

    def term():
        val = factor()
        while peek() in ("*", "/"):
            op = take()
            rhs = factor()
            if op == "*":
                val *= rhs
            else:
                if rhs == 0:
                    raise StateError(f"division by zero in {text!r}")
                val /= rhs
        return val

    def expr():
        val = term()
        while peek() in ("+", "-"):
            op = take()
            rhs = term()
            val = val + rhs if op == "+" else val - rhs
        return val

    out = expr()
    if idx[0] != len(tokens):
        raise StateError(f"trailing tokens in expression {text!r}")
    return out


# ---------------------------------------------------------------------------
# resource vectors and inequalities
# ---------------------------------------------------------------------------

class ResourceVector:
    """Map from resource symbol to exact rational coefficient."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=None):
        clean = {}
        for sym, c in (coeffs or {}).items():
            c = Fraction(c)
            if c != 0:
                clean[sym] = c
        self.coeffs = clean

    def get(self, sym) -> Fraction:
        return self.coeffs.get(sym, Fraction(0))

    def scaled(self, mult: Fraction) -> "ResourceVector":
        return ResourceVector({s: c * mult for s, c in self.coeffs.items()})

    def plus(self, other: "ResourceVector") -> "ResourceVector":
        out = dict(self.coeffs)
        for s, c in other.coeffs.items():
            out[s] = out.get(s, Fraction(0)) + c
        return ResourceVector(out)

    def symbols(self):
        return set(self.coeffs)

    def __eq__(self, other):
        return isinstance(other, ResourceVector) and self.coeffs == other.coeffs

    def render(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for sym in sorted(self.coeffs):
            c = self.coeffs[sym]
            parts.append(f"{c}{sym}" if not is_state_symbol(sym)
                         else (sym if c == 1 else f"{c}{sym}"))
        return " + ".join(parts)

    def __repr__(self):
        return f"ResourceVector({self.render()})"


@dataclass(frozen=True)
class ResourceInequality:
    """LHS >= RHS with catalytic/bidirectional markers and opaque error tags."""

    label: str
    lhs: ResourceVector
    rhs: ResourceVector
    catalytic: bool = False
    bidirectional: bool = False
    tags: frozenset = frozenset()

    def reversed_(self) -> "ResourceInequality":
        if not self.bidirectional:
            raise StateError(f"{self.label}: cannot reverse a one-directional relation")
        return ResourceInequality(label=f"{self.label}^rev", lhs=self.rhs,
                                  rhs=self.lhs, catalytic=self.catalytic,
                                  bidirectional=True, tags=self.tags)

    def render(self) -> str:
        op = {"": ">=", "c": ">=(c)"}["c" if self.catalytic else ""]
        if self.bidirectional:
            op = "=(c)" if self.catalytic else "="
        return f"{self.lhs.render()} {op} {self.rhs.render()}"


def _canonicalize(lhs: ResourceVector, rhs: ResourceVector):
    """Move negative coefficients to the other side so everything is >= 0."""
    l, r = dict(lhs.coeffs), dict(rhs.coeffs)
    for sym in set(l) | set(r):
        lv = l.get(sym, Fraction(0))
        rv = r.get(sym, Fraction(0))
        if lv < 0:
            r[sym] = rv - lv
            l[sym] = Fraction(0)
            lv, rv = Fraction(0), r[sym]
        if rv < 0:
            l[sym] = l.get(sym, Fraction(0)) - rv
            r[sym] = Fraction(0)
    return ResourceVector(l), ResourceVector(r)


# ---------------------------------------------------------------------------
# parsing inequality text
# ---------------------------------------------------------------------------

_OPERATORS = (">=(c)", "=(c)", ">=", "=")


def parse_inequality(label: str, text: str, tags=()) -> ResourceInequality:
    """Parse `expr[sym] + ... (>=|=|>=(c)|=(c)) ...` with exact coefficients."""
    op = None
    for cand in _OPERATORS:
        if cand in text:
            op = cand
            break
    if op is None:
        raise StateError(f"{label}: no operator in {text!r}")
    left_text, right_text = text.split(op, 1)
    catalytic = op.endswith("(c)")
    bidirectional = op.startswith("=")

    def parse_side(side_text, bindings):
        out = {}
        for sign, coef_text, sym in _split_terms(side_text):
            coef = eval_expr(coef_text, bindings) if coef_text.strip() else Fraction(1)
            out[sym] = out.get(sym, Fraction(0)) + sign * coef
        return out

    # bindings are applied lazily: stash raw text, bind later
    def binder(bindings: dict) -> ResourceInequality:
        lhs = ResourceVector(parse_side(left_text, bindings))
        rhs = ResourceVector(parse_side(right_text, bindings))
        lhs, rhs = _canonicalize(lhs, rhs)
        return ResourceInequality(label=label, lhs=lhs, rhs=rhs,
                                  catalytic=catalytic, bidirectional=bidirectional,
                                  tags=frozenset(tags))
    return binder


def _split_terms(side_text: str):
    """Yield (sign, coefficient text, symbol) triples from one side."""
    s = side_text.strip()
    pos = 0
    sign = Fraction(1)
    coef_start = 0
    depth = 0
    while pos < len(s):
        ch = s[pos]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif depth == 0 and ch in "[<":
            closer = "]" if ch == "[" else ">"
            end = s.index(closer, pos)
            sym = s[pos:end + 1]
            if sym not in BASIS_SYMBOLS and not is_state_symbol(sym):
                raise StateError(f"unknown resource symbol {sym!r}")
            yield sign, s[coef_start:pos], sym
            pos = end + 1
            # consume following +/- separator
            while pos < len(s) and s[pos] in " \t":
                pos += 1
            sign = Fraction(1)
            if pos < len(s):
                if s[pos] == "+":
                    pos += 1
                elif s[pos] == "-":
                    sign = Fraction(-1)
                    pos += 1
                else:
                    raise StateError(f"expected +/- between terms in {side_text!r}")
            coef_start = pos
            continue
        pos += 1
    rest = s[coef_start:].strip()
    if rest:
        raise StateError(f"dangling coefficient {rest!r} in {side_text!r}")


# ---------------------------------------------------------------------------
# knowledge base
# ---------------------------------------------------------------------------

# (label, inequality text, tags, required names)
KNOWLEDGE_BASE_TEMPLATES = (
    ("EQ1", "1[qq] + 2[c->c] >= 1[q->q]", (), ()),
    ("EQ2", "<psi_ABR> + hAcondB[qq] + iAR[c->c] >= <psi_A'BR>", (),
     ("hA", "hAcondB")),
    ("EQ3", "<psi_ABR> + (iAR/2)[q->q] >= <psi_A'BR> + (iAB/2)[qq]", (),
     ("hA", "hAcondB")),
    ("EQ5", "1[q->q] + 1[qq] = 2[q->qq]", (), ()),
    ("EQ6", "1[alpha] + 1[qq] =(c) (1+alpha)[q->qq]", (), ("alpha",)),
    ("EQ7", "1[alpha] =(c) alpha[qq] + (1+alpha)[0]", (), ("alpha",)),
    ("EQ8", "1[alpha] =(c) alpha[q->q] + (1-alpha)[0]", (), ("alpha",)),
    # the paper's display shows a cobit on the RHS; as printed it would imply
    # 2[0] = 4[0] against EQ5 and cannot reproduce EQ7/EQ8, so the qubit form
    # (teleportation with zero-bits standing in for the cbits) is used
    ("EQ9", "1[qq] + 2[0] =(c) 1[q->q]", (), ()),
    ("EQ11", "<psi_ABR> + (iAR/(1+alpha))[alpha] + (iAR/(1+alpha))[qq] "
             ">=(c) <psi_A'BR> + hA[qq]", (), ("alpha", "hA", "hAcondB")),
    ("EQ12", "<psi_ABR> + (iAR/(1+alpha))[alpha] >=(c) "
             "<psi_A'BR> + (hA - iAR/(1+alpha))[qq]", (),
     ("alpha", "hA", "hAcondB")),
    ("EQ13", "<psi_ABR> + hA[alpha] >=(c) <psi_A'BR>", (),
     ("alpha", "hA", "hAcondB")),
    ("EQ14", "<psi_ABR> + (iAR/(2*alpha))[alpha] >= "
             "<psi_A'BR> + (iAB/2)[qq]", (), ("alpha", "hA", "hAcondB")),
    ("ZEROBIT_MERGE", "<psi_ABR> + iAR[0] >=(c) <psi_A'BR> + icAB[qq]", (),
     ("hA", "hAcondB")),
    ("AP_MERGE", "<psi_ABR> + hAcondB[q->q] + iAB[0] >=(c) <psi_A'BR>", (),
     ("hA", "hAcondB")),
    ("ONESHOT_MOTHER", "<psi_ABR> + ((hmaxA - hminAR)/2)[q->q] >= "
                       "((hmaxA + hminAR)/2)[qq] + <psi_A'BR>", ("delta",),
     ("hmaxA", "hminAR")),
)

# the canonical comparison state used across the rate figures:
# H(A) = 1, H(A|B) = 1/5, alpha = 3/5
DEFAULT_BINDINGS = {"alpha": Fraction(3, 5), "hA": Fraction(1),
                    "hAcondB": Fraction(1, 5)}


def complete_bindings(bindings: dict) -> dict:
    """Fill derived entropy symbols from hA and hAcondB (pure tripartite)."""
    out = {k: Fraction(v) for k, v in bindings.items()}
    if "hA" in out and "hAcondB" in out:
        out.setdefault("iAR", out["hA"] + out["hAcondB"])
        out.setdefault("iAB", out["hA"] - out["hAcondB"])
        out.setdefault("icAB", -out["hAcondB"])
    return out


def load_knowledge_base(bindings: dict | None = None) -> dict:
    """Bind the bundled relations at exact rational values.

    Entries whose required symbols are unbound are skipped (e.g. the
    alpha-parametrized relations when no alpha is given).  Returns
    a dict label -> ResourceInequality.
    """
    bindings = complete_bindings(DEFAULT_BINDINGS if bindings is None else bindings)
    out = {}
    for label, text, tags, required in KNOWLEDGE_BASE_TEMPLATES:
        if any(name not in bindings for name in required):
            continue
        out[label] = parse_inequality(label, text, tags)(bindings)
    return out


def validate_knowledge_base(kb: dict):
    """State terms must flow one way: psi_ABR consumed, psi_A'BR produced."""
    for ineq in kb.values():
        for sym in ineq.lhs.symbols():
            if is_state_symbol(sym) and sym != "<psi_ABR>":
                raise StateError(f"{ineq.label}: unexpected state {sym} on LHS")
        for sym in ineq.rhs.symbols():
            if is_state_symbol(sym) and sym != "<psi_A'BR>":
                raise StateError(f"{ineq.label}: unexpected state {sym} on RHS")


# ---------------------------------------------------------------------------
# combining and checking
# ---------------------------------------------------------------------------

MODES = ("catalytic", "oneshot")


def combine(steps, mode: str = "catalytic") -> ResourceInequality:
    """Sum scaled (and possibly reversed) relations and cancel common terms.

    steps: iterable of (ResourceInequality, multiplier, reversed_flag).
    Multipliers must be non-negative exact rationals; reversing is only
    allowed for bidirectional relations.  State terms always chain; basis
    terms cancel min(lhs, rhs) -- except ebits in one-shot mode, which stay
    on both sides.  Ebit cancellation marks the result catalytic.
    """
    if mode not in MODES:
        raise StateError(f"unknown mode {mode!r}; use one of {MODES}")
    lhs = ResourceVector({})
    rhs = ResourceVector({})
    catalytic = False
    tags = set()
    labels = []
    for ineq, mult, reversed_flag in steps:
        mult = Fraction(mult)
        if mult < 0:
            raise StateError(f"{ineq.label}: negative multiplier {mult}")
        use = ineq.reversed_() if reversed_flag else ineq
        lhs = lhs.plus(use.lhs.scaled(mult))
        rhs = rhs.plus(use.rhs.scaled(mult))
        catalytic = catalytic or ineq.catalytic
        tags |= set(ineq.tags)
        labels.append(use.label + (f" x{mult}" if mult != 1 else ""))
    lhs, rhs = _canonicalize(lhs, rhs)
    l, r = dict(lhs.coeffs), dict(rhs.coeffs)
    for sym in set(l) & set(r):
        if mode == "oneshot" and sym == EBIT:
            continue  # catalysts cannot be recycled one-shot
        common = min(l[sym], r[sym])
        if common > 0:
            l[sym] -= common
            r[sym] -= common
            if sym == EBIT:
                catalytic = True
    return ResourceInequality(label="combine(" + "; ".join(labels) + ")",
                              lhs=ResourceVector(l), rhs=ResourceVector(r),
                              catalytic=catalytic, bidirectional=False,
                              tags=frozenset(tags))


@dataclass(frozen=True)
class Verdict:
    passed: bool
    residual: dict                 # symbol -> shortfall (exact, nonzero only)
    derived: ResourceInequality
    target_label: str
    catalytic: bool
    catalytic_conflict: bool
    tags: frozenset

    def render(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = ""
        if self.residual:
            extra = " residual{" + ", ".join(
                f"{s}: {c}" for s, c in sorted(self.residual.items())) + "}"
        if self.catalytic_conflict:
            extra += " (catalytic derivation cannot certify a non-catalytic claim)"
        if self.tags:
            extra += " tags{" + ",".join(sorted(self.tags)) + "}"
        return f"{status} {self.target_label}{extra}"

    def to_dict(self) -> dict:
        return {
            "target": self.target_label,
            "passed": self.passed,
            "residual": {s: str(c) for s, c in sorted(self.residual.items())},
            "derived": self.derived.render(),
            "catalytic": self.catalytic,
            "catalyticConflict": self.catalytic_conflict,
            "tags": sorted(self.tags),
        }


def check_derivation(target: ResourceInequality, steps,
                     mode: str = "catalytic") -> Verdict:
    """PASS iff the combination dominates the target up to padding both sides.

    Dominance with padding: there is c >= 0 with  L_d + c <= L_t  and
    R_d + c >= R_t, equivalently per symbol  L_d <= L_t  and
    (R_d - L_d) >= (R_t - L_t).  Adding the same resources to both sides is
    always sound (even one-shot); only cancellation is mode-restricted, and
    that happens inside combine().  A catalytic derivation never certifies a
    non-catalytic target.
    """
    derived = combine(steps, mode)
    residual = {}
    syms = (derived.lhs.symbols() | derived.rhs.symbols()
            | target.lhs.symbols() | target.rhs.symbols())
    for sym in syms:
        need_pad = max(Fraction(0), target.rhs.get(sym) - derived.rhs.get(sym))
        avail_pad = target.lhs.get(sym) - derived.lhs.get(sym)
        shortfall = need_pad - avail_pad
        if shortfall > 0:
            residual[sym] = shortfall
    catalytic_conflict = derived.catalytic and not target.catalytic
    passed = not residual and not catalytic_conflict
    return Verdict(passed=passed, residual=residual, derived=derived,
                   target_label=target.label, catalytic=derived.catalytic,
                   catalytic_conflict=catalytic_conflict, tags=derived.tags)


# ---------------------------------------------------------------------------
# the reversal argument for optimality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReverseMotherVerdict:
    hypothetical_rate: Fraction
    implied_qubit_rate: Fraction
    mother_rate: Fraction          # I(A:R)/2
    contradiction: bool
    derived: ResourceInequality

    def render(self) -> str:
        rel = "<" if self.contradiction else ">="
        tail = "CONTRADICTION" if self.contradiction else "consistent"
        return (f"implied qubit rate {self.implied_qubit_rate} {rel} "
                f"mother rate {self.mother_rate}: {tail}")


def reverse_mother_extraction(rate, bindings: dict | None = None) -> ReverseMotherVerdict:
    """Run a hypothetical merging rate backwards through the dense-coding
    equalities and compare the implied qubit rate with the mother bound.

    A rate below H(A) implies a qubit rate below I(A:R)/2, which is flagged
    as a contradiction (the mother protocol's qubit rate is optimal).
    """
    bindings = complete_bindings(DEFAULT_BINDINGS if bindings is None else bindings)
    rate = Fraction(rate)
    if rate < 0:
        raise StateError("hypothetical rate must be non-negative")
    h_a = bindings["hA"]
    if h_a <= 0:
        raise StateError("reversal argument needs H(A) > 0")
    # the clean reversal point: alpha = H(A|B)/H(A)
    alpha = bindings["hAcondB"] / h_a
    if not (0 < alpha <= 1):
        raise StateError(f"boundary alpha = H(A|B)/H(A) = {alpha} outside (0, 1]")
    local = dict(bindings)
    local["alpha"] = alpha
    kb = load_knowledge_base(local)
    hyp = ResourceInequality(
        label="HYP", lhs=ResourceVector({"<psi_ABR>": 1, ABIT: rate}),
        rhs=ResourceVector({"<psi_A'BR>": 1}), catalytic=True)
    derived = combine([
        (kb["EQ5"], rate * (1 + alpha) / 2, False),
        (kb["EQ6"], rate, True),
        (hyp, Fraction(1), False),
    ])
    implied = derived.lhs.get(QBIT)
    mother = bindings["iAR"] / 2
    # closed form cross-check: rate * I(A:R) / (2 H(A))
    assert implied == rate * bindings["iAR"] / (2 * h_a)
    return ReverseMotherVerdict(hypothetical_rate=rate, implied_qubit_rate=implied,
                                mother_rate=mother,
                                contradiction=implied < mother, derived=derived)


# ---------------------------------------------------------------------------
# derivation scripts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScriptResult:
    verdicts: tuple
    all_ok: bool

    def to_dict(self) -> dict:
        return {"allPassed": self.all_ok,
                "verdicts": [v for v in self._verdict_dicts()]}

    def _verdict_dicts(self):
        for expect_fail, verdict in self.verdicts:
            d = verdict.to_dict()
            d["expectFail"] = expect_fail
            d["ok"] = verdict.passed != expect_fail
            yield d

    def render_lines(self):
        for expect_fail, verdict in self.verdicts:
            ok = verdict.passed != expect_fail
            want = "expect-fail" if expect_fail else "expect"
            mark = "ok" if ok else "NOT SATISFIED"
            yield f"[{want}] {verdict.render()} -> {mark}"


def run_derivation_script(text: str) -> ScriptResult:
    """Execute a line-oriented derivation script.

    Statements (also separable by ';'):
      let NAME = EXPR            bind an exact rational
      mode catalytic|oneshot     set the combination mode (default catalytic)
      ineq LABEL: TEXT           define an extra inequality in-line
      use LABEL xEXPR [reversed] add a scaled step
      expect LABEL               check the accumulated steps against LABEL
      expect-fail LABEL          require that check to FAIL
    `expect` clears the step list so one file can hold several derivations.
    """
    bindings = {}
    extra_texts = {}
    mode = "catalytic"
    steps = []
    verdicts = []

    def kb():
        base = load_knowledge_base(bindings) if bindings else load_knowledge_base({})
        full = complete_bindings(bindings)
        for label, t in extra_texts.items():
            base[label] = parse_inequality(label, t)(full)
        return base

    statements = []
    for raw_line in text.splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        statements.extend(p.strip() for p in line.split(";") if p.strip())

    for stmt in statements:
        words = stmt.split()
        head = words[0]
        if head == "let":
            body = stmt[len("let"):].strip()
            if "=" not in body:
                raise StateError(f"malformed let: {stmt!r}")
            name, expr_text = body.split("=", 1)
            bindings[name.strip()] = eval_expr(expr_text.strip(),
                                               complete_bindings(bindings))
        elif head == "mode":
            if len(words) != 2 or words[1] not in MODES:
                raise StateError(f"malformed mode statement: {stmt!r}")
            mode = words[1]
        elif head == "ineq":
            body = stmt[len("ineq"):].strip()
            if ":" not in body:
                raise StateError(f"malformed ineq: {stmt!r}")
            label, t = body.split(":", 1)
            extra_texts[label.strip()] = t.strip()
        elif head == "use":
            if len(words) < 3 or not words[2].startswith("x"):
                raise StateError(f"malformed use: {stmt!r} "
                                 "(want: use LABEL xEXPR [reversed])")
            label = words[1]
            mult = eval_expr(words[2][1:], complete_bindings(bindings))
            reversed_flag = len(words) > 3 and words[3] == "reversed"
            table = kb()
            if label not in table:
                raise StateError(f"unknown relation {label!r} "
                                 "(is every required symbol bound?)")
            steps.append((table[label], mult, reversed_flag))
        elif head in ("expect", "expect-fail"):
            if len(words) != 2:
                raise StateError(f"malformed expect: {stmt!r}")
            label = words[1]
            table = kb()
            if label not in table:
                raise StateError(f"unknown target {label!r}")
            verdict = check_derivation(table[label], steps, mode)
            verdicts.append((head == "expect-fail", verdict))
            steps = []
        else:
            raise StateError(f"unknown statement {stmt!r}")
    all_ok = all(v.passed != ef for ef, v in verdicts)
    return ScriptResult(verdicts=tuple(verdicts), all_ok=all_ok)
