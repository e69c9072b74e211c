"""Exact-arithmetic lattice-expression calculus and regularity inference.

Expressions are products of generator powers and one Lebesgue factor,
kept in a canonical normal form over rationals (``fractions.Fraction``
everywhere; no floating point in this module):

* a plain factor is X^a (a > 0);
* a dualized factor is ((X^c)')^a, the c-th power dualized before the
  outer power is taken;
* the Lebesgue part is tracked as its L^1-mass: (L^t)^a carries mass a/t,
  factors merge by adding mass, and mass 0 is the elided L^infinity.

Canonicalization rewrites dualized factors toward base duals by
consuming Lebesgue mass through the convexity identity
X' = (X^c)'^{1/c} L^{1 - 1/c} (valid while c stays at or below the
declared convexity); partial mass consumption moves the inner exponent
as far toward 1 as the available mass allows.  This one rule reproduces
every expression identity used in the replayed derivations.  ``dual`` is
the Calderon-Lozanovsky duality: factorwise on unit-total forms, with a
single-generator absorb step (inner exponent A/(1-mass)) otherwise; it
is an involution on the supported fragment.

Regularity facts carry two nonnegative rational indices (the exponents
of the two bounded-maximal-ratio factors in the weight factorization)
and symbolic constant monomials c_i (s')^e whose only tracked content is
the rational growth exponent e.  Rules check their side conditions by
exact comparisons and raise RuleError naming the failed condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

from .errors import FormError, RuleError

Frac = Fraction


def _frac(x) -> Frac:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise FormError(f"exponents must be exact rationals, got {x!r}")


# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class Generator:
    """Abstract lattice symbol with declared convexity/concavity and axioms."""

    name: str
    convexity: Frac = Frac(2)
    concavity: Frac = Frac(2)
    attrs: frozenset = frozenset()

    def __post_init__(self):
        p, q = _frac(self.convexity), _frac(self.concavity)
        object.__setattr__(self, "convexity", p)
        object.__setattr__(self, "concavity", q)
        if not (1 < p <= q):
            raise FormError(f"generator {self.name} needs 1 < convexity <= concavity, got ({p}, {q})")
        object.__setattr__(self, "attrs", frozenset(self.attrs))


@dataclass(frozen=True)
class Factor:
    """One multiplicative factor: X^(inner*exp), or ((X^inner)')^exp when dualized."""

    gen: Generator
    exp: Frac
    dualized: bool = False
    inner: Frac = Frac(1)

    def render(self) -> str:
        e = "" if self.exp == 1 else f"^{self.exp}"
        if not self.dualized:
            return f"{self.gen.name}{e}"
        if self.inner == 1:
            return f"{self.gen.name}'{e}"
        return f"({self.gen.name}^{self.inner})'{e}"


@dataclass(frozen=True)
class LatticeExpr:
    """Canonical product of factors times a Lebesgue part of given L^1-mass."""

    factors: tuple = ()
    lmass: Frac = Frac(0)

    def render(self) -> str:
        parts = [f.render() for f in self.factors]
        if self.lmass > 0:
            t = 1 / self.lmass
            parts.append(f"L^{t}" if t != 1 else "L^1")
        return " * ".join(parts) if parts else "L^inf"

    def __str__(self):
        return self.render()


def gen_expr(gen: Generator, exp=1) -> LatticeExpr:
    return normalize(LatticeExpr(factors=(Factor(gen, _frac(exp)),)))


def lebesgue(t, exp=1) -> LatticeExpr:
    """The lattice (L^t)^exp, carried as L^1-mass exp/t; t may be the string 'inf'."""
    e = _frac(exp)
    if t in ("inf", None):
        return LatticeExpr()
    t = _frac(t)
    if t < 1:
        raise FormError(f"Lebesgue exponent must be >= 1, got {t}")
    return normalize(LatticeExpr(lmass=e / t))


def one() -> LatticeExpr:
    return LatticeExpr()


def product(*exprs: LatticeExpr) -> LatticeExpr:
    factors = []
    lmass = Frac(0)
    for e in exprs:
        factors.extend(e.factors)
        lmass += e.lmass
    return normalize(LatticeExpr(factors=tuple(factors), lmass=lmass))


def power(e: LatticeExpr, gamma) -> LatticeExpr:
    """Pointwise lattice power: exponents and mass scale by gamma > 0."""
    g = _frac(gamma)
    if g <= 0:
        raise FormError(f"lattice power needs gamma > 0, got {g}")
    return normalize(
        LatticeExpr(
            factors=tuple(replace(f, exp=f.exp * g) for f in e.factors),
            lmass=e.lmass * g,
        )
    )


def normalize(e: LatticeExpr) -> LatticeExpr:
    """Canonical form: fold, merge, sort, and reduce dual factors via mass.

    The reduction ((X^c)')^e L-mass -> ((X^c~)')^{ce/c~} with
    c~ = ce/(e + consumed mass) moves inner exponents toward 1, consuming
    e(c-1) mass for a full reduction; it applies while the inner exponent
    stays within the generator's declared convexity, in canonical factor
    order.  Idempotent by construction.
    """
    merged: dict = {}
    for f in e.factors:
        if f.exp == 0:
            continue
        if f.exp < 0:
            raise FormError(f"factor exponent must be positive, got {f.exp}")
        if not f.dualized and f.inner != 1:
            f = Factor(f.gen, f.exp * f.inner)
        key = (f.gen.name, f.dualized, f.inner)
        if key in merged:
            merged[key] = replace(merged[key], exp=merged[key].exp + f.exp)
        else:
            merged[key] = f
    if e.lmass < 0:
        raise FormError(f"Lebesgue mass must be nonnegative, got {e.lmass}")

    mass = e.lmass
    out = []
    for key in sorted(merged):
        f = merged[key]
        if f.dualized and f.inner > 1 and mass > 0 and f.inner <= f.gen.convexity:
            c, ex = f.inner, f.exp
            full_cost = ex * (c - 1)
            if mass >= full_cost:
                mass -= full_cost
                f = Factor(f.gen, ex * c, dualized=True, inner=Frac(1))
            else:
                c_new = c * ex / (ex + mass)
                f = Factor(f.gen, ex + mass, dualized=True, inner=c_new)
                mass = Frac(0)
        out.append(f)
    if mass > 1:
        raise FormError(f"total Lebesgue mass {mass} exceeds 1 (L^t needs t >= 1)")
    return LatticeExpr(factors=tuple(out), lmass=mass)


def dual(e: LatticeExpr) -> LatticeExpr:
    """Calderon-Lozanovsky order dual on the supported fragment (an involution)."""
    e = normalize(e)
    theta = sum((f.exp for f in e.factors), Frac(0))
    if theta <= 1 and e.lmass <= 1 - theta:
        new_factors = []
        for f in e.factors:
            if f.dualized:
                new_factors.append(Factor(f.gen, f.exp * f.inner))
            else:
                new_factors.append(Factor(f.gen, f.exp, dualized=True))
        return normalize(
            LatticeExpr(factors=tuple(new_factors), lmass=(1 - theta) - e.lmass)
        )
    if len(e.factors) == 1 and not e.factors[0].dualized:
        f = e.factors[0]
        if e.lmass >= 1:
            raise FormError(f"cannot dualize {e}: Lebesgue mass >= 1 beside a generator")
        inner = f.exp / (1 - e.lmass)
        if inner > f.gen.convexity:
            raise FormError(
                f"cannot dualize {e}: inner exponent {inner} exceeds declared "
                f"convexity {f.gen.convexity} of {f.gen.name}"
            )
        return normalize(
            LatticeExpr(
                factors=(Factor(f.gen, 1 - e.lmass, dualized=True, inner=inner),),
                lmass=Frac(0),
            )
        )
    raise FormError(f"dual unsupported for {e}: not a unit-sum form or single generator power")


def convexity(e: LatticeExpr) -> Frac:
    """Reciprocal-additive upper convexity estimate of a normal form.

    1/p = sum_i a_i / p_i + L-mass, where a plain factor contributes
    exp/convexity and a dualized factor ((X^c)')^a contributes
    a * (1 - c/concavity(X)) (the dual of a q/c-concave lattice is
    (q/c)'-convex).
    """
    e = normalize(e)
    total = e.lmass
    for f in e.factors:
        if not f.dualized:
            total += f.exp / f.gen.convexity
        else:
            q = f.gen.concavity
            if f.inner >= q:
                raise FormError(
                    f"dual factor {f.render()} needs inner exponent below concavity {q}"
                )
            total += f.exp * (1 - f.inner / q)
    if total == 0:
        raise FormError(f"{e} has no finite convexity bound")
    return 1 / total


# ---------------------------------------------------------------------------
# symbolic norm/constant monomials


@dataclass(frozen=True)
class BoundExpr:
    """Opaque monomial: product of named symbols to rational powers times (s')^growth."""

    symbols: tuple = ()  # ((name, power), ...) sorted, powers nonzero
    growth: Frac = Frac(0)

    @staticmethod
    def of(*names: str, growth=0) -> "BoundExpr":
        return BoundExpr(
            symbols=tuple(sorted((n, Frac(1)) for n in names)), growth=_frac(growth)
        )

    def _scaled(self, w: Frac) -> dict:
        return {n: p * w for n, p in self.symbols}

    def times(self, other: "BoundExpr") -> "BoundExpr":
        return self.mix(other, Frac(1), Frac(1))

    def squared(self) -> "BoundExpr":
        return self.mix(BoundExpr(), Frac(2), Frac(0))

    def mix(self, other: "BoundExpr", w1, w2) -> "BoundExpr":
        w1, w2 = _frac(w1), _frac(w2)
        acc = self._scaled(w1)
        for n, p in other._scaled(w2).items():
            acc[n] = acc.get(n, Frac(0)) + p
        syms = tuple(sorted((n, p) for n, p in acc.items() if p != 0))
        return BoundExpr(symbols=syms, growth=self.growth * w1 + other.growth * w2)

    def render(self) -> str:
        parts = [f"{n}" if p == 1 else f"{n}^{p}" for n, p in self.symbols]
        if self.growth != 0:
            parts.append(f"(s')^{self.growth}" if self.growth != 1 else "(s')")
        return "*".join(parts) if parts else "1"

    def __str__(self):
        return self.render()


def interp_norm_bound(b1: BoundExpr, b2: BoundExpr, theta) -> BoundExpr:
    """Geometric interpolation of two norm bounds: b1^theta * b2^(1-theta)."""
    th = _frac(theta)
    if not (0 <= th <= 1):
        raise RuleError(f"interpolation parameter must lie in [0, 1], got {th}")
    return b1.mix(b2, th, 1 - th)


# ---------------------------------------------------------------------------
# facts and rules


@dataclass(frozen=True)
class RegularityFact:
    """Assertion: every element of ``expr`` has a majorant in the (alpha, beta)
    factorization class, with class constant c_bound and norm constant m_bound."""

    expr: LatticeExpr
    alpha: Frac
    beta: Frac
    c_bound: BoundExpr = BoundExpr()
    m_bound: BoundExpr = BoundExpr()
    provenance: str = "axiom"

    def __post_init__(self):
        a, b = _frac(self.alpha), _frac(self.beta)
        if a < 0 or b < 0 or (a == 0 and b == 0):
            raise FormError(f"regularity indices must be nonnegative and not both 0: ({a}, {b})")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    def render(self) -> str:
        if self.beta == 0 and self.alpha == 1:
            cls = "A_1-regular"
        elif self.alpha == 1:
            cls = f"A_{self.beta + 1}-regular"
        else:
            cls = f"F({self.alpha},{self.beta})-regular"
        return f"{self.expr} is {cls}  [C ~ {self.c_bound}]"


@dataclass(frozen=True)
class OpBound:
    """Pseudo-premise: a linear operator is bounded on ``expr`` with bound ``bound``."""

    expr: LatticeExpr
    bound: BoundExpr
    provenance: str = "axiom"

    def render(self) -> str:
        return f"||T|| on {self.expr} <= {self.bound}"


def _need(cond: bool, what: str):
    if not cond:
        raise RuleError(f"side condition failed: {what}")


def _fact(premise, idx=0) -> RegularityFact:
    if not isinstance(premise, RegularityFact):
        raise RuleError(f"premise {idx} must be a regularity fact, got {type(premise).__name__}")
    return premise


def _has_fatou(e: LatticeExpr) -> bool:
    """Order duals always have the Fatou property; generators need the axiom flag."""
    return all(f.dualized or "fatou" in f.gen.attrs for f in e.factors)


def _rule_power(premises, gamma, **_):
    (f0,) = premises
    f0 = _fact(f0)
    g = _frac(gamma)
    _need(g > 0, "power exponent gamma > 0")
    return RegularityFact(
        power(f0.expr, g), f0.alpha * g, f0.beta * g, f0.c_bound, f0.m_bound, "power"
    )


def _rule_relax(premises, alpha, beta, **_):
    (f0,) = premises
    f0 = _fact(f0)
    a, b = _frac(alpha), _frac(beta)
    _need(a >= f0.alpha and b >= f0.beta, "relaxed indices dominate the premise indices")
    return RegularityFact(f0.expr, a, b, f0.c_bound, f0.m_bound, "relax")


def _rule_product(premises, **_):
    f0, f1 = (_fact(p, i) for i, p in enumerate(premises))
    return RegularityFact(
        product(f0.expr, f1.expr),
        f0.alpha + f1.alpha,
        f0.beta + f1.beta,
        f0.c_bound.times(f1.c_bound),
        f0.m_bound.times(f1.m_bound),
        "product",
    )


def _rule_max(premises, **_):
    """Join of two class members: same indices, constant at most doubled (alpha > 0)."""
    f0, f1 = (_fact(p, i) for i, p in enumerate(premises))
    _need(f0.alpha == f1.alpha and f0.beta == f1.beta, "matching indices for the join")
    doubling = BoundExpr.of("2") if f0.alpha > 0 else BoundExpr()
    return RegularityFact(
        f0.expr,
        f0.alpha,
        f0.beta,
        f0.c_bound.times(f1.c_bound).times(doubling),
        f0.m_bound.times(f1.m_bound),
        "max",
    )


def _rule_duality(premises, **_):
    (f0,) = premises
    f0 = _fact(f0)
    _need(f0.alpha > 1, "duality needs alpha > 1")
    _need(f0.beta >= 0, "duality needs beta >= 0")
    _need(_has_fatou(f0.expr), "duality needs the Fatou property on the expression")
    return RegularityFact(
        dual(f0.expr), f0.beta + 1, f0.alpha - 1, f0.c_bound, f0.m_bound, "duality"
    )


def _rule_divisibility(premises, x_expr, **_):
    f_xy, f_y = (_fact(p, i) for i, p in enumerate(premises))
    _need(_has_fatou(x_expr) and _has_fatou(f_y.expr), "divisibility needs Fatou lattices")
    _need(
        product(x_expr, f_y.expr) == f_xy.expr,
        "first premise must live on the product of x_expr and the second premise",
    )
    return RegularityFact(
        x_expr,
        f_xy.alpha + f_y.beta,
        f_xy.beta + f_y.alpha,
        f_xy.c_bound.times(f_y.c_bound),
        f_xy.m_bound.times(f_y.m_bound),
        "divisibility",
    )


def _rule_aptoconj(premises, x_expr, norming_pairs=(), **_):
    (f_y,) = premises
    f_y = _fact(f_y)
    _need(f_y.alpha == 1 and f_y.beta > 0, "premise must be A_p-regular with p > 1")
    granted = (f_y.expr, x_expr) in tuple(norming_pairs) or _has_fatou(x_expr)
    _need(granted, "norming relation between the premise lattice and x_expr")
    p = f_y.beta + 1
    return RegularityFact(
        power(x_expr, 1 / p), Frac(1), Frac(0), f_y.c_bound, f_y.m_bound, "aptoconj"
    )


def _rule_a2rdiv(premises, **_):
    (f_z,) = premises
    f_z = _fact(f_z)
    _need(f_z.alpha == 1 and f_z.beta == 1, "premise must be A_2-regular")
    expr = product(power(f_z.expr, Frac(1, 2)), lebesgue(1, Frac(1, 2)))
    return RegularityFact(expr, Frac(1), Frac(0), f_z.c_bound, f_z.m_bound, "a2rdiv")


def _rule_a1apt(premises, delta, **_):
    f_x, f_xd = (_fact(p, i) for i, p in enumerate(premises))
    d = _frac(delta)
    _need(0 < d, "delta > 0")
    _need(f_x.alpha == 1, "first premise must be A_p-regular")
    _need(f_xd.alpha == 1 and f_xd.beta == 0, "second premise must be A_1-regular")
    _need(power(f_x.expr, d) == f_xd.expr, "second premise lattice must be the delta-th power")
    return RegularityFact(
        f_x.expr,
        Frac(1),
        Frac(0),
        f_x.c_bound.times(f_xd.c_bound),
        f_x.m_bound.times(f_xd.m_bound),
        "a1apt",
    )


def _rule_ainfainf(premises, which="primal", norming_pairs=(), **_):
    f_x, f_xd = (_fact(p, i) for i, p in enumerate(premises))
    _need(f_x.alpha == 1 and f_x.beta >= 0, "first premise must be A_p-regular")
    _need(f_xd.alpha == 1 and f_xd.beta >= 0, "second premise must be A_p-regular")
    _need(dual(f_x.expr) == f_xd.expr, "premises must live on a lattice and its order dual")
    granted = (f_xd.expr, f_x.expr) in tuple(norming_pairs) or _has_fatou(f_x.expr)
    _need(granted, "the dual must be norming for the primal")
    target = f_x if which == "primal" else f_xd
    other = f_xd if which == "primal" else f_x
    return RegularityFact(
        target.expr,
        Frac(1),
        Frac(0),
        target.c_bound.times(other.c_bound),
        target.m_bound.times(other.m_bound),
        "ainfainf",
    )


def _rule_aregrh(premises, rho, **_):
    (f0,) = premises
    f0 = _fact(f0)
    r = _frac(rho)
    _need(f0.alpha == 1, "premise must be A_p-regular")
    _need(r > 1, "power exponent rho > 1")
    return RegularityFact(
        power(f0.expr, r), f0.alpha, f0.beta, f0.c_bound, f0.m_bound, "aregrh"
    )


def _rule_l1clp(premises, theta, **_):
    (f0,) = premises
    f0 = _fact(f0)
    th = _frac(theta)
    _need(0 < th < 1, "theta in (0, 1)")
    expr = product(power(f0.expr, th), lebesgue(1, 1 - th))
    return RegularityFact(expr, f0.alpha, f0.beta, f0.c_bound, f0.m_bound, "l1clp")


def _rule_rh_power_relax(premises, s, **_):
    """Endgame composite: an A_2-regular lattice whose class constant grows
    like (s')^g with g < 1 admits a reverse-Hoelder power exponent
    rho = 1 + 1/(c_4 (s')^g) exceeding s for s close to 1 (the exact
    threshold s' - 1 > c_4 (s')^g), so the s-th power [(.)^rho]^{s/rho}
    stays A_2-regular after an index relaxation with s/rho < 1."""
    (f0,) = premises
    f0 = _fact(f0)
    sv = _frac(s)
    _need(f0.alpha == 1 and f0.beta == 1, "premise must be A_2-regular")
    _need(sv > 1, "power exponent s > 1")
    g = f0.c_bound.growth
    _need(0 <= g < 1, f"constant growth exponent {g} must stay below 1")
    return RegularityFact(
        power(f0.expr, sv),
        Frac(1),
        Frac(1),
        f0.c_bound.times(BoundExpr.of("c_4")),
        f0.m_bound,
        "rh-power-relax",
    )


def lozanovsky_substitute(expr: LatticeExpr, z_expr: LatticeExpr, theta) -> LatticeExpr:
    """Replace the z^theta (z')^theta factor pair by Lebesgue mass theta.

    The factorization L^1 = Z Z' makes the two sides equal lattices; the
    rewrite fails with RuleError when the pair is not present.
    """
    th = _frac(theta)
    want = product(power(z_expr, th), power(dual(z_expr), th))
    have = normalize(expr)
    remaining = {((f.gen.name, f.dualized, f.inner)): f for f in have.factors}
    for f in want.factors:
        key = (f.gen.name, f.dualized, f.inner)
        if key not in remaining or remaining[key].exp < f.exp:
            raise RuleError(f"factor pair {want} not present in {expr}")
        newexp = remaining[key].exp - f.exp
        if newexp == 0:
            del remaining[key]
        else:
            remaining[key] = replace(remaining[key], exp=newexp)
    rest = LatticeExpr(
        factors=tuple(remaining.values()), lmass=have.lmass - want.lmass
    )
    return normalize(LatticeExpr(factors=rest.factors, lmass=rest.lmass + th))


def _rule_lozanovsky(premises, z_expr, theta, **_):
    (f0,) = premises
    f0 = _fact(f0)
    return RegularityFact(
        lozanovsky_substitute(f0.expr, z_expr, theta),
        f0.alpha,
        f0.beta,
        f0.c_bound,
        f0.m_bound,
        "lozanovsky",
    )


def _op_bound(premise, idx=0) -> OpBound:
    if not isinstance(premise, OpBound):
        raise RuleError(f"premise {idx} must be an operator bound, got {type(premise).__name__}")
    return premise


def _rule_btsb(premises, y_expr, **_):
    """Norm-controlled majorant axiom + lower-bound estimate: dual is A_2-regular.

    The operator must be bounded on the half power of y_expr; the class
    constant grows like the squared operator bound.
    """
    (ob,) = premises
    ob = _op_bound(ob)
    _need(ob.expr == power(y_expr, Frac(1, 2)), "operator bound must live on y_expr^(1/2)")
    grothendieck = BoundExpr.of("C_G")
    return RegularityFact(
        dual(y_expr),
        Frac(1),
        Frac(1),
        grothendieck.times(ob.bound).squared(),
        BoundExpr.of("2"),
        "btsb",
    )


def _rule_btsbge(premises, y_expr, **_):
    """As btsb, but the premise list also carries an (alpha, 1) fact on the dual,
    which pins the doubling of the majorant inverses; conclusion constant is
    the squared operator bound times an absolute factor."""
    ob, f_reg = premises
    ob = _op_bound(ob, 0)
    f_reg = _fact(f_reg, 1)
    _need(ob.expr == power(y_expr, Frac(1, 2)), "operator bound must live on y_expr^(1/2)")
    _need(f_reg.expr == dual(y_expr), "regularity premise must live on the dual of y_expr")
    _need(f_reg.alpha > 0 and f_reg.beta == 1, "regularity premise must have indices (alpha, 1)")
    return RegularityFact(
        dual(y_expr),
        Frac(1),
        Frac(1),
        BoundExpr.of("C_2").times(ob.bound).squared(),
        BoundExpr.of("m_2"),
        "btsbge",
    )


def _rule_themcr2(premises, which="dual", **_):
    """Bounded singular operator on a 2-convex lattice forces maximal-operator
    regularity of the lattice and its dual; constants grow like the square
    of the operator bound."""
    (ob,) = premises
    ob = _op_bound(ob)
    _need(convexity(ob.expr) >= 2, "lattice must be 2-convex")
    target = dual(ob.expr) if which == "dual" else normalize(ob.expr)
    return RegularityFact(
        target, Frac(1), Frac(0), ob.bound.squared(), BoundExpr.of("m"), "themcr2"
    )


RULES = {
    "power": _rule_power,
    "relax": _rule_relax,
    "product": _rule_product,
    "max": _rule_max,
    "duality": _rule_duality,
    "divisibility": _rule_divisibility,
    "aptoconj": _rule_aptoconj,
    "a2rdiv": _rule_a2rdiv,
    "a1apt": _rule_a1apt,
    "ainfainf": _rule_ainfainf,
    "aregrh": _rule_aregrh,
    "l1clp": _rule_l1clp,
    "rh-power-relax": _rule_rh_power_relax,
    "lozanovsky": _rule_lozanovsky,
    "btsb": _rule_btsb,
    "btsbge": _rule_btsbge,
    "themcr2": _rule_themcr2,
}


def apply_rule(premises, rule: str, **params):
    """Apply a named inference rule to premise facts, checking side conditions."""
    if rule not in RULES:
        raise RuleError(f"unknown rule {rule!r}")
    return RULES[rule](tuple(premises), **params)


# ---------------------------------------------------------------------------
# derivation traces and replay scripts


@dataclass
class TraceStep:
    index: int
    rule: str
    premises: tuple
    statement: str
    ok: bool
    detail: str = ""
    fact: object = None

    def render(self) -> str:
        src = f"  [rule {self.rule}"
        if self.premises:
            src += " from " + ", ".join(f"#{i}" for i in self.premises)
        src += "]"
        flag = "" if self.ok else "  ** FAILED: " + self.detail
        return f"#{self.index}: {self.statement}{src}{flag}"


@dataclass
class DerivationTrace:
    name: str
    steps: list = field(default_factory=list)
    values: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return bool(self.steps) and all(s.ok for s in self.steps)

    @property
    def final_fact(self):
        for s in reversed(self.steps):
            if s.ok and isinstance(s.fact, RegularityFact):
                return s.fact
        return None

    def render(self) -> str:
        head = [f"derivation {self.name}"]
        if self.values:
            head.append("  values: " + ", ".join(f"{k} = {v}" for k, v in self.values.items()))
        return "\n".join(head + [s.render() for s in self.steps])

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "ok": self.ok,
            "values": {k: str(v) for k, v in self.values.items()},
            "steps": [
                {
                    "index": s.index,
                    "rule": s.rule,
                    "premises": list(s.premises),
                    "statement": s.statement,
                    "ok": s.ok,
                    "detail": s.detail,
                }
                for s in self.steps
            ],
        }


class _Halt(Exception):
    """Internal control flow: a step failed; the trace stops there."""

    def __init__(self, trace):
        super().__init__(f"derivation {trace.name} halted")
        self.trace = trace


class _TraceBuilder:
    def __init__(self, name):
        self.trace = DerivationTrace(name=name)

    def _push(self, rule, premises, statement, ok=True, detail="", fact=None):
        idx = len(self.trace.steps) + 1
        self.trace.steps.append(
            TraceStep(idx, rule, tuple(premises), statement, ok, detail, fact)
        )
        return idx

    def axiom(self, fact, note=""):
        label = fact.render() if hasattr(fact, "render") else str(fact)
        if note:
            label += f"  ({note})"
        return self._push("axiom", (), label, fact=fact)

    def rule(self, rule, premise_ids, **params):
        premises = [self.trace.steps[i - 1].fact for i in premise_ids]
        try:
            fact = apply_rule(premises, rule, **params)
        except (RuleError, FormError) as exc:
            self._push(rule, premise_ids, f"apply {rule}", ok=False, detail=str(exc))
            raise _Halt(self.trace) from exc
        return self._push(rule, premise_ids, fact.render(), fact=fact)

    def check(self, rule, statement, condition, detail=""):
        if not condition:
            self._push(rule, (), statement, ok=False, detail=detail or "exact check failed")
            raise _Halt(self.trace)
        return self._push(rule, (), statement)

    def identity(self, lhs: LatticeExpr, rhs: LatticeExpr, note=""):
        try:
            okay = normalize(lhs) == normalize(rhs)
            stmt = f"{lhs} = {rhs}" + (f"  ({note})" if note else "")
        except FormError as exc:
            self._push("identity", (), "expression identity", ok=False, detail=str(exc))
            raise _Halt(self.trace) from exc
        if not okay:
            self._push("identity", (), stmt, ok=False, detail="normal forms differ")
            raise _Halt(self.trace)
        return self._push("identity", (), stmt)

    def transfer(self, fact_id, expr: LatticeExpr, identity_id):
        old = self.trace.steps[fact_id - 1].fact
        fact = RegularityFact(
            normalize(expr), old.alpha, old.beta, old.c_bound, old.m_bound, "transfer"
        )
        return self._push("transfer", (fact_id, identity_id), fact.render(), fact=fact)


def main_chain_exponents(p, s=None) -> dict:
    """The exact rational exponent bookkeeping of the endgame derivation.

    r = (1+p)/2, p_Y = 4p/(3p+1), t = p_Y', and u = (2-r)/(1/s' + 1/t)
    for the working value s (default: s = p_Y, where u = t(3-p)/4).
    """
    p = _frac(p)
    if not (1 < p <= 2):
        raise RuleError(f"the derivation needs 1 < p <= 2, got {p}")
    r = (1 + p) / 2
    p_y = 4 * p / (3 * p + 1)
    t = p_y / (p_y - 1)
    s = p_y if s is None else _frac(s)
    if not (1 < s <= p_y):
        raise RuleError(f"s must lie in (1, p_Y], got {s}")
    sp = s / (s - 1)
    u = (2 - r) / (1 / sp + 1 / t)
    return {"r": r, "p_Y": p_y, "t": t, "s": s, "s'": sp, "u": u}


def _script_themcr2(_params) -> DerivationTrace:
    tb = _TraceBuilder("themcr2")
    x = Generator("X", convexity=2, concavity=2, attrs=frozenset({"fatou", "order_continuous"}))
    xe = gen_expr(x)
    y = power(xe, 2)
    i_ob = tb.axiom(
        OpBound(power(y, Frac(1, 2)), BoundExpr.of("c_T")),
        "T bounded on the half power of Y = X^2; T and T* lower-bounded off support",
    )
    i_a2 = tb.rule("btsb", [i_ob], y_expr=y)
    i_x = tb.rule("aptoconj", [i_a2], x_expr=y)
    i_zr = tb.rule("a2rdiv", [i_a2])
    lhs = product(power(dual(y), Frac(1, 2)), lebesgue(1, Frac(1, 2)))
    i_id = tb.identity(lhs, dual(xe), "half power of the dual against the dual lattice")
    tb.transfer(i_zr, dual(xe), i_id)
    return tb.trace


def _script_frdiv(params) -> DerivationTrace:
    a1 = _frac(params.get("alpha1", 2))
    b1 = _frac(params.get("beta1", 0))
    a0 = _frac(params.get("alpha0", 1))
    b0 = _frac(params.get("beta0", 0))
    r = _frac(params.get("r", Frac(3, 2)))
    tb = _TraceBuilder("frdiv-from-duality")
    tb.trace.values.update({"alpha1": a1, "beta1": b1, "alpha0": a0, "beta0": b0, "r": r})

    tb.check("convexity", f"r-convexity admissible: alpha0*r = {a0 * r} > 1", a0 * r > 1)
    tb.check(
        "convexity",
        f"r-convexity admissible: (alpha1+beta0)*r = {(a1 + b0) * r} > 1",
        (a1 + b0) * r > 1,
    )
    q = max(r, 2) * 2
    x = Generator("X", convexity=r, concavity=q, attrs=frozenset({"fatou"}))
    yg = Generator("Y", convexity=r, concavity=q, attrs=frozenset({"fatou"}))
    xe, ye = gen_expr(x), gen_expr(yg)
    f_xy = tb.axiom(RegularityFact(product(xe, ye), a1, b1, BoundExpr.of("C_XY"), BoundExpr.of("m_XY")))
    f_y = tb.axiom(RegularityFact(ye, a0, b0, BoundExpr.of("C_Y"), BoundExpr.of("m_Y")))

    s1 = tb.rule("power", [f_xy], gamma=r)
    s1b = tb.rule("power", [s1], gamma=Frac(1, 2))
    s2 = tb.rule("power", [f_y], gamma=r)
    s3 = tb.rule("duality", [s2])
    s4 = tb.rule("power", [s3], gamma=Frac(1, 2))
    s5 = tb.rule("product", [s1b, s4])
    s6 = tb.rule("lozanovsky", [s5], z_expr=power(ye, r), theta=Frac(1, 2))
    s7 = tb.rule("duality", [s6])
    s8 = tb.rule("power", [s7], gamma=2)
    s9 = tb.rule("duality", [s8])
    s10 = tb.rule("power", [s9], gamma=1 / r)
    final = tb.trace.steps[s10 - 1].fact
    tb.check(
        "conclusion",
        f"indices equal (alpha1+beta0, beta1+alpha0) = ({a1 + b0}, {b1 + a0})",
        final.alpha == a1 + b0 and final.beta == b1 + a0 and final.expr == xe,
    )
    return tb.trace


def _script_main_chain(params) -> DerivationTrace:
    p = _frac(params.get("p", 2))
    vals = main_chain_exponents(p)
    r, p_y, t, s, sp, u = (vals[k] for k in ("r", "p_Y", "t", "s", "s'", "u"))
    tb = _TraceBuilder("main-chain")
    tb.trace.values.update(vals)

    x = Generator("X", convexity=p, concavity=2, attrs=frozenset({"fatou"}))
    xe = gen_expr(x)
    y = product(power(xe, r), lebesgue(sp))

    tb.check("exponents", f"r = (1+p)/2 = {r} < p", r < p)
    tb.check("exponents", f"t = p_Y' = {t} >= 8/(3-p) = {8 / (3 - p)}", t >= 8 / (3 - p))
    tb.identity(
        y,
        product(power(power(xe, r * s), 1 / s), lebesgue(1, 1 - 1 / s)),
        "Lebesgue-mass split of Y",
    )
    p1 = convexity(y)
    tb.check(
        "convexity",
        f"p_1 = (r/p + 1/s')^-1 = {p1} >= p_Y = {p_y}",
        p1 == 1 / (r / p + 1 / sp) and p1 >= p_y,
    )

    ob_x = OpBound(xe, BoundExpr.of("c_X"))
    ob_lt = OpBound(lebesgue((2 - r) * sp), BoundExpr.of("c_L", growth=1))
    tb.axiom(ob_x, "hypothesis: T bounded on the base lattice")
    tb.axiom(ob_lt, "Lebesgue bound with norm growing linearly in the exponent")
    half_y = power(y, Frac(1, 2))
    tb.identity(
        half_y,
        product(power(xe, r / 2), lebesgue((2 - r) * sp, 1 - r / 2)),
        "half power of Y as an interpolation pair",
    )
    b_half = interp_norm_bound(BoundExpr.of("c_X"), BoundExpr.of("c_L", growth=1), r / 2)
    i_tm = tb.axiom(
        OpBound(half_y, b_half),
        f"interpolated bound, growth exponent 1 - r/2 = {1 - r / 2}",
    )
    tb.check("growth", f"growth of ||T|| on Y^(1/2) is 1 - r/2 = {1 - r / 2}", b_half.growth == 1 - r / 2)

    tb.check(
        "exponents",
        f"2 <= t(3-p)/4 = {t * (3 - p) / 4} <= u = {u} <= t(3-p)/2 = {t * (3 - p) / 2} <= t = {t}",
        2 <= t * (3 - p) / 4 <= u <= t * (3 - p) / 2 <= t,
    )
    e_mixed = product(half_y, lebesgue(t, Frac(1, 2)))
    tb.identity(
        e_mixed,
        product(power(xe, r / 2), lebesgue(u, 1 - r / 2)),
        "mixing with L^t lands on a uniformly bounded Lebesgue exponent",
    )
    b_mixed = interp_norm_bound(BoundExpr.of("c_X"), BoundExpr.of("c_u"), r / 2)
    i_c1 = tb.axiom(
        OpBound(e_mixed, b_mixed),
        "interpolated bound c_1 independent of s (T uniformly bounded on L^u)",
    )
    tb.check("growth", "c_1 carries no growth in s'", b_mixed.growth == 0)
    tb.check("convexity", f"p_2 = convexity = {convexity(e_mixed)} = 2", convexity(e_mixed) == 2)

    i_m2 = tb.rule("themcr2", [i_c1], which="dual")
    i_sq = tb.rule("power", [i_m2], gamma=2)
    tb.identity(
        power(dual(e_mixed), 2),
        product(dual(y), lebesgue(t / (t - 1))),
        "squared dual against Y' L^{t'}",
    )
    i_lt = tb.axiom(
        RegularityFact(lebesgue(t / (t - 1)), 1, 0, BoundExpr.of("c_M"), BoundExpr.of("2")),
        "Lebesgue lattices carry maximal-operator majorants",
    )
    i_f21 = tb.rule("divisibility", [i_sq, i_lt], x_expr=dual(y))
    tb.check(
        "conclusion",
        f"{dual(y)} is F(2,1)-regular",
        tb.trace.steps[i_f21 - 1].fact.alpha == 2 and tb.trace.steps[i_f21 - 1].fact.beta == 1,
    )

    i_a2 = tb.rule("btsbge", [i_tm, i_f21], y_expr=y)
    c3 = tb.trace.steps[i_a2 - 1].fact.c_bound
    tb.check(
        "growth",
        f"A_2 constant of {dual(y)} grows like (s')^(2-r), exponent {c3.growth}",
        c3.growth == 2 - r,
    )
    tb.check(
        "growth-threshold",
        "reverse-Hoelder power rho = 1 + 1/(c_4 (s')^(2-r)) beats s: "
        f"s' - 1 > c_4 (s')^(2-r) for large s' since 2 - r = {2 - r} < 1",
        2 - r < 1,
    )
    i_pw = tb.rule("rh-power-relax", [i_a2], s=s)
    tb.identity(
        power(dual(y), s),
        dual(power(xe, r * s)),
        "the s-th power of the dual is the dual of the rs-th power",
    )
    i_fin = tb.rule("l1clp", [i_pw], theta=1 / (r * s))
    final = tb.trace.steps[i_fin - 1].fact
    tb.check(
        "conclusion",
        f"final lattice {final.expr} equals X' and is A_2-regular",
        final.expr == dual(xe) and final.alpha == 1 and final.beta == 1,
    )
    return tb.trace


_SCRIPTS = {
    "themcr2": _script_themcr2,
    "frdiv-from-duality": _script_frdiv,
    "main-chain": _script_main_chain,
}


def replay(script: str, **params) -> DerivationTrace:
    """Re-derive a named chain step by step; a failing step halts the trace,
    which is returned with the failure recorded (trace.ok is False)."""
    if script not in _SCRIPTS:
        raise RuleError(f"unknown derivation script {script!r}; have {sorted(_SCRIPTS)}")
    try:
        return _SCRIPTS[script](params)
    except _Halt as halt:
        return halt.trace
