"""Closed-form recovery expressions for the potential-outcome law.

Each evaluator reads the *observable* law only. Every probability lookup goes
through :class:`ObservedQueries`, which refuses any event that fixes the value
of an incomplete variable without also fixing its indicator at 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .tabular import MISSING, POSITIVITY_EPS, PositivityError, TabularLaw, assignments


class ObservabilityError(AssertionError):
    """A formula tried to look at a value that is not observable."""


@dataclass(frozen=True)
class Roles:
    x: str = "X"
    y: str = "Y"
    z1: tuple = ("Z1",)
    z2: tuple = ("Z2",)
    z3: tuple = ()
    indicators: dict = field(default_factory=dict)  # variable -> indicator name

    def ind(self, v):
        return self.indicators.get(v, f"M_{v}")


class ObservedQueries:
    def __init__(self, law: TabularLaw, roles: Roles):
        self.law = law
        self.roles = roles
        present = set(law.variables)
        self.proxy = {
            v: roles.ind(v)
            for v in (roles.x, roles.y, *roles.z1, *roles.z2, *roles.z3)
            if roles.ind(v) in present
        }
        self.lookups = 0

    def zero(self, *variables) -> dict:
        """The event {M_v = 0} for those of ``variables`` that can be missing."""
        return {self.proxy[v]: 0 for v in variables if v in self.proxy}

    def _check(self, event):
        for v, val in event.items():
            if v in self.proxy:
                if val == MISSING:
                    continue
                if event.get(self.proxy[v]) != 0:
                    raise ObservabilityError(
                        f"lookup fixes {v}={val} without {self.proxy[v]}=0"
                    )

    def p(self, event) -> float:
        self._check(event)
        self.lookups += 1
        return self.law.prob(event)

    def c(self, target, given) -> float:
        self._check({**given, **target})
        self.lookups += 1
        return self.law.cond(target, given)


def _div(num, den, what):
    if den < POSITIVITY_EPS:
        raise PositivityError(f"{what} is not positive ({den:.3g})")
    return num / den


def _all_vars(r: Roles):
    return (r.x, r.y, *r.z1, *r.z2, *r.z3)


def po_A(law, roles: Roles, x: int, y: int = 1) -> float:
    q = ObservedQueries(law, roles)
    r = roles
    m0 = q.zero(*_all_vars(r))
    total = 0.0
    for z1 in assignments(r.z1):
        for z2 in assignments(r.z2):
            z = {**z1, **z2}
            total += (
                q.c({r.y: y}, {r.x: x, **z, **m0})
                * q.p({**z1, **q.zero(*r.z1)})
                * q.c(z2, {**z1, **q.zero(*r.z1, *r.z2)})
            )
    return total


def po_B(law, roles: Roles, x: int, y: int = 1) -> float:
    q = ObservedQueries(law, roles)
    r = roles
    m0 = q.zero(*_all_vars(r))
    mxz = q.zero(r.x, *r.z1, *r.z2)
    total = 0.0
    for z1 in assignments(r.z1):
        for z2 in assignments(r.z2):
            z = {**z1, **z2}
            weight = 0.0
            for xp in (0, 1):
                num = q.p({r.x: xp, **z, **mxz})
                den = q.c(q.zero(*r.z2), {r.x: xp, **z1, **q.zero(r.x, *r.z1)}) * q.c(
                    q.zero(r.x), {**z, **q.zero(*r.z1, *r.z2)}
                )
                weight += _div(num, den, f"indicator factor at x'={xp}, {z}")
            total += q.c({r.y: y}, {r.x: x, **z, **m0}) * weight
    return total


def _pm0_C(q: ObservedQueries, r: Roles, x, y, z1, z2) -> float:
    """P(m = 0 | x, y, z1, z2) as a product of three observable factors."""
    z = {**z1, **z2}
    base = q.zero(*r.z1)
    return (
        q.c(q.zero(r.y), {r.x: x, **z, **base, **q.zero(r.x, *r.z2)})
        * q.c(q.zero(r.x), {r.y: y, **z, **base, **q.zero(r.y, *r.z2)})
        * q.c(q.zero(*r.z2), {r.x: x, r.y: y, **z1, **base, **q.zero(r.x, r.y)})
    )


def _inv_px_given_z_C(q, r, x, z1, z2, literal=False) -> float:
    """1 / P(x | z1, z2).  ``literal`` reproduces a printed variant in which the
    joint term of the numerator keeps ``x`` instead of the summation index."""
    z = {**z1, **z2}
    m0 = q.zero(*_all_vars(r))

    def J(xv, yv, xjoint=None):
        xj = xv if xjoint is None else xjoint
        return _div(q.p({r.x: xj, r.y: yv, **z, **m0}), _pm0_C(q, r, xv, yv, z1, z2),
                    f"P(m=0 | x={xv}, y={yv}, {z})")

    num = sum(J(xp, ypp, x if literal else None) for xp in (0, 1) for ypp in (0, 1))
    den = sum(J(x, yp) for yp in (0, 1))
    return _div(num, den, f"normalizer at x={x}, {z}")


def po_C(law, roles: Roles, x: int, y: int = 1, literal: bool = False) -> float:
    q = ObservedQueries(law, roles)
    r = roles
    m0 = q.zero(*_all_vars(r))
    total = 0.0
    for z1 in assignments(r.z1):
        for z2 in assignments(r.z2):
            z = {**z1, **z2}
            base = q.zero(*r.z1)
            num = q.c({r.y: y}, {r.x: x, **z, **m0}) * q.p(
                {r.x: x, **z, **base, **q.zero(r.x, *r.z2)}
            )
            den = q.c(q.zero(*r.z2), {r.x: x, r.y: y, **z1, **base, **q.zero(r.x, r.y)}) * q.c(
                q.zero(r.x), {r.y: y, **z, **base, **q.zero(r.y, *r.z2)}
            )
            total += _div(num, den, f"indicator factor at {z}") * _inv_px_given_z_C(q, r, x, z1, z2, literal)
    return total


def po_Dpp(law, roles: Roles, x: int, y: int = 1) -> float:
    q = ObservedQueries(law, roles)
    r = roles
    m0 = q.zero(*_all_vars(r))
    base = q.zero(*r.z1)
    total = 0.0
    for z1 in assignments(r.z1):
        for z2 in assignments(r.z2):
            for z3 in assignments(r.z3):
                z = {**z1, **z2, **z3}
                num = (
                    q.c({r.y: y}, {r.x: x, **z, **m0})
                    * q.c(z2, {**z1, **z3, **base, **q.zero(*r.z2, *r.z3)})
                    * q.p({**z1, **z3, **base, **q.zero(*r.z3)})
                )
                den = q.c(q.zero(*r.z3), {**z1, **z2, **base, **q.zero(*r.z2)})
                total += _div(num, den, f"P(m_Z3=0 | {z1}, {z2}, m_Z2=0)")
    return total


def _ace(po, law, roles, **kw):
    return po(law, roles, 1, **kw) - po(law, roles, 0, **kw)


def recoverable_ace_A(law: TabularLaw, roles: Roles = Roles()) -> float:
    return _ace(po_A, law, roles)


def recoverable_ace_B(law: TabularLaw, roles: Roles = Roles()) -> float:
    return _ace(po_B, law, roles)


def recoverable_ace_C(law: TabularLaw, roles: Roles = Roles(), literal: bool = False) -> float:
    return _ace(po_C, law, roles, literal=literal)


def recoverable_ace_Dpp(law: TabularLaw, roles: Roles = Roles(z3=("Z3",))) -> float:
    if not roles.z3:
        raise ValueError("the D'' expression needs a non-empty Z3 group")
    return _ace(po_Dpp, law, roles)


FORMULAS = {
    "A": recoverable_ace_A,
    "B": recoverable_ace_B,
    "C": recoverable_ace_C,
    "Dpp": recoverable_ace_Dpp,
}
