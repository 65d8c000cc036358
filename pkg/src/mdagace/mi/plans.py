"""Imputation plans for the six MI strategies.

A plan holds one univariate model per incomplete variable. Product terms are
recomputed from the current completed values every time a design matrix is
built, which is what makes the passive updating "improved".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations

from ..models import Family, ModelSpec, term_label


class Variant(str, Enum):
    SIM = "MI-Sim"
    EO = "MI-EO"
    EI = "MI-EI"
    EC = "MI-EC"
    COM = "MI-Com"
    SMC = "MI-SMC"

    @classmethod
    def parse(cls, s) -> "Variant":
        if isinstance(s, cls):
            return s
        key = str(s).strip().lower().replace("_", "-")
        if not key.startswith("mi-"):
            key = "mi-" + key
        for v in cls:
            if v.value.lower() == key:
                return v
        raise ValueError(f"unknown MI variant {s!r}; expected one of {[v.value for v in cls]}")


MI_VARIANTS = tuple(Variant)
DEFAULT_ORDER = ("C4", "C5", "X", "Y")


class PlanError(ValueError):
    pass


@dataclass
class ImputationPlan:
    variant: Variant
    models: dict  # target -> ModelSpec
    order: tuple
    T: int = 5
    m: int = 5
    substantive: ModelSpec | None = None
    exposure: str = "X"
    reasons: dict = field(default_factory=dict)  # target -> {term label: why}

    def __post_init__(self):
        if self.T < 1 or self.m < 1:
            raise PlanError("T and m must be positive")
        for v in self.order:
            if v not in self.models:
                raise PlanError(f"no univariate model for {v}")

    @property
    def passive_terms(self) -> list:
        """Derived product columns refreshed after every univariate step."""
        out = []
        specs = list(self.models.values()) + ([self.substantive] if self.substantive else [])
        for spec in specs:
            for t in spec.terms:
                if len(t) > 1 and term_label(t) not in out:
                    out.append(term_label(t))
        return out

    def explain(self) -> str:
        lines = [f"variant {self.variant.value}: m={self.m}, T={self.T}, visit order {', '.join(self.order)}"]
        if self.substantive is not None:
            lines.append(f"  substantive model: {self.substantive}")
        for v in self.order:
            spec = self.models[v]
            kind = "logistic" if spec.family is Family.BINOMIAL else "linear"
            lines.append(f"  {v} ({kind}): {spec}")
            for t, why in self.reasons.get(v, {}).items():
                lines.append(f"      {t}: {why}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value, "m": self.m, "T": self.T, "order": list(self.order),
            "models": {v: self.models[v].formula() for v in self.order},
            "substantive": self.substantive.formula() if self.substantive else None,
            "passive": self.passive_terms,
        }


def _mains(spec: ModelSpec) -> list:
    out = []
    for t in spec.terms:
        for c in t:
            if c not in out:
                out.append(c)
    return out


def _com_terms(target, outcome: ModelSpec, exposure):
    """Two-way terms of the full conditional of ``target`` implied by a
    linear outcome model, truncated at second order.

    Outcome target: the outcome model's own terms. Covariate target v: with
    b = sum of outcome terms containing v divided by v, the log conditional
    gains Y*b (outcome-covariate and exposure-outcome products), the two-way
    outcome terms free of v (cross terms with b's constant), and products of
    pairs inside b (from b squared).
    """
    y = outcome.response
    terms = {}
    if target == y:
        for t in outcome.terms:
            if len(t) == 2:
                terms[t] = "term of the outcome model"
        return terms
    partners = []
    for t in outcome.terms:
        if target in t:
            rest = tuple(c for c in t if c != target)
            if len(rest) == 1:
                partners.append(rest[0])
    for p in partners:
        why = "exposure-outcome" if exposure in (p, y) else "outcome-covariate"
        terms[tuple(sorted((p, y)))] = f"{why}: outcome model has {term_label(tuple(sorted((p, target))))}"
    for t in outcome.terms:
        if len(t) == 2 and target not in t:
            terms.setdefault(t, "two-way term of the outcome model")
    for a, b in combinations(partners, 2):
        terms.setdefault(tuple(sorted((a, b))),
                         f"both {a} and {b} modify the effect of {target} on {y}")
    return terms


def build_plan(variant, outcome: ModelSpec, exposure="X", incomplete=DEFAULT_ORDER, binary=None,
               auxiliary=("A",), T=5, m=5) -> ImputationPlan:
    """Univariate models for each variable in ``incomplete`` (visit order kept).

    ``binary`` lists binary columns (logistic models); default: every
    covariate of the outcome model except A.
    """
    variant = Variant.parse(variant)
    y = outcome.response
    covars = [c for c in _mains(outcome) if c != y]
    if exposure not in covars:
        raise PlanError(f"outcome model {outcome} does not contain the exposure {exposure}")
    confounders = [c for c in covars if c != exposure]
    analysis = [*covars, y] + [a for a in auxiliary if a not in covars]
    binary = set(covars) if binary is None else set(binary)
    incomplete = tuple(incomplete)
    for v in incomplete:
        if v not in analysis:
            raise PlanError(f"{v} is not an analysis variable")
    inc_conf = [c for c in confounders if c in incomplete]
    scen = [t for t in outcome.terms if len(t) == 2 and exposure in t
            and any(c in confounders for c in t)]

    def fam(v):
        return Family.BINOMIAL if v in binary else Family.GAUSSIAN

    models, reasons = {}, {}
    for v in incomplete:
        terms = {(c,): "main effect" for c in analysis if c != v}
        extra = {}
        if variant is Variant.EO and v in inc_conf:
            extra[tuple(sorted((exposure, y)))] = "exposure-outcome interaction"
        if variant is Variant.EI:
            if v in inc_conf:
                for c in inc_conf:
                    if c != v:
                        extra[tuple(sorted((exposure, c)))] = "exposure by other incomplete confounder"
            elif v == y:
                for c in inc_conf:
                    extra[tuple(sorted((exposure, c)))] = "exposure by incomplete confounder"
        if variant is Variant.EC:
            if v in inc_conf or v == y:
                for c in confounders:
                    if c != v:
                        extra[tuple(sorted((exposure, c)))] = "exposure by confounder"
        if variant in (Variant.EO, Variant.EI, Variant.COM) and (v in inc_conf or v == y):
            for t in scen:
                if v not in t:
                    extra.setdefault(t, "exposure-confounder interaction of the outcome model")
        if variant is Variant.COM:
            for t, why in _com_terms(v, outcome, exposure).items():
                extra.setdefault(t, why)
        if variant is Variant.SMC:
            if v == y:
                continue
            # covariate model: other covariates only, no outcome
            terms = {(c,): "main effect" for c in analysis if c not in (v, y)}
        terms.update({t: why for t, why in extra.items() if v not in t})
        models[v] = ModelSpec(v, tuple(terms), fam(v))
        reasons[v] = {term_label(t): why for t, why in terms.items() if len(t) > 1}
    substantive = None
    if variant is Variant.SMC:
        substantive = outcome.add(*[a for a in auxiliary if a not in covars])
        if y in incomplete:
            models[y] = substantive
            reasons[y] = {"*": "drawn from the substantive model"}
    return ImputationPlan(variant, models, incomplete, T, m, substantive, exposure, reasons)
