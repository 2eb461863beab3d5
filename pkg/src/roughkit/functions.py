"""Smooth functions with derivative oracles.

Vector fields, terminal data and test functions enter the library through
this interface: a function R^n_in → R^n_out together with an oracle for
mixed partials ∂^α up to a declared order.  Built-in families (polynomial,
trigonometric, affine) carry exact closed-form derivatives of every order;
a central finite-difference fallback wraps black-box callables.

Partial derivatives are indexed by words α over ``{1..n_in}`` (plain int
tuples here).  The oracle must be symmetric under permutations of α; all
built-ins are, by construction.

The module also implements the multivariate higher-order chain rule
(`compose_partial`) and a generalized multi-factor Leibniz rule
(`product_partial`), which downstream code uses to assemble the derivative
oracles of derived vector fields and differential operators exactly.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np

from .algebra import Word, deshuffles

Alpha = tuple[int, ...]

_FD_STEP = float(np.finfo(float).eps) ** (1.0 / 3.0)


def _as_point(x, n: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (n,):
        raise ValueError(f"expected a point in R^{n}, got shape {x.shape}")
    return x


class SmoothFunction:
    """Base class: a function with a mixed-partial oracle.

    Subclasses implement ``value`` and ``partial``; batch variants have
    loop-based defaults and are overridden where vectorization pays off.
    ``max_order=None`` declares unlimited differentiability.
    """

    n_in: int
    n_out: int
    max_order: int | None

    def __init__(self, n_in: int, n_out: int, max_order: int | None = None):
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        self.max_order = max_order

    # -- required interface ----------------------------------------------------

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def partial(self, x, alpha: Alpha) -> np.ndarray:
        """∂^α at a point; alpha=() returns the value."""
        raise NotImplementedError

    # -- derived interface -------------------------------------------------------

    def values(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        return np.stack([self.value(x) for x in xs])

    def partials(self, xs, alpha: Alpha) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        return np.stack([self.partial(x, alpha) for x in xs])

    def require_order(self, k: int, who: str = "operation"):
        if self.max_order is not None and k > self.max_order:
            raise ValueError(
                f"{who} needs derivatives of order {k}, but only order "
                f"{self.max_order} is declared"
            )

    def deriv_tensor(self, x, k: int) -> np.ndarray:
        """The full symmetric k-linear derivative, shape (n_out, n_in^k).

        Assembled from sorted-index partials; symmetry of the oracle fills
        the remaining slots.
        """
        return self.deriv_tensors(np.asarray(x, dtype=float)[None, :], k)[0]

    def deriv_tensors(self, xs, k: int) -> np.ndarray:
        """Batched ``deriv_tensor``: shape (m, n_out) + (n_in,)*k."""
        xs = np.asarray(xs, dtype=float)
        m = xs.shape[0]
        if k == 0:
            return self.values(xs)
        out = np.empty((m, self.n_out) + (self.n_in,) * k)
        for alpha in itertools.combinations_with_replacement(range(1, self.n_in + 1), k):
            vals = self.partials(xs, alpha)
            for perm in set(itertools.permutations(alpha)):
                idx = tuple(a - 1 for a in perm)
                out[(slice(None), slice(None)) + idx] = vals
        return out

    def apply_deriv(self, x, vectors: Sequence[np.ndarray]) -> np.ndarray:
        """D^k f(x)(v_1, …, v_k) with k = len(vectors)."""
        t = self.deriv_tensor(x, len(vectors))
        for v in vectors:
            t = t @ np.asarray(v, dtype=float)
        return t


# ---------------------------------------------------------------------------
# Polynomials.
# ---------------------------------------------------------------------------

PolyComponent = dict[tuple[int, ...], float]


def _poly_diff(component: PolyComponent, letter: int) -> PolyComponent:
    out: PolyComponent = {}
    j = letter - 1
    for expo, c in component.items():
        if expo[j] == 0:
            continue
        new = expo[:j] + (expo[j] - 1,) + expo[j + 1:]
        out[new] = out.get(new, 0.0) + c * expo[j]
    return out


def poly_mul(a: PolyComponent, b: PolyComponent) -> PolyComponent:
    out: PolyComponent = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            key = tuple(i + j for i, j in zip(ea, eb))
            out[key] = out.get(key, 0.0) + ca * cb
    return out


def poly_add(a: PolyComponent, b: PolyComponent, scale: float = 1.0) -> PolyComponent:
    out = dict(a)
    for e, c in b.items():
        out[e] = out.get(e, 0.0) + scale * c
    return {e: c for e, c in out.items() if c != 0.0}


class PolynomialFunction(SmoothFunction):
    """Vector of multivariate polynomials with exact derivatives.

    Each output component is a sparse map from exponent tuples to
    coefficients.  Evaluation is vectorized through a shared exponent
    matrix; differentiation is symbolic and cached per sorted multi-index.
    """

    def __init__(self, n_in: int, components: Sequence[PolyComponent]):
        super().__init__(n_in, len(components), max_order=None)
        comps = []
        for comp in components:
            clean = {}
            for expo, c in comp.items():
                expo = tuple(int(e) for e in expo)
                if len(expo) != n_in or any(e < 0 for e in expo):
                    raise ValueError(f"bad exponent tuple {expo} for n_in={n_in}")
                c = float(c)
                if c != 0.0:
                    clean[expo] = clean.get(expo, 0.0) + c
            comps.append(clean)
        self.components: tuple[PolyComponent, ...] = tuple(comps)
        self._derived: dict[Alpha, PolynomialFunction] = {}
        all_expos = sorted({e for comp in self.components for e in comp})
        self._expo_matrix = np.asarray(all_expos, dtype=float).reshape(len(all_expos), n_in)
        self._coeff_matrix = np.zeros((len(all_expos), self.n_out))
        index = {e: i for i, e in enumerate(all_expos)}
        for j, comp in enumerate(self.components):
            for e, c in comp.items():
                self._coeff_matrix[index[e], j] = c

    # -- constructors ----------------------------------------------------------

    @classmethod
    def constant(cls, n_in: int, vec) -> "PolynomialFunction":
        vec = np.atleast_1d(np.asarray(vec, dtype=float))
        zero = (0,) * n_in
        return cls(n_in, [{zero: float(v)} for v in vec])

    @classmethod
    def affine(cls, matrix, offset=None) -> "PolynomialFunction":
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        n_out, n_in = matrix.shape
        offset = np.zeros(n_out) if offset is None else np.asarray(offset, dtype=float)
        comps = []
        for j in range(n_out):
            comp: PolyComponent = {}
            if offset[j] != 0.0:
                comp[(0,) * n_in] = float(offset[j])
            for i in range(n_in):
                if matrix[j, i] != 0.0:
                    expo = tuple(1 if k == i else 0 for k in range(n_in))
                    comp[expo] = float(matrix[j, i])
            comps.append(comp)
        return cls(n_in, comps)

    @classmethod
    def identity(cls, n: int) -> "PolynomialFunction":
        return cls.affine(np.eye(n))

    @classmethod
    def zero(cls, n_in: int, n_out: int) -> "PolynomialFunction":
        return cls(n_in, [{} for _ in range(n_out)])

    # -- evaluation ---------------------------------------------------------------

    def values(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if self._expo_matrix.shape[0] == 0:
            return np.zeros((xs.shape[0], self.n_out))
        # Overflow on diverging states is deliberate: solvers detect the
        # resulting non-finite values and report blow-up.
        with np.errstate(over="ignore", invalid="ignore"):
            monomials = np.prod(xs[:, None, :] ** self._expo_matrix[None, :, :], axis=2)
            return monomials @ self._coeff_matrix

    def value(self, x) -> np.ndarray:
        return self.values(_as_point(x, self.n_in)[None, :])[0]

    def derived(self, alpha: Alpha) -> "PolynomialFunction":
        key = tuple(sorted(alpha))
        hit = self._derived.get(key)
        if hit is None:
            comps = self.components
            for letter in key:
                comps = [_poly_diff(c, letter) for c in comps]
            hit = PolynomialFunction(self.n_in, comps)
            self._derived[key] = hit
        return hit

    def partials(self, xs, alpha: Alpha) -> np.ndarray:
        return self.derived(alpha).values(xs)

    def partial(self, x, alpha: Alpha) -> np.ndarray:
        return self.derived(alpha).value(_as_point(x, self.n_in))

    # -- serialization ---------------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "family": "polynomial",
            "n_in": self.n_in,
            "components": [
                [{"exponents": list(e), "coeff": c} for e, c in sorted(comp.items())]
                for comp in self.components
            ],
        }


class TrigPolynomial(SmoothFunction):
    """Sums of sinusoids a·sin(⟨k, x⟩ + φ) per component, with exact
    derivatives of every order (each ∂_j scales by k_j and shifts φ by π/2).
    """

    def __init__(self, n_in: int, components: Sequence[Sequence[tuple[float, Sequence[float], float]]]):
        super().__init__(n_in, len(components), max_order=None)
        self.components = tuple(
            tuple((float(a), tuple(float(w) for w in wave), float(phase)) for a, wave, phase in comp)
            for comp in components
        )
        for comp in self.components:
            for _, wave, _ in comp:
                if len(wave) != n_in:
                    raise ValueError("wave vector length must equal n_in")
        self._derived: dict[Alpha, TrigPolynomial] = {}

    @classmethod
    def sin(cls, n_in: int, amp: float, wave, phase: float = 0.0) -> "TrigPolynomial":
        return cls(n_in, [[(amp, wave, phase)]])

    @classmethod
    def cos(cls, n_in: int, amp: float, wave, phase: float = 0.0) -> "TrigPolynomial":
        return cls(n_in, [[(amp, wave, phase + math.pi / 2.0)]])

    def derived(self, alpha: Alpha) -> "TrigPolynomial":
        key = tuple(sorted(alpha))
        hit = self._derived.get(key)
        if hit is None:
            comps = []
            for comp in self.components:
                terms = []
                for a, wave, phase in comp:
                    amp = a
                    for letter in key:
                        amp *= wave[letter - 1]
                    terms.append((amp, wave, phase + len(key) * math.pi / 2.0))
                comps.append(terms)
            hit = TrigPolynomial(self.n_in, comps)
            self._derived[key] = hit
        return hit

    def values(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        out = np.zeros((xs.shape[0], self.n_out))
        for j, comp in enumerate(self.components):
            for a, wave, phase in comp:
                out[:, j] += a * np.sin(xs @ np.asarray(wave) + phase)
        return out

    def value(self, x) -> np.ndarray:
        return self.values(_as_point(x, self.n_in)[None, :])[0]

    def partials(self, xs, alpha: Alpha) -> np.ndarray:
        return self.derived(alpha).values(xs)

    def partial(self, x, alpha: Alpha) -> np.ndarray:
        return self.derived(alpha).value(_as_point(x, self.n_in))

    def to_json_dict(self) -> dict:
        return {
            "family": "trig",
            "n_in": self.n_in,
            "components": [
                [{"amp": a, "wave": list(w), "phase": p} for a, w, p in comp]
                for comp in self.components
            ],
        }


class SumFunction(SmoothFunction):
    """Pointwise sum of smooth functions with matching signatures."""

    def __init__(self, parts: Sequence[SmoothFunction]):
        if not parts:
            raise ValueError("need at least one summand")
        n_in, n_out = parts[0].n_in, parts[0].n_out
        if any(p.n_in != n_in or p.n_out != n_out for p in parts):
            raise ValueError("summands must share signature")
        orders = [p.max_order for p in parts]
        max_order = None if all(o is None for o in orders) else min(o for o in orders if o is not None)
        super().__init__(n_in, n_out, max_order)
        self.parts = tuple(parts)

    def value(self, x):
        return sum(p.value(x) for p in self.parts)

    def partial(self, x, alpha):
        return sum(p.partial(x, alpha) for p in self.parts)

    def values(self, xs):
        return sum(p.values(xs) for p in self.parts)

    def partials(self, xs, alpha):
        return sum(p.partials(xs, alpha) for p in self.parts)


class FiniteDifferenceFunction(SmoothFunction):
    """Central-difference fallback for black-box callables.

    Step h = cbrt(machine epsilon) scaled by max(1, |x_j|) per coordinate.
    Higher orders recurse on first-order differences and lose roughly a
    third of the mantissa per level; declare ``max_order`` accordingly.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], n_in: int, n_out: int, max_order: int = 2):
        super().__init__(n_in, n_out, max_order)
        self._fn = fn

    def value(self, x) -> np.ndarray:
        return np.atleast_1d(np.asarray(self._fn(_as_point(x, self.n_in)), dtype=float))

    def partial(self, x, alpha: Alpha) -> np.ndarray:
        x = _as_point(x, self.n_in)
        if not alpha:
            return self.value(x)
        self.require_order(len(alpha), "finite-difference oracle")
        j = alpha[0] - 1
        h = _FD_STEP * max(1.0, abs(x[j]))
        left, right = x.copy(), x.copy()
        left[j] -= h
        right[j] += h
        rest = alpha[1:]
        return (self.partial(right, rest) - self.partial(left, rest)) / (2.0 * h)


class JetFunction(SmoothFunction):
    """A function known only through its jet at one anchor point.

    Stores the value and mixed partials at ``anchor``; querying anywhere
    else is a contract violation.  Used to carry flow-derivative data into
    chain-rule assemblies.
    """

    def __init__(self, anchor: np.ndarray, value: np.ndarray, partials: dict[Alpha, np.ndarray], max_order: int):
        anchor = np.atleast_1d(np.asarray(anchor, dtype=float))
        value = np.atleast_1d(np.asarray(value, dtype=float))
        super().__init__(len(anchor), len(value), max_order)
        self.anchor = anchor
        self._value = value
        self._partials = {tuple(sorted(a)): np.atleast_1d(np.asarray(v, dtype=float)) for a, v in partials.items()}

    def value(self, x) -> np.ndarray:
        self._check(x)
        return self._value

    def partial(self, x, alpha: Alpha) -> np.ndarray:
        self._check(x)
        if not alpha:
            return self._value
        self.require_order(len(alpha), "jet oracle")
        return self._partials[tuple(sorted(alpha))]

    def _check(self, x):
        x = _as_point(x, self.n_in)
        if not np.allclose(x, self.anchor, rtol=0.0, atol=1e-9):
            raise ValueError("jet oracle queried away from its anchor point")


# ---------------------------------------------------------------------------
# Chain and product rules.
# ---------------------------------------------------------------------------

def _alpha_word(alpha: Alpha) -> Word:
    return Word(alpha)


def compose_partial(
    outer: SmoothFunction,
    inner: SmoothFunction,
    x,
    alpha: Alpha,
    inner_value: np.ndarray | None = None,
) -> np.ndarray:
    """∂^α(outer ∘ inner)(x) by the multivariate higher-order chain rule.

    Sums, over k and over tuples of non-empty words (β_1..β_k) whose
    shuffles contain α, the contraction of D^k outer at inner(x) with the
    inner partials ∂^{β_j}.  α is a word over {1..inner.n_in}.
    """
    x = _as_point(x, inner.n_in)
    y = inner.value(x) if inner_value is None else inner_value
    if not alpha:
        return outer.value(y)
    m = len(alpha)
    outer.require_order(m, "composition")
    inner.require_order(m, "composition")
    inner_cache: dict[Alpha, np.ndarray] = {}

    def inner_partial(beta: Word) -> np.ndarray:
        key = tuple(sorted(beta.letters))
        hit = inner_cache.get(key)
        if hit is None:
            hit = inner.partial(x, key)
            inner_cache[key] = hit
        return hit

    total = np.zeros(outer.n_out)
    word_alpha = _alpha_word(alpha)
    for k in range(1, m + 1):
        tensor = outer.deriv_tensor(y, k)
        acc = np.zeros_like(total)
        for parts, mult in deshuffles(word_alpha, k).weights.items():
            t = tensor
            for beta in parts:
                t = t @ inner_partial(beta)
            acc += mult * t
        total += acc / math.factorial(k)
    return total


class ComposedFunction(SmoothFunction):
    """outer ∘ inner with chain-rule-assembled mixed partials."""

    def __init__(self, outer: SmoothFunction, inner: SmoothFunction):
        if outer.n_in != inner.n_out:
            raise ValueError("composition signature mismatch")
        orders = [o for o in (outer.max_order, inner.max_order) if o is not None]
        super().__init__(inner.n_in, outer.n_out, min(orders) if orders else None)
        self.outer = outer
        self.inner = inner

    def value(self, x):
        return self.outer.value(self.inner.value(_as_point(x, self.n_in)))

    def partial(self, x, alpha: Alpha):
        return compose_partial(self.outer, self.inner, x, alpha)


ScalarFactor = Callable[[np.ndarray, Alpha], float]


def product_partial(factors: Sequence[ScalarFactor], x: np.ndarray, alpha: Alpha) -> float:
    """Generalized Leibniz rule for a product of scalar factors.

    ∂^α ∏_j f_j = Σ over assignments of the letters of α to the factors of
    the product of the assigned partials.  Each factor is a callable
    (x, sub_alpha) → float.
    """
    n_factors = len(factors)
    positions = len(alpha)
    if positions == 0:
        out = 1.0
        for f in factors:
            out *= f(x, ())
        return out
    total = 0.0
    for assignment in itertools.product(range(n_factors), repeat=positions):
        sub: list[tuple[int, ...]] = [() for _ in range(n_factors)]
        for letter, target in zip(alpha, assignment):
            sub[target] = sub[target] + (letter,)
        term = 1.0
        for f, a in zip(factors, sub):
            term *= f(x, a)
            if term == 0.0:
                break
        total += term
    return total


# ---------------------------------------------------------------------------
# Serialization.
# ---------------------------------------------------------------------------

def function_from_json_dict(data: dict) -> SmoothFunction:
    family = data.get("family")
    if family == "polynomial":
        comps = [
            {tuple(t["exponents"]): float(t["coeff"]) for t in comp}
            for comp in data["components"]
        ]
        return PolynomialFunction(int(data["n_in"]), comps)
    if family == "trig":
        comps = [
            [(float(t["amp"]), t["wave"], float(t["phase"])) for t in comp]
            for comp in data["components"]
        ]
        return TrigPolynomial(int(data["n_in"]), comps)
    if family == "affine":
        return PolynomialFunction.affine(data["matrix"], data.get("offset"))
    if family == "named":
        name = data["name"]
        n = int(data["n"])
        if name == "zero":
            return PolynomialFunction.zero(n, n)
        if name == "identity":
            return PolynomialFunction.identity(n)
        raise ValueError(f"unknown named function {name!r}")
    raise ValueError(f"unknown function family {family!r}")


def function_to_json_dict(fn: SmoothFunction) -> dict:
    to_json = getattr(fn, "to_json_dict", None)
    if to_json is None:
        raise ValueError(f"{type(fn).__name__} is not serializable")
    return to_json()
