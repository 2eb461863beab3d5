"""Truncated shuffle Hopf algebra on words and its character group.

Everything downstream (rough paths, controlled paths, RDE solvers, rough
PDEs) is indexed by words over the alphabet ``{1..d}``.  This module houses
the exact graded arithmetic: the shuffle product and deconcatenation
coproduct on the step-N truncated tensor algebra, the antipode, the
convolution (concatenation) product on the dual, group-like elements
(truncated characters), their exp/log, and the deshuffle combinatorics used
by controlled-path composition and derived vector fields.

Scalars are double-precision floats; algebraic identities are validated to
tolerance by the callers (exact rationals are out of scope).  All objects
are immutable values after construction and all operations are pure, so
everything here may be shared freely between threads.
"""

from __future__ import annotations

import itertools
import json
import math
from functools import lru_cache
from typing import Iterable, Iterator, NamedTuple


class Word:
    """An immutable word over a positive-integer alphabet.

    The empty word is the unique word of length 0.  Concatenation is ``+``.
    Ordering is canonical: by length, then lexicographic.
    """

    __slots__ = ("letters",)

    def __init__(self, letters: Iterable[int] = ()):
        letters = tuple(int(i) for i in letters)
        if any(i < 1 for i in letters):
            raise ValueError(f"word letters must be >= 1, got {letters}")
        object.__setattr__(self, "letters", letters)

    def __setattr__(self, name, value):
        raise AttributeError("Word is immutable")

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self) -> Iterator[int]:
        return iter(self.letters)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Word(self.letters[item])
        return self.letters[item]

    def __hash__(self) -> int:
        return hash(self.letters)

    def __eq__(self, other) -> bool:
        return isinstance(other, Word) and self.letters == other.letters

    def __lt__(self, other: "Word") -> bool:
        return self.sort_key() < other.sort_key()

    def __add__(self, other: "Word") -> "Word":
        return Word(self.letters + other.letters)

    def __repr__(self) -> str:
        return "Word(%s)" % (",".join(str(i) for i in self.letters) or "ε")

    def sort_key(self) -> tuple[int, tuple[int, ...]]:
        return (len(self.letters), self.letters)

    def reversed(self) -> "Word":
        return Word(self.letters[::-1])

    @property
    def max_letter(self) -> int:
        return max(self.letters, default=1)


EMPTY_WORD = Word(())


def word(*letters: int) -> Word:
    """Convenience constructor: ``word(1, 2) == Word((1, 2))``."""
    return Word(letters)


@lru_cache(maxsize=None)
def words_of_length(d: int, p: int) -> tuple[Word, ...]:
    """All words of length ``p`` over ``{1..d}`` in lexicographic order."""
    return tuple(Word(t) for t in itertools.product(range(1, d + 1), repeat=p))


@lru_cache(maxsize=None)
def words_up_to(d: int, level: int) -> tuple[Word, ...]:
    """All words of length <= ``level`` in canonical (length, lex) order."""
    out: list[Word] = []
    for p in range(level + 1):
        out.extend(words_of_length(d, p))
    return tuple(out)


def deconcat(w: Word) -> list[tuple[Word, Word]]:
    """All splittings uv = w, left to right, including (ε, w) and (w, ε).

    This is the deconcatenation coproduct on the basis element indexed by
    ``w``, returned as the list of index pairs.
    """
    return [(w[:i], w[i:]) for i in range(len(w) + 1)]


# ---------------------------------------------------------------------------
# Word-level shuffle combinatorics.
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _shuffle_words(u: tuple[int, ...], v: tuple[int, ...]) -> dict[tuple[int, ...], int]:
    """Multiset of interleavings of u and v as a word -> multiplicity map."""
    if not u:
        return {v: 1}
    if not v:
        return {u: 1}
    out: dict[tuple[int, ...], int] = {}
    for w, c in _shuffle_words(u[1:], v).items():
        key = (u[0],) + w
        out[key] = out.get(key, 0) + c
    for w, c in _shuffle_words(u, v[1:]).items():
        key = (v[0],) + w
        out[key] = out.get(key, 0) + c
    return out


def shuffle_word_multiset(u: Word, v: Word) -> dict[Word, int]:
    """Shuffle product of two basis words, with integer multiplicities."""
    return {Word(w): c for w, c in _shuffle_words(u.letters, v.letters).items()}


def shuffle_coefficient(w: Word, parts: tuple[Word, ...]) -> int:
    """Multiplicity of e_w in the shuffle product of the given words.

    Counts interleavings directly by dynamic programming over the tuple of
    consumed prefix lengths, independently of the product-expansion route.
    """
    if sum(len(u) for u in parts) != len(w):
        return 0
    letters = tuple(u.letters for u in parts)
    target = w.letters

    @lru_cache(maxsize=None)
    def count(pos: int, state: tuple[int, ...]) -> int:
        if pos == len(target):
            return 1
        total = 0
        c = target[pos]
        for j, consumed in enumerate(state):
            if consumed < len(letters[j]) and letters[j][consumed] == c:
                total += count(pos + 1, state[:j] + (consumed + 1,) + state[j + 1:])
        return total

    result = count(0, (0,) * len(parts))
    count.cache_clear()
    return result


class DeshuffleTable(NamedTuple):
    """Ordered k-tuples of non-empty words whose shuffle hits a target word.

    ``tuples`` uses set semantics: a tuple appearing with shuffle
    multiplicity > 1 is listed once; ``weights`` records that multiplicity,
    i.e. the coefficient of e_w in the shuffle product of the tuple.
    Permuting any member tuple yields another member because the shuffle
    product is commutative.
    """

    word: Word
    arity: int
    tuples: frozenset[tuple[Word, ...]]
    weights: dict[tuple[Word, ...], int]


_DESHUFFLE_CACHE: dict[tuple[tuple[int, ...], int], DeshuffleTable] = {}


def deshuffles(w: Word, k: int) -> DeshuffleTable:
    """All ordered k-tuples (u_1..u_k) of non-empty words with
    nonzero coefficient of e_w in e_{u_1} ⧢ … ⧢ e_{u_k}.

    Enumerates labelings of the letter positions of ``w`` by ``{1..k}``
    using every label; each label class, read left to right, spells one
    word of the tuple.  The number of labelings producing a tuple is
    exactly its shuffle multiplicity, recorded in ``weights`` (graded
    expansions over tuples must be weighted by it: a coincident tuple such
    as ((1),(1)) for w=(1,1) hits e_w twice).  Results are memoized; the
    cache tolerates concurrent reads and idempotent concurrent inserts.
    """
    if not 1 <= k <= len(w):
        raise ValueError(f"deshuffle arity must satisfy 1 <= k <= |w|, got k={k}, |w|={len(w)}")
    key = (w.letters, k)
    hit = _DESHUFFLE_CACHE.get(key)
    if hit is not None:
        return hit
    p = len(w)
    weights: dict[tuple[Word, ...], int] = {}
    for labels in itertools.product(range(k), repeat=p):
        if len(set(labels)) != k:
            continue
        parts = tuple(
            Word(tuple(w.letters[i] for i in range(p) if labels[i] == j))
            for j in range(k)
        )
        weights[parts] = weights.get(parts, 0) + 1
    table = DeshuffleTable(word=w, arity=k, tuples=frozenset(weights), weights=weights)
    _DESHUFFLE_CACHE[key] = table
    return table


# ---------------------------------------------------------------------------
# Truncated tensors.
# ---------------------------------------------------------------------------

class TruncatedTensor:
    """Element of the step-N truncated tensor algebra, as a sparse map.

    ``coeffs`` maps words of length <= ``level`` to float coefficients;
    absent words are zero.  The same representation serves elements of H_N
    and of its dual H_N* (the pairing is the sparse dot product), which is
    convenient if not algebraically fussy.
    """

    __slots__ = ("dim", "level", "_coeffs")

    def __init__(self, dim: int, level: int, coeffs: dict[Word, float] | None = None):
        if dim < 1:
            raise ValueError(f"alphabet size must be >= 1, got {dim}")
        if level < 0:
            raise ValueError(f"truncation level must be >= 0, got {level}")
        clean: dict[Word, float] = {}
        if coeffs:
            for w, c in coeffs.items():
                if len(w) > level:
                    raise ValueError(f"word {w} exceeds truncation level {level}")
                if w.max_letter > dim:
                    raise ValueError(f"word {w} uses letters beyond alphabet size {dim}")
                c = float(c)
                if c != 0.0:
                    clean[w] = c
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "level", level)
        object.__setattr__(self, "_coeffs", clean)

    def __setattr__(self, name, value):
        raise AttributeError("TruncatedTensor is immutable")

    # -- construction helpers ------------------------------------------------

    @classmethod
    def zero(cls, dim: int, level: int) -> "TruncatedTensor":
        return cls(dim, level)

    @classmethod
    def unit(cls, dim: int, level: int) -> "TruncatedTensor":
        """The unit 𝟙 (equally the counit 𝟙* on the dual side)."""
        return cls(dim, level, {EMPTY_WORD: 1.0})

    @classmethod
    def basis(cls, dim: int, level: int, w: Word) -> "TruncatedTensor":
        return cls(dim, level, {w: 1.0})

    @classmethod
    def from_vector(cls, vec, level: int) -> "TruncatedTensor":
        """Embed a vector of R^d as the level-1 element Σ_i vec_i e_i."""
        vec = [float(v) for v in vec]
        return cls(len(vec), level, {Word((i + 1,)): v for i, v in enumerate(vec) if v != 0.0})

    # -- inspection ----------------------------------------------------------

    def coeff(self, w: Word) -> float:
        return self._coeffs.get(w, 0.0)

    def terms(self) -> list[tuple[Word, float]]:
        """Stored terms in canonical (length, lex) word order."""
        return sorted(self._coeffs.items(), key=lambda kv: kv[0].sort_key())

    def words(self) -> set[Word]:
        return set(self._coeffs)

    def pair(self, other: "TruncatedTensor") -> float:
        """Sparse dot product ⟨self, other⟩."""
        a, b = self._coeffs, other._coeffs
        if len(b) < len(a):
            a, b = b, a
        return sum(c * b[w] for w, c in a.items() if w in b)

    def norm_inf(self) -> float:
        return max((abs(c) for c in self._coeffs.values()), default=0.0)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TruncatedTensor)
            and self.dim == other.dim
            and self.level == other.level
            and self._coeffs == other._coeffs
        )

    def __hash__(self):
        return hash((self.dim, self.level, frozenset(self._coeffs.items())))

    def __repr__(self) -> str:
        inner = " + ".join(f"{c:g}*e{w.letters}" for w, c in self.terms()) or "0"
        return f"TruncatedTensor(d={self.dim}, N={self.level}: {inner})"

    # -- graded linear structure ----------------------------------------------

    def __add__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        self._check_compatible(other)
        out = dict(self._coeffs)
        for w, c in other._coeffs.items():
            out[w] = out.get(w, 0.0) + c
        return TruncatedTensor(self.dim, max(self.level, other.level), out)

    def __sub__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        return self + (-1.0) * other

    def __mul__(self, scalar: float) -> "TruncatedTensor":
        scalar = float(scalar)
        return TruncatedTensor(self.dim, self.level, {w: scalar * c for w, c in self._coeffs.items()})

    __rmul__ = __mul__

    def __neg__(self) -> "TruncatedTensor":
        return self * -1.0

    def truncated(self, level: int) -> "TruncatedTensor":
        return TruncatedTensor(self.dim, level, {w: c for w, c in self._coeffs.items() if len(w) <= level})

    def at_level(self, level: int) -> "TruncatedTensor":
        """Re-truncate, allowing the level to grow (new words stay absent)."""
        if level >= self.level:
            return TruncatedTensor(self.dim, level, dict(self._coeffs))
        return self.truncated(level)

    def graded_piece(self, p: int) -> "TruncatedTensor":
        return TruncatedTensor(self.dim, self.level, {w: c for w, c in self._coeffs.items() if len(w) == p})

    def _check_compatible(self, other: "TruncatedTensor"):
        if self.dim != other.dim:
            raise ValueError(f"alphabet size mismatch: {self.dim} vs {other.dim}")

    # -- serialization ---------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "d": self.dim,
            "level": self.level,
            "terms": [{"word": list(w.letters), "value": c} for w, c in self.terms()],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TruncatedTensor":
        coeffs = {Word(t["word"]): float(t["value"]) for t in data["terms"]}
        return cls(int(data["d"]), int(data["level"]), coeffs)

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> "TruncatedTensor":
        return cls.from_json_dict(json.loads(text))


def max_coeff_diff(a: TruncatedTensor, b: TruncatedTensor) -> float:
    """Largest absolute coefficient difference over the union support."""
    return max(
        (abs(a.coeff(w) - b.coeff(w)) for w in a.words() | b.words()),
        default=0.0,
    )


# ---------------------------------------------------------------------------
# Products on tensors.
# ---------------------------------------------------------------------------

def shuffle(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    """Shuffle product, truncated at the larger input level.

    Bilinear and graded: a level-p term against a level-q term lands in
    level p+q and is dropped beyond the truncation.  Commutative and
    associative.
    """
    a._check_compatible(b)
    level = max(a.level, b.level)
    out: dict[Word, float] = {}
    for u, cu in a._coeffs.items():
        for v, cv in b._coeffs.items():
            if len(u) + len(v) > level:
                continue
            c = cu * cv
            for w, mult in _shuffle_words(u.letters, v.letters).items():
                key = Word(w)
                out[key] = out.get(key, 0.0) + mult * c
    return TruncatedTensor(a.dim, level, out)


def antipode(a: TruncatedTensor) -> TruncatedTensor:
    """The antipode: e_{i_1..i_p} ↦ (−1)^p e_{i_p..i_1}, extended linearly."""
    out = {w.reversed(): (c if len(w) % 2 == 0 else -c) for w, c in a._coeffs.items()}
    return TruncatedTensor(a.dim, a.level, out)


def convolution(g: TruncatedTensor, h: TruncatedTensor) -> TruncatedTensor:
    """Convolution product ⟨g⋆h, e_w⟩ = Σ_{uv=w} ⟨g,e_u⟩⟨h,e_v⟩.

    On the dual basis this concatenates: e_u* ⋆ e_v* = e_{uv}*.  Restricted
    to characters it is the group law.  Inputs must share d and N.
    """
    g._check_compatible(h)
    if g.level != h.level:
        raise ValueError(f"truncation level mismatch: {g.level} vs {h.level}")
    level = g.level
    out: dict[Word, float] = {}
    for u, cu in g._coeffs.items():
        for v, cv in h._coeffs.items():
            if len(u) + len(v) > level:
                continue
            key = u + v
            out[key] = out.get(key, 0.0) + cu * cv
    return TruncatedTensor(g.dim, level, out)


def convolution_power(g: TruncatedTensor, k: int) -> TruncatedTensor:
    out = TruncatedTensor.unit(g.dim, g.level)
    for _ in range(k):
        out = convolution(out, g)
    return out


def tensor_exp(a: TruncatedTensor) -> "GroupTensor":
    """Convolution exponential of an augmentation-free element.

    The series terminates after at most N convolution powers because ``a``
    has no 𝟙 component.  The exponential of a level-1 element is a
    character.
    """
    if a.coeff(EMPTY_WORD) != 0.0:
        raise ValueError("tensor_exp requires a vanishing 𝟙 coefficient")
    out = TruncatedTensor.unit(a.dim, a.level)
    power = TruncatedTensor.unit(a.dim, a.level)
    for k in range(1, a.level + 1):
        power = convolution(power, a)
        out = out + (1.0 / math.factorial(k)) * power
    return GroupTensor(out)


def tensor_log(g: "GroupTensor | TruncatedTensor") -> TruncatedTensor:
    """Convolution logarithm; inverse of tensor_exp up to floating error."""
    t = g.tensor if isinstance(g, GroupTensor) else g
    if abs(t.coeff(EMPTY_WORD) - 1.0) > 1e-9:
        raise ValueError("tensor_log requires unit 𝟙 coefficient")
    base = t - TruncatedTensor.unit(t.dim, t.level)
    base = TruncatedTensor(t.dim, t.level, {w: c for w, c in base._coeffs.items() if len(w) >= 1})
    out = TruncatedTensor.zero(t.dim, t.level)
    power = TruncatedTensor.unit(t.dim, t.level)
    for k in range(1, t.level + 1):
        power = convolution(power, base)
        out = out + ((-1.0) ** (k + 1) / k) * power
    return out


class CharacterCheck(NamedTuple):
    ok: bool
    violation: float
    worst_pair: tuple[Word, Word] | None


def is_character(a: TruncatedTensor, tol: float = 1e-10) -> CharacterCheck:
    """Test the truncated character property to tolerance.

    Checks ⟨a, e_u ⧢ e_v⟩ = ⟨a, e_u⟩⟨a, e_v⟩ over all basis pairs with
    |u| + |v| <= N and reports the worst violation.  Diagnostic only.
    """
    level, d = a.level, a.dim
    worst = abs(a.coeff(EMPTY_WORD) - 1.0)
    worst_pair: tuple[Word, Word] | None = (EMPTY_WORD, EMPTY_WORD) if worst > 0 else None
    all_words = words_up_to(d, level - 1) if level >= 1 else ()
    for i, u in enumerate(all_words):
        if len(u) == 0:
            continue
        for v in all_words[i:]:
            if len(v) == 0 or len(u) + len(v) > level:
                continue
            lhs = sum(
                mult * a.coeff(Word(w))
                for w, mult in _shuffle_words(u.letters, v.letters).items()
            )
            gap = abs(lhs - a.coeff(u) * a.coeff(v))
            if gap > worst:
                worst, worst_pair = gap, (u, v)
    return CharacterCheck(ok=worst <= tol, violation=worst, worst_pair=worst_pair)


class GroupTensor:
    """A truncated tensor with unit 𝟙 coefficient, used as a group element.

    Rough-path increments live here.  Full character validation is a
    separate explicit call (`is_character`); construction only enforces the
    normalization ⟨g, 𝟙⟩ = 1.
    """

    __slots__ = ("tensor",)

    def __init__(self, tensor: TruncatedTensor):
        if abs(tensor.coeff(EMPTY_WORD) - 1.0) > 1e-9:
            raise ValueError("group element must have unit 𝟙 coefficient")
        object.__setattr__(self, "tensor", tensor)

    def __setattr__(self, name, value):
        raise AttributeError("GroupTensor is immutable")

    @classmethod
    def identity(cls, dim: int, level: int) -> "GroupTensor":
        return cls(TruncatedTensor.unit(dim, level))

    @property
    def dim(self) -> int:
        return self.tensor.dim

    @property
    def level(self) -> int:
        return self.tensor.level

    def coeff(self, w: Word) -> float:
        return self.tensor.coeff(w)

    def __eq__(self, other) -> bool:
        return isinstance(other, GroupTensor) and self.tensor == other.tensor

    def __repr__(self) -> str:
        return f"GroupTensor({self.tensor!r})"

    def convolve(self, other: "GroupTensor") -> "GroupTensor":
        return GroupTensor(convolution(self.tensor, other.tensor))

    def at_level(self, level: int) -> "GroupTensor":
        return GroupTensor(self.tensor.at_level(level))


def group_inverse(g: GroupTensor, tol: float | None = 1e-8) -> GroupTensor:
    """Group inverse via the antipode: g^{-1} = g ∘ S.

    When ``tol`` is given, flags non-character input by checking the
    convolution residual ‖g ⋆ g^{-1} − 𝟙*‖_∞ (g∘S inverts g exactly when g
    is a character).  Pass ``tol=None`` to skip the check in hot paths.
    """
    inv = GroupTensor(antipode(g.tensor))
    if tol is not None:
        residual = max_coeff_diff(
            convolution(g.tensor, inv.tensor),
            TruncatedTensor.unit(g.dim, g.level),
        )
        if residual > tol:
            raise ValueError(
                f"group_inverse: input is not a character to tolerance "
                f"(convolution residual {residual:.3e} > {tol:.3e})"
            )
    return inv


def homogeneous_norm(g: GroupTensor, noise_floor: float = 1e-14) -> float:
    """Diagnostic homogeneous norm max_k max_{|w|=k} (k!·|⟨g,e_w⟩|)^{1/k}.

    A computable surrogate used only for Hölder diagnostics, never for
    correctness decisions.  Coefficients at or below ``noise_floor`` are
    treated as zero: the k-th root would otherwise amplify float noise on
    near-identity elements to ~1e-6.
    """
    best = 0.0
    for w, c in g.tensor._coeffs.items():
        k = len(w)
        if k == 0 or abs(c) <= noise_floor:
            continue
        best = max(best, (math.factorial(k) * abs(c)) ** (1.0 / k))
    return best


def group_distance(g: GroupTensor, h: GroupTensor) -> float:
    """Left-invariant distance ‖h^{-1} ⋆ g‖ under the diagnostic norm."""
    return homogeneous_norm(group_inverse(h, tol=None).convolve(g))
