"""Tests for the shuffle Hopf algebra layer.

Expected values tagged as derived below were computed with the independent
oracles defined here (brute-force interleaving enumeration, convolution
series expansion, shuffle-support scans), not with the code under test.
"""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughkit.algebra import (
    EMPTY_WORD,
    GroupTensor,
    TruncatedTensor,
    Word,
    antipode,
    convolution,
    deconcat,
    deshuffles,
    group_distance,
    group_inverse,
    homogeneous_norm,
    is_character,
    max_coeff_diff,
    shuffle,
    shuffle_coefficient,
    shuffle_word_multiset,
    tensor_exp,
    tensor_log,
    word,
    words_up_to,
)


# ---------------------------------------------------------------------------
# Independent oracles.
# ---------------------------------------------------------------------------

def brute_shuffle_pairs(u: Word, v: Word) -> dict[Word, int]:
    """Enumerate (p,q)-shuffle permutations directly and read off words."""
    p, q = len(u), len(v)
    merged = u.letters + v.letters
    out: dict[Word, int] = {}
    for positions in itertools.combinations(range(p + q), p):
        # positions: where the letters of u land, in order; v fills the rest.
        result = [0] * (p + q)
        rest = [i for i in range(p + q) if i not in positions]
        for letter, pos in zip(u.letters, positions):
            result[pos] = letter
        for letter, pos in zip(v.letters, rest):
            result[pos] = letter
        w = Word(result)
        out[w] = out.get(w, 0) + 1
    assert sum(out.values()) == math.comb(p + q, p)
    return out


def series_exp_coeffs(delta: float, level: int) -> dict[Word, float]:
    """Series oracle for exp(delta * e_1) in one dimension."""
    return {Word((1,) * k): delta**k / math.factorial(k) for k in range(level + 1)}


def sparse_random_tensor(rng, d, level, n_terms=6) -> TruncatedTensor:
    words = words_up_to(d, level)
    coeffs = {}
    for _ in range(n_terms):
        w = words[rng.integers(0, len(words))]
        coeffs[w] = rng.standard_normal()
    return TruncatedTensor(d, level, coeffs)


# ---------------------------------------------------------------------------
# Words and deconcatenation.
# ---------------------------------------------------------------------------

def test_word_basics():
    w = word(1, 2, 3)
    assert len(w) == 3
    assert w[0] == 1 and w[1:] == word(2, 3)
    assert word(1) + word(2, 3) == w
    assert EMPTY_WORD + w == w and w + EMPTY_WORD == w
    assert len(word(1, 2) + word(3)) == 3
    with pytest.raises(ValueError):
        Word((0, 1))


def test_word_canonical_order():
    ws = [word(2), word(1, 1), EMPTY_WORD, word(1), word(1, 2)]
    assert sorted(ws) == [EMPTY_WORD, word(1), word(2), word(1, 1), word(1, 2)]


def test_deconcat_examples():
    assert deconcat(word(1, 2)) == [
        (EMPTY_WORD, word(1, 2)),
        (word(1), word(2)),
        (word(1, 2), EMPTY_WORD),
    ]
    assert deconcat(EMPTY_WORD) == [(EMPTY_WORD, EMPTY_WORD)]
    assert len(deconcat(word(1, 1, 2))) == 4


# ---------------------------------------------------------------------------
# Shuffle product.
# ---------------------------------------------------------------------------

def test_shuffle_single_letters():
    a = TruncatedTensor.basis(2, 2, word(1))
    b = TruncatedTensor.basis(2, 2, word(2))
    got = shuffle(a, b)
    assert got.coeff(word(1, 2)) == 1.0
    assert got.coeff(word(2, 1)) == 1.0
    assert len(got.words()) == 2


def test_shuffle_equal_letters():
    a = TruncatedTensor.basis(1, 2, word(1))
    got = shuffle(a, a)
    assert got.coeff(word(1, 1)) == 2.0
    assert len(got.words()) == 1


def test_shuffle_12_with_3():
    # Oracle: brute-force enumeration of Sh(2,1).
    oracle = brute_shuffle_pairs(word(1, 2), word(3))
    assert oracle == {word(1, 2, 3): 1, word(1, 3, 2): 1, word(3, 1, 2): 1}
    a = TruncatedTensor.basis(3, 3, word(1, 2))
    b = TruncatedTensor.basis(3, 3, word(3))
    got = shuffle(a, b)
    for w, mult in oracle.items():
        assert got.coeff(w) == float(mult)


@pytest.mark.parametrize("u,v", [
    (word(1), word(1, 2)),
    (word(1, 2), word(2, 1)),
    (word(1, 1), word(1, 1)),
    (word(1, 2, 3), word(2, 1)),
])
def test_shuffle_words_match_permutation_oracle(u, v):
    assert shuffle_word_multiset(u, v) == brute_shuffle_pairs(u, v)


def test_shuffle_rejects_dimension_mismatch():
    a = TruncatedTensor.basis(2, 2, word(1))
    b = TruncatedTensor.basis(3, 2, word(3))
    with pytest.raises(ValueError):
        shuffle(a, b)


def test_shuffle_truncates_at_max_input_level():
    a = TruncatedTensor.basis(2, 2, word(1, 2))
    b = TruncatedTensor.basis(2, 1, word(1))
    got = shuffle(a, b)
    assert got.level == 2
    assert got.norm_inf() == 0.0  # level-3 words dropped


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 10**6))
def test_shuffle_commutative_associative(d, level, seed):
    rng = np.random.default_rng(seed)
    a = sparse_random_tensor(rng, d, level)
    b = sparse_random_tensor(rng, d, level)
    c = sparse_random_tensor(rng, d, level)
    assert max_coeff_diff(shuffle(a, b), shuffle(b, a)) <= 1e-12
    lhs = shuffle(shuffle(a, b), c)
    rhs = shuffle(a, shuffle(b, c))
    assert max_coeff_diff(lhs, rhs) <= 1e-12


def test_shuffle_grading():
    # ⟨shuffle(a,b), e_w⟩ only sees coefficients at levels summing to |w|.
    rng = np.random.default_rng(7)
    a = sparse_random_tensor(rng, 2, 3)
    b = sparse_random_tensor(rng, 2, 3)
    for p in range(4):
        full = shuffle(a, b).graded_piece(p)
        parts = TruncatedTensor.zero(2, 3)
        for i in range(p + 1):
            parts = parts + shuffle(a.graded_piece(i), b.graded_piece(p - i))
        assert max_coeff_diff(full, parts.graded_piece(p)) <= 1e-12


# ---------------------------------------------------------------------------
# Antipode.
# ---------------------------------------------------------------------------

def test_antipode_examples():
    t = TruncatedTensor.basis(2, 2, word(1, 2))
    assert antipode(t).coeff(word(2, 1)) == 1.0
    t1 = TruncatedTensor.basis(2, 2, word(1))
    assert antipode(t1).coeff(word(1)) == -1.0
    unit = TruncatedTensor.unit(2, 2)
    assert antipode(unit) == unit


def test_antipode_involution_and_grading():
    rng = np.random.default_rng(3)
    for _ in range(5):
        a = sparse_random_tensor(rng, 3, 4)
        assert antipode(antipode(a)) == a
        for p in range(5):
            assert antipode(a.graded_piece(p)).words() <= set(words_up_to(3, 4))
            assert all(len(w) == p for w in antipode(a.graded_piece(p)).words())


# ---------------------------------------------------------------------------
# Convolution.
# ---------------------------------------------------------------------------

def test_convolution_concatenates_duals():
    eu = TruncatedTensor.basis(2, 3, word(1))
    ev = TruncatedTensor.basis(2, 3, word(2))
    assert convolution(eu, ev) == TruncatedTensor.basis(2, 3, word(1, 2))


def test_convolution_unit():
    rng = np.random.default_rng(11)
    g = sparse_random_tensor(rng, 2, 3)
    unit = TruncatedTensor.unit(2, 3)
    assert convolution(unit, g) == g
    assert convolution(g, unit) == g


def test_convolution_associative():
    rng = np.random.default_rng(13)
    a, b, c = (sparse_random_tensor(rng, 2, 4) for _ in range(3))
    assert max_coeff_diff(
        convolution(convolution(a, b), c), convolution(a, convolution(b, c))
    ) <= 1e-12


def test_convolution_exp_adds_exponents():
    # Oracle: series expansion of exp(e_1) and exp(2 e_1) at N=3.
    one = tensor_exp(TruncatedTensor.basis(1, 3, word(1)))
    two = convolution(one.tensor, one.tensor)
    for w, expected in series_exp_coeffs(2.0, 3).items():
        assert two.coeff(w) == pytest.approx(expected, abs=1e-14)


def test_convolution_level_mismatch():
    with pytest.raises(ValueError):
        convolution(TruncatedTensor.unit(2, 2), TruncatedTensor.unit(2, 3))


# ---------------------------------------------------------------------------
# exp / log.
# ---------------------------------------------------------------------------

def test_tensor_exp_two_term_series():
    delta = 0.7
    g = tensor_exp(TruncatedTensor(1, 2, {word(1): delta}))
    assert g.coeff(EMPTY_WORD) == 1.0
    assert g.coeff(word(1)) == pytest.approx(delta)
    assert g.coeff(word(1, 1)) == pytest.approx(delta**2 / 2)


def test_tensor_log_identity_is_zero():
    assert tensor_log(GroupTensor.identity(2, 3)).norm_inf() == 0.0


def test_exp_log_round_trip():
    a = TruncatedTensor(2, 4, {word(1): 1.0, word(2): 1.0})
    assert max_coeff_diff(tensor_log(tensor_exp(a)), a) <= 1e-12
    rng = np.random.default_rng(5)
    b = sparse_random_tensor(rng, 2, 4)
    b = b - b.coeff(EMPTY_WORD) * TruncatedTensor.unit(2, 4)
    assert max_coeff_diff(tensor_log(tensor_exp(b)), b) <= 1e-10


def test_tensor_exp_rejects_unit_component():
    with pytest.raises(ValueError):
        tensor_exp(TruncatedTensor.unit(2, 2))


# ---------------------------------------------------------------------------
# Characters and inverses.
# ---------------------------------------------------------------------------

def test_identity_is_character():
    chk = is_character(TruncatedTensor.unit(2, 3))
    assert chk.ok and chk.violation == 0.0


def test_exp_of_level_one_is_character():
    g = tensor_exp(TruncatedTensor(2, 4, {word(1): 1.0, word(2): 1.0}))
    chk = is_character(g.tensor, tol=1e-10)
    assert chk.ok


def test_non_character_flagged():
    bad = TruncatedTensor(2, 2, {EMPTY_WORD: 1.0, word(1, 1): 1.0})
    chk = is_character(bad, tol=1e-10)
    assert not chk.ok
    assert chk.violation == pytest.approx(2.0)  # ⟨a, e_1 ⧢ e_1⟩ = 2, ⟨a,e_1⟩² = 0
    assert chk.worst_pair == (word(1), word(1))


def test_group_inverse_examples():
    ident = GroupTensor.identity(2, 3)
    assert group_inverse(ident) == ident
    delta = 0.4
    g = tensor_exp(TruncatedTensor(1, 3, {word(1): delta}))
    inv = group_inverse(g)
    for w, expected in series_exp_coeffs(-delta, 3).items():
        assert inv.coeff(w) == pytest.approx(expected, abs=1e-14)


def test_group_inverse_residual_for_segment_signature():
    rng = np.random.default_rng(17)
    seg = TruncatedTensor(3, 4, {word(i): rng.standard_normal() for i in (1, 2, 3)})
    g = tensor_exp(seg)
    inv = group_inverse(g)
    resid = max_coeff_diff(
        convolution(g.tensor, inv.tensor), TruncatedTensor.unit(3, 4)
    )
    assert resid <= 1e-12


def test_group_inverse_flags_non_character():
    bad = GroupTensor(TruncatedTensor(2, 2, {EMPTY_WORD: 1.0, word(1, 1): 0.5}))
    with pytest.raises(ValueError):
        group_inverse(bad)


def test_characters_closed_under_convolution():
    rng = np.random.default_rng(23)
    g = tensor_exp(TruncatedTensor(2, 3, {word(1): rng.standard_normal(), word(2): rng.standard_normal()}))
    h = tensor_exp(TruncatedTensor(2, 3, {word(1): rng.standard_normal(), word(2): rng.standard_normal()}))
    gh = g.convolve(h)
    assert is_character(gh.tensor, tol=1e-10).ok


# ---------------------------------------------------------------------------
# Deshuffles.
# ---------------------------------------------------------------------------

def test_deshuffles_examples():
    t = deshuffles(word(1, 2), 2)
    assert t.tuples == {(word(1), word(2)), (word(2), word(1))}
    t = deshuffles(word(1, 1), 2)
    assert t.tuples == {(word(1), word(1))}
    t = deshuffles(word(1, 2, 3), 2)
    assert len(t.tuples) == 6


def test_deshuffles_arity_bounds():
    with pytest.raises(ValueError):
        deshuffles(word(1, 2), 3)
    with pytest.raises(ValueError):
        deshuffles(word(1, 2), 0)


def test_deshuffles_tuples_shuffle_back_to_word():
    # Each tuple must shuffle to a tensor whose e_w coefficient is >= 1,
    # cross-checked by the direct interleaving-count oracle; the recorded
    # weight must be exactly that coefficient.
    for w in [word(1, 2), word(1, 1, 2), word(1, 2, 1, 2), word(2, 2, 1)]:
        for k in range(1, len(w) + 1):
            table = deshuffles(w, k)
            for parts in table.tuples:
                coeff = shuffle_coefficient(w, parts)
                assert coeff >= 1
                assert table.weights[parts] == coeff


def test_deshuffle_weights_capture_multiplicity():
    table = deshuffles(word(1, 1), 2)
    assert table.weights[(word(1), word(1))] == 2
    table = deshuffles(word(1, 1, 1), 3)
    assert table.weights[(word(1), word(1), word(1))] == 6


def test_deshuffle_cache_concurrent_access():
    # The memo cache must tolerate concurrent reads and idempotent inserts.
    from concurrent.futures import ThreadPoolExecutor

    from roughkit.algebra import _DESHUFFLE_CACHE

    _DESHUFFLE_CACHE.clear()
    targets = [(w, k) for w in words_up_to(3, 4) if len(w) >= 1 for k in range(1, len(w) + 1)]

    def worker(_):
        return [deshuffles(w, k).tuples for w, k in targets]

    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(worker, range(16)))
    assert all(r == results[0] for r in results)


def test_deshuffles_closed_under_permutation():
    for k in (2, 3):
        t = deshuffles(word(1, 2, 2), k)
        for parts in t.tuples:
            for perm in itertools.permutations(parts):
                assert perm in t.tuples


def brute_support_scan(w: Word, k: int, d: int) -> set[tuple[Word, ...]]:
    """Scan all k-tuples of non-empty words with total length |w| and keep
    those whose shuffle product contains e_w (interleaving-count oracle)."""
    out = set()
    lengths = range(1, len(w) - k + 2)
    for combo in itertools.product(lengths, repeat=k):
        if sum(combo) != len(w):
            continue
        pools = [itertools.product(range(1, d + 1), repeat=p) for p in combo]
        for letter_tuples in itertools.product(*pools):
            parts = tuple(Word(t) for t in letter_tuples)
            if shuffle_coefficient(w, parts) != 0:
                out.add(parts)
    return out


@pytest.mark.parametrize("w,k", [
    (word(1, 2), 2),
    (word(1, 2, 3), 2),
    (word(1, 2, 3), 3),
    (word(1, 1, 2, 2), 2),
    (word(2, 1, 2), 3),
])
def test_deshuffles_match_brute_force_scan(w, k):
    d = w.max_letter
    assert deshuffles(w, k).tuples == brute_support_scan(w, k, d)


# ---------------------------------------------------------------------------
# Homogeneous norm and distance.
# ---------------------------------------------------------------------------

def test_norm_identity_zero():
    assert homogeneous_norm(GroupTensor.identity(2, 3)) == 0.0


def test_norm_of_exponential_is_increment_size():
    delta = 0.37
    g = tensor_exp(TruncatedTensor(1, 4, {word(1): delta}))
    # Every graded term gives (k! * |delta|^k / k!)^(1/k) = |delta|.
    assert homogeneous_norm(g) == pytest.approx(delta, abs=1e-14)


def test_distance_to_self_zero():
    g = tensor_exp(TruncatedTensor(2, 3, {word(1): 0.3, word(2): -1.1}))
    assert group_distance(g, g) == 0.0


# ---------------------------------------------------------------------------
# Serialization.
# ---------------------------------------------------------------------------

def test_json_round_trip_bit_exact():
    rng = np.random.default_rng(29)
    t = sparse_random_tensor(rng, 3, 3)
    back = TruncatedTensor.from_json(t.to_json())
    assert back == t  # exact dict equality, hence bit-exact floats


def test_json_canonical_word_order():
    t = TruncatedTensor(2, 2, {word(2, 1): 1.0, word(1): 2.0, EMPTY_WORD: 3.0})
    words = [tuple(term["word"]) for term in t.to_json_dict()["terms"]]
    assert words == [(), (1,), (2, 1)]
