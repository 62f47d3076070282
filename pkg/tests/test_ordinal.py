import random

import pytest
from sympy.sets.ordinals import Ordinal as SymOrd, OmegaPower

from irw.ordinal import (Ordinal, ZERO, ONE, OMEGA, ord_add, ord_cmp,
                         ord_inf_sum, ord_decompose, ord_cofinal_split,
                         ConstantFamily, AffineFamily, SampledFamily)
from irw.errors import PreconditionViolated, UnsupportedFamily


def to_sympy(o: Ordinal):
    if o.is_zero:
        return SymOrd()
    return SymOrd(*[OmegaPower(e, c) for e, c in o.terms])


def random_ordinal(rng, max_exp=3, max_coeff=4):
    exps = sorted(rng.sample(range(max_exp + 1), rng.randint(0, max_exp + 1)),
                  reverse=True)
    return Ordinal(tuple((e, rng.randint(1, max_coeff)) for e in exps))


def test_add_examples():
    assert ZERO + OMEGA == OMEGA
    assert Ordinal.from_int(3) + OMEGA == OMEGA
    # (w*2+1) + (w+5) = w*3+5, cross-checked against the sympy oracle
    a = Ordinal(((1, 2), (0, 1)))
    b = Ordinal(((1, 1), (0, 5)))
    assert a + b == Ordinal(((1, 3), (0, 5)))
    assert to_sympy(a) + to_sympy(b) == to_sympy(a + b)


def test_cmp_examples():
    assert ord_cmp(OMEGA, OMEGA) == 0
    assert ord_cmp(OMEGA, Ordinal.from_int(5)) == 1
    assert ord_cmp(Ordinal(((2, 1), (0, 1))), Ordinal(((1, 9),))) == 1


def test_add_cmp_against_sympy_oracle():
    rng = random.Random(7)
    for _ in range(600):
        a, b = random_ordinal(rng), random_ordinal(rng)
        assert to_sympy(a + b) == to_sympy(a) + to_sympy(b)
        assert (a < b) == (to_sympy(a) < to_sympy(b))
        assert (a == b) == (to_sympy(a) == to_sympy(b))


def test_add_associative_and_identity():
    rng = random.Random(11)
    for _ in range(500):
        a, b, c = (random_ordinal(rng) for _ in range(3))
        assert (a + b) + c == a + (b + c)
        assert a + ZERO == a and ZERO + a == a


def test_inf_sum_examples():
    assert ord_inf_sum(ConstantFamily(ONE)) == OMEGA
    # constant w -> w^2: partial sums w*n, sup w^2
    assert ord_inf_sum(ConstantFamily(OMEGA)) == Ordinal.omega_power(2)
    assert ord_inf_sum(AffineFamily(2, 1)) == OMEGA
    assert ord_inf_sum(AffineFamily(0, 0)) == ZERO
    assert ord_inf_sum(ConstantFamily(ZERO)) == ZERO


def test_inf_sum_dominates_partials():
    rng = random.Random(3)
    for _ in range(200):
        alpha = random_ordinal(rng)
        fam = ConstantFamily(alpha)
        s = ord_inf_sum(fam)
        partial = ZERO
        for n in range(9):
            partial = partial + fam.at(n)
            if not alpha.is_zero:
                assert partial < s
            else:
                assert partial == s


def test_decompose_examples():
    # beta=3 against constant w: k=0, g=3
    assert ord_decompose(Ordinal.from_int(3), ConstantFamily(OMEGA)) == \
        (0, Ordinal.from_int(3))
    # beta=5 against constant 2: 2+2+1, k=2 g=1
    assert ord_decompose(Ordinal.from_int(5), ConstantFamily(Ordinal.from_int(2))) == \
        (2, ONE)
    # beta=w*2+3 against constant w: k=2, g=3
    assert ord_decompose(Ordinal(((1, 2), (0, 3))), ConstantFamily(OMEGA)) == \
        (2, Ordinal.from_int(3))


def test_decompose_roundtrip_and_uniqueness():
    rng = random.Random(23)
    families = [ConstantFamily(OMEGA), ConstantFamily(Ordinal.from_int(3)),
                AffineFamily(1, 1), AffineFamily(2, 0),
                SampledFamily(lambda i: Ordinal.omega_power(2) if i == 0 else ONE,
                              1, ONE)]
    for _ in range(500):
        fam = rng.choice(families)
        total = ord_inf_sum(fam)
        beta = random_ordinal(rng)
        if not beta < total:
            with pytest.raises(PreconditionViolated):
                ord_decompose(beta, fam)
            continue
        k, g = ord_decompose(beta, fam)
        recomposed = ZERO
        for i in range(k):
            recomposed = recomposed + fam.at(i)
        assert recomposed + g == beta
        assert g < fam.at(k)
        # uniqueness among valid decompositions, brute force over smaller k
        for k2 in range(k):
            partial = ZERO
            for i in range(k2):
                partial = partial + fam.at(i)
            # would need g2 with partial + g2 = beta and g2 < a_{k2}
            if partial <= beta:
                g2 = beta.minus(partial)
                assert not g2 < fam.at(k2)


def test_decompose_precondition():
    with pytest.raises(PreconditionViolated):
        ord_decompose(OMEGA, ConstantFamily(ONE))


def test_cofinal_split_examples():
    fam = ord_cofinal_split(OMEGA)
    assert isinstance(fam, ConstantFamily) and fam.value == ONE
    fam = ord_cofinal_split(Ordinal.omega_power(2))
    assert isinstance(fam, ConstantFamily) and fam.value == OMEGA
    assert ord_inf_sum(fam) == Ordinal.omega_power(2)
    # w^2 + w -> a_0 = w^2, a_{i>0} = 1
    alpha = Ordinal(((2, 1), (1, 1)))
    fam = ord_cofinal_split(alpha)
    assert fam.at(0) == Ordinal.omega_power(2)
    assert fam.at(1) == ONE and fam.at(5) == ONE
    assert ord_inf_sum(fam) == alpha


def test_cofinal_split_properties():
    rng = random.Random(5)
    seen = 0
    while seen < 300:
        alpha = random_ordinal(rng)
        if not alpha.is_limit:
            with pytest.raises(PreconditionViolated):
                ord_cofinal_split(alpha)
            continue
        seen += 1
        fam = ord_cofinal_split(alpha)
        assert ord_inf_sum(fam) == alpha
        for i in range(6):
            ai = fam.at(i)
            assert ZERO < ai < alpha


def test_sampled_family_pattern_guard():
    bad = SampledFamily(lambda i: ONE if i < 3 else OMEGA, 1, ONE)
    with pytest.raises(UnsupportedFamily):
        ord_inf_sum(bad)


def test_parse_print_roundtrip():
    rng = random.Random(17)
    for _ in range(200):
        a = random_ordinal(rng)
        assert Ordinal.parse(str(a)) == a
    assert str(Ordinal(((2, 3), (1, 1), (0, 5)))) == "w^2*3 + w + 5"
    assert Ordinal.parse("w^2*3 + w*1 + 5") == Ordinal(((2, 3), (1, 1), (0, 5)))


def test_minus():
    rng = random.Random(29)
    for _ in range(400):
        a, b = random_ordinal(rng), random_ordinal(rng)
        lo, hi = (a, b) if a <= b else (b, a)
        g = hi.minus(lo)
        assert lo + g == hi
