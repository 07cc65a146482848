import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import flip_bits, naive_hamming, plant_mate, random_code, random_codeset
from hvindex.bitcode import BitCode, CodeSet, substring_at
from hvindex.errors import ConfigurationError, DimensionError, DomainError
from hvindex.mih import MihIndex, build, insert, query_optimized, query_rneighbors, substring_balance


def oracle_rneighbors(codes, q, r):
    return {i for i, c in enumerate(codes.codes) if bin(c.value ^ q.value).count("1") <= r}


def test_k512_t16_has_32_bit_keys():
    ix = build(random_codeset(1, 50, 512), 16)
    assert len(ix.tables) == 16 and ix.s == 32
    assert all(k < 2**32 for table in ix.tables for k in table)


def test_each_code_filed_once_per_table():
    codes = random_codeset(2, 1000, 256)
    ix = build(codes, 8)
    assert sum(len(b) for table in ix.tables for b in table.values()) == 1000 * 8
    for m, table in enumerate(ix.tables):
        ids = sorted(i for b in table.values() for i in b)
        assert ids == list(range(1000))
        for key, bucket in table.items():
            for i in bucket:
                assert substring_at(codes[i], m, 8).value == key


def test_bad_divisibility():
    with pytest.raises(ConfigurationError):
        MihIndex(100, 16)


def test_empty_index():
    ix = build(CodeSet(64), 4)
    assert ix.size == 0
    found, stats = query_rneighbors(ix, BitCode.zeros(64), 10)
    assert found == set() and stats.candidates_examined == 0
    best, _ = query_optimized(ix, BitCode.zeros(64), 10)
    assert best is None


def test_single_table_is_exact_hash(rng):
    codes = random_codeset(3, 200, 32)
    ix = build(codes, 1)
    q = codes[17]
    found, _ = query_rneighbors(ix, q, 0)
    assert 17 in found
    # r below t keeps the per-table radius at zero
    found, _ = query_rneighbors(ix, flip_bits(q, [0]), 1)
    assert found == oracle_rneighbors(codes, flip_bits(q, [0]), 1)


@pytest.mark.parametrize("r", [0, 8, 16, 32])
def test_matches_linear_scan_oracle(r):
    codes = random_codeset(4, 1000, 256)
    ix = build(codes, 8)
    rng = random.Random(r)
    for _ in range(100):
        base = codes[rng.randrange(len(codes))]
        q = plant_mate(rng, base, rng.randrange(0, r + 8))
        found, stats = query_rneighbors(ix, q, r)
        assert found == oracle_rneighbors(codes, q, r)
        assert stats.true_neighbors == len(found)
        assert stats.full_verifications <= stats.candidates_examined
        assert stats.tables_probed == 8


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 10**6),
    t=st.sampled_from([1, 2, 4, 8, 16]),
    r=st.integers(0, 40),
)
def test_exactness_property(seed, t, r):
    rng = random.Random(seed)
    codes = CodeSet(64, [random_code(rng, 64) for _ in range(60)], list(range(60)))
    # add near-duplicates so small radii have something to find
    for i in range(20):
        codes.append(plant_mate(rng, codes[i], rng.randrange(0, 12)), 60 + i)
    ix = build(codes, t)
    q = plant_mate(rng, codes[rng.randrange(len(codes))], rng.randrange(0, 20))
    found, _ = query_rneighbors(ix, q, r)
    assert found == oracle_rneighbors(codes, q, r)


def test_wide_substrings_use_python_scan():
    # s = 128 > 64 bits takes the non-numpy path
    codes = random_codeset(5, 300, 256)
    ix = build(codes, 2)
    rng = random.Random(5)
    for _ in range(20):
        q = plant_mate(rng, codes[rng.randrange(300)], 10)
        assert query_rneighbors(ix, q, 20)[0] == oracle_rneighbors(codes, q, 20)


def test_large_radius_key_scan_path():
    # per-table radius big enough that the table is scanned rather than enumerated
    codes = random_codeset(6, 2000, 128)
    ix = build(codes, 4)
    rng = random.Random(6)
    for _ in range(10):
        q = random_code(rng, 128)
        assert query_rneighbors(ix, q, 48)[0] == oracle_rneighbors(codes, q, 48)


def test_query_errors():
    ix = build(random_codeset(7, 10, 64), 4)
    with pytest.raises(DimensionError):
        ix.query_rneighbors(BitCode.zeros(32), 1)
    with pytest.raises(DomainError):
        ix.query_rneighbors(BitCode.zeros(64), 65)
    with pytest.raises(DimensionError):
        ix.insert(BitCode.zeros(32))


def test_optimized_exact_enrolled_stops_at_first_table():
    codes = random_codeset(8, 500, 256)
    ix = build(codes, 8)
    best, stats = query_optimized(ix, codes[42], 0)
    assert best == 42
    assert stats.tables_probed == 1
    assert stats.candidates_examined == len(ix.tables[0][substring_at(codes[42], 0, 8).value])


def test_optimized_none_probes_all_tables():
    codes = random_codeset(9, 300, 256)
    ix = build(codes, 8)
    q = random_code(random.Random(99), 256)
    assert not oracle_rneighbors(codes, q, 16)
    best, stats = query_optimized(ix, q, 16)
    assert best is None and stats.tables_probed == 8


def algorithm_oracle(codes, q, r, t):
    """Direct transcription: walk tables in order, verify, stop at the first hit."""
    radius = r // t
    examined = 0
    for m in range(t):
        qm = substring_at(q, m, t).value
        hits = []
        for i, c in enumerate(codes.codes):
            if bin(substring_at(c, m, t).value ^ qm).count("1") <= radius:
                examined += 1
                d = naive_hamming(c, q)
                if d <= r:
                    hits.append((d, i))
        if hits:
            return min(hits)[1], examined, m + 1
    return None, examined, t


def test_optimized_matches_direct_transcription():
    codes = random_codeset(10, 300, 128)
    ix = build(codes, 4)
    rng = random.Random(10)
    for _ in range(60):
        r = rng.choice([4, 8, 16, 24])
        q = plant_mate(rng, codes[rng.randrange(300)], rng.randrange(0, r + 1))
        best, stats = query_optimized(ix, q, r)
        exp_best, exp_examined, exp_tables = algorithm_oracle(codes, q, r, 4)
        assert best == exp_best
        assert stats.candidates_examined == exp_examined
        assert stats.tables_probed == exp_tables


def test_optimized_planted_mates_paired_with_naive():
    codes = random_codeset(11, 1000, 256)
    ix = build(codes, 8)
    rng = random.Random(11)
    r = 32
    for _ in range(500):
        q = plant_mate(rng, codes[rng.randrange(1000)], r // 2)
        best, ostats = query_optimized(ix, q, r)
        _, nstats = query_rneighbors(ix, q, r)
        assert best is not None and naive_hamming(codes[best], q) <= r
        assert ostats.candidates_examined <= nstats.candidates_examined
        assert ostats.full_verifications <= nstats.full_verifications


def test_insert_equivalent_to_build():
    codes = random_codeset(12, 200, 128)
    built = build(codes, 4)
    grown = MihIndex(128, 4)
    for c, label in zip(codes.codes, codes.labels):
        assert insert(grown, c, label) == grown.size - 1
    rng = random.Random(12)
    for _ in range(50):
        q = plant_mate(rng, codes[rng.randrange(200)], rng.randrange(0, 20))
        assert built.query_rneighbors(q, 16)[0] == grown.query_rneighbors(q, 16)[0]
    assert grown.codeset() == codes


def test_insert_after_query_invalidates_scan_cache():
    codes = random_codeset(13, 2000, 128)
    ix = build(codes, 4)
    q = random_code(random.Random(13), 128)
    ix.query_rneighbors(q, 48)
    new = ix.insert(flip_bits(q, range(40)), 7)
    assert new in ix.query_rneighbors(q, 48)[0]


def test_duplicate_insertion_both_retrieved():
    ix = MihIndex(64, 4)
    c = BitCode(64, 0xABCDEF)
    a, b = ix.insert(c), ix.insert(c)
    assert a != b
    assert ix.query_rneighbors(c, 0)[0] == {a, b}


def test_balance_identical():
    c = BitCode(64, 12345)
    dists, dev = substring_balance(c, c, 4)
    assert dists == [0, 0, 0, 0] and dev == 0


def test_balance_concentrated_closed_form():
    r = 12
    a = BitCode.zeros(64)
    b = flip_bits(a, range(r))
    dists, dev = substring_balance(a, b, 4)
    assert dists == [12, 0, 0, 0]
    assert dev == pytest.approx(math.sqrt(((r - r / 4) ** 2 + 3 * (r / 4) ** 2) / 4))


@settings(max_examples=100, deadline=None)
@given(a=st.integers(0, 2**256 - 1), b=st.integers(0, 2**256 - 1), t=st.sampled_from([1, 2, 4, 8, 16, 32]))
def test_balance_partition(a, b, t):
    ca, cb = BitCode(256, a), BitCode(256, b)
    dists, dev = substring_balance(ca, cb, t)
    assert len(dists) == t
    assert sum(dists) == naive_hamming(ca, cb)
    assert dev >= 0


def test_balance_errors():
    with pytest.raises(ConfigurationError):
        substring_balance(BitCode.zeros(64), BitCode.zeros(64), 5)
    with pytest.raises(DimensionError):
        substring_balance(BitCode.zeros(64), BitCode.zeros(32), 4)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), r=st.integers(0, 63))
def test_radius_monotone_and_stats_ordered(seed, r):
    rng = random.Random(seed)
    codes = CodeSet(64, [random_code(rng, 64) for _ in range(100)], list(range(100)))
    ix = build(codes, 4)
    q = plant_mate(rng, codes[0], rng.randrange(0, 30))
    small, st_small = ix.query_rneighbors(q, r)
    big, _ = ix.query_rneighbors(q, r + 1)
    assert small <= big
    assert st_small.true_neighbors <= st_small.full_verifications <= st_small.candidates_examined
    best, _ = ix.query_optimized(q, r)
    assert (best is None) == (not small)
    assert best is None or best in small


def test_build_order_independent():
    codes = random_codeset(14, 300, 128)
    perm = list(range(300))
    random.Random(14).shuffle(perm)
    shuffled = codes.subset(perm)
    a, b = build(codes, 8), build(shuffled, 8)
    rng = random.Random(15)
    for _ in range(30):
        q = plant_mate(rng, codes[rng.randrange(300)], rng.randrange(0, 24))
        assert a.query_rneighbors(q, 20)[0] == {perm[i] for i in b.query_rneighbors(q, 20)[0]}
