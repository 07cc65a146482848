import random

import numpy as np
import pytest

from hvindex.bitcode import BitCode, CodeSet


def random_code(rng: random.Random, width: int) -> BitCode:
    return BitCode(width, rng.getrandbits(width))


def random_codeset(seed: int, n: int, width: int, n_labels: int | None = None) -> CodeSet:
    rng = random.Random(seed)
    codes = [random_code(rng, width) for _ in range(n)]
    labels = [rng.randrange(n_labels) if n_labels else i for i in range(n)]
    return CodeSet(width, codes, labels)


def flip_bits(code: BitCode, positions) -> BitCode:
    value = code.value
    for p in positions:
        value ^= 1 << p
    return BitCode(code.width, value)


def plant_mate(rng: random.Random, code: BitCode, distance: int) -> BitCode:
    return flip_bits(code, rng.sample(range(code.width), distance))


def naive_hamming(a: BitCode, b: BitCode) -> int:
    return sum(((a.value >> j) & 1) != ((b.value >> j) & 1) for j in range(a.width))


@pytest.fixture
def rng():
    return random.Random(12345)


@pytest.fixture
def nprng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed at the end of the session
CRITERIA: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
