import pytest

SMALL = """
[grid]
nx = 64
ny = 32

[detector]
region = [-12, -6, 24, 12]

[solver]
nz = 16

[plan]
gains = [2.0, 3.0]
shots = 2
binning = [1, 2, 4]
seed = 7
"""


@pytest.fixture
def small_toml(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p
