import warnings

import numpy as np
import pytest

from factornow.synthetic import make_fixture, write_fixture


@pytest.fixture(scope="session")
def fixture_data():
    """The bundled synthetic panel/target/schema with its ragged edge."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return make_fixture()


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """Fixture CSVs and schema on disk, for ingestion and CLI tests."""
    out = tmp_path_factory.mktemp("fixture")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        write_fixture(out)
    return out


@pytest.fixture(autouse=True)
def _quiet_transform_warnings():
    # the fixture's bounded topic series legitimately hit zero denominators
    # during transform-candidate evaluation; keep test output readable
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="zero denominator", category=RuntimeWarning)
        warnings.filterwarnings("ignore", message=r"order \(\d", category=RuntimeWarning)
        warnings.filterwarnings("ignore", message=r"ARMA\(\d+,\d+\) estimate", category=RuntimeWarning)
        yield


def ar1_path(rng, n, phi, sd=1.0):
    x = np.zeros(n)
    x[0] = rng.normal(0, sd / np.sqrt(1 - phi**2) if abs(phi) < 1 else sd)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + rng.normal(0, sd)
    return x
