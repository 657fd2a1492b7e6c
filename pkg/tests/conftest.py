import pytest

from carnotlab.groups import euclidean, heisenberg


@pytest.fixture(scope="session")
def heis():
    return heisenberg()


@pytest.fixture(scope="session", params=[1, 2, 3])
def euclid(request):
    return euclidean(request.param)
