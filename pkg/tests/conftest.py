import pytest

from dnews.distortion import make_builtin

# one representative per builtin family, also used by the acceptance grid
FAMILY_PARAMS = [
    ("mean-cvar", {"lambda": 0.5, "alpha": 0.8}),
    ("dev-median", {"a": 0.3}),
    ("wang", {"lambda": 0.5}),
    ("prop-hazards", {"a": 0.7}),
    ("gini", {"a": 0.5}),
]

ALL_BUILTINS = [
    ("risk-neutral", {}),
    ("cvar", {"alpha": 0.5}),
    *FAMILY_PARAMS,
    ("wang", {"lambda": 1.5}),
    ("prop-hazards", {"a": 0.55}),
    ("pl", {"knots": [0.0, 0.2, 0.7, 1.0], "slopes": [0.3, 0.8, 1.8]}),
]


def _ids(cases):
    return [f"{f}-{'-'.join(f'{k}{v}' for k, v in p.items() if k != 'knots' and k != 'slopes')}" for f, p in cases]


@pytest.fixture(params=ALL_BUILTINS, ids=_ids(ALL_BUILTINS))
def builtin(request):
    family, params = request.param
    return make_builtin(family, params)


@pytest.fixture(params=FAMILY_PARAMS, ids=_ids(FAMILY_PARAMS))
def family(request):
    return request.param
