"""The compiled and pure-python kernels must agree to rounding."""

import numpy as np
import pytest

from helpers import enumerate_lcp, random_chain, random_state

from manikin import _kernels_py, backend
from manikin import chain as chain_mod
from manikin.scenario import scenario_from_dict
from manikin.world import World


requires_compiled = pytest.mark.skipif(
    "compiled" not in backend.available(), reason="compiled kernels not built"
)


def test_backend_selection_roundtrip():
    names = backend.available()
    assert "python" in names
    for name in names:
        assert backend.use(name).COMPILED == (name == "compiled")
    backend.use("compiled" if "compiled" in names else "python")
    with pytest.raises(ValueError):
        backend.use("fortran")


@requires_compiled
def test_fk_and_jacobian_agree(rng):
    from manikin import _kernels

    for _ in range(25):
        ch = random_chain(rng, int(rng.integers(2, 7)), floating=bool(rng.random() < 0.5))
        state = random_state(rng, ch)
        args = (ch._parents, ch._kinds, ch._axes, ch._off_R, ch._off_p, ch._qidx, state.q)
        Rc, pc = _kernels.fk(*args)
        Rp, pp = _kernels_py.fk(*args)
        assert np.abs(Rc - Rp).max() < 1e-14
        assert np.abs(pc - pp).max() < 1e-14
        link = int(rng.integers(0, ch.n_links))
        point = rng.uniform(-0.5, 0.5, 3)
        Jc = _kernels.point_jacobian(ch._parents, ch._kinds, ch._axes, ch._off_R,
                                     ch._vidx, ch.nv, Rc, pc, link, point)
        Jp = _kernels_py.point_jacobian(ch._parents, ch._kinds, ch._axes, ch._off_R,
                                        ch._vidx, ch.nv, Rp, pp, link, point)
        assert np.abs(Jc - Jp).max() < 1e-13


@requires_compiled
def test_pgs_agree_and_match_oracle(rng):
    from manikin import _kernels

    for _ in range(100):
        m = int(rng.integers(1, 5))
        A = rng.standard_normal((m, m))
        M = np.ascontiguousarray(A @ A.T + 0.05 * np.eye(m))
        w = np.ascontiguousarray(2.0 * rng.standard_normal(m))
        fc = np.zeros(m)
        fp = np.zeros(m)
        _kernels.pgs(M, w, fc, 1e-12, 5000)
        _kernels_py.pgs(M, w, fp, 1e-12, 5000)
        ref = enumerate_lcp(M, w)
        assert np.abs(fc - ref).max() < 1e-8
        assert np.abs(fp - ref).max() < 1e-8


@requires_compiled
def test_smooth_trajectory_agreement():
    """A contact-free run stays within rounding noise across backends."""
    raw = {
        "version": 1, "name": "smooth", "dt": 0.01, "duration": 2.0, "seed": 4,
        "chain": {
            "version": 1,
            "joints": [{"kind": "revolute", "axis": [0, 0, 1]},
                        {"kind": "revolute", "axis": [0, 1, 0]},
                        {"kind": "revolute", "axis": [1, 0, 0]},
                        {"kind": "revolute", "axis": [0, 1, 0]}],
            "links": [{"parent": -1}, {"parent": 0, "translation": [0.3, 0, 0]},
                       {"parent": 1, "translation": [0.3, 0, 0]},
                       {"parent": 2, "translation": [0.3, 0, 0]}],
            "damping": 4.0,
        },
        "tasks": [{
            "name": "tip", "frame": {"link": 3, "point": [0.3, 0, 0]},
            "stiffness": [120, 120, 120, 3, 3, 3],
            "damping": [12, 12, 12, 0.5, 0.5, 0.5],
            "waypoints": [{"t": 0, "position": [0.9, 0.2, 0.2]},
                           {"t": 2, "position": [0.5, -0.4, 0.3]}],
            "noise": {"position": 0.01, "correlation_time": 0.5},
        }],
    }
    scn = scenario_from_dict(raw)
    results = {}
    previous = backend.active_name()
    try:
        for name in backend.available():
            backend.use(name)
            world = World(scn)
            world.run()
            results[name] = world.state.q.copy()
    finally:
        backend.use(previous)
    assert np.abs(results["compiled"] - results["python"]).max() < 1e-9
