"""The acceptance suite behind ``manikin verify``.

Eleven checks, each pinned to its tolerance, run against the bundled
scenarios and randomized fixtures. Every check prints one pass/fail line;
the process exit code reflects the conjunction. The pytest suite asserts
the same results through :func:`run_all`.
"""

from __future__ import annotations

import io
import itertools
import time
from dataclasses import dataclass

import numpy as np

from manikin import chain as chain_mod
from manikin import control
from manikin.chain import JointSpec, KinematicChain, LinkSpec, SimState
from manikin.constraints import solve_lcp
from manikin.passivity import two_port_internal_leak_demo
from manikin.scenario import bundled_scenario_path, load_scenario
from manikin.se3 import Transform
from manikin.world import World

BUNDLED = ("table_lean", "drill_guided", "drill_free", "energy_drain")
UNPROJECTED = ("table_lean", "drill_guided", "drill_free")


@dataclass
class CriterionResult:
    index: int
    name: str
    passed: bool
    details: str
    seconds: float = 0.0


def _run_bundled(cache: dict, name: str) -> World:
    if name not in cache:
        world = World(load_scenario(bundled_scenario_path(name)))
        world.run()
        cache[name] = world
    return cache[name]


def _column(world: World, key: str) -> np.ndarray:
    return np.array([f.values[key] for f in world.trace])


# ---------------------------------------------------------------------------
# randomized fixtures


def _random_spd(rng, n: int) -> np.ndarray:
    if rng.random() < 0.5:
        return np.diag(rng.uniform(0.5, 8.0, n))
    A = rng.standard_normal((n, n))
    return A @ A.T + 0.1 * np.eye(n)


def _random_chain(rng, n_joints: int, floating: bool = False) -> KinematicChain:
    joints, links = [], []
    if floating:
        joints.append(JointSpec("floating_base"))
        links.append(LinkSpec(-1, Transform.identity(), 0.0))
    while len(joints) < n_joints:
        kind = "revolute" if rng.random() < 0.75 else "prismatic"
        axis = rng.standard_normal(3)
        joints.append(JointSpec(kind, axis / np.linalg.norm(axis)))
        offset = Transform.from_rpy(rng.uniform(-0.4, 0.4, 3), rng.uniform(-0.4, 0.4, 3))
        links.append(LinkSpec(len(links) - 1, offset, 0.3))
    nv = sum(j.nv for j in joints)
    return KinematicChain(joints, links, np.diag(rng.uniform(0.5, 4.0, nv)))


def _random_state(rng, chain: KinematicChain) -> SimState:
    state = chain.neutral_state()
    dq = rng.uniform(-1.0, 1.0, chain.nv)
    return chain_mod.retract(chain, state, dq)


def _fd_jacobian(chain, state, link, point, eps=1e-7) -> np.ndarray:
    """Central-difference twist map, the Jacobian oracle."""
    J = np.zeros((6, chain.nv))
    for i in range(chain.nv):
        d = np.zeros(chain.nv)
        d[i] = eps
        fp = chain_mod.forward_kinematics(chain, chain_mod.retract(chain, state, d))[link]
        fm = chain_mod.forward_kinematics(chain, chain_mod.retract(chain, state, -d))[link]
        pp = fp.apply(np.asarray(point, dtype=float))
        pm = fm.apply(np.asarray(point, dtype=float))
        J[0:3, i] = (pp - pm) / (2 * eps)
        from manikin.se3 import rot_log

        J[3:6, i] = rot_log(fp.R @ fm.R.T) / (2 * eps)
    return J


def enumerate_lcp(M: np.ndarray, w: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Brute-force active-set solution of a (small, PD) LCP."""
    m = len(w)
    for size in range(m + 1):
        for active in itertools.combinations(range(m), size):
            f = np.zeros(m)
            idx = list(active)
            if idx:
                try:
                    f[idx] = np.linalg.solve(M[np.ix_(idx, idx)], -w[idx])
                except np.linalg.LinAlgError:
                    continue
                if np.any(f[idx] < -tol):
                    continue
            s = M @ f + w
            if np.all(s >= -1e-9):
                return np.maximum(f, 0.0)
    raise RuntimeError("enumeration found no solution (matrix not PSD?)")


# ---------------------------------------------------------------------------
# criteria


def criterion_1_passivity_unprojected(cache) -> tuple[bool, str]:
    worst = np.inf
    for name in UNPROJECTED:
        world = _run_bundled(cache, name)
        total = _column(world, "total_energy")
        margin = (total + world.ledger.beta_sq).min()
        worst = min(worst, margin)
        if margin < -1e-9:
            return False, f"{name}: total port energy dips {margin:.3e} below -beta^2"
        if world.joint_dissipation < -1e-12:
            return False, f"{name}: joint dissipation integral {world.joint_dissipation:.3e}"
    return True, f"worst energy margin above -beta^2: {worst:.3e} J"


def criterion_2_energy_drain(cache) -> tuple[bool, str]:
    t0 = time.perf_counter()
    world = _run_bundled(cache, "energy_drain")
    elapsed = time.perf_counter() - t0
    ce = world.counterexample["built"]
    powers = []
    for _, per_port, _ in world.ledger.history:
        powers.append(per_port.get("ce:port1", 0.0) + per_port.get("ce:port2", 0.0))
    powers = np.array(powers)
    if powers.max() >= 0.0:
        return False, f"two-port power reaches {powers.max():.3e} >= 0"
    avg = world.ledger.total_external / world.state.t
    rel = abs(avg - ce.predicted_power) / abs(ce.predicted_power)
    if rel > 0.02:
        return False, f"mean power {avg:.4f} vs predicted {ce.predicted_power:.4f} ({rel:.2%})"
    for beta in (1.0, 10.0, 100.0):
        verdict = world.ledger.verdict(beta)
        if not verdict.violated:
            return False, f"beta^2={beta}: verdict never flips"
    if elapsed >= 5.0:
        return False, f"runtime {elapsed:.2f} s >= 5 s"
    return True, (f"mean power {avg:.4f} W vs {ce.predicted_power:.4f} W ({rel:.3%}); "
                  f"violations at all beta^2; runtime {elapsed:.2f} s")


def criterion_3_internal_projection(cache) -> tuple[bool, str]:
    rng = np.random.default_rng(42)
    worst = {"idem": 0.0, "annih": 0.0, "eig": 0.0, "port": 0.0}
    for _ in range(100):
        n = int(rng.integers(4, 10))
        m = int(rng.integers(1, 7))
        J1 = rng.standard_normal((m, n))
        B = _random_spd(rng, n)
        Binv = np.linalg.inv(B)
        proj = control.build_internal_projection(J1, B)
        Pi = proj.matrix
        worst["idem"] = max(worst["idem"], np.abs(Pi @ Pi - Pi).max())
        worst["annih"] = max(worst["annih"], np.abs(J1 @ Binv @ Pi).max())
        Msym = 0.5 * (Binv @ Pi + (Binv @ Pi).T)
        worst["eig"] = max(worst["eig"], -np.linalg.eigvalsh(Msym).min())
        W1 = rng.standard_normal(m)
        g = rng.standard_normal(n)
        qdot = Binv @ (J1.T @ W1 - 1.3 * (Pi @ g))
        worst["port"] = max(worst["port"], -float(W1 @ (J1 @ qdot)))
    ok = (worst["idem"] < 1e-10 and worst["annih"] < 1e-10
          and worst["eig"] < 1e-10 and worst["port"] < 1e-12)
    return ok, (f"worst: idempotency {worst['idem']:.2e}, annihilation {worst['annih']:.2e}, "
                f"min-eig deficit {worst['eig']:.2e}, port power deficit {worst['port']:.2e}")


def _leak_fixture():
    rng = np.random.default_rng(5)
    chain = _random_chain(rng, 4)
    state = _random_state(rng, chain)
    J_hand = chain_mod.frame_jacobian(chain, state, 3, [0.3, 0, 0])[0:3]
    J_elbow = chain_mod.frame_jacobian(chain, state, 1, [0.3, 0, 0])[0:3]
    q_ref = state.q + rng.uniform(-0.8, 0.8, chain.nq)
    pot = control.quadratic_posture_potential(q_ref, 2.0, alpha=1.0)
    return chain, state, pot, J_hand, J_elbow


def criterion_4_two_port_leak(cache) -> tuple[bool, str]:
    chain, state, pot, J_hand, J_elbow = _leak_fixture()
    adversarial = two_port_internal_leak_demo(
        chain, state, pot, J_hand, J_elbow, w2_scale=5.0, steps=50
    )
    coincident = two_port_internal_leak_demo(
        chain, state, pot, J_hand, J_hand, w2_scale=5.0, steps=10
    )
    ok = adversarial.min_cross < -1e-6 and coincident.max_abs_cross < 1e-10
    return ok, (f"adversarial cross term {adversarial.min_cross:.3e} W; "
                f"coincident |cross| {coincident.max_abs_cross:.3e} W")


def criterion_5_self_projectivity(cache) -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    worst_null = 0.0
    worst_row = 0.0
    for _ in range(100):
        n = int(rng.integers(4, 10))
        m = int(rng.integers(1, min(n, 7)))
        J1 = rng.standard_normal((m, n))
        B = _random_spd(rng, n)
        proj = control.build_internal_projection(J1, B)
        A = J1 @ np.linalg.inv(B)
        # kernel construction: gradient invisible to the port
        _, _, Vt = np.linalg.svd(A)
        kernel = Vt[np.linalg.matrix_rank(A):]
        g_null = kernel.T @ rng.standard_normal(kernel.shape[0])
        pot = control.InternalPotential(lambda q: 0.0, lambda q, g=g_null: g, 1.0)
        worst_null = max(worst_null, control.self_projectivity_residual(pot, proj, np.zeros(n)))
        # annihilated construction: gradient entirely inside the port's row space
        g_row = J1.T @ rng.standard_normal(m)
        pot = control.InternalPotential(lambda q: 0.0, lambda q, g=g_row: g, 1.0)
        res = control.self_projectivity_residual(pot, proj, np.zeros(n))
        worst_row = max(worst_row, abs(res - 1.0))
    ok = worst_null < 1e-10 and worst_row < 1e-10
    return ok, f"kernel residual {worst_null:.2e}; row-space |residual-1| {worst_row:.2e}"


def criterion_6_lcp(cache) -> tuple[bool, str]:
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 5))
        A = rng.standard_normal((m, m))
        M = A @ A.T + 0.05 * np.eye(m)
        w = rng.standard_normal(m) * 2.0
        sol = solve_lcp(M, w, tol=1e-12, max_iter=5000)
        f_ref = enumerate_lcp(M, w)
        worst = max(worst, np.abs(sol.f - f_ref).max())
    if worst >= 1e-8:
        return False, f"solver deviates {worst:.3e} from the active-set oracle"
    step_resid = 0.0
    for name in BUNDLED:
        world = _run_bundled(cache, name)
        step_resid = max(step_resid, _column(world, "lcp_residual").max())
    ok = step_resid < 1e-8
    return ok, f"oracle deviation {worst:.2e}; max step residual {step_resid:.2e}"


def criterion_7_table_lean(cache) -> tuple[bool, str]:
    world = _run_bundled(cache, "table_lean")
    gaps = _column(world, "contact:hand/table_gap")
    forces = _column(world, "contact:hand/table_force")
    pen = -gaps.min()
    ok = pen < 1e-4 and forces.min() >= 0.0 and forces.max() > 0.0
    return ok, (f"max penetration {pen:.3e} m; force range "
                f"[{forces.min():.3f}, {forces.max():.3f}] N")


def criterion_8_drill_contrast(cache) -> tuple[bool, str]:
    guided = _column(_run_bundled(cache, "drill_guided"), "axis_error")
    free = _column(_run_bundled(cache, "drill_free"), "axis_error")
    rms = lambda a: float(np.sqrt(np.mean(a**2)))
    tail = len(guided) // 5
    checks = {
        "max ratio": guided.max() / free.max(),
        "rms ratio": rms(guided) / rms(free),
    }
    steady = guided[-tail:].max()
    ok = checks["max ratio"] < 0.25 and checks["rms ratio"] < 0.25 and steady < 0.05
    return ok, (f"max ratio {checks['max ratio']:.3f}, rms ratio {checks['rms ratio']:.3f} "
                f"(need < 0.25); steady-state {steady:.4f} rad (need < 0.05)")


def criterion_9_joint_limits(cache) -> tuple[bool, str]:
    worst = 0.0
    for name in BUNDLED:
        world = _run_bundled(cache, name)
        for j in world.chain.limited_joints():
            lo, hi = world.chain.limits[j]
            q = _column(world, f"q{world.chain._qidx[j]}")
            worst = max(worst, float((lo - q).max()), float((q - hi).max()))
        for g in world.guides:
            gchain = g.mech.chain
            for j in gchain.limited_joints():
                lo, hi = gchain.limits[j]
                q = _column(world, f"guide_{g.mech.name}_q{gchain._qidx[j]}")
                worst = max(worst, float((lo - q).max()), float((q - hi).max()))
    ok = worst < 1e-6
    return ok, f"worst limit overshoot {worst:.3e} rad (need < 1e-6)"


def criterion_10_numerics(cache) -> tuple[bool, str]:
    rng = np.random.default_rng(23)
    worst_fd = 0.0
    for _ in range(100):
        chain = _random_chain(rng, int(rng.integers(2, 7)), floating=bool(rng.random() < 0.3))
        state = _random_state(rng, chain)
        link = int(rng.integers(0, chain.n_links))
        point = rng.uniform(-0.4, 0.4, 3)
        J = chain_mod.frame_jacobian(chain, state, link, point)
        J_fd = _fd_jacobian(chain, state, link, point)
        worst_fd = max(worst_fd, np.abs(J - J_fd).max())
    if worst_fd >= 1e-6:
        return False, f"Jacobian vs finite differences deviates {worst_fd:.3e}"

    base = KinematicChain([JointSpec("floating_base")], [LinkSpec(-1)], 1.0)
    state = base.neutral_state()
    qdot = np.array([0.05, -0.02, 0.01, 0.4, -1.1, 0.7])
    drift = 0.0
    for _ in range(100_000):
        state = chain_mod.integrate(base, state, qdot, 1e-3)
        drift = max(drift, abs(np.linalg.norm(state.q[0:4]) - 1.0))
    if drift >= 1e-9:
        return False, f"orientation norm drift {drift:.3e} over 1e5 steps"

    world_a = World(load_scenario(bundled_scenario_path("table_lean")))
    world_a.run()
    buf_a, buf_b = io.StringIO(), io.StringIO()
    world_a.write_trace(buf_a)
    _run_bundled(cache, "table_lean").write_trace(buf_b)
    if buf_a.getvalue() != buf_b.getvalue():
        return False, "two runs with the same seed differ"
    return True, (f"FD deviation {worst_fd:.2e}; norm drift {drift:.2e} over 1e5 steps; "
                  "repeat run byte-identical")


def criterion_11_performance(cache) -> tuple[bool, str]:
    # best of three fresh runs: machine-load jitter is not the artifact's cost
    from manikin.scenario import load_scenario

    scenario = load_scenario(bundled_scenario_path("drill_guided"))
    best = np.inf
    for _ in range(3):
        world = World(scenario)
        world.run(400)
        best = min(best, world.summary()["mean_step_ms"])
    return best < 1.0, f"mean step {best:.3f} ms (best of 3 x 400 steps, need < 1 ms)"


CRITERIA = [
    (1, "passivity of the unprojected architecture", criterion_1_passivity_unprojected),
    (2, "projection counterexample energy drain", criterion_2_energy_drain),
    (3, "internal projection correctness", criterion_3_internal_projection),
    (4, "two-port internal leak", criterion_4_two_port_leak),
    (5, "self-projectivity residuals", criterion_5_self_projectivity),
    (6, "LCP solver vs active-set oracle", criterion_6_lcp),
    (7, "table lean: no penetration", criterion_7_table_lean),
    (8, "drill guide on/off contrast", criterion_8_drill_contrast),
    (9, "joint limit enforcement", criterion_9_joint_limits),
    (10, "numerics: Jacobians, integrator, determinism", criterion_10_numerics),
    (11, "real-time step budget", criterion_11_performance),
]


def run_all(indices=None, echo=print) -> list[CriterionResult]:
    cache: dict = {}
    results = []
    for index, name, fn in CRITERIA:
        if indices and index not in indices:
            continue
        t0 = time.perf_counter()
        try:
            passed, details = fn(cache)
        except Exception as err:  # a crash is a failure, not an abort
            passed, details = False, f"raised {type(err).__name__}: {err}"
        dt = time.perf_counter() - t0
        results.append(CriterionResult(index, name, passed, details, dt))
        if echo:
            mark = "PASS" if passed else "FAIL"
            echo(f"[{mark}] {index:2d}. {name}: {details} ({dt:.2f}s)")
    return results
