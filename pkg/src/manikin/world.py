"""Simulation orchestration: the per-step pipeline, traces, and summaries.

Step order: read targets, evaluate controllers (task springs, optional
posture control, guide couplings), detect unilateral constraints, solve the
implicit velocity system plus the contact LCP, integrate manikin and guides,
then record ports and a trace row. Manikin and guides are solved as one
implicit block system so stiff couplings stay stable at plain dt stepping;
each then advances with the same geometric integrator.

Everything random flows from per-task seeded streams, so a (scenario, seed)
pair replays bitwise.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np

from manikin import chain as chain_mod
from manikin import constraints as cons_mod
from manikin import control, dynamics, guides as guides_mod
from manikin.chain import SimState, _fk_arrays
from manikin.errors import ManikinError, SchemaError, StepError
from manikin.passivity import PassivityLedger, Port
from manikin.scenario import Scenario
from manikin.se3 import Transform, pose_error, quat_to_rot, rot_exp, rot_to_quat

TRACE_VERSION = 1


class _TaskRuntime:
    def __init__(self, cfg, rng: np.random.Generator, dt: float):
        self.cfg = cfg
        self.rng = rng
        self.dt = dt
        self.noise_pos = np.zeros(3)
        self.noise_rot = np.zeros(3)
        self.override: tuple[np.ndarray, np.ndarray] | None = None  # (position, quat)
        self.x_d = Transform.identity()
        self.energy = 0.0
        # scratch, refreshed every step
        self.J = None
        self.err = None
        self.x = Transform.identity()

    def update_target(self, t: float):
        """Scripted or overridden base target plus the seeded jitter process.

        The jitter stream advances every step regardless of overrides so live
        commands never shift the random sequence.
        """
        noise = self.cfg.noise
        if noise.position > 0.0 or noise.rotation > 0.0:
            rho = float(np.exp(-self.dt / noise.correlation_time))
            mix = float(np.sqrt(1.0 - rho * rho))
            self.noise_pos = rho * self.noise_pos + noise.position * mix * self.rng.standard_normal(3)
            self.noise_rot = rho * self.noise_rot + noise.rotation * mix * self.rng.standard_normal(3)
        if self.override is not None:
            pos, quat = self.override
        else:
            pos, quat = self.cfg.schedule.at(t)
        R = quat_to_rot(quat)
        self.x_d = Transform(R @ rot_exp(self.noise_rot), pos + self.noise_pos)


class _GuideRuntime:
    def __init__(self, cfg, state: SimState):
        self.cfg = cfg
        self.mech = cfg.mechanism
        self.state = state
        self.on = bool(cfg.schedule[0][1]) if cfg.schedule else True
        self.forced: bool | None = None  # live toggle wins over the schedule
        self.energy_manikin_side = 0.0
        self.energy_guide_side = 0.0

    def update_on(self, t: float):
        if self.forced is not None:
            self.on = self.forced
            return
        on = self.on
        for ts, flag in self.cfg.schedule:
            if t >= ts:
                on = flag
        self.on = on


@dataclass
class TraceFrame:
    step: int
    t: float
    values: dict


class World:
    """Owns all mutable state of one simulation run."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.chain = scenario.chain
        self.dt = scenario.dt
        self.step_index = 0
        self.state = (
            SimState(scenario.initial_q.copy(), 0.0)
            if scenario.initial_q is not None
            else self.chain.neutral_state()
        )
        root = np.random.SeedSequence(scenario.seed)
        streams = root.spawn(max(len(scenario.tasks), 1))
        self.tasks = [
            _TaskRuntime(cfg, np.random.default_rng(streams[i]), self.dt)
            for i, cfg in enumerate(scenario.tasks)
        ]
        self.guides = [self._init_guide(cfg) for cfg in scenario.guides]
        self.obstacles = scenario.obstacles
        self.contact_cfg = scenario.contact
        self.joint_dissipation = 0.0

        # posture control
        self.internal = None
        if scenario.internal is not None:
            icfg = scenario.internal
            q_ref = np.asarray(icfg.get("q_ref", self.state.q), dtype=float)
            if q_ref.shape != (self.chain.nq,):
                raise SchemaError("internal_control.q_ref needs nq entries")
            weights = icfg.get("weights", 1.0)
            potential = _posture_potential(self.chain, q_ref, weights, icfg.get("alpha", 1.0))
            against = icfg.get("project_against", scenario.tasks[0].name if scenario.tasks else None)
            self.internal = {"potential": potential, "against": against}

        # counterexample drive (constant prioritized port wrenches)
        self.counterexample = None
        if scenario.counterexample is not None:
            from manikin.passivity import build_counterexample
            from manikin.scenario import _frame_ref

            frame = _frame_ref(scenario.counterexample["port"])
            W2 = np.asarray(scenario.counterexample["w2"], dtype=float)
            J1 = chain_mod.frame_jacobian(self.chain, self.state, frame.link, frame.point)
            self.counterexample = {
                "frame": frame,
                "built": build_counterexample(J1, self.chain.damping, W2),
            }

        # initial task targets and the default storage bound
        for task in self.tasks:
            pos, quat = task.cfg.schedule.at(0.0)
            task.x_d = Transform(quat_to_rot(quat), pos)
        beta = scenario.beta_sq
        if beta is None:
            beta = self._initial_spring_potential()
        self.ledger = PassivityLedger(beta_sq=beta)
        self.trace: list[TraceFrame] = []
        self._columns: list[str] | None = None
        self._contact_keys = self._all_contact_keys()
        self._wall_time = 0.0

    # -- construction helpers ------------------------------------------------

    def _init_guide(self, cfg) -> _GuideRuntime:
        state = cfg.mechanism.chain.neutral_state()
        if cfg.initial_q is not None:
            if cfg.initial_q.shape != (cfg.mechanism.chain.nq,):
                raise SchemaError(f"guide {cfg.mechanism.name!r}: initial_q needs nq entries")
            state = SimState(cfg.initial_q.copy(), 0.0)
        else:
            state = self._relax_guide(cfg.mechanism, state)
        return _GuideRuntime(cfg, state)

    def _relax_guide(self, mech, gstate: SimState, steps: int = 600) -> SimState:
        """Settle the guide onto the manikin attachment before t=0 so the
        coupling starts (near) energy-free. Implicit update: the coupling
        damping acts on the guide's own new velocity."""
        dt = 0.02
        Kg, Bg = mech.coupling.stiffness, mech.coupling.damping
        for _ in range(steps):
            geo = guides_mod.coupling_geometry(mech, self.chain, self.state, gstate)
            Jg = geo.J_g
            lhs = mech.B_v + Jg.T @ Bg @ Jg
            qdot = np.linalg.solve(lhs, -Jg.T @ (Kg @ geo.err))
            if np.linalg.norm(qdot) < 1e-12:
                break
            gstate = chain_mod.integrate(mech.chain, gstate, qdot, dt)
        return SimState(gstate.q, 0.0)

    def _initial_spring_potential(self) -> float:
        fk = _fk_arrays(self.chain, self.state)
        total = 0.0
        for task in self.tasks:
            ref = task.cfg.frame
            R, p = fk
            x = Transform(R[ref.link], R[ref.link] @ ref.point + p[ref.link])
            err = pose_error(task.x_d, x)
            total += 0.5 * float(err @ task.cfg.stiffness @ err)
        return total

    def _all_contact_keys(self) -> list[str]:
        keys = []
        for cp in self.chain.collision_points:
            for obs in self.obstacles:
                keys.append(f"contact:{cp.name or cp.link}/{obs.name or type(obs).__name__}")
        return keys

    # -- live commands -------------------------------------------------------

    def apply_command(self, cmd: dict):
        """Apply one live command at a step boundary. Raises on bad input."""
        kind = cmd.get("type")
        if kind == "set_target":
            task = next((t for t in self.tasks if t.cfg.name == cmd.get("task")), None)
            if task is None:
                raise ManikinError(f"unknown task {cmd.get('task')!r}")
            pos = np.asarray(cmd["position"], dtype=float)
            if pos.shape != (3,):
                raise ManikinError("set_target position must be a 3-vector")
            if "quaternion" in cmd:
                quat = np.asarray(cmd["quaternion"], dtype=float)
                quat = quat / np.linalg.norm(quat)
            elif "rpy" in cmd:
                quat = rot_to_quat(Transform.from_rpy(cmd["rpy"], (0, 0, 0)).R)
            elif task.override is not None:
                quat = task.override[1]
            else:
                _, quat = task.cfg.schedule.at(self.state.t)
            task.override = (pos, quat)
        elif kind == "clear_target":
            task = next((t for t in self.tasks if t.cfg.name == cmd.get("task")), None)
            if task is None:
                raise ManikinError(f"unknown task {cmd.get('task')!r}")
            task.override = None
        elif kind == "toggle_guide":
            guide = next((g for g in self.guides if g.mech.name == cmd.get("guide")), None)
            if guide is None:
                raise ManikinError(f"unknown guide {cmd.get('guide')!r}")
            if "on" in cmd:
                guide.forced = bool(cmd["on"])
            else:
                guide.forced = not guide.on
        else:
            raise ManikinError(f"unknown command type {kind!r}")

    # -- the step pipeline ---------------------------------------------------

    def step(self):
        try:
            self._step_inner()
        except ManikinError as err:
            raise StepError(self.step_index, err) from err

    def _step_inner(self):
        t0 = time.perf_counter()
        chain = self.chain
        state = self.state
        t = state.t
        nm = chain.nv

        # (1) targets and guide schedules
        for task in self.tasks:
            task.update_target(t)
        for g in self.guides:
            g.update_on(t)

        # Only actively coupled guides join the composite system; a guide
        # that is off (or has zero gains) exchanges no forces, cannot move,
        # and must leave the manikin solve untouched down to the last bit.
        coupled = [
            gi for gi, g in enumerate(self.guides)
            if g.on and (np.any(g.mech.coupling.stiffness) or np.any(g.mech.coupling.damping))
        ]
        blocks = {gi: None for gi in coupled}
        N = nm
        for gi in coupled:
            nvg = self.guides[gi].mech.chain.nv
            blocks[gi] = slice(N, N + nvg)
            N += nvg

        mfk = _fk_arrays(chain, state)
        R_l, p_l = mfk

        # (2) task channels
        S = np.zeros((N, N))
        S[:nm, :nm] = chain.damping
        rhs = np.zeros(N)
        for task in self.tasks:
            ref = task.cfg.frame
            x = Transform(R_l[ref.link], R_l[ref.link] @ ref.point + p_l[ref.link])
            J = chain_mod.frame_jacobian(chain, state, ref.link, ref.point, fk_arrays=mfk)
            err = pose_error(task.x_d, x)
            S[:nm, :nm] += J.T @ task.cfg.damping @ J
            rhs[:nm] += J.T @ (task.cfg.stiffness @ err)
            task.J, task.err, task.x = J, err, x

        # (3) posture control through the port-annihilating projection
        if self.internal is not None:
            pot = self.internal["potential"]
            against = self.internal["against"]
            if against is None:
                Pi = control.Projection(np.eye(nm), np.zeros((0, nm)))
            else:
                task = next(tk for tk in self.tasks if tk.cfg.name == against)
                Pi = control.build_internal_projection(task.J, chain.damping)
            rhs[:nm] += control.internal_torque(pot, Pi, state.q).values

        # (4) guide couplings, implicit on both sides
        geos = {}
        for gi in coupled:
            g = self.guides[gi]
            b = blocks[gi]
            geo = guides_mod.coupling_geometry(g.mech, chain, state, g.state, manikin_fk=mfk)
            geos[gi] = geo
            Kg, Bg = g.mech.coupling.stiffness, g.mech.coupling.damping
            Jm, Jg = geo.J_m, geo.J_g
            S[:nm, :nm] += Jm.T @ Bg @ Jm
            S[:nm, b] -= Jm.T @ Bg @ Jg
            S[b, :nm] -= Jg.T @ Bg @ Jm
            S[b, b] += Jg.T @ Bg @ Jg
            S[b, b] += g.mech.B_v
            spring = Kg @ geo.err
            rhs[:nm] += Jm.T @ spring
            rhs[b] -= Jg.T @ spring

        if self.scenario.gravity_torque is not None:
            rhs[:nm] += self.scenario.gravity_torque

        ce_power_target = None
        if self.counterexample is not None:
            frame = self.counterexample["frame"]
            ce = self.counterexample["built"]
            J1 = chain_mod.frame_jacobian(chain, state, frame.link, frame.point, fk_arrays=mfk)
            Pi = control.build_internal_projection(J1, chain.damping)
            rhs[:nm] += J1.T @ ce.W1 + Pi.matrix @ (J1.T @ ce.W2)
            ce_power_target = (J1, ce)

        # (5) unilateral constraints, rows lifted into the composite space
        margin = self.contact_cfg["margin"]
        cons = []
        for c in cons_mod.detect_constraints(chain, state, self.obstacles, margin, fk_arrays=mfk):
            row = np.zeros(N)
            row[:nm] = c.row
            cons.append(cons_mod.UnilateralConstraint(c.kind, c.key, c.gap, row))
        for gi in coupled:  # an uncoupled guide cannot move, so no limit rows
            g = self.guides[gi]
            for c in cons_mod.detect_constraints(g.mech.chain, g.state, (), margin):
                row = np.zeros(N)
                row[blocks[gi]] = c.row
                cons.append(
                    cons_mod.UnilateralConstraint(c.kind, f"{g.mech.name}:{c.key}", c.gap, row)
                )

        # (6) implicit velocity solve + LCP
        S = 0.5 * (S + S.T)
        factor = dynamics.SystemFactor(S)
        if not factor.solvable:
            raise ManikinError(
                f"system matrix singular (condition {factor.condition:.3e}); cannot advance"
            )
        qdot = factor.solve(rhs)
        forces = {}
        lcp_residual = 0.0
        if cons:
            M, w = cons_mod.assemble_lcp(
                cons, factor, qdot, self.dt, self.contact_cfg["gamma"]
            )
            sol = cons_mod.solve_lcp(
                M, w, self.contact_cfg["tol"], self.contact_cfg["max_iter"]
            )
            if np.any(sol.f != 0.0):
                qdot = qdot + factor.solve(cons_mod.constraint_torques(cons, sol, N).values)
            forces = {c.key: (c, fi) for c, fi in zip(cons, sol.f)}
            lcp_residual = sol.residual

        qdot_m = qdot[:nm]
        self.last_qdot = qdot

        # (7) integrate manikin and guides with the same scheme
        new_state = chain_mod.integrate(chain, state, qdot_m, self.dt)
        new_gstates = []
        for gi, g in enumerate(self.guides):
            gdot = qdot[blocks[gi]] if gi in geos else np.zeros(g.mech.chain.nv)
            new_gstates.append(chain_mod.integrate(g.mech.chain, g.state, gdot, self.dt))

        # (8) ports, ledger, trace row
        new_fk = _fk_arrays(chain, new_state)
        ports = []
        row: dict[str, float] = {}
        for task in self.tasks:
            V = task.J @ qdot_m
            W = task.cfg.stiffness @ task.err + task.cfg.damping @ (-V)
            ref = task.cfg.frame
            Rn, pn = new_fk
            x_end = Transform(Rn[ref.link], Rn[ref.link] @ ref.point + pn[ref.link])
            err_end = pose_error(task.x_d, x_end)
            W_end = task.cfg.stiffness @ err_end + task.cfg.damping @ (-V)
            ports.append(
                Port(f"task:{task.cfg.name}", task.J, W, V, "task",
                     power_end=float(W_end @ V))
            )
            row[f"{task.cfg.name}_err_pos"] = float(np.linalg.norm(task.err[0:3]))
            row[f"{task.cfg.name}_err_rot"] = float(np.linalg.norm(task.err[3:6]))
            row[f"{task.cfg.name}_power"] = float(W @ V)

        for c, fi in forces.values():
            Vc = np.array([c.row @ qdot])
            ports.append(Port(c.key, c.row[None, :], np.array([fi]), Vc, "contact"))
        for gi, g in enumerate(self.guides):
            if gi not in geos:
                continue
            geo = geos[gi]
            V_m = geo.J_m @ qdot_m
            V_g = geo.J_g @ qdot[blocks[gi]]
            W_m = g.mech.coupling.stiffness @ geo.err + g.mech.coupling.damping @ (V_g - V_m)
            _, err_end, _, _ = guides_mod.coupling_error(
                g.mech, chain, new_state, new_gstates[gi], manikin_fk=new_fk
            )
            W_m_end = (g.mech.coupling.stiffness @ err_end
                       + g.mech.coupling.damping @ (V_g - V_m))
            ports.append(Port(f"guide:{g.mech.name}:manikin", geo.J_m, W_m, V_m, "guide",
                              power_end=float(W_m_end @ V_m)))
            ports.append(Port(f"guide:{g.mech.name}:guide", geo.J_g, -W_m, V_g, "guide",
                              power_end=float(-W_m_end @ V_g)))
        if ce_power_target is not None:
            J1, ce = ce_power_target
            V1 = J1 @ qdot_m
            ports.append(Port("ce:port1", J1, ce.W1, V1, "task"))
            ports.append(Port("ce:port2", J1, ce.W2, V1, "task"))

        self.state = new_state
        for g, gs in zip(self.guides, new_gstates):
            g.state = gs
        self.ledger.record_step(ports, self.dt, t=new_state.t)
        self.joint_dissipation += float(qdot_m @ chain.damping @ qdot_m) * self.dt

        # contact gap/force columns exist for every probe/obstacle pair
        Rn, pn = new_fk
        for cp in chain.collision_points:
            pw = Rn[cp.link] @ cp.point + pn[cp.link]
            for obs in self.obstacles:
                key = f"contact:{cp.name or cp.link}/{obs.name or type(obs).__name__}"
                gap, _ = obs.gap_and_normal(pw)
                row[f"{key}_gap"] = float(gap)
                row[f"{key}_force"] = float(forces[key][1]) if key in forces else 0.0
        for task in self.tasks:
            row[f"{task.cfg.name}_energy"] = self.ledger.energies.get(f"task:{task.cfg.name}", 0.0)
        for g in self.guides:
            row[f"guide_{g.mech.name}_on"] = 1.0 if g.on else 0.0
        metric = self.scenario.axis_metric
        if metric is not None:
            pose = Transform(Rn[metric.frame.link],
                             Rn[metric.frame.link] @ metric.frame.point + pn[metric.frame.link])
            row["axis_error"] = guides_mod.axis_error(pose, metric.ideal_axis, metric.tool_axis)
        row["joint_power"] = float(qdot_m @ chain.damping @ qdot_m)
        row["lcp_residual"] = lcp_residual
        row["total_energy"] = self.ledger.total_external
        row["violated"] = 1.0 if self.ledger.verdict().violated else 0.0

        values = {"t": new_state.t}
        for i, qi in enumerate(self.state.q):
            values[f"q{i}"] = float(qi)
        for g, gs in zip(self.guides, new_gstates):
            for i, qi in enumerate(gs.q):
                values[f"guide_{g.mech.name}_q{i}"] = float(qi)
        values.update(row)
        self.step_index += 1
        self.trace.append(TraceFrame(self.step_index, new_state.t, values))
        self._wall_time += time.perf_counter() - t0

    # -- running -------------------------------------------------------------

    @property
    def n_steps_total(self) -> int:
        return int(round(self.scenario.duration / self.dt))

    def run(self, steps: int | None = None):
        n = self.n_steps_total if steps is None else steps
        while self.step_index < n:
            self.step()

    def summary(self) -> dict:
        verdict = self.ledger.verdict()
        max_pen = 0.0
        max_axis = 0.0
        min_total = 0.0
        for frame in self.trace:
            for key, val in frame.values.items():
                if key.endswith("_gap"):
                    max_pen = max(max_pen, -val)
            if "axis_error" in frame.values:
                max_axis = max(max_axis, abs(frame.values["axis_error"]))
            min_total = min(min_total, frame.values["total_energy"])
        steps = max(self.step_index, 1)
        return {
            "scenario": self.scenario.name,
            "steps": self.step_index,
            "final_t": self.state.t,
            "max_penetration": max_pen,
            "max_axis_error": max_axis,
            "min_total_energy": min_total,
            "joint_dissipation": self.joint_dissipation,
            "beta_sq": self.ledger.beta_sq,
            "verdict": "violated" if verdict.violated else "passive_so_far",
            "t_violation": verdict.t_violation,
            "wall_time_s": self._wall_time,
            "mean_step_ms": 1e3 * self._wall_time / steps,
        }

    # -- trace output ----------------------------------------------------------

    def trace_columns(self) -> list[str]:
        if not self.trace:
            return []
        cols = list(self.trace[0].values.keys())
        wanted = self.scenario.output_columns
        if wanted != "all":
            keep = [c for c in cols if c == "t" or c in wanted]
            return keep
        return cols

    def write_trace(self, fh: io.TextIOBase):
        cols = self.trace_columns()
        fh.write(
            f"# manikin-trace v{TRACE_VERSION} scenario={self.scenario.name} "
            f"config={self.scenario.config_hash} seed={self.scenario.seed}\n"
        )
        fh.write(",".join(["step"] + cols) + "\n")
        for frame in self.trace:
            out = [str(frame.step)]
            for c in cols:
                out.append(repr(frame.values.get(c, 0.0)))
            fh.write(",".join(out) + "\n")

    def reset(self):
        """Back to t=0 with fresh seeded streams; used by the live server."""
        self.__init__(self.scenario)

    # -- live protocol messages ------------------------------------------------

    @staticmethod
    def _pose7(R, p) -> list:
        return [float(v) for v in p] + [float(v) for v in rot_to_quat(R)]

    def hello_message(self) -> dict:
        """Static scene description sent once per connection."""
        chain = self.chain
        obstacles = []
        for obs in self.obstacles:
            entry = {"name": getattr(obs, "name", "")}
            if hasattr(obs, "normal"):
                entry.update(kind="half_space", normal=list(map(float, obs.normal)),
                             offset=float(obs.offset))
            else:
                entry.update(kind="sphere", center=list(map(float, obs.center)),
                             radius=float(obs.radius))
            obstacles.append(entry)
        return {
            "type": "hello",
            "version": TRACE_VERSION,
            "scenario": {
                "name": self.scenario.name,
                "dt": self.dt,
                "duration": self.scenario.duration,
                "seed": self.scenario.seed,
                "config": self.scenario.config_hash,
            },
            "chain": {
                "parents": [int(l.parent) for l in chain.links],
                "lengths": [float(l.length) for l in chain.links],
            },
            "guides": [
                {
                    "name": g.mech.name,
                    "parents": [int(l.parent) for l in g.mech.chain.links],
                    "on": g.on,
                }
                for g in self.guides
            ],
            "tasks": [{"name": t.cfg.name} for t in self.tasks],
            "obstacles": obstacles,
            "has_axis_metric": self.scenario.axis_metric is not None,
        }

    def frame_message(self, paused: bool = False) -> dict:
        """Snapshot of the world after the latest step."""
        fk = _fk_arrays(self.chain, self.state)
        R_l, p_l = fk
        last = self.trace[-1].values if self.trace else {}
        tasks = []
        for task in self.tasks:
            ref = task.cfg.frame
            pose = self._pose7(R_l[ref.link],
                               R_l[ref.link] @ ref.point + p_l[ref.link])
            tasks.append(
                {
                    "name": task.cfg.name,
                    "pose": pose,
                    "target": self._pose7(task.x_d.R, task.x_d.p),
                    "err_pos": last.get(f"{task.cfg.name}_err_pos", 0.0),
                    "err_rot": last.get(f"{task.cfg.name}_err_rot", 0.0),
                    "power": last.get(f"{task.cfg.name}_power", 0.0),
                    "energy": last.get(f"{task.cfg.name}_energy", 0.0),
                }
            )
        guides = []
        for g in self.guides:
            gfk = _fk_arrays(g.mech.chain, g.state)
            guides.append(
                {
                    "name": g.mech.name,
                    "on": g.on,
                    "links": [self._pose7(gfk[0][i], gfk[1][i])
                              for i in range(g.mech.chain.n_links)],
                }
            )
        contacts = [
            {"key": key, "gap": last[f"{key}_gap"], "force": last[f"{key}_force"]}
            for key in self._contact_keys
            if f"{key}_gap" in last
        ]
        verdict = self.ledger.verdict()
        msg = {
            "type": "frame",
            "version": TRACE_VERSION,
            "step": self.step_index,
            "t": self.state.t,
            "paused": paused,
            "links": [self._pose7(R_l[i], p_l[i]) for i in range(self.chain.n_links)],
            "tasks": tasks,
            "guides": guides,
            "contacts": contacts,
            "energy": {
                "total": self.ledger.total_external,
                "joint_power": last.get("joint_power", 0.0),
                "beta_sq": self.ledger.beta_sq,
                "violated": verdict.violated,
                "t_violation": verdict.t_violation,
            },
        }
        if "axis_error" in last:
            msg["axis_error"] = last["axis_error"]
        return msg


def _posture_potential(chain, q_ref, weights, alpha):
    """Quadratic posture pull acting on the 1-DOF coordinates, expressed in
    velocity space (floating-base block unweighted)."""
    w_in = np.asarray(weights, dtype=float)
    sq = chain._scalar_qidx
    sv = chain._scalar_vidx
    if w_in.ndim == 0:
        w_scalar = np.full(len(sq), float(w_in))
    elif w_in.shape == (len(sq),):
        w_scalar = w_in
    elif w_in.shape == (chain.nq,):
        w_scalar = w_in[sq]
    else:
        raise SchemaError("internal_control.weights has the wrong length")
    if np.any(w_scalar < 0):
        raise SchemaError("internal_control.weights must be non-negative")

    def evaluate(q):
        d = np.asarray(q, dtype=float)[sq] - q_ref[sq]
        return 0.5 * float(d @ (w_scalar * d))

    def gradient(q):
        g = np.zeros(chain.nv)
        g[sv] = w_scalar * (np.asarray(q, dtype=float)[sq] - q_ref[sq])
        return g

    return control.InternalPotential(evaluate, gradient, alpha)


def run_scenario(path_or_scenario, overrides=(), out=None, steps=None) -> dict:
    """Run a scenario to completion; optionally write the CSV trace.

    Returns the summary dict (plus the world under key "_world").
    """
    if isinstance(path_or_scenario, Scenario):
        scenario = path_or_scenario
    else:
        from manikin.scenario import load_scenario

        scenario = load_scenario(path_or_scenario, overrides)
    world = World(scenario)
    world.run(steps)
    if out is not None:
        with open(out, "w") as fh:
            world.write_trace(fh)
    summary = world.summary()
    summary["_world"] = world
    return summary
