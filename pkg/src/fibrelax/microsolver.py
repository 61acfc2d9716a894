"""Damped explicit dynamic relaxation for one fiber-network static problem.

The static equilibrium of a pin-jointed truss is found by integrating a
fictitious damped dynamic system with a two-step (kick-drift-kick) central
difference scheme until the free-DOF force residual drops below tolerance.
Fibers are linear elastic in engineering strain on the reference length;
geometric nonlinearity enters through the current axis direction.

The integration loop is written as a lane program (see _lanes): vector and
element loops are split into per-lane chunks separated by barriers, while
scatters and reduction combines are executed by the lead lane in a fixed
order.  One lane gives the plain serial solver; several lanes model
per-operation dispatch.  Results are bit-identical for any lane count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from ._lanes import run_lanes
from .dofmap import DofMap, build_dofmap
from .network import AffineBC, FiberNetwork

ENERGY_FLOOR = 1e-30
LENGTH_COLLAPSE_FRACTION = 1e-12


class SolverError(RuntimeError):
    pass


class SingularElementError(SolverError):
    """An element's current length collapsed below the degeneracy guard."""


@dataclass(frozen=True)
class FixedDamping:
    c: float

    def __post_init__(self):
        if self.c < 0:
            raise ValueError(f"fixed damping coefficient must be >= 0, got {self.c}")


@dataclass(frozen=True)
class AdaptiveDamping:
    """Rayleigh-quotient damping: c = 2 sqrt(lambda) re-estimated every step."""


@dataclass(frozen=True)
class SolverConfig:
    tol_rel: float = 1e-8
    tol_abs: float = 0.0
    max_iters: int = 20000
    dt_safety: float = 0.5
    damping: FixedDamping | AdaptiveDamping = AdaptiveDamping()
    energy_check_interval: int = 0
    bc_ramp_iters: int = 0

    def __post_init__(self):
        if not (0.0 < self.dt_safety <= 1.0):
            raise ValueError(f"dt_safety must be in (0, 1], got {self.dt_safety}")
        if self.tol_rel < 0 or self.tol_abs < 0:
            raise ValueError("tolerances must be >= 0")
        if self.tol_rel == 0 and self.tol_abs == 0:
            raise ValueError("tol_rel and tol_abs cannot both be zero")
        if self.max_iters <= 0:
            raise ValueError(f"max_iters must be > 0, got {self.max_iters}")
        if self.energy_check_interval < 0 or self.bc_ramp_iters < 0:
            raise ValueError("intervals must be >= 0")


@dataclass
class EnergyLedger:
    w_kin: float = 0.0
    w_int: float = 0.0
    w_damp: float = 0.0
    w_ext: float = 0.0


@dataclass
class MicroState:
    """Per-problem solver state in permuted (free-prefix) DOF order."""

    u: NDArray[np.float64]
    v: NDArray[np.float64]
    a: NDArray[np.float64]
    f_int: NDArray[np.float64]
    m: NDArray[np.float64]
    n_free: int
    residual: float = math.inf
    iters: int = 0
    energy: EnergyLedger = field(default_factory=EnergyLedger)
    f_prev: NDArray[np.float64] | None = None
    dt: float = 0.0


@dataclass
class SolveResult:
    converged: bool
    iters: int
    final_residual: float
    u: NDArray[np.float64]                 # original DOF order
    avg_stress: NDArray[np.float64]        # 3x3 symmetric
    energy_residual: float | None
    r_ref: float

    def to_json(self) -> str:
        doc = {
            "converged": self.converged,
            "iters": self.iters,
            "final_residual": self.final_residual,
            "avg_stress": [float(x) for x in np.asarray(self.avg_stress).reshape(9)],
            "energy_residual": self.energy_residual,
            "u": [float(x) for x in np.asarray(self.u)],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "SolveResult":
        doc = json.loads(text)
        return cls(
            converged=bool(doc["converged"]),
            iters=int(doc["iters"]),
            final_residual=float(doc["final_residual"]),
            u=np.asarray(doc["u"], dtype=np.float64),
            avg_stress=np.asarray(doc["avg_stress"], dtype=np.float64).reshape(3, 3),
            energy_residual=None if doc["energy_residual"] is None else float(doc["energy_residual"]),
            r_ref=math.nan,
        )


@dataclass(frozen=True)
class ProblemSetup:
    """Geometry, materials and maps precomputed once per problem (solver order)."""

    network: FiberNetwork
    dofmap: DofMap
    x_ref: NDArray[np.float64]        # (n_nodes, 3) solver node order
    elems: NDArray[np.int64]          # (M, 2) solver node indices
    ea: NDArray[np.float64]           # (M,) E * A
    ref_len: NDArray[np.float64]      # (M,)
    wave_slow: NDArray[np.float64]    # (M,) sqrt(rho / E)
    eps_len: NDArray[np.float64]      # (M,) length-collapse guard
    node_mass: NDArray[np.float64]    # (n_nodes,) solver order
    u_presc: NDArray[np.float64]      # (n_fixed_nodes, 3) prescribed displacements

    @property
    def n_nodes(self) -> int:
        return len(self.x_ref)

    @property
    def n_free_nodes(self) -> int:
        return self.dofmap.n_free // 3

    @property
    def n_total(self) -> int:
        return self.dofmap.n_total


class NetworkMassError(ValueError):
    pass


def compute_lumped_mass(network: FiberNetwork) -> NDArray[np.float64]:
    """Per-DOF lumped mass in original order: rho*A*L/2 to each element end."""
    lengths = network.reference_lengths()
    rho = np.array([network.materials[m].density for m in network.elements[:, 2]])
    area = np.array([network.materials[m].cross_section_area for m in network.elements[:, 2]])
    half = rho * area * lengths / 2.0
    node_mass = np.zeros(network.n_nodes)
    np.add.at(node_mass, network.elements[:, 0], half)
    np.add.at(node_mass, network.elements[:, 1], half)
    if np.any(node_mass <= 0):
        bad = int(np.argmin(node_mass))
        raise NetworkMassError(f"node {bad} has zero mass (no incident elements)")
    return np.repeat(node_mass, 3)


def critical_time_step(network: FiberNetwork, safety: float = 1.0) -> float:
    """Reference-length CFL bound: safety * min over elements of L sqrt(rho/E)."""
    if network.n_elements == 0:
        raise ValueError("network has no elements")
    lengths = network.reference_lengths()
    mats = network.elements[:, 2]
    rho = np.array([network.materials[m].density for m in mats])
    emod = np.array([network.materials[m].elastic_modulus for m in mats])
    return float(safety * np.min(lengths * np.sqrt(rho / emod)))


def _element_force_coefficients(x2, u2, elems, ea, ref_len, eps_len, lo, hi, nd):
    """Fill nd[lo:hi) with the per-element end-force vector N * n.

    N = E A (l - L) / L is the axial force, n the current unit axis from end a
    to end b; the contribution to the assembled internal force is -N n at a
    and +N n at b.
    """
    ia = elems[lo:hi, 0]
    ib = elems[lo:hi, 1]
    d = (x2[ib] + u2[ib]) - (x2[ia] + u2[ia])
    length = np.sqrt(np.einsum("ij,ij->i", d, d))
    if np.any(length < eps_len[lo:hi]):
        bad = lo + int(np.argmin(length - eps_len[lo:hi]))
        raise SingularElementError(f"element {bad}: current length collapsed")
    coef = ea[lo:hi] * (length - ref_len[lo:hi]) / (ref_len[lo:hi] * length)
    nd[lo:hi] = d * coef[:, None]


def _scatter_forces(f2, elems, nd, n_nodes):
    """Accumulate end forces into f2 in element order (deterministic)."""
    for k in range(3):
        f2[:, k] += (np.bincount(elems[:, 0], weights=-nd[:, k], minlength=n_nodes)
                     + np.bincount(elems[:, 1], weights=nd[:, k], minlength=n_nodes))


def internal_forces(network: FiberNetwork, u: NDArray) -> NDArray[np.float64]:
    """Assembled internal force vector (original DOF order) at displacement u."""
    u = np.asarray(u, dtype=np.float64)
    n = network.n_nodes
    if u.shape[0] != 3 * n:
        raise ValueError(f"expected displacement vector of length {3 * n}, got {u.shape[0]}")
    elems = np.ascontiguousarray(network.elements[:, :2])
    mats = network.elements[:, 2]
    ea = np.array([network.materials[m].elastic_modulus * network.materials[m].cross_section_area
                   for m in mats])
    ref_len = network.reference_lengths()
    eps_len = LENGTH_COLLAPSE_FRACTION * ref_len
    nd = np.empty((len(elems), 3))
    _element_force_coefficients(network.node_coords, u.reshape(n, 3), elems,
                                ea, ref_len, eps_len, 0, len(elems), nd)
    f2 = np.zeros((n, 3))
    _scatter_forces(f2, elems, nd, n)
    return f2.reshape(-1)


def force_residual(f_int: NDArray, n_free: int) -> float:
    """L2 norm of the internal force over the free-DOF prefix."""
    f_int = np.asarray(f_int)
    if n_free > f_int.shape[0]:
        raise ValueError(f"n_free={n_free} exceeds vector length {f_int.shape[0]}")
    return float(np.sqrt(np.sum(np.square(f_int[:n_free]))))


def damping_coefficient(state: MicroState, mode: FixedDamping | AdaptiveDamping) -> float:
    """Damping coefficient for the current step.

    Fixed mode returns the configured constant.  Adaptive mode estimates the
    dominant eigenvalue with a Rayleigh quotient over a diagonal stiffness
    estimate k_i = (f_i - f_prev_i) / (dt v_i), clamped to >= 0, and returns
    c = 2 sqrt(lambda); degenerate states give c = 0.
    """
    if isinstance(mode, FixedDamping):
        return mode.c
    nf = state.n_free
    if nf == 0 or state.f_prev is None or state.dt == 0.0:
        return 0.0
    u = state.u[:nf]
    den = state.dt * state.v[:nf]
    num = state.f_int[:nf] - state.f_prev[:nf]
    khat = np.divide(num, den, out=np.zeros_like(num), where=den != 0)
    np.maximum(khat, 0.0, out=khat)
    mass_quad = float(np.sum(u * state.m[:nf] * u))
    if mass_quad <= 0.0:
        return 0.0
    lam = float(np.sum(u * khat * u)) / mass_quad
    return 2.0 * math.sqrt(lam) if lam > 0 else 0.0


def energy_balance(state: MicroState) -> float:
    """Normalized defect of the work-energy ledger.

    |W_ext - W_int - W_kin - W_damp| / max(|W_ext|, |W_int|, W_kin, floor).
    """
    e = state.energy
    defect = abs(e.w_ext - e.w_int - e.w_kin - e.w_damp)
    scale = max(abs(e.w_ext), abs(e.w_int), e.w_kin, ENERGY_FLOOR)
    return defect / scale


def average_stress(network: FiberNetwork, u: NDArray, f_int: NDArray) -> NDArray[np.float64]:
    """Volume-averaged stress from boundary reactions.

    sigma = sym( (1/V) sum over boundary nodes of r ⊗ x ) with r the internal
    force (reaction) at the fixed node and x its current position.
    """
    u = np.asarray(u, dtype=np.float64).reshape(network.n_nodes, 3)
    f = np.asarray(f_int, dtype=np.float64).reshape(network.n_nodes, 3)
    bound = sorted(network.boundary_nodes)
    if not bound:
        return np.zeros((3, 3))
    r = f[bound]
    x = network.node_coords[bound] + u[bound]
    s = r.T @ x
    return (s + s.T) / (2.0 * network.volume)


def build_problem(network: FiberNetwork, bc: AffineBC) -> ProblemSetup:
    """Precompute solver-order geometry, materials and prescribed displacements."""
    dm = build_dofmap(network.n_nodes, network.boundary_nodes)
    old_node_order = dm.inv_perm[::3] // 3
    new_node_index = np.empty(network.n_nodes, dtype=np.int64)
    new_node_index[old_node_order] = np.arange(network.n_nodes)

    x_ref = np.ascontiguousarray(network.node_coords[old_node_order])
    elems = np.ascontiguousarray(new_node_index[network.elements[:, :2]])
    mats = network.elements[:, 2]
    emod = np.array([network.materials[m].elastic_modulus for m in mats])
    area = np.array([network.materials[m].cross_section_area for m in mats])
    rho = np.array([network.materials[m].density for m in mats])
    ref_len = network.reference_lengths()

    mass_dof = compute_lumped_mass(network)
    node_mass = mass_dof[::3][old_node_order]

    n_free_nodes = dm.n_free // 3
    g = bc.deformation_gradient - np.eye(3)
    u_presc = x_ref[n_free_nodes:] @ g.T

    return ProblemSetup(
        network=network,
        dofmap=dm,
        x_ref=x_ref,
        elems=elems,
        ea=emod * area,
        ref_len=ref_len,
        wave_slow=np.sqrt(rho / emod),
        eps_len=LENGTH_COLLAPSE_FRACTION * ref_len,
        node_mass=node_mass,
        u_presc=u_presc,
    )


def make_state(setup: ProblemSetup) -> MicroState:
    """Fresh zero state with the lumped mass filled in (solver order)."""
    n = setup.n_total
    return MicroState(
        u=np.zeros(n), v=np.zeros(n), a=np.zeros(n), f_int=np.zeros(n),
        m=np.repeat(setup.node_mass, 3), n_free=setup.dofmap.n_free,
    )


class _Scratch:
    """Per-problem work arrays shared by all lanes of one solve."""

    def __init__(self, setup: ProblemSetup, cfg: SolverConfig):
        m = len(setup.elems)
        n = setup.n_total
        self.nd = np.empty((m, 3))
        self.sq = np.empty(n)
        self.sq2 = np.empty(n)
        self.khat = np.empty(n)
        self.track_prev = cfg.energy_check_interval > 0 or isinstance(cfg.damping, AdaptiveDamping)
        self.f_prev = np.zeros(n) if self.track_prev else None
        self.v_half = np.zeros(n) if cfg.energy_check_interval > 0 else None


@dataclass
class _Run:
    """One solve in flight: inputs plus outcome fields written by the lead lane."""

    setup: ProblemSetup
    state: MicroState
    scratch: _Scratch
    cfg: SolverConfig
    converged: bool = False
    r_ref: float = math.nan
    threshold: float = math.nan

    def __post_init__(self):
        if self.scratch.f_prev is not None:
            self.state.f_prev = self.scratch.f_prev


def _relax(lane, run: _Run):
    """Lane program for the full relaxation loop (init + iterate until done).

    Every algorithm line ends on a barrier; lead-only sections (scatter,
    reduction combines, bookkeeping) sit between barriers so all lanes agree
    on shared scalars before using them.
    """
    setup, st, sc, cfg = run.setup, run.state, run.scratch, run.cfg
    shared = lane.shared
    n_nodes = setup.n_nodes
    nfn = setup.n_free_nodes
    nf = st.n_free
    n_total = setup.n_total
    n_elems = len(setup.elems)
    u2 = st.u.reshape(n_nodes, 3)
    f2 = st.f_int.reshape(n_nodes, 3)
    energy_on = cfg.energy_check_interval > 0
    adaptive = isinstance(cfg.damping, AdaptiveDamping)
    ramp = cfg.bc_ramp_iters
    full_bc_iter = 0 if ramp == 0 else ramp - 1

    # ---- init: apply BCs, assemble initial forces and accelerations ----
    if lane.lead:
        shared.clear()
        shared["alpha"] = 0.0 if ramp > 0 else 1.0
        shared["d_alpha"] = 0.0
        shared["c"] = cfg.damping.c if isinstance(cfg.damping, FixedDamping) else 0.0
        st.iters = 0
        st.residual = math.inf
        st.energy = EnergyLedger()
        if ramp == 0:
            u2[nfn:] = setup.u_presc
    lane.barrier()

    lo, hi = lane.chunk(n_total)
    st.f_int[lo:hi] = 0.0
    elo, ehi = lane.chunk(n_elems)
    _element_force_coefficients(setup.x_ref, u2, setup.elems, setup.ea,
                                setup.ref_len, setup.eps_len, elo, ehi, sc.nd)
    lane.barrier()
    if lane.lead:
        _scatter_forces(f2, setup.elems, sc.nd, n_nodes)
        if energy_on and ramp == 0:
            # work done by the initial BC step (forces ramp 0 -> f over the jump)
            step_work = 0.5 * float(np.dot(st.f_int[nf:], setup.u_presc.reshape(-1)))
            st.energy.w_ext += step_work
            st.energy.w_int += step_work
    lane.barrier()

    flo, fhi = lane.chunk(nf)
    st.a[flo:fhi] = -st.f_int[flo:fhi] / st.m[flo:fhi]
    lane.barrier()

    # ---- relaxation loop ----
    it = 0
    while True:
        # compute next time step (constant under the reference-length bound,
        # recomputed here so a current-length variant is a one-line change)
        if lane.lead:
            shared["dt"] = cfg.dt_safety * float(np.min(setup.ref_len * setup.wave_slow))
            st.dt = shared["dt"]
        lane.barrier()
        dt = shared["dt"]

        # partial velocity update (free prefix)
        st.v[flo:fhi] += (0.5 * dt) * st.a[flo:fhi]
        lane.barrier()

        # update displacements (free prefix; lead advances the BC ramp)
        st.u[flo:fhi] += dt * st.v[flo:fhi]
        if lane.lead and shared["alpha"] < 1.0:
            alpha = min(1.0, (it + 1) / ramp)
            shared["d_alpha"] = alpha - shared["alpha"]
            shared["alpha"] = alpha
            u2[nfn:] = alpha * setup.u_presc
        lane.barrier()

        # internal forces: stash previous, zero, per-element forces, scatter
        if sc.track_prev:
            sc.f_prev[lo:hi] = st.f_int[lo:hi]
        st.f_int[lo:hi] = 0.0
        _element_force_coefficients(setup.x_ref, u2, setup.elems, setup.ea,
                                    setup.ref_len, setup.eps_len, elo, ehi, sc.nd)
        lane.barrier()
        if lane.lead:
            _scatter_forces(f2, setup.elems, sc.nd, n_nodes)
        lane.barrier()

        # damping force coefficient (free-DOF vector work + lead combine)
        if adaptive:
            den = dt * st.v[flo:fhi]
            num = st.f_int[flo:fhi] - sc.f_prev[flo:fhi]
            kh = sc.khat[flo:fhi]
            np.divide(num, den, out=kh, where=den != 0)
            kh[den == 0] = 0.0
            np.maximum(kh, 0.0, out=kh)
            sc.sq[flo:fhi] = st.u[flo:fhi] * kh * st.u[flo:fhi]
            sc.sq2[flo:fhi] = st.u[flo:fhi] * st.m[flo:fhi] * st.u[flo:fhi]
            lane.barrier()
            if lane.lead:
                mass_quad = float(np.sum(sc.sq2[:nf]))
                if mass_quad > 0.0:
                    lam = float(np.sum(sc.sq[:nf])) / mass_quad
                    shared["c"] = 2.0 * math.sqrt(lam) if lam > 0 else 0.0
                else:
                    shared["c"] = 0.0
        lane.barrier()
        c = shared["c"]

        # force residual (free-DOF reduction)
        sc.sq[flo:fhi] = np.square(st.f_int[flo:fhi])
        if sc.v_half is not None:
            sc.v_half[flo:fhi] = st.v[flo:fhi]
        lane.barrier()
        if lane.lead:
            st.residual = float(np.sqrt(np.sum(sc.sq[:nf])))
            if it == full_bc_iter:
                run.r_ref = st.residual
                run.threshold = max(cfg.tol_abs, cfg.tol_rel * run.r_ref)
                shared["threshold"] = run.threshold
        lane.barrier()

        # update accelerations (free prefix): a = (-f - c m v) / m
        st.a[flo:fhi] = -st.f_int[flo:fhi] / st.m[flo:fhi] - c * st.v[flo:fhi]
        lane.barrier()

        # partial velocity update (free prefix)
        st.v[flo:fhi] += (0.5 * dt) * st.a[flo:fhi]
        lane.barrier()

        # optionally check energy balance (lead: 3 ledger reductions)
        if energy_on:
            if lane.lead:
                _accumulate_energy(st, sc, setup, dt, c, shared["d_alpha"], nf)
                shared["d_alpha"] = 0.0
            lane.barrier()

        # update iteration count, decide convergence
        if lane.lead:
            it_next = it + 1
            st.iters = it_next
            done = False
            if it >= full_bc_iter and st.residual <= shared.get("threshold", math.inf):
                run.converged = True
                done = True
            elif it_next >= cfg.max_iters:
                done = True
            shared["done"] = done
        lane.barrier()
        if shared["done"]:
            break
        it += 1


def _accumulate_energy(st: MicroState, sc: _Scratch, setup: ProblemSetup,
                       dt: float, c: float, d_alpha: float, nf: int):
    """Trapezoidal work increments for one step plus the current kinetic energy."""
    vh = sc.v_half[:nf]
    fp = sc.f_prev
    du_free_dot_f = dt * (float(np.dot(st.f_int[:nf], vh)) + float(np.dot(fp[:nf], vh)))
    st.energy.w_int += 0.5 * du_free_dot_f
    if d_alpha != 0.0:
        du_fixed = d_alpha * setup.u_presc.reshape(-1)
        wfix = 0.5 * (float(np.dot(st.f_int[nf:], du_fixed)) + float(np.dot(fp[nf:], du_fixed)))
        st.energy.w_int += wfix
        st.energy.w_ext += wfix
    st.energy.w_damp += c * dt * float(np.dot(st.m[:nf] * vh, vh))
    st.energy.w_kin = 0.5 * float(np.dot(st.m[:nf] * st.v[:nf], st.v[:nf]))


def finalize_result(run: _Run) -> SolveResult:
    """Assemble the public result from a finished run (original DOF order)."""
    setup, st, cfg = run.setup, run.state, run.cfg
    u_orig = setup.dofmap.unpermute(st.u)
    f_orig = setup.dofmap.unpermute(st.f_int)
    sigma = average_stress(setup.network, u_orig, f_orig)
    e_res = energy_balance(st) if cfg.energy_check_interval > 0 else None
    return SolveResult(
        converged=run.converged,
        iters=st.iters,
        final_residual=st.residual,
        u=u_orig,
        avg_stress=sigma,
        energy_residual=e_res,
        r_ref=run.r_ref,
    )


def dynamic_relaxation_solve(network: FiberNetwork, bc: AffineBC,
                             config: SolverConfig | None = None) -> SolveResult:
    """Solve one problem to static equilibrium on a single lane."""
    cfg = config or SolverConfig()
    setup = build_problem(network, bc)
    run = _Run(setup=setup, state=make_state(setup), scratch=_Scratch(setup, cfg), cfg=cfg)
    run_lanes(1, lambda lane: _relax(lane, run))
    return finalize_result(run)
