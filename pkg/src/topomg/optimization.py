"""Objectives, sensitivities, MMA updates, and the continuation-driven loop.

Compliance minimization and buckling-stability optimization share the same
machinery: filter the design, assemble operators, build a fresh multigrid
preconditioner, solve (warm-started), differentiate, update with MMA.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import krylov
from .eigensolver import DavidsonConfig, generalized_davidson
from .material import PenaltySchedule, SimpLaw, StressSimpLaw
from .mesh import (assemble_stiffness, assemble_stress_stiffness, element_stiffness,
                   geometric_stiffness_tensor, rigid_body_modes)
from .multigrid import (AdaptiveHybridController, SmootherConfig, adapt_after_solve,
                        build_gmg, build_hybrid, build_sa_amg, gmg_level_dims)


@dataclass
class DesignState:
    alpha: np.ndarray
    rho: np.ndarray
    penalty: float
    objective: float = np.nan
    sensitivity_alpha: np.ndarray | None = None
    volume_fraction: float = np.nan


# ---------------------------------------------------------------------------
# preconditioned solver harness
# ---------------------------------------------------------------------------

@dataclass
class SolverHarness:
    """Builds a multigrid preconditioner for each operator and runs GMRES.

    strategy: 'gmg' | 'amg' | 'hybrid' | 'hybrid_adaptive' | 'none'.
    The adaptive variant demotes geometric levels via the >200-iteration rule.
    """

    mesh: object
    strategy: str = "amg"
    coarse_max_dofs: int = 200
    n_geo: int = 2
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    solve_cfg: krylov.SolveConfig = field(default_factory=krylov.SolveConfig)
    fixed_dofs: np.ndarray | None = None
    seed: int = 0
    controller: AdaptiveHybridController | None = None

    def __post_init__(self):
        if self.strategy == "hybrid_adaptive" and self.controller is None:
            n_levels = len(gmg_level_dims(self.mesh.dims, self.mesh.dofs_per_node,
                                          self.coarse_max_dofs))
            start = max(2, min(self.n_geo, n_levels - 1))
            self.controller = AdaptiveHybridController(n_geo_current=start)

    @property
    def near_nullspace(self):
        return rigid_body_modes(self.mesh, self.fixed_dofs)

    def build(self, K):
        t0 = time.perf_counter()
        if self.strategy == "none":
            return None, time.perf_counter() - t0
        if self.strategy == "gmg":
            h = build_gmg(self.mesh, K, self.coarse_max_dofs, self.smoother)
        elif self.strategy == "amg":
            h = build_sa_amg(K, self.near_nullspace, self.coarse_max_dofs,
                             self.smoother, seed=self.seed)
        elif self.strategy == "hybrid":
            h = build_hybrid(self.mesh, K, self.near_nullspace, self.n_geo,
                             self.coarse_max_dofs, self.smoother, seed=self.seed)
        elif self.strategy == "hybrid_adaptive":
            h = build_hybrid(self.mesh, K, self.near_nullspace,
                             self.controller.n_geo_current, self.coarse_max_dofs,
                             self.smoother, seed=self.seed)
        else:
            raise ValueError("unknown preconditioner strategy %r" % self.strategy)
        return h, time.perf_counter() - t0

    def solve(self, K, f, x0=None, hierarchy=None):
        """Solve K x = f; returns (x, SolveRecord, hierarchy)."""
        setup = 0.0
        if hierarchy is None and self.strategy != "none":
            hierarchy, setup = self.build(K)
        M = hierarchy.apply if hierarchy is not None else None
        stationary = hierarchy is None or hierarchy.stationary
        if stationary and self.solve_cfg.method != "fgmres":
            x, rec = krylov.gmres_solve(K, f, x0, M, self.solve_cfg)
        else:
            x, rec = krylov.fgmres_solve(K, f, x0, M, self.solve_cfg)
        rec.setup_time = setup
        if self.strategy == "hybrid_adaptive":
            adapt_after_solve(self.controller, rec.iterations)
        return x, rec, hierarchy


# ---------------------------------------------------------------------------
# objective and sensitivities
# ---------------------------------------------------------------------------

def element_strain_energies(mesh, u, ke=None):
    """Per-element u_e^T k_hat u_e with k_hat the unit-modulus element matrix."""
    if ke is None:
        ke = element_stiffness(mesh, 1.0)
    ue = u[mesh.element_dofs()]
    return np.einsum("ei,ij,ej->e", ue, ke, ue)


def compliance_and_sensitivity(mesh, bc, filt, law, alpha, harness, u0=None):
    """Compliance F = f^T u and its design sensitivity via the adjoint identity.

    Returns (F, dF/dalpha, aux) where aux carries u, K, the solve record and
    the hierarchy for reuse.
    """
    rho = filt.apply(alpha)
    E = law.modulus(rho)
    K = assemble_stiffness(mesh, bc, E)
    u, rec, hierarchy = harness.solve(K, bc.load_vector, u0)
    if not rec.converged:
        raise RuntimeError(
            "displacement solve failed to converge (%d iterations, final residual %.3e)"
            % (rec.iterations, rec.residual_history[-1]))
    F = float(bc.load_vector @ u)
    dF_drho = -law.modulus_derivative(rho) * element_strain_energies(mesh, u)
    dF_dalpha = filt.apply_transpose(dF_drho)
    aux = {"u": u, "K": K, "record": rec, "hierarchy": hierarchy, "rho": rho}
    return F, dF_dalpha, aux


def adjoint_rhs(mesh, u, phi, element_sigma_moduli, tensor=None, fixed_dofs=None):
    """Right-hand side Phi^T (dK_sigma/du) Phi of the eigen-adjoint equation."""
    if tensor is None:
        tensor = geometric_stiffness_tensor(mesh)
    edof = mesh.element_dofs()
    phie = phi[edof]
    ge = np.einsum("kij,ei,ej->ek", tensor, phie, phie)
    ge *= np.asarray(element_sigma_moduli, dtype=float)[:, None]
    rhs = np.zeros(mesh.total_dofs)
    np.add.at(rhs, edof.ravel(), ge.ravel())
    if fixed_dofs is not None:
        rhs[np.asarray(fixed_dofs, dtype=np.int64)] = 0.0
    return rhs


def eigenvalue_sensitivity(mesh, bc, law, stress_law, rho, u, lam, phi, v,
                           ke=None, tensor=None):
    """d(lambda)/d(rho) for one K-normalized buckling mode, adjoint term included."""
    if ke is None:
        ke = element_stiffness(mesh, 1.0)
    if tensor is None:
        tensor = geometric_stiffness_tensor(mesh)
    edof = mesh.element_dofs()
    ue = u[edof]
    phie = phi[edof]
    ve = v[edof]
    geo_quad = np.einsum("ek,kij,ei,ej->e", ue, tensor, phie, phie)
    stiff_quad = np.einsum("ei,ij,ej->e", phie, ke, phie)
    cross = np.einsum("ei,ij,ej->e", ve, ke, ue)
    dE = law.modulus_derivative(rho)
    dEs = stress_law.modulus_derivative(rho)
    return dEs * geo_quad - lam * dE * stiff_quad - dE * cross


def pnorm_aggregate(lams, p=8):
    lams = np.asarray(lams, dtype=float)
    return float((np.sum(lams ** p)) ** (1.0 / p))


def stability_objective_and_sensitivity(mesh, bc, filt, law, stress_law, alpha,
                                        harness, eig_cfg=None, u0=None,
                                        initial_space=None, p_norm=8):
    """Aggregated buckling objective F = (sum lambda_i^8)^(1/8) and dF/dalpha.

    One adjoint solve per mode, all started from zero. Returns (F, dF/dalpha, aux)
    with the eigensolver result and solve records in aux.
    """
    eig_cfg = eig_cfg or DavidsonConfig()
    rho = filt.apply(alpha)
    E = law.modulus(rho)
    Es = stress_law.modulus(rho)
    K = assemble_stiffness(mesh, bc, E)
    u, rec, hierarchy = harness.solve(K, bc.load_vector, u0)
    tensor = geometric_stiffness_tensor(mesh)
    Ks = assemble_stress_stiffness(mesh, bc, u, Es, tensor=tensor)
    t_eig = time.perf_counter()
    eig = generalized_davidson(Ks, K, hierarchy.apply if hierarchy else None,
                               eig_cfg, initial_space)
    t_eig = time.perf_counter() - t_eig
    n_used = eig.eigenvalues.size
    ke = element_stiffness(mesh, 1.0)
    dlam = np.zeros((n_used, mesh.element_count))
    adjoint_iters = 0
    t_adj = time.perf_counter()
    for i in range(n_used):
        phi = eig.eigenvectors[:, i]
        rhs = adjoint_rhs(mesh, u, phi, Es, tensor, bc.fixed_dofs)
        v, arec, _ = harness.solve(K, rhs, x0=None, hierarchy=hierarchy)
        adjoint_iters += arec.iterations
        dlam[i] = eigenvalue_sensitivity(mesh, bc, law, stress_law, rho, u,
                                         eig.eigenvalues[i], phi, v, ke, tensor)
    t_adj = time.perf_counter() - t_adj
    lams = eig.eigenvalues
    F = pnorm_aggregate(lams, p_norm)
    weights = F ** (1 - p_norm) * lams ** (p_norm - 1)
    dF_drho = weights @ dlam
    dF_dalpha = filt.apply_transpose(dF_drho)
    aux = {"u": u, "K": K, "Ks": Ks, "record": rec, "hierarchy": hierarchy,
           "eig": eig, "eig_time": t_eig, "adjoint_time": t_adj,
           "adjoint_iterations": adjoint_iters, "rho": rho}
    return F, dF_dalpha, aux


# ---------------------------------------------------------------------------
# MMA
# ---------------------------------------------------------------------------

@dataclass
class MmaState:
    """Moving asymptotes plus the two previous designs."""

    low: np.ndarray | None = None
    upp: np.ndarray | None = None
    x_prev1: np.ndarray | None = None
    x_prev2: np.ndarray | None = None
    iteration: int = 0
    move_limit: float = 0.2
    asymptote_init: float = 0.5
    asymptote_grow: float = 1.2
    asymptote_shrink: float = 0.7


def mma_update(x, dfdx, g, dgdx, state, xmin=0.0, xmax=1.0,
               bisection_iterations=100):
    """One MMA step with a single inequality constraint, solved in the dual.

    g and dgdx describe the constraint g(x) <= 0 linearized at x. Returns the
    new design; state is updated in place.
    """
    x = np.asarray(x, dtype=float)
    dfdx = np.asarray(dfdx, dtype=float)
    dgdx = np.asarray(dgdx, dtype=float)
    if not (np.all(np.isfinite(dfdx)) and np.all(np.isfinite(dgdx))):
        raise ValueError("non-finite sensitivities passed to MMA")
    span = xmax - xmin
    if state.iteration < 2 or state.low is None:
        low = x - state.asymptote_init * span
        upp = x + state.asymptote_init * span
    else:
        osc = (x - state.x_prev1) * (state.x_prev1 - state.x_prev2)
        gamma = np.where(osc > 0, state.asymptote_grow,
                         np.where(osc < 0, state.asymptote_shrink, 1.0))
        low = x - gamma * (state.x_prev1 - state.low)
        upp = x + gamma * (state.upp - state.x_prev1)
        low = np.clip(low, x - 10.0 * span, x - 0.01 * span)
        upp = np.clip(upp, x + 0.01 * span, x + 10.0 * span)

    move = state.move_limit * span
    alfa = np.maximum.reduce([np.full_like(x, xmin), low + 0.1 * (x - low), x - move])
    beta = np.minimum.reduce([np.full_like(x, xmax), upp - 0.1 * (upp - x), x + move])

    raa0 = 1e-5
    df_pos = np.maximum(dfdx, 0.0)
    df_neg = np.maximum(-dfdx, 0.0)
    p0 = (upp - x) ** 2 * (1.001 * df_pos + 0.001 * df_neg + raa0 / span)
    q0 = (x - low) ** 2 * (0.001 * df_pos + 1.001 * df_neg + raa0 / span)
    dg_pos = np.maximum(dgdx, 0.0)
    dg_neg = np.maximum(-dgdx, 0.0)
    p1 = (upp - x) ** 2 * dg_pos
    q1 = (x - low) ** 2 * dg_neg
    r1 = g - np.sum(p1 / (upp - x) + q1 / (x - low))

    def primal(mu):
        P = p0 + mu * p1
        Q = q0 + mu * q1
        sp_ = np.sqrt(P)
        sq_ = np.sqrt(Q)
        xs = (low * sp_ + upp * sq_) / (sp_ + sq_)
        return np.clip(xs, alfa, beta)

    def constraint(mu):
        xs = primal(mu)
        return r1 + np.sum(p1 / (upp - xs) + q1 / (xs - low))

    if constraint(0.0) <= 0.0:
        x_new = primal(0.0)
    else:
        mu_lo, mu_hi = 0.0, 1.0
        grow = 0
        while constraint(mu_hi) > 0.0:
            mu_lo = mu_hi
            mu_hi *= 10.0
            grow += 1
            if grow > 60:
                raise RuntimeError("MMA dual bracket expansion failed; state: "
                                   f"g={g:.3e}, mu_hi={mu_hi:.3e}")
        for _ in range(bisection_iterations):
            mu = 0.5 * (mu_lo + mu_hi)
            if constraint(mu) > 0.0:
                mu_lo = mu
            else:
                mu_hi = mu
        x_new = primal(mu_hi)

    state.low = low
    state.upp = upp
    state.x_prev2 = state.x_prev1
    state.x_prev1 = x.copy()
    state.iteration += 1
    return x_new


# ---------------------------------------------------------------------------
# optimization loop
# ---------------------------------------------------------------------------

@dataclass
class OptimizationProblem:
    mesh: object
    bc: object
    filt: object
    schedule: PenaltySchedule
    volume_fraction: float
    harness: SolverHarness
    mode: str = "compliance"  # compliance | stability
    eig_cfg: DavidsonConfig | None = None
    e_max: float = 1.0
    alpha0: np.ndarray | None = None


def run_optimization(problem, callback=None):
    """Continuation loop; returns (history, final DesignState).

    history is one dict per iteration with the timing/iteration columns used
    by the benchmark CSV plus objective and volume.
    """
    mesh = problem.mesh
    n_el = mesh.element_count
    alpha = (problem.alpha0.copy() if problem.alpha0 is not None
             else np.full(n_el, problem.volume_fraction))
    mma = MmaState()
    history = []
    u_prev = None
    eig_prev = None
    volume_grad = problem.filt.apply_transpose(np.full(n_el, 1.0 / n_el))
    state = None
    for step, penalty in enumerate(problem.schedule.flat()):
        law = SimpLaw(e_max=problem.e_max, penalty=penalty)
        if problem.mode == "compliance":
            F, dF, aux = compliance_and_sensitivity(
                mesh, problem.bc, problem.filt, law, alpha, problem.harness,
                u0=u_prev)
        else:
            stress_law = StressSimpLaw(e_max=problem.e_max, penalty=penalty)
            F, dF, aux = stability_objective_and_sensitivity(
                mesh, problem.bc, problem.filt, law, stress_law, alpha,
                problem.harness, problem.eig_cfg, u0=u_prev,
                initial_space=eig_prev)
            eig_prev = aux["eig"].eigenvectors
        u_prev = aux["u"]
        rho = aux["rho"]
        vol = float(np.mean(rho))
        state = DesignState(alpha=alpha.copy(), rho=rho, penalty=penalty,
                            objective=F, sensitivity_alpha=dF,
                            volume_fraction=vol)
        rec = aux["record"]
        hier = aux["hierarchy"]
        row = {
            "step": step,
            "penalty": penalty,
            "strategy": problem.harness.strategy,
            "levels": hier.n_levels if hier is not None else 0,
            "n_geo": hier.n_geometric if hier is not None else 0,
            "setup_s": rec.setup_time,
            "solve_s": rec.solve_time,
            "solve_iters": rec.iterations,
            "eig_s": aux.get("eig_time", ""),
            "eig_iters": aux["eig"].iterations if "eig" in aux else "",
            "adjoint_s": aux.get("adjoint_time", ""),
            "adjoint_iters": aux.get("adjoint_iterations", ""),
            "objective": F,
            "volume": vol,
        }
        history.append(row)
        if callback is not None:
            callback(step, state, aux)
        g = vol - problem.volume_fraction
        alpha = mma_update(alpha, dF, g, volume_grad, mma)
    # refresh the reported state for the final accepted design
    if state is not None:
        rho = problem.filt.apply(alpha)
        state = DesignState(alpha=alpha, rho=rho, penalty=state.penalty,
                            objective=state.objective,
                            sensitivity_alpha=state.sensitivity_alpha,
                            volume_fraction=float(np.mean(rho)))
    return history, state
