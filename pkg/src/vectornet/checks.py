"""Analytical invariant checks shared by the `verify` command and the tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .core_model import ModelParams, vector_endemic_equilibrium, vector_rhs
from .engine import NetworkModel, integrate, network_dfe, seed_infection
from .mobility import TravelMatrices
from .network import PatchNetwork


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.value:.3e} (limit {self.limit:.1e})"


def vector_equilibrium_residual(params: ModelParams, k_e=None, k_l=None) -> float:
    """Largest RHS component at the vector equilibrium, relative to the state size."""
    E, L, A = vector_endemic_equilibrium(params, k_e, k_l)
    k_e = params.K_E if k_e is None else k_e
    k_l = params.K_L if k_l is None else k_l
    res = np.abs(vector_rhs(E, L, A, params, k_e, k_l))
    return float(res.max() / max(E, L, A, 1.0))


def dfe_residual(network: PatchNetwork, matrices: TravelMatrices, params: ModelParams, **model_opts) -> float:
    model = NetworkModel(network, matrices, params, **model_opts)
    st = network_dfe(matrices, network, params, layout=model.layout)
    return float(np.abs(model.rhs(0.0, st.y)).max())


def coupling_graph(network: PatchNetwork, matrices: TravelMatrices) -> sp.csr_matrix:
    """Undirected union of travel pairs and mosquito kernel edges."""
    i = np.concatenate([matrices.origin, network.edges.i])
    j = np.concatenate([matrices.dest, network.edges.j])
    A = sp.coo_matrix((np.ones(len(i)), (i, j)), shape=(network.n, network.n)).tocsr()
    return A + A.T


def reachable_from(network: PatchNetwork, matrices: TravelMatrices, node: int) -> np.ndarray:
    order = csgraph.breadth_first_order(coupling_graph(network, matrices), node, directed=False,
                                        return_predecessors=False)
    mask = np.zeros(network.n, dtype=bool)
    mask[order] = True
    return mask


def run_checks(network: PatchNetwork, matrices: TravelMatrices, params: ModelParams,
               seed_node: int, seed_count: float = 1.0, horizon: float = 100.0, h: float = 0.05,
               **model_opts) -> list[CheckResult]:
    """Vector equilibrium, DFE stationarity, conservation, positivity and confinement.

    The dynamic checks integrate a seeded run for `horizon` days.
    """
    out = [
        CheckResult("vector equilibrium residual", (r := vector_equilibrium_residual(params)) < 1e-10, r, 1e-10),
        CheckResult("DFE residual (max-norm)", (r := dfe_residual(network, matrices, params, **model_opts)) < 1e-10,
                    r, 1e-10),
    ]
    model = NetworkModel(network, matrices, params, **model_opts)
    st0 = seed_infection(network_dfe(matrices, network, params, layout=model.layout), seed_node, seed_count)
    tr = integrate(st0, model, 0.0, horizon, h, output_interval=horizon)
    n0 = st0.resident_totals()
    n1 = tr.final.resident_totals()
    drift = float(np.max(np.abs(n1 - n0) / np.maximum(n0, 1.0)))
    out.append(CheckResult("resident population drift (relative)", drift < 1e-9, drift, 1e-9))
    under = abs(tr.max_undershoot)
    out.append(CheckResult("pre-clamp undershoot", under < 1e-12, under, 1e-12))
    unreachable = ~reachable_from(network, matrices, seed_node)
    leak = 0.0
    if unreachable.any():
        fin = tr.final
        leak = float(max(fin.present(fin.I_H + fin.R_H)[unreachable].max(), fin.I_m[unreachable].max()))
    out.append(CheckResult("infection outside the seed's component", leak == 0.0, leak, 0.0))
    return out
