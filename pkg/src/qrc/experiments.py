"""End-to-end experiment pipelines shared by the CLI and the acceptance suite.

Each pipeline takes a validated config dict (see :func:`qrc.cli.load_config`)
and returns a plain result record; writing artifacts is left to the caller.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (IterationTrace, LoadData, FixedIterations, Morozov, ResidualFloor,
                   factorize_system, run_iterated)
from .elliptic import (EllipticData, RobinProfile, assemble_elliptic, assemble_elliptic_load,
                       edge_angles, gamma_mass_matrix, recover_robin, sample_gamma_trace,
                       solve_direct_robin)
from .heat import (LateralData, SpaceTimeGrid, assemble_heat, assemble_heat_load,
                   heat_error_metrics, manufactured_heat, time_mass_matrix)
from .mesh import GAMMA, GAMMA_C, TriMesh, annulus_mesh, robin_coefficient
from .noise import NoiseSpec, SplitMix64, corrupt_linf, l2_delta


def stopping_rule(stop, delta, c):
    """Build the stopping rule described by a ``stopping`` config section."""
    if stop["rule"] == "morozov":
        return Morozov(stop["r"], delta, stop["max_iter"])
    if stop["rule"] == "floor":
        return ResidualFloor(stop["floor_rel"] * math.sqrt(c), stop["max_iter"])
    return FixedIterations(stop["iterations"])


@dataclass
class HeatResult:
    grid: SpaceTimeGrid
    x: np.ndarray
    trace: IterationTrace
    load: LoadData
    delta: float
    exact: np.ndarray
    metrics: dict


def heat_experiment(cfg) -> HeatResult:
    """Manufactured data, seeded noise on both signals, iterated solve."""
    g = cfg["grid"]
    grid = SpaceTimeGrid(g["a"], g["b"], g["T"], g["Nx"], g["Nt"])
    data, exact = manufactured_heat(cfg["solution"], grid)
    noise = NoiseSpec(cfg["noise"]["alpha"], cfg["noise"]["seed"])
    rng = SplitMix64(noise.seed)
    nd = corrupt_linf(data.gD, noise, rng)
    nn = corrupt_linf(data.gN, noise, rng)
    mt = time_mass_matrix(grid)
    delta = l2_delta([nd.perturbation, nn.perturbation], [mt, mt])
    sys = assemble_heat(grid, cfg["eps"])
    load = assemble_heat_load(grid, LateralData(nd.noisy, nn.noisy), delta)
    x, trace = run_iterated(factorize_system(sys), sys, load,
                            stopping_rule(cfg["stopping"], delta, load.c))
    return HeatResult(grid, x, trace, load, delta, exact,
                      heat_error_metrics(grid, x, cfg["solution"]))


@dataclass(frozen=True)
class EllipticSynthesis:
    mesh: TriMesh
    gD: np.ndarray
    gN: np.ndarray


def synthesize_elliptic(cfg) -> EllipticSynthesis:
    """Direct Robin solve on the synthesis mesh, trace moved to the inversion mesh."""
    s, i = cfg["synthesis_mesh"], cfg["inversion_mesh"]
    fine = annulus_mesh(s["nr"], s["na"])
    _, theta = edge_angles(fine, GAMMA_C)
    u_fine = solve_direct_robin(fine, robin_coefficient(theta), cfg["gN"])
    mesh = annulus_mesh(i["nr"], i["na"])
    gD = sample_gamma_trace(fine, u_fine, mesh)
    gN = np.zeros(len(mesh.boundary_edges))
    gN[mesh.boundary(GAMMA)] = cfg["gN"]
    return EllipticSynthesis(mesh, gD, gN)


@dataclass
class EllipticResult:
    mesh: TriMesh
    x: np.ndarray
    trace: IterationTrace
    load: LoadData
    delta: float
    gD: np.ndarray
    gN: np.ndarray
    profile: RobinProfile
    rel_error: np.ndarray

    @property
    def mean_rel_error(self):
        return float(np.mean(self.rel_error))


def elliptic_experiment(cfg, synth: Optional[EllipticSynthesis] = None) -> EllipticResult:
    """Noisy data on gamma, iterated solve, Robin recovery on gamma_c.

    ``synth`` may be passed to reuse one direct solve across noise levels.
    """
    if synth is None:
        synth = synthesize_elliptic(cfg)
    mesh = synth.mesh
    gnodes, gedges = mesh.boundary_nodes(GAMMA), mesh.boundary(GAMMA)
    noise = NoiseSpec(cfg["noise"]["alpha"], cfg["noise"]["seed"])
    rng = SplitMix64(noise.seed)
    nd = corrupt_linf(synth.gD[gnodes], noise, rng)
    nn = corrupt_linf(synth.gN[gedges], noise, rng)
    gD, gN = synth.gD.copy(), synth.gN.copy()
    gD[gnodes], gN[gedges] = nd.noisy, nn.noisy
    W = gamma_mass_matrix(mesh)[gnodes][:, gnodes]
    lengths = mesh.edge_lengths[mesh.boundary_edge_ids[gedges]]
    delta = l2_delta([nd.perturbation, nn.perturbation], [W, lengths])

    sys = assemble_elliptic(mesh, cfg["eps"], np.array(cfg["sigma"], dtype=np.float64))
    load = assemble_elliptic_load(mesh, EllipticData(np.zeros(len(mesh.triangles)), gD, gN), delta)
    x, trace = run_iterated(factorize_system(sys), sys, load,
                            stopping_rule(cfg["stopping"], delta, load.c))
    prof = recover_robin(mesh, x, cfg["guard"])
    exact = robin_coefficient(prof.theta)
    return EllipticResult(mesh, x, trace, load, delta, gD, gN, prof,
                          np.abs(prof.eta - exact) / np.abs(exact))
