"""Shipped scenario presets: a model plus a default experiment battery."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .inequality import dirichlet_laplacian
from .model import ModelSpec

__all__ = ["Preset", "PRESETS", "list_presets", "build_preset", "sector_demo_matrices"]


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    build: Callable[..., ModelSpec]
    params: dict = field(default_factory=dict)
    experiments: Callable[..., list] = lambda **kw: []

    def catalog_entry(self) -> dict:
        return {"name": self.name, "description": self.description, "params": dict(self.params),
                "experiments": [e["kind"] for e in self.experiments(**self.params)]}


LP_RATIOS = {"kind": "lp_ratios", "p": [4 / 3, 2, 4], "functions": ["linear", "square", "cos"],
             "n_samples": 40000, "tolerance": 2.0}


def _identity_battery(p_list=(2,), chaos: bool = True, lp: bool = True, heavy: bool = True, dim: int = 1,
                      duality_t: float = 1.0) -> list:
    """Exact identity checks plus the inequality suite, with declared tolerances."""
    exps = [
        {"kind": "conditions"},
        {"kind": "b_structure", "tolerance": 1e-10},
        {"kind": "form_identity", "degree": 3, "count": 6, "tolerance": 1e-9},
        {"kind": "poincare", "p": list(p_list), "functions": ["linear-slowest", "square", {"random": {"degree": 3, "count": 4}}],
         "tolerance": 1e-8},
        {"kind": "sharpness", "p": 2, "degree_cap": 4, "n_random": 8, "tolerance": 1e-8},
        {"kind": "intertwining", "times": [0.1, 0.5, 1.0, 2.0], "degree": 3, "tolerance": 1e-8},
        {"kind": "invariance", "t": 1.0, "degree": 4, "tolerance": 1e-9},
        {"kind": "dhstar", "p": 2, "degree": 3, "count": 4, "tolerance": 1e-9},
    ]
    if heavy:
        exps += [
            {"kind": "duality", "t": duality_t, "degree": 2, "steps": 256, "rule": "simpson", "tolerance": 1e-6},
            {"kind": "gradient_scan", "q": 2, "times": [0.01, 0.05, 0.25, 0.5, 1.0],
             "functions": ["linear", "cubic"], "tolerance": 3.0},
        ]
    if chaos:
        idx = [[0] * (dim - 1) + [k] for k in (1, 2, 3)]
        exps.append({"kind": "chaos", "indices": idx, "t": 0.7, "tolerance": 1e-7})
        exps.append({"kind": "decay_scan", "p": 2, "function": "hermite-slowest-2", "times": [0.0, 0.25, 0.5, 1.0],
                     "tolerance": 0.01})
    if lp:
        exps.append(dict(LP_RATIOS))
    return exps


def _classical(dim: int = 1) -> ModelSpec:
    return ModelSpec(A=-np.eye(dim), i=np.eye(dim), label=f"classical-ou-{dim}d")


def _diag_gap() -> ModelSpec:
    return ModelSpec(A=np.diag([-1.0, -3.0]), i=np.eye(2), label="diag-gap")


def _jordan() -> ModelSpec:
    return ModelSpec(A=np.array([[-1.0, 1.0], [0.0, -1.0]]), i=np.eye(2), label="jordan-2d")


def _dirichlet(dim: int = 6) -> ModelSpec:
    return ModelSpec(A=dirichlet_laplacian(dim), i=np.eye(dim), label=f"dirichlet-laplacian-sym-{dim}")


def _weighted(dim: int = 20, omega: float = 1.0, t0: float = 0.1) -> ModelSpec:
    return ModelSpec(A=dirichlet_laplacian(dim) - omega * np.eye(dim), i=np.eye(dim),
                     label=f"weighted-counterexample-{dim}")


def sector_demo_matrices() -> tuple[np.ndarray, np.ndarray]:
    """A 3x3 SPD matrix and a 2x2 non-normal sectorial matrix."""
    A = np.array([[2.0, 0.5, 0.1], [0.5, 1.5, 0.3], [0.1, 0.3, 1.0]])
    B = np.array([[1.0, 0.4], [0.0, 1.5]])
    return A, B


def _sector_demo() -> ModelSpec:
    A, _ = sector_demo_matrices()
    return ModelSpec(A=-A, i=np.eye(3), label="sector-demo")


def _sector_experiments(**_) -> list:
    A, B = sector_demo_matrices()
    return [{"kind": "resolvent", "A": A.tolist(), "B": B.tolist(), "theta_A": 0.1, "theta_B": 0.45,
             "lam": [-1.0, 2.0], "nodes": 400, "study": True, "tolerance": 1e-6},
            {"kind": "b_structure", "tolerance": 1e-10}, dict(LP_RATIOS)]


PRESETS: dict[str, Preset] = {
    p.name: p for p in (
        Preset("classical-ou", "A = -I, i = I; the symmetric model with omega = 1",
               _classical, {"dim": 1},
               lambda dim=1: _identity_battery(p_list=(2, 4), dim=dim)),
        Preset("diag-gap", "A = diag(-1, -3), i = I; spectral gap set by the slow mode",
               lambda: _diag_gap(), {}, lambda: _identity_battery(dim=2)),
        Preset("jordan-2d", "A = [[-1, 1], [0, -1]], i = I; non-normal drift",
               lambda: _jordan(), {}, lambda: _identity_battery(chaos=False, dim=2)),
        Preset("dirichlet-laplacian-sym", "finite-difference Dirichlet Laplacian on (-1, 1), i = I",
               _dirichlet, {"dim": 6},
               lambda dim=6: _identity_battery(heavy=dim <= 6, dim=dim, duality_t=0.1)),
        Preset("weighted-counterexample", "Laplacian shifted by -omega; weighted norm breaks contractivity",
               _weighted, {"dim": 20, "omega": 1.0, "t0": 0.1},
               lambda dim=20, omega=1.0, t0=0.1: [
                   {"kind": "b_structure", "tolerance": 1e-10},
                   {"kind": "counterexample", "dim": dim, "omega": omega, "t0": t0, "tolerance": 1.0},
                   dict(LP_RATIOS),
               ]),
        Preset("sector-demo", "contour resolvent of a Kronecker sum against the dense oracle",
               lambda: _sector_demo(), {}, _sector_experiments),
    )
}


def list_presets() -> list[dict]:
    return [p.catalog_entry() for p in PRESETS.values()]


def build_preset(name: str, **params) -> tuple[ModelSpec, list]:
    """Model spec and default experiments for a preset, with parameter overrides."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    preset = PRESETS[name]
    unknown = set(params) - set(preset.params)
    if unknown:
        raise KeyError(f"preset {name!r} has no parameters {sorted(unknown)}")
    merged = {**preset.params, **params}
    return preset.build(**merged), preset.experiments(**merged)
