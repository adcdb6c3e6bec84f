"""Uniform Monte Carlo collocation points in unit-cube coordinates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pinnprice.problems import TERMINAL, PricingProblem

# fixed offsets from the master seed, one per point set
_OFFSETS = {"interior": 1, "boundary": 2, "terminal": 3}
_TINY = np.nextafter(0.0, 1.0)


def _rng(seed: int, which: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), _OFFSETS[which]])


def _open_uniform(rng, size):
    # Generator.uniform draws from [low, high), so both ends are excluded here
    return rng.uniform(_TINY, 1.0, size=size)


def _check_count(n):
    if int(n) < 1:
        raise ValueError("need at least one collocation point")
    return int(n)


def sample_interior(n: int, problem: PricingProblem, seed: int = 0) -> np.ndarray:
    """``n`` points uniform in the open box (0, 1)^(m+1)."""
    n = _check_count(n)
    return _open_uniform(_rng(seed, "interior"), (n, problem.dim + 1))


def sample_boundary(n: int, problem: PricingProblem, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """``n`` points on the spatial faces that carry a boundary rule.

    Faces are chosen with probability proportional to their area in financial
    coordinates; time is uniform in (0, T). Returns ``(points, face_ids)``.
    """
    n = _check_count(n)
    faces = problem.active_faces()
    if not faces:
        raise ValueError("problem has no face with a boundary condition")
    rng = _rng(seed, "boundary")
    smax = np.array(problem.s_max)
    areas = np.array([np.prod(np.delete(smax, f // 2)) for f in faces])
    face_ids = rng.choice(np.array(faces), size=n, p=areas / areas.sum())
    pts = _open_uniform(rng, (n, problem.dim + 1))
    axis = 1 + face_ids // 2
    pts[np.arange(n), axis] = (face_ids % 2).astype(float)
    return pts, face_ids


def sample_terminal(n: int, problem: PricingProblem, seed: int = 0) -> np.ndarray:
    """``n`` points on the slice t = T (unit time 1), uniform in space."""
    n = _check_count(n)
    pts = _open_uniform(_rng(seed, "terminal"), (n, problem.dim + 1))
    pts[:, 0] = 1.0
    return pts


@dataclass
class CollocationSet:
    interior: np.ndarray
    boundary: np.ndarray
    boundary_faces: np.ndarray
    terminal: np.ndarray
    seed: int

    @property
    def boundary_union(self) -> np.ndarray:
        """Points on the whole boundary of the space-time box (spatial faces + terminal slice)."""
        return np.concatenate([self.boundary, self.terminal])

    @property
    def boundary_union_faces(self) -> np.ndarray:
        return np.concatenate([self.boundary_faces, np.full(len(self.terminal), TERMINAL)])

    @property
    def counts(self) -> dict[str, int]:
        return {"n_I": len(self.interior), "n_B": len(self.boundary),
                "n_0": len(self.terminal), "n_*": len(self.boundary) + len(self.terminal)}


def collocation_set(problem: PricingProblem, n_interior: int = 1000, n_boundary: int = 150,
                    n_terminal: int = 150, seed: int = 0) -> CollocationSet:
    boundary, faces = sample_boundary(n_boundary, problem, seed)
    return CollocationSet(
        interior=sample_interior(n_interior, problem, seed),
        boundary=boundary,
        boundary_faces=faces,
        terminal=sample_terminal(n_terminal, problem, seed),
        seed=seed,
    )
