"""Linear partial-view operators and the small dense solve kernel.

A view operator is a pair of linear maps: a projection A from the full
sample space R^m to a view space R^{m_i}, and a back-combiner B embedding a
view vector into R^m. Patch and downsample operators are stored in
index/weight form so m=1024 experiments stay fast; `general` operators carry
explicit dense matrices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError, ShapeError


@dataclass(frozen=True)
class GridShape:
    """Spatial interpretation of the flat sample dimension m."""

    height: int
    width: int
    channels: int = 1

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise ConfigError(f"grid dimensions must be positive: {self}")

    @property
    def m(self) -> int:
        return self.height * self.width * self.channels

    def flat_index(self, row: int, col: int, chan: int = 0) -> int:
        return (row * self.width + col) * self.channels + chan


@dataclass(frozen=True, eq=False)
class ViewOperator:
    """Projection A: R^m -> R^{m_i} with back-combiner B: R^{m_i} -> R^m.

    noise_gain is the common l2 norm of A's rows: isotropic noise of scale
    sigma in the full space maps to isotropic noise of scale
    noise_gain * sigma in the view space.
    """

    id: str
    kind: str  # patch | downsample | general
    m: int
    m_i: int
    meta: dict = field(default_factory=dict)
    # patch: _idx selects coordinates. downsample: _pool (m_i, f^2) index grid.
    _idx: np.ndarray | None = None
    _pool: np.ndarray | None = None
    _A: np.ndarray | None = None
    _B: np.ndarray | None = None

    @property
    def noise_gain(self) -> float:
        if self.kind == "patch":
            return 1.0
        if self.kind == "downsample":
            return 1.0 / np.sqrt(self._pool.shape[1])
        return float(np.sqrt(np.mean(np.sum(self._A * self._A, axis=1))))

    def apply_A(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.m:
            raise ShapeError(f"operator {self.id}: expected last dim {self.m}, "
                             f"got {x.shape[-1]}")
        if self.kind == "patch":
            return x[..., self._idx]
        if self.kind == "downsample":
            return x[..., self._pool].mean(axis=-1)
        return x @ self._A.T

    def apply_B(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.m_i:
            raise ShapeError(f"operator {self.id}: expected last dim {self.m_i}, "
                             f"got {v.shape[-1]}")
        out = np.zeros(v.shape[:-1] + (self.m,))
        if self.kind == "patch":
            out[..., self._idx] = v
        elif self.kind == "downsample":
            # nearest-neighbor upsample; A o B = identity on the view space
            out[..., self._pool.reshape(-1)] = np.repeat(
                v, self._pool.shape[1], axis=-1)
        else:
            out = v @ self._B.T
        return out

    def dense_A(self) -> np.ndarray:
        if self.kind == "general":
            return self._A.copy()
        return self.apply_A(np.eye(self.m)).T

    def dense_B(self) -> np.ndarray:
        if self.kind == "general":
            return self._B.copy()
        return self.apply_B(np.eye(self.m_i)).T

    def to_json(self) -> str:
        doc = {"id": self.id, "kind": self.kind, "meta": self.meta,
               "m": self.m, "m_i": self.m_i}
        if self.kind == "general":
            doc["A"] = self._A.reshape(-1).tolist()
            doc["B"] = self._B.reshape(-1).tolist()
        return json.dumps(doc)

    @staticmethod
    def from_json(text: str) -> "ViewOperator":
        doc = json.loads(text)
        kind, meta = doc["kind"], doc["meta"]
        if kind == "patch":
            grid = GridShape(**meta["grid"])
            return make_patch_operator(grid, meta["origin_row"],
                                       meta["origin_col"], meta["patch_h"],
                                       meta["patch_w"], op_id=doc["id"])
        if kind == "downsample":
            grid = GridShape(**meta["grid"])
            return make_downsample_operator(grid, meta["factor"],
                                            op_id=doc["id"])
        A = np.array(doc["A"]).reshape(doc["m_i"], doc["m"])
        B = np.array(doc["B"]).reshape(doc["m"], doc["m_i"])
        return make_general_operator(A, B, op_id=doc["id"], meta=meta)


def make_patch_operator(grid: GridShape, origin_row: int, origin_col: int,
                        patch_h: int, patch_w: int,
                        op_id: str | None = None) -> ViewOperator:
    """Row-selection operator extracting a patch; B = A^T (zero-fill)."""
    if origin_row < 0 or origin_row + patch_h > grid.height:
        raise ShapeError(f"patch rows [{origin_row}, {origin_row + patch_h}) "
                         f"outside grid height {grid.height}")
    if origin_col < 0 or origin_col + patch_w > grid.width:
        raise ShapeError(f"patch cols [{origin_col}, {origin_col + patch_w}) "
                         f"outside grid width {grid.width}")
    idx = np.array([grid.flat_index(r, c, ch)
                    for r in range(origin_row, origin_row + patch_h)
                    for c in range(origin_col, origin_col + patch_w)
                    for ch in range(grid.channels)])
    meta = {"grid": {"height": grid.height, "width": grid.width,
                     "channels": grid.channels},
            "origin_row": origin_row, "origin_col": origin_col,
            "patch_h": patch_h, "patch_w": patch_w}
    if op_id is None:
        op_id = f"patch_{origin_row}_{origin_col}_{patch_h}x{patch_w}"
    return ViewOperator(id=op_id, kind="patch", m=grid.m, m_i=idx.size,
                        meta=meta, _idx=idx)


def make_downsample_operator(grid: GridShape, factor: int,
                             op_id: str | None = None) -> ViewOperator:
    """f x f mean pooling; B is nearest-neighbor upsampling (A o B = I)."""
    if grid.height % factor or grid.width % factor:
        raise ConfigError(f"factor {factor} does not divide grid "
                          f"{grid.height}x{grid.width}")
    out_h, out_w = grid.height // factor, grid.width // factor
    pool = np.empty((out_h * out_w * grid.channels, factor * factor), dtype=int)
    row = 0
    for r in range(out_h):
        for c in range(out_w):
            for ch in range(grid.channels):
                pool[row] = [grid.flat_index(r * factor + dr, c * factor + dc, ch)
                             for dr in range(factor) for dc in range(factor)]
                row += 1
    meta = {"grid": {"height": grid.height, "width": grid.width,
                     "channels": grid.channels},
            "factor": factor}
    if op_id is None:
        op_id = f"down_{factor}x"
    return ViewOperator(id=op_id, kind="downsample", m=grid.m,
                        m_i=pool.shape[0], meta=meta, _pool=pool)


def make_general_operator(A: np.ndarray, B: np.ndarray,
                          op_id: str = "general", meta: dict | None = None
                          ) -> ViewOperator:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape != (B.shape[1], B.shape[0]):
        raise ShapeError(f"incompatible A {A.shape} and B {B.shape}")
    return ViewOperator(id=op_id, kind="general", m=A.shape[1],
                        m_i=A.shape[0], meta=meta or {}, _A=A, _B=B)


def make_patch_tiling(grid: GridShape, patch_h: int, patch_w: int
                      ) -> list[ViewOperator]:
    """Non-overlapping patch operators covering the whole grid."""
    if grid.height % patch_h or grid.width % patch_w:
        raise ConfigError("patch size must tile the grid exactly")
    return [make_patch_operator(grid, r, c, patch_h, patch_w)
            for r in range(0, grid.height, patch_h)
            for c in range(0, grid.width, patch_w)]


def solve_least_squares(M: np.ndarray, y: np.ndarray,
                        ridge: float = 0.0) -> np.ndarray:
    """argmin ||Mw - y||^2 + ridge ||w||^2 via normal equations + Cholesky."""
    M = np.asarray(M, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if M.ndim != 2 or y.shape[0] != M.shape[0]:
        raise ShapeError(f"design {M.shape} incompatible with rhs {y.shape}")
    if ridge < 0:
        raise ConfigError("ridge must be nonnegative")
    G = M.T @ M + ridge * np.eye(M.shape[1])
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise NumericError("normal matrix is singular; pass ridge > 0") from exc
    rhs = M.T @ y
    return np.linalg.solve(L.T, np.linalg.solve(L, rhs))
