"""Dense linear algebra kernel with labeled register layouts.

Conventions used throughout the package:

* composite indices are big-endian: the first register in a layout is the
  most significant digit of the basis index, so ``|i, j>`` on dims (dA, dB)
  sits at flat index ``i * dB + j`` and ``np.kron(A, B)`` acts on (A-reg,
  B-reg) in that order;
* everything is a dense complex128 ndarray;
* comparisons use an absolute elementwise tolerance, default ``EPS``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CapacityError,
    DimensionError,
    DuplicateLabelError,
    UnknownLabelError,
)

EPS = 1e-10

# Dense capacity guards. MAX_ENTRIES bounds matrix element counts produced by
# tensor products; MAX_STATE_DIM bounds the total dimension of one register
# group. Both are module defaults and can be overridden per call.
MAX_ENTRIES = 1 << 20
MAX_STATE_DIM = 1 << 10


def as_complex(a) -> np.ndarray:
    return np.asarray(a, dtype=complex)


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.asarray(a)).T


def is_square(a: np.ndarray) -> bool:
    return a.ndim == 2 and a.shape[0] == a.shape[1]


def is_unitary(a: np.ndarray, tol: float = EPS) -> bool:
    a = as_complex(a)
    if not is_square(a):
        return False
    d = a.shape[0]
    return bool(np.abs(a.conj().T @ a - np.eye(d)).max() <= tol)


def is_hermitian(a: np.ndarray, tol: float = EPS) -> bool:
    a = as_complex(a)
    return is_square(a) and bool(np.abs(a - a.conj().T).max() <= tol)


def is_psd(a: np.ndarray, tol: float = EPS) -> bool:
    if not is_hermitian(a, tol):
        return False
    w = np.linalg.eigvalsh(as_complex(a))
    return bool(w.min() >= -tol)


def tensor_product(a: np.ndarray, b: np.ndarray, max_entries: int | None = None) -> np.ndarray:
    """Kronecker product with a capacity guard on the result size."""
    a = as_complex(a)
    b = as_complex(b)
    cap = MAX_ENTRIES if max_entries is None else max_entries
    entries = a.size * b.size
    if entries > cap:
        raise CapacityError(
            f"tensor product would hold {entries} entries, capacity is {cap}"
        )
    return np.kron(a, b)


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered labeled registers; first label is the most significant digit."""

    regs: tuple[tuple[str, int], ...]

    def __post_init__(self):
        labels = [lab for lab, _ in self.regs]
        if len(set(labels)) != len(labels):
            raise DuplicateLabelError(f"duplicate register label in {labels}")
        for lab, dim in self.regs:
            if dim < 1:
                raise DimensionError(f"register {lab!r} has dimension {dim}")
        if self.total_dim > MAX_STATE_DIM:
            raise CapacityError(
                f"layout dimension {self.total_dim} exceeds capacity {MAX_STATE_DIM}"
            )

    @staticmethod
    def of(*regs: tuple[str, int]) -> "RegisterLayout":
        return RegisterLayout(tuple(regs))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.regs)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.regs)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims) if self.regs else 1

    def __len__(self) -> int:
        return len(self.regs)

    def index(self, label: str) -> int:
        for k, (lab, _) in enumerate(self.regs):
            if lab == label:
                return k
        raise UnknownLabelError(f"no register {label!r} in layout {self.labels}")

    def dim(self, label: str) -> int:
        return self.regs[self.index(label)][1]

    def without(self, labels) -> "RegisterLayout":
        drop = set(labels)
        return RegisterLayout(tuple(r for r in self.regs if r[0] not in drop))

    def subset(self, labels) -> "RegisterLayout":
        return RegisterLayout(tuple((lab, self.dim(lab)) for lab in labels))


def embed_operator(op: np.ndarray, targets, layout: RegisterLayout) -> np.ndarray:
    """Lift ``op`` acting on ``targets`` (in the given order) to the full layout.

    The order of ``targets`` fixes which register supplies which tensor factor
    of ``op``: the first target is the most significant digit of op's own
    index space.
    """
    op = as_complex(op)
    targets = list(targets)
    if len(set(targets)) != len(targets):
        raise DuplicateLabelError(f"repeated target in {targets}")
    tdim = math.prod(layout.dim(t) for t in targets)
    if op.shape != (tdim, tdim):
        raise DimensionError(
            f"operator shape {op.shape} does not match target dims product {tdim}"
        )
    rest = [lab for lab in layout.labels if lab not in targets]
    ordered = targets + rest
    rest_dim = math.prod(layout.dim(r) for r in rest) if rest else 1
    full = tensor_product(op, np.eye(rest_dim))
    if ordered == list(layout.labels):
        return full
    dims_ordered = [layout.dim(lab) for lab in ordered]
    n = len(layout)
    pos = {lab: k for k, lab in enumerate(ordered)}
    axes = [pos[lab] for lab in layout.labels]
    t = full.reshape(dims_ordered + dims_ordered)
    t = t.transpose(axes + [n + a for a in axes])
    d = layout.total_dim
    return np.ascontiguousarray(t.reshape(d, d))


def partial_trace(rho: np.ndarray, keep, layout: RegisterLayout) -> np.ndarray:
    """Trace out everything except ``keep``; result is ordered as ``keep``."""
    rho = as_complex(rho)
    d = layout.total_dim
    if rho.shape != (d, d):
        raise DimensionError(f"state shape {rho.shape} does not match layout dim {d}")
    keep = list(keep)
    keep_pos = [layout.index(lab) for lab in keep]
    if len(set(keep_pos)) != len(keep_pos):
        raise DuplicateLabelError(f"repeated label in keep list {keep}")
    n = len(layout)
    drop = [k for k in range(n) if k not in keep_pos]
    perm = keep_pos + drop
    dims = layout.dims
    t = rho.reshape(dims + dims)
    t = t.transpose(perm + [n + p for p in perm])
    dk = math.prod(dims[p] for p in keep_pos) if keep_pos else 1
    dd = d // dk
    t = t.reshape(dk, dd, dk, dd)
    return np.ascontiguousarray(np.trace(t, axis1=1, axis2=3))


def permutation_to_layout(src: RegisterLayout, dst: RegisterLayout) -> np.ndarray:
    """Unitary relabeling matrix sending src-ordered coordinates to dst order."""
    if sorted(src.regs) != sorted(dst.regs):
        raise DimensionError("layouts are not permutations of each other")
    n = len(src)
    dims = src.dims
    d = src.total_dim
    perm = [src.index(lab) for lab in dst.labels]
    p = np.zeros((d, d))
    for flat in range(d):
        digits = []
        r = flat
        for dim in reversed(dims):
            digits.append(r % dim)
            r //= dim
        digits.reverse()
        out = 0
        for k in range(n):
            out = out * dims[perm[k]] + digits[perm[k]]
        p[out, flat] = 1.0
    return p


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via Gaussian QR with phase-fixed R diagonal."""
    a = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(a)
    ph = np.diag(r).copy()
    ph /= np.abs(ph)
    return q * ph


def random_statevector(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def distance_up_to_phase(a: np.ndarray, b: np.ndarray) -> float:
    """min over phases of the Frobenius distance ||a - e^{i phi} b||_F."""
    a = as_complex(a)
    b = as_complex(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    na = float(np.vdot(a, a).real)
    nb = float(np.vdot(b, b).real)
    ov = abs(np.vdot(a, b))
    return math.sqrt(max(0.0, na + nb - 2.0 * ov))


def projector(vec: np.ndarray) -> np.ndarray:
    v = as_complex(vec).reshape(-1)
    return np.outer(v, v.conj())
