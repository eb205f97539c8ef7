"""Tensor-product grids over the safe set and scalar fields on them.

The safe set is carried as a rectangular box (the grid bounding box) or as
the box minus the positive region of a signed-distance field.  Scalar
functions (barrier candidates, eigenfunctions, per-channel policies) are
stored as dense row-major node arrays.  This module owns:

* node classification into interior / boundary / exterior,
* multilinear interpolation with periodic wraparound,
* central-difference gradients and Hessians sampled off-grid
  (nodal stencils multilinearly blended to the query point),
* the ``.fld`` text format with bit-exact round-trips.

Non-periodic dimensions place nodes on the closed interval
``[lower, upper]`` with spacing ``(upper - lower)/(count - 1)``; periodic
dimensions cover ``[lower, upper)`` with spacing ``(upper - lower)/count``
and index wraparound (the duplicate endpoint node is excluded).

All operations are pure functions of immutable inputs; value arrays are
frozen at construction so fields behave as snapshots.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateSet, OutOfDomain

__all__ = [
    "INTERIOR",
    "BOUNDARY",
    "EXTERIOR",
    "GridSpec",
    "ScalarField",
    "ImplicitSet",
    "sup_norm",
    "interpolate",
    "gradient_at",
    "hessian_at",
    "classify_nodes",
    "read_field",
    "write_field",
]

INTERIOR = 0
BOUNDARY = 1
EXTERIOR = 2


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a rectangular tensor-product grid.

    Attributes:
        lower: box lower corner, one entry per dimension.
        upper: box upper corner; ``upper[i] > lower[i]``.
        counts: nodes per dimension, each >= 3.
        periodic: True for angular coordinates (wraparound indexing).
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    counts: tuple[int, ...]
    periodic: tuple[bool, ...]

    def __init__(self, lower, upper, counts, periodic=None):
        lower = tuple(float(v) for v in np.atleast_1d(lower))
        upper = tuple(float(v) for v in np.atleast_1d(upper))
        counts = tuple(int(v) for v in np.atleast_1d(counts))
        if periodic is None:
            periodic = (False,) * len(lower)
        periodic = tuple(bool(v) for v in np.atleast_1d(periodic))
        if not (len(lower) == len(upper) == len(counts) == len(periodic)):
            raise ValueError("lower/upper/counts/periodic lengths disagree")
        if len(lower) == 0:
            raise ValueError("grid needs at least one dimension")
        for lo, hi, n in zip(lower, upper, counts):
            if not hi > lo:
                raise ValueError(f"degenerate extent [{lo}, {hi}]")
            if n < 3:
                raise ValueError(f"need at least 3 nodes per dimension, got {n}")
            if not np.isfinite((hi - lo) / (n - 1)):
                raise ValueError("non-finite grid spacing")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "periodic", periodic)

    @property
    def dims(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacing(self) -> np.ndarray:
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        n = np.asarray(self.counts)
        per = np.asarray(self.periodic)
        return (hi - lo) / np.where(per, n, n - 1)

    def coordinates(self, dim: int) -> np.ndarray:
        """Node coordinates along one dimension."""
        h = self.spacing[dim]
        return self.lower[dim] + h * np.arange(self.counts[dim])

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape ``(size, dims)``, row-major order."""
        axes = [self.coordinates(d) for d in range(self.dims)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Map periodic coordinates into [lower, upper); others pass through."""
        x = np.asarray(x, dtype=float)
        out = x.copy()
        for d in range(self.dims):
            if self.periodic[d]:
                span = self.upper[d] - self.lower[d]
                out[..., d] = self.lower[d] + np.mod(x[..., d] - self.lower[d], span)
        return out

    def locate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Containing cell index and fractional offset for each query point.

        Accepts shape ``(dims,)`` or ``(B, dims)``.  Raises OutOfDomain if a
        point leaves the closed box in a non-periodic dimension.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.dims:
            raise ValueError(f"expected {self.dims}-dimensional points")
        x = self.wrap(x)
        h = self.spacing
        cell = np.empty(x.shape, dtype=np.int64)
        frac = np.empty(x.shape, dtype=float)
        for d in range(self.dims):
            lo, hi, n = self.lower[d], self.upper[d], self.counts[d]
            xd = x[:, d]
            if not self.periodic[d]:
                bad = (xd < lo) | (xd > hi)
                if np.any(bad):
                    j = int(np.argmax(bad))
                    raise OutOfDomain(
                        f"coordinate {d} = {xd[j]} outside [{lo}, {hi}]"
                    )
            t = (xd - lo) / h[d]
            c = np.floor(t).astype(np.int64)
            top = n - 1 if self.periodic[d] else n - 2
            c = np.clip(c, 0, top)
            cell[:, d] = c
            frac[:, d] = t - c
        return cell, frac


def _flat_strides(counts: tuple[int, ...]) -> np.ndarray:
    strides = np.ones(len(counts), dtype=np.int64)
    for d in range(len(counts) - 2, -1, -1):
        strides[d] = strides[d + 1] * counts[d + 1]
    return strides


class ScalarField:
    """Values of a scalar function on the nodes of a grid.

    Value arrays are stored flat in row-major node order, are validated to
    be finite, and are frozen; derived nodal-derivative tables are cached
    lazily (safe because the values cannot change).
    """

    __slots__ = ("spec", "values", "_grad", "_hess")

    def __init__(self, spec: GridSpec, values: np.ndarray):
        values = np.asarray(values, dtype=float).ravel()
        if values.size != spec.size:
            raise ValueError(
                f"value count {values.size} does not match grid size {spec.size}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        values = values.copy()
        values.setflags(write=False)
        self.spec = spec
        self.values = values
        self._grad = None
        self._hess = None

    @classmethod
    def from_callable(cls, spec: GridSpec, fn) -> "ScalarField":
        return cls(spec, fn(spec.nodes()))

    def shaped(self) -> np.ndarray:
        return self.values.reshape(self.spec.shape)

    def replace(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.spec, values)

    def __repr__(self):
        return f"ScalarField(shape={self.spec.shape})"


@dataclass(frozen=True)
class ImplicitSet:
    """Safe set: the grid box, optionally minus the region where sdf > 0.

    The signed-distance convention is negative inside the safe set and
    positive outside; the zero level set must stay strictly inside the
    grid bounding box.
    """

    kind: str = "box"
    sdf: ScalarField | None = None

    def __post_init__(self):
        if self.kind not in ("box", "sdf"):
            raise ValueError(f"unknown set kind {self.kind!r}")
        if self.kind == "sdf":
            if self.sdf is None:
                raise ValueError("sdf kind requires a signed-distance field")
            # The zero level set must stay strictly inside the box along
            # every dimension the sdf actually constrains (it may extend
            # through dimensions it is constant along, e.g. a cylindrical
            # obstacle in a position-heading-speed state space).
            spec = self.sdf.spec
            vals = self.sdf.values.reshape(spec.shape)
            for d in range(spec.dims):
                if spec.periodic[d]:
                    continue
                if np.ptp(vals, axis=d).max() == 0.0:
                    continue
                idx = [slice(None)] * spec.dims
                for face in (0, spec.counts[d] - 1):
                    idx[d] = face
                    if np.any(vals[tuple(idx)] >= 0.0):
                        raise ValueError(
                            "sdf zero level set touches the grid bounding box"
                        )

    def contains(self, spec: GridSpec, x: np.ndarray) -> np.ndarray:
        """Membership test for states, shape ``(dims,)`` or ``(B, dims)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        inside = np.ones(x.shape[0], dtype=bool)
        for d in range(spec.dims):
            if not spec.periodic[d]:
                inside &= (x[:, d] >= spec.lower[d]) & (x[:, d] <= spec.upper[d])
        if self.kind == "sdf":
            vals = np.full(x.shape[0], np.inf)
            if np.any(inside):
                vals[inside] = interpolate(self.sdf, x[inside])
            inside &= vals <= 0.0
        return inside


def _box_shell_mask(spec: GridSpec) -> np.ndarray:
    """Outermost node layer of every non-periodic dimension (shaped bool)."""
    mask = np.zeros(spec.shape, dtype=bool)
    for d in range(spec.dims):
        if spec.periodic[d]:
            continue
        idx = [slice(None)] * spec.dims
        idx[d] = 0
        mask[tuple(idx)] = True
        idx[d] = spec.counts[d] - 1
        mask[tuple(idx)] = True
    return mask


def classify_nodes(spec: GridSpec, safe_set: ImplicitSet) -> np.ndarray:
    """Partition grid nodes into interior / boundary / exterior (flat int8).

    Box sets: the boundary is the outermost node layer of each non-periodic
    dimension.  Implicit sets additionally mark nodes with sdf > 0 as
    exterior and non-exterior nodes with an exterior face-neighbor as
    boundary.
    """
    cls = np.zeros(spec.shape, dtype=np.int8)
    cls[_box_shell_mask(spec)] = BOUNDARY
    if safe_set.kind == "sdf":
        if safe_set.sdf.spec != spec:
            raise ValueError("sdf lives on a different grid")
        ext = safe_set.sdf.values.reshape(spec.shape) > 0.0
        cls[ext] = EXTERIOR
        near = np.zeros(spec.shape, dtype=bool)
        for d in range(spec.dims):
            if spec.periodic[d]:
                near |= np.roll(ext, 1, axis=d) | np.roll(ext, -1, axis=d)
            else:
                lo = [slice(None)] * spec.dims
                hi = [slice(None)] * spec.dims
                lo[d] = slice(None, -1)
                hi[d] = slice(1, None)
                near[tuple(lo)] |= ext[tuple(hi)]
                near[tuple(hi)] |= ext[tuple(lo)]
        cls[near & ~ext] = BOUNDARY
    if not np.any(cls == INTERIOR):
        raise DegenerateSet("safe set has no interior grid node")
    return cls.ravel()


def sup_norm(field: ScalarField) -> float:
    """Supremum norm: the largest absolute node value."""
    return float(np.max(np.abs(field.values)))


def _interp_stack(spec: GridSpec, stack: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of ``K`` stacked node arrays at ``B`` points.

    stack: shape (K, size); returns shape (B, K).
    """
    cell, frac = spec.locate(x)
    strides = _flat_strides(spec.counts)
    B = cell.shape[0]
    out = np.zeros((B, stack.shape[0]))
    counts = np.asarray(spec.counts)
    for corner in itertools.product((0, 1), repeat=spec.dims):
        idx = cell + np.asarray(corner, dtype=np.int64)
        for d in range(spec.dims):
            if spec.periodic[d]:
                idx[:, d] %= counts[d]
        flat = idx @ strides
        w = np.ones(B)
        for d, c in enumerate(corner):
            w *= frac[:, d] if c else (1.0 - frac[:, d])
        out += w[:, None] * stack[:, flat].T
    return out


def interpolate(field: ScalarField, x: np.ndarray):
    """Multilinear interpolation; exact at nodes, bounded by cell corners.

    Accepts a single point ``(dims,)`` (returns float) or a batch
    ``(B, dims)`` (returns ``(B,)``).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    vals = _interp_stack(field.spec, field.values[None, :], x)[:, 0]
    return float(vals[0]) if single else vals


def _derivative_1d(values: np.ndarray, dim: int, h: float, periodic: bool,
                   order: int) -> np.ndarray:
    """Nodal derivative along one axis: central inside, 3-point one-sided
    at non-periodic faces (both exact for quadratics)."""
    v = values
    if periodic:
        vp = np.roll(v, -1, axis=dim)
        vm = np.roll(v, 1, axis=dim)
        if order == 1:
            return (vp - vm) / (2.0 * h)
        return (vp - 2.0 * v + vm) / h**2
    out = np.empty_like(v)
    n = v.shape[dim]

    def seg(a, b):
        idx = [slice(None)] * v.ndim
        idx[dim] = slice(a, b)
        return tuple(idx)

    def at(j):
        idx = [slice(None)] * v.ndim
        idx[dim] = j
        return tuple(idx)

    if order == 1:
        out[seg(1, -1)] = (v[seg(2, None)] - v[seg(0, -2)]) / (2.0 * h)
        out[at(0)] = (-3.0 * v[at(0)] + 4.0 * v[at(1)] - v[at(2)]) / (2.0 * h)
        out[at(n - 1)] = (3.0 * v[at(n - 1)] - 4.0 * v[at(n - 2)] + v[at(n - 3)]) / (2.0 * h)
    else:
        out[seg(1, -1)] = (v[seg(2, None)] - 2.0 * v[seg(1, -1)] + v[seg(0, -2)]) / h**2
        out[at(0)] = (v[at(0)] - 2.0 * v[at(1)] + v[at(2)]) / h**2
        out[at(n - 1)] = (v[at(n - 1)] - 2.0 * v[at(n - 2)] + v[at(n - 3)]) / h**2
    return out


def _nodal_gradient(field: ScalarField) -> np.ndarray:
    """Stacked nodal first derivatives, shape (dims, size). Cached."""
    if field._grad is None:
        spec = field.spec
        v = field.shaped()
        h = spec.spacing
        g = [
            _derivative_1d(v, d, h[d], spec.periodic[d], 1).ravel()
            for d in range(spec.dims)
        ]
        field._grad = np.stack(g, axis=0)
    return field._grad


def _nodal_hessian(field: ScalarField) -> np.ndarray:
    """Stacked nodal second derivatives (row-major over (i, j) with i <= j),
    shape (dims*(dims+1)/2, size).  Cross terms are symmetrized compositions
    of the 1-D stencils (the 4-point central stencil on interior nodes, with
    one-sided fallback within one cell of a face)."""
    if field._hess is None:
        spec = field.spec
        v = field.shaped()
        h = spec.spacing
        rows = []
        for i in range(spec.dims):
            for j in range(i, spec.dims):
                if i == j:
                    rows.append(
                        _derivative_1d(v, i, h[i], spec.periodic[i], 2).ravel()
                    )
                else:
                    di = _derivative_1d(v, i, h[i], spec.periodic[i], 1)
                    dj = _derivative_1d(v, j, h[j], spec.periodic[j], 1)
                    dij = _derivative_1d(di, j, h[j], spec.periodic[j], 1)
                    dji = _derivative_1d(dj, i, h[i], spec.periodic[i], 1)
                    rows.append((0.5 * (dij + dji)).ravel())
        field._hess = np.stack(rows, axis=0)
    return field._hess


def gradient_at(field: ScalarField, x: np.ndarray) -> np.ndarray:
    """Gradient at a state: nodal central differences blended to ``x``.

    Accepts ``(dims,)`` -> ``(dims,)`` or ``(B, dims)`` -> ``(B, dims)``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    out = _interp_stack(field.spec, _nodal_gradient(field), x)
    return out[0] if single else out


def hessian_at(field: ScalarField, x: np.ndarray) -> np.ndarray:
    """Symmetric Hessian at a state, from nodal stencils blended to ``x``.

    Accepts ``(dims,)`` -> ``(dims, dims)`` or ``(B, dims)`` ->
    ``(B, dims, dims)``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    flat = _interp_stack(field.spec, _nodal_hessian(field), x)
    n = field.spec.dims
    B = flat.shape[0]
    H = np.empty((B, n, n))
    k = 0
    for i in range(n):
        for j in range(i, n):
            H[:, i, j] = flat[:, k]
            H[:, j, i] = flat[:, k]
            k += 1
    return H[0] if single else H


# --- .fld text format -------------------------------------------------------
#
# dims <n>
# <lower> <upper> <count> <periodic 0|1>     (one line per dimension)
# <value>                                    (one repr'd float per node line)
#
# repr() emits the shortest decimal that round-trips the binary double, so
# write -> read -> write is guaranteed byte-identical.


def write_field(field: ScalarField, path) -> None:
    spec = field.spec
    lines = [f"dims {spec.dims}"]
    for d in range(spec.dims):
        lines.append(
            f"{spec.lower[d]!r} {spec.upper[d]!r} {spec.counts[d]} {int(spec.periodic[d])}"
        )
    lines.extend(repr(float(v)) for v in field.values)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_field(path) -> ScalarField:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines or not lines[0].startswith("dims "):
        raise ValueError(f"{path}: not a field file (missing 'dims' header)")
    n = int(lines[0].split()[1])
    lower, upper, counts, periodic = [], [], [], []
    for d in range(n):
        parts = lines[1 + d].split()
        if len(parts) != 4:
            raise ValueError(f"{path}: malformed header line {d + 2}")
        lower.append(float(parts[0]))
        upper.append(float(parts[1]))
        counts.append(int(parts[2]))
        periodic.append(bool(int(parts[3])))
    spec = GridSpec(lower, upper, counts, periodic)
    values = np.array([float(s) for s in lines[1 + n:] if s], dtype=float)
    return ScalarField(spec, values)
