"""Staged programs over a live-variable vector, with reverse gradients and
edge-pushing Hessians.

A :class:`Tape` is an ordered list of :class:`Stage` objects.  Each stage reads
some live variables and writes fresh ones (single assignment); variables it
does not touch are carried through unchanged.  The scalar result is the
designated output variable.

The Hessian is accumulated backwards, stage by stage, as ``H <- J^T H J + Z``
over the set of live variables that still influence the output.  Variables
leave that set once the stage producing them has been processed, and a
stage's inputs join it, so ``H`` never grows beyond the variables that are
simultaneously alive.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .linalg import SymmetricMatrix
from .primitives import Constant, Primitive, Triplets, UnsupportedPrimitive, weighted_hessian_dense


class StageError(RuntimeError):
    """A primitive failed while evaluating stage ``index``."""

    def __init__(self, index, kind, cause):
        super().__init__(f"stage {index} ({kind}) failed: {cause}")
        self.index = index
        self.kind = kind
        self.cause = cause


@dataclass(frozen=True)
class Stage:
    rule: Primitive
    inputs: np.ndarray
    outputs: np.ndarray

    @property
    def kind(self):
        return self.rule.kind


@dataclass(frozen=True)
class Tape:
    stages: tuple
    live_size: int
    input_indices: np.ndarray
    output_index: int

    @property
    def n_inputs(self):
        return int(self.input_indices.size)


class TapeBuilder:
    """Records stages; ``build`` freezes them into a :class:`Tape`."""

    def __init__(self, n_inputs):
        self.n_inputs = int(n_inputs)
        self.live_size = self.n_inputs
        self.stages = []

    @property
    def inputs(self):
        return np.arange(self.n_inputs)

    def add(self, rule: Primitive, inputs=()):
        inputs = np.asarray(inputs, dtype=np.int64).ravel()
        if inputs.size != rule.n_in:
            raise ValueError(f"{rule.kind}: expected {rule.n_in} inputs, got {inputs.size}")
        if inputs.size and (inputs.min() < 0 or inputs.max() >= self.live_size):
            raise IndexError(f"{rule.kind}: input index outside the live vector")
        if np.unique(inputs).size != inputs.size:
            raise ValueError(f"{rule.kind}: stage inputs must be distinct (use a gather stage to duplicate)")
        outputs = np.arange(self.live_size, self.live_size + rule.n_out)
        self.live_size += rule.n_out
        self.stages.append(Stage(rule, inputs, outputs))
        return outputs

    def constant(self, values):
        return self.add(Constant(values))

    def build(self, output_index=None):
        if not self.stages:
            raise ValueError("a tape needs at least one stage")
        last = self.stages[-1].outputs
        if output_index is None:
            if last.size != 1:
                raise ValueError("final stage must write a single scalar output")
            output_index = int(last[0])
        elif output_index not in last:
            raise ValueError("the output must be written by the final stage")
        return Tape(tuple(self.stages), self.live_size, self.inputs, int(output_index))


@dataclass
class Trace:
    values: np.ndarray
    contexts: list = field(default_factory=list)


def forward(tape: Tape, inputs):
    """Evaluate the tape; returns ``(value, trace)``."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape != (tape.n_inputs,):
        raise ValueError(f"tape expects {tape.n_inputs} inputs, got shape {inputs.shape}")
    v = np.zeros(tape.live_size)
    v[tape.input_indices] = inputs
    contexts = []
    for k, stage in enumerate(tape.stages):
        try:
            y, ctx = stage.rule.forward(v[stage.inputs])
        except Exception as exc:  # noqa: BLE001 - re-raised with stage context
            raise StageError(k, stage.kind, exc) from exc
        v[stage.outputs] = y
        contexts.append(ctx)
    return float(v[tape.output_index]), Trace(v, contexts)


def _adjoint_sweep(tape, trace):
    adj = np.zeros(tape.live_size)
    adj[tape.output_index] = 1.0
    for stage, ctx in zip(reversed(tape.stages), reversed(trace.contexts)):
        ybar = adj[stage.outputs]
        if stage.inputs.size and np.any(ybar):
            adj[stage.inputs] += stage.rule.pullback(ctx, ybar[None, :])[0]
    return adj


def gradient(tape: Tape, inputs, trace=None):
    if trace is None:
        _, trace = forward(tape, inputs)
    return _adjoint_sweep(tape, trace)[tape.input_indices]


def _span(pos):
    """Return a slice equivalent to the index array ``pos`` when it is a contiguous run."""
    if pos.size and pos[-1] - pos[0] == pos.size - 1 and np.all(np.diff(pos) == 1):
        return slice(int(pos[0]), int(pos[-1]) + 1)
    return None


def _add_block(h, rows, cols, block):
    rs, cs = _span(rows), _span(cols)
    if rs is not None and cs is not None:
        h[rs, cs] += block
    else:
        h[np.ix_(rows, cols)] += block


def _add_z(h, pin, z, n_in):
    if isinstance(z, Triplets):
        if z.vals.size:
            np.add.at(h, (pin[z.rows], pin[z.cols]), z.vals)
    else:
        _add_block(h, pin, pin, weighted_hessian_dense(z, n_in))


class HessianStats:
    """Timing and peak active-set size of the last Hessian sweep."""

    def __init__(self):
        self.max_active = 0
        self.seconds = 0.0


def _weighted_hessian(stage, k, ctx, ybar):
    if not stage.inputs.size or not np.any(ybar):
        return None
    try:
        return stage.rule.weighted_hessian(ctx, ybar)
    except UnsupportedPrimitive:
        raise
    except NotImplementedError as exc:
        raise UnsupportedPrimitive(f"stage {k}: primitive {stage.kind!r} lacks a second-order rule") from exc


def _general_update(h, active, where, stage, ctx, z, condensed):
    """One ``H <- J^T H J + Z`` step for arbitrary index layouts; returns ``(h, active)``."""
    rule, ins, outs = stage.rule, stage.inputs, stage.outputs
    po = where[outs]
    live_out = po >= 0
    n_act = active.size
    is_out = np.zeros(n_act, dtype=bool)
    is_out[po[live_out]] = True
    cpos = np.flatnonzero(~is_out)

    # columns of H belonging to this stage's outputs (inactive outputs -> zero columns)
    if live_out.all() and (ospan := _span(po)) is not None:
        h_out = h[:, ospan]
    else:
        h_out = np.zeros((n_act, outs.size))
        h_out[:, live_out] = h[:, po[live_out]]

    r = h_ii = None
    diag = getattr(rule, "diagonal", None)
    if ins.size and live_out.any():
        r = rule.pullback(ctx, h_out)  # H[:, O] J
        if diag is not None:
            d = diag(ctx)
            h_ii = np.zeros((outs.size, outs.size))
            h_ii[live_out] = h_out[po[live_out]]
            h_ii *= np.multiply.outer(d, d)
        else:
            r_out = np.zeros((outs.size, ins.size))
            r_out[live_out] = r[po[live_out]]
            h_ii = rule.pullback(ctx, r_out.T)  # J^T H_OO J

    if condensed:
        # surviving variables first, then inputs not yet alive
        nc = cpos.size
        where[active[is_out]] = -1
        kept = active[cpos]
        where[kept] = np.arange(nc)
        fresh = ins[where[ins] < 0]
        new_active = np.concatenate([kept, fresh])
        where[fresh] = np.arange(nc, nc + fresh.size)
        h_new = np.zeros((new_active.size, new_active.size))
        cspan = _span(cpos)
        if cspan is not None and cspan.start == 0:
            h_new[:nc, :nc] = h[:nc, :nc]
        elif nc:
            h_new[:nc, :nc] = h[np.ix_(cpos, cpos)]
        rows = np.arange(nc)
    else:
        new_active = active
        h_new = h.copy()
        h_new[outs, :] = 0.0
        h_new[:, outs] = 0.0
        rows = cpos
    pin = where[ins]
    if r is not None:
        r_c = r[cpos]
        _add_block(h_new, rows, pin, r_c)
        _add_block(h_new, pin, rows, r_c.T)
        _add_block(h_new, pin, pin, h_ii)
    if z is not None:
        _add_z(h_new, pin, z, ins.size)
    return h_new, new_active


def _peak_active(tape):
    """Largest condensed active set reached during the backward sweep."""
    alive = np.zeros(tape.live_size, dtype=bool)
    alive[tape.output_index] = True
    n = peak = 1
    for stage in reversed(tape.stages):
        n -= int(alive[stage.outputs].sum())
        alive[stage.outputs] = False
        n += int((~alive[stage.inputs]).sum())
        alive[stage.inputs] = True
        peak = max(peak, n)
    return peak


def _scale_block(block, d, rows=64):
    # block *= outer(d, d) in row strips; a full outer product would be a large temporary
    tmp = np.empty((min(rows, d.size), d.size))
    for s in range(0, d.size, rows):
        t = tmp[: min(rows, d.size - s)]
        np.multiply.outer(d[s : s + rows], d, out=t)
        block[s : s + rows] *= t


def _edge_push(tape, trace, stats=None, condensed=True):
    """Backward Hessian sweep; returns ``(adjoints, H, where)``.

    With ``condensed=False`` the matrix spans the whole live vector for the
    entire sweep instead of only the variables that are still alive.  Stages
    only ever read the column block ``H[:, outputs]``, so rounding-level
    asymmetry is never amplified; the result is symmetrized once on extraction.
    """
    t0 = time.perf_counter()
    n_live = tape.live_size
    adj = np.zeros(n_live)
    adj[tape.output_index] = 1.0
    if condensed:
        cap = _peak_active(tape)
        active = np.array([tape.output_index], dtype=np.int64)
        where = np.full(n_live, -1, dtype=np.int64)
        where[tape.output_index] = 0
    else:
        cap = n_live
        active = np.arange(n_live)
        where = np.arange(n_live)
    if condensed:
        buf = np.empty((cap, cap))  # blocks are written before they are read
        buf[0, 0] = 0.0
    else:
        buf = np.zeros((cap, cap))
    n = active.size
    max_active = n
    for k in range(len(tape.stages) - 1, -1, -1):
        stage = tape.stages[k]
        rule, ctx = stage.rule, trace.contexts[k]
        ins, outs = stage.inputs, stage.outputs
        ybar = adj[outs]
        if ins.size and np.any(ybar):
            adj[ins] += rule.pullback(ctx, ybar[None, :])[0]
        z = _weighted_hessian(stage, k, ctx, ybar)

        po = where[outs]
        nc = n - outs.size
        fast = (
            condensed
            and po.size
            and po[0] == nc
            and _span(po) is not None
            and np.all(where[ins] < 0)
        )
        if not fast:
            h, active = _general_update(buf[:n, :n], active, where, stage, ctx, z, condensed)
            n = active.size
            buf[:n, :n] = h
            max_active = max(max_active, n)
            continue

        # outputs occupy the trailing block [nc, n) and every input is new
        diag = getattr(rule, "diagonal", None)
        if diag is not None and ins.size == outs.size:
            d = diag(ctx)
            buf[:nc, nc:n] *= d
            buf[nc:n, :nc] = buf[:nc, nc:n].T
            _scale_block(buf[nc:n, nc:n], d)
            n_new = n
        elif ins.size:
            r = rule.pullback(ctx, buf[:n, nc:n])  # H[:, O] J
            h_ii = rule.pullback(ctx, r[nc:].T)  # J^T H_OO J
            n_new = nc + ins.size
            buf[:nc, nc:n_new] = r[:nc]
            buf[nc:n_new, :nc] = r[:nc].T
            buf[nc:n_new, nc:n_new] = h_ii
        else:
            n_new = nc
        if z is not None:
            _add_z(buf, nc + np.arange(ins.size), z, ins.size)
        where[outs] = -1
        where[ins] = np.arange(nc, n_new)
        active = np.concatenate([active[:nc], ins])
        n = n_new
        max_active = max(max_active, n)
    if stats is not None:
        stats.max_active = max_active
        stats.seconds = time.perf_counter() - t0
    return adj, buf[:n, :n], where


def _extract_inputs(tape, h, where):
    d = tape.n_inputs
    pos = where[tape.input_indices]
    have = pos >= 0
    out = np.zeros((d, d))
    idx = np.flatnonzero(have)
    out[np.ix_(idx, idx)] = h[np.ix_(pos[have], pos[have])]
    return out


def hessian(tape: Tape, inputs, trace=None, condensed=True, stats=None) -> SymmetricMatrix:
    """Exact Hessian of the tape output with respect to its inputs."""
    if trace is None:
        _, trace = forward(tape, inputs)
    _, h, where = _edge_push(tape, trace, stats, condensed=condensed)
    return SymmetricMatrix.from_dense(_extract_inputs(tape, h, where))


def value_and_derivatives(tape: Tape, inputs, order=2, stats=None):
    """Return ``(value, gradient, hessian)``; the Hessian is ``None`` for ``order < 2``."""
    value, trace = forward(tape, inputs)
    if order < 1:
        return value, None, None
    if order == 1:
        return value, _adjoint_sweep(tape, trace)[tape.input_indices], None
    adj, h, where = _edge_push(tape, trace, stats)
    hess = SymmetricMatrix.from_dense(_extract_inputs(tape, h, where))
    return value, adj[tape.input_indices], hess


def dense_reference_hessian(tape: Tape, inputs):
    """Reference sweep over the whole live vector with dense stage Jacobians."""
    _, trace = forward(tape, inputs)
    n = tape.live_size
    adj = np.zeros(n)
    adj[tape.output_index] = 1.0
    h = np.zeros((n, n))
    for k in range(len(tape.stages) - 1, -1, -1):
        stage = tape.stages[k]
        rule, ctx = stage.rule, trace.contexts[k]
        ins, outs = stage.inputs, stage.outputs
        ybar = adj[outs]
        jfull = np.eye(n)
        jfull[outs, :] = 0.0
        if ins.size:
            jfull[np.ix_(outs, ins)] = rule.pullback(ctx, np.eye(outs.size))
            adj[ins] += rule.pullback(ctx, ybar[None, :])[0]
        h = jfull.T @ h @ jfull
        if ins.size:
            z = weighted_hessian_dense(rule.weighted_hessian(ctx, ybar), ins.size)
            h[np.ix_(ins, ins)] += z
    return h[np.ix_(tape.input_indices, tape.input_indices)]
