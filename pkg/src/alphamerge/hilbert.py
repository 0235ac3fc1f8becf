"""Dense finite-dimensional Hilbert space kernels.

States are vectors (pure) or density matrices (mixed) over an explicitly
labelled tensor factorisation, so that partial traces, channel applications
and subsystem bookkeeping can be done by name rather than by index
gymnastics at every call site.

Conventions used throughout the package:

* distances are the *unhalved* trace norm  ||rho - sigma||_1  in [0, 2];
* fidelity is the square-root convention  F = ||sqrt(rho) sqrt(sigma)||_1;
* Haar sampling uses QR of a complex Ginibre matrix with the
  phase-of-diagonal correction, which is exactly Haar distributed;
* eigenvalues in (-1e-10, 0) are clipped to zero before logs/square roots.

Everything is dense; the supported total dimension is capped at 2**14.
All values are immutable after construction and all operations are pure
given an explicit RNG seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, LabelError, StateError

MAX_TOTAL_DIM = 2 ** 14

UNIT_TOL = 1e-10        # pure-state norm deviation
HERMITIAN_TOL = 1e-10   # max elementwise deviation of rho from rho^dagger
PSD_TOL = 1e-10         # eigenvalues may undershoot zero by this much
TRACE_TOL = 1e-10
ISOMETRY_TOL = 1e-10
RANK_TOL = 1e-12        # eigenvalues below this count as zero for rank


def as_rng(seed):
    """Coerce an int seed (or an existing Generator) into a numpy Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def rng_stream(seed, stream_index=0):
    """Deterministic child stream: one master seed, many independent streams.

    Stream splitting is `SeedSequence([seed, stream_index])`, so any
    (seed, index) pair names the same generator in every run.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream_index)]))


@dataclass(frozen=True)
class SystemLabel:
    """A named tensor factor: short identifier plus its dimension."""

    name: str
    dim: int

    def __post_init__(self):
        if not self.name:
            raise LabelError("system label name must be non-empty")
        if int(self.dim) < 1:
            raise DimensionError(f"label {self.name!r}: dim must be >= 1, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))


def _clip_spectrum(w, tol=PSD_TOL):
    """Clip small negative eigenvalues (numerical PSD drift) to zero."""
    w = np.asarray(w, dtype=float)
    if w.size and w.min() < -tol:
        raise StateError(f"matrix is not PSD: min eigenvalue {w.min():.3e} < -{tol:.0e}")
    return np.clip(w, 0.0, None)


class MultipartiteState:
    """Pure or mixed state over a labelled tensor factorisation.

    `data` is a complex vector for pure states and a complex square matrix
    for mixed states; its length/side is the product of the factor
    dimensions, indexed row-major in the declared factor order.
    """

    __slots__ = ("factors", "data")

    def __init__(self, factors: Sequence[SystemLabel], data, validate: bool = True):
        factors = tuple(factors)
        names = [f.name for f in factors]
        if len(set(names)) != len(names):
            raise LabelError(f"duplicate factor names in {names}")
        total = 1
        for f in factors:
            total *= f.dim
        if total > MAX_TOTAL_DIM:
            raise DimensionError(
                f"total dimension {total} exceeds the supported maximum {MAX_TOTAL_DIM}")
        data = np.array(data, dtype=complex, copy=True)
        if data.ndim == 1:
            if data.shape[0] != total:
                raise DimensionError(
                    f"pure data length {data.shape[0]} != product of dims {total}")
            if validate:
                nrm = float(np.linalg.norm(data))
                if abs(nrm - 1.0) > UNIT_TOL:
                    raise StateError(f"pure state norm {nrm} deviates from 1 beyond {UNIT_TOL}")
        elif data.ndim == 2:
            if data.shape != (total, total):
                raise DimensionError(
                    f"mixed data shape {data.shape} != ({total}, {total})")
            if validate:
                if np.abs(data - data.conj().T).max() > HERMITIAN_TOL:
                    raise StateError("mixed state is not Hermitian within tolerance")
                tr = float(np.real(np.trace(data)))
                if abs(tr - 1.0) > TRACE_TOL:
                    raise StateError(f"mixed state trace {tr} deviates from 1 beyond {TRACE_TOL}")
                _clip_spectrum(np.linalg.eigvalsh(data))
        else:
            raise DimensionError("state data must be a vector or a square matrix")
        data.flags.writeable = False
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "data", data)

    def __setattr__(self, name, value):
        raise AttributeError("MultipartiteState is immutable")

    # -- structure helpers -------------------------------------------------

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    @property
    def names(self) -> tuple:
        return tuple(f.name for f in self.factors)

    @property
    def dims(self) -> tuple:
        return tuple(f.dim for f in self.factors)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def position(self, name: str) -> int:
        for i, f in enumerate(self.factors):
            if f.name == name:
                return i
        raise LabelError(f"unknown factor {name!r}; have {self.names}")

    def dim_of(self, name: str) -> int:
        return self.factors[self.position(name)].dim

    def density(self) -> np.ndarray:
        """Density matrix of the state (outer product for pure states)."""
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return np.array(self.data, copy=True)

    def __repr__(self):
        kind = "pure" if self.is_pure else "mixed"
        facts = ", ".join(f"{f.name}:{f.dim}" for f in self.factors)
        return f"MultipartiteState({kind}; {facts})"

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        """JSON-ready form: dims, kind, interleaved re/im data, row-major."""
        flat = self.data.reshape(-1)
        interleaved = np.empty(2 * flat.size, dtype=float)
        interleaved[0::2] = flat.real
        interleaved[1::2] = flat.imag
        return {
            "dims": list(self.dims),
            "kind": "pure" if self.is_pure else "mixed",
            "data": interleaved.tolist(),
            "names": list(self.names),
        }

    @staticmethod
    def from_dict(obj: dict) -> "MultipartiteState":
        dims = [int(d) for d in obj["dims"]]
        kind = obj["kind"]
        if kind not in ("pure", "mixed"):
            raise StateError(f"unknown state kind {kind!r}")
        raw = np.asarray(obj["data"], dtype=float)
        if raw.size % 2 != 0:
            raise StateError("interleaved data array must have even length")
        flat = raw[0::2] + 1j * raw[1::2]
        total = math.prod(dims)
        names = obj.get("names") or [f"Q{i}" for i in range(len(dims))]
        factors = [SystemLabel(n, d) for n, d in zip(names, dims)]
        data = flat if kind == "pure" else flat.reshape(total, total)
        return MultipartiteState(factors, data)


# ---------------------------------------------------------------------------
# construction and rearrangement
# ---------------------------------------------------------------------------

def tensor(states: Iterable[MultipartiteState]) -> MultipartiteState:
    """Tensor product in the declared order; factor names must be disjoint."""
    states = list(states)
    if not states:
        raise DimensionError("tensor of zero states is undefined")
    seen = set()
    for s in states:
        for n in s.names:
            if n in seen:
                raise LabelError(f"factor name collision on {n!r}")
            seen.add(n)
    factors = [f for s in states for f in s.factors]
    if all(s.is_pure for s in states):
        data = states[0].data
        for s in states[1:]:
            data = np.kron(data, s.data)
    else:
        data = states[0].density()
        for s in states[1:]:
            data = np.kron(data, s.density())
    return MultipartiteState(factors, data)


def permute_factors(state: MultipartiteState, order: Sequence[str]) -> MultipartiteState:
    """Reorder the tensor factors to the given full list of names."""
    if sorted(order) != sorted(state.names):
        raise LabelError(f"permutation {order} does not match factors {state.names}")
    perm = [state.position(n) for n in order]
    dims = state.dims
    new_factors = [state.factors[p] for p in perm]
    if state.is_pure:
        data = state.data.reshape(dims).transpose(perm).reshape(-1)
    else:
        n = len(dims)
        full = state.data.reshape(dims + dims)
        axes = perm + [p + n for p in perm]
        side = state.total_dim
        data = full.transpose(axes).reshape(side, side)
    return MultipartiteState(new_factors, data, validate=False)


def merge_factors(state: MultipartiteState, names: Sequence[str],
                  new_name: str) -> MultipartiteState:
    """Fuse the named factors (in the given order) into one factor.

    The fused factor sits where the first named factor currently is; other
    factors keep their relative order.
    """
    names = list(names)
    if not names:
        raise LabelError("merge_factors needs at least one name")
    rest = [n for n in state.names if n not in names]
    first_pos = min(state.position(n) for n in names)
    before = [n for n in rest if state.position(n) < first_pos]
    after = [n for n in rest if state.position(n) >= first_pos]
    ordered = permute_factors(state, before + names + after)
    dim = math.prod(state.dim_of(n) for n in names)
    merged = SystemLabel(new_name, dim)
    new_factors = ([ordered.factors[i] for i in range(len(before))]
                   + [merged]
                   + [f for f in ordered.factors[len(before) + len(names):]])
    return MultipartiteState(new_factors, ordered.data, validate=False)


def split_factor(state: MultipartiteState, name: str,
                 parts: Sequence[SystemLabel]) -> MultipartiteState:
    """Split one factor into several; part dims must multiply to its dim."""
    pos = state.position(name)
    if math.prod(p.dim for p in parts) != state.factors[pos].dim:
        raise DimensionError(
            f"cannot split {name!r} of dim {state.factors[pos].dim} into "
            f"{[p.dim for p in parts]}")
    new_factors = list(state.factors[:pos]) + list(parts) + list(state.factors[pos + 1:])
    return MultipartiteState(new_factors, state.data, validate=False)


def rename_factor(state: MultipartiteState, old: str, new: str) -> MultipartiteState:
    pos = state.position(old)
    factors = list(state.factors)
    factors[pos] = SystemLabel(new, factors[pos].dim)
    return MultipartiteState(factors, state.data, validate=False)


def basis_state(label: SystemLabel, index: int = 0) -> MultipartiteState:
    vec = np.zeros(label.dim, dtype=complex)
    vec[index] = 1.0
    return MultipartiteState([label], vec, validate=False)


def maximally_entangled(label_a: SystemLabel, label_b: SystemLabel) -> MultipartiteState:
    """|Phi> = sum_i |ii>/sqrt(d) between two equal-dimension factors."""
    if label_a.dim != label_b.dim:
        raise DimensionError("maximally entangled pair needs equal dimensions")
    d = label_a.dim
    vec = np.eye(d, dtype=complex).reshape(-1) / math.sqrt(d)
    return MultipartiteState([label_a, label_b], vec, validate=False)


def maximally_mixed(label: SystemLabel) -> MultipartiteState:
    return MultipartiteState([label], np.eye(label.dim, dtype=complex) / label.dim,
                             validate=False)


# ---------------------------------------------------------------------------
# partial trace and purification
# ---------------------------------------------------------------------------

def partial_trace(state: MultipartiteState, keep: Iterable[str]) -> MultipartiteState:
    """Trace out everything except the named factors (original order kept)."""
    keep = set(keep)
    for n in keep:
        if n not in state.names:
            raise LabelError(f"unknown factor {n!r}; have {state.names}")
    keep_pos = [i for i, f in enumerate(state.factors) if f.name in keep]
    trace_pos = [i for i, f in enumerate(state.factors) if f.name not in keep]
    kept_factors = [state.factors[i] for i in keep_pos]
    kdim = math.prod(f.dim for f in kept_factors) if kept_factors else 1
    if not kept_factors:
        raise LabelError("partial_trace must keep at least one factor")
    dims = state.dims
    if state.is_pure:
        psi = state.data.reshape(dims)
        rho = np.tensordot(psi, psi.conj(), axes=(trace_pos, trace_pos))
        rho = rho.reshape(kdim, kdim)
    else:
        n = len(dims)
        full = state.data.reshape(dims + dims)
        letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
        ket = []
        bra = []
        out = []
        nxt = 0
        for i in range(n):
            if i in keep_pos:
                k, b = letters[nxt], letters[nxt + 1]
                nxt += 2
                ket.append(k)
                bra.append(b)
                out.append((k, b))
            else:
                t = letters[nxt]
                nxt += 1
                ket.append(t)
                bra.append(t)
        spec = "".join(ket) + "".join(bra) + "->" + "".join(k for k, _ in out) + "".join(
            b for _, b in out)
        rho = np.einsum(spec, full).reshape(kdim, kdim)
    rho = 0.5 * (rho + rho.conj().T)  # kill roundoff skew
    return MultipartiteState(kept_factors, rho, validate=False)


def _phase_fix_columns(mat, tol=1e-12):
    """Make the first non-negligible entry of every column real positive."""
    mat = np.array(mat, copy=True)
    for j in range(mat.shape[1]):
        col = mat[:, j]
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size:
            ph = col[nz[0]] / abs(col[nz[0]])
            mat[:, j] = col * ph.conj()
    return mat


def purify(rho: MultipartiteState, ref: SystemLabel) -> MultipartiteState:
    """Purify a mixed state with a reference factor appended at the end.

    The reference dimension must be at least the rank of rho.  Eigenvalues
    are sorted in decreasing order and eigenvector phases are fixed so the
    construction is deterministic.
    """
    if rho.is_pure:
        # pure states self-purify; any reference just rides along in |0>
        return tensor([rho, basis_state(ref, 0)])
    w, v = np.linalg.eigh(rho.data)
    w = _clip_spectrum(w)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    scale = max(1.0, float(w[0]))
    rank = int(np.sum(w > RANK_TOL * scale))
    rank = max(rank, 1)
    if ref.dim < rank:
        raise DimensionError(
            f"reference dim {ref.dim} is smaller than rank {rank} of the state")
    v = _phase_fix_columns(v[:, :rank])
    amp = np.sqrt(w[:rank])
    # psi[x, i] = sqrt(w_i) v[x, i]
    mat = np.zeros((rho.total_dim, ref.dim), dtype=complex)
    mat[:, :rank] = v * amp
    vec = mat.reshape(-1)
    vec = vec / np.linalg.norm(vec)
    return MultipartiteState(list(rho.factors) + [ref], vec, validate=False)


# ---------------------------------------------------------------------------
# Haar sampling
# ---------------------------------------------------------------------------

def haar_unitary(dim: int, seed) -> np.ndarray:
    """Exact Haar-random unitary: QR of a Ginibre matrix, phases corrected."""
    if dim < 1:
        raise DimensionError("haar_unitary needs dim >= 1")
    rng = as_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim)))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r).copy()
    d = np.where(np.abs(d) < 1e-300, 1.0, d)
    return q * (d / np.abs(d))


def haar_isometry_matrix(d_in: int, d_out: int, seed) -> np.ndarray:
    """Haar-random isometry as a (d_out, d_in) matrix with orthonormal columns."""
    if d_out < d_in:
        raise DimensionError(f"isometry needs d_out >= d_in, got {d_out} < {d_in}")
    rng = as_rng(seed)
    z = (rng.standard_normal((d_out, d_in)) + 1j * rng.standard_normal((d_out, d_in)))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r).copy()
    d = np.where(np.abs(d) < 1e-300, 1.0, d)
    return q * (d / np.abs(d))


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------

class QuantumChannel:
    """A channel given by its Stinespring isometry with a declared (B, E) split.

    `isometry` maps the input space into output x environment, ordered with
    the output factor first.  Applying the channel keeps the environment
    factor around (callers trace it out as needed).
    """

    __slots__ = ("isometry", "output", "environment")

    def __init__(self, isometry, output: SystemLabel, environment: SystemLabel,
                 validate: bool = True):
        isometry = np.array(isometry, dtype=complex, copy=True)
        if isometry.ndim != 2:
            raise DimensionError("channel isometry must be a matrix")
        d_out, d_in = isometry.shape
        if d_out != output.dim * environment.dim:
            raise DimensionError(
                f"isometry rows {d_out} != output dim {output.dim} * env dim "
                f"{environment.dim}")
        if validate:
            gram = isometry.conj().T @ isometry
            if np.abs(gram - np.eye(d_in)).max() > ISOMETRY_TOL:
                raise StateError("V^dagger V deviates from the identity: not an isometry")
        isometry.flags.writeable = False
        object.__setattr__(self, "isometry", isometry)
        object.__setattr__(self, "output", output)
        object.__setattr__(self, "environment", environment)

    def __setattr__(self, name, value):
        raise AttributeError("QuantumChannel is immutable")

    @property
    def d_in(self) -> int:
        return self.isometry.shape[1]

    @property
    def d_out(self) -> int:
        return self.output.dim

    @property
    def d_env(self) -> int:
        return self.environment.dim

    def apply_to_matrix(self, rho: np.ndarray) -> np.ndarray:
        """V rho V^dagger on a raw density matrix (output x environment)."""
        return self.isometry @ rho @ self.isometry.conj().T

    def output_state(self, rho: np.ndarray) -> np.ndarray:
        """N(rho): trace out the environment of the dilated output."""
        big = self.apply_to_matrix(rho).reshape(
            self.d_out, self.d_env, self.d_out, self.d_env)
        return np.einsum("aebe->ab", big)

    def complementary_state(self, rho: np.ndarray) -> np.ndarray:
        """N^c(rho): trace out the output of the dilated output."""
        big = self.apply_to_matrix(rho).reshape(
            self.d_out, self.d_env, self.d_out, self.d_env)
        return np.einsum("aeaf->ef", big)

    def to_dict(self) -> dict:
        flat = self.isometry.reshape(-1)
        interleaved = np.empty(2 * flat.size, dtype=float)
        interleaved[0::2] = flat.real
        interleaved[1::2] = flat.imag
        return {
            "dIn": self.d_in,
            "dOut": self.d_out,
            "dEnv": self.d_env,
            "outputName": self.output.name,
            "environmentName": self.environment.name,
            "data": interleaved.tolist(),
        }

    @staticmethod
    def from_dict(obj: dict) -> "QuantumChannel":
        d_in, d_b, d_e = int(obj["dIn"]), int(obj["dOut"]), int(obj["dEnv"])
        raw = np.asarray(obj["data"], dtype=float)
        flat = raw[0::2] + 1j * raw[1::2]
        iso = flat.reshape(d_b * d_e, d_in)
        return QuantumChannel(iso,
                              SystemLabel(obj.get("outputName", "B"), d_b),
                              SystemLabel(obj.get("environmentName", "E"), d_e))


def haar_isometry(d_in: int, d_b: int, d_e: int, seed,
                  out_name: str = "B", env_name: str = "E") -> QuantumChannel:
    """Haar-random channel isometry d_in -> d_b * d_e with a declared split."""
    d_out = d_b * d_e
    if d_out < d_in:
        raise DimensionError(
            f"haar_isometry needs d_b*d_e >= d_in, got {d_out} < {d_in}")
    iso = haar_isometry_matrix(d_in, d_out, seed)
    return QuantumChannel(iso, SystemLabel(out_name, d_b), SystemLabel(env_name, d_e),
                          validate=False)


def identity_channel(dim: int, out_name: str = "B", env_name: str = "E") -> QuantumChannel:
    """Noiseless channel: identity into B with a trivial environment."""
    return QuantumChannel(np.eye(dim, dtype=complex),
                          SystemLabel(out_name, dim), SystemLabel(env_name, 1),
                          validate=False)


def replacement_channel(d_in: int, omega: np.ndarray,
                        out_name: str = "B", env_name: str = "E") -> QuantumChannel:
    """Channel sending every input to the fixed output omega.

    Stinespring form: |a> -> |omega_purified>_{B,E1} |a>_{E2}, so the output
    marginal is omega for every input while the environment keeps a copy of
    the input (the complement is the identity composed with the purifier).
    """
    omega = np.asarray(omega, dtype=complex)
    if omega.ndim == 1:
        d_b = omega.shape[0]
        purif = omega.reshape(d_b, 1)
        d_e1 = 1
    else:
        d_b = omega.shape[0]
        w, v = np.linalg.eigh(omega)
        w = _clip_spectrum(w)
        purif = (v * np.sqrt(w))  # columns weighted; purification B x E1
        d_e1 = d_b
    iso = np.zeros((d_b, d_e1, d_in, d_in), dtype=complex)
    for a in range(d_in):
        iso[:, :, a, a] = purif
    iso = iso.reshape(d_b * d_e1 * d_in, d_in)
    return QuantumChannel(iso, SystemLabel(out_name, d_b),
                          SystemLabel(env_name, d_e1 * d_in))


def apply_channel(ch: QuantumChannel, state: MultipartiteState,
                  on: str) -> MultipartiteState:
    """Apply the channel's dilation to one factor; returns the full dilated state.

    The named factor is replaced, in place, by the channel's output and
    environment factors.  The environment stays in the state so the caller
    can inspect or trace it.
    """
    pos = state.position(on)
    if state.factors[pos].dim != ch.d_in:
        raise DimensionError(
            f"channel input dim {ch.d_in} != factor {on!r} dim {state.factors[pos].dim}")
    for nm in (ch.output.name, ch.environment.name):
        if nm in state.names and nm != on:
            raise LabelError(f"channel label {nm!r} collides with an existing factor")
    new_factors = (list(state.factors[:pos]) + [ch.output, ch.environment]
                   + list(state.factors[pos + 1:]))
    dims = state.dims
    pre = math.prod(dims[:pos]) if pos else 1
    post = math.prod(dims[pos + 1:]) if pos + 1 < len(dims) else 1
    if state.is_pure:
        psi = state.data.reshape(pre, ch.d_in, post)
        out = np.einsum("oc,pcq->poq", ch.isometry, psi)
        return MultipartiteState(new_factors, out.reshape(-1), validate=False)
    rho = state.data.reshape(pre, ch.d_in, post, pre, ch.d_in, post)
    out = np.einsum("oc,pcqrds,fd->poqrfs", ch.isometry, rho, ch.isometry.conj())
    side = pre * ch.d_out * ch.d_env * post
    return MultipartiteState(new_factors, out.reshape(side, side), validate=False)


def apply_isometry(state: MultipartiteState, mat: np.ndarray, on: str,
                   new_labels: Sequence[SystemLabel]) -> MultipartiteState:
    """Apply an isometry matrix to one factor, replacing it by new_labels."""
    mat = np.asarray(mat, dtype=complex)
    pos = state.position(on)
    d_in = state.factors[pos].dim
    if mat.shape[1] != d_in:
        raise DimensionError(f"operator columns {mat.shape[1]} != factor dim {d_in}")
    if math.prod(l.dim for l in new_labels) != mat.shape[0]:
        raise DimensionError("new label dims do not match operator rows")
    for l in new_labels:
        if l.name in state.names and l.name != on:
            raise LabelError(f"label {l.name!r} collides with an existing factor")
    dims = state.dims
    pre = math.prod(dims[:pos]) if pos else 1
    post = math.prod(dims[pos + 1:]) if pos + 1 < len(dims) else 1
    new_factors = list(state.factors[:pos]) + list(new_labels) + list(state.factors[pos + 1:])
    if state.is_pure:
        psi = state.data.reshape(pre, d_in, post)
        out = np.einsum("oc,pcq->poq", mat, psi)
        return MultipartiteState(new_factors, out.reshape(-1), validate=False)
    rho = state.data.reshape(pre, d_in, post, pre, d_in, post)
    out = np.einsum("oc,pcqrds,fd->poqrfs", mat, rho, mat.conj())
    side = pre * mat.shape[0] * post
    return MultipartiteState(new_factors, out.reshape(side, side), validate=False)


def apply_unitary(state: MultipartiteState, mat: np.ndarray, on: str) -> MultipartiteState:
    """Apply a square unitary to one factor in place."""
    pos = state.position(on)
    return apply_isometry(state, mat, on, [state.factors[pos]])


def project_factor(state: MultipartiteState, proj: np.ndarray, on: str):
    """Apply a projector to one factor of a pure state and renormalise.

    Returns (projected state, retained weight).  Weight zero raises.
    """
    if not state.is_pure:
        raise StateError("project_factor supports pure states only")
    pos = state.position(on)
    d = state.factors[pos].dim
    proj = np.asarray(proj, dtype=complex)
    if proj.shape != (d, d):
        raise DimensionError(f"projector shape {proj.shape} != ({d}, {d})")
    dims = state.dims
    pre = math.prod(dims[:pos]) if pos else 1
    post = math.prod(dims[pos + 1:]) if pos + 1 < len(dims) else 1
    psi = state.data.reshape(pre, d, post)
    out = np.einsum("oc,pcq->poq", proj, psi).reshape(-1)
    weight = float(np.linalg.norm(out) ** 2)
    if weight < 1e-300:
        raise StateError("projection annihilated the state")
    out = out / math.sqrt(weight)
    return MultipartiteState(state.factors, out, validate=False), weight


# ---------------------------------------------------------------------------
# distance measures
# ---------------------------------------------------------------------------

def _density_of(x) -> np.ndarray:
    if isinstance(x, MultipartiteState):
        return x.density()
    x = np.asarray(x, dtype=complex)
    if x.ndim == 1:
        return np.outer(x, x.conj())
    return x


def trace_distance(rho, sigma) -> float:
    """Unhalved trace norm ||rho - sigma||_1 (ranges over [0, 2] for states)."""
    a, b = _density_of(rho), _density_of(sigma)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    w = np.linalg.eigvalsh(a - b)
    return float(np.abs(w).sum())


def _vector_or_matrix(x):
    if isinstance(x, MultipartiteState):
        return np.asarray(x.data), x.is_pure
    arr = np.asarray(x, dtype=complex)
    return arr, arr.ndim == 1


def fidelity(rho, sigma) -> float:
    """Square-root fidelity F = ||sqrt(rho) sqrt(sigma)||_1 in [0, 1].

    For a pure input this reduces to sqrt(<psi|sigma|psi>).
    """
    va, pa = _vector_or_matrix(rho)
    vb, pb = _vector_or_matrix(sigma)
    if pa and pb:
        if va.shape != vb.shape:
            raise DimensionError(f"shape mismatch {va.shape} vs {vb.shape}")
        return float(min(1.0, abs(np.vdot(va, vb))))
    if pa or pb:
        vec = va if pa else vb
        mat = _density_of(sigma if pa else rho)
        if mat.shape[0] != vec.shape[0]:
            raise DimensionError(f"shape mismatch {mat.shape} vs {vec.shape}")
        val = float(np.real(np.vdot(vec, mat @ vec)))
        return math.sqrt(min(1.0, max(0.0, val)))
    a, b = _density_of(rho), _density_of(sigma)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    wa, ua = np.linalg.eigh(a)
    wa = _clip_spectrum(wa)
    sq = (ua * np.sqrt(wa)) @ ua.conj().T
    m = sq @ b @ sq
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    w = np.clip(w, 0.0, None)
    return float(min(1.0, np.sqrt(w).sum()))


def purity(rho) -> float:
    a = _density_of(rho)
    return float(np.real(np.trace(a @ a)))
