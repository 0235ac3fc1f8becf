"""Builtin tripartite test states over labels A, B, R."""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import StateError
from .hilbert import (MultipartiteState, SystemLabel, as_rng, rng_stream)


def _abr(dims):
    da, db, dr = dims
    return [SystemLabel("A", da), SystemLabel("B", db), SystemLabel("R", dr)]


def bell_ab() -> MultipartiteState:
    """Bell pair on AB, referee in |0>: nothing correlates with R."""
    vec = np.zeros(8, dtype=complex)
    # index = a*4 + b*2 + r
    vec[0b000] = 1 / math.sqrt(2)
    vec[0b110] = 1 / math.sqrt(2)
    return MultipartiteState(_abr((2, 2, 2)), vec)


def bell_ar() -> MultipartiteState:
    """Bell pair on AR, receiver starts empty: everything must be sent."""
    vec = np.zeros(8, dtype=complex)
    vec[0b000] = 1 / math.sqrt(2)  # a=0, b=0, r=0
    vec[0b101] = 1 / math.sqrt(2)  # a=1, b=0, r=1
    return MultipartiteState(_abr((2, 2, 2)), vec)


def ghz() -> MultipartiteState:
    """(|000> + |111>)/sqrt(2) over A, B, R."""
    vec = np.zeros(8, dtype=complex)
    vec[0b000] = 1 / math.sqrt(2)
    vec[0b111] = 1 / math.sqrt(2)
    return MultipartiteState(_abr((2, 2, 2)), vec)


def w_state() -> MultipartiteState:
    """(|001> + |010> + |100>)/sqrt(3) over A, B, R."""
    vec = np.zeros(8, dtype=complex)
    for idx in (0b001, 0b010, 0b100):
        vec[idx] = 1 / math.sqrt(3)
    return MultipartiteState(_abr((2, 2, 2)), vec)


def random_tripartite(dims=(2, 2, 2), seed=0) -> MultipartiteState:
    """Haar-random pure state over A, B, R with the given dims."""
    rng = as_rng(seed)
    total = int(np.prod(dims))
    vec = rng.standard_normal(total) + 1j * rng.standard_normal(total)
    vec = vec / np.linalg.norm(vec)
    return MultipartiteState(_abr(tuple(int(d) for d in dims)), vec)


BUILTIN_NAMES = ("bell-ab", "bell-ar", "ghz", "w")


def builtin_state(spec: str, seed=0) -> MultipartiteState:
    """Resolve a CLI state spec: builtin name, random:d,d,d[:seed], or file:path."""
    spec = spec.strip()
    if spec == "bell-ab":
        return bell_ab()
    if spec == "bell-ar":
        return bell_ar()
    if spec == "ghz":
        return ghz()
    if spec == "w":
        return w_state()
    if spec.startswith("random:"):
        body = spec[len("random:"):]
        parts = body.split(":")
        dims = tuple(int(x) for x in parts[0].split(","))
        if len(dims) != 3:
            raise StateError(f"random state spec needs three dims, got {dims}")
        sd = int(parts[1]) if len(parts) > 1 else seed
        return random_tripartite(dims, rng_stream(sd, 0))
    if spec.startswith("file:"):
        path = spec[len("file:"):]
        with open(path, "r", encoding="utf-8") as fh:
            return MultipartiteState.from_dict(json.load(fh))
    raise StateError(f"unknown state spec {spec!r}; builtins: {BUILTIN_NAMES}, "
                     "random:dA,dB,dR[:seed], file:path.json")


def ledger_suite(seed=11):
    """Canonical small-state suite used by the one-shot ledger checks."""
    return [
        ("bell-ab", bell_ab()),
        ("bell-ar", bell_ar()),
        ("ghz", ghz()),
        ("w", w_state()),
        ("random-222", random_tripartite((2, 2, 2), rng_stream(seed, 0))),
    ]
