"""Sparse per-gate error-generator models and the canonical parameter vector.

A model attaches to each gate (including the "prep" and "meas" pseudo-gates)
an ordered list of elementary generators: Hamiltonian (H, coherent) or Pauli
stochastic (S).  The rate of a generator in a layer is the sum of the rates
contributed by the layer's gates.  Parameters are ordered canonically: by
gate id (name, then targets), kind H before S, then label lexicographically
(I < X < Y < Z per qubit); this ordering defines the rate vector.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .circuits import Circuit, GateApp
from .errors import ModelError
from .gates import gate_arity, gate_names
from .paulis import PauliString

PSEUDO_GATES = ("prep", "meas")
SUPPORTED_KINDS = ("H", "S")
RESERVED_KINDS = ("C", "A")


class ElementaryGenerator(NamedTuple):
    kind: str  # "H" or "S"
    label: PauliString  # unsigned, non-identity

    def key(self):
        return (0 if self.kind == "H" else 1, self.label.sort_key())


@dataclass(frozen=True)
class GateErrorSpec:
    gate_id: str
    name: str  # gate name, or "prep"/"meas"
    targets: tuple[int, ...]
    generators: tuple[ElementaryGenerator, ...]

    def sort_key(self):
        return (self.name, self.targets)


def make_gate_id(name: str, targets: Sequence[int]) -> str:
    if name in PSEUDO_GATES:
        return name
    return ":".join([name] + [str(q) for q in targets])


def parse_gate_id(gate_id: str) -> tuple[str, tuple[int, ...]]:
    if gate_id in PSEUDO_GATES:
        return gate_id, ()
    parts = gate_id.split(":")
    return parts[0], tuple(int(p) for p in parts[1:])


@dataclass(frozen=True)
class ErrorModel:
    n: int
    specs: tuple[GateErrorSpec, ...]
    _index: dict = field(default=None, compare=False, repr=False)
    _by_id: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        rebuilt = []
        for spec in sorted(self.specs, key=GateErrorSpec.sort_key):
            seen = set()
            for gen in spec.generators:
                if gen.kind in RESERVED_KINDS:
                    raise ModelError(
                        f"unsupported generator kind {gen.kind!r} on {spec.gate_id}"
                    )
                if gen.kind not in SUPPORTED_KINDS:
                    raise ModelError(f"unknown generator kind {gen.kind!r}")
                if gen.label.n != self.n:
                    raise ModelError(
                        f"label size {gen.label.n} != model n {self.n} on {spec.gate_id}"
                    )
                if gen.label.is_identity:
                    raise ModelError(f"identity label on {spec.gate_id}")
                if gen.label.phase != 0:
                    raise ModelError(f"signed label on {spec.gate_id}")
                k = (gen.kind, gen.label.sort_key())
                if k in seen:
                    raise ModelError(
                        f"duplicate generator ({gen.kind}, {gen.label.to_label()}) "
                        f"on {spec.gate_id}"
                    )
                seen.add(k)
            rebuilt.append(
                GateErrorSpec(
                    spec.gate_id,
                    spec.name,
                    spec.targets,
                    tuple(sorted(spec.generators, key=ElementaryGenerator.key)),
                )
            )
        object.__setattr__(self, "specs", tuple(rebuilt))
        index: dict[tuple[str, str, str], int] = {}
        by_id: dict[str, GateErrorSpec] = {}
        for spec in self.specs:
            if spec.gate_id in by_id:
                raise ModelError(f"duplicate gate id {spec.gate_id!r}")
            by_id[spec.gate_id] = spec
            for gen in spec.generators:
                index[(spec.gate_id, gen.kind, gen.label.sort_key())] = len(index)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_by_id", by_id)

    @property
    def kappa(self) -> int:
        return len(self._index)

    @property
    def gate_ids(self) -> tuple[str, ...]:
        return tuple(s.gate_id for s in self.specs)

    def spec_for(self, gate_id: str) -> GateErrorSpec:
        try:
            return self._by_id[gate_id]
        except KeyError:
            raise ModelError(f"gate {gate_id!r} not in model") from None

    def has_gate(self, gate_id: str) -> bool:
        return gate_id in self._by_id

    def param_index(self, gate_id: str, kind: str, label: PauliString) -> int:
        try:
            return self._index[(gate_id, kind, label.sort_key())]
        except KeyError:
            raise ModelError(
                f"({gate_id}, {kind}, {label.to_label()}) is not a model parameter"
            ) from None

    def param_keys(self) -> list[tuple[str, str, PauliString]]:
        """Parameter keys (gate_id, kind, label) in canonical index order."""
        out = []
        for spec in self.specs:
            for gen in spec.generators:
                out.append((spec.gate_id, gen.kind, gen.label))
        return out

    def h_mask(self) -> np.ndarray:
        mask = np.zeros(self.kappa, dtype=bool)
        for i, (_, kind, _) in enumerate(self.param_keys()):
            mask[i] = kind == "H"
        return mask

    def s_mask(self) -> np.ndarray:
        return ~self.h_mask()

    def label_weights(self) -> np.ndarray:
        return np.array([label.weight for _, _, label in self.param_keys()])

    def fingerprint(self) -> str:
        cached = getattr(self, "_fp", None)
        if cached is None:
            blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
            cached = hashlib.sha256(blob.encode()).hexdigest()[:16]
            object.__setattr__(self, "_fp", cached)
        return cached

    def to_dict(self, rates: "RateVector | None" = None) -> dict:
        d = {
            "n": self.n,
            "gates": [
                {
                    "id": s.gate_id,
                    "targets": list(s.targets),
                    "ideal": s.name,
                    "errors": [
                        {"kind": g.kind, "pauli": g.label.to_label(with_sign=False)}
                        for g in s.generators
                    ],
                }
                for s in self.specs
            ],
        }
        if rates is not None:
            d["rates"] = [float(v) for v in rates.values]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> tuple["ErrorModel", "RateVector | None"]:
        n = int(d["n"])
        specs = []
        for g in d["gates"]:
            name = g.get("ideal") or parse_gate_id(g["id"])[0]
            targets = tuple(g.get("targets", parse_gate_id(g["id"])[1]))
            gens = tuple(
                ElementaryGenerator(e["kind"], PauliString.from_label(e["pauli"], n))
                for e in g["errors"]
            )
            specs.append(GateErrorSpec(g["id"], name, targets, gens))
        model = cls(n, tuple(specs))
        rates = None
        if "rates" in d and d["rates"] is not None:
            rates = RateVector(model, np.asarray(d["rates"], dtype=float))
        return model, rates

    def save(self, path, rates: "RateVector | None" = None) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(rates), f, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> tuple["ErrorModel", "RateVector | None"]:
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class RateVector:
    """Length-kappa rates aligned with the model's canonical parameter order."""

    model: ErrorModel
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.model.kappa,):
            raise ModelError(
                f"rate vector length {vals.shape} != kappa {self.model.kappa}"
            )
        smask = self.model.s_mask()
        if np.any(vals[smask] < 0):
            raise ModelError("stochastic rates must be non-negative (CPTP)")

    def scaled(self, c: float) -> "RateVector":
        return RateVector(self.model, self.values * c)

    def h_values(self) -> np.ndarray:
        return self.values[self.model.h_mask()]

    def s_values(self) -> np.ndarray:
        return self.values[self.model.s_mask()]


def layer_lindbladian(
    model: ErrorModel, rates: RateVector, layer: Sequence[GateApp]
) -> list[tuple[ElementaryGenerator, float]]:
    """Merged (generator, rate) list for one layer; rates add across gates."""
    if rates.model is not model and rates.model != model:
        raise ModelError("rates belong to a different model")
    merged: dict[tuple[str, str], tuple[ElementaryGenerator, float]] = {}
    for app in layer:
        gate_id = make_gate_id(app.gate, app.targets)
        if not model.has_gate(gate_id):
            raise ModelError(f"gate {gate_id!r} not in model")
        spec = model.spec_for(gate_id)
        for gen in spec.generators:
            idx = model.param_index(gate_id, gen.kind, gen.label)
            k = (gen.kind, gen.label.sort_key())
            if k in merged:
                prev, r = merged[k]
                merged[k] = (prev, r + float(rates.values[idx]))
            else:
                merged[k] = (gen, float(rates.values[idx]))
    return [merged[k] for k in sorted(merged, key=lambda t: (t[0] != "H", t[1]))]


@dataclass(frozen=True)
class ModelDiagnostics:
    kappa: int
    h_count: int
    s_count: int
    gate_count: int
    problems: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.problems


def validate_model(model: ErrorModel) -> ModelDiagnostics:
    """Report kappa and per-kind counts; structural violations raise at load."""
    keys = model.param_keys()
    h = sum(1 for _, kind, _ in keys if kind == "H")
    problems = []
    for spec in model.specs:
        if spec.name not in PSEUDO_GATES:
            if spec.name not in gate_names():
                problems.append(f"{spec.gate_id}: unknown ideal gate {spec.name!r}")
            elif gate_arity(spec.name) != len(spec.targets):
                problems.append(f"{spec.gate_id}: wrong target count")
    return ModelDiagnostics(
        kappa=model.kappa,
        h_count=h,
        s_count=model.kappa - h,
        gate_count=len(model.specs),
        problems=tuple(problems),
    )


def validate_model_dict(d: dict) -> list[str]:
    """Itemized structural problems of a raw model file, without raising."""
    problems = []
    try:
        n = int(d["n"])
    except Exception:
        return ["missing or invalid qubit count 'n'"]
    for g in d.get("gates", []):
        gid = g.get("id", "<missing id>")
        seen = set()
        for e in g.get("errors", []):
            kind = e.get("kind")
            if kind in RESERVED_KINDS:
                problems.append(f"{gid}: unsupported generator kind {kind!r}")
                continue
            if kind not in SUPPORTED_KINDS:
                problems.append(f"{gid}: unknown generator kind {kind!r}")
                continue
            try:
                p = PauliString.from_label(e.get("pauli", ""), n)
            except Exception as exc:
                problems.append(f"{gid}: bad pauli {e.get('pauli')!r} ({exc})")
                continue
            if p.is_identity:
                problems.append(f"{gid}: identity label")
            key = (kind, e["pauli"])
            if key in seen:
                problems.append(f"{gid}: duplicate generator {key}")
            seen.add(key)
    return problems


def ring_edges(n: int) -> list[tuple[int, int]]:
    if n < 2:
        return []
    if n == 2:
        return [(0, 1)]
    return [(q, (q + 1) % n) for q in range(n)]


def _z_label(n: int, qubits: Iterable[int]) -> PauliString:
    z = 0
    for q in qubits:
        z |= 1 << q
    return PauliString(n, 0, z, 0)


def _axis_label(n: int, axis: str, q: int) -> PauliString:
    x = 1 << q if axis in ("X", "Y") else 0
    z = 1 << q if axis in ("Y", "Z") else 0
    return PauliString(n, x, z, 0)


def build_paper_model(
    n: int,
    connectivity: Sequence[tuple[int, int]] | None = None,
    seed: int = 0,
    scale_c: float = 1.0,
    h_interval: tuple[float, float] = (-1e-2, 1e-2),
    s_interval: tuple[float, float] = (0.0, 1e-3),
) -> tuple[ErrorModel, RateVector]:
    """The standard crosstalk model: {X90,Y90,Z90} per qubit + CZ per edge.

    Per single-qubit gate about axis A on q: H_A and S_A on the target plus a
    coherent Z spillover H_Z on every other qubit.  Per CZ(a,b): H and S for
    each of Z_a, Z_b, Z_a Z_b (the gate's commutant), H_Z spillover on every
    spectator, and residual coherent ZZ couplings H_{Z_a Z_s}, H_{Z_b Z_s}
    between each target and every other qubit.  SPAM: S_X on every qubit for
    the prep and meas pseudo-gates.  Rates are drawn uniformly from
    `h_interval` / `s_interval` and multiplied by `scale_c`.
    """
    if scale_c < 1.0:
        raise ModelError(f"scale factor c must be >= 1, got {scale_c}")
    if connectivity is None:
        connectivity = ring_edges(n)
    edges = [tuple(sorted(e)) for e in connectivity]
    if len(set(edges)) != len(edges):
        raise ModelError("duplicate edges in connectivity")
    for a, b in edges:
        if not (0 <= a < n and 0 <= b < n) or a == b:
            raise ModelError(f"invalid edge ({a}, {b})")

    specs = []
    for axis, gname in (("X", "X90"), ("Y", "Y90"), ("Z", "Z90")):
        for q in range(n):
            gens = [
                ElementaryGenerator("H", _axis_label(n, axis, q)),
                ElementaryGenerator("S", _axis_label(n, axis, q)),
            ]
            for r in range(n):
                if r != q:
                    gens.append(ElementaryGenerator("H", _z_label(n, [r])))
            specs.append(
                GateErrorSpec(make_gate_id(gname, (q,)), gname, (q,), tuple(gens))
            )
    for a, b in edges:
        gens = []
        for target in ([a], [b], [a, b]):
            lbl = _z_label(n, target)
            gens.append(ElementaryGenerator("H", lbl))
            gens.append(ElementaryGenerator("S", lbl))
        for s in range(n):
            if s not in (a, b):
                gens.append(ElementaryGenerator("H", _z_label(n, [s])))
        for t in (a, b):
            for s in range(n):
                if s not in (a, b):
                    gens.append(ElementaryGenerator("H", _z_label(n, [t, s])))
        specs.append(
            GateErrorSpec(make_gate_id("CZ", (a, b)), "CZ", (a, b), tuple(gens))
        )
    for pseudo in PSEUDO_GATES:
        gens = tuple(
            ElementaryGenerator("S", PauliString(n, 1 << q, 0, 0)) for q in range(n)
        )
        specs.append(GateErrorSpec(pseudo, pseudo, (), gens))

    model = ErrorModel(n, tuple(specs))
    rng = np.random.default_rng(seed)
    vals = np.empty(model.kappa)
    for i, (_, kind, _) in enumerate(model.param_keys()):
        lo, hi = h_interval if kind == "H" else s_interval
        vals[i] = rng.uniform(lo, hi)
    return model, RateVector(model, vals * scale_c)


def build_random_model(
    n: int,
    kappa: int,
    kind_class: str,
    seed: int = 0,
    include_spam: bool = False,
    gate_set: Sequence[str] | None = None,
    connectivity: Sequence[tuple[int, int]] | None = None,
    h_interval: tuple[float, float] = (-1e-2, 1e-2),
    s_interval: tuple[float, float] = (0.0, 1e-3),
) -> tuple[ErrorModel, RateVector]:
    """Model with `kappa` uniformly random generators of the given class.

    kind_class is "H", "S" or "HS".  Each generator's label is uniform over
    all non-identity n-qubit Paulis and is attached to a uniformly random
    gate of the standard gate set (single-qubit rotations plus CZ per edge).
    include_spam adds S_X per qubit on prep/meas (extra parameters).
    """
    if kind_class not in ("H", "S", "HS"):
        raise ModelError(f"bad kind_class {kind_class!r}")
    rng = np.random.default_rng(seed)
    if connectivity is None:
        connectivity = ring_edges(n)
    gate_ids = []
    if gate_set is None:
        gate_set = ("X90", "Y90", "Z90", "CZ")
    for gname in gate_set:
        if gname == "CZ":
            gate_ids += [make_gate_id("CZ", tuple(sorted(e))) for e in connectivity]
        else:
            gate_ids += [make_gate_id(gname, (q,)) for q in range(n)]

    chosen: set[tuple[str, str, str]] = set()
    per_gate: dict[str, list[ElementaryGenerator]] = {gid: [] for gid in gate_ids}
    guard = 0
    while len(chosen) < kappa:
        guard += 1
        if guard > 1000 * kappa:
            raise ModelError("cannot draw enough distinct generators")
        gid = gate_ids[rng.integers(len(gate_ids))]
        kind = kind_class if kind_class != "HS" else ("H", "S")[rng.integers(2)]
        idx = int(rng.integers(1, 4**n))  # skip identity
        label = PauliString(n, idx >> n, idx & ((1 << n) - 1), 0)
        key = (gid, kind, label.sort_key())
        if key in chosen:
            continue
        chosen.add(key)
        per_gate[gid].append(ElementaryGenerator(kind, label))

    specs = []
    for gid in gate_ids:
        name, targets = parse_gate_id(gid)
        specs.append(GateErrorSpec(gid, name, targets, tuple(per_gate[gid])))
    if include_spam:
        for pseudo in PSEUDO_GATES:
            gens = tuple(
                ElementaryGenerator("S", PauliString(n, 1 << q, 0, 0))
                for q in range(n)
            )
            specs.append(GateErrorSpec(pseudo, pseudo, (), gens))
    model = ErrorModel(n, tuple(specs))
    vals = np.empty(model.kappa)
    for i, (_, kind, _) in enumerate(model.param_keys()):
        lo, hi = h_interval if kind == "H" else s_interval
        vals[i] = rng.uniform(lo, hi)
    return model, RateVector(model, vals)
