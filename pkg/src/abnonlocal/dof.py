"""Degree-of-freedom bookkeeping for gauge, ghost and fermion fields.

No field dynamics here: only counts, the Faddeev-Popov determinant
classification and SU(N) structure constants computed from the generalized
Gell-Mann basis.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import InputError

GAUGE_FIELD_COMPONENTS = 4
DIRAC_COMPONENTS = 4


class GroupKind(str, enum.Enum):
    U1 = "U1"
    SUN = "SUN"


class FPKind(str, enum.Enum):
    FIELD_INDEPENDENT = "field-independent"
    FIELD_DEPENDENT = "field-dependent"


class Constraint(str, enum.Enum):
    GAUGE_FUNCTION = "gauge-function"
    LORENTZ_FIXING = "lorentz-fixing"


@dataclass(frozen=True)
class GaugeGroup:
    kind: GroupKind
    n: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", GroupKind(self.kind))
        if self.kind is GroupKind.SUN and self.n < 2:
            raise InputError("unsupported-N", f"SU(N) needs N >= 2, got {self.n}")
        if self.kind is GroupKind.U1:
            object.__setattr__(self, "n", 1)

    @classmethod
    def u1(cls) -> "GaugeGroup":
        return cls(GroupKind.U1)

    @classmethod
    def su(cls, n: int) -> "GaugeGroup":
        return cls(GroupKind.SUN, int(n))

    @classmethod
    def parse(cls, text: str) -> "GaugeGroup":
        """``u1``, ``su3``, ``SU(3)`` ..."""
        t = text.strip().lower().replace("(", "").replace(")", "")
        if t == "u1":
            return cls.u1()
        if t.startswith("su") and t[2:].isdigit():
            return cls.su(int(t[2:]))
        raise InputError("unknown-group", f"cannot parse gauge group {text!r}")

    @property
    def adjoint_dimension(self) -> int:
        return 1 if self.kind is GroupKind.U1 else self.n**2 - 1

    @property
    def label(self) -> str:
        return "U1" if self.kind is GroupKind.U1 else f"SU{self.n}"


@dataclass(frozen=True)
class Fermion:
    kind: str
    colors: int = 1

    def __post_init__(self):
        if self.kind not in ("electron", "quark"):
            raise InputError("unknown-fermion", f"fermion must be electron or quark, got {self.kind!r}")
        if self.colors < 1:
            raise InputError("bad-colors", f"colors must be >= 1, got {self.colors}")
        if self.kind == "electron" and self.colors != 1:
            raise InputError("bad-colors", "an electron carries no color")

    @classmethod
    def parse(cls, text: str) -> "Fermion":
        """``electron`` or ``quark:<colors>``."""
        kind, _, colors = text.strip().lower().partition(":")
        if kind == "quark":
            if not colors.isdigit():
                raise InputError("bad-colors", f"expected quark:<colors>, got {text!r}")
            return cls("quark", int(colors))
        return cls(kind)

    @property
    def dof(self) -> int:
        return DIRAC_COMPONENTS * self.colors


@dataclass(frozen=True)
class DofReport:
    group: str
    fermion: str
    gauge_field_raw: int
    after_gauge_transform: int
    after_gauge_fixing: int
    ghost_dof: int
    fermion_dof: int
    fp_determinant: str
    confinement_flag: bool
    # ghost rule 2 (N^2 - 1) is anchored only at U1 and SU3
    extrapolated: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def table(self) -> str:
        rows = [(k, str(v)) for k, v in asdict(self).items()]
        w = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(w)}  {v}" for k, v in rows)


def fp_determinant_kind(group: GaugeGroup) -> FPKind:
    """Abelian Jacobian is a field-independent operator; non-Abelian depends on A."""
    return FPKind.FIELD_INDEPENDENT if group.kind is GroupKind.U1 else FPKind.FIELD_DEPENDENT


def gauge_orbit_dof(constraints: Sequence[str | Constraint] = ()) -> int:
    parsed = [Constraint(c) for c in constraints]
    if len(set(parsed)) != len(parsed):
        raise InputError("duplicate-constraint", "each constraint may be applied once")
    return GAUGE_FIELD_COMPONENTS - len(parsed)


def dof_report(group: GaugeGroup, fermion: Fermion) -> DofReport:
    ghost = 2 * group.adjoint_dimension
    anchored = group.kind is GroupKind.U1 or group.n == 3
    return DofReport(
        group=group.label,
        fermion=fermion.kind if fermion.kind == "electron" else f"quark:{fermion.colors}",
        gauge_field_raw=gauge_orbit_dof([]),
        after_gauge_transform=gauge_orbit_dof([Constraint.GAUGE_FUNCTION]),
        after_gauge_fixing=gauge_orbit_dof([Constraint.GAUGE_FUNCTION, Constraint.LORENTZ_FIXING]),
        ghost_dof=ghost,
        fermion_dof=fermion.dof,
        fp_determinant=fp_determinant_kind(group).value,
        confinement_flag=fermion.dof < ghost,
        extrapolated=not anchored,
    )


# -- SU(N) algebra -----------------------------------------------------------


def gell_mann_generators(n: int) -> np.ndarray:
    """Hermitian traceless basis with Tr(l_a l_b) = 2 delta_ab, shape (n^2 - 1, n, n).

    Ordering: for k = 2..n, the symmetric then antisymmetric off-diagonal pair
    for each j < k, followed by the k-th diagonal generator.  For n = 3 this
    is the usual lambda_1 .. lambda_8.
    """
    gens = []
    for k in range(1, n):
        for j in range(k):
            s = np.zeros((n, n), complex)
            s[j, k] = s[k, j] = 1
            a = np.zeros((n, n), complex)
            a[j, k], a[k, j] = -1j, 1j
            gens += [s, a]
        d = np.zeros((n, n), complex)
        d[np.arange(k), np.arange(k)] = 1
        d[k, k] = -k
        gens.append(d * np.sqrt(2.0 / (k * (k + 1))))
    return np.array(gens)


@dataclass(frozen=True, eq=False)
class StructureConstants:
    f: np.ndarray
    group: GaugeGroup

    def antisymmetry_residual(self) -> float:
        f = self.f
        perms = [f + f.transpose(1, 0, 2), f + f.transpose(0, 2, 1), f + f.transpose(2, 1, 0)]
        return float(max(np.max(np.abs(p)) for p in perms))

    def jacobi_residual(self) -> float:
        f = self.f
        j = (np.einsum("abe,ecd->abcd", f, f) + np.einsum("bce,ead->abcd", f, f)
             + np.einsum("cae,ebd->abcd", f, f))
        return float(np.max(np.abs(j)))


def su_structure_constants(n: int) -> StructureConstants:
    """f_abc = Tr([l_a, l_b] l_c) / (4 i) for 2 <= n <= 4."""
    if not 2 <= n <= 4:
        raise InputError("unsupported-N", f"structure constants available for 2 <= N <= 4, got {n}")
    lam = gell_mann_generators(n)
    comm = np.einsum("aij,bjk->abik", lam, lam) - np.einsum("bij,ajk->abik", lam, lam)
    f = np.einsum("abij,cji->abc", comm, lam) / 4j
    return StructureConstants(np.real_if_close(f, tol=1000).real.copy(), GaugeGroup.su(n))


def u1_structure_constants() -> StructureConstants:
    return StructureConstants(np.zeros((1, 1, 1)), GaugeGroup.u1())


def structure_constants(group: GaugeGroup) -> StructureConstants:
    return u1_structure_constants() if group.kind is GroupKind.U1 else su_structure_constants(group.n)
