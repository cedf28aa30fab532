"""User-registration state machine.

Admission enforces the near-field separation guarantees: a candidate joins
only if every admitted user (candidate included) keeps a variation-to-
interference ratio of at least beta at its own UE, and the resulting count
stays within the exact capacity bound for the occupied radius.  The chosen
low-pass cut-off is recorded per user from its declared motion type.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from .capacity import CapacityQuery, n_max_exact
from .geometry import Mover, Point2D, RadioConfig, vir
from .traffic import KINDS

MOTION_TYPES = ("respiration", "gesture", "activity")

# Low-pass cut-off per declared motion type (Hz).
F_CUT_BY_MOTION = {"respiration": 1.0, "gesture": 20.0, "activity": 20.0}

# Motion intensity (m/s) assumed per type when computing VIRs; the default
# normalized table treats every user alike.
DEFAULT_INTENSITIES = {"respiration": 1.0, "gesture": 1.0, "activity": 1.0}


@dataclass(frozen=True)
class Registration:
    user_id: str
    position: Point2D
    motion_type: str = "respiration"
    strategy: str = "ul_csi"

    def __post_init__(self) -> None:
        if not self.user_id:
            raise ValueError("user_id must be non-empty")
        if self.motion_type not in MOTION_TYPES:
            raise ValueError(f"motion_type must be one of {MOTION_TYPES}, got {self.motion_type!r}")
        if self.strategy not in KINDS:
            raise ValueError(f"strategy must be one of {KINDS}, got {self.strategy!r}")


@dataclass(frozen=True)
class Decision:
    admitted: bool
    reason: str = ""
    f_cut_hz: float = 0.0
    min_vir: float = math.inf


@dataclass
class Registry:
    """Admitted users plus the geometry/threshold they were admitted under."""

    ap: Point2D
    cfg: RadioConfig
    beta: float
    delta_r: float = 0.1
    intensities: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_INTENSITIES))
    members: dict[str, Registration] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (self.beta > 0):
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not (self.delta_r > 0):
            raise ValueError(f"delta_r must be > 0, got {self.delta_r}")

    def _ue_of(self, position: Point2D) -> Point2D:
        """UE placed delta_r past the subject on the ray from the AP."""
        d = self.ap.distance(position)
        ux = (position.x - self.ap.x) / d
        uy = (position.y - self.ap.y) / d
        return Point2D(position.x + self.delta_r * ux, position.y + self.delta_r * uy)

    def _mover_of(self, reg: Registration) -> Mover:
        return Mover(reg.position, self.intensities.get(reg.motion_type, 1.0))

    def _vir_of(self, reg: Registration, others: list[Registration]) -> float:
        return vir(self.cfg, self.ap, self._ue_of(reg.position), self._mover_of(reg),
                   [self._mover_of(o) for o in others])

    def pairwise_feasible(self, candidate: Registration) -> tuple[bool, float, str]:
        """Check every member's VIR (and the candidate's) with the candidate added."""
        population = list(self.members.values()) + [candidate]
        worst = math.inf
        for reg in population:
            others = [o for o in population if o.user_id != reg.user_id]
            ratio = self._vir_of(reg, others)
            worst = min(worst, ratio)
            if ratio < self.beta:
                return False, worst, (
                    f"pairwise VIR: user {reg.user_id!r} would see VIR "
                    f"{ratio:.3g} < beta {self.beta:.3g}")
        return True, worst, ""

    def capacity_limit(self, candidate: Registration) -> int:
        """Exact radial-layout bound at the farthest occupied radius."""
        radius = max(self.ap.distance(reg.position)
                     for reg in list(self.members.values()) + [candidate])
        if radius <= self.delta_r:
            return 0
        q = CapacityQuery(r=radius, delta_r=self.delta_r, beta=self.beta, cfg=self.cfg)
        return n_max_exact(q)

    def register(self, reg: Registration) -> Decision:
        """Admit or reject a candidate; the registry mutates only on admission."""
        if reg.user_id in self.members:
            raise ValueError(f"duplicate user_id {reg.user_id!r}")
        d = self.ap.distance(reg.position)
        if d <= 0:
            raise ValueError("candidate position coincides with the AP")
        ok, worst, why = self.pairwise_feasible(reg)
        if not ok:
            return Decision(admitted=False, reason=why, min_vir=worst)
        limit = self.capacity_limit(reg)
        count_after = len(self.members) + 1
        # The radial-layout bound only constrains populations of >= 3.
        if count_after >= 3 and count_after > limit:
            return Decision(admitted=False, min_vir=worst,
                            reason=f"capacity: {count_after} users exceed N_max={limit} "
                                   f"at radius {d:.3g} m")
        self.members[reg.user_id] = reg
        return Decision(admitted=True, f_cut_hz=F_CUT_BY_MOTION[reg.motion_type],
                        min_vir=worst)

    def deregister(self, user_id: str) -> None:
        if user_id not in self.members:
            raise KeyError(f"unknown user_id {user_id!r}")
        del self.members[user_id]

    def min_pairwise_vir(self) -> float:
        """Worst VIR over admitted members (inf when fewer than one member)."""
        worst = math.inf
        population = list(self.members.values())
        for reg in population:
            others = [o for o in population if o.user_id != reg.user_id]
            worst = min(worst, self._vir_of(reg, others))
        return worst

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user_id", "x_m", "y_m", "motion_type", "strategy", "f_cut_hz"])
            for reg in self.members.values():
                writer.writerow([reg.user_id, f"{reg.position.x:.6f}", f"{reg.position.y:.6f}",
                                 reg.motion_type, reg.strategy,
                                 f"{F_CUT_BY_MOTION[reg.motion_type]:.1f}"])
