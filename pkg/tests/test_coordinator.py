"""Registration state-machine tests: admission, rejection, invariants."""

import math

import numpy as np
import pytest

from nfsense.coordinator import Decision, Registration, Registry
from nfsense.geometry import Point2D, RadioConfig


def new_registry(beta=50.0, delta_r=0.15):
    return Registry(ap=Point2D(0.0, 0.0), cfg=RadioConfig(), beta=beta,
                    delta_r=delta_r)


def reg(user_id, x, y, motion="respiration", strategy="ul_csi"):
    return Registration(user_id=user_id, position=Point2D(x, y),
                        motion_type=motion, strategy=strategy)


FIG6_POSITIONS = [(1.41, 0.0), (0.0, 1.41), (-1.41, 0.0), (0.0, -1.41)]


class TestRegister:
    def test_first_user_admitted(self):
        registry = new_registry()
        decision = registry.register(reg("u0", 1.41, 0.0))
        assert decision.admitted
        assert decision.f_cut_hz == 1.0

    def test_f_cut_follows_motion_type(self):
        registry = new_registry()
        assert registry.register(reg("a", 1.41, 0.0, "gesture")).f_cut_hz == 20.0
        assert registry.register(reg("b", 0.0, 1.41, "activity")).f_cut_hz == 20.0

    def test_four_user_layout_all_admitted(self):
        registry = new_registry()
        for i, (x, y) in enumerate(FIG6_POSITIONS):
            decision = registry.register(reg(f"u{i}", x, y))
            assert decision.admitted, decision.reason
        assert len(registry.members) == 4
        assert registry.min_pairwise_vir() >= 50.0

    def test_candidate_too_close_rejected_with_pairwise_reason(self):
        registry = new_registry()
        assert registry.register(reg("u0", 1.41, 0.0)).admitted
        # 12 cm from the existing subject: inside its UE's near field
        decision = registry.register(reg("u1", 1.41 + 0.12, 0.0))
        assert not decision.admitted
        assert "pairwise VIR" in decision.reason
        assert len(registry.members) == 1

    def test_duplicate_id_rejected(self):
        registry = new_registry()
        registry.register(reg("u0", 1.41, 0.0))
        with pytest.raises(ValueError, match="duplicate"):
            registry.register(reg("u0", 0.0, 1.41))

    def test_capacity_reason_for_energetic_users(self):
        # The envelope bound is intensity-independent while pairwise VIR
        # scales with v^2, so fast movers keep pairwise ratios high and run
        # into the capacity guard instead.  One user at the outer boundary
        # pins the radius envelope where N_max is small.
        registry = Registry(ap=Point2D(0.0, 0.0), cfg=RadioConfig(), beta=50.0,
                            delta_r=0.1, intensities={"respiration": 10.0,
                                                      "gesture": 10.0,
                                                      "activity": 10.0})
        n_inner = 32
        for i in range(n_inner):
            ang = 2 * math.pi * i / n_inner
            d = registry.register(reg(f"u{i}", 2.0 * math.cos(ang), 2.0 * math.sin(ang)))
            assert d.admitted, d.reason
        decision = registry.register(reg("far", 3.73, 0.0))
        assert not decision.admitted
        assert "capacity" in decision.reason
        assert decision.min_vir >= registry.beta  # pairwise alone would admit


class TestDeregister:
    def test_round_trip(self):
        registry = new_registry()
        registry.register(reg("u0", 1.41, 0.0))
        registry.register(reg("u1", 0.0, 1.41))
        registry.deregister("u1")
        assert list(registry.members) == ["u0"]

    def test_unknown_id(self):
        with pytest.raises(KeyError):
            new_registry().deregister("ghost")

    def test_rejected_candidate_admitted_after_departure(self):
        registry = new_registry()
        registry.register(reg("a", 1.41, 0.0))
        registry.register(reg("b", 1.41 * math.cos(0.5), 1.41 * math.sin(0.5)))
        # near enough to b to violate VIR while b is present, far enough
        # from a to be feasible once b leaves
        ang = 0.30
        candidate = reg("c", 1.41 * math.cos(ang), 1.41 * math.sin(ang))
        assert not registry.register(candidate).admitted
        registry.deregister("b")
        assert registry.register(candidate).admitted


class TestInvariant:
    def test_random_sequences_preserve_pairwise_vir(self):
        rng = np.random.default_rng(12)
        registry = new_registry(beta=30.0)
        alive = []
        for step in range(60):
            if alive and rng.random() < 0.3:
                registry.deregister(alive.pop(rng.integers(len(alive))))
            else:
                r = rng.uniform(0.8, 3.0)
                ang = rng.uniform(0, 2 * math.pi)
                candidate = reg(f"s{step}", r * math.cos(ang), r * math.sin(ang))
                if registry.register(candidate).admitted:
                    alive.append(candidate.user_id)
            if len(registry.members) >= 2:
                assert registry.min_pairwise_vir() >= registry.beta

    def test_mutually_feasible_set_admits_in_any_order(self):
        for perm in ([0, 1, 2, 3], [3, 1, 0, 2], [2, 0, 3, 1]):
            registry = new_registry()
            for i in perm:
                x, y = FIG6_POSITIONS[i]
                assert registry.register(reg(f"u{i}", x, y)).admitted
            assert len(registry.members) == 4


class TestValidationAndDump:
    def test_registration_validation(self):
        with pytest.raises(ValueError):
            Registration(user_id="", position=Point2D(1, 0))
        with pytest.raises(ValueError):
            Registration(user_id="x", position=Point2D(1, 0), motion_type="dance")
        with pytest.raises(ValueError):
            Registration(user_id="x", position=Point2D(1, 0), strategy="carrier_pigeon")

    def test_dump_csv(self, tmp_path):
        registry = new_registry()
        registry.register(reg("u0", 1.41, 0.0, "gesture", "ul_bfi"))
        path = tmp_path / "registry.csv"
        registry.dump_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "user_id,x_m,y_m,motion_type,strategy,f_cut_hz"
        assert lines[1].startswith("u0,1.410000,0.000000,gesture,ul_bfi,20.0")
