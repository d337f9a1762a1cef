"""Candidate codelets the evolution strategy can switch on or off."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..smarthome.house import ACTUATORS, N_ACTUATORS, N_SENSORS


@dataclass(frozen=True)
class PerceptualSpec:
    name: str
    mask: tuple


@dataclass(frozen=True)
class BehavioralSpec:
    name: str
    targets: tuple   # motor names


@dataclass(frozen=True)
class MotorSpec:
    name: str
    device: str


@dataclass(frozen=True)
class CodeletPool:
    perceptual: tuple
    behavioral: tuple
    motor: tuple
    n_sensors: int = N_SENSORS

    @property
    def genome_length(self):
        return len(self.perceptual) + len(self.behavioral)

    def motor_names(self):
        return [m.name for m in self.motor]

    def to_dict(self):
        return {
            "n_sensors": self.n_sensors,
            "perceptual": [{"name": p.name, "mask": list(p.mask)} for p in self.perceptual],
            "behavioral": [{"name": b.name, "targets": list(b.targets)} for b in self.behavioral],
            "motor": [{"name": m.name, "device": m.device} for m in self.motor],
        }


def motor_specs(devices=ACTUATORS):
    return tuple(MotorSpec(f"m{j:02d}", dev) for j, dev in enumerate(devices))


def build_pool(seed, S=N_SENSORS, P=15, B=N_ACTUATORS, assignment="identity") -> CodeletPool:
    """Random perceptual masks and a behavioural -> motor assignment.

    Mask sizes are uniform on [ceil(S/2), S]; members are drawn without
    replacement and kept in sensor order.
    """
    if P < 1 or B < 1:
        raise ValueError("pool sizes must be positive")
    rng = np.random.default_rng(seed)
    lo = math.ceil(S / 2)
    perceptual = []
    for i in range(P):
        size = int(rng.integers(lo, S + 1))
        members = sorted(int(x) for x in rng.choice(S, size=size, replace=False))
        perceptual.append(PerceptualSpec(f"p{i:02d}", tuple(members)))
    motors = motor_specs()
    names = [m.name for m in motors]
    if assignment == "identity":
        if B != len(motors):
            raise ValueError(f"identity assignment needs B == {len(motors)} behaviourals")
        targets = [(names[j],) for j in range(B)]
    elif assignment == "random":
        subsets = []
        for _ in range(B):
            k = int(rng.integers(1, len(names) + 1))
            subsets.append(set(int(x) for x in rng.choice(len(names), size=k, replace=False)))
        # every motor needs at least one feeder
        for j in range(len(names)):
            if not any(j in s for s in subsets):
                subsets[int(rng.integers(B))].add(j)
        targets = [tuple(names[j] for j in sorted(s)) for s in subsets]
    else:
        raise ValueError(f"unknown assignment {assignment!r}")
    behavioral = tuple(BehavioralSpec(f"b{j:02d}", t) for j, t in enumerate(targets))
    return CodeletPool(tuple(perceptual), behavioral, motors, S)
