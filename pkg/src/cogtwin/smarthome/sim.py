"""Base-agent preferences, the device rule table and the random-walk generator."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .house import (ACTUATORS, DEFAULT_ADJACENCY, N_ACTUATORS, N_SENSORS, ROOM_DEVICES, ROOMS,
                    SENSOR_INDEX, SENSORS, build_transition_matrix, room_actuator_indices,
                    room_sensor_indices, sensor_kind)

SMOKE_PROB = 0.001
UPDATE_SCOPES = ("occupied", "all")
COMFORT_DIRECTIONS = ("lower", "higher")


@dataclass(frozen=True)
class AgentPreferences:
    thermal_comfort: int
    light_comfort: float
    voice_prob: float
    coffee_prob: float
    plant_water_th: int

    def __post_init__(self):
        checks = [
            (20 <= self.thermal_comfort <= 30, "thermal_comfort"),
            (0.4 <= self.light_comfort <= 1.0, "light_comfort"),
            (0.0 <= self.voice_prob <= 1.0, "voice_prob"),
            (0.0 <= self.coffee_prob <= 1.0, "coffee_prob"),
            (40 <= self.plant_water_th <= 100, "plant_water_th"),
        ]
        for ok, name in checks:
            if not ok:
                raise ValueError(f"{name} out of range: {getattr(self, name)}")


def sample_preferences(seed) -> AgentPreferences:
    rng = np.random.default_rng(seed)
    return AgentPreferences(
        thermal_comfort=int(rng.integers(20, 31)),
        light_comfort=float(rng.uniform(0.4, 1.0)),
        voice_prob=float(rng.uniform(0.0, 1.0)),
        coffee_prob=float(rng.uniform(0.0, 1.0)),
        plant_water_th=int(rng.integers(40, 101)),
    )


@dataclass
class EnvState:
    room: int = 0
    sensors: list = field(default_factory=lambda: [0] * N_SENSORS)
    actuators: list = field(default_factory=lambda: [0] * N_ACTUATORS)
    sample_id: int = 0

    def copy(self):
        return EnvState(self.room, list(self.sensors), list(self.actuators), self.sample_id)

    def to_dict(self):
        return {"room": ROOMS[self.room], "sensors": list(self.sensors),
                "actuators": list(self.actuators), "sample_id": self.sample_id}


def initial_state() -> EnvState:
    """All devices off, agent in the living room."""
    return EnvState(room=ROOMS.index("living_room"))


def draw_sensor(kind, prefs: AgentPreferences, rng) -> int:
    if kind in ("temperature", "shower_temperature"):
        return int(rng.integers(20, 31))
    if kind in ("luminosity", "humidity"):
        return int(rng.integers(0, 11))
    if kind == "voice":
        return int(rng.random() < prefs.voice_prob)
    if kind == "smoke_detector":
        return int(rng.random() < SMOKE_PROB)
    raise ValueError(f"no draw rule for sensor {kind!r}")


def actuator_rule(kind, readings, prefs: AgentPreferences, coffee_draw=0.0,
                  direction="lower") -> int:
    """Desired actuator state given the readings of its own room.

    Luminosity (0..10) is compared as a fraction of 10 against light_comfort;
    humidity (0..10) is compared times 10 against plant_water_th.
    """
    if kind == "air_conditioner":
        t = readings["temperature"]
        return int(t < prefs.thermal_comfort if direction == "lower" else t > prefs.thermal_comfort)
    if kind == "shower_control":
        t = readings["shower_temperature"]
        return int(t < prefs.thermal_comfort if direction == "lower" else t > prefs.thermal_comfort)
    if kind == "lights":
        return int(readings["luminosity"] / 10 < prefs.light_comfort)
    if kind == "sound_box":
        return int(readings["voice"] == 1)
    if kind == "coffee_machine":
        return int(coffee_draw < prefs.coffee_prob)
    if kind == "anti_fire":
        return int(readings["smoke_detector"] == 1)
    if kind == "plant_watering":
        return int(readings["humidity"] * 10 < prefs.plant_water_th)
    raise ValueError(f"no rule for actuator {kind!r}")


def update_room(state: EnvState, room: int, prefs, rng, direction="lower"):
    """Resample one room's sensors and recompute its actuators in place."""
    name = ROOMS[room]
    readings = {}
    for idx in room_sensor_indices(name):
        kind = sensor_kind(idx)
        if kind != "presence":
            state.sensors[idx] = draw_sensor(kind, prefs, rng)
        readings[kind] = state.sensors[idx]
    for idx, kind in zip(room_actuator_indices(name), ROOM_DEVICES[name][1]):
        # coffee is the only stochastic actuator; draw only when needed so the
        # stream of random numbers stays the same for every other device
        draw = float(rng.random()) if kind == "coffee_machine" else 0.0
        state.actuators[idx] = actuator_rule(kind, readings, prefs, draw, direction)


def set_presence(state: EnvState):
    for r, room in enumerate(ROOMS):
        state.sensors[SENSOR_INDEX[f"{room}.presence"]] = int(r == state.room)


def step(state: EnvState, prefs: AgentPreferences, T, rng, update_scope="occupied",
         direction="lower") -> EnvState:
    """Move the agent one room and let the visited room's devices react."""
    if update_scope not in UPDATE_SCOPES:
        raise ValueError(f"update_scope must be one of {UPDATE_SCOPES}")
    if direction not in COMFORT_DIRECTIONS:
        raise ValueError(f"direction must be one of {COMFORT_DIRECTIONS}")
    new = state.copy()
    new.room = int(rng.choice(len(ROOMS), p=T[state.room]))
    set_presence(new)
    rooms = [new.room] if update_scope == "occupied" else range(len(ROOMS))
    for r in rooms:
        update_room(new, r, prefs, rng, direction)
    new.sample_id = state.sample_id + 1
    return new


@dataclass
class Dataset:
    sensors: list           # n x 20
    actuators: list         # n x 13
    rooms: list
    sample_ids: list
    train_idx: list
    test_idx: list

    def __len__(self):
        return len(self.sensors)

    @property
    def train_sensors(self):
        return [self.sensors[i] for i in self.train_idx]

    @property
    def train_actuators(self):
        return [self.actuators[i] for i in self.train_idx]

    @property
    def test_sensors(self):
        return [self.sensors[i] for i in self.test_idx]

    @property
    def test_actuators(self):
        return [self.actuators[i] for i in self.test_idx]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "room"] + [f"s_{i}" for i in range(N_SENSORS)]
                       + [f"a_{j}" for j in range(N_ACTUATORS)])
            for sid, room, s, a in zip(self.sample_ids, self.rooms, self.sensors, self.actuators):
                w.writerow([sid, ROOMS[room]] + list(s) + list(a))


def generate_dataset(n=400, prefs=None, T=None, seed=0, n_test=20, update_scope="occupied",
                     direction="lower") -> Dataset:
    """Random walk of ``n`` steps from :func:`initial_state`; last ``n_test`` steps are the test set."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if prefs is None:
        prefs = sample_preferences(seed)
    if T is None:
        T = build_transition_matrix(DEFAULT_ADJACENCY)
    rng = np.random.default_rng(seed)
    state = initial_state()
    sensors, actuators, rooms, ids = [], [], [], []
    for _ in range(n):
        state = step(state, prefs, T, rng, update_scope, direction)
        sensors.append(list(state.sensors))
        actuators.append(list(state.actuators))
        rooms.append(state.room)
        ids.append(state.sample_id)
    n_test = max(0, min(n_test, n - 1))
    split = n - n_test
    return Dataset(sensors, actuators, rooms, ids, list(range(split)), list(range(split, n)))


__all__ = ["AgentPreferences", "Dataset", "EnvState", "SENSORS", "ACTUATORS", "actuator_rule",
           "generate_dataset", "initial_state", "sample_preferences", "step"]
