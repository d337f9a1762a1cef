"""House layout: rooms, their devices, adjacency and the room transition matrix."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

ROOMS = ("living_room", "bedroom", "kitchen", "bathroom", "outside")

# room -> (sensors, actuators), in the order that fixes the s_i / a_j columns
ROOM_DEVICES = {
    "living_room": (("presence", "temperature", "luminosity", "voice"),
                    ("air_conditioner", "lights", "sound_box")),
    "bedroom": (("presence", "temperature", "luminosity", "voice"),
                ("lights", "sound_box")),
    "kitchen": (("presence", "temperature", "luminosity", "smoke_detector"),
                ("lights", "coffee_machine", "anti_fire")),
    "bathroom": (("presence", "temperature", "luminosity", "shower_temperature"),
                 ("lights", "shower_control")),
    "outside": (("presence", "luminosity", "voice", "humidity"),
                ("lights", "sound_box", "plant_watering")),
}

SENSORS = tuple(f"{room}.{s}" for room in ROOMS for s in ROOM_DEVICES[room][0])
ACTUATORS = tuple(f"{room}.{a}" for room in ROOMS for a in ROOM_DEVICES[room][1])
N_SENSORS = len(SENSORS)
N_ACTUATORS = len(ACTUATORS)

SENSOR_INDEX = {name: i for i, name in enumerate(SENSORS)}
ACTUATOR_INDEX = {name: i for i, name in enumerate(ACTUATORS)}

# inclusive value ranges per sensor kind
SENSOR_RANGES = {
    "presence": (0, 1),
    "temperature": (20, 30),
    "luminosity": (0, 10),
    "voice": (0, 1),
    "smoke_detector": (0, 1),
    "shower_temperature": (20, 30),
    "humidity": (0, 10),
}

# outside-living_room, living_room-{kitchen, bathroom, bedroom}, kitchen-bathroom
DEFAULT_ADJACENCY = np.array([
    [0, 1, 1, 1, 1],
    [1, 0, 0, 0, 0],
    [1, 0, 0, 1, 0],
    [1, 0, 1, 0, 0],
    [1, 0, 0, 0, 0],
], dtype=np.int64)


def room_sensor_indices(room):
    return [SENSOR_INDEX[f"{room}.{s}"] for s in ROOM_DEVICES[room][0]]


def room_actuator_indices(room):
    return [ACTUATOR_INDEX[f"{room}.{a}"] for a in ROOM_DEVICES[room][1]]


def sensor_kind(index):
    return SENSORS[index].split(".", 1)[1]


def validate_adjacency(adjacency):
    a = np.asarray(adjacency)
    n = len(ROOMS)
    if a.shape != (n, n):
        raise ValueError(f"adjacency must be {n}x{n}, got {a.shape}")
    if not np.isin(a, (0, 1)).all():
        raise ValueError("adjacency must be binary")
    if not (a == a.T).all():
        raise ValueError("adjacency must be symmetric")
    if np.diag(a).any():
        raise ValueError("adjacency must have a zero diagonal")
    seen, frontier = {0}, [0]
    while frontier:
        i = frontier.pop()
        for j in np.flatnonzero(a[i]):
            if int(j) not in seen:
                seen.add(int(j))
                frontier.append(int(j))
    if len(seen) != n:
        raise ValueError("house graph is not connected")
    return a.astype(np.int64)


def build_transition_matrix(adjacency) -> np.ndarray:
    """Each neighbour of a room gets probability 1/degree."""
    a = np.asarray(adjacency, dtype=float)
    deg = a.sum(axis=1)
    if (deg == 0).any():
        isolated = [ROOMS[i] if i < len(ROOMS) else str(i) for i in np.flatnonzero(deg == 0)]
        raise ValueError(f"isolated room(s): {', '.join(isolated)}")
    return a / deg[:, None]


def load_adjacency(path) -> np.ndarray:
    """Read a 5x5 matrix from JSON (nested list) or whitespace-separated text."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = [[int(x) for x in line.split()] for line in text.splitlines() if line.strip()]
    return validate_adjacency(data)
