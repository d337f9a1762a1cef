"""Network front-end of the simulated house.

Sensory codelets read devices, motor codelets set actuators and the trainer
injects whole sensor vectors. Every state change bumps ``sample_id``; it never
goes backwards, not even across ``reset``, so stamps stay unique for the life
of the server.
"""
from __future__ import annotations

import logging
import threading
import time

import numpy as np

from ..protocol import MessageServer, RemoteError
from .house import (ACTUATOR_INDEX, ACTUATORS, N_SENSORS, ROOMS, SENSOR_INDEX, SENSORS,
                    DEFAULT_ADJACENCY, build_transition_matrix)
from .sim import AgentPreferences, EnvState, initial_state, sample_preferences, step

log = logging.getLogger(__name__)

MAX_WAIT = 30.0


class EnvServer:
    def __init__(self, address="127.0.0.1:0", state: EnvState | None = None,
                 prefs: AgentPreferences | None = None, adjacency=None, seed=0,
                 update_scope="occupied", direction="lower"):
        self.state = state.copy() if state is not None else initial_state()
        self.prefs = prefs or sample_preferences(seed)
        self.T = build_transition_matrix(DEFAULT_ADJACENCY if adjacency is None else adjacency)
        self.rng = np.random.default_rng(seed)
        self.update_scope = update_scope
        self.direction = direction
        self._cond = threading.Condition()
        self._stopped = threading.Event()
        self.server = MessageServer(address, self.handle)

    @property
    def address(self):
        return self.server.address

    def start(self):
        self.server.start()
        log.info("environment listening on %s", self.address)
        return self

    def stop(self):
        if self._stopped.is_set():
            return
        self._stopped.set()
        self.server.shutdown()
        self.server.server_close()

    def wait_stopped(self, timeout=None):
        return self._stopped.wait(timeout)

    # -- state changes --------------------------------------------------------

    def _bump(self):
        self.state.sample_id += 1
        self._cond.notify_all()
        return self.state.sample_id

    def advance(self):
        """One random-walk step of the base agent."""
        with self._cond:
            sid = self.state.sample_id
            self.state = step(self.state, self.prefs, self.T, self.rng, self.update_scope,
                              self.direction)
            self.state.sample_id = sid
            return self._bump()

    def snapshot(self):
        with self._cond:
            return self.state.copy()

    # -- request handling -----------------------------------------------------

    def handle(self, msg):
        op = getattr(self, f"_op_{msg.op}", None)
        if op is None:
            raise RemoteError("unsupported", f"environment does not serve {msg.op!r}")
        return op(msg.target, msg.body or {})

    def _op_read_device(self, target, body):
        after = body.get("after_sample_id")
        deadline = time.monotonic() + min(float(body.get("timeout", 0.0)), MAX_WAIT)
        if target != "*" and target not in SENSOR_INDEX and target not in ACTUATOR_INDEX:
            raise RemoteError("not_found", f"no device {target!r}")
        with self._cond:
            while after is not None and self.state.sample_id <= int(after):
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                self._cond.wait(remaining)
            s = self.state
            if target == "*":
                return s.to_dict()
            if target in SENSOR_INDEX:
                value = s.sensors[SENSOR_INDEX[target]]
            else:
                value = s.actuators[ACTUATOR_INDEX[target]]
            return {"value": value, "sample_id": s.sample_id}

    def _op_set_device(self, target, body):
        if target in SENSOR_INDEX:
            raise RemoteError("bad_request", f"{target} is a sensor; only actuators can be set")
        if target not in ACTUATOR_INDEX:
            raise RemoteError("not_found", f"no device {target!r}")
        value = body.get("value")
        if value not in (0, 1) or isinstance(value, bool):
            raise RemoteError("bad_request", f"actuator value must be 0 or 1, got {value!r}")
        with self._cond:
            self.state.actuators[ACTUATOR_INDEX[target]] = value
            return {"value": value, "sample_id": self.state.sample_id}

    def _op_set_state(self, target, body):
        sensors = body.get("sensors")
        if not isinstance(sensors, list) or len(sensors) != N_SENSORS:
            n = len(sensors) if isinstance(sensors, list) else type(sensors).__name__
            raise RemoteError("shape_error", f"expected {N_SENSORS} sensor values, got {n}")
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in sensors):
            raise RemoteError("bad_request", "sensor values must be integers")
        with self._cond:
            self.state.sensors = list(sensors)
            occupied = [r for r, room in enumerate(ROOMS)
                        if sensors[SENSOR_INDEX[f"{room}.presence"]] == 1]
            if len(occupied) == 1:
                self.state.room = occupied[0]
            if "actuators" in body:
                acts = body["actuators"]
                if not isinstance(acts, list) or len(acts) != len(ACTUATORS):
                    raise RemoteError("shape_error", f"expected {len(ACTUATORS)} actuator values")
                self.state.actuators = list(acts)
            return {"sample_id": self._bump()}

    def _op_reset(self, target, body):
        with self._cond:
            sid = self.state.sample_id
            self.state = initial_state()
            self.state.sample_id = sid
            return {"sample_id": self._bump()}

    def _op_health(self, target, body):
        with self._cond:
            return {"role": "environment", "address": self.address,
                    "sample_id": self.state.sample_id, "room": ROOMS[self.state.room],
                    "n_sensors": len(SENSORS), "n_actuators": len(ACTUATORS)}

    def _op_shutdown(self, target, body):
        if not self._stopped.is_set():
            threading.Thread(target=self.stop, daemon=True).start()
        return {"stopping": True}


def serve(address="127.0.0.1:0", state=None, **kwargs) -> EnvServer:
    return EnvServer(address, state, **kwargs).start()
