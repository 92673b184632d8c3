"""Virtual hardware layer: GPIO pin bank and I2C register file.

Drivers write here exactly as they would against the real chip; emulators
read the same cells from the other side. Cell access is atomic and
last-writer-wins; optional write tracing feeds the twin-mirroring assertions
and can be dumped into the standard trace-file format.
"""

import threading
from dataclasses import dataclass
from typing import Mapping

from .errors import HalError
from .messaging.trace import TraceEntry, TraceLog
from .protocol import HAL_WRITE_SCHEMA, HAL_WRITE_TOPIC

GPIO_PIN_COUNT = 28  # pins 0..27
I2C_WORD_MAX = 0xFFFF
PWM_DUTY_MAX = 4095  # 12-bit duty registers


@dataclass(frozen=True)
class HalWrite:
    timestamp_ns: int
    kind: int  # 0=gpio, 1=i2c
    chip: int
    register: int
    value: int


class _Traced:
    def __init__(self, clock=None, trace: bool = False) -> None:
        self._clock = clock
        self._lock = threading.Lock()
        self.trace_enabled = trace
        self.trace: list[HalWrite] = []

    def _now(self) -> int:
        return self._clock.now_ns if self._clock is not None else 0

    def _record(self, kind: int, chip: int, register: int, value: int) -> None:
        if self.trace_enabled:
            self.trace.append(HalWrite(self._now(), kind, chip, register, value))

    @property
    def write_count(self) -> int:
        return len(self.trace)


class GpioPinBank(_Traced):
    """Pin levels 0/1, initially 0; reads return the last written level."""

    def __init__(self, clock=None, trace: bool = False) -> None:
        super().__init__(clock, trace)
        self._pins: dict[int, int] = {}

    def _check_pin(self, pin: int) -> None:
        if not isinstance(pin, int) or not 0 <= pin < GPIO_PIN_COUNT:
            raise HalError(f"GPIO pin {pin} outside 0..{GPIO_PIN_COUNT - 1}")

    def write(self, pin: int, level: int) -> None:
        self._check_pin(pin)
        if level not in (0, 1):
            raise HalError(f"GPIO level must be 0 or 1, got {level}")
        with self._lock:
            self._pins[pin] = level
            self._record(0, 0, pin, level)

    def read(self, pin: int) -> int:
        self._check_pin(pin)
        with self._lock:
            return self._pins.get(pin, 0)

    def snapshot(self) -> dict[int, int]:
        with self._lock:
            return dict(self._pins)


class I2cRegisterFile(_Traced):
    """(chip, register) -> u16 word map with optional per-register bounds.

    Bounds catch driver bugs at the write site: a 12-bit duty register
    rejects words above 4095, the servo register rejects pulses outside its
    mechanical range.
    """

    def __init__(
        self,
        clock=None,
        trace: bool = False,
        bounds: Mapping[tuple[int, int], tuple[int, int]] | None = None,
    ) -> None:
        super().__init__(clock, trace)
        self._registers: dict[tuple[int, int], int] = {}
        self._bounds = dict(bounds or {})

    @staticmethod
    def _check_address(chip: int, register: int) -> None:
        if not isinstance(chip, int) or not 0 <= chip <= 0x7F:
            raise HalError(f"I2C chip address {chip} outside 7-bit range")
        if not isinstance(register, int) or not 0 <= register <= 0xFF:
            raise HalError(f"I2C register {register} outside u8 range")

    def write_word(self, chip: int, register: int, word: int) -> None:
        self._check_address(chip, register)
        if not isinstance(word, int) or not 0 <= word <= I2C_WORD_MAX:
            raise HalError(f"I2C word {word} outside u16 range")
        lo, hi = self._bounds.get((chip, register), (0, I2C_WORD_MAX))
        if not lo <= word <= hi:
            raise HalError(
                f"word {word} outside [{lo}, {hi}] for register 0x{register:02x} on chip 0x{chip:02x}"
            )
        with self._lock:
            self._registers[(chip, register)] = word
            self._record(1, chip, register, word)

    def read_word(self, chip: int, register: int) -> int:
        self._check_address(chip, register)
        with self._lock:
            return self._registers.get((chip, register), 0)

    def snapshot(self) -> dict[tuple[int, int], int]:
        with self._lock:
            return dict(self._registers)


def diff_snapshots(a: Mapping, b: Mapping) -> list[tuple[object, int, int]]:
    """Cells whose value differs between two snapshots (absent cells read 0)."""
    changed = []
    for key in sorted(set(a) | set(b), key=repr):
        va, vb = a.get(key, 0), b.get(key, 0)
        if va != vb:
            changed.append((key, va, vb))
    return changed


def hal_trace_log(
    gpio: GpioPinBank | None = None,
    i2c: I2cRegisterFile | None = None,
    metadata: dict | None = None,
) -> TraceLog:
    """Merge GPIO and I2C write traces into a trace log (schema id 15)."""
    writes: list[HalWrite] = []
    if gpio is not None:
        writes.extend(gpio.trace)
    if i2c is not None:
        writes.extend(i2c.trace)
    writes.sort(key=lambda w: w.timestamp_ns)
    entries = [
        TraceEntry(
            topic_name=HAL_WRITE_TOPIC,
            schema_id=HAL_WRITE_SCHEMA.id,
            schema_version=HAL_WRITE_SCHEMA.version,
            timestamp_ns=w.timestamp_ns,
            payload=HAL_WRITE_SCHEMA.encode(
                {
                    "kind": w.kind,
                    "chip": w.chip,
                    "register": w.register,
                    "value": w.value,
                    "timestamp_ns": w.timestamp_ns,
                }
            ),
        )
        for w in writes
    ]
    return TraceLog(metadata=dict(metadata or {}), entries=entries)
