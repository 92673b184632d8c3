import pytest

from twincar.clock import Scheduler, VirtualClock
from twincar.drivers import RegisterMap
from twincar.hal import GpioPinBank, I2cRegisterFile
from twincar.messaging.bus import BusRegistry
from twincar.simulator import VehicleGeometry


@pytest.fixture
def clock():
    return VirtualClock()


@pytest.fixture
def scheduler(clock):
    return Scheduler(clock)


@pytest.fixture
def registry():
    reg = BusRegistry()
    yield reg
    reg.close_all()


@pytest.fixture
def bus(registry, clock):
    return registry.create_bus("test", clock=clock)


@pytest.fixture
def regmap():
    return RegisterMap()


@pytest.fixture
def hal(clock, regmap):
    gpio = GpioPinBank(clock=clock, trace=True)
    i2c = I2cRegisterFile(clock=clock, trace=True, bounds=regmap.i2c_bounds())
    return gpio, i2c


@pytest.fixture
def geometry():
    return VehicleGeometry()
