"""Edge-cloud energy accounting on the hourly time scale.

Server power is a base draw plus active VNFs, weighted by per-CPE load
ratios.  Each hour the grid-tie device runs in exactly one of two modes:
pass-through (solar + grid, optionally charging storage) or discharge
(storage alone serves the site).  Surplus solar that cannot be stored is
sold at the next time scale; the hourly cost is purchases minus sales.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class InfeasibleHourError(RuntimeError):
    """Demand cannot be covered by grid, solar and storage this hour."""

    def __init__(self, hour: int, message: str) -> None:
        super().__init__(f"hour {hour}: {message}")
        self.hour = hour


@dataclass(frozen=True)
class PriceConfig:
    buy_per_kwh: float = 0.073
    sell_per_kwh: float = 0.070
    rb_price: float = 6.0

    def validate(self) -> list[str]:
        if min(self.buy_per_kwh, self.sell_per_kwh, self.rb_price) < 0:
            return ["prices must be nonnegative"]
        return []


@dataclass(frozen=True)
class ServerPower:
    """Power profile of one server and the load share it carries."""

    base_w: float
    vnf_w: tuple[float, ...]
    vnf_count: int
    cpe_load_ratios: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.base_w < 0:
            raise ValueError("base power must be nonnegative")
        if self.vnf_count < len(self.vnf_w):
            raise ValueError("more active VNFs than the server's VNF slots")


@dataclass(frozen=True)
class StorageLimits:
    charge_max_kwh: float = 10.0
    discharge_max_kwh: float = 5.0
    grid_max_kwh: float = 50.0
    solar_max_kwh: float = 50.0


@dataclass(frozen=True)
class EnergyLedger:
    """One hour of energy flows, all in kWh except the cost."""

    hour: int
    solar_kwh: float
    grid_in_kwh: float
    charge_kwh: float
    discharge_kwh: float
    storage_mode: int
    stored_level_kwh: float
    surplus_next_kwh: float
    consumption_kwh: float
    available_kwh: float
    cost: float


def server_power(sp: ServerPower) -> float:
    """Instantaneous draw: base plus every active VNF."""
    return sp.base_w + sum(sp.vnf_w)


def total_power(servers: list[ServerPower]) -> float:
    """Site draw: each server's power scaled by the load it carries.

    Load ratios are y * lambda / (W * mu) per associated CPE; a server
    with no active allocation draws nothing under this model.
    """
    total = 0.0
    for sp in servers:
        total += server_power(sp) * sum(sp.cpe_load_ratios)
    return total


def cpe_load_ratio(
    allocated: int, arrival_rate_pps: float, service_rate_pps: float, vnf_count: int
) -> float:
    if service_rate_pps <= 0:
        raise ValueError("service rate must be positive")
    if vnf_count <= 0:
        raise ValueError("VNF count must be positive")
    return allocated * arrival_rate_pps / (vnf_count * service_rate_pps)


def consumption(power_w: float, hours: float) -> float:
    """Energy over the interval, converted W -> kWh."""
    if hours <= 0:
        raise ValueError("duration must be positive")
    return power_w * hours / 1000.0


def energy_cost(grid_in_kwh: float, surplus_kwh: float, prices: PriceConfig) -> float:
    """Hourly cost: purchases minus surplus sales (negative = net revenue)."""
    if grid_in_kwh < 0 or surplus_kwh < 0:
        raise ValueError("energy flows must be nonnegative")
    return grid_in_kwh * prices.buy_per_kwh - surplus_kwh * prices.sell_per_kwh


def dispatch_hour(
    hour: int,
    solar_kwh: float,
    demand_kwh: float,
    stored_level_kwh: float,
    prices: PriceConfig,
    limits: StorageLimits,
    force_mode: int | None = None,
) -> EnergyLedger:
    """Choose the storage mode and flows for one hour.

    Order of supply: solar first; then full-demand discharge when storage
    alone can carry the hour and no solar would be wasted; grid last.
    Leftover solar charges storage to its headroom, the remainder is the
    sellable surplus.  ``force_mode`` pins the charge(0)/discharge(1)
    decision, for callers that optimize it externally; an infeasible
    forced mode falls back to the feasible one.
    """
    solar = min(max(solar_kwh, 0.0), limits.solar_max_kwh)
    if demand_kwh < 0:
        raise ValueError("demand must be nonnegative")
    if not 0.0 <= stored_level_kwh <= limits.charge_max_kwh:
        raise ValueError("stored level outside storage capacity")

    discharge_ok = (
        stored_level_kwh >= demand_kwh and demand_kwh <= limits.discharge_max_kwh
    )
    passthrough_ok = demand_kwh <= solar + limits.grid_max_kwh
    if not discharge_ok and not passthrough_ok:
        raise InfeasibleHourError(
            hour,
            f"demand {demand_kwh:.3f} kWh exceeds solar {solar:.3f} + grid cap "
            f"{limits.grid_max_kwh:.3f} and storage cannot carry it",
        )

    mode = force_mode
    if mode == 1 and not discharge_ok:
        mode = 0
    if mode == 0 and not passthrough_ok:
        mode = 1
    if mode is None:
        if solar >= demand_kwh:
            mode = 0
        elif solar == 0.0 and discharge_ok and demand_kwh > 0:
            mode = 1
        else:
            mode = 0

    if mode == 1:
        discharge = demand_kwh
        ledger = EnergyLedger(
            hour=hour,
            solar_kwh=solar,
            grid_in_kwh=0.0,
            charge_kwh=0.0,
            discharge_kwh=discharge,
            storage_mode=1,
            stored_level_kwh=stored_level_kwh - discharge,
            surplus_next_kwh=0.0,
            consumption_kwh=demand_kwh,
            available_kwh=discharge,
            cost=0.0,
        )
    else:
        grid_in = max(demand_kwh - solar, 0.0)
        leftover = max(solar - demand_kwh, 0.0)
        headroom = limits.charge_max_kwh - stored_level_kwh
        charge = min(leftover, headroom)
        surplus = leftover - charge
        available = solar + grid_in - charge
        ledger = EnergyLedger(
            hour=hour,
            solar_kwh=solar,
            grid_in_kwh=grid_in,
            charge_kwh=charge,
            discharge_kwh=0.0,
            storage_mode=0,
            stored_level_kwh=stored_level_kwh + charge,
            surplus_next_kwh=surplus,
            consumption_kwh=demand_kwh,
            available_kwh=available,
            cost=energy_cost(grid_in, surplus, prices),
        )
    return ledger


@dataclass
class StorageState:
    """Running storage level threaded through consecutive dispatches."""

    level_kwh: float = 0.0
    history: list[EnergyLedger] = field(default_factory=list)

    def dispatch(
        self,
        hour: int,
        solar_kwh: float,
        demand_kwh: float,
        prices: PriceConfig,
        limits: StorageLimits,
        force_mode: int | None = None,
    ) -> EnergyLedger:
        ledger = dispatch_hour(
            hour, solar_kwh, demand_kwh, self.level_kwh, prices, limits, force_mode
        )
        self.level_kwh = ledger.stored_level_kwh
        self.history.append(ledger)
        return ledger
