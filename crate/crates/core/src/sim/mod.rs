//! Exact simulation and the clock-based graphical construction.

mod clocks;
mod gillespie;
mod graphical;
mod rates;

pub use clocks::{
    build_clock_table, build_clock_table_with, BankView, ClockTable, ClockView, FixedClocks, SubstitutedView,
    MAX_CLOCK_URNS,
};
pub use gillespie::{
    gillespie_step, read_events_ndjson, simulate, simulate_with, step_until, Event, EventKind, EventRecord, SimState,
    StepOutcome, Trajectory,
};
pub use graphical::{
    coupled_quadruple, infection_moment, influence_set, state_from_clocks, state_with, CoupledQuadruple, InfluenceSet,
};
pub use rates::{event_rates, EventRates, InfectionPressure, UrnRates, PRESSURE_TOLERANCE};
