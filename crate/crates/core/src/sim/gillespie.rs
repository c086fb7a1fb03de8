//! Direct-method simulation of the urn process.
//!
//! Each step sums the per-urn rates (recovery `ψ(i/N)` for infected urns,
//! pressure `p[i]` for susceptible ones), draws an exponential waiting time
//! with that total, and picks the event by a single uniform over the
//! cumulative rates. Infection events additionally name a source urn drawn
//! with probability proportional to `λ(i/N, j/N)` over infected `j`.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_initial, Configuration, ModelSpec, UrnState};
use crate::rng::{stream, Domain};
use crate::sim::rates::{InfectionPressure, UrnRates};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Recovery { urn: usize },
    Infection { target: usize, source: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

impl Event {
    /// Applies the event, checking that the transition is admissible.
    pub fn apply(&self, config: &mut Configuration) -> Result<()> {
        match self.kind {
            EventKind::Recovery { urn } => {
                if config.get(urn) != UrnState::Infected {
                    return Err(Error::Consistency(format!("recovery of non-infected urn {}", urn + 1)));
                }
                config.set(urn, UrnState::Removed);
            }
            EventKind::Infection { target, source } => {
                if config.get(target) != UrnState::Susceptible || config.get(source) != UrnState::Infected {
                    return Err(Error::Consistency(format!(
                        "infection of urn {} by urn {} not admissible",
                        target + 1,
                        source + 1
                    )));
                }
                config.set(target, UrnState::Infected);
            }
        }
        config.set_time(self.time);
        Ok(())
    }
}

/// Configuration plus the incrementally maintained pressure cache.
#[derive(Debug, Clone)]
pub struct SimState {
    config: Configuration,
    pressure: InfectionPressure,
    infected: usize,
}

impl SimState {
    pub fn new(config: Configuration, rates: &UrnRates) -> Self {
        let pressure = InfectionPressure::compute(&config, rates);
        let infected = config.census().infected;
        Self { config, pressure, infected }
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn pressure(&self) -> &InfectionPressure {
        &self.pressure
    }

    pub fn into_config(self) -> Configuration {
        self.config
    }

    /// Applies an event and updates the pressure cache.
    pub fn apply(&mut self, event: &Event, rates: &UrnRates) -> Result<()> {
        event.apply(&mut self.config)?;
        match event.kind {
            EventKind::Recovery { urn } => {
                self.infected -= 1;
                if self.infected == 0 {
                    self.pressure.clear();
                } else {
                    self.pressure.on_recovery(urn, rates);
                }
            }
            EventKind::Infection { target, .. } => {
                self.infected += 1;
                self.pressure.on_infection(target, rates);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Event(Event),
    /// No infected urn remains; the configuration never changes again.
    Absorbed,
    /// The next event would occur after the time limit; nothing was applied.
    Horizon,
}

/// One exact step with no time limit.
pub fn gillespie_step<R: Rng + ?Sized>(state: &mut SimState, rates: &UrnRates, rng: &mut R) -> StepOutcome {
    step_until(state, rates, rng, f64::INFINITY)
}

/// One exact step; returns [`StepOutcome::Horizon`] if the drawn event time exceeds `t_max`.
pub fn step_until<R: Rng + ?Sized>(state: &mut SimState, rates: &UrnRates, rng: &mut R, t_max: f64) -> StepOutcome {
    if state.infected == 0 {
        return StepOutcome::Absorbed;
    }
    let states = state.config.states();
    let rate_of = |k: usize| match states[k] {
        UrnState::Infected => rates.recovery(k),
        UrnState::Susceptible => state.pressure.get(k),
        UrnState::Removed => 0.0,
    };
    let n = states.len();
    let total: f64 = (0..n).map(rate_of).sum();
    if !(total > 0.0) {
        return StepOutcome::Absorbed;
    }
    let wait: f64 = Exp1.sample(rng);
    let time = state.config.time() + wait / total;
    if time > t_max {
        return StepOutcome::Horizon;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = None;
    let mut last_positive = 0;
    for k in 0..n {
        let r = rate_of(k);
        if r > 0.0 {
            last_positive = k;
            acc += r;
            if target < acc {
                chosen = Some(k);
                break;
            }
        }
    }
    let k = chosen.unwrap_or(last_positive);
    let kind = if states[k].is_infected() {
        EventKind::Recovery { urn: k }
    } else {
        EventKind::Infection { target: k, source: pick_source(states, rates, k, rng) }
    };
    let event = Event { time, kind };
    state.apply(&event, rates).expect("selected event is admissible");
    StepOutcome::Event(event)
}

fn pick_source<R: Rng + ?Sized>(states: &[UrnState], rates: &UrnRates, target: usize, rng: &mut R) -> usize {
    let weight = |j: usize| if states[j].is_infected() { rates.kernel().entry(target, j) } else { 0.0 };
    let total: f64 = (0..states.len()).map(weight).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for j in 0..states.len() {
        let w = weight(j);
        if w > 0.0 {
            last = j;
            acc += w;
            if u < acc {
                return j;
            }
        }
    }
    last
}

/// Event log with the initial configuration and requested snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: Configuration,
    pub events: Vec<Event>,
    pub snapshots: Vec<Configuration>,
    pub horizon: f64,
}

impl Trajectory {
    /// Configuration at time `t`, obtained by replaying the log.
    pub fn replay_to(&self, t: f64) -> Result<Configuration> {
        let mut c = self.initial.clone();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            e.apply(&mut c)?;
        }
        c.set_time(t);
        Ok(c)
    }

    /// Checks event ordering, admissibility and snapshot reproduction.
    pub fn verify(&self) -> Result<()> {
        if self.events.windows(2).any(|w| !(w[0].time < w[1].time)) {
            return Err(Error::Consistency("event times not strictly increasing".into()));
        }
        for snap in &self.snapshots {
            let replayed = self.replay_to(snap.time())?;
            if replayed.states() != snap.states() {
                return Err(Error::Consistency(format!("snapshot at t = {} not reproduced by replay", snap.time())));
            }
        }
        Ok(())
    }

    /// One JSON object per line: `{"t", "kind", "urn", "source"}`, urns 1-based.
    pub fn write_events_ndjson<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.events {
            let rec = match e.kind {
                EventKind::Recovery { urn } => {
                    EventRecord { t: e.time, kind: "recovery".into(), urn: urn + 1, source: None }
                }
                EventKind::Infection { target, source } => {
                    EventRecord { t: e.time, kind: "infection".into(), urn: target + 1, source: Some(source + 1) }
                }
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// CSV with columns `time,urn,state`, urns 1-based.
    pub fn write_snapshots_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "urn", "state"])?;
        for snap in &self.snapshots {
            for (k, s) in snap.states().iter().enumerate() {
                w.serialize((snap.time(), k + 1, s.code()))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// NDJSON line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub kind: String,
    pub urn: usize,
    pub source: Option<usize>,
}

/// Parses an NDJSON event log back into events (0-based urns).
pub fn read_events_ndjson(text: &str) -> Result<Vec<Event>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let rec: EventRecord = serde_json::from_str(line)?;
            let urn = rec.urn.checked_sub(1).ok_or_else(|| Error::Domain("urn labels start at 1".into()))?;
            let kind = match (rec.kind.as_str(), rec.source) {
                ("recovery", None) => EventKind::Recovery { urn },
                ("infection", Some(s)) => EventKind::Infection {
                    target: urn,
                    source: s.checked_sub(1).ok_or_else(|| Error::Domain("urn labels start at 1".into()))?,
                },
                (k, _) => return Err(Error::Domain(format!("malformed event kind {k:?}"))),
            };
            Ok(Event { time: rec.t, kind })
        })
        .collect()
}

fn check_snapshot_times(times: &[f64], horizon: f64) -> Result<()> {
    if times.iter().any(|t| !(*t >= 0.0 && *t <= horizon)) {
        return Err(Error::Precondition(format!("snapshot times must lie in [0, {horizon}]")));
    }
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Precondition("snapshot times must be sorted".into()));
    }
    Ok(())
}

/// Simulates up to `spec.horizon()` from `sample_initial(spec, seed)`.
pub fn simulate(spec: &ModelSpec<f64>, seed: u64, snapshot_times: &[f64]) -> Result<Trajectory> {
    let rates = UrnRates::new(spec);
    simulate_with(&rates, spec, seed, snapshot_times, true)
}

/// As [`simulate`] with precomputed rates; `record_events = false` keeps only snapshots.
pub fn simulate_with(
    rates: &UrnRates,
    spec: &ModelSpec<f64>,
    seed: u64,
    snapshot_times: &[f64],
    record_events: bool,
) -> Result<Trajectory> {
    let horizon = spec.horizon();
    check_snapshot_times(snapshot_times, horizon)?;
    let initial = sample_initial(spec, seed);
    let mut rng = stream(seed, Domain::Dynamics);
    let mut state = SimState::new(initial.clone(), rates);
    let mut events = Vec::new();
    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    let mut pending = snapshot_times.iter().copied().peekable();
    loop {
        let outcome = step_until(&mut state, rates, &mut rng, horizon);
        let next_time = match outcome {
            StepOutcome::Event(e) => e.time,
            _ => f64::INFINITY,
        };
        // snapshots strictly before this event see the pre-event configuration
        while let Some(&s) = pending.peek() {
            if s < next_time {
                let mut snap = match outcome {
                    StepOutcome::Event(_) => pre_event(&state, &outcome),
                    _ => state.config().clone(),
                };
                snap.set_time(s);
                snapshots.push(snap);
                pending.next();
            } else {
                break;
            }
        }
        match outcome {
            StepOutcome::Event(e) => {
                if record_events {
                    events.push(e);
                }
            }
            _ => break,
        }
    }
    Ok(Trajectory { initial, events, snapshots, horizon })
}

fn pre_event(state: &SimState, outcome: &StepOutcome) -> Configuration {
    let mut c = state.config().clone();
    if let StepOutcome::Event(e) = outcome {
        match e.kind {
            EventKind::Recovery { urn } => c.set(urn, UrnState::Infected),
            EventKind::Infection { target, .. } => c.set(target, UrnState::Susceptible),
        }
    }
    c
}
