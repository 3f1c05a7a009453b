//! Synthetic ground-truth building, weather and closed-loop experiments.

mod closed_loop;
mod plant;
mod recording;
mod tuning;
mod weather;

pub use closed_loop::{
    energy_kwh, metrics, run_closed_loop, trace_start, Action, AvgLoop, ClosedLoopOptions, Controller, Metrics, MpcLoop, Observation,
    OnOffLoop, PiLoop, RefLoop, SimRecord, SimTrace, SolverRecord,
};
pub use plant::{PlantInputs, PlantSensitivity, TruthPlant};
pub use recording::{synthesize_recording, RecordingConfig};
pub use tuning::{identify, tune_pi, Fopdt, StepTest};
pub use weather::{make_scenarios, DiurnalProfile, ScenarioLabel, WeatherScenario};
