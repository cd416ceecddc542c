//! Decentralized navigation of a partially informed UAV swarm through a forest.
//!
//! Only informed agents know the goal. The rest pick a neighbor to follow from
//! noisy relative observations, plan on a private occupancy grid and avoid
//! collisions reactively. [`sim::World`] steps the whole swarm; [`run_mission`]
//! and [`run_batch`] drive complete missions and [`output`] writes their logs.
//!
//! ```
//! use pacnav::{run_mission, Preset, ScenarioConfig};
//!
//! let mut config = ScenarioConfig::preset(Preset::Case2A);
//! config.max_steps = 20;
//! let log = run_mission(&config).unwrap();
//! assert_eq!(log.final_positions.len(), 6);
//! ```

pub mod config;
pub mod controller;
pub mod environment;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod output;
pub mod perception;
pub mod planner;
pub mod selection;
pub mod sim;

pub use config::{Preset, ScenarioConfig};
pub use error::{Error, Result};
pub use geometry::{UavId, Vec2};
pub use sim::{run_batch, run_mission, MissionLog, World};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/scenarios.md")]
    struct Scenarios;
    #[doc = include_str!("../../../book/src/perception.md")]
    struct Perception;
    #[doc = include_str!("../../../book/src/selection.md")]
    struct Selection;
    #[doc = include_str!("../../../book/src/planning.md")]
    struct Planning;
    #[doc = include_str!("../../../book/src/control.md")]
    struct Control;
    #[doc = include_str!("../../../book/src/simulation.md")]
    struct Simulation;
    #[doc = include_str!("../../../book/src/outputs.md")]
    struct Outputs;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
