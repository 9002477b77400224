#![doc = include_str!("../../../book/src/introduction.md")]

#[doc = include_str!("../../../book/src/grids-and-units.md")]
pub mod grids_and_units {}

#[doc = include_str!("../../../book/src/dipolar-kernel.md")]
pub mod dipolar_kernel {}

#[doc = include_str!("../../../book/src/time-stepping.md")]
pub mod time_stepping {}

#[doc = include_str!("../../../book/src/ground-states.md")]
pub mod ground_states {}

#[doc = include_str!("../../../book/src/controls.md")]
pub mod controls {}

#[doc = include_str!("../../../book/src/optimization.md")]
pub mod optimization {}

#[doc = include_str!("../../../book/src/observables.md")]
pub mod observables {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
