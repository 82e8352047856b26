//! Allocation-only core of the skill matrix stack.
//!
//! Everything in this crate is deterministic and free of IO: the action
//! codec, the 2.5-D simulator, the controller and teleoperation mappings,
//! the wire frame codec, the template planner and execution checker, the
//! meta-skill executors and the demonstration-data transforms. Transport,
//! files and the command line live in the `skillmatrix` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bench;
pub mod codec;
pub mod control;
pub mod data;
pub mod detect;
pub mod math;
pub mod planner;
pub mod scheduler;
pub mod sim;
pub mod skills;
pub mod wire;

pub use codec::{Action7, CodecConfig, CodecError, DimRange, TokenSeq};
pub use control::{ControlSignal, Controller, GripperCommand, TeleopInput};
pub use sim::{RobotState, RobotVariant, SceneObject, SceneSnapshot, World};
