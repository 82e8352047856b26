//! Scene descriptions and seeded world construction.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ObjectFlags, ObjectKind, Ramp, RobotState, RobotVariant, SceneObject, SimParams, World};
use crate::math;

pub const SCENE_SCHEMA: &str = "skillmatrix.scene/1";

const MAX_PLACEMENT_ATTEMPTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("unsupported scene schema {0:?}")]
    Schema(String),
    #[error("fixed placements of {a:?} and {b:?} overlap")]
    Overlap { a: String, b: String },
    #[error("could not place {0:?} inside its region without overlap")]
    NoRoom(String),
    #[error("invalid region for {0:?}")]
    BadRegion(String),
    #[error("{object:?} is placed inside unknown container {container:?}")]
    UnknownContainer { object: String, container: String },
    #[error("duplicate robot id {0}")]
    DuplicateRobot(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Placement {
    Fixed {
        x: f64,
        y: f64,
        #[serde(default)]
        yaw: f64,
    },
    /// Uniform over an axis-aligned rectangle; `yaw` uniform in `[yaw_min, yaw_max]`.
    Region {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
        #[serde(default)]
        yaw_min: f64,
        #[serde(default)]
        yaw_max: f64,
    },
}

impl Placement {
    fn is_fixed(&self) -> bool {
        matches!(self, Placement::Fixed { .. })
    }

    fn sample(&self, rng: &mut ChaCha8Rng, what: &str) -> Result<(f64, f64, f64), SceneError> {
        match *self {
            Placement::Fixed { x, y, yaw } => Ok((x, y, yaw)),
            Placement::Region {
                x_min,
                x_max,
                y_min,
                y_max,
                yaw_min,
                yaw_max,
            } => {
                if !(x_min <= x_max && y_min <= y_max && yaw_min <= yaw_max) {
                    return Err(SceneError::BadRegion(what.into()));
                }
                let x = if x_min < x_max { rng.random_range(x_min..x_max) } else { x_min };
                let y = if y_min < y_max { rng.random_range(y_min..y_max) } else { y_min };
                let yaw = if yaw_min < yaw_max {
                    rng.random_range(yaw_min..yaw_max)
                } else {
                    yaw_min
                };
                Ok((x, y, yaw))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpawn {
    pub id: u32,
    pub variant: RobotVariant,
    pub pose: Placement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub kind: ObjectKind,
    pub placement: Placement,
    pub radius: f64,
    pub height: f64,
    /// Base height; defaults to the ground under the object.
    #[serde(default)]
    pub z: Option<f64>,
    /// Drawer front / target face direction; defaults to the placement yaw.
    #[serde(default)]
    pub facing: Option<f64>,
    /// Initial drawer extension.
    #[serde(default)]
    pub extension: f64,
    /// Name of a container the object starts inside.
    #[serde(default)]
    pub inside: Option<String>,
}

impl ObjectSpec {
    pub fn new(name: &str, kind: ObjectKind, placement: Placement, radius: f64, height: f64) -> Self {
        ObjectSpec {
            name: name.into(),
            kind,
            placement,
            radius,
            height,
            z: None,
            facing: None,
            extension: 0.0,
            inside: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampSpec {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
    /// Incline in degrees.
    pub angle_deg: f64,
    pub platform_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub schema: String,
    pub name: String,
    #[serde(default)]
    pub params: SimParams,
    pub robots: Vec<RobotSpawn>,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub ramp: Option<RampSpec>,
    /// Extra gap kept between sampled footprints.
    #[serde(default)]
    pub clearance: f64,
}

impl SceneSpec {
    pub fn new(name: &str) -> Self {
        SceneSpec {
            schema: SCENE_SCHEMA.into(),
            name: name.into(),
            params: SimParams::default(),
            robots: Vec::new(),
            objects: Vec::new(),
            ramp: None,
            clearance: 0.05,
        }
    }
}

fn overlaps(a: (f64, f64, f64), b: (f64, f64, f64), clearance: f64) -> bool {
    math::hypot(a.0 - b.0, a.1 - b.1) < a.2 + b.2 + clearance
}

pub(super) fn spawn(spec: &SceneSpec, seed: u64) -> Result<World, SceneError> {
    if spec.schema != SCENE_SCHEMA {
        return Err(SceneError::Schema(spec.schema.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = World::new(spec.params);
    world.ramp = spec.ramp.map(|r| Ramp {
        x: r.x,
        y: r.y,
        heading: r.heading,
        length: r.length,
        width: r.width,
        angle: math::deg(r.angle_deg),
        platform_length: r.platform_length,
    });

    // Fixed placements must not overlap each other.
    let fixed: Vec<(&ObjectSpec, (f64, f64, f64))> = spec
        .objects
        .iter()
        .filter(|o| o.placement.is_fixed() && o.inside.is_none())
        .map(|o| match o.placement {
            Placement::Fixed { x, y, .. } => (o, (x, y, o.radius)),
            _ => unreachable!(),
        })
        .collect();
    for (i, (a, pa)) in fixed.iter().enumerate() {
        for (b, pb) in fixed.iter().skip(i + 1) {
            if a.kind != ObjectKind::Ramp && b.kind != ObjectKind::Ramp && overlaps(*pa, *pb, 0.0) {
                return Err(SceneError::Overlap {
                    a: a.name.clone(),
                    b: b.name.clone(),
                });
            }
        }
    }

    let mut occupied: Vec<(f64, f64, f64)> = Vec::new();
    for rs in &spec.robots {
        if world.robots.iter().any(|r| r.id == rs.id) {
            return Err(SceneError::DuplicateRobot(rs.id));
        }
        let (x, y, yaw) = rs.pose.sample(&mut rng, &format!("robot {}", rs.id))?;
        let mut r = RobotState::new(rs.id, rs.variant, x, y, yaw);
        let (pitch, _) = world.attitude(x, y, r.yaw);
        r.pitch = pitch;
        occupied.push((x, y, spec.params.chassis_radius));
        world.robots.push(r);
    }
    for (_, p) in &fixed {
        occupied.push(*p);
    }

    for (next_id, o) in (1..).zip(&spec.objects) {
        let (x, y, yaw) = if o.inside.is_some() {
            (0.0, 0.0, 0.0)
        } else if o.placement.is_fixed() {
            o.placement.sample(&mut rng, &o.name)?
        } else {
            let mut placed = None;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let cand = o.placement.sample(&mut rng, &o.name)?;
                let c = (cand.0, cand.1, o.radius);
                if o.kind == ObjectKind::Ramp || !occupied.iter().any(|p| overlaps(*p, c, spec.clearance)) {
                    placed = Some(cand);
                    break;
                }
            }
            let p = placed.ok_or_else(|| SceneError::NoRoom(o.name.clone()))?;
            if o.kind != ObjectKind::Ramp {
                occupied.push((p.0, p.1, o.radius));
            }
            p
        };
        let z = o.z.unwrap_or_else(|| world.ground_height(x, y));
        world.objects.push(SceneObject {
            id: next_id,
            name: o.name.clone(),
            kind: o.kind,
            x,
            y,
            z,
            radius: o.radius,
            height: o.height,
            facing: o.facing.unwrap_or(yaw),
            flags: ObjectFlags {
                extension: o.extension,
                ..ObjectFlags::default()
            },
        });
    }
    // Resolve initial containment once every container exists.
    for (i, o) in spec.objects.iter().enumerate() {
        let Some(cname) = &o.inside else { continue };
        let container = world
            .objects_named(cname)
            .find(|c| c.kind.container())
            .map(|c| c.id)
            .ok_or_else(|| SceneError::UnknownContainer {
                object: o.name.clone(),
                container: cname.clone(),
            })?;
        world.objects[i].flags.contained_in = Some(container);
    }
    world.settle_objects();
    Ok(world)
}
