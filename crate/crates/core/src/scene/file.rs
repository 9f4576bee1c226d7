//! JSON scene description.
//!
//! ```json
//! {
//!   "parameters": [{"name": "center", "value": [0, 0, 0]}, {"name": "radius", "value": 1}],
//!   "sdf": {"type": "sphere", "center": "center", "radius": "radius"},
//!   "material": {"shading": "flat", "albedo": [1, 1, 1], "background": [0, 0, 0]},
//!   "cameras": [{"kind": "orthographic", "eye": [0, 0, -3], "look_at": [0, 0, 0],
//!                "extent": 3, "width": 64, "height": 64}],
//!   "bound": 1.5
//! }
//! ```
//!
//! A scalar reference is a parameter name, `name[i]`, or an inline number
//! (which becomes an anonymous parameter). A 3-vector reference is either the
//! name of a length-3 block or an array of three scalar references. MLP nodes
//! name a weight block; if the block is not declared, `init` must be given and
//! the weights are created by geometric initialization.

use super::expr::SdfExpr;
use super::material::Material;
use super::mlp::MlpSdf;
use super::params::{ParamVector, Slot};
use super::Scene;
use crate::error::{Error, Result};
use crate::render::CameraSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDecl {
    pub name: String,
    pub value: ParamValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarRef {
    Literal(f64),
    Name(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VecRef {
    Block(String),
    Each([ScalarRef; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpInit {
    pub seed: u64,
    pub r0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NodeFile {
    Sphere {
        center: VecRef,
        radius: ScalarRef,
    },
    Box {
        center: VecRef,
        half: VecRef,
    },
    Torus {
        center: VecRef,
        major: ScalarRef,
        minor: ScalarRef,
    },
    Plane {
        normal: [f64; 3],
        offset: ScalarRef,
    },
    Union {
        children: Vec<NodeFile>,
    },
    SmoothUnion {
        children: Vec<NodeFile>,
        k: ScalarRef,
    },
    Intersection {
        children: Vec<NodeFile>,
    },
    Complement {
        child: Box<NodeFile>,
    },
    Transform {
        child: Box<NodeFile>,
        translation: VecRef,
        scale: ScalarRef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rotation: Option<[[f64; 3]; 3]>,
    },
    Mlp {
        hidden: usize,
        layers: usize,
        pe_levels: usize,
        skip: Vec<usize>,
        beta: f64,
        weights: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        init: Option<MlpInit>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(default)]
    pub parameters: Vec<ParamDecl>,
    pub sdf: NodeFile,
    pub material: Material,
    #[serde(default)]
    pub cameras: Vec<CameraSpec>,
    pub bound: f64,
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

struct Builder {
    params: ParamVector,
}

impl Builder {
    fn scalar(&mut self, r: &ScalarRef) -> Result<Slot> {
        match r {
            ScalarRef::Name(n) => self.params.resolve(n),
            ScalarRef::Literal(v) => {
                let name = format!("_{}", self.params.len());
                self.params.push_scalar(name, *v)
            }
        }
    }

    fn vec3(&mut self, r: &VecRef) -> Result<[Slot; 3]> {
        match r {
            VecRef::Block(n) => {
                let b = self
                    .params
                    .block(n)
                    .ok_or_else(|| Error::config(format!("unknown parameter `{n}`")))?;
                if b.len != 3 {
                    return Err(Error::config(format!("`{n}` must have 3 entries, has {}", b.len)));
                }
                Ok([b.start, b.start + 1, b.start + 2])
            }
            VecRef::Each(e) => Ok([self.scalar(&e[0])?, self.scalar(&e[1])?, self.scalar(&e[2])?]),
        }
    }

    fn children(&mut self, c: &[NodeFile]) -> Result<Vec<SdfExpr>> {
        if c.is_empty() {
            return Err(Error::config("composite node needs at least one child"));
        }
        c.iter().map(|n| self.node(n)).collect()
    }

    fn node(&mut self, n: &NodeFile) -> Result<SdfExpr> {
        Ok(match n {
            NodeFile::Sphere { center, radius } => SdfExpr::Sphere {
                center: self.vec3(center)?,
                radius: self.scalar(radius)?,
            },
            NodeFile::Box { center, half } => SdfExpr::Box {
                center: self.vec3(center)?,
                half: self.vec3(half)?,
            },
            NodeFile::Torus { center, major, minor } => SdfExpr::Torus {
                center: self.vec3(center)?,
                major: self.scalar(major)?,
                minor: self.scalar(minor)?,
            },
            NodeFile::Plane { normal, offset } => SdfExpr::Plane {
                normal: *normal,
                offset: self.scalar(offset)?,
            },
            NodeFile::Union { children } => SdfExpr::Union(self.children(children)?),
            NodeFile::Intersection { children } => SdfExpr::Intersection(self.children(children)?),
            NodeFile::SmoothUnion { children, k } => SdfExpr::SmoothUnion {
                children: self.children(children)?,
                k: self.scalar(k)?,
            },
            NodeFile::Complement { child } => SdfExpr::Complement(Box::new(self.node(child)?)),
            NodeFile::Transform {
                child,
                translation,
                scale,
                rotation,
            } => SdfExpr::Transform {
                translation: self.vec3(translation)?,
                scale: self.scalar(scale)?,
                rotation: rotation.unwrap_or(IDENTITY),
                child: Box::new(self.node(child)?),
            },
            NodeFile::Mlp {
                hidden,
                layers,
                pe_levels,
                skip,
                beta,
                weights,
                init,
            } => {
                let mut m = MlpSdf {
                    hidden: *hidden,
                    layers: *layers,
                    pe_levels: *pe_levels,
                    skip: skip.clone(),
                    beta: *beta,
                    offset: 0,
                };
                m.validate()?;
                let count = m.param_count();
                m.offset = match (self.params.block(weights), init) {
                    (Some(b), _) if b.len == count => b.start,
                    (Some(b), _) => {
                        return Err(Error::config(format!(
                            "mlp weight block `{weights}` has {} entries, architecture needs {count}",
                            b.len
                        )))
                    }
                    (None, Some(i)) => {
                        let w = m.geometric_init(i.seed, i.r0)?;
                        self.params.push_block(weights.clone(), &w)?
                    }
                    (None, None) => {
                        return Err(Error::config(format!(
                            "mlp weight block `{weights}` is not declared and no init is given"
                        )))
                    }
                };
                SdfExpr::Mlp(m)
            }
        })
    }
}

fn slot_ref(p: &ParamVector, s: Slot) -> ScalarRef {
    ScalarRef::Name(p.name_of(s))
}

fn slots_ref(p: &ParamVector, s: &[Slot; 3]) -> VecRef {
    if let Some(b) = p.blocks().iter().find(|b| b.start == s[0] && b.len == 3) {
        if s[1] == s[0] + 1 && s[2] == s[0] + 2 {
            return VecRef::Block(b.name.clone());
        }
    }
    VecRef::Each(s.map(|x| slot_ref(p, x)))
}

fn to_node(p: &ParamVector, e: &SdfExpr) -> NodeFile {
    let kids = |c: &[SdfExpr]| c.iter().map(|x| to_node(p, x)).collect();
    match e {
        SdfExpr::Sphere { center, radius } => NodeFile::Sphere {
            center: slots_ref(p, center),
            radius: slot_ref(p, *radius),
        },
        SdfExpr::Box { center, half } => NodeFile::Box {
            center: slots_ref(p, center),
            half: slots_ref(p, half),
        },
        SdfExpr::Torus { center, major, minor } => NodeFile::Torus {
            center: slots_ref(p, center),
            major: slot_ref(p, *major),
            minor: slot_ref(p, *minor),
        },
        SdfExpr::Plane { normal, offset } => NodeFile::Plane {
            normal: *normal,
            offset: slot_ref(p, *offset),
        },
        SdfExpr::Union(c) => NodeFile::Union { children: kids(c) },
        SdfExpr::Intersection(c) => NodeFile::Intersection { children: kids(c) },
        SdfExpr::SmoothUnion { children, k } => NodeFile::SmoothUnion {
            children: kids(children),
            k: slot_ref(p, *k),
        },
        SdfExpr::Complement(c) => NodeFile::Complement {
            child: Box::new(to_node(p, c)),
        },
        SdfExpr::Transform {
            child,
            translation,
            scale,
            rotation,
        } => NodeFile::Transform {
            child: Box::new(to_node(p, child)),
            translation: slots_ref(p, translation),
            scale: slot_ref(p, *scale),
            rotation: (*rotation != IDENTITY).then_some(*rotation),
        },
        SdfExpr::Mlp(m) => NodeFile::Mlp {
            hidden: m.hidden,
            layers: m.layers,
            pe_levels: m.pe_levels,
            skip: m.skip.clone(),
            beta: m.beta,
            weights: p
                .blocks()
                .iter()
                .find(|b| b.start == m.offset)
                .map(|b| b.name.clone())
                .expect("mlp weights occupy a named block"),
            init: None,
        },
    }
}

impl SceneFile {
    pub fn build(&self) -> Result<Scene> {
        let mut params = ParamVector::new();
        for d in &self.parameters {
            match &d.value {
                ParamValue::Scalar(v) => params.push_scalar(d.name.clone(), *v)?,
                ParamValue::Vector(v) => params.push_block(d.name.clone(), v)?,
            };
        }
        let mut b = Builder { params };
        let sdf = b.node(&self.sdf)?;
        let mut scene = Scene::new(sdf, b.params, self.material.clone(), self.bound)?;
        for c in &self.cameras {
            crate::render::Camera::new(c.clone())?;
        }
        scene.cameras = self.cameras.clone();
        Ok(scene)
    }

    pub fn from_scene(scene: &Scene) -> Self {
        let p = &scene.params;
        let parameters = p
            .blocks()
            .iter()
            .map(|b| {
                let v = &p.values()[b.start..b.start + b.len];
                ParamDecl {
                    name: b.name.clone(),
                    value: if b.len == 1 {
                        ParamValue::Scalar(v[0])
                    } else {
                        ParamValue::Vector(v.to_vec())
                    },
                }
            })
            .collect();
        Self {
            parameters,
            sdf: to_node(p, &scene.sdf),
            material: scene.material.clone(),
            cameras: scene.cameras.clone(),
            bound: scene.bound,
        }
    }
}

impl Scene {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: SceneFile = serde_json::from_str(s).map_err(|e| Error::Json {
            path: "<string>".into(),
            source: e,
        })?;
        f.build()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&SceneFile::from_scene(self)).expect("scene serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: SceneFile = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        f.build()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}
