//! Serial/tree kinematic chains and forward kinematics.
//!
//! Chains are loaded from a small JSON schema (see [`ChainDoc`]) rather than
//! URDF; only the quantities forward kinematics, joint limits and the contact
//! model need are described.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Pose, Quat, Vec3};

pub const PLANAR2_JSON: &str = include_str!("../assets/chains/planar2.json");
pub const PLANAR5_JSON: &str = include_str!("../assets/chains/planar5.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Revolute,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginDoc {
    pub p: Vec3,
    pub q: Quat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkDoc {
    pub name: String,
    pub parent: Option<String>,
    pub origin: OriginDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Vec3>,
    #[serde(rename = "type")]
    pub joint_type: JointType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torque_limit: Option<f64>,
    #[serde(default)]
    pub mass: f64,
    #[serde(default)]
    pub collision_points: Vec<Vec3>,
}

/// On-disk chain description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDoc {
    pub links: Vec<LinkDoc>,
    pub target_links: Vec<String>,
    pub default_pose: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub parent: Option<usize>,
    pub origin: Pose,
    pub axis: Vec3,
    pub joint_type: JointType,
    /// Index into the joint vector for revolute links.
    pub joint_index: Option<usize>,
    pub limits: [f64; 2],
    pub torque_limit: f64,
    pub mass: f64,
    pub collision_points: Vec<Vec3>,
}

/// Validated, immutable kinematic chain in topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    links: Vec<Link>,
    joint_links: Vec<usize>,
    target_links: Vec<usize>,
    default_pose: Vec<f64>,
    doc: ChainDoc,
}

/// Poses of every link in one frame (base or world), indexed like the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPoseSet {
    pub poses: Vec<Pose>,
}

impl LinkPoseSet {
    pub fn get<'a>(&'a self, chain: &KinematicChain, name: &str) -> Option<&'a Pose> {
        chain.link_index(name).map(|i| &self.poses[i])
    }
}

pub fn load_chain(text: &str) -> Result<KinematicChain> {
    let doc: ChainDoc = serde_json::from_str(text)
        .map_err(|e| Error::schema(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    KinematicChain::from_doc(doc)
}

impl KinematicChain {
    pub fn planar2() -> Self {
        load_chain(PLANAR2_JSON).expect("bundled planar2 chain is valid")
    }

    pub fn planar5() -> Self {
        load_chain(PLANAR5_JSON).expect("bundled planar5 chain is valid")
    }

    /// Loads a bundled chain by name (`planar2`, `planar5`) or a JSON file path.
    pub fn load(name_or_path: &str) -> Result<Self> {
        match name_or_path {
            "planar2" => Ok(Self::planar2()),
            "planar5" => Ok(Self::planar5()),
            path => load_chain(&std::fs::read_to_string(path)?),
        }
    }

    pub fn from_doc(doc: ChainDoc) -> Result<Self> {
        if doc.links.is_empty() {
            return Err(Error::schema("links", "chain must contain at least one link"));
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, l) in doc.links.iter().enumerate() {
            if l.name.is_empty() {
                return Err(Error::schema(format!("links[{i}].name"), "empty link name"));
            }
            if index.insert(l.name.as_str(), i).is_some() {
                return Err(Error::schema(format!("links[{i}].name"), format!("duplicate link name `{}`", l.name)));
            }
        }

        let mut parents = Vec::with_capacity(doc.links.len());
        for (i, l) in doc.links.iter().enumerate() {
            let parent = match &l.parent {
                None => None,
                Some(p) => Some(*index.get(p.as_str()).ok_or_else(|| {
                    Error::schema(format!("links[{i}].parent"), format!("unknown parent `{p}`"))
                })?),
            };
            parents.push(parent);
        }

        // cycle detection before the ordering check so cycles get their own error
        for start in 0..parents.len() {
            let mut cur = parents[start];
            let mut steps = 0;
            while let Some(p) = cur {
                steps += 1;
                if p == start || steps > parents.len() {
                    return Err(Error::schema(
                        format!("links[{start}].parent"),
                        format!("parent cycle through `{}`", doc.links[start].name),
                    ));
                }
                cur = parents[p];
            }
        }

        let roots: Vec<usize> = (0..parents.len()).filter(|&i| parents[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::schema("links", format!("expected exactly one root link, found {}", roots.len())));
        }

        let mut links = Vec::with_capacity(doc.links.len());
        let mut joint_links = Vec::new();
        for (i, l) in doc.links.iter().enumerate() {
            let path = |f: &str| format!("links[{i}].{f}");
            if let Some(p) = parents[i] {
                if p >= i {
                    return Err(Error::schema(path("parent"), "parent must precede child (topological order)"));
                }
            } else if l.joint_type != JointType::Fixed {
                return Err(Error::schema(path("type"), "root link must be fixed; the floating base is not a chain joint"));
            }
            if l.origin.p.iter().any(|v| !v.is_finite()) {
                return Err(Error::schema(path("origin.p"), "non-finite origin"));
            }
            if !(l.mass.is_finite() && l.mass >= 0.0) {
                return Err(Error::schema(path("mass"), "mass must be finite and >= 0"));
            }
            let (axis, limits, torque_limit, joint_index) = match l.joint_type {
                JointType::Fixed => (l.axis.unwrap_or([0.0, 1.0, 0.0]), l.limits.unwrap_or([0.0, 0.0]), l.torque_limit.unwrap_or(0.0), None),
                JointType::Revolute => {
                    let axis = l.axis.ok_or_else(|| Error::schema(path("axis"), "revolute joint requires an axis"))?;
                    if (geom::norm(axis) - 1.0).abs() > 1e-9 {
                        return Err(Error::schema(path("axis"), format!("axis {axis:?} is not unit norm")));
                    }
                    let limits = l.limits.ok_or_else(|| Error::schema(path("limits"), "revolute joint requires limits"))?;
                    if !(limits[0] < limits[1]) {
                        return Err(Error::schema(path("limits"), format!("limits {limits:?} must satisfy lo < hi")));
                    }
                    let tl = l
                        .torque_limit
                        .ok_or_else(|| Error::schema(path("torque_limit"), "revolute joint requires a torque limit"))?;
                    if !(tl > 0.0 && tl.is_finite()) {
                        return Err(Error::schema(path("torque_limit"), "torque limit must be > 0"));
                    }
                    let j = joint_links.len();
                    joint_links.push(i);
                    (axis, limits, tl, Some(j))
                }
            };
            links.push(Link {
                name: l.name.clone(),
                parent: parents[i],
                origin: Pose::new(l.origin.p, l.origin.q),
                axis,
                joint_type: l.joint_type,
                joint_index,
                limits,
                torque_limit,
                mass: l.mass,
                collision_points: l.collision_points.clone(),
            });
        }

        let mut target_links = Vec::with_capacity(doc.target_links.len());
        for (k, name) in doc.target_links.iter().enumerate() {
            let i = *index
                .get(name.as_str())
                .ok_or_else(|| Error::schema(format!("target_links[{k}]"), format!("unknown link `{name}`")))?;
            target_links.push(i);
        }

        if doc.default_pose.len() != joint_links.len() {
            return Err(Error::schema(
                "default_pose",
                format!("expected {} entries (one per revolute joint), got {}", joint_links.len(), doc.default_pose.len()),
            ));
        }

        Ok(KinematicChain { default_pose: doc.default_pose.clone(), links, joint_links, target_links, doc })
    }

    pub fn to_doc(&self) -> &ChainDoc {
        &self.doc
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("chain document serializes")
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn num_joints(&self) -> usize {
        self.joint_links.len()
    }

    pub fn num_targets(&self) -> usize {
        self.target_links.len()
    }

    pub fn target_links(&self) -> &[usize] {
        &self.target_links
    }

    pub fn default_pose(&self) -> &[f64] {
        &self.default_pose
    }

    /// Link index owning revolute joint `j`.
    pub fn joint_link(&self, j: usize) -> usize {
        self.joint_links[j]
    }

    pub fn joint_names(&self) -> Vec<String> {
        self.joint_links.iter().map(|&i| self.links[i].name.clone()).collect()
    }

    pub fn joint_limits(&self) -> Vec<[f64; 2]> {
        self.joint_links.iter().map(|&i| self.links[i].limits).collect()
    }

    pub fn torque_limits(&self) -> Vec<f64> {
        self.joint_links.iter().map(|&i| self.links[i].torque_limit).collect()
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// True when link `ancestor` lies on the path from the root to `link` (inclusive).
    pub fn is_ancestor(&self, ancestor: usize, link: usize) -> bool {
        let mut cur = Some(link);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.links[c].parent;
        }
        false
    }

    /// Mass carried by the subtree rooted at each revolute joint's link.
    pub fn downstream_mass(&self) -> Vec<f64> {
        self.joint_links
            .iter()
            .map(|&j| (0..self.links.len()).filter(|&l| self.is_ancestor(j, l)).map(|l| self.links[l].mass).sum())
            .collect()
    }

    /// Point where a link's mass is lumped, in the link frame: midway between
    /// the link origin and the centroid of its collision points.
    pub fn mass_point(&self, link: usize) -> Vec3 {
        let pts = &self.links[link].collision_points;
        if pts.is_empty() {
            return [0.0; 3];
        }
        let n = pts.len() as f64;
        let c = pts.iter().fold([0.0; 3], |acc, p| geom::add(acc, *p));
        geom::scale(c, 0.5 / n)
    }

    fn check_dims(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_joints() {
            return Err(Error::dim("forward kinematics joint vector", self.num_joints(), theta.len()));
        }
        Ok(())
    }

    /// World-frame pose of every link for base pose `base` and joint vector `theta`.
    pub fn forward_kinematics(&self, base: &Pose, theta: &[f64]) -> Result<LinkPoseSet> {
        self.check_dims(theta)?;
        Ok(self.fk_unchecked(base, theta))
    }

    pub(crate) fn fk_unchecked(&self, base: &Pose, theta: &[f64]) -> LinkPoseSet {
        let mut poses: Vec<Pose> = Vec::with_capacity(self.links.len());
        for link in &self.links {
            let mut pose = match link.parent {
                None => *base,
                Some(p) => poses[p].compose(&link.origin),
            };
            if let Some(j) = link.joint_index {
                pose = pose.compose(&Pose::new([0.0; 3], Quat::from_axis_angle(link.axis, theta[j])));
            }
            poses.push(pose);
        }
        LinkPoseSet { poses }
    }

    /// Positions of the target links in the base frame.
    pub fn link_positions_in_base(&self, theta: &[f64]) -> Result<Vec<Vec3>> {
        self.check_dims(theta)?;
        Ok(self.targets_in_base_unchecked(theta))
    }

    pub(crate) fn targets_in_base_unchecked(&self, theta: &[f64]) -> Vec<Vec3> {
        let fk = self.fk_unchecked(&Pose::IDENTITY, theta);
        self.target_links.iter().map(|&i| fk.poses[i].p).collect()
    }

    /// World positions of every collision point, in link order.
    pub fn collision_points_world(&self, fk: &LinkPoseSet) -> Vec<Vec3> {
        let mut out = Vec::new();
        for (i, link) in self.links.iter().enumerate() {
            for p in &link.collision_points {
                out.push(fk.poses[i].transform_point(*p));
            }
        }
        out
    }

    /// Owning link of each collision point, matching [`Self::collision_points_world`].
    pub fn collision_point_links(&self) -> Vec<usize> {
        self.links
            .iter()
            .enumerate()
            .flat_map(|(i, l)| std::iter::repeat_n(i, l.collision_points.len()))
            .collect()
    }

    /// Lowest collision-point height over the chain at the given configuration.
    pub fn min_point_height(&self, base: &Pose, theta: &[f64]) -> Result<f64> {
        let fk = self.forward_kinematics(base, theta)?;
        Ok(self
            .collision_points_world(&fk)
            .iter()
            .map(|p| p[2])
            .fold(f64::INFINITY, f64::min))
    }
}
