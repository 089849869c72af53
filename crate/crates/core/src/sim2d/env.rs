use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::EnvConfig;
use super::dynamics::{apply_domain_rand, contact_force, pd_torque, DomainRand, DynParams};
use crate::error::{Error, Result};
use crate::geom::{self, Pose, Quat, Vec3};
use crate::kinematics::{KinematicChain, LinkPoseSet};
use crate::motion::reward::{regularization_reward, safety_reward, task_reward, RewardConfig};
use crate::motion::termination::{check_termination, TerminationCause, TerminationConfig};
use crate::motion::{build_command_sequence, frame_width, ground_offset, refresh_errors, CommandSequence, MotionTrajectory, RobotView};

/// Tolerance when comparing the episode clock against keyframe reach times.
const REACH_EPS: f64 = 1e-9;
/// Any state component beyond this magnitude counts as divergence.
const STATE_BOUND: f64 = 1e6;

/// Planar robot state. The base moves in the x–z plane and pitches about +y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub time: f64,
    pub step: usize,
    /// Pelvis pose; always `y = 0` with a pure pitch rotation.
    pub base: Pose,
    pub pitch: f64,
    /// World position of the centre of mass.
    pub com: Vec3,
    /// Linear velocity of the centre of mass, `y` always 0.
    pub lin_vel: Vec3,
    /// `(0, pitch rate, 0)`.
    pub ang_vel: Vec3,
    pub theta: Vec<f64>,
    pub theta_dot: Vec<f64>,
    pub prev_theta_dot: Vec<f64>,
    pub prev_action: Vec<f64>,
    pub prev_prev_action: Vec<f64>,
    /// Keyframes consumed so far this episode.
    pub consumed: usize,
}

/// Everything the environments of one run share: chain, reference, configs
/// and precomputed kinematic tables.
#[derive(Debug)]
pub struct EnvShared {
    pub chain: KinematicChain,
    /// Reference lifted by its ground offset.
    pub traj: MotionTrajectory,
    pub cfg: EnvConfig,
    pub reward: RewardConfig,
    pub termination: TerminationConfig,
    limits: Vec<[f64; 2]>,
    link_joints: Vec<Vec<usize>>,
    mass_points: Vec<Vec3>,
}

impl EnvShared {
    pub fn new(
        chain: KinematicChain,
        traj: &MotionTrajectory,
        cfg: EnvConfig,
        reward: RewardConfig,
        termination: TerminationConfig,
    ) -> Result<Arc<Self>> {
        cfg.validate(&chain)?;
        reward.validate()?;
        termination.validate()?;
        if traj.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        traj.check_chain(&chain)?;
        let h = ground_offset(traj, &chain)?;
        let traj = if h > 0.0 { traj.with_height_offset(h) } else { traj.clone() };
        let n = chain.num_links();
        let link_joints = (0..n)
            .map(|l| (0..chain.num_joints()).filter(|&j| chain.is_ancestor(chain.joint_link(j), l)).collect())
            .collect();
        let mass_points = (0..n).map(|l| chain.mass_point(l)).collect();
        Ok(Arc::new(EnvShared { limits: chain.joint_limits(), chain, traj, cfg, reward, termination, link_joints, mass_points }))
    }

    pub fn num_joints(&self) -> usize {
        self.chain.num_joints()
    }

    /// Width of one proprioception frame.
    pub fn frame_obs_width(&self) -> usize {
        6 + 3 * self.num_joints()
    }

    pub fn obs_width(&self) -> usize {
        self.cfg.history * self.frame_obs_width()
    }

    pub fn token_width(&self) -> usize {
        frame_width(self.num_joints(), self.chain.num_targets())
    }

    /// Keyframe tokens plus the state-target token.
    pub fn max_tokens(&self) -> usize {
        self.cfg.keyframes + 1
    }

    /// Joint targets for a policy action.
    pub fn action_to_target(&self, action: &[f64]) -> Vec<f64> {
        let d = self.chain.default_pose();
        action
            .iter()
            .enumerate()
            .map(|(j, a)| (d[j] + self.cfg.action_scale * a).clamp(self.limits[j][0], self.limits[j][1]))
            .collect()
    }

    fn com_local(&self, base_fk: &LinkPoseSet, params: &DynParams) -> Vec3 {
        let mut acc = [0.0; 3];
        for (l, pose) in base_fk.poses.iter().enumerate() {
            acc = geom::add(acc, geom::scale(pose.transform_point(self.mass_points[l]), params.link_masses[l]));
        }
        let c = if params.total_mass > 0.0 { geom::scale(acc, 1.0 / params.total_mass) } else { [0.0; 3] };
        [c[0] + params.com_offset, c[1], c[2]]
    }

    /// Pelvis pose for a centre of mass, pitch and joint configuration.
    fn pelvis(&self, com: Vec3, pitch: f64, base_fk: &LinkPoseSet, params: &DynParams) -> Pose {
        let q = Quat::rot_y(pitch);
        let c = q.rotate(self.com_local(base_fk, params));
        Pose::new([com[0] - c[0], 0.0, com[2] - c[2]], q)
    }

    /// Net external force and pitch torque about the centre of mass.
    fn contact_wrench(&self, s: &SimState, params: &DynParams) -> (Vec3, f64) {
        let chain = &self.chain;
        let base_fk = chain.fk_unchecked(&Pose::IDENTITY, &s.theta);
        let pelvis = self.pelvis(s.com, s.pitch, &base_fk, params);
        let world: Vec<Pose> = base_fk.poses.iter().map(|p| pelvis.compose(p)).collect();
        let joints: Vec<(Vec3, Vec3)> = (0..chain.num_joints())
            .map(|j| {
                let l = chain.joint_link(j);
                (world[l].p, world[l].q.rotate(chain.links()[l].axis))
            })
            .collect();
        let joint_vel = |l: usize, r: Vec3| {
            self.link_joints[l].iter().fold([0.0; 3], |acc, &j| {
                let (o, a) = joints[j];
                geom::add(acc, geom::scale(geom::cross(a, geom::sub(r, o)), s.theta_dot[j]))
            })
        };
        // velocity of the centre of mass relative to the rigid base, from joint motion
        let mut com_rel = [0.0; 3];
        if params.total_mass > 0.0 {
            for l in 0..world.len() {
                let x = world[l].transform_point(self.mass_points[l]);
                com_rel = geom::add(com_rel, geom::scale(joint_vel(l, x), params.link_masses[l] / params.total_mass));
            }
        }
        let mut force = [0.0; 3];
        let mut torque = 0.0;
        for (l, link) in chain.links().iter().enumerate() {
            for pt in &link.collision_points {
                let r = world[l].transform_point(*pt);
                if r[2] >= 0.0 {
                    continue;
                }
                let d = geom::sub(r, s.com);
                let v = geom::add(
                    geom::add(s.lin_vel, geom::cross(s.ang_vel, d)),
                    geom::sub(joint_vel(l, r), com_rel),
                );
                let f = contact_force(r, v, &self.cfg.contact);
                force = geom::add(force, f);
                torque += d[2] * f[0] - d[0] * f[2];
            }
        }
        (force, torque)
    }

    fn sync_base(&self, s: &mut SimState, params: &DynParams) {
        let base_fk = self.chain.fk_unchecked(&Pose::IDENTITY, &s.theta);
        s.base = self.pelvis(s.com, s.pitch, &base_fk, params);
    }

    /// Total mechanical energy of the base body including stored contact
    /// spring energy; joint kinetic energy is excluded.
    pub fn base_energy(&self, s: &SimState, params: &DynParams) -> f64 {
        let m = params.total_mass;
        let ke = 0.5 * m * geom::dot(s.lin_vel, s.lin_vel) + 0.5 * params.base_inertia * s.ang_vel[1] * s.ang_vel[1];
        let pe = m * self.cfg.gravity * s.com[2];
        let fk = self.chain.fk_unchecked(&s.base, &s.theta);
        let spring: f64 = self
            .chain
            .collision_points_world(&fk)
            .iter()
            .map(|p| {
                let d = (-p[2]).max(0.0);
                0.5 * self.cfg.contact.k_n * d * d
            })
            .sum();
        ke + pe + spring
    }
}

/// Stacked proprioception frames, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsHistory {
    pub frames: VecDeque<Vec<f64>>,
    pub len: usize,
}

impl ObsHistory {
    pub fn filled(frame: Vec<f64>, len: usize) -> Self {
        ObsHistory { frames: std::iter::repeat_n(frame, len).collect(), len }
    }

    pub fn push(&mut self, frame: Vec<f64>) {
        self.frames.push_back(frame);
        while self.frames.len() > self.len {
            self.frames.pop_front();
        }
    }
}

/// One proprioception frame: angular velocity, projected gravity, θ, θ̇, previous action.
pub fn proprio_frame(state: &SimState) -> Vec<f64> {
    let mut out = Vec::with_capacity(6 + 3 * state.theta.len());
    out.extend_from_slice(&state.base.q.inverse_rotate(state.ang_vel));
    out.extend_from_slice(&geom::projected_gravity(state.base.q));
    out.extend_from_slice(&state.theta);
    out.extend_from_slice(&state.theta_dot);
    out.extend_from_slice(&state.prev_action);
    out
}

/// Concatenation of the buffered frames, oldest first.
pub fn observe(history: &ObsHistory) -> Vec<f64> {
    history.frames.iter().flatten().copied().collect()
}

/// Policy input: proprioception history and command tokens (keyframes first,
/// state target last), flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub proprio: Vec<f64>,
    pub tokens: Vec<f64>,
    pub n_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    /// A keyframe was reached this step.
    pub consumed: bool,
    pub cause: Option<TerminationCause>,
    pub diverged: bool,
    /// `max_j |θ̈_j|` over the step.
    pub max_joint_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    /// Task, regularization and safety rewards.
    pub rewards: [f64; 3],
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }

    pub fn success(&self) -> bool {
        self.truncated && !self.terminated
    }
}

/// One shadowing environment with its own RNG stream.
#[derive(Debug, Clone)]
pub struct ShadowEnv {
    shared: Arc<EnvShared>,
    rng: ChaCha8Rng,
    state: SimState,
    seq: CommandSequence,
    params: DynParams,
    rand: DomainRand,
    t_int: f64,
    history: ObsHistory,
    delay: VecDeque<Vec<f64>>,
}

impl ShadowEnv {
    /// Creates and resets an environment on RNG stream `stream` of `seed`.
    pub fn new(shared: Arc<EnvShared>, seed: u64, stream: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let n = shared.num_joints();
        let empty = SimState {
            time: 0.0,
            step: 0,
            base: Pose::IDENTITY,
            pitch: 0.0,
            com: [0.0; 3],
            lin_vel: [0.0; 3],
            ang_vel: [0.0; 3],
            theta: vec![0.0; n],
            theta_dot: vec![0.0; n],
            prev_theta_dot: vec![0.0; n],
            prev_action: vec![0.0; n],
            prev_prev_action: vec![0.0; n],
            consumed: 0,
        };
        let params = apply_domain_rand(&shared.chain, &shared.cfg, &DomainRand::IDENTITY.clamped(&shared.cfg.domain_rand))?;
        let mut env = ShadowEnv {
            rng,
            state: empty,
            seq: CommandSequence { frames: Vec::new(), keyframes: Vec::new(), t_refresh: 0.0 },
            params,
            rand: DomainRand::IDENTITY,
            t_int: shared.cfg.t_int_range[0],
            history: ObsHistory::filled(Vec::new(), shared.cfg.history),
            delay: VecDeque::new(),
            shared,
        };
        env.reset()?;
        Ok(env)
    }

    pub fn shared(&self) -> &Arc<EnvShared> {
        &self.shared
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn command(&self) -> &CommandSequence {
        &self.seq
    }

    pub fn params(&self) -> &DynParams {
        &self.params
    }

    pub fn domain_rand(&self) -> &DomainRand {
        &self.rand
    }

    pub fn t_int(&self) -> f64 {
        self.t_int
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn history(&self) -> &ObsHistory {
        &self.history
    }

    /// Samples a start ratio, domain randomization and keyframe interval, then resets.
    pub fn reset(&mut self) -> Result<()> {
        let cfg = &self.shared.cfg;
        let draw = |rng: &mut ChaCha8Rng, r: [f64; 2]| if r[0] < r[1] { rng.random_range(r[0]..=r[1]) } else { r[0] };
        let ratio = draw(&mut self.rng, cfg.init_ratio);
        let rand = DomainRand::sample(&cfg.domain_rand, &mut self.rng);
        let t_int = draw(&mut self.rng, cfg.t_int_range);
        self.reset_with(ratio, rand, t_int)
    }

    /// Resets to the reference frame at `ratio` of the motion duration.
    pub fn reset_with(&mut self, ratio: f64, rand: DomainRand, t_int: f64) -> Result<()> {
        let shared = Arc::clone(&self.shared);
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::Config(format!("start ratio must lie in [0, 1], got {ratio}")));
        }
        if !(t_int > 0.0) {
            return Err(Error::Config(format!("keyframe interval must be > 0, got {t_int}")));
        }
        let params = apply_domain_rand(&shared.chain, &shared.cfg, &rand)?;
        let motion_time = ratio * shared.traj.duration();
        let frame = shared.traj.sample(motion_time)?;
        let pitch = frame.q.planar_pitch();
        let q = Quat::rot_y(pitch);
        let base = Pose::new([frame.p[0], 0.0, frame.p[2] + shared.cfg.spawn_height], q);
        let base_fk = shared.chain.fk_unchecked(&Pose::IDENTITY, &frame.theta);
        let com = geom::add(base.p, q.rotate(shared.com_local(&base_fk, &params)));
        let n = shared.num_joints();
        let mut state = SimState {
            time: 0.0,
            step: 0,
            base,
            pitch,
            com,
            lin_vel: [0.0; 3],
            ang_vel: [0.0; 3],
            theta: frame.theta.clone(),
            theta_dot: vec![0.0; n],
            prev_theta_dot: vec![0.0; n],
            prev_action: vec![0.0; n],
            prev_prev_action: vec![0.0; n],
            consumed: 0,
        };
        shared.sync_base(&mut state, &params);
        self.seq = build_command_sequence(
            &shared.traj,
            &shared.chain,
            RobotView { base: state.base, theta: &state.theta },
            motion_time,
            0.0,
            t_int,
            shared.cfg.keyframes,
        )?;
        self.delay = std::iter::repeat_n(frame.theta, params.delay_substeps).collect();
        self.history = ObsHistory::filled(proprio_frame(&state), shared.cfg.history);
        self.state = state;
        self.params = params;
        self.rand = rand;
        self.t_int = t_int;
        Ok(())
    }

    /// Overrides the dynamics for the rest of the episode.
    pub fn set_params(&mut self, params: DynParams) {
        self.params = params;
        self.shared.sync_base(&mut self.state, &self.params);
    }

    /// Overrides the base velocity (test hook).
    pub fn set_velocity(&mut self, lin_vel: Vec3, pitch_rate: f64) {
        self.state.lin_vel = [lin_vel[0], 0.0, lin_vel[2]];
        self.state.ang_vel = [0.0, pitch_rate, 0.0];
    }

    /// Moves the base so its centre of mass sits at `com` (test hook).
    pub fn set_com(&mut self, com: Vec3) {
        self.state.com = [com[0], 0.0, com[2]];
        self.shared.sync_base(&mut self.state, &self.params);
    }

    pub fn observation(&self) -> Observation {
        let width = self.shared.token_width();
        let mut tokens = Vec::with_capacity(self.seq.frames.len() * width);
        for f in &self.seq.frames {
            f.write_features(&mut tokens);
        }
        Observation { proprio: observe(&self.history), tokens, n_tokens: self.seq.frames.len() }
    }

    pub fn base_energy(&self) -> f64 {
        self.shared.base_energy(&self.state, &self.params)
    }

    fn substep(&mut self, target: &[f64], h: f64, peak: &mut [f64]) {
        let shared = Arc::clone(&self.shared);
        let p = &self.params;
        let s = &mut self.state;
        self.delay.push_back(target.to_vec());
        let applied = self.delay.pop_front().expect("delay queue holds the pushed target");

        // drift-kick-drift
        let half = 0.5 * h;
        s.com = geom::add(s.com, geom::scale(s.lin_vel, half));
        s.pitch += half * s.ang_vel[1];
        for (t, v) in s.theta.iter_mut().zip(&s.theta_dot) {
            *t += half * v;
        }
        let tau = pd_torque(&p.kp, &p.kd, &applied, &s.theta, &s.theta_dot, &p.torque_limits);
        let (force, torque) = shared.contact_wrench(s, p);
        if p.total_mass > 0.0 {
            s.lin_vel[0] += h * force[0] / p.total_mass;
            s.lin_vel[2] += h * (force[2] / p.total_mass - shared.cfg.gravity);
        }
        s.ang_vel[1] += h * torque / p.base_inertia;
        for j in 0..s.theta.len() {
            s.theta_dot[j] += h * (tau[j] - p.joint_friction * s.theta_dot[j]) / p.joint_inertia[j];
            if tau[j].abs() > peak[j].abs() {
                peak[j] = tau[j];
            }
        }
        s.com = geom::add(s.com, geom::scale(s.lin_vel, half));
        s.pitch += half * s.ang_vel[1];
        for (t, v) in s.theta.iter_mut().zip(&s.theta_dot) {
            *t += half * v;
            if t.abs() > TAU {
                *t -= TAU * (*t / TAU).trunc();
            }
        }
    }

    fn is_finite(&self) -> bool {
        let s = &self.state;
        let ok = |v: f64| v.is_finite() && v.abs() < STATE_BOUND;
        s.com.iter().chain(&s.lin_vel).chain(&s.ang_vel).chain(&s.theta).chain(&s.theta_dot).all(|&v| ok(v)) && ok(s.pitch)
    }

    /// Advances one policy period. Does not reset on episode end.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let shared = Arc::clone(&self.shared);
        let n = shared.num_joints();
        if action.len() != n {
            return Err(Error::dim("env step action", n, action.len()));
        }
        let cfg = &shared.cfg;
        let target = shared.action_to_target(action);
        let h = cfg.dt_sim();
        let mut peak = vec![0.0; n];
        let theta_dot_before = self.state.theta_dot.clone();
        for _ in 0..cfg.substeps {
            self.substep(&target, h, &mut peak);
        }
        let dt = cfg.dt_policy;
        let s = &mut self.state;
        s.step += 1;
        s.time = s.step as f64 * dt;
        shared.sync_base(s, &self.params);

        let mut info = StepInfo {
            max_joint_acc: s.theta_dot.iter().zip(&theta_dot_before).map(|(a, b)| ((a - b) / dt).abs()).fold(0.0, f64::max),
            ..Default::default()
        };
        if !self.is_finite() {
            info.diverged = true;
            let s = &mut self.state;
            s.prev_theta_dot = theta_dot_before;
            return Ok(StepResult { rewards: [0.0; 3], terminated: true, truncated: false, info });
        }
        let s = &mut self.state;
        let r2 = regularization_reward(&s.theta_dot, &theta_dot_before, action, &s.prev_action, dt, &shared.reward.regularization);
        let r3 = safety_reward(&s.theta, &peak, &shared.limits, &self.params.torque_limits, &shared.reward.safety);
        s.prev_theta_dot = theta_dot_before;
        s.prev_prev_action = std::mem::replace(&mut s.prev_action, action.to_vec());

        let mut r1 = 0.0;
        let mut terminated = false;
        let now = s.time;
        let due = self.seq.keyframes.first().filter(|k| now + REACH_EPS >= k.reach_time).cloned();
        let robot = RobotView { base: s.base, theta: &s.theta };
        if let Some(k) = due {
            info.consumed = true;
            s.consumed += 1;
            r1 = task_reward(&s.base, &s.theta, &k.world_ref, &k.theta, &shared.reward.task);
            info.cause = check_termination(&s.base, &s.theta, &k.world_ref, &k.theta, &shared.termination);
            terminated = info.cause.is_some();
            if !terminated {
                let motion_time = (k.motion_time + (now - k.reach_time)).min(shared.traj.duration());
                self.seq = build_command_sequence(&shared.traj, &shared.chain, robot, motion_time, now, self.t_int, cfg.keyframes)?;
            }
        } else {
            refresh_errors(&mut self.seq, &shared.chain, robot, now);
        }
        let truncated = !terminated && self.seq.is_exhausted();
        self.history.push(proprio_frame(&self.state));
        Ok(StepResult { rewards: [r1, r2, r3], terminated, truncated, info })
    }
}
