use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::b_topo::{assemble_a_r, build_b_topo, BTopo};
use crate::coords::{joint_coords, mvc_matrix, DEFAULT_LOCALIZATION_EXPONENT};
use crate::error::{Error, Result};
use crate::model::rig::rest_consensus_deviation;
use crate::model::weights::ROW_SUM_TOL;
use crate::model::{max_deviation, Quat, Rig, Skeleton, Transform, TriMesh, Vec3, WeightMatrix};
use crate::select::{maxvol_select, MaxVolSelection};
use crate::skinning::{
    cor_precompute, cor_skin_with, dqs, lbs, lbs_split, lbs_subset, pose_from_rotations,
    apply_joint_rotation, SkinningMethod, DEFAULT_SIGMA,
};

/// Relative pivot size below which the reverse system is treated as singular.
const REVERSE_PIVOT_FLOOR: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub struct SessionConfig {
    pub method: SkinningMethod,
    /// Fit the current cage against an LBS ghost of the selected vertices
    /// instead of the displayed skin. Irrelevant under LBS.
    pub ghost: bool,
    pub s_exp: f64,
    pub sigma: f64,
    /// Largest accepted `|M − Φ C|` at setup, relative to the bounding box.
    pub consensus_tol: f64,
    /// Largest per-vertex offset of one current-cage edit, relative to the
    /// bounding box.
    pub step_cap: f64,
    /// Steady-state audit tolerance, relative to the bounding box.
    pub audit_tol: f64,
    /// Refit joints after rest-cage edits. Disabling it only exists to show
    /// what goes wrong without it.
    pub skel_up: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            method: SkinningMethod::Lbs,
            ghost: true,
            s_exp: DEFAULT_LOCALIZATION_EXPONENT,
            sigma: DEFAULT_SIGMA,
            consensus_tol: 1e-4,
            step_cap: 0.05,
            audit_tol: 1e-6,
            skel_up: true,
        }
    }
}

/// One user interaction step.
#[derive(Clone, Debug, PartialEq)]
pub enum EditDelta {
    /// Rotate the subtree of `joint` about its current articulation.
    SkelRotate { joint: usize, rotation: Quat },
    /// Sparse offsets of rest-cage vertices.
    CageRest(Vec<(usize, Vec3)>),
    /// Sparse offsets of current-cage vertices.
    CageCurr(Vec<(usize, Vec3)>),
}

impl EditDelta {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::SkelRotate { .. } => "SKEL_ROTATE",
            Self::CageRest(_) => "CAGE_REST",
            Self::CageCurr(_) => "CAGE_CURR",
        }
    }
}

/// Immutable view published after every edit.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub frame: u64,
    pub skin: Vec<Vec3>,
    pub cage_rest: Vec<Vec3>,
    pub cage_curr: Vec<Vec3>,
    pub joints_rest: Vec<Vec3>,
    pub joints_curr: Vec<Vec3>,
}

/// Absolute deviations from the four steady-state equalities.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Audit {
    /// `|M_curr − skin(T, W, M_rest)|`.
    pub skin: f64,
    /// `|C_curr − Φ̃⁻¹ M̃_curr|`.
    pub cage_curr: f64,
    /// `|A_rest − Ψ C_rest|`.
    pub joints: f64,
    /// `|M_rest − Φ C_rest|`.
    pub rest_skin: f64,
    /// `|T_j a_j − T_f a_j|` over child joints.
    pub connectivity: f64,
}

impl Audit {
    pub fn max(&self) -> f64 {
        [self.skin, self.cage_curr, self.joints, self.rest_skin, self.connectivity]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Setup costs, mirroring the preprocessing columns of a timing table.
#[derive(Clone, Copy, Debug, Default)]
pub struct SetupTimings {
    pub mvc: Duration,
    /// Joint coordinates plus CoR precomputation.
    pub skel_up: Duration,
    /// MaxVol selection and `B_topo` factorization.
    pub cage_up: Duration,
    pub cor: Duration,
}

/// Costs of the most recent edit.
#[derive(Clone, Copy, Debug, Default)]
pub struct UpdateTimings {
    pub skin: Duration,
    pub cage_up: Duration,
    pub cage_rev: Option<Duration>,
    pub cor_update: Option<Duration>,
}

#[derive(Clone, Debug)]
struct PoseState {
    skeleton: Skeleton,
    rest_skin: Vec<Vec3>,
    curr_skin: Vec<Vec3>,
    cage_rest: Vec<Vec3>,
    cage_curr: Vec<Vec3>,
    cors: Option<Vec<Vec3>>,
    /// Bumped whenever the rotations change.
    pose_version: u64,
}

type ReverseLu = Arc<LU<f64, Dyn, Dyn>>;

/// Skin, skeleton and cage in rest and current pose, kept in sync.
#[derive(Debug)]
pub struct SyncSession {
    config: SessionConfig,
    scale: f64,
    skin_triangles: Vec<[usize; 3]>,
    cage_triangles: Vec<[usize; 3]>,
    weights: WeightMatrix,
    phi: WeightMatrix,
    psi: WeightMatrix,
    selection: MaxVolSelection,
    b_topo: BTopo,
    lambda: Option<WeightMatrix>,
    state: PoseState,
    frame: u64,
    snapshot: Arc<Snapshot>,
    b_topo_factorizations: usize,
    setup_timings: SetupTimings,
    last_update: UpdateTimings,
    /// Factorized reverse operator for one pose version. The operator does
    /// not depend on the rest cage, so consecutive current-cage edits at
    /// the same pose reuse it.
    reverse_cache: Mutex<Option<(u64, ReverseLu)>>,
}

impl SyncSession {
    pub fn new(rig: &Rig, config: SessionConfig) -> Result<Self> {
        let scale = rig.scale();
        let mut timings = SetupTimings::default();

        let clock = Instant::now();
        let phi = mvc_matrix(&rig.skin.vertices, &rig.cage)?;
        timings.mvc = clock.elapsed();
        let deviation = rest_consensus_deviation(&rig.skin.vertices, &phi, &rig.cage.vertices)?;
        if deviation > config.consensus_tol * scale {
            return Err(Error::Validation(format!(
                "rest skin is not reproduced by its cage: max |M - Phi C| = {deviation:e} exceeds {:e}",
                config.consensus_tol * scale
            )));
        }
        // Snap the rest skin onto the cage so the invariants hold exactly.
        let cage_rest = rig.cage.vertices.clone();
        let rest_skin = phi.apply(&cage_rest)?;

        let mut weights = rig.weights.clone();
        weights.normalize_rows();
        weights.validate(ROW_SUM_TOL)?;

        let clock = Instant::now();
        let skin_mesh = TriMesh::new(rest_skin.clone(), rig.skin.triangles.clone());
        let psi = joint_coords(&rig.skeleton, &skin_mesh, &weights, &phi, &rig.cage, config.s_exp)?;
        let cor_clock = Instant::now();
        let (lambda, cors) = if config.method == SkinningMethod::Cor {
            let data = cor_precompute(&skin_mesh, &weights, &phi, config.sigma)?;
            (Some(data.lambda), Some(data.cors))
        } else {
            (None, None)
        };
        timings.cor = cor_clock.elapsed();
        timings.skel_up = clock.elapsed();

        let clock = Instant::now();
        let selection = maxvol_select(&phi)?;
        let mut skeleton = rig.skeleton.clone();
        skeleton.reset_pose();
        let b_topo = build_b_topo(&skeleton)?;
        timings.cage_up = clock.elapsed();

        skeleton.set_rest_positions(&psi.apply(&cage_rest)?);
        skeleton.refresh_translations();

        let mut session = Self {
            config,
            scale,
            skin_triangles: rig.skin.triangles.clone(),
            cage_triangles: rig.cage.triangles.clone(),
            weights,
            phi,
            psi,
            selection,
            b_topo,
            lambda,
            state: PoseState {
                skeleton,
                curr_skin: rest_skin.clone(),
                rest_skin,
                cage_curr: cage_rest.clone(),
                cage_rest,
                cors,
                pose_version: 0,
            },
            frame: 0,
            snapshot: Arc::new(Snapshot {
                frame: 0,
                skin: Vec::new(),
                cage_rest: Vec::new(),
                cage_curr: Vec::new(),
                joints_rest: Vec::new(),
                joints_curr: Vec::new(),
            }),
            b_topo_factorizations: 1,
            setup_timings: timings,
            last_update: UpdateTimings::default(),
            reverse_cache: Mutex::new(None),
        };
        let mut state = session.state.clone();
        session.reskin_and_fit(&mut state)?;
        session.state = state;
        session.publish();
        Ok(session)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    /// Bounding-box diagonal of the input skin; tolerances are relative to it.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.state.skeleton
    }

    pub fn rest_skin(&self) -> &[Vec3] {
        &self.state.rest_skin
    }

    pub fn curr_skin(&self) -> &[Vec3] {
        &self.state.curr_skin
    }

    pub fn cage_rest(&self) -> &[Vec3] {
        &self.state.cage_rest
    }

    pub fn cage_curr(&self) -> &[Vec3] {
        &self.state.cage_curr
    }

    pub fn centers_of_rotation(&self) -> Option<&[Vec3]> {
        self.state.cors.as_deref()
    }

    pub fn skin_triangles(&self) -> &[[usize; 3]] {
        &self.skin_triangles
    }

    pub fn cage_triangles(&self) -> &[[usize; 3]] {
        &self.cage_triangles
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn phi(&self) -> &WeightMatrix {
        &self.phi
    }

    pub fn psi(&self) -> &WeightMatrix {
        &self.psi
    }

    pub fn selection(&self) -> &MaxVolSelection {
        &self.selection
    }

    pub fn b_topo(&self) -> &BTopo {
        &self.b_topo
    }

    /// How many times `B_topo` has been factorized (once, at setup).
    pub fn b_topo_factorizations(&self) -> usize {
        self.b_topo_factorizations
    }

    pub fn setup_timings(&self) -> SetupTimings {
        self.setup_timings
    }

    pub fn last_update(&self) -> UpdateTimings {
        self.last_update
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.snapshot)
    }

    fn publish(&mut self) {
        self.snapshot = Arc::new(Snapshot {
            frame: self.frame,
            skin: self.state.curr_skin.clone(),
            cage_rest: self.state.cage_rest.clone(),
            cage_curr: self.state.cage_curr.clone(),
            joints_rest: self.state.skeleton.rest_positions(),
            joints_curr: self.state.skeleton.current_positions(),
        });
    }

    fn skin_state(&self, state: &PoseState) -> Result<Vec<Vec3>> {
        let t = &state.skeleton.transforms;
        match self.config.method {
            SkinningMethod::Lbs => lbs(&state.rest_skin, &self.weights, t),
            SkinningMethod::Dqs => dqs(&state.rest_skin, &self.weights, t),
            SkinningMethod::Cor => {
                let cors = state.cors.as_deref().ok_or_else(|| {
                    Error::Validation("CoR skinning requires precomputed centers of rotation".into())
                })?;
                cor_skin_with(&state.rest_skin, &self.weights, t, cors)
            }
        }
    }

    /// Positions of the selected vertices the current cage is fitted to.
    fn fitting_positions(&self, state: &PoseState) -> Result<Vec<Vec3>> {
        let idx = &self.selection.indices;
        if self.config.method == SkinningMethod::Lbs || self.config.ghost {
            lbs_subset(&state.rest_skin, &self.weights, &state.skeleton.transforms, idx)
        } else {
            Ok(idx.iter().map(|&i| state.curr_skin[i]).collect())
        }
    }

    fn cage_up_state(&self, state: &PoseState) -> Result<Vec<Vec3>> {
        self.selection.solve_reduced(&self.fitting_positions(state)?)
    }

    /// Skin deformed by the current transforms, recomputed from scratch.
    pub fn skin_current(&self) -> Result<Vec<Vec3>> {
        self.skin_state(&self.state)
    }

    /// `Λ = Φ_CoRs · Φ`, present under CoR skinning.
    pub fn cor_lambda(&self) -> Option<&WeightMatrix> {
        self.lambda.as_ref()
    }

    /// Current cage fitted to the current skin (or its ghost).
    pub fn cage_up(&self) -> Result<Vec<Vec3>> {
        self.cage_up_state(&self.state)
    }

    fn reskin_and_fit(&mut self, state: &mut PoseState) -> Result<()> {
        let clock = Instant::now();
        state.curr_skin = self.skin_state(state)?;
        self.last_update.skin = clock.elapsed();
        let clock = Instant::now();
        state.cage_curr = self.cage_up_state(state)?;
        self.last_update.cage_up = clock.elapsed();
        Ok(())
    }

    /// Rest-side part of the cascade after a rest-cage change: joints,
    /// translations, CoRs, rest skin.
    fn refit_rest(&mut self, state: &mut PoseState) -> Result<()> {
        if self.config.skel_up {
            let joints = self.psi.apply(&state.cage_rest)?;
            state.skeleton.set_rest_positions(&joints);
            state.skeleton.refresh_translations();
            if let (Some(lambda), Some(cors)) = (&self.lambda, state.cors.as_mut()) {
                let clock = Instant::now();
                *cors = lambda.apply(&state.cage_rest)?;
                self.last_update.cor_update = Some(clock.elapsed());
            }
        }
        state.rest_skin = self.phi.apply(&state.cage_rest)?;
        Ok(())
    }

    /// Full cascade after a rest-cage change, through the current cage.
    fn skel_up_state(&mut self, state: &mut PoseState) -> Result<()> {
        self.refit_rest(state)?;
        self.reskin_and_fit(state)
    }

    /// The `3c × 3c` operator `K` with `Φ̃ C_curr = K C_rest` under LBS, at
    /// the current rotations.
    pub fn reverse_operator(&self) -> DMatrix<f64> {
        let sel = &self.selection.indices;
        let c = sel.len();
        let skeleton = &self.state.skeleton;
        let splits = lbs_split(&self.weights, &skeleton.transforms, sel);
        let mut k = DMatrix::zeros(3 * c, 3 * c);
        for (r, (rot, _)) in splits.iter().enumerate() {
            for col in 0..c {
                let phi = self.selection.reduced[(r, col)];
                if phi != 0.0 {
                    k.fixed_view_mut::<3, 3>(3 * r, 3 * col).copy_from(&(rot * phi));
                }
            }
        }
        if !self.config.skel_up {
            return k;
        }
        let s = skeleton.len();
        let Ok(g) = self.b_topo.solve(&assemble_a_r(skeleton)) else {
            return k;
        };
        // H = B⁻¹ A_R (Ψ ⊗ I₃)
        let mut h = DMatrix::zeros(3 * s, 3 * c);
        for (l, kk, psi) in self.psi.triplets() {
            for d in 0..3 {
                h.column_mut(3 * kk + d).axpy(psi, &g.column(3 * l + d), 1.0);
            }
        }
        for (r, &i) in sel.iter().enumerate() {
            for (j, w) in self.weights.row_iter(i) {
                let block = h.rows(3 * j, 3) * w;
                let mut target = k.rows_mut(3 * r, 3);
                target += block;
            }
        }
        k
    }

    /// Rest-cage offsets that move the current cage by `delta_curr` (dense,
    /// one offset per cage vertex).
    pub fn cage_rev(&self, delta_curr: &[Vec3]) -> Result<Vec<Vec3>> {
        let c = self.state.cage_rest.len();
        if delta_curr.len() != c {
            return Err(Error::Dimension {
                what: "current cage offsets",
                expected: c,
                found: delta_curr.len(),
            });
        }
        if delta_curr.iter().all(|d| *d == Vec3::zeros()) {
            return Ok(vec![Vec3::zeros(); c]);
        }
        let rhs = self.reverse_rhs(delta_curr)?;
        let lu = self.reverse_factorization()?;
        Self::solve_reverse(&lu, &rhs)
    }

    /// Same as [`Self::cage_rev`] but assembles and factorizes the operator
    /// from scratch, as the first edit after a pose change does.
    pub fn cage_rev_uncached(&self, delta_curr: &[Vec3]) -> Result<Vec<Vec3>> {
        let rhs = self.reverse_rhs(delta_curr)?;
        let lu = Self::checked_lu(self.reverse_operator())?;
        Self::solve_reverse(&lu, &rhs)
    }

    fn reverse_rhs(&self, delta_curr: &[Vec3]) -> Result<DVector<f64>> {
        let c = self.state.cage_rest.len();
        if delta_curr.len() != c {
            return Err(Error::Dimension {
                what: "current cage offsets",
                expected: c,
                found: delta_curr.len(),
            });
        }
        let mut rhs = DVector::zeros(3 * c);
        for r in 0..c {
            let mut acc = Vec3::zeros();
            for col in 0..c {
                acc += delta_curr[col] * self.selection.reduced[(r, col)];
            }
            rhs.fixed_rows_mut::<3>(3 * r).copy_from(&acc);
        }
        Ok(rhs)
    }

    fn solve_reverse(lu: &LU<f64, Dyn, Dyn>, rhs: &DVector<f64>) -> Result<Vec<Vec3>> {
        let x = lu
            .solve(rhs)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Singular("reverse cage system".into()))?;
        Ok((0..rhs.len() / 3)
            .map(|k| Vec3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]))
            .collect())
    }

    fn reverse_factorization(&self) -> Result<ReverseLu> {
        let version = self.state.pose_version;
        let mut cache = self.reverse_cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((v, lu)) = cache.as_ref() {
            if *v == version {
                return Ok(Arc::clone(lu));
            }
        }
        let lu = Arc::new(Self::checked_lu(self.reverse_operator())?);
        *cache = Some((version, Arc::clone(&lu)));
        Ok(lu)
    }

    fn checked_lu(k: DMatrix<f64>) -> Result<LU<f64, Dyn, Dyn>> {
        let lu = k.lu();
        let diag = lu.u().diagonal().map(f64::abs);
        let (lo, hi) = (diag.min(), diag.max());
        if !(hi > 0.0) || lo <= REVERSE_PIVOT_FLOOR * hi {
            return Err(Error::Singular(format!(
                "reverse cage system is singular at the current pose (pivot ratio {:e})",
                if hi > 0.0 { lo / hi } else { 0.0 }
            )));
        }
        Ok(lu)
    }

    fn dense_offsets(&self, offsets: &[(usize, Vec3)]) -> Result<Vec<Vec3>> {
        let c = self.state.cage_rest.len();
        let mut dense = vec![Vec3::zeros(); c];
        for &(k, d) in offsets {
            if k >= c {
                return Err(Error::Edit(format!("cage vertex {k} out of range (cage has {c})")));
            }
            if !d.iter().all(|x| x.is_finite()) {
                return Err(Error::Edit(format!("offset of cage vertex {k} is not finite")));
            }
            dense[k] += d;
        }
        Ok(dense)
    }

    /// Applies one edit and runs the cascade. On error nothing changes.
    pub fn edit(&mut self, delta: &EditDelta) -> Result<Arc<Snapshot>> {
        let mut state = self.state.clone();
        let saved = self.last_update;
        self.last_update.cage_rev = None;
        self.last_update.cor_update = None;
        match self.apply(&mut state, delta) {
            Ok(()) => {
                self.state = state;
                self.frame += 1;
                self.publish();
                Ok(self.snapshot())
            }
            Err(e) => {
                self.last_update = saved;
                Err(e)
            }
        }
    }

    fn apply(&mut self, state: &mut PoseState, delta: &EditDelta) -> Result<()> {
        match delta {
            EditDelta::SkelRotate { joint, rotation } => {
                if *joint >= state.skeleton.len() {
                    return Err(Error::Edit(format!(
                        "joint {joint} out of range (skeleton has {})",
                        state.skeleton.len()
                    )));
                }
                if !rotation.coords.iter().all(|x| x.is_finite()) {
                    return Err(Error::Edit("rotation is not finite".into()));
                }
                apply_joint_rotation(&mut state.skeleton, *joint, *rotation);
                state.skeleton.refresh_translations();
                state.pose_version += 1;
                self.reskin_and_fit(state)
            }
            EditDelta::CageRest(offsets) => {
                let dense = self.dense_offsets(offsets)?;
                for (c, d) in state.cage_rest.iter_mut().zip(&dense) {
                    *c += d;
                }
                self.skel_up_state(state)
            }
            EditDelta::CageCurr(offsets) => {
                let dense = self.dense_offsets(offsets)?;
                let cap = self.config.step_cap * self.scale;
                if let Some((k, d)) = dense.iter().enumerate().find(|(_, d)| d.norm() > cap) {
                    return Err(Error::Edit(format!(
                        "offset of cage vertex {k} ({:e}) exceeds the per-step cap {cap:e}",
                        d.norm()
                    )));
                }
                let clock = Instant::now();
                let rest_delta = self.cage_rev(&dense)?;
                self.last_update.cage_rev = Some(clock.elapsed());
                for (c, d) in state.cage_rest.iter_mut().zip(&rest_delta) {
                    *c += d;
                }
                self.skel_up_state(state)
            }
        }
    }

    /// Replaces the whole animated state: rest cage and global joint
    /// rotations. Used by keyframe playback; never goes through `cage_rev`.
    pub fn set_pose(&mut self, cage_rest: &[Vec3], rotations: &[Quat]) -> Result<Arc<Snapshot>> {
        let mut state = self.state.clone();
        if cage_rest.len() != state.cage_rest.len() {
            return Err(Error::Dimension {
                what: "rest cage",
                expected: state.cage_rest.len(),
                found: cage_rest.len(),
            });
        }
        if rotations.len() != state.skeleton.len() {
            return Err(Error::Dimension {
                what: "joint rotations",
                expected: state.skeleton.len(),
                found: rotations.len(),
            });
        }
        state.cage_rest = cage_rest.to_vec();
        self.refit_rest(&mut state)?;
        pose_from_rotations(&mut state.skeleton, rotations);
        state.pose_version += 1;
        self.reskin_and_fit(&mut state)?;
        self.state = state;
        self.frame += 1;
        self.publish();
        Ok(self.snapshot())
    }

    /// Resets every transform to identity.
    pub fn reset_pose(&mut self) -> Result<Arc<Snapshot>> {
        let mut state = self.state.clone();
        state.skeleton.reset_pose();
        state.skeleton.refresh_translations();
        state.pose_version += 1;
        self.reskin_and_fit(&mut state)?;
        self.state = state;
        self.frame += 1;
        self.publish();
        Ok(self.snapshot())
    }

    /// Deviations from the steady-state equalities for the current state.
    pub fn audit(&self) -> Result<Audit> {
        let s = &self.state;
        let skin = max_deviation(&s.curr_skin, &self.skin_state(s)?);
        let cage_curr = max_deviation(&s.cage_curr, &self.cage_up_state(s)?);
        let joints = max_deviation(&s.skeleton.rest_positions(), &self.psi.apply(&s.cage_rest)?);
        let rest_skin = max_deviation(&s.rest_skin, &self.phi.apply(&s.cage_rest)?);
        let mut cors = 0.0;
        if let (Some(lambda), Some(c)) = (&self.lambda, &s.cors) {
            cors = max_deviation(c, &lambda.apply(&s.cage_rest)?);
        }
        Ok(Audit {
            skin,
            cage_curr,
            joints,
            rest_skin: rest_skin.max(cors),
            connectivity: s.skeleton.connectivity_error(),
        })
    }

    /// `true` when every audited deviation is within `audit_tol × scale`.
    pub fn audit_passes(&self) -> Result<bool> {
        Ok(self.audit()?.max() <= self.config.audit_tol * self.scale)
    }

    /// Current global transforms.
    pub fn transforms(&self) -> &[Transform] {
        &self.state.skeleton.transforms
    }
}
