//! A small conditional VAE over grasp configurations.
//!
//! The condition is a max-pooled per-point embedding of the object cloud
//! (xyz, normal and optional extra channels per point). The encoder maps
//! the embedding and a grasp to a diagonal Gaussian; the decoder maps a
//! latent code and the embedding to a translation, a 6-number rotation
//! (orthonormalized by Gram-Schmidt) and joint angles clamped into their
//! limits. Training minimizes the Chamfer distance between the posed hand
//! clouds of predicted and recorded grasps plus a weighted KL term, with
//! gradients from the reverse-mode tape in [`tape`].

mod checkpoint;
pub(crate) mod tape;

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::affordance::AffordanceObject;
use crate::dataset::GraspRecord;
use crate::error::{Error, Result};
use crate::geometry::{chamfer_distance, chamfer_with_gradient, Vec3};
use crate::hand::{forward_kinematics, hand_surface_points, GraspConfiguration, HandModel};
use crate::rng::{derive_seed, rng_from_seed};
use tape::{Mat, Tape, Var};

/// Lower clamp of the latent standard deviation.
pub const MIN_SIGMA: f64 = 1e-6;

/// Network sizes and training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    /// Adam step size.
    pub step_size: f64,
    /// Weight of the KL term.
    pub kld_weight: f64,
    pub seed: u64,
    pub latent_dim: usize,
    /// Object points fed to the encoder.
    pub n_points: usize,
    /// Extra per-point channels after xyz and normal.
    pub feature_channels: usize,
    /// Per-point layer widths before the pooled embedding layer.
    pub point_widths: Vec<usize>,
    pub embedding: usize,
    pub encoder_hidden: usize,
    pub decoder_widths: Vec<usize>,
    /// Hand surface points per cloud in the training loss.
    pub hand_points: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 60,
            batch_size: 32,
            step_size: 1e-3,
            kld_weight: 1e-3,
            seed: 0,
            latent_dim: 32,
            n_points: 512,
            feature_channels: 0,
            point_widths: vec![64, 128],
            embedding: 128,
            encoder_hidden: 128,
            decoder_widths: vec![128, 128],
            hand_points: 256,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.kld_weight >= 0.0 && self.kld_weight.is_finite()) {
            return Err(Error::invalid(format!("kld_weight must be non-negative, got {}", self.kld_weight)));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("step_size must be positive"));
        }
        let sizes = [self.batch_size, self.latent_dim, self.n_points, self.embedding, self.encoder_hidden, self.hand_points];
        if sizes.contains(&0) || self.point_widths.contains(&0) || self.decoder_widths.contains(&0) {
            return Err(Error::invalid("network sizes and batch size must be positive"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: TrainSettings = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }
}

/// Architecture recorded in checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub n_points: usize,
    pub feature_channels: usize,
    pub point_widths: Vec<usize>,
    pub embedding: usize,
    pub encoder_hidden: usize,
    pub decoder_widths: Vec<usize>,
    pub latent_dim: usize,
    pub n_joints: usize,
}

impl NetShape {
    pub fn new(settings: &TrainSettings, n_joints: usize) -> Self {
        NetShape {
            n_points: settings.n_points,
            feature_channels: settings.feature_channels,
            point_widths: settings.point_widths.clone(),
            embedding: settings.embedding,
            encoder_hidden: settings.encoder_hidden,
            decoder_widths: settings.decoder_widths.clone(),
            latent_dim: settings.latent_dim,
            n_joints,
        }
    }

    pub fn in_channels(&self) -> usize {
        6 + self.feature_channels
    }

    /// Translation, two rotation columns, joints.
    pub fn grasp_dim(&self) -> usize {
        9 + self.n_joints
    }

    /// Named parameter shapes in storage order.
    pub(crate) fn layout(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        let mut dense = |name: String, i: usize, o: usize| {
            out.push((format!("{name}.w"), (i, o)));
            out.push((format!("{name}.b"), (1, o)));
        };
        let mut width = self.in_channels();
        for (k, &w) in self.point_widths.iter().chain(std::iter::once(&self.embedding)).enumerate() {
            dense(format!("point.{k}"), width, w);
            width = w;
        }
        dense("encoder.hidden".into(), self.embedding + self.grasp_dim(), self.encoder_hidden);
        dense("encoder.mu".into(), self.encoder_hidden, self.latent_dim);
        dense("encoder.log_sigma".into(), self.encoder_hidden, self.latent_dim);
        let mut width = self.latent_dim + self.embedding;
        for (k, &w) in self.decoder_widths.iter().enumerate() {
            dense(format!("decoder.{k}"), width, w);
            width = w;
        }
        dense("decoder.head".into(), width, self.grasp_dim());
        out
    }

    fn point_layers(&self) -> usize {
        self.point_widths.len() + 1
    }
}

/// Diagonal Gaussian over the latent code.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentDistribution {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// `z = mu + sigma ⊙ noise`.
pub fn reparameterize(dist: &LatentDistribution, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != dist.mu.len() || dist.sigma.len() != dist.mu.len() {
        return Err(Error::invalid(format!(
            "noise has length {}, latent has {}",
            noise.len(),
            dist.mu.len()
        )));
    }
    Ok(dist
        .mu
        .iter()
        .zip(&dist.sigma)
        .zip(noise)
        .map(|((m, s), e)| m + s.max(MIN_SIGMA) * e)
        .collect())
}

/// `½ Σ (μ² + σ² − ln σ² − 1)`.
pub fn loss_kld(dist: &LatentDistribution) -> f64 {
    0.5 * dist
        .mu
        .iter()
        .zip(&dist.sigma)
        .map(|(m, s)| m * m + s * s - (s * s).ln() - 1.0)
        .sum::<f64>()
}

/// Chamfer distance between the full posed surface clouds of two grasps.
pub fn loss_rec(predicted: &GraspConfiguration, ground_truth: &GraspConfiguration, hand: &HandModel) -> Result<f64> {
    let p = hand_surface_points(hand, predicted)?;
    let q = hand_surface_points(hand, ground_truth)?;
    chamfer_distance(&p.points, &q.points)
}

/// Object cloud as encoder input: `n` rows of xyz, normal and the extra
/// channels. Clouds with at least `n` points are subsampled without
/// replacement, smaller ones are drawn with replacement; the choice is
/// fixed for a given cloud size.
pub fn object_input(obj: &AffordanceObject, n: usize, features: Option<&[Vec<f64>]>) -> Result<Array2<f64>> {
    let pts = &obj.surface.points;
    let normals = obj.normals();
    if pts.is_empty() || n == 0 {
        return Err(Error::invalid("object input needs points"));
    }
    let extra = features.map(|f| f.first().map_or(0, Vec::len)).unwrap_or(0);
    if let Some(f) = features {
        if f.len() != pts.len() || f.iter().any(|r| r.len() != extra) {
            return Err(Error::invalid("feature rows must match the surface points"));
        }
    }
    let mut rng = rng_from_seed(pts.len() as u64);
    let idx: Vec<usize> = if pts.len() >= n {
        let mut v = rand::seq::index::sample(&mut rng, pts.len(), n).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).map(|_| rng.random_range(0..pts.len())).collect()
    };
    let mut out = Array2::zeros((n, 6 + extra));
    for (r, &i) in idx.iter().enumerate() {
        let (p, nrm) = (pts[i], normals[i]);
        for k in 0..3 {
            out[[r, k]] = p[k];
            out[[r, 3 + k]] = nrm[k];
        }
        if let Some(f) = features {
            for (k, v) in f[i].iter().enumerate() {
                out[[r, 6 + k]] = *v;
            }
        }
    }
    Ok(out)
}

/// Rotation from two 3-vectors by Gram-Schmidt; columns are `b1, b2, b1×b2`.
pub fn rotation_from_6d(a: &[f64]) -> Matrix3<f64> {
    gram_schmidt(a).0
}

struct GsCache {
    b1: Vec3,
    b2: Vec3,
    a2: Vec3,
    n1: f64,
    n2: f64,
}

fn gram_schmidt(a: &[f64]) -> (Matrix3<f64>, GsCache) {
    let a1 = Vec3::new(a[0], a[1], a[2]);
    let a2 = Vec3::new(a[3], a[4], a[5]);
    let n1 = a1.norm().max(1e-12);
    let b1 = a1 / n1;
    let u2 = a2 - b1 * b1.dot(&a2);
    let n2 = u2.norm().max(1e-12);
    let b2 = u2 / n2;
    let b3 = b1.cross(&b2);
    (Matrix3::from_columns(&[b1, b2, b3]), GsCache { b1, b2, a2, n1, n2 })
}

/// Gradient with respect to the six inputs given `g = dL/dR`.
fn gram_schmidt_backward(c: &GsCache, g: &Matrix3<f64>) -> [f64; 6] {
    let (gb1, gb2, gb3) = (g.column(0).into_owned(), g.column(1).into_owned(), g.column(2).into_owned());
    let mut gb1 = gb1 + c.b2.cross(&gb3);
    let gb2 = gb2 + gb3.cross(&c.b1);
    let gu2 = (gb2 - c.b2 * c.b2.dot(&gb2)) / c.n2;
    let ga2 = gu2 - c.b1 * c.b1.dot(&gu2);
    gb1 -= gu2 * c.b1.dot(&c.a2) + c.a2 * c.b1.dot(&gu2);
    let ga1 = (gb1 - c.b1 * c.b1.dot(&gb1)) / c.n1;
    [ga1.x, ga1.y, ga1.z, ga2.x, ga2.y, ga2.z]
}

/// Grasp as the network sees it: translation, first two rotation columns,
/// joint angles.
pub fn grasp_vector(config: &GraspConfiguration) -> Vec<f64> {
    let r = config.rotation.to_rotation_matrix();
    let m = r.matrix();
    let mut v = vec![config.translation.x, config.translation.y, config.translation.z];
    v.extend([m[(0, 0)], m[(1, 0)], m[(2, 0)], m[(0, 1)], m[(1, 1)], m[(2, 1)]]);
    v.extend(&config.joint_angles);
    v
}

/// Decoder output row to a configuration within the hand's limits.
fn config_from_output(hand: &HandModel, out: &[f64]) -> GraspConfiguration {
    let r = rotation_from_6d(&out[3..9]);
    GraspConfiguration {
        translation: Vec3::new(out[0], out[1], out[2]),
        rotation: UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r)),
        joint_angles: hand
            .joints
            .iter()
            .zip(&out[9..])
            .map(|(j, a)| a.clamp(j.lower, j.upper))
            .collect(),
    }
}

/// Per-epoch means of the two training losses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingCurves {
    pub loss_rec: Vec<f64>,
    pub loss_kld: Vec<f64>,
}

impl TrainingCurves {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,loss_rec,loss_kld")?;
        for (e, (r, k)) in self.loss_rec.iter().zip(&self.loss_kld).enumerate() {
            writeln!(w, "{e},{r:e},{k:e}")?;
        }
        Ok(())
    }
}

/// Trained or freshly initialized network for one hand.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspCvae {
    pub shape: NetShape,
    pub hand_id: String,
    /// Hand surface point indices used by the training loss.
    pub hand_subsample: Vec<usize>,
    pub(crate) params: Vec<Mat>,
}

/// One training example prepared for the tape.
struct Example {
    cloud: usize,
    grasp: Vec<f64>,
    target: Vec<Vec3>,
}

struct Forward {
    loss: Var,
    rec: f64,
    kld: f64,
    params: Vec<Var>,
}

impl GraspCvae {
    /// Random weights (He-normal, zero biases). The encoder heads start at
    /// zero, so every input maps to `μ = 0, σ = 1`; the decoder head bias
    /// decodes to the identity rotation.
    pub fn new(hand: &HandModel, settings: &TrainSettings) -> Result<Self> {
        settings.validate()?;
        let shape = NetShape::new(settings, hand.n_joints());
        let mut rng = rng_from_seed(derive_seed(settings.seed, 0));
        let mut params = Vec::new();
        for (name, (r, c)) in shape.layout() {
            let zero_head = name.starts_with("encoder.mu") || name.starts_with("encoder.log_sigma");
            let m = if name.ends_with(".b") || zero_head {
                Mat::zeros((r, c))
            } else {
                let std = if name.starts_with("decoder.head") { 0.01 } else { (2.0 / r as f64).sqrt() };
                Mat::from_shape_simple_fn((r, c), || std * rng.sample::<f64, _>(StandardNormal))
            };
            params.push(m);
        }
        let total = hand.total_surface_points();
        let mut sub_rng = rng_from_seed(derive_seed(settings.seed, 1));
        let mut hand_subsample = rand::seq::index::sample(&mut sub_rng, total, settings.hand_points.min(total)).into_vec();
        hand_subsample.sort_unstable();
        let mut net = GraspCvae {
            shape,
            hand_id: hand.name.clone(),
            hand_subsample,
            params,
        };
        net.round_to_f32();
        let head = net.params.len() - 1;
        net.params[head][[0, 3]] = 1.0;
        net.params[head][[0, 7]] = 1.0;
        Ok(net)
    }

    fn round_to_f32(&mut self) {
        for p in &mut self.params {
            p.mapv_inplace(|v| v as f32 as f64);
        }
    }

    pub fn check_hand(&self, hand: &HandModel) -> Result<()> {
        if hand.name != self.hand_id || hand.n_joints() != self.shape.n_joints {
            return Err(Error::invalid(format!(
                "model is for hand {:?} with {} joints, got {:?} with {}",
                self.hand_id,
                self.shape.n_joints,
                hand.name,
                hand.n_joints()
            )));
        }
        if self.hand_subsample.iter().any(|&i| i >= hand.total_surface_points()) {
            return Err(Error::invalid("hand subsample indices exceed the hand's surface points"));
        }
        Ok(())
    }

    fn check_input(&self, input: &Array2<f64>) -> Result<()> {
        if input.ncols() != self.shape.in_channels() || input.nrows() == 0 {
            return Err(Error::invalid(format!(
                "object input is {}×{}, the model expects rows of {} channels",
                input.nrows(),
                input.ncols(),
                self.shape.in_channels()
            )));
        }
        Ok(())
    }

    fn leaves(&self, t: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| t.leaf(p.clone())).collect()
    }

    fn dense(t: &mut Tape, p: &[Var], layer: usize, x: Var, relu: bool) -> Var {
        let h = t.matmul(x, p[2 * layer]);
        let h = t.add_row(h, p[2 * layer + 1]);
        if relu {
            t.relu(h)
        } else {
            h
        }
    }

    fn embed_var(&self, t: &mut Tape, p: &[Var], input: &Array2<f64>) -> Var {
        let mut h = t.leaf(input.clone());
        for k in 0..self.shape.point_layers() {
            h = Self::dense(t, p, k, h, true);
        }
        t.max_rows(h)
    }

    fn layer_base(&self) -> (usize, usize) {
        let enc = self.shape.point_layers();
        let dec = enc + 3;
        (enc, dec)
    }

    fn encode_var(&self, t: &mut Tape, p: &[Var], emb: Var, grasp: Var) -> (Var, Var) {
        let (enc, _) = self.layer_base();
        let x = t.concat_cols(emb, grasp);
        let h = Self::dense(t, p, enc, x, true);
        let mu = Self::dense(t, p, enc + 1, h, false);
        let ls = Self::dense(t, p, enc + 2, h, false);
        (mu, ls)
    }

    fn decode_var(&self, t: &mut Tape, p: &[Var], z: Var, emb: Var) -> Var {
        let (_, dec) = self.layer_base();
        let mut h = t.concat_cols(z, emb);
        for k in 0..self.shape.decoder_widths.len() {
            h = Self::dense(t, p, dec + k, h, true);
        }
        Self::dense(t, p, dec + self.shape.decoder_widths.len(), h, false)
    }

    /// Pooled embedding of an object input.
    pub fn object_embedding(&self, input: &Array2<f64>) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut t = Tape::new();
        let p = self.leaves(&mut t);
        let e = self.embed_var(&mut t, &p, input);
        Ok(t.value(e).iter().copied().collect())
    }

    pub fn encode(&self, input: &Array2<f64>, grasp: &GraspConfiguration) -> Result<LatentDistribution> {
        self.check_input(input)?;
        let g = grasp_vector(grasp);
        if g.len() != self.shape.grasp_dim() {
            return Err(Error::invalid(format!("grasp has {} joints, model expects {}", grasp.joint_angles.len(), self.shape.n_joints)));
        }
        let mut t = Tape::new();
        let p = self.leaves(&mut t);
        let e = self.embed_var(&mut t, &p, input);
        let gv = t.leaf(Array2::from_shape_vec((1, g.len()), g).expect("row vector"));
        let (mu, ls) = self.encode_var(&mut t, &p, e, gv);
        Ok(LatentDistribution {
            mu: t.value(mu).iter().copied().collect(),
            sigma: t.value(ls).iter().map(|l| l.exp().max(MIN_SIGMA)).collect(),
        })
    }

    pub fn decode(&self, hand: &HandModel, z: &[f64], embedding: &[f64]) -> Result<GraspConfiguration> {
        self.check_hand(hand)?;
        if z.len() != self.shape.latent_dim || embedding.len() != self.shape.embedding {
            return Err(Error::invalid("latent or embedding length does not match the model"));
        }
        let mut t = Tape::new();
        let p = self.leaves(&mut t);
        let zv = t.leaf(Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row vector"));
        let ev = t.leaf(Array2::from_shape_vec((1, embedding.len()), embedding.to_vec()).expect("row vector"));
        let out = self.decode_var(&mut t, &p, zv, ev);
        Ok(config_from_output(hand, t.value(out).as_slice().expect("contiguous")))
    }

    /// `n` decodes of standard-normal latents conditioned on `obj`. Latent
    /// `i` is drawn from seed `derive_seed(seed, i)`.
    pub fn sample(&self, hand: &HandModel, obj: &AffordanceObject, n: usize, seed: u64) -> Result<Vec<GraspConfiguration>> {
        self.check_hand(hand)?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let input = object_input(obj, self.shape.n_points, None)?;
        let emb = self.object_embedding(&input)?;
        (0..n)
            .map(|i| {
                let mut rng = rng_from_seed(derive_seed(seed, i as u64));
                let z: Vec<f64> = (0..self.shape.latent_dim).map(|_| rng.sample(StandardNormal)).collect();
                self.decode(hand, &z, &emb)
            })
            .collect()
    }

    /// Builds the batch loss `mean loss_rec + β mean loss_kld` on a tape.
    fn forward(
        &self,
        t: &mut Tape,
        hand: &HandModel,
        clouds: &[Array2<f64>],
        batch: &[&Example],
        noise: &Array2<f64>,
        beta: f64,
    ) -> Result<Forward> {
        let p = self.leaves(t);
        let mut used: BTreeMap<usize, usize> = BTreeMap::new();
        for ex in batch {
            let next = used.len();
            used.entry(ex.cloud).or_insert(next);
        }
        let mut order: Vec<(usize, usize)> = used.iter().map(|(c, r)| (*r, *c)).collect();
        order.sort_unstable();
        let embs: Vec<Var> = order.iter().map(|(_, c)| self.embed_var(t, &p, &clouds[*c])).collect();
        let table = t.concat_rows(&embs);
        let rows: Vec<usize> = batch.iter().map(|ex| used[&ex.cloud]).collect();
        let emb = t.gather(table, &rows);

        let b = batch.len();
        let gdim = self.shape.grasp_dim();
        let mut g = Array2::zeros((b, gdim));
        for (i, ex) in batch.iter().enumerate() {
            g.row_mut(i).assign(&ndarray::ArrayView1::from(&ex.grasp[..]));
        }
        let gv = t.leaf(g);
        let (mu, ls) = self.encode_var(t, &p, emb, gv);
        let (z, kld) = latent_ops(t, mu, ls, noise.clone());
        let out = self.decode_var(t, &p, z, emb);
        let targets: Vec<Vec<Vec3>> = batch.iter().map(|ex| ex.target.clone()).collect();
        let rec = hand_loss_op(t, hand, &self.hand_subsample, out, targets)?;
        let (rec_v, kld_v) = (t.value(rec)[[0, 0]], t.value(kld)[[0, 0]]);
        let loss = t.axpy(rec, kld, beta);
        Ok(Forward {
            loss,
            rec: rec_v,
            kld: kld_v,
            params: p,
        })
    }
}

/// Reparameterization and mean KL over a batch.
fn latent_ops(t: &mut Tape, mu: Var, ls: Var, noise: Array2<f64>) -> (Var, Var) {
    let min_ls = MIN_SIGMA.ln();
    let ls_val = t.value(ls).mapv(|l| l.max(min_ls));
    let sigma = ls_val.mapv(f64::exp);
    let active = t.value(ls).mapv(|l| if l > min_ls { 1.0 } else { 0.0 });
    let z_val = t.value(mu) + &(&sigma * &noise);
    let ds = &sigma * &noise * &active;
    let z = t.custom(
        &[mu, ls],
        z_val,
        Box::new(move |g| vec![g.clone(), g * &ds]),
    );
    let b = t.value(mu).nrows() as f64;
    let mu_val = t.value(mu).clone();
    let kld_val = 0.5 * (&mu_val.mapv(|m| m * m) + &sigma.mapv(|s| s * s) - &(&ls_val * 2.0) - 1.0).sum() / b;
    let dls = (sigma.mapv(|s| s * s) - 1.0) * &active / b;
    let dmu = mu_val / b;
    let kld = t.custom(
        &[mu, ls],
        Array2::from_elem((1, 1), kld_val),
        Box::new(move |g| {
            let k = g[[0, 0]];
            vec![&dmu * k, &dls * k]
        }),
    );
    (z, kld)
}

/// Mean Chamfer distance between predicted and target hand subsamples,
/// differentiated through the rotation head, joint clamps and forward
/// kinematics.
fn hand_loss_op(t: &mut Tape, hand: &HandModel, subsample: &[usize], out: Var, targets: Vec<Vec<Vec3>>) -> Result<Var> {
    let owners = surface_owners(hand);
    let local = surface_locals(hand);
    let raw = t.value(out).clone();
    let b = raw.nrows();
    let mut total = 0.0;
    let mut grad = Array2::zeros(raw.raw_dim());
    for r in 0..b {
        let row: Vec<f64> = raw.row(r).to_vec();
        let (rot, cache) = gram_schmidt(&row[3..9]);
        let config = config_from_output(hand, &row);
        let pose = forward_kinematics(hand, &config)?;
        let pts: Vec<Vec3> = subsample.iter().map(|&i| pose.point(owners[i], &local[i])).collect();
        let (cd, gp) = chamfer_with_gradient(&pts, &targets[r])?;
        total += cd;
        let mut tangent = vec![0.0; 6 + hand.n_joints()];
        let mut g_r = Matrix3::zeros();
        for ((&i, p), g) in subsample.iter().zip(&pts).zip(&gp) {
            pose.accumulate(hand, owners[i], p, g, &mut tangent);
            let x = rot.transpose() * (p - config.translation);
            g_r += g * x.transpose();
        }
        let g6 = gram_schmidt_backward(&cache, &g_r);
        let mut gr = grad.row_mut(r);
        for k in 0..3 {
            gr[k] = tangent[k];
        }
        for k in 0..6 {
            gr[3 + k] = g6[k];
        }
        for (j, joint) in hand.joints.iter().enumerate() {
            let a = row[9 + j];
            gr[9 + j] = if a > joint.lower && a < joint.upper { tangent[6 + j] } else { 0.0 };
        }
    }
    let bf = b as f64;
    grad /= bf;
    Ok(t.custom(
        &[out],
        Array2::from_elem((1, 1), total / bf),
        Box::new(move |g| vec![&grad * g[[0, 0]]]),
    ))
}

fn surface_owners(hand: &HandModel) -> Vec<usize> {
    hand.links
        .iter()
        .enumerate()
        .flat_map(|(i, l)| std::iter::repeat_n(i, l.surface_points.len()))
        .collect()
}

fn surface_locals(hand: &HandModel) -> Vec<Vec3> {
    hand.links.iter().flat_map(|l| l.surface_points.iter().copied()).collect()
}

fn subsample_points(hand: &HandModel, subsample: &[usize], config: &GraspConfiguration) -> Result<Vec<Vec3>> {
    let owners = surface_owners(hand);
    let local = surface_locals(hand);
    let pose = forward_kinematics(hand, config)?;
    Ok(subsample.iter().map(|&i| pose.point(owners[i], &local[i])).collect())
}

/// Training data: records plus the objects they refer to, at native scale.
pub struct TrainingSet<'a> {
    pub records: &'a [GraspRecord],
    pub objects: &'a [AffordanceObject],
}

struct Prepared {
    clouds: Vec<Array2<f64>>,
    examples: Vec<Example>,
}

fn prepare(net: &GraspCvae, hand: &HandModel, data: &TrainingSet) -> Result<Prepared> {
    if data.records.is_empty() {
        return Err(Error::invalid("training needs at least one record"));
    }
    let mut clouds = Vec::new();
    let mut keys: BTreeMap<(String, u64), usize> = BTreeMap::new();
    let mut examples = Vec::with_capacity(data.records.len());
    for rec in data.records {
        if rec.hand_id != hand.name {
            return Err(Error::invalid(format!(
                "record for hand {:?} in a dataset for {:?}",
                rec.hand_id, hand.name
            )));
        }
        hand.check_config(&rec.config)?;
        let key = (rec.object_id.clone(), rec.scale.to_bits());
        let cloud = match keys.get(&key) {
            Some(c) => *c,
            None => {
                let obj = data
                    .objects
                    .iter()
                    .find(|o| o.id == rec.object_id)
                    .ok_or_else(|| Error::invalid(format!("no object {:?} for a training record", rec.object_id)))?;
                let scaled = obj.rescaled(rec.scale)?;
                clouds.push(object_input(&scaled, net.shape.n_points, None)?);
                keys.insert(key, clouds.len() - 1);
                clouds.len() - 1
            }
        };
        examples.push(Example {
            cloud,
            grasp: grasp_vector(&rec.config),
            target: subsample_points(hand, &net.hand_subsample, &rec.config)?,
        });
    }
    Ok(Prepared { clouds, examples })
}

/// Start the decoder head at the mean training grasp.
fn init_head_bias(net: &mut GraspCvae, examples: &[Example]) {
    let head = net.params.len() - 1;
    let n = examples.len() as f64;
    for k in 0..net.shape.grasp_dim() {
        let mean = examples.iter().map(|e| e.grasp[k]).sum::<f64>() / n;
        net.params[head][[0, k]] = mean as f32 as f64;
    }
}

struct Adam {
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl Adam {
    fn new(params: &[Mat]) -> Self {
        Adam {
            m: params.iter().map(|p| Mat::zeros(p.raw_dim())).collect(),
            v: params.iter().map(|p| Mat::zeros(p.raw_dim())).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [Mat], grads: &[Mat], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = B1 * *m + (1.0 - B1) * g;
                *v = B2 * *v + (1.0 - B2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + 1e-8);
            });
        }
    }
}

/// Train a fresh model. Single-threaded and deterministic for a fixed seed.
pub fn train(hand: &HandModel, data: &TrainingSet, settings: &TrainSettings) -> Result<(GraspCvae, TrainingCurves)> {
    let mut net = GraspCvae::new(hand, settings)?;
    let prep = prepare(&net, hand, data)?;
    init_head_bias(&mut net, &prep.examples);
    let mut adam = Adam::new(&net.params);
    let mut rng: ChaCha8Rng = rng_from_seed(derive_seed(settings.seed, 2));
    let mut order: Vec<usize> = (0..prep.examples.len()).collect();
    let mut curves = TrainingCurves::default();
    for epoch in 0..settings.epochs {
        order.shuffle(&mut rng);
        let (mut rec_sum, mut kld_sum) = (0.0, 0.0);
        for chunk in order.chunks(settings.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &prep.examples[i]).collect();
            let noise = Array2::from_shape_simple_fn((batch.len(), net.shape.latent_dim), || rng.sample(StandardNormal));
            let mut t = Tape::new();
            let f = net.forward(&mut t, hand, &prep.clouds, &batch, &noise, settings.kld_weight)?;
            if !(f.rec.is_finite() && f.kld.is_finite()) {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            rec_sum += f.rec * batch.len() as f64;
            kld_sum += f.kld * batch.len() as f64;
            let grads = t.backward(f.loss);
            let g: Vec<Mat> = f
                .params
                .iter()
                .zip(&net.params)
                .map(|(v, p)| grads[v.0].clone().unwrap_or_else(|| Mat::zeros(p.raw_dim())))
                .collect();
            adam.step(&mut net.params, &g, settings.step_size);
        }
        let n = prep.examples.len() as f64;
        curves.loss_rec.push(rec_sum / n);
        curves.loss_kld.push(kld_sum / n);
        log::debug!("epoch {epoch}: loss_rec {:.3e} loss_kld {:.3e}", rec_sum / n, kld_sum / n);
    }
    net.round_to_f32();
    Ok((net, curves))
}

/// Loss and parameter gradients on a fixed batch; used to check the tape.
#[cfg(test)]
pub(crate) fn batch_loss_and_grads(
    net: &GraspCvae,
    hand: &HandModel,
    data: &TrainingSet,
    noise: &Array2<f64>,
    beta: f64,
) -> Result<(f64, f64, f64, Vec<Mat>)> {
    let prep = prepare(net, hand, data)?;
    let batch: Vec<&Example> = prep.examples.iter().collect();
    let mut t = Tape::new();
    let f = net.forward(&mut t, hand, &prep.clouds, &batch, noise, beta)?;
    let grads = t.backward(f.loss);
    let g = f
        .params
        .iter()
        .zip(&net.params)
        .map(|(v, p)| grads[v.0].clone().unwrap_or_else(|| Mat::zeros(p.raw_dim())))
        .collect();
    Ok((t.value(f.loss)[[0, 0]], f.rec, f.kld, g))
}
