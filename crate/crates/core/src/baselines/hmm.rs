//! Left-to-right HMM with GMM emissions, trained by Baum-Welch in
//! log-space.
//!
//! State 0 is a non-emitting entry and the last state a non-emitting
//! exit; they are folded into the forward recursion as the entry
//! distribution and the exit transition column. Emitting states carry
//! diagonal-covariance Gaussian mixtures.

use std::path::Path;

use crate::audio::Label;
use crate::error::{Error, Result};
use crate::features::MfccSequence;
use crate::nn::tensor::Tensor;
use crate::rng::SeededRng;
use crate::storage::{self, record_kind, Container, Record, RecordTensor};

pub const HMM_STATES: usize = 10;
pub const GMM_COMPONENTS: usize = 3;
pub const VARIANCE_FLOOR: f64 = 1e-4;
pub const BW_MAX_ITERS: usize = 50;
pub const BW_TOL: f64 = 1e-4;

/// Diagonal-covariance Gaussian mixture attached to one emitting state.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmState {
    pub weights: Vec<f64>,
    /// K rows of dim-length means.
    pub means: Vec<Vec<f64>>,
    /// K rows of dim-length diagonal variances, floored.
    pub vars: Vec<Vec<f64>>,
}

impl GmmState {
    fn unit(k: usize, dim: usize) -> Self {
        GmmState {
            weights: vec![1.0 / k as f64; k],
            means: vec![vec![0.0; dim]; k],
            vars: vec![vec![1.0; dim]; k],
        }
    }

    /// Per-component joint log-density: log weight + log normal.
    fn log_components(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.vars))
            .map(|(w, (mean, var))| {
                if *w <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let mut log_density = 0.0;
                for d in 0..x.len() {
                    let diff = x[d] - mean[d];
                    log_density +=
                        -0.5 * ((2.0 * std::f64::consts::PI * var[d]).ln() + diff * diff / var[d]);
                }
                w.ln() + log_density
            })
            .collect()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        lse(&self.log_components(x))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmmModel {
    /// Row-stochastic (n_states x n_states); row = source state.
    pub transitions: Tensor,
    /// One GMM per emitting state; index s is state s+1.
    pub states: Vec<GmmState>,
    pub dim: usize,
}

impl HmmModel {
    pub fn n_states(&self) -> usize {
        self.transitions.shape()[0]
    }

    pub fn n_emitting(&self) -> usize {
        self.states.len()
    }

    /// Left-to-right chain: the entry state advances or skips one, every
    /// emitting state may loop, advance, or skip one, and the final state
    /// absorbs. Allowed transitions start uniform; emissions start as unit
    /// Gaussians.
    pub fn left_to_right(n_states: usize, k: usize, dim: usize) -> Self {
        assert!(n_states >= 3, "need entry, one emitting state, and exit");
        let exit = n_states - 1;
        let mut transitions = Tensor::zeros(&[n_states, n_states]);
        for i in 0..n_states {
            let targets: Vec<usize> = if i == exit {
                vec![exit]
            } else if i == 0 {
                // The entry may advance or skip, but never bypass every
                // emitting state: a model must emit at least one frame.
                let mut t = vec![1];
                if 2 < exit {
                    t.push(2);
                }
                t
            } else {
                let mut t = vec![i, (i + 1).min(exit)];
                if i + 2 <= exit {
                    t.push(i + 2);
                }
                t
            };
            let p = 1.0 / targets.len() as f64;
            for j in targets {
                transitions.data_mut()[i * n_states + j] = p;
            }
        }
        HmmModel {
            transitions,
            states: vec![GmmState::unit(k, dim); n_states - 2],
            dim,
        }
    }

    /// Minimum number of frames a sequence needs before the exit state is
    /// reachable, found by shortest path over the non-self transitions
    /// (each emitting state entered costs one frame).
    pub fn min_frames(&self) -> usize {
        let n = self.n_states();
        let exit = n - 1;
        let mut dist = vec![usize::MAX; n];
        dist[0] = 0;
        for i in 0..n {
            if dist[i] == usize::MAX {
                continue;
            }
            for j in i + 1..n {
                if self.transitions.at2(i, j) > 0.0 {
                    let cost = if j == exit { 0 } else { 1 };
                    dist[j] = dist[j].min(dist[i] + cost);
                }
            }
        }
        dist[exit]
    }

    /// Forward-algorithm log-likelihood of a frame sequence, in log-space
    /// throughout. Sequences that cannot reach the exit yield -inf.
    pub fn log_likelihood_frames(&self, frames: &[Vec<f64>]) -> f64 {
        assert!(!frames.is_empty(), "need at least one frame");
        let (alpha, _) = self.forward(frames);
        let n = self.n_states();
        let exit = n - 1;
        let last = &alpha[frames.len() - 1];
        let terms: Vec<f64> = (0..self.n_emitting())
            .map(|s| last[s] + ln(self.transitions.at2(s + 1, exit)))
            .collect();
        lse(&terms)
    }

    pub fn log_likelihood(&self, seq: &MfccSequence) -> f64 {
        self.log_likelihood_frames(&sequence_frames(seq))
    }

    /// Log-space alpha lattice over emitting states plus cached emission
    /// log-densities.
    fn forward(&self, frames: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let s_n = self.n_emitting();
        let log_b: Vec<Vec<f64>> = frames
            .iter()
            .map(|x| {
                assert_eq!(x.len(), self.dim, "frame dimension");
                (0..s_n).map(|s| self.states[s].log_density(x)).collect()
            })
            .collect();
        let mut alpha = vec![vec![f64::NEG_INFINITY; s_n]; frames.len()];
        for s in 0..s_n {
            alpha[0][s] = ln(self.transitions.at2(0, s + 1)) + log_b[0][s];
        }
        let mut terms = vec![0.0; s_n];
        for t in 1..frames.len() {
            for j in 0..s_n {
                for (i, term) in terms.iter_mut().enumerate() {
                    *term = alpha[t - 1][i] + ln(self.transitions.at2(i + 1, j + 1));
                }
                alpha[t][j] = lse(&terms) + log_b[t][j];
            }
        }
        (alpha, log_b)
    }

    /// Log-space beta lattice; beta[T-1] is the exit transition.
    fn backward(&self, log_b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let s_n = self.n_emitting();
        let exit = self.n_states() - 1;
        let t_n = log_b.len();
        let mut beta = vec![vec![f64::NEG_INFINITY; s_n]; t_n];
        for s in 0..s_n {
            beta[t_n - 1][s] = ln(self.transitions.at2(s + 1, exit));
        }
        let mut terms = vec![0.0; s_n];
        for t in (0..t_n - 1).rev() {
            for i in 0..s_n {
                for (j, term) in terms.iter_mut().enumerate() {
                    *term = ln(self.transitions.at2(i + 1, j + 1))
                        + log_b[t + 1][j]
                        + beta[t + 1][j];
                }
                beta[t][i] = lse(&terms);
            }
        }
        beta
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.n_states() as u32;
        let mut records = vec![Record {
            kind: record_kind::HMM_TRANSITIONS,
            tensors: vec![RecordTensor::from_f64(
                vec![n, n],
                self.transitions.data(),
            )],
        }];
        for state in &self.states {
            let k = state.weights.len() as u32;
            let d = self.dim as u32;
            let flat = |rows: &[Vec<f64>]| -> Vec<f64> {
                rows.iter().flatten().copied().collect()
            };
            records.push(Record {
                kind: record_kind::HMM_GMM_STATE,
                tensors: vec![
                    RecordTensor::from_f64(vec![k], &state.weights),
                    RecordTensor::from_f64(vec![k, d], &flat(&state.means)),
                    RecordTensor::from_f64(vec![k, d], &flat(&state.vars)),
                ],
            });
        }
        storage::write_container(path, &Container::bare(records))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let container = storage::read_container(path)?;
        let bad = |what: &str| Error::MalformedHeader(format!("{}: {what}", path.display()));
        let first = container.records.first().ok_or_else(|| bad("no records"))?;
        if first.kind != record_kind::HMM_TRANSITIONS {
            return Err(bad("expected transition record first"));
        }
        let trans = &first.tensors[0];
        let n = trans.dims[0] as usize;
        let transitions = Tensor::from_vec(&[n, n], trans.values_f64())?;
        let mut states = Vec::new();
        let mut dim = 0;
        for record in &container.records[1..] {
            if record.kind != record_kind::HMM_GMM_STATE {
                return Err(bad("expected emission record"));
            }
            let weights = record.tensors[0].values_f64();
            let k = weights.len();
            dim = record.tensors[1].dims[1] as usize;
            let unflatten = |rt: &RecordTensor| -> Vec<Vec<f64>> {
                rt.values_f64().chunks(dim).map(|c| c.to_vec()).collect()
            };
            states.push(GmmState {
                weights,
                means: unflatten(&record.tensors[1]),
                vars: unflatten(&record.tensors[2]),
            });
            if states.last().unwrap().means.len() != k {
                return Err(bad("mixture size mismatch"));
            }
        }
        if states.len() != n - 2 {
            return Err(bad("emitting state count mismatch"));
        }
        Ok(HmmModel {
            transitions,
            states,
            dim,
        })
    }
}

/// Untrained 10-state model for 13-dim features: uniform left-to-right
/// transitions, unit Gaussians with a small seeded jitter on the means so
/// the mixture components are distinguishable.
pub fn hmm_init(seed: u64) -> HmmModel {
    let mut model = HmmModel::left_to_right(HMM_STATES, GMM_COMPONENTS, 13);
    let mut rng = SeededRng::new(seed);
    for state in &mut model.states {
        for mean in &mut state.means {
            for m in mean {
                *m += 0.01 * rng.normal();
            }
        }
    }
    model
}

pub fn sequence_frames(seq: &MfccSequence) -> Vec<Vec<f64>> {
    (0..seq.n_frames()).map(|t| seq.frame(t).to_vec()).collect()
}

/// Replaces the emission mixtures with a data-driven starting point:
/// frames are assigned to emitting states by uniform temporal
/// segmentation of each sequence, then each state's pool is clustered
/// with seeded k-means.
pub fn seed_emissions(
    model: &mut HmmModel,
    sequences: &[Vec<Vec<f64>>],
    seed: u64,
) -> Result<()> {
    if sequences.is_empty() {
        return Err(Error::EmptyData);
    }
    let first = &sequences[0][0];
    let all_same = sequences
        .iter()
        .flatten()
        .all(|f| f == first);
    if all_same {
        return Err(Error::DegenerateData(
            "all training frames are identical".into(),
        ));
    }
    let s_n = model.n_emitting();
    let mut pools: Vec<Vec<&[f64]>> = vec![Vec::new(); s_n];
    for seq in sequences {
        let t_n = seq.len();
        for (t, frame) in seq.iter().enumerate() {
            let s = (t * s_n / t_n).min(s_n - 1);
            pools[s].push(frame);
        }
    }
    let mut rng = SeededRng::new(seed);
    for (state, pool) in model.states.iter_mut().zip(&pools) {
        if pool.is_empty() {
            continue;
        }
        let k = state.weights.len();
        *state = kmeans_gmm(pool, k, model.dim, &mut rng);
    }
    Ok(())
}

/// 10-iteration k-means turned into a mixture: cluster weights from
/// occupancy, diagonal variances from within-cluster spread.
fn kmeans_gmm(pool: &[&[f64]], k: usize, dim: usize, rng: &mut SeededRng) -> GmmState {
    let n = pool.len();
    let mut centers: Vec<Vec<f64>> = (0..k).map(|_| pool[rng.index(n)].to_vec()).collect();
    let mut assign = vec![0usize; n];
    for _ in 0..10 {
        for (i, frame) in pool.iter().enumerate() {
            let mut best = (f64::INFINITY, 0usize);
            for (c, center) in centers.iter().enumerate() {
                let d2: f64 = frame
                    .iter()
                    .zip(center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d2 < best.0 {
                    best = (d2, c);
                }
            }
            assign[i] = best.1;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&&[f64]> =
                pool.iter().zip(&assign).filter(|(_, a)| **a == c).map(|(f, _)| f).collect();
            if members.is_empty() {
                *center = pool[rng.index(n)].to_vec();
                continue;
            }
            for d in 0..dim {
                center[d] =
                    members.iter().map(|f| f[d]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    // Pooled variance as the fallback for empty or singleton clusters.
    let pool_mean: Vec<f64> = (0..dim)
        .map(|d| pool.iter().map(|f| f[d]).sum::<f64>() / n as f64)
        .collect();
    let pool_var: Vec<f64> = (0..dim)
        .map(|d| {
            (pool.iter().map(|f| (f[d] - pool_mean[d]).powi(2)).sum::<f64>() / n as f64)
                .max(VARIANCE_FLOOR)
        })
        .collect();
    let mut weights = Vec::with_capacity(k);
    let mut vars = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<&&[f64]> =
            pool.iter().zip(&assign).filter(|(_, a)| **a == c).map(|(f, _)| f).collect();
        // Weight floor keeps every component alive for EM.
        weights.push((members.len() as f64 / n as f64).max(1e-3));
        if members.len() < 2 {
            vars.push(pool_var.clone());
        } else {
            vars.push(
                (0..dim)
                    .map(|d| {
                        let m = members.iter().map(|f| f[d]).sum::<f64>()
                            / members.len() as f64;
                        (members.iter().map(|f| (f[d] - m).powi(2)).sum::<f64>()
                            / members.len() as f64)
                            .max(VARIANCE_FLOOR)
                    })
                    .collect(),
            );
        }
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    GmmState {
        weights,
        means: centers,
        vars,
    }
}

/// Baum-Welch EM from the model's current parameters. Returns the
/// re-estimated model and the per-iteration total log-likelihood trace
/// (each entry evaluated before that iteration's update).
pub fn hmm_baum_welch(
    model: &HmmModel,
    sequences: &[Vec<Vec<f64>>],
    max_iters: usize,
    tol: f64,
) -> Result<(HmmModel, Vec<f64>)> {
    if sequences.is_empty() {
        return Err(Error::EmptyData);
    }
    let min = model.min_frames();
    for seq in sequences {
        if seq.len() < min {
            return Err(Error::SequenceTooShort {
                got: seq.len(),
                min,
            });
        }
    }
    let mut model = model.clone();
    let mut trace = Vec::new();
    for _ in 0..max_iters {
        let (ll, next) = bw_iteration(&model, sequences)?;
        if !ll.is_finite() {
            return Err(Error::NonFinite("hmm training log-likelihood".into()));
        }
        if let Some(&prev) = trace.last() {
            trace.push(ll);
            if ll - prev < tol * prev.abs().max(1e-12) {
                break;
            }
        } else {
            trace.push(ll);
        }
        model = next;
    }
    Ok((model, trace))
}

/// One E+M step. Returns the total log-likelihood under the input model
/// and the re-estimated model.
fn bw_iteration(model: &HmmModel, sequences: &[Vec<Vec<f64>>]) -> Result<(f64, HmmModel)> {
    let s_n = model.n_emitting();
    let n = model.n_states();
    let exit = n - 1;
    let k_n = model.states[0].weights.len();
    let dim = model.dim;

    let mut entry_num = vec![0.0; s_n];
    let mut trans_num = vec![vec![0.0; s_n]; s_n];
    let mut exit_num = vec![0.0; s_n];
    let mut resp_sum = vec![vec![0.0; k_n]; s_n];
    let mut mean_sum = vec![vec![vec![0.0; dim]; k_n]; s_n];
    let mut sq_sum = vec![vec![vec![0.0; dim]; k_n]; s_n];
    let mut total_ll = 0.0;

    for seq in sequences {
        let t_n = seq.len();
        let (alpha, log_b) = model.forward(seq);
        let beta = model.backward(&log_b);
        let ll = {
            let terms: Vec<f64> = (0..s_n)
                .map(|s| alpha[t_n - 1][s] + ln(model.transitions.at2(s + 1, exit)))
                .collect();
            lse(&terms)
        };
        if !ll.is_finite() {
            return Err(Error::NonFinite("hmm forward pass".into()));
        }
        total_ll += ll;

        for t in 0..t_n {
            for s in 0..s_n {
                let log_gamma = alpha[t][s] + beta[t][s] - ll;
                if log_gamma == f64::NEG_INFINITY {
                    continue;
                }
                let gamma = log_gamma.exp();
                if t == 0 {
                    entry_num[s] += gamma;
                }
                // Split occupancy across mixture components.
                let comps = model.states[s].log_components(&seq[t]);
                let comp_lse = lse(&comps);
                for k in 0..k_n {
                    if comps[k] == f64::NEG_INFINITY {
                        continue;
                    }
                    let r = gamma * (comps[k] - comp_lse).exp();
                    resp_sum[s][k] += r;
                    for d in 0..dim {
                        mean_sum[s][k][d] += r * seq[t][d];
                        sq_sum[s][k][d] += r * seq[t][d] * seq[t][d];
                    }
                }
            }
        }
        for t in 0..t_n - 1 {
            for i in 0..s_n {
                if alpha[t][i] == f64::NEG_INFINITY {
                    continue;
                }
                for j in 0..s_n {
                    let log_a = ln(model.transitions.at2(i + 1, j + 1));
                    if log_a == f64::NEG_INFINITY {
                        continue;
                    }
                    let log_xi = alpha[t][i] + log_a + log_b[t + 1][j] + beta[t + 1][j] - ll;
                    trans_num[i][j] += log_xi.exp();
                }
            }
        }
        for i in 0..s_n {
            let log_exit =
                alpha[t_n - 1][i] + ln(model.transitions.at2(i + 1, exit)) - ll;
            if log_exit > f64::NEG_INFINITY {
                exit_num[i] += log_exit.exp();
            }
        }
    }

    let mut next = model.clone();
    let entry_total: f64 = entry_num.iter().sum();
    if entry_total > 0.0 {
        for j in 0..n {
            next.transitions.data_mut()[j] = 0.0;
        }
        for s in 0..s_n {
            next.transitions.data_mut()[s + 1] = entry_num[s] / entry_total;
        }
    }
    for i in 0..s_n {
        let row_total: f64 = trans_num[i].iter().sum::<f64>() + exit_num[i];
        if row_total <= 0.0 {
            continue;
        }
        let row = &mut next.transitions.data_mut()[(i + 1) * n..(i + 2) * n];
        row.fill(0.0);
        for j in 0..s_n {
            row[j + 1] = trans_num[i][j] / row_total;
        }
        row[exit] = exit_num[i] / row_total;
    }
    for s in 0..s_n {
        let occupancy: f64 = resp_sum[s].iter().sum();
        if occupancy <= 1e-12 {
            continue;
        }
        let state = &mut next.states[s];
        for k in 0..k_n {
            state.weights[k] = resp_sum[s][k] / occupancy;
            if resp_sum[s][k] <= 1e-12 {
                continue;
            }
            for d in 0..dim {
                let mean = mean_sum[s][k][d] / resp_sum[s][k];
                let var = sq_sum[s][k][d] / resp_sum[s][k] - mean * mean;
                state.means[k][d] = mean;
                state.vars[k][d] = var.max(VARIANCE_FLOOR);
            }
        }
    }
    Ok((total_ll, next))
}

/// Full training recipe: topology, data-driven emission seeding, then EM.
pub fn train_hmm(sequences: &[Vec<Vec<f64>>], seed: u64) -> Result<(HmmModel, Vec<f64>)> {
    let mut rng = SeededRng::new(seed);
    let init_seed = rng.next_u64();
    let kmeans_seed = rng.next_u64();
    let mut model = hmm_init(init_seed);
    seed_emissions(&mut model, sequences, kmeans_seed)?;
    hmm_baum_welch(&model, sequences, BW_MAX_ITERS, BW_TOL)
}

/// Classifies by comparing the two fits; the log-likelihood ratio doubles
/// as the ROC score. Equal likelihoods count as Speech.
pub fn hmm_classify(
    cough: &HmmModel,
    speech: &HmmModel,
    frames: &[Vec<f64>],
) -> (Label, f64) {
    let llc = cough.log_likelihood_frames(frames);
    let lls = speech.log_likelihood_frames(frames);
    if llc > lls {
        (Label::Cough, llc - lls)
    } else if lls > llc {
        (Label::Speech, llc - lls)
    } else {
        (Label::Speech, 0.0)
    }
}

fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Log-sum-exp that tolerates -inf entries.
fn lse(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}
