//! Per-(epoch, facet) multinomial language models in natural-parameter form,
//! smoothed across epochs by a bank of scalar Kalman filters whose noise is
//! driven by word-experience change.
//!
//! A facet's word distribution at epoch `t` is `pi(beta_{t,z,.})` where `pi`
//! is a softmax with one reference coordinate pinned at zero for
//! identifiability. The Gibbs phase produces count matrices; their smoothed
//! relative frequencies, mapped through the inverse of `pi`, act as the
//! filter's inferred measurement. Process and measurement noise scale with
//! `sigma_lm * |delta l|`, the per-word change in average reviewer
//! experience, so the language model moves exactly where (and only where)
//! the community's experience moved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastic::EPS_VAR;

/// Which epochs feed the filter's noise terms.
///
/// `Literal` uses process noise from `|l_{t-1} - l_{t-2}|` and measurement
/// noise from `|l_t - l_{t-1}|`; `Aligned` uses `|l_t - l_{t-1}|` for both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KalmanNoise {
    Literal,
    Aligned,
}

/// Map a natural-parameter row (reference coordinate fixed at 0) onto the
/// open simplex. Computed with max-subtraction so huge parameters cannot
/// overflow.
pub fn softmax_map(beta_row: &[f64]) -> Result<Vec<f64>> {
    if beta_row.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidArgument("non-finite natural parameter".into()));
    }
    let max = beta_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = beta_row.iter().map(|b| (b - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Invert [`softmax_map`]: `beta_w = ln p_w - ln p_ref`, with the reference
/// coordinate returning to exactly 0. Callers must smooth zeros away first.
pub fn inverse_map(prob: &[f64], ref_word: usize) -> Result<Vec<f64>> {
    if ref_word >= prob.len() {
        return Err(Error::InvalidArgument(format!(
            "reference index {ref_word} out of range for V={}",
            prob.len()
        )));
    }
    if prob.iter().any(|p| *p <= 0.0 || !p.is_finite()) {
        return Err(Error::InvalidArgument(
            "probabilities must be strictly positive".into(),
        ));
    }
    let log_ref = prob[ref_word].ln();
    Ok(prob
        .iter()
        .enumerate()
        .map(|(w, p)| if w == ref_word { 0.0 } else { p.ln() - log_ref })
        .collect())
}

/// Natural parameters inferred from Gibbs counts: smoothed relative
/// frequencies `(n_w + gamma) / (n_total + V gamma)` pushed through the
/// inverse mapping.
pub fn infer_measurement(counts: &[u32], gamma: f64, ref_word: usize) -> Result<Vec<f64>> {
    if gamma <= 0.0 {
        return Err(Error::InvalidArgument("gamma must be > 0".into()));
    }
    let v = counts.len() as f64;
    let total: f64 = counts.iter().map(|c| *c as f64).sum();
    let denom = total + v * gamma;
    let probs: Vec<f64> = counts.iter().map(|c| (*c as f64 + gamma) / denom).collect();
    inverse_map(&probs, ref_word)
}

/// One scalar Kalman predict/update:
///
/// ```text
/// p_hat = p_prev + q
/// g     = p_hat / (p_hat + r)
/// beta  = beta_prev + g (beta_inf - beta_prev)
/// p     = (1 - g) p_hat
/// ```
///
/// Both noise terms are floored at `EPS_VAR`. Returns `(beta, p, g)`.
pub fn kalman_chain_step(
    beta_prev: f64,
    p_prev: f64,
    beta_inf: f64,
    q_process: f64,
    r_measure: f64,
) -> (f64, f64, f64) {
    let q = q_process.max(EPS_VAR);
    let r = r_measure.max(EPS_VAR);
    let p_hat = p_prev + q;
    let gain = p_hat / (p_hat + r);
    let beta = beta_prev + gain * (beta_inf - beta_prev);
    let p = (1.0 - gain) * p_hat;
    (beta, p, gain)
}

/// Per-epoch average experience of the reviews containing each word.
/// `token_lists[i]` are the tokens of the i-th review in the epoch and
/// `experiences[i]` its current experience value. A word contributes once
/// per review regardless of its token count; absent words get 0.
pub fn word_experience(token_lists: &[&[u32]], experiences: &[f64], vocab_size: usize) -> Vec<f64> {
    debug_assert_eq!(token_lists.len(), experiences.len());
    let mut sum = vec![0.0f64; vocab_size];
    let mut docs = vec![0u32; vocab_size];
    let mut seen = vec![usize::MAX; vocab_size];
    for (i, (tokens, e)) in token_lists.iter().zip(experiences).enumerate() {
        for &w in tokens.iter() {
            let w = w as usize;
            if seen[w] != i {
                seen[w] = i;
                sum[w] += *e;
                docs[w] += 1;
            }
        }
    }
    sum.iter()
        .zip(&docs)
        .map(|(s, d)| if *d == 0 { 0.0 } else { s / *d as f64 })
        .collect()
}

/// The word-experience table `l_{t,w}`, in raw and carry-forward form.
///
/// The raw value is 0 for epochs where no review contains the word; the
/// carried value holds the last observed level so the Kalman noise reflects
/// genuine experience change rather than presence gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordExperience {
    pub n_epochs: usize,
    pub vocab_size: usize,
    raw: Vec<f64>,
    carried: Vec<f64>,
}

impl WordExperience {
    pub fn zeros(n_epochs: usize, vocab_size: usize) -> Self {
        Self {
            n_epochs,
            vocab_size,
            raw: vec![0.0; n_epochs * vocab_size],
            carried: vec![0.0; n_epochs * vocab_size],
        }
    }

    /// Build the table from per-epoch raw rows (each of length `vocab_size`).
    pub fn from_rows(rows: Vec<Vec<f64>>, vocab_size: usize) -> Self {
        let n_epochs = rows.len();
        let mut raw = Vec::with_capacity(n_epochs * vocab_size);
        for row in &rows {
            debug_assert_eq!(row.len(), vocab_size);
            raw.extend_from_slice(row);
        }
        let mut carried = raw.clone();
        for w in 0..vocab_size {
            let mut last = 0.0;
            for t in 0..n_epochs {
                let idx = t * vocab_size + w;
                if raw[idx] > 0.0 {
                    last = raw[idx];
                } else {
                    carried[idx] = last;
                }
            }
        }
        Self {
            n_epochs,
            vocab_size,
            raw,
            carried,
        }
    }

    /// Raw average experience at epoch `t` (0 when absent).
    pub fn raw(&self, t: usize, w: usize) -> f64 {
        self.raw[t * self.vocab_size + w]
    }

    /// Carry-forward value at epoch `t`; epochs before `t = 0` read as 0.
    pub fn carried_at(&self, t: isize, w: usize) -> f64 {
        if t < 0 {
            0.0
        } else {
            self.carried[t as usize * self.vocab_size + w]
        }
    }

    pub fn raw_row(&self, t: usize) -> &[f64] {
        &self.raw[t * self.vocab_size..(t + 1) * self.vocab_size]
    }
}

/// Natural parameters `beta_{t,z,w}` with a cached simplex image and the
/// per-chain filter error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageModel {
    pub n_epochs: usize,
    pub n_facets: usize,
    pub vocab_size: usize,
    /// Fixed reference coordinate (last vocabulary index by convention);
    /// recorded in checkpoints.
    pub ref_word: usize,
    pub sigma_lm: f64,
    pub gamma: f64,
    pub noise_mode: KalmanNoise,
    beta: Vec<f64>,
    #[serde(skip)]
    pi: Vec<f64>,
    kalman_error: Vec<f64>,
}

impl LanguageModel {
    pub fn new(
        n_epochs: usize,
        n_facets: usize,
        vocab_size: usize,
        sigma_lm: f64,
        gamma: f64,
        noise_mode: KalmanNoise,
    ) -> Self {
        let mut lm = Self {
            n_epochs,
            n_facets,
            vocab_size,
            ref_word: vocab_size - 1,
            sigma_lm,
            gamma,
            noise_mode,
            beta: vec![0.0; n_epochs * n_facets * vocab_size],
            pi: Vec::new(),
            kalman_error: vec![1.0; n_facets * vocab_size],
        };
        lm.refresh_pi();
        lm
    }

    #[inline]
    fn idx(&self, t: usize, z: usize, w: usize) -> usize {
        (t * self.n_facets + z) * self.vocab_size + w
    }

    pub fn beta(&self, t: usize, z: usize, w: usize) -> f64 {
        self.beta[self.idx(t, z, w)]
    }

    pub fn beta_row(&self, t: usize, z: usize) -> &[f64] {
        let start = self.idx(t, z, 0);
        &self.beta[start..start + self.vocab_size]
    }

    /// The full flat `T x Z x V` parameter tensor.
    pub fn beta_raw(&self) -> &[f64] {
        &self.beta
    }

    /// Simplex value `pi(beta_{t,z,w})` from the cache.
    pub fn pi(&self, t: usize, z: usize, w: usize) -> f64 {
        self.pi[self.idx(t, z, w)]
    }

    pub fn pi_row(&self, t: usize, z: usize) -> &[f64] {
        let start = self.idx(t, z, 0);
        &self.pi[start..start + self.vocab_size]
    }

    pub fn kalman_error(&self, z: usize, w: usize) -> f64 {
        self.kalman_error[z * self.vocab_size + w]
    }

    /// Replace the row `beta_{t,z,.}` (used by initialization and tests).
    pub fn set_beta_row(&mut self, t: usize, z: usize, row: &[f64]) {
        let start = self.idx(t, z, 0);
        self.beta[start..start + self.vocab_size].copy_from_slice(row);
        self.refresh_pi_row(t, z);
    }

    /// Recompute the cached simplex image for every (t, z) row. Needed after
    /// deserialization, which skips the cache.
    pub fn refresh_pi(&mut self) {
        self.pi = vec![0.0; self.beta.len()];
        for t in 0..self.n_epochs {
            for z in 0..self.n_facets {
                self.refresh_pi_row(t, z);
            }
        }
    }

    fn refresh_pi_row(&mut self, t: usize, z: usize) {
        let start = self.idx(t, z, 0);
        let row = softmax_map(&self.beta[start..start + self.vocab_size])
            .expect("finite beta row");
        self.pi[start..start + self.vocab_size].copy_from_slice(&row);
    }

    /// Noise pair (q, r) for word `w` entering epoch `t`, before flooring.
    fn noise(&self, word_exp: &WordExperience, t: usize, w: usize) -> (f64, f64) {
        let t = t as isize;
        let dl_now = (word_exp.carried_at(t, w) - word_exp.carried_at(t - 1, w)).abs();
        match self.noise_mode {
            KalmanNoise::Literal => {
                let dl_prev =
                    (word_exp.carried_at(t - 1, w) - word_exp.carried_at(t - 2, w)).abs();
                (self.sigma_lm * dl_prev, self.sigma_lm * dl_now)
            }
            KalmanNoise::Aligned => (self.sigma_lm * dl_now, self.sigma_lm * dl_now),
        }
    }

    /// Filter epoch `t` from the epoch's count matrix (`n_facets * vocab_size`
    /// flat, facet-major). Epoch 0 takes its own inferred measurement as the
    /// prior with p = 1; later epochs take the already-filtered previous
    /// epoch and the stored per-chain error.
    pub fn smooth_epoch(
        &mut self,
        t: usize,
        epoch_counts: &[u32],
        word_exp: &WordExperience,
        threads: usize,
    ) -> Result<()> {
        if t >= self.n_epochs {
            return Err(Error::InvalidArgument(format!(
                "epoch {t} out of range ({} epochs)",
                self.n_epochs
            )));
        }
        if epoch_counts.len() != self.n_facets * self.vocab_size {
            return Err(Error::Internal(format!(
                "count slice has {} entries, expected {}",
                epoch_counts.len(),
                self.n_facets * self.vocab_size
            )));
        }
        let v = self.vocab_size;
        let z_count = self.n_facets;
        let ref_word = self.ref_word;
        let gamma = self.gamma;

        // Per-word noise is shared across facets; compute it once.
        let noise: Vec<(f64, f64)> = (0..v).map(|w| self.noise(word_exp, t, w)).collect();

        let (head, tail) = self.beta.split_at_mut(t * z_count * v);
        let prev_rows: Option<&[f64]> = if t == 0 {
            None
        } else {
            Some(&head[(t - 1) * z_count * v..t * z_count * v])
        };
        let cur_rows = &mut tail[..z_count * v];

        let run_facet = |z: usize, cur: &mut [f64], err: &mut [f64]| -> Result<()> {
            let beta_inf = infer_measurement(&epoch_counts[z * v..(z + 1) * v], gamma, ref_word)?;
            for w in 0..v {
                if w == ref_word {
                    cur[w] = 0.0;
                    continue;
                }
                let (beta_prev, p_prev) = match prev_rows {
                    None => (beta_inf[w], 1.0),
                    Some(prev) => (prev[z * v + w], err[w]),
                };
                let (q, r) = noise[w];
                let (b, p, _g) = kalman_chain_step(beta_prev, p_prev, beta_inf[w], q, r);
                cur[w] = b;
                err[w] = p;
            }
            Ok(())
        };

        // One job per facet: that facet's beta row for this epoch plus its
        // slice of the per-chain error, all writes disjoint.
        type FacetJob<'a> = (usize, &'a mut [f64], &'a mut [f64]);
        if threads <= 1 || z_count < 2 {
            for (z, (cur, err)) in cur_rows
                .chunks_mut(v)
                .zip(self.kalman_error.chunks_mut(v))
                .enumerate()
            {
                run_facet(z, cur, err)?;
            }
        } else {
            let jobs: Vec<FacetJob> = cur_rows
                .chunks_mut(v)
                .zip(self.kalman_error.chunks_mut(v))
                .enumerate()
                .map(|(z, (cur, err))| (z, cur, err))
                .collect();
            let n_threads = threads.min(jobs.len());
            let results: Vec<Result<()>> = std::thread::scope(|scope| {
                let mut handles = Vec::new();
                let mut buckets: Vec<Vec<FacetJob>> =
                    (0..n_threads).map(|_| Vec::new()).collect();
                for (i, job) in jobs.into_iter().enumerate() {
                    buckets[i % n_threads].push(job);
                }
                for bucket in buckets {
                    handles.push(scope.spawn(move || {
                        for (z, cur, err) in bucket {
                            run_facet(z, cur, err)?;
                        }
                        Ok(())
                    }));
                }
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });
            for r in results {
                r?;
            }
        }

        for z in 0..z_count {
            self.refresh_pi_row(t, z);
        }
        Ok(())
    }

    /// Top `k` words by simplex mass for each (epoch, facet).
    pub fn top_words(&self, k: usize) -> Vec<TopWords> {
        let mut out = Vec::new();
        for t in 0..self.n_epochs {
            for z in 0..self.n_facets {
                let row = self.pi_row(t, z);
                let mut order: Vec<usize> = (0..self.vocab_size).collect();
                order.sort_by(|a, b| row[*b].partial_cmp(&row[*a]).unwrap().then(a.cmp(b)));
                out.push(TopWords {
                    epoch: t,
                    facet: z,
                    words: order
                        .into_iter()
                        .take(k)
                        .map(|w| (w, row[w]))
                        .collect(),
                });
            }
        }
        out
    }
}

/// One (epoch, facet) entry of the top-words report.
#[derive(Debug, Clone, Serialize)]
pub struct TopWords {
    pub epoch: usize,
    pub facet: usize,
    /// (vocabulary index, simplex mass), descending by mass.
    pub words: Vec<(usize, f64)>,
}
