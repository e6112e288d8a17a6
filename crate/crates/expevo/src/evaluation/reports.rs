//! Qualitative exports from a model checkpoint: per-user experience
//! aggregates, word-frequency-vs-experience tables, per-word score series,
//! experience-ranked word lists, per-(epoch, facet) top words, and raw
//! per-review experience trajectories. All corpus-free; the checkpoint
//! carries what they need.

use serde::Serialize;

use crate::checkpoint::ModelFile;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ReportOptions {
    /// Epoch for the frequency-vs-experience table; defaults to the last.
    pub epoch: Option<usize>,
    /// List length for top-word reports.
    pub top_k: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            epoch: None,
            top_k: 20,
        }
    }
}

/// A named report file, ready to be written out.
pub struct ReportFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Build the full report bundle.
pub fn export_reports(model: &ModelFile, opts: &ReportOptions) -> Result<Vec<ReportFile>> {
    let t_count = model.lm.n_epochs;
    let v = model.lm.vocab_size;
    let epoch = opts.epoch.unwrap_or(t_count - 1);
    if epoch >= t_count {
        return Err(Error::InvalidArgument(format!(
            "report epoch {epoch} out of range ({t_count} epochs)"
        )));
    }

    let mut files = Vec::new();

    // (a) Per-user experience against activity and GBM parameters.
    let mut out = String::from("user_id,final_experience,n_reviews,years_active,mu,sigma\n");
    for u in &model.users {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(&u.user_id),
            u.final_experience,
            u.n_reviews,
            u.years_active,
            u.mu,
            u.sigma
        ));
    }
    files.push(ReportFile {
        name: "user_experience.csv".into(),
        bytes: out.into_bytes(),
    });

    // (b) Word frequency vs word experience at the chosen epoch.
    let mut out = String::from("word,frequency,experience\n");
    for w in 0..v {
        out.push_str(&format!(
            "{},{},{}\n",
            csv_field(&model.vocabulary[w]),
            model.word_freq[epoch][w],
            model.word_exp.raw(epoch, w)
        ));
    }
    files.push(ReportFile {
        name: "word_experience.csv".into(),
        bytes: out.into_bytes(),
    });

    // (c) Per-word score series beta_{t,z*,w} * l_{t,w} at the word's
    // highest-parameter facet; 0 when the word is absent from the epoch.
    let mut out = String::from("word,epoch,score\n");
    for w in 0..v {
        for t in 0..t_count {
            let mut best = f64::NEG_INFINITY;
            for z in 0..model.lm.n_facets {
                best = best.max(model.lm.beta(t, z, w));
            }
            let score = best * model.word_exp.raw(t, w);
            out.push_str(&format!(
                "{},{},{}\n",
                csv_field(&model.vocabulary[w]),
                t,
                score
            ));
        }
    }
    files.push(ReportFile {
        name: "word_scores.csv".into(),
        bytes: out.into_bytes(),
    });

    // (d) Words ranked by experience at the final epoch (carried values, so
    // a word keeps its level through quiet epochs).
    let mut ranked: Vec<usize> = (0..v).collect();
    let last = (t_count - 1) as isize;
    ranked.sort_by(|a, b| {
        let ea = model.word_exp.carried_at(last, *a);
        let eb = model.word_exp.carried_at(last, *b);
        eb.partial_cmp(&ea).unwrap().then(a.cmp(b))
    });
    let mut out = String::from("word,experience\n");
    for &w in ranked.iter().take(opts.top_k) {
        out.push_str(&format!(
            "{},{}\n",
            csv_field(&model.vocabulary[w]),
            model.word_exp.carried_at(last, w)
        ));
    }
    files.push(ReportFile {
        name: "experienced_words.csv".into(),
        bytes: out.into_bytes(),
    });

    // (e) Top words per (epoch, facet) by simplex mass.
    #[derive(Serialize)]
    struct TopEntry {
        word: String,
        pi: f64,
    }
    #[derive(Serialize)]
    struct TopBlock {
        epoch: usize,
        facet: usize,
        words: Vec<TopEntry>,
    }
    let blocks: Vec<TopBlock> = model
        .lm
        .top_words(opts.top_k)
        .into_iter()
        .map(|tw| TopBlock {
            epoch: tw.epoch,
            facet: tw.facet,
            words: tw
                .words
                .into_iter()
                .map(|(w, pi)| TopEntry {
                    word: model.vocabulary[w].clone(),
                    pi,
                })
                .collect(),
        })
        .collect();
    files.push(ReportFile {
        name: "top_words.json".into(),
        bytes: serde_json::to_vec_pretty(&blocks)?,
    });

    // (f) Per-review experience trajectories.
    let mut out = String::from("user_id,timestamp,experience\n");
    for i in 0..model.experiences.len() {
        let user = model.review_users[i] as usize;
        out.push_str(&format!(
            "{},{},{}\n",
            csv_field(&model.users[user].user_id),
            model.review_timestamps[i],
            model.experiences[i]
        ));
    }
    files.push(ReportFile {
        name: "experience_trajectories.csv".into(),
        bytes: out.into_bytes(),
    });

    Ok(files)
}
