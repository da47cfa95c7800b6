//! Seeded multimodal toy corpus with the nine-class structure.
//!
//! Classes fall into three groups:
//!
//! * concert, conference, exhibition: distinct vocabularies, one shared
//!   texture family (text-easy, visual-hard)
//! * fashion, protest, sports: distinct gratings, one shared vocabulary
//!   (visual-easy, text-hard)
//! * theater_dance, other, non_event: own vocabulary and own texture, both
//!   with heavier noise
//!
//! Neither modality alone can separate all nine classes; together they can.

use std::f64::consts::PI;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_metadata, ClassLabel, Corpus, MediaRecord, MetadataFormat, Split};
use crate::visual::StandardImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub records: usize,
    pub image_size: usize,
    pub seed: u64,
    /// Share of records labeled non_event; the rest spread evenly over the
    /// eight event types.
    pub non_event_share: f64,
    pub test_fraction: f64,
    /// Tokens per record (title plus tags).
    pub tokens_per_record: usize,
    /// Probability that a token comes from the record's class vocabulary.
    pub signal_rate: f64,
    /// Probability that a token comes from some other class vocabulary.
    pub confusion_rate: f64,
    /// Standard deviation of additive pixel noise.
    pub pixel_noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            records: 2000,
            image_size: 64,
            seed: 0,
            non_event_share: 0.35,
            test_fraction: 0.3,
            tokens_per_record: 8,
            signal_rate: 0.45,
            confusion_rate: 0.1,
            pixel_noise: 0.1,
        }
    }
}

impl SyntheticConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_records(mut self, records: usize) -> Self {
        self.records = records;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassRole {
    TextEasy,
    VisualEasy,
    Both,
}

pub fn class_role(label: ClassLabel) -> ClassRole {
    use ClassLabel::*;
    match label {
        Concert | Conference | Exhibition => ClassRole::TextEasy,
        Fashion | Protest | Sports => ClassRole::VisualEasy,
        TheaterDance | Other | NonEvent => ClassRole::Both,
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Images aligned with `corpus.records()`.
    pub images: Vec<StandardImage>,
}

impl SyntheticCorpus {
    /// Writes `metadata.csv` and `images/<id>.png` under `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir.join("images"))?;
        for (r, img) in self.corpus.records().iter().zip(&self.images) {
            std::fs::write(
                dir.join("images").join(format!("{}.png", r.id)),
                img.to_png(),
            )?;
        }
        let file = std::fs::File::create(dir.join("metadata.csv"))?;
        write_metadata(file, self.corpus.records(), MetadataFormat::Csv)
    }
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "ri", "mu", "se", "ta", "vo", "ne", "pi", "du", "ga", "ze", "bo", "fi", "ru", "ma",
    "le", "to", "ni", "sa", "ko", "ve", "di", "ju",
];
const POOL_SIZE: usize = 12;
const BACKGROUND_SIZE: usize = 60;

/// Pseudo-word `i`: three syllables, always six letters.
fn word(i: usize) -> String {
    let n = SYLLABLES.len();
    format!(
        "{}{}{}",
        SYLLABLES[i % n],
        SYLLABLES[(i / n) % n],
        SYLLABLES[(i / (n * n)) % n]
    )
}

/// Vocabulary pool for a class; the visual-easy group shares one pool.
fn pool_id(label: ClassLabel) -> usize {
    match class_role(label) {
        ClassRole::VisualEasy => 20,
        _ => label.index(),
    }
}

fn pool_word(pool: usize, rng: &mut ChaCha8Rng) -> String {
    word(1000 + pool * 37 + rng.gen_range(0..POOL_SIZE))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn tokens(label: ClassLabel, cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<String> {
    let own = pool_id(label);
    let signal = match class_role(label) {
        ClassRole::Both => cfg.signal_rate * 0.75,
        _ => cfg.signal_rate,
    };
    (0..cfg.tokens_per_record)
        .map(|_| {
            let u: f64 = rng.gen();
            if u < signal {
                pool_word(own, rng)
            } else if u < signal + cfg.confusion_rate {
                let other = ClassLabel::ALL[rng.gen_range(0..9)];
                pool_word(pool_id(other), rng)
            } else {
                word(rng.gen_range(0..BACKGROUND_SIZE))
            }
        })
        .collect()
}

fn grating(x: f64, y: f64, theta: f64, cycles: f64, phase: f64, s: f64) -> f64 {
    let u = x * theta.cos() + y * theta.sin();
    (2.0 * PI * cycles * u / s + phase).sin()
}

fn render(
    label: ClassLabel,
    id: &str,
    cfg: &SyntheticConfig,
    rng: &mut ChaCha8Rng,
) -> StandardImage {
    let s = cfg.image_size as f64;
    let phase = rng.gen_range(0.0..2.0 * PI);
    let contrast = rng.gen_range(0.25..0.45);
    let mut noise_sd = cfg.pixel_noise;
    let base: Box<dyn Fn(f64, f64) -> f64> = match class_role(label) {
        ClassRole::TextEasy => {
            // a few soft blobs; the same distribution for all three classes
            let blobs: Vec<(f64, f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        rng.gen_range(0.0..s),
                        rng.gen_range(0.0..s),
                        rng.gen_range(0.08..0.2) * s,
                        if rng.gen::<bool>() { 1.0 } else { -1.0 },
                    )
                })
                .collect();
            Box::new(move |x, y| {
                blobs
                    .iter()
                    .map(|&(bx, by, r, sign)| {
                        sign * (-((x - bx).powi(2) + (y - by).powi(2)) / (2.0 * r * r)).exp()
                    })
                    .sum::<f64>()
                    * 0.8
            })
        }
        ClassRole::VisualEasy => {
            let k = match label {
                ClassLabel::Fashion => 0.0,
                ClassLabel::Protest => 1.0,
                _ => 2.0,
            };
            let theta = k * PI / 3.0 + rng.gen_range(-0.08..0.08);
            Box::new(move |x, y| grating(x, y, theta, 6.0, phase, s))
        }
        ClassRole::Both => {
            noise_sd *= 1.8;
            match label {
                ClassLabel::TheaterDance => {
                    let period = s / 4.0;
                    let (ox, oy) = (rng.gen_range(0.0..period), rng.gen_range(0.0..period));
                    Box::new(move |x, y| {
                        let cx = ((x + ox) / period).floor() as i64;
                        let cy = ((y + oy) / period).floor() as i64;
                        if (cx + cy) % 2 == 0 {
                            0.8
                        } else {
                            -0.8
                        }
                    })
                }
                ClassLabel::Other => {
                    let (cx, cy) = (rng.gen_range(0.3..0.7) * s, rng.gen_range(0.3..0.7) * s);
                    Box::new(move |x, y| {
                        let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                        (2.0 * PI * r / (s / 8.0) + phase).sin()
                    })
                }
                _ => {
                    let theta = PI / 2.0 + rng.gen_range(-0.3..0.3);
                    Box::new(move |x, y| grating(x, y, theta, 14.0, phase, s))
                }
            }
        }
    };
    let n = cfg.image_size;
    let mut pixels = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let v = 0.5 + contrast * base(x as f64, y as f64) + noise_sd * gaussian(rng);
            pixels.push(v.clamp(0.0, 1.0));
        }
    }
    StandardImage::new(n, pixels, id)
}

fn class_counts(cfg: &SyntheticConfig) -> [usize; 9] {
    let non = (cfg.records as f64 * cfg.non_event_share).round() as usize;
    let rest = cfg.records - non;
    let mut counts = [0; 9];
    counts[0] = non;
    for (k, c) in counts.iter_mut().skip(1).enumerate() {
        *c = rest / 8 + usize::from(k < rest % 8);
    }
    counts
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let counts = class_counts(cfg);
    let mut labels: Vec<ClassLabel> = Vec::with_capacity(cfg.records);
    for (c, &n) in counts.iter().enumerate() {
        labels.extend(std::iter::repeat_n(ClassLabel::ALL[c], n));
    }
    labels.shuffle(&mut rng);

    // stratified split: the first share of each class (in shuffled order) goes to test
    let mut seen = [0usize; 9];
    let mut records = Vec::with_capacity(cfg.records);
    let mut images = Vec::with_capacity(cfg.records);
    for (i, &label) in labels.iter().enumerate() {
        let c = label.index();
        let n_test = (counts[c] as f64 * cfg.test_fraction).round() as usize;
        let split = if seen[c] < n_test {
            Split::Test
        } else {
            Split::Development
        };
        seen[c] += 1;
        let id = format!("syn{i:05}");
        let toks = tokens(label, cfg, &mut rng);
        let title_len = toks.len() / 2;
        let mut r = MediaRecord::new(id.clone());
        r.title = Some(toks[..title_len].join(" "));
        r.tags = toks[title_len..].to_vec();
        r.user = format!("user{}", rng.gen_range(0..50));
        r.image_path = Some(format!("images/{id}.png"));
        r.label = Some(label);
        r.split = Some(split);
        images.push(render(label, &id, cfg, &mut rng));
        records.push(r);
    }
    SyntheticCorpus {
        corpus: Corpus::from_records(records).expect("generated ids are unique"),
        images,
    }
}
