#![allow(dead_code)]

pub mod service_checks;

use std::path::Path;

use condra::condra_core::{Attribute, Corpus, Metric};
use condra::format::{save_bundle, Bundle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CULTURES: [&str; 6] = [
    "Egyptian", "Greek", "Roman", "Chinese", "Japanese", "Persian",
];
pub const MEDIA: [&str; 5] = ["bronze", "ceramic", "paper", "stone", "textile"];
const SUBJECTS: [&str; 8] = [
    "Boat model",
    "Harbor with boats",
    "Portrait of a lady",
    "Seated scribe",
    "Landscape",
    "Vase with lid",
    "Fishing BOAT at dusk",
    "Mirror",
];

/// Raw columns of the fixture, kept for independent checks.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub d: usize,
    pub points: Vec<f32>,
    pub culture: Vec<String>,
    pub medium: Vec<String>,
    pub title: Vec<String>,
    pub image_url: Vec<String>,
}

impl Fixture {
    pub fn n(&self) -> usize {
        self.culture.len()
    }

    pub fn bundle(&self) -> Bundle {
        let corpus = Corpus::new(
            self.d,
            self.points.clone(),
            Metric::Euclidean,
            vec![
                Attribute::from_values("culture", &self.culture).unwrap(),
                Attribute::from_values("medium", &self.medium).unwrap(),
                Attribute::from_values("title", &self.title).unwrap(),
            ],
        )
        .unwrap();
        Bundle {
            corpus,
            image_urls: Some(self.image_url.clone()),
        }
    }

    pub fn write(&self, dir: &Path) {
        save_bundle(&self.bundle(), dir).unwrap();
    }

    pub fn point(&self, i: usize) -> &[f32] {
        &self.points[i * self.d..(i + 1) * self.d]
    }
}

/// 1000 points in 8 dimensions, clustered by culture, with a skewed
/// culture mix, a medium, a free-text title and an image URL per point.
pub fn art_fixture() -> Fixture {
    let (n, d) = (1000, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let centers: Vec<f64> = (0..CULTURES.len() * d)
        .map(|_| rng.random_range(-4.0..4.0))
        .collect();
    let weights = [0.35, 0.25, 0.2, 0.1, 0.07, 0.03];
    let mut fx = Fixture {
        d,
        points: Vec::with_capacity(n * d),
        culture: Vec::with_capacity(n),
        medium: Vec::with_capacity(n),
        title: Vec::with_capacity(n),
        image_url: Vec::with_capacity(n),
    };
    for i in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let c = weights
            .iter()
            .position(|w| {
                acc += w;
                u < acc
            })
            .unwrap_or(weights.len() - 1);
        for j in 0..d {
            let x = centers[c * d + j] + rng.random_range(-1.0..1.0);
            // Coarse grid so that exact distance ties occur.
            fx.points.push(((x * 8.0).round() / 8.0) as f32);
        }
        fx.culture.push(CULTURES[c].to_owned());
        fx.medium
            .push(MEDIA[rng.random_range(0..MEDIA.len())].to_owned());
        fx.title.push(format!(
            "{} {}",
            SUBJECTS[rng.random_range(0..SUBJECTS.len())],
            i % 37
        ));
        fx.image_url.push(format!("https://img.example/{i:04}.jpg"));
    }
    fx
}

/// Squared distance in f64, the oracle's own arithmetic.
pub fn sq(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum()
}

/// Ids of the `k` nearest rows accepted by `keep`, by distance then id.
pub fn oracle(fx: &Fixture, q: &[f32], k: usize, keep: impl Fn(usize) -> bool) -> Vec<(u32, f64)> {
    let mut all: Vec<(u32, f64)> = (0..fx.n())
        .filter(|&i| keep(i))
        .map(|i| (i as u32, sq(q, fx.point(i)).sqrt()))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}
