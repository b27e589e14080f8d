//! Independent oracles and fixture generators shared by the integration tests.
#![allow(dead_code)]

use panelq_core::forest::Node;
use panelq_core::panel::ParseOptions;
use panelq_core::QuantileForest;
use panelq_core::{PanelDataset, PanelObservation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_loss(y: f64, q: f64, tau: f64) -> f64 {
    let r = y - q;
    if r >= 0.0 {
        tau * r
    } else {
        (tau - 1.0) * r
    }
}

pub fn total_check_loss(design: &[Vec<f64>], y: &[f64], beta: &[f64], tau: f64) -> f64 {
    design
        .iter()
        .zip(y)
        .map(|(row, &yi)| check_loss(yi, row.iter().zip(beta).map(|(a, b)| a * b).sum(), tau))
        .sum()
}

fn det(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unimplemented!("oracle supports up to 3 columns"),
    }
}

/// Cramer's rule; `None` for a singular subset.
fn cramer(m: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let d = det(m);
    if d.abs() < 1e-12 {
        return None;
    }
    Some(
        (0..m.len())
            .map(|c| {
                let mc: Vec<Vec<f64>> = m
                    .iter()
                    .zip(b)
                    .map(|(row, &bi)| {
                        let mut r = row.clone();
                        r[c] = bi;
                        r
                    })
                    .collect();
                det(&mc) / d
            })
            .collect(),
    )
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimum total check loss over every coefficient vector that interpolates `p` data
/// points. Some optimum of the quantile regression LP is always such a basic solution.
pub fn qr_brute_force(design: &[Vec<f64>], y: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let p = design[0].len();
    let mut best = (f64::INFINITY, vec![]);
    for idx in subsets(design.len(), p) {
        let m: Vec<Vec<f64>> = idx.iter().map(|&i| design[i].clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        if let Some(beta) = cramer(&m, &b) {
            let loss = total_check_loss(design, y, &beta, tau);
            if loss < best.0 {
                best = (loss, beta);
            }
        }
    }
    best
}

/// Left-continuous weighted quantile by materializing and sorting `(y, w)` pairs.
pub fn weighted_quantile_sort_scan(y: &[f64], w: &[f64], tau: f64) -> f64 {
    let mut pairs: Vec<(f64, f64)> = y.iter().copied().zip(w.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    for &(yi, wi) in &pairs {
        acc += wi;
        if acc >= tau - panelq_core::forest::CDF_TOLERANCE {
            return yi;
        }
    }
    pairs.last().unwrap().0
}

/// Empirical quantile `y_(k)` with the smallest `k` such that `k / n >= tau`.
pub fn empirical_quantile_left(y: &[f64], tau: f64) -> f64 {
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let k = (1..=n)
        .find(|&k| k as f64 >= tau * n as f64 - 1e-9)
        .unwrap();
    s[k - 1]
}

/// Parameters of the synthetic linear conditional-quantile panel.
pub struct SyntheticPanel {
    pub regions: usize,
    pub years: usize,
    pub noise_sd: f64,
}

impl Default for SyntheticPanel {
    fn default() -> Self {
        SyntheticPanel {
            regions: 20,
            years: 16,
            noise_sd: 8.0,
        }
    }
}

pub const SYNTH_INTERCEPT: f64 = 160.0;
pub const SYNTH_PRICE: f64 = -18.0;
pub const SYNTH_GDP: f64 = 1.5;

/// Panel whose sales are `160 - 18 price + 1.5 gdp + e` with i.i.d. Gaussian `e`, so every
/// conditional quantile is linear in the covariates.
pub fn synthetic_panel(spec: &SyntheticPanel, seed: u64) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for r in 0..spec.regions {
        let base_gdp: f64 = rng.gen_range(15.0..35.0);
        let price_shift: f64 = rng.gen_range(-0.2..0.2);
        for t in 0..spec.years {
            let price = 1.8 + 0.18 * t as f64 + price_shift + rng.gen_range(-0.1..0.1);
            let gdp = base_gdp * (1.0 + 0.01 * t as f64) + rng.gen_range(-1.0..1.0);
            let e = spec.noise_sd * standard_normal(&mut rng);
            let sales = SYNTH_INTERCEPT + SYNTH_PRICE * price + SYNTH_GDP * gdp + e;
            rows.push(PanelObservation {
                region: format!("R{r:02}"),
                year: 2002 + t as i32,
                sales_pc: sales,
                price,
                gdp_pc: gdp,
            });
        }
    }
    PanelDataset::from_observations(rows, &ParseOptions::default()).unwrap()
}

/// Box-Muller.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Multiplies the sales of the named regions by `factor`.
pub fn scale_regions(d: &PanelDataset, regions: &[&str], factor: f64) -> PanelDataset {
    let rows = d
        .observations()
        .iter()
        .cloned()
        .map(|mut o| {
            if regions.contains(&o.region.as_str()) {
                o.sales_pc *= factor;
            }
            o
        })
        .collect();
    PanelDataset::from_observations(rows, &ParseOptions::default()).unwrap()
}

/// `y = 1 + 2x + (1 + x) e`, `x ~ U(0, 1)`, `e ~ U(-1, 1)`.
pub fn heteroscedastic_sample(n: usize, seed: u64) -> (Vec<[f64; 1]>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = rng.gen_range(0.0..1.0);
        let e: f64 = rng.gen_range(-1.0..1.0);
        x.push([xi]);
        y.push(1.0 + 2.0 * xi + (1.0 + xi) * e);
    }
    (x, y)
}

/// Analytic tau-quantile of the heteroscedastic model at `x`.
pub fn heteroscedastic_quantile(x: f64, tau: f64) -> f64 {
    1.0 + 2.0 * x + (1.0 + x) * (2.0 * tau - 1.0)
}

/// Small QR fixtures: `(design with intercept column, y)`.
pub fn qr_fixtures() -> Vec<(Vec<Vec<f64>>, Vec<f64>)> {
    let one = |xs: &[f64]| xs.iter().map(|&x| vec![1.0, x]).collect::<Vec<_>>();
    let two = |xs: &[(f64, f64)]| xs.iter().map(|&(a, b)| vec![1.0, a, b]).collect::<Vec<_>>();
    vec![
        (
            one(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            vec![2.1, 3.9, 6.2, 7.8, 10.5, 11.7],
        ),
        (
            one(&[0.5, 1.5, 1.5, 2.0, 3.5, 4.0, 4.5, 6.0, 7.0]),
            vec![3.0, 1.0, 4.0, 1.5, 9.0, 2.6, 5.0, 3.5, 8.0],
        ),
        (
            one(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]),
            vec![5.0, 5.0, 5.0, 7.0, 6.0, 9.0, 9.0, 9.0, 12.0, 10.0, 14.0, 13.0],
        ),
        (
            two(&[
                (2.0, 18.0),
                (2.2, 21.0),
                (2.5, 19.5),
                (2.9, 24.0),
                (3.1, 20.5),
                (3.4, 26.0),
                (3.8, 22.0),
                (4.1, 25.0),
                (4.4, 23.5),
                (4.6, 27.5),
            ]),
            vec![120.0, 131.0, 110.5, 126.0, 98.0, 119.0, 95.5, 103.0, 90.0, 101.5],
        ),
        (
            two(&[
                (1.0, 1.0),
                (2.0, 0.0),
                (0.0, 3.0),
                (3.0, 2.0),
                (1.5, 4.0),
                (2.5, 2.5),
                (4.0, 1.0),
                (0.5, 0.5),
                (3.5, 3.5),
                (2.0, 2.0),
                (1.0, 3.0),
            ]),
            vec![3.0, 2.5, 6.0, 4.0, 8.5, 5.0, 3.5, 1.0, 7.0, 4.0, 6.5],
        ),
        (
            two(&[
                (0.0, 0.0),
                (1.0, 0.0),
                (0.0, 1.0),
                (1.0, 1.0),
                (2.0, 1.0),
                (1.0, 2.0),
                (2.0, 2.0),
                (3.0, 1.0),
            ]),
            vec![1.0, 2.0, 2.0, 3.0, 5.0, 3.0, 4.0, 4.0],
        ),
    ]
}

/// Counts of negative and (numerically) zero residuals.
pub fn residual_counts(design: &[Vec<f64>], y: &[f64], beta: &[f64]) -> (usize, usize) {
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut neg = 0;
    let mut zero = 0;
    for (row, &yi) in design.iter().zip(y) {
        let r = yi - row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
        if r.abs() <= 1e-9 * scale {
            zero += 1;
        } else if r < 0.0 {
            neg += 1;
        }
    }
    (neg, zero)
}

/// Weights built from the public tree structure alone: route `x` through each tree and
/// spread `1 / T` uniformly over the leaf's sample slots.
pub fn oracle_weights(f: &QuantileForest, x: &[f64]) -> Vec<f64> {
    let n = f.training_responses().len();
    let t = f.trees().len() as f64;
    let mut w = vec![0.0; n];
    for tree in f.trees() {
        let nodes = tree.nodes();
        let mut id = 0;
        let samples = loop {
            match &nodes[id] {
                Node::Split { var, threshold, left, right } => {
                    id = if x[*var] <= *threshold { *left } else { *right }
                }
                Node::Leaf { samples } => break samples,
            }
        };
        for &i in samples {
            w[i] += 1.0 / (samples.len() as f64 * t);
        }
    }
    w
}

pub fn forest_fixture(n: usize, seed: u64) -> (Vec<[f64; 2]>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.gen_range(0.0..5.0f64).round(), rng.gen_range(0.0..10.0)])
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|r| (3.0 * r[0] + r[1] + rng.gen_range(-2.0..2.0f64)).round())
        .collect();
    (x, y)
}

