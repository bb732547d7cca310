//! Regenerates `data/lbs_synthetic.csv`: 99 quarterly rows of 26 synthetic
//! liability series drawn from a sparse SEM with two hub nodes.
//!
//! cargo run --example make_lbs_synthetic [output.csv]

use dag_ma::seed::rng_from_seed;
use dag_ma::synth::sample_data;
use dag_ma::CoefMatrix;
use nalgebra::DMatrix;
use rand::Rng;

const CODES: [&str; 26] = [
    "AT", "BS", "BH", "BE", "CA", "KY", "DK", "FI", "FR", "DE", "HK", "IE", "IN", "IT", "JP", "LU", "NL",
    "NO", "SG", "ES", "SE", "CH", "GB", "US", "CN", "KR",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/lbs_synthetic.csv").to_string());
    let p = CODES.len();
    let idx = |c: &str| CODES.iter().position(|&x| x == c).unwrap();
    let mut rng = rng_from_seed(1997);

    // causal order: hubs first, then the rest in table order
    let mut order = vec![idx("US"), idx("GB")];
    let rest: Vec<usize> = (0..p).filter(|j| !order.contains(j)).collect();
    order.extend(rest);

    let mut a = DMatrix::zeros(p, p);
    for (r, &j) in order.iter().enumerate().skip(1) {
        for &k in &order[..r] {
            let hub = k == idx("US") || k == idx("GB");
            if rng.random_bool(if hub { 0.5 } else { 0.06 }) {
                let sign = if rng.random_bool(0.8) { 1.0 } else { -1.0 };
                a[(k, j)] = sign * rng.random_range(0.3..0.8);
            }
        }
    }
    a[(idx("CN"), idx("HK"))] = 0.7;
    let a = CoefMatrix::new(a)?;
    let x = sample_data(&a, 1.0, 99, 2022)?;

    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(CODES)?;
    let levels: Vec<(f64, f64)> = (0..p)
        .map(|_| (rng.random_range(50.0..2000.0), rng.random_range(5.0..200.0)))
        .collect();
    for row in x.values().row_iter() {
        w.write_record(
            row.iter()
                .zip(&levels)
                .map(|(v, (mean, sd))| format!("{:.3}", mean + sd * v)),
        )?;
    }
    w.flush()?;
    println!("wrote {out}");
    Ok(())
}
