//! Writes the grocery-style SPMF fixture used by the acceptance suite:
//! 169 items with skewed popularity and a few co-purchase bundles.
//!
//!     cargo run -p spaarc-core --example make_grocery -- crates/core/tests/fixtures/grocery.spmf

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, Poisson};
use spaarc::domain::{ObjectId, Transaction};
use spaarc::io::write_spmf;

const ITEMS: u32 = 169;
const TRANSACTIONS: usize = 9835;
const BUNDLES: usize = 24;
const BUNDLE_RATE: f64 = 0.35;

fn main() -> spaarc::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "crates/core/tests/fixtures/grocery.spmf".into());
    let mut rng = ChaCha8Rng::seed_from_u64(169);

    let mut ranked: Vec<u32> = (1..=ITEMS).collect();
    ranked.shuffle(&mut rng);
    let weights: Vec<f64> = (0..ITEMS).map(|r| 1.0 / (r as f64 + 1.0).powf(0.9)).collect();
    let popular = WeightedIndex::new(&weights).expect("positive weights");

    let bundles: Vec<Vec<u32>> = (0..BUNDLES)
        .map(|_| {
            let size = rng.random_range(2..=3);
            let mut b = BTreeSet::new();
            while b.len() < size {
                b.insert(ranked[popular.sample(&mut rng)]);
            }
            b.into_iter().collect()
        })
        .collect();

    let extra = Poisson::new(2.4).expect("positive mean");
    let txs = (0..TRANSACTIONS)
        .map(|i| {
            let mut items = BTreeSet::new();
            if rng.random_bool(BUNDLE_RATE) {
                items.extend(bundles[rng.random_range(0..BUNDLES)].iter().copied());
            }
            let n = 1 + extra.sample(&mut rng) as usize;
            while items.len() < n {
                items.insert(ranked[popular.sample(&mut rng)]);
            }
            Transaction::new(i as u64, items.into_iter().map(ObjectId))
        })
        .collect::<spaarc::Result<Vec<_>>>()?;
    write_spmf(std::path::Path::new(&out), &txs)?;
    eprintln!("wrote {} transactions to {out}", txs.len());
    Ok(())
}
