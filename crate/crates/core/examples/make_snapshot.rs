//! Regenerates the bundled demo snapshot under `data/snapshot/`.
//!
//!     cargo run -p si-core --example make_snapshot -- data/snapshot
//!
//! The data is synthetic: 30 fictional countries over 90 days. Daily deaths
//! grow exponentially from a per-country onset; mobility drops some days
//! before Day 0 by a per-country amount, and the growth rate falls about two
//! weeks after the drop in proportion to it. A handful of countries are
//! shaped to exercise every exclusion path (threshold never reached, short
//! history, a gap before Day 0, no mobility rows, sparse mobility).

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SEED: u64 = 20_200_415;
const DAYS: i64 = 90;

const NAMES: [&str; 30] = [
    "Aldoria", "Belmora", "Caltria", "Dravonia", "Eskaria", "Fenmark", "Galdovia", "Hestria", "Ilvania", "Jorvik",
    "Kestrel", "Lunaria", "Morvath", "Norland", "Ostrava", "Pellucia", "Quorra", "Rhovania", "Sylvara", "Tarsis",
    "Umbria", "Valdora", "Wexmoor", "Xandria", "Yarrow", "Zephyra", "Arcadia", "Borealis", "Cindera", "Delmar",
];

// (category, multiplier on the drop, noise sd in percentage points)
const CATEGORIES: [(&str, f64, f64); 6] = [
    ("retail_and_recreation", 1.0, 2.0),
    ("grocery_and_pharmacy", 0.5, 3.0),
    ("parks", 0.6, 6.0),
    ("transit_stations", 1.1, 2.0),
    ("workplaces", 0.8, 2.0),
    ("residential", -0.3, 1.0),
];

struct Country {
    name: &'static str,
    onset: f64,
    growth: f64,
    reduction: f64,
    lead: i64,
}

fn main() {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "data/snapshot".into()).into();
    fs::create_dir_all(&out).expect("create output dir");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let start = NaiveDate::from_ymd_opt(2020, 2, 15).unwrap();

    // Reduction levels cycle through the three memo buckets.
    let countries: Vec<Country> = NAMES
        .iter()
        .enumerate()
        .map(|(i, &name)| {
            let reduction = match i % 3 {
                0 => rng.random_range(0.0..0.12),
                1 => rng.random_range(0.25..0.50),
                _ => rng.random_range(0.72..0.95),
            };
            Country {
                name,
                onset: rng.random_range(22.0..38.0),
                growth: rng.random_range(0.13..0.20),
                reduction,
                lead: rng.random_range(14..19),
            }
        })
        .collect();

    let mut deaths = String::from("country,date,new_deaths\n");
    let mut mobility = String::from("country,date,category,pct_change\n");

    for (i, c) in countries.iter().enumerate() {
        let (onset, growth) = match c.name {
            // Never reach 80 cumulative deaths.
            "Quorra" => (75.0, 0.05),
            "Zephyra" => (70.0, 0.08),
            // Day 0 arrives before 20 days of history exist.
            "Fenmark" => (-6.0, 0.18),
            // Late Day 0, so the post window runs past the end of the data.
            "Sylvara" | "Cindera" => (63.0, 0.19),
            _ => (c.onset, c.growth),
        };
        let day0_est = onset + (80.0 * growth).ln() / growth;
        let drop_day = day0_est.round() as i64 - c.lead;

        let mut log_level = -growth * onset;
        for t in 0..DAYS {
            let rate = if t >= drop_day + 14 {
                growth - 0.3 * c.reduction
            } else {
                growth
            };
            log_level += rate;
            let expected = log_level.exp();
            let value = (expected * (1.0 + 0.08 * noise.sample(&mut rng))).max(0.0).round();
            let date = start + Duration::days(t);
            // A reporting gap shortly before Day 0.
            if c.name == "Ilvania" && t == day0_est.round() as i64 - 6 {
                continue;
            }
            // A negative correction row, rejected on read, leaves a post-period gap.
            if c.name == "Tarsis" && t == day0_est.round() as i64 + 4 {
                let _ = writeln!(deaths, "{},{date},-3", c.name);
                continue;
            }
            let _ = writeln!(deaths, "{},{date},{value}", c.name);
        }

        if c.name == "Morvath" {
            continue;
        }
        for (cat, mult, sd) in CATEGORIES {
            for t in 0..DAYS {
                let date = start + Duration::days(t);
                // Sparse reporting: Rhovania's transit data is missing
                // entirely and retail every other day; Delmar skips a week.
                if c.name == "Rhovania" && (cat == "transit_stations" || (cat == "retail_and_recreation" && t % 2 == 0)) {
                    continue;
                }
                if c.name == "Delmar" && (drop_day - 3..drop_day + 4).contains(&t) {
                    continue;
                }
                let ramp = ((t - drop_day) as f64 / 5.0).clamp(0.0, 1.0);
                let pct = -100.0 * c.reduction * mult * ramp + sd * noise.sample(&mut rng);
                let label = if c.name == "Lunaria" && cat == "parks" { "parks " } else { cat };
                let _ = writeln!(mobility, "{},{date},{label},{:.0}", c.name, pct);
            }
        }
        if i == 0 {
            let _ = writeln!(mobility, "{},{start},beaches,12", c.name);
        }
    }

    fs::write(out.join("deaths.csv"), deaths).expect("write deaths");
    fs::write(out.join("mobility.csv"), mobility).expect("write mobility");
    println!("wrote {}", out.display());
}
