//! Regenerates the synthetic corpus under `tests/fixtures/synthetic`.
//!
//! 60 trading days from 2023-06-01 (weekends and two holidays skipped), a
//! closing index around 340 whose next-day move follows the tone of that
//! day's reports, and four or five reports per day. Two reports fall on
//! weekends to exercise the non-trading-day policy.
//!
//!     cargo run --example make_fixture -- [out_dir]

use std::fs;
use std::path::PathBuf;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use factorcast::corpus::{PriceSeries, ReportCorpus, ReportDoc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SEED: u64 = 20230601;
const N_DAYS: usize = 60;

const SECTORS: &[&str] = &[
    "Semiconductor exporters",
    "Battery makers",
    "Large banks",
    "Auto manufacturers",
    "Shipbuilders",
    "Steel producers",
    "Online platforms",
    "Biotech developers",
    "Retail chains",
    "Telecom carriers",
    "Refiners",
    "Construction firms",
];

const UP: &[&str] = &[
    "{s} report strong order growth for the coming quarter",
    "Foreign inflows into {s} continue to surge",
    "Analysts upgrade earnings estimates for {s}",
    "{s} show a robust rebound in monthly shipments",
    "Margins at {s} improve as input costs ease",
    "{s} beat consensus expectations on operating profit",
];

const DOWN: &[&str] = &[
    "{s} face weaker demand from overseas buyers",
    "Foreign outflows from {s} add to selling pressure",
    "Analysts downgrade the outlook for {s}",
    "{s} warn of a slowdown in new contracts",
    "Rising costs drive losses at {s}",
    "{s} miss estimates amid margin concerns",
];

const FLAT: &[&str] = &[
    "{s} trade in a narrow range ahead of policy meetings",
    "Investors await quarterly guidance from {s}",
    "{s} keep capital spending plans unchanged",
    "Valuations of {s} sit near their five year average",
];

const MACRO_UP: &[&str] = &[
    "Exports rise for a third straight month",
    "The central bank signals easing of policy rates",
    "Consumer sentiment shows steady improving momentum",
];

const MACRO_DOWN: &[&str] = &[
    "Exports decline as global demand cools",
    "Bond yields jump on tightening fears",
    "Currency weakness raises capital outflow risk",
];

fn trading_days(start: NaiveDate, n: usize, holidays: &[NaiveDate]) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) && !holidays.contains(&d) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

fn sentence(rng: &mut ChaCha8Rng, tone: i32) -> String {
    let pool = match tone {
        t if t > 0 => UP,
        t if t < 0 => DOWN,
        _ => FLAT,
    };
    let s = SECTORS[rng.random_range(0..SECTORS.len())];
    pool[rng.random_range(0..pool.len())].replace("{s}", s)
}

fn report(rng: &mut ChaCha8Rng, date: NaiveDate, mood: f64, idx: usize) -> ReportDoc {
    let n = rng.random_range(4..=5);
    let mut body = Vec::new();
    for _ in 0..n {
        let u: f64 = rng.random();
        let tone = if u < 0.5 + 0.35 * mood {
            1
        } else if u < 0.8 + 0.1 * mood {
            -1
        } else {
            0
        };
        body.push(sentence(rng, tone));
    }
    let macro_line = if mood >= 0.0 { MACRO_UP } else { MACRO_DOWN };
    body.push(macro_line[rng.random_range(0..macro_line.len())].to_string());
    ReportDoc {
        date,
        title: format!("Daily market strategy note {} for {}", idx + 1, date.format("%B %-d")),
        body: body.join(". ") + ".",
        view_count: rng.random_range(50..5000),
    }
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic"));
    let ymd = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).unwrap();
    let days = trading_days(ymd(2023, 6, 1), N_DAYS, &[ymd(2023, 6, 6), ymd(2023, 8, 15)]);

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let noise = Normal::new(0.0, 1.5).unwrap();
    let moods: Vec<f64> = days.iter().map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut price = 340.0;
    let mut closes = Vec::with_capacity(N_DAYS);
    for (i, d) in days.iter().enumerate() {
        if i > 0 {
            price += 4.0 * moods[i - 1] + noise.sample(&mut rng);
        }
        closes.push((*d, (price * 100.0_f64).round() / 100.0));
    }
    let series = PriceSeries::new(closes).unwrap();

    let mut corpus = ReportCorpus::new();
    for (i, d) in days.iter().enumerate() {
        let n = rng.random_range(4..=5);
        for j in 0..n {
            corpus.insert(report(&mut rng, *d, moods[i], j));
        }
    }
    for weekend in [ymd(2023, 6, 10), ymd(2023, 7, 16)] {
        corpus.insert(report(&mut rng, weekend, 0.5, 9));
    }

    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("prices.csv"), series.to_csv()).unwrap();
    corpus.write_jsonl(&out.join("reports.jsonl")).unwrap();
    println!(
        "wrote {} trading days ({}..{}) and {} reports to {}",
        days.len(),
        days[0],
        days[N_DAYS - 1],
        corpus.len(),
        out.display()
    );
    for (i, d) in days.iter().enumerate() {
        if i == 28 || i == 57 {
            println!("position {i}: {d}");
        }
    }
}
