mod common;

use panelq_core::panel::{describe, parse_panel, write_panel, ParseOptions};
use panelq_core::{PanelDataset, PanelObservation};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_csv(rows: &[PanelObservation]) -> String {
    let mut s = String::from("region,year,sales_pc,price,gdp_pc\n");
    for o in rows {
        s.push_str(&format!("{},{},{},{},{}\n", o.region, o.year, o.sales_pc, o.price, o.gdp_pc));
    }
    s
}

#[test]
fn shuffled_rows_parse_to_the_same_dataset() {
    let d = common::synthetic_panel(&common::SyntheticPanel { regions: 2, years: 16, noise_sd: 5.0 }, 11);
    let sorted = to_csv(d.observations());
    let mut rows = d.observations().to_vec();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    let shuffled = to_csv(&rows);
    assert_ne!(sorted, shuffled);
    let a = parse_panel(sorted.as_bytes(), &ParseOptions::default()).unwrap();
    let b = parse_panel(shuffled.as_bytes(), &ParseOptions::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.regions().len(), 2);
    assert_eq!(a.years().len(), 16);
}

#[test]
fn write_then_parse_is_identity() {
    let d = common::synthetic_panel(&common::SyntheticPanel { regions: 5, years: 7, noise_sd: 5.0 }, 2);
    let mut buf = Vec::new();
    write_panel(&d, &mut buf).unwrap();
    let back = parse_panel(buf.as_slice(), &ParseOptions::default()).unwrap();
    assert_eq!(back, d);
}

#[test]
fn custom_year_range() {
    let text = "region,year,sales_pc,price,gdp_pc\nA,1850,1,1,1\n";
    assert!(parse_panel(text.as_bytes(), &ParseOptions::default()).is_err());
    let opts = ParseOptions { min_year: 1800, max_year: 1900 };
    assert!(parse_panel(text.as_bytes(), &opts).is_ok());
}

fn panel_strategy() -> impl Strategy<Value = Vec<PanelObservation>> {
    (1usize..4, 1usize..9).prop_flat_map(|(regions, years)| {
        prop::collection::vec((0.0f64..300.0, 0.5f64..6.0, 5.0f64..40.0), regions * years).prop_map(
            move |vals| {
                vals.into_iter()
                    .enumerate()
                    .map(|(i, (s, p, g))| PanelObservation {
                        region: format!("reg{}", i / years),
                        year: 2000 + (i % years) as i32,
                        sales_pc: s,
                        price: p,
                        gdp_pc: g,
                    })
                    .collect()
            },
        )
    })
}

proptest! {
    #[test]
    fn describe_is_order_invariant_and_ordered(rows in panel_strategy(), seed in any::<u64>()) {
        let d = PanelDataset::from_observations(rows.clone(), &ParseOptions::default()).unwrap();
        let mut shuffled = rows;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let e = PanelDataset::from_observations(shuffled, &ParseOptions::default()).unwrap();
        let (sd, se) = (describe(&d), describe(&e));
        prop_assert_eq!(&sd, &se);
        for s in &sd {
            let series: Vec<f64> = d.region_rows(&s.region).map(|o| o.sales_pc).collect();
            let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in [s.sales_pc, s.price, s.gdp_pc] {
                prop_assert!(v.q1 <= v.q2 && v.q2 <= v.q3);
                prop_assert!(v.sd >= 0.0);
            }
            let v = s.sales_pc;
            prop_assert!(lo <= v.q1 && v.q3 <= hi);
            if series.len() % 2 == 1 {
                let mut sorted = series.clone();
                sorted.sort_by(f64::total_cmp);
                prop_assert_eq!(v.q2, sorted[series.len() / 2]);
            }
            prop_assert_eq!(v.sd == 0.0, series.iter().all(|&x| x == series[0]));
        }
    }

    #[test]
    fn csv_round_trip(rows in panel_strategy()) {
        let d = PanelDataset::from_observations(rows, &ParseOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_panel(&d, &mut buf).unwrap();
        prop_assert_eq!(parse_panel(buf.as_slice(), &ParseOptions::default()).unwrap(), d);
    }
}
