use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use proptest::prelude::*;
use windcast::ingestion::{interpolate_gaps, parse_station_reader, split, CsvFormat, WindSeries};

fn start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2007, 8, 1, 0, 0, 0).unwrap()
}

fn with_gaps(values: &[f64], gaps: &[bool]) -> WindSeries {
    let mut s = WindSeries::new(start(), values.to_vec()).unwrap();
    for (i, g) in gaps.iter().enumerate() {
        if *g {
            s.values[i] = f64::NAN;
            s.gap_mask[i] = true;
        }
    }
    s
}

fn speeds() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..40.0, 3..200)
}

proptest! {
    #[test]
    fn csv_round_trip_is_bit_exact(values in speeds()) {
        let s = WindSeries::new(start(), values).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &CsvFormat::default()).unwrap();
        let back = parse_station_reader(buf.as_slice(), Path::new("mem.csv"), &CsvFormat::default()).unwrap();
        prop_assert_eq!(back.start, s.start);
        prop_assert_eq!(back.values.len(), s.values.len());
        for (a, b) in back.values.iter().zip(&s.values) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn interpolation_is_idempotent_and_bounded(
        values in speeds(),
        seed in prop::collection::vec(any::<bool>(), 200),
    ) {
        let n = values.len();
        let gaps: Vec<bool> = (0..n).map(|i| i > 0 && i + 1 < n && seed[i]).collect();
        let s = with_gaps(&values, &gaps);
        let once = interpolate_gaps(&s, 500).unwrap();
        let twice = interpolate_gaps(&once, 500).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(&once.gap_mask, &gaps);
        // every filled value lies between its two anchors
        for i in 0..n {
            if gaps[i] {
                let l = (0..i).rev().find(|j| !gaps[*j]).unwrap();
                let r = (i + 1..n).find(|j| !gaps[*j]).unwrap();
                let (lo, hi) = (values[l].min(values[r]), values[l].max(values[r]));
                prop_assert!(once.values[i] >= lo - 1e-12 && once.values[i] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn split_partitions_the_series(n in 2usize..500, frac in 0.01f64..0.99) {
        let s = WindSeries::new(start(), vec![1.0; n]).unwrap();
        let k = ((n as f64 * frac) as usize).clamp(1, n - 1);
        let sp = split(&s, s.timestamp(k)).unwrap();
        prop_assert_eq!(sp.in_sample, 0..k);
        prop_assert_eq!(sp.out_sample, k..n);
    }
}

#[test]
fn station_file_with_sentinels_and_missing_rows() {
    let text = "MESS_DATUM,FF_10\n\
                2007-08-01 00:00,3.1\n\
                2007-08-01 00:10,-999\n\
                2007-08-01 00:30,4.0\n\
                2007-08-01 00:40,\n\
                2007-08-01 00:50,5.5\n";
    let format = CsvFormat {
        timestamp_column: "MESS_DATUM".into(),
        speed_column: "FF_10".into(),
        missing_sentinel: Some(-999.0),
    };
    let raw = parse_station_reader(text.as_bytes(), Path::new("station.csv"), &format).unwrap();
    assert_eq!(raw.gap_mask, vec![false, true, true, false, true, false]);
    let filled = interpolate_gaps(&raw, 36).unwrap();
    let expected = [3.1, 3.1 + 0.3, 3.1 + 0.6, 4.0, 4.75, 5.5];
    for (a, b) in filled.values.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn gap_limit() {
    let mut values = vec![1.0; 50];
    values[49] = 2.0;
    let gaps: Vec<bool> = (0..50).map(|i| (1..38).contains(&i)).collect();
    let s = with_gaps(&values, &gaps);
    assert!(interpolate_gaps(&s, 36).is_err());
    assert!(interpolate_gaps(&s, 37).is_ok());
}
