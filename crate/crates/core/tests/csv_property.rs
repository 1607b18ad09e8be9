//! Property tests for the recording CSV format: writing and re-parsing any
//! recording whose values sit on the nine-digit on-disk lattice reproduces
//! it exactly.

use std::collections::BTreeMap;
use std::io::Cursor;

use proptest::prelude::*;

use imu_auth::ingest::{parse_recording, quantize9, write_recording};
use imu_auth::types::{DeviceEvent, EventKind, SensorKind, SensorRecording, SensorSample};

fn lattice_value() -> impl Strategy<Value = f64> {
    // Nine fractional digits, magnitudes up to 1000: covers accelerometer,
    // magnetometer, and quaternion ranges.
    (-1_000_000_000_000i64..=1_000_000_000_000i64).prop_map(|n| n as f64 / 1e9)
}

fn sorted_timestamps(max_len: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(0i64..=10_000_000_000, 0..=max_len).prop_map(|mut v| {
        v.sort_unstable();
        v
    })
}

fn samples_for(kind: SensorKind) -> impl Strategy<Value = Vec<SensorSample>> {
    let n = kind.component_count();
    sorted_timestamps(12).prop_flat_map(move |ts| {
        let len = ts.len();
        prop::collection::vec(lattice_value(), len * n).prop_map(move |vals| {
            ts.iter()
                .enumerate()
                .map(|(i, &t)| {
                    SensorSample::new(t, kind, &vals[i * n..(i + 1) * n]).expect("finite lattice value")
                })
                .collect()
        })
    })
}

fn event_kind() -> impl Strategy<Value = EventKind> {
    prop_oneof![
        Just(EventKind::ScreenOn),
        Just(EventKind::ScreenOff),
        Just(EventKind::UserPresent),
    ]
}

fn events() -> impl Strategy<Value = Vec<DeviceEvent>> {
    // Event timestamps must be strictly increasing.
    let strict = sorted_timestamps(8).prop_map(|mut v| {
        v.dedup();
        v
    });
    strict.prop_flat_map(|ts| {
        let len = ts.len();
        prop::collection::vec(event_kind(), len).prop_map(move |kinds| {
            ts.iter()
                .zip(&kinds)
                .map(|(&t, &kind)| DeviceEvent { timestamp_ns: t, kind })
                .collect()
        })
    })
}

fn recording() -> impl Strategy<Value = SensorRecording> {
    let kinds = prop::collection::btree_set(
        prop_oneof![
            Just(SensorKind::Accelerometer),
            Just(SensorKind::LinearAcceleration),
            Just(SensorKind::Gravity),
            Just(SensorKind::Gyroscope),
            Just(SensorKind::Magnetometer),
            Just(SensorKind::RotationVector),
        ],
        0..=6,
    );
    (kinds, events()).prop_flat_map(|(kinds, evs)| {
        let series: Vec<_> = kinds.iter().map(|&k| samples_for(k)).collect();
        let kinds: Vec<SensorKind> = kinds.into_iter().collect();
        series.prop_map(move |per_kind| {
            let mut map = BTreeMap::new();
            for (k, s) in kinds.iter().zip(per_kind) {
                // A kind with no samples writes no rows; the format cannot
                // represent it, so leave it out entirely.
                if !s.is_empty() {
                    map.insert(*k, s);
                }
            }
            SensorRecording::new("prop-user".into(), "prop-dev".into(), map, evs.clone())
                .expect("sorted by construction")
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_parse_reproduces_recording(rec in recording()) {
        let (mut s, mut e) = (Vec::new(), Vec::new());
        write_recording(&rec, &mut s, &mut e).unwrap();
        let back = parse_recording(
            rec.user_id().clone(),
            rec.device_id().to_owned(),
            Cursor::new(s),
            Cursor::new(e),
        )
        .unwrap();
        prop_assert_eq!(back, rec);
    }

    #[test]
    fn quantize_is_idempotent(v in lattice_value()) {
        prop_assert_eq!(quantize9(v), v);
        prop_assert_eq!(quantize9(quantize9(v * 1.0000001)), quantize9(v * 1.0000001));
    }
}
