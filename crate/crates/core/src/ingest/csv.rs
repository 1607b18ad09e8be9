//! CSV serialization of sensor recordings.
//!
//! `samples.csv` rows are `timestamp_ns,sensor,x,y,z,w` with `w` left empty
//! for 3-component kinds; `events.csv` rows are `timestamp_ns,event`. Values
//! are written with nine fractional digits. Every value a recording stores is
//! quantized to that lattice, so parse(write(rec)) reproduces the recording
//! bit for bit.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::ingest::IngestError;
use crate::types::{DeviceEvent, EventKind, SensorKind, SensorRecording, SensorSample, UserId};

pub const SAMPLES_HEADER: &str = "timestamp_ns,sensor,x,y,z,w";
pub const EVENTS_HEADER: &str = "timestamp_ns,event";

/// Snap a value to the nine-fractional-digit lattice used on disk.
pub fn quantize9(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

fn header_line<R: BufRead>(
    reader: &mut R,
    file: &'static str,
    expected: &'static str,
) -> Result<(), IngestError> {
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let got = line.trim_end_matches(['\n', '\r']);
    if got != expected {
        return Err(IngestError::Schema {
            file,
            expected,
            got: got.to_owned(),
        });
    }
    Ok(())
}

fn row_err(file: &'static str, line: usize, msg: impl Into<String>) -> IngestError {
    IngestError::Row {
        file,
        line,
        msg: msg.into(),
    }
}

fn parse_f64(s: &str, file: &'static str, line: usize) -> Result<f64, IngestError> {
    s.parse::<f64>()
        .map_err(|_| row_err(file, line, format!("bad number {s:?}")))
}

/// Parse one recording from its two CSV streams. Malformed rows are reported
/// with their 1-based line number.
pub fn parse_recording<R1: BufRead, R2: BufRead>(
    user_id: UserId,
    device_id: String,
    mut samples: R1,
    mut events: R2,
) -> Result<SensorRecording, IngestError> {
    const SF: &str = "samples.csv";
    const EF: &str = "events.csv";

    header_line(&mut samples, SF, SAMPLES_HEADER)?;
    let mut by_kind: BTreeMap<SensorKind, Vec<SensorSample>> = BTreeMap::new();
    let mut buf = String::new();
    let mut line_no = 1usize;
    loop {
        buf.clear();
        if samples.read_line(&mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let line = buf.trim_end_matches(['\n', '\r']);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(row_err(SF, line_no, format!("expected 6 fields, got {}", fields.len())));
        }
        let ts: i64 = fields[0]
            .parse()
            .map_err(|_| row_err(SF, line_no, format!("bad timestamp {:?}", fields[0])))?;
        let kind = SensorKind::from_name(fields[1])
            .ok_or_else(|| row_err(SF, line_no, format!("unknown sensor kind {:?}", fields[1])))?;
        let mut vals = [0.0f64; 4];
        for (i, f) in fields[2..5].iter().enumerate() {
            vals[i] = parse_f64(f, SF, line_no)?;
        }
        let n = kind.component_count();
        if n == 4 {
            vals[3] = parse_f64(fields[5], SF, line_no)?;
        } else if !fields[5].is_empty() {
            return Err(row_err(SF, line_no, format!("unexpected w value {:?} for {kind}", fields[5])));
        }
        let sample = SensorSample::new(ts, kind, &vals[..n])
            .map_err(|e| row_err(SF, line_no, e.to_string()))?;
        by_kind.entry(kind).or_default().push(sample);
    }

    header_line(&mut events, EF, EVENTS_HEADER)?;
    let mut evs = Vec::new();
    let mut line_no = 1usize;
    loop {
        buf.clear();
        if events.read_line(&mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let line = buf.trim_end_matches(['\n', '\r']);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(row_err(EF, line_no, format!("expected 2 fields, got {}", fields.len())));
        }
        let ts: i64 = fields[0]
            .parse()
            .map_err(|_| row_err(EF, line_no, format!("bad timestamp {:?}", fields[0])))?;
        let kind = EventKind::from_name(fields[1])
            .ok_or_else(|| row_err(EF, line_no, format!("unknown event {:?}", fields[1])))?;
        evs.push(DeviceEvent {
            timestamp_ns: ts,
            kind,
        });
    }

    SensorRecording::new(user_id, device_id, by_kind, evs).map_err(IngestError::Order)
}

/// Write a recording to its two CSV sinks in timestamp order per sensor,
/// sensors in canonical order.
pub fn write_recording<W1: Write, W2: Write>(
    rec: &SensorRecording,
    samples: &mut W1,
    events: &mut W2,
) -> Result<(), IngestError> {
    writeln!(samples, "{SAMPLES_HEADER}")?;
    for kind in rec.kinds() {
        for s in rec.samples(kind) {
            let v = s.values();
            write!(samples, "{},{}", s.timestamp_ns, kind.name())?;
            for x in v {
                write!(samples, ",{x:.9}")?;
            }
            if v.len() == 3 {
                write!(samples, ",")?;
            }
            writeln!(samples)?;
        }
    }
    writeln!(events, "{EVENTS_HEADER}")?;
    for e in rec.events() {
        writeln!(events, "{},{}", e.timestamp_ns, e.kind.name())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(samples: &str, events: &str) -> Result<SensorRecording, IngestError> {
        parse_recording(
            "u".into(),
            "d".into(),
            Cursor::new(samples.as_bytes()),
            Cursor::new(events.as_bytes()),
        )
    }

    #[test]
    fn minimal_well_formed_input() {
        let s = "timestamp_ns,sensor,x,y,z,w\n\
                 100,ACCELEROMETER,0.100000000,0.200000000,9.800000000,\n\
                 200,ACCELEROMETER,0.100000000,0.200000000,9.800000000,\n\
                 300,ACCELEROMETER,0.100000000,0.200000000,9.800000000,\n";
        let e = "timestamp_ns,event\n300,USER_PRESENT\n";
        let rec = parse(s, e).unwrap();
        assert_eq!(rec.samples(SensorKind::Accelerometer).len(), 3);
        assert_eq!(rec.events().len(), 1);
        assert_eq!(rec.events()[0].kind, EventKind::UserPresent);
    }

    #[test]
    fn unknown_sensor_kind_reports_line() {
        let s = "timestamp_ns,sensor,x,y,z,w\n\
                 100,ACCELEROMETER,0.0,0.0,0.0,\n\
                 200,FOO,0.0,0.0,0.0,\n";
        let err = parse(s, "timestamp_ns,event\n").unwrap_err();
        match err {
            IngestError::Row { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("FOO"));
            }
            other => panic!("expected Row error, got {other:?}"),
        }
    }

    #[test]
    fn bad_header_is_schema_error() {
        let err = parse("time,sensor\n", "timestamp_ns,event\n").unwrap_err();
        assert!(matches!(err, IngestError::Schema { .. }));
    }

    #[test]
    fn non_finite_value_is_row_error() {
        let s = "timestamp_ns,sensor,x,y,z,w\n100,GYROSCOPE,NaN,0.0,0.0,\n";
        let err = parse(s, "timestamp_ns,event\n").unwrap_err();
        assert!(matches!(err, IngestError::Row { line: 2, .. }));
    }

    #[test]
    fn rotation_vector_requires_w() {
        let s = "timestamp_ns,sensor,x,y,z,w\n100,ROTATION_VECTOR,0.0,0.0,0.0,\n";
        let err = parse(s, "timestamp_ns,event\n").unwrap_err();
        assert!(matches!(err, IngestError::Row { line: 2, .. }));
    }

    #[test]
    fn non_monotonic_events_are_order_error() {
        let e = "timestamp_ns,event\n200,SCREEN_ON\n100,USER_PRESENT\n";
        let err = parse("timestamp_ns,sensor,x,y,z,w\n", e).unwrap_err();
        assert!(matches!(err, IngestError::Order(_)));
    }

    #[test]
    fn empty_recording_writes_headers_only() {
        let rec = SensorRecording::new("u".into(), "d".into(), BTreeMap::new(), vec![]).unwrap();
        let (mut s, mut e) = (Vec::new(), Vec::new());
        write_recording(&rec, &mut s, &mut e).unwrap();
        assert_eq!(String::from_utf8(s).unwrap(), "timestamp_ns,sensor,x,y,z,w\n");
        assert_eq!(String::from_utf8(e).unwrap(), "timestamp_ns,event\n");
    }

    #[test]
    fn write_then_parse_is_identity() {
        let mut by_kind: BTreeMap<SensorKind, Vec<SensorSample>> = BTreeMap::new();
        by_kind.insert(
            SensorKind::RotationVector,
            vec![SensorSample::new(
                5,
                SensorKind::RotationVector,
                &[quantize9(0.1234567891), quantize9(-0.5), quantize9(0.25), quantize9(0.82)],
            )
            .unwrap()],
        );
        by_kind.insert(
            SensorKind::Magnetometer,
            vec![
                SensorSample::new(1, SensorKind::Magnetometer, &[22.0, quantize9(-43.125), 0.0]).unwrap(),
                SensorSample::new(9, SensorKind::Magnetometer, &[quantize9(1e-9), 0.0, quantize9(-0.000000001)]).unwrap(),
            ],
        );
        let events = vec![
            DeviceEvent { timestamp_ns: 3, kind: EventKind::ScreenOn },
            DeviceEvent { timestamp_ns: 7, kind: EventKind::UserPresent },
        ];
        let rec = SensorRecording::new("u3".into(), "dev".into(), by_kind, events).unwrap();
        let (mut s, mut e) = (Vec::new(), Vec::new());
        write_recording(&rec, &mut s, &mut e).unwrap();
        let back = parse_recording(
            rec.user_id().clone(),
            rec.device_id().to_owned(),
            Cursor::new(s),
            Cursor::new(e),
        )
        .unwrap();
        assert_eq!(back, rec);
    }
}
