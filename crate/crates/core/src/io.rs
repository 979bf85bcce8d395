//! CSV formats: sensor dumps (`t,s1,...,sk`), stopping reports, trajectories,
//! delay logs and operating curves.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::detect::{DelayRecord, StoppingReport};
use crate::error::{Error, Result};
use crate::sim::CurvePoint;
use crate::stream::{SensorStreams, Tick};

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        kind => Error::Csv {
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Parses a sensor dump. The header must be `t` followed by at least two
/// sensor columns; ticks must increase by exactly one per row and every cell
/// must hold a finite number.
pub fn read_sensor_csv<R: Read>(reader: R) -> Result<SensorStreams> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.get(0) != Some("t") {
        return Err(Error::Csv {
            line: 1,
            message: "first column must be named `t`".into(),
        });
    }
    let k = header.len() - 1;
    if k < 2 {
        return Err(Error::Csv {
            line: 1,
            message: format!("need at least two sensor columns, got {k}"),
        });
    }
    let mut origin = None;
    let mut last: Option<Tick> = None;
    let mut series = vec![Vec::new(); k];
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(e)),
        }
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Csv { line, message };
        if record.len() != k + 1 {
            return Err(bad(format!("expected {} fields, got {}", k + 1, record.len())));
        }
        let t: Tick = record[0]
            .parse()
            .map_err(|_| bad(format!("tick `{}` is not an integer", &record[0])))?;
        if let Some(prev) = last {
            if t <= prev {
                return Err(bad(format!("tick {t} does not increase after {prev}")));
            }
            if t != prev + 1 {
                return Err(bad(format!("tick {t} skips after {prev}")));
            }
        }
        origin.get_or_insert(t);
        last = Some(t);
        for (i, cell) in record.iter().skip(1).enumerate() {
            if cell.is_empty() {
                return Err(bad(format!("missing value for sensor {}", i + 1)));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| bad(format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite value `{cell}`")));
            }
            series[i].push(v);
        }
    }
    let Some(origin) = origin else {
        return Err(Error::Csv {
            line: 1,
            message: "no data rows".into(),
        });
    };
    SensorStreams::new(origin, series)
}

pub fn read_sensor_csv_path(path: &Path) -> Result<SensorStreams> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_sensor_csv(std::io::BufReader::new(file))
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn opt(t: Option<Tick>) -> String {
    t.map_or_else(String::new, |t| t.to_string())
}

pub fn write_sensor_csv<W: Write>(w: W, streams: &SensorStreams) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["t".to_string()];
    header.extend((1..=streams.k()).map(|i| format!("s{i}")));
    out.write_record(&header).map_err(csv_error)?;
    let mut row = Vec::with_capacity(streams.k() + 1);
    for f in streams.frames() {
        row.clear();
        row.push(f.t().to_string());
        row.extend(f.values().iter().map(|v| v.to_string()));
        out.write_record(&row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// `detector,crossed_at,reported_at,b,d`, plus `crossed_s,reported_s` when a
/// sampling rate is given (tick `t` sits at `(t − origin)/rate` seconds).
/// A missing alarm leaves the tick cells empty.
pub fn write_report_csv<W: Write>(w: W, report: &StoppingReport, timing: Option<(f64, Tick)>) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["detector", "crossed_at", "reported_at", "b", "d"];
    if timing.is_some() {
        header.extend(["crossed_s", "reported_s"]);
    }
    out.write_record(&header).map_err(csv_error)?;
    let mut row = vec![
        report.detector.clone(),
        opt(report.crossed_at),
        opt(report.reported_at),
        report.b.to_string(),
        report.d.to_string(),
    ];
    if let Some((rate, origin)) = timing {
        let secs = |t: Option<Tick>| t.map_or_else(String::new, |t| ((t - origin) as f64 / rate).to_string());
        row.push(secs(report.crossed_at));
        row.push(secs(report.reported_at));
    }
    out.write_record(&row).map_err(csv_error)?;
    out.flush()?;
    Ok(())
}

/// `t,S`.
pub fn write_trajectory_csv<W: Write>(w: W, trajectory: &[(Tick, f64)]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "S"]).map_err(csv_error)?;
    for (t, s) in trajectory {
        out.write_record([t.to_string(), s.to_string()]).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// `t,iterations,converged,tau_1,...,tau_k`.
pub fn write_delays_csv<W: Write>(w: W, records: &[DelayRecord]) -> Result<()> {
    let mut out = writer(w);
    let k = records.first().map_or(0, |r| r.profile.k());
    let mut header = vec!["t".to_string(), "iterations".into(), "converged".into()];
    header.extend((1..=k).map(|i| format!("tau_{i}")));
    out.write_record(&header).map_err(csv_error)?;
    for r in records {
        let mut row = vec![
            r.t.to_string(),
            r.profile.iterations().to_string(),
            r.profile.converged().to_string(),
        ];
        row.extend(r.profile.shifts().iter().map(|s| s.to_string()));
        out.write_record(&row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// `detector,b,arl,arl_se,edd,edd_se,censored_frac`; `censored_frac` is the
/// larger of the ARL and EDD censoring fractions.
pub fn write_curve_csv<W: Write>(w: W, points: &[CurvePoint]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["detector", "b", "arl", "arl_se", "edd", "edd_se", "censored_frac"])
        .map_err(csv_error)?;
    for p in points {
        out.write_record([
            p.detector.clone(),
            p.b.to_string(),
            p.arl.mean.to_string(),
            p.arl.se.to_string(),
            p.edd.mean.to_string(),
            p.edd.se.to_string(),
            p.censored_frac().to_string(),
        ])
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}
