//! On-disk formats.
//!
//! Traces, ground truth and waveforms are UTF-8 CSV with `#`-prefixed
//! `key=value` header lines; reports are JSON. Floats are written with 17
//! significant digits so every value survives a write/read cycle exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::trace::{BreathMark, BreathPhase, CsiTrace, GroundTruthTrace, Report, SignConvention, Waveform};

pub const TRACE_MAGIC: &str = "# respirfi-trace v1";
pub const TRUTH_MAGIC: &str = "# respirfi-truth v1";
pub const WAVEFORM_MAGIC: &str = "# respirfi-waveform v1";

struct F(f64);

impl std::fmt::Display for F {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.16e}", self.0)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(|f| BufWriter::with_capacity(1 << 20, f)).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(|f| BufReader::with_capacity(1 << 20, f)).map_err(|e| Error::io(path, e))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::InvalidValue(format!("cannot parse {what} from {s:?}")))
}

pub fn write_trace(trace: &CsiTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_trace_to(trace, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_trace_to(trace: &CsiTrace, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "{TRACE_MAGIC}")?;
    writeln!(w, "# center_freq_hz={}", F(trace.center_freq_hz()))?;
    writeln!(w, "# bandwidth_hz={}", F(trace.bandwidth_hz()))?;
    writeln!(w, "# sample_rate_hz={}", F(trace.sample_rate_hz()))?;
    write!(w, "# subcarrier_freqs_hz=")?;
    for (i, f) in trace.subcarrier_freqs_hz().iter().enumerate() {
        if i > 0 {
            w.write_all(b",")?;
        }
        write!(w, "{}", F(*f))?;
    }
    writeln!(w)?;
    w.write_all(b"t")?;
    for k in 0..trace.n_subcarriers() {
        write!(w, ",amp_{k}")?;
    }
    writeln!(w)?;
    for (t, row) in trace.timestamps_s().iter().zip(trace.amplitudes().rows()) {
        write!(w, "{}", F(*t))?;
        for v in row {
            write!(w, ",{}", F(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<CsiTrace> {
    let path = path.as_ref();
    read_trace_from(open(path)?, path)
}

fn read_trace_from(reader: impl BufRead, path: &Path) -> Result<CsiTrace> {
    let mut lines = reader.lines();
    let mut next_line = || -> Result<Option<String>> { lines.next().transpose().map_err(|e| Error::io(path, e)) };

    match next_line()? {
        Some(l) if l.trim_end() == TRACE_MAGIC => {}
        other => return Err(Error::MalformedHeader(format!("expected {TRACE_MAGIC:?}, found {other:?}"))),
    }

    let mut center = None;
    let mut bandwidth = None;
    let mut rate = None;
    let mut freqs: Option<Vec<f64>> = None;
    let data_header = loop {
        let Some(line) = next_line()? else {
            return Err(Error::MalformedHeader("missing data header".into()));
        };
        let Some(body) = line.strip_prefix('#') else {
            break line;
        };
        let (key, value) =
            body.trim().split_once('=').ok_or_else(|| Error::MalformedHeader(format!("not key=value: {line:?}")))?;
        let header_f64 = |v: &str| {
            v.trim().parse::<f64>().map_err(|_| Error::MalformedHeader(format!("bad value for {key}: {v:?}")))
        };
        match key.trim() {
            "center_freq_hz" => center = Some(header_f64(value)?),
            "bandwidth_hz" => bandwidth = Some(header_f64(value)?),
            "sample_rate_hz" => rate = Some(header_f64(value)?),
            "subcarrier_freqs_hz" => {
                let v = value.trim();
                freqs = Some(if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(header_f64).collect::<Result<_>>()?
                });
            }
            _ => {}
        }
    };
    let missing = |k: &str| Error::MalformedHeader(format!("missing {k}"));
    let center = center.ok_or_else(|| missing("center_freq_hz"))?;
    let bandwidth = bandwidth.ok_or_else(|| missing("bandwidth_hz"))?;
    let rate = rate.ok_or_else(|| missing("sample_rate_hz"))?;
    let freqs = freqs.ok_or_else(|| missing("subcarrier_freqs_hz"))?;
    let k = freqs.len();
    if k == 0 {
        return Err(Error::DimensionMismatch("empty subcarrier list".into()));
    }

    let cols: Vec<&str> = data_header.trim_end().split(',').collect();
    if cols.first() != Some(&"t") || cols.len() != k + 1 {
        return Err(Error::DimensionMismatch(format!(
            "data header has {} amplitude columns, header lists {k} subcarriers",
            cols.len().saturating_sub(1)
        )));
    }
    for (i, c) in cols[1..].iter().enumerate() {
        if *c != format!("amp_{i}") {
            return Err(Error::MalformedHeader(format!("unexpected column {c:?}")));
        }
    }

    let mut times = Vec::new();
    let mut data = Vec::new();
    while let Some(line) = next_line()? {
        if line.trim().is_empty() {
            continue;
        }
        let mut n = 0;
        for (i, field) in line.trim_end().split(',').enumerate() {
            if i == 0 {
                times.push(parse_f64(field, "timestamp")?);
            } else {
                data.push(parse_f64(field, "amplitude")?);
            }
            n += 1;
        }
        if n != k + 1 {
            return Err(Error::DimensionMismatch(format!("row {} has {} fields, expected {}", times.len(), n, k + 1)));
        }
    }
    let amplitudes =
        Array2::from_shape_vec((times.len(), k), data).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    CsiTrace::new(rate, center, bandwidth, freqs, times, amplitudes)
}

pub fn write_truth(truth: &GroundTruthTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "{TRUTH_MAGIC}")?;
        for m in truth.breath_marks() {
            let phase = match m.phase {
                BreathPhase::InhaleStart => "inhale_start",
                BreathPhase::ExhaleStart => "exhale_start",
            };
            writeln!(w, "# breath_mark={},{phase}", F(m.time_s))?;
        }
        writeln!(w, "t,displacement")?;
        for (t, d) in truth.timestamps_s().iter().zip(truth.displacement()) {
            writeln!(w, "{},{}", F(*t), F(*d))?;
        }
        w.flush()
    };
    io(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<GroundTruthTrace> {
    let path = path.as_ref();
    let mut marks = Vec::new();
    let mut ts = Vec::new();
    let mut ds = Vec::new();
    let mut seen_header = false;
    for line in open(path)?.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if let Some(body) = line.strip_prefix('#') {
            if let Some(v) = body.trim().strip_prefix("breath_mark=") {
                let (t, phase) =
                    v.split_once(',').ok_or_else(|| Error::MalformedHeader(format!("bad breath mark {v:?}")))?;
                let phase = match phase.trim() {
                    "inhale_start" => BreathPhase::InhaleStart,
                    "exhale_start" => BreathPhase::ExhaleStart,
                    p => return Err(Error::MalformedHeader(format!("unknown phase {p:?}"))),
                };
                marks.push(BreathMark { time_s: parse_f64(t, "breath mark time")?, phase });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if !seen_header {
            if line != "t,displacement" {
                return Err(Error::MalformedHeader(format!("unexpected header {line:?}")));
            }
            seen_header = true;
            continue;
        }
        let (t, d) = line.split_once(',').ok_or_else(|| Error::DimensionMismatch(format!("bad row {line:?}")))?;
        ts.push(parse_f64(t, "timestamp")?);
        ds.push(parse_f64(d, "displacement")?);
    }
    if !seen_header {
        return Err(Error::MalformedHeader("missing t,displacement header".into()));
    }
    GroundTruthTrace::new(ts, ds, marks)
}

/// Writes per-window waveforms as `window_start_s,t,value` rows.
pub fn write_waveforms(waveforms: &[Waveform], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "{WAVEFORM_MAGIC}")?;
        writeln!(w, "window_start_s,t,value,sign_convention,sample_rate_hz")?;
        for wf in waveforms {
            let sc = match wf.sign_convention {
                SignConvention::Oriented => "oriented",
                SignConvention::Ambiguous => "ambiguous",
            };
            for (i, v) in wf.samples.iter().enumerate() {
                writeln!(w, "{},{},{},{sc},{}", F(wf.start_s), F(wf.time_of(i)), F(*v), F(wf.sample_rate_hz))?;
            }
        }
        w.flush()
    };
    io(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_waveforms(path: impl AsRef<Path>) -> Result<Vec<Waveform>> {
    let path = path.as_ref();
    let mut out: Vec<Waveform> = Vec::new();
    let mut seen_header = false;
    for line in open(path)?.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !seen_header {
            if line != "window_start_s,t,value,sign_convention,sample_rate_hz" {
                return Err(Error::MalformedHeader(format!("unexpected header {line:?}")));
            }
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::DimensionMismatch(format!("bad waveform row {line:?}")));
        }
        let start = parse_f64(f[0], "window start")?;
        let value = parse_f64(f[2], "value")?;
        let sc = match f[3] {
            "oriented" => SignConvention::Oriented,
            "ambiguous" => SignConvention::Ambiguous,
            s => return Err(Error::InvalidValue(format!("sign convention {s:?}"))),
        };
        let rate = parse_f64(f[4], "sample rate")?;
        match out.last_mut() {
            Some(wf) if wf.start_s == start => wf.samples.push(value),
            _ => out.push(Waveform::new(vec![value], rate, start, sc)?),
        }
    }
    Ok(out)
}

pub fn write_report(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, report)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let report: Report = serde_json::from_reader(open(path)?)?;
    for w in &report.windows {
        w.validate()?;
    }
    Ok(report)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    Ok(serde_json::from_reader(open(path)?)?)
}

pub fn write_json<T: serde::Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
