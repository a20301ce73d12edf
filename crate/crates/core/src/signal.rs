//! Measured-trace ingestion, the velocity reconstruction chain (discrete
//! differentiation followed by zero-phase low-pass filtering) and CSV export.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::contact::ContactSample;
use crate::error::{Error, Result};
use crate::model::Trajectory;

/// Default low-pass cutoff [Hz].
pub const FC_DEFAULT: f64 = 200.0;
/// Relative tolerance on the sampling interval.
const UNIFORM_TOL: f64 = 1e-6;

/// Uniformly sampled position measurement of the passive body.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredTrace {
    pub fs: f64,
    pub t: Vec<f64>,
    pub x2: Vec<f64>,
    pub x1: Option<Vec<f64>>,
}

impl MeasuredTrace {
    /// Builds a trace, checking finiteness and uniform sampling.
    pub fn new(t: Vec<f64>, x2: Vec<f64>, x1: Option<Vec<f64>>) -> Result<Self> {
        if t.len() != x2.len() || x1.as_ref().is_some_and(|x1| x1.len() != t.len()) {
            return Err(Error::invalid("trace columns differ in length"));
        }
        if t.len() < 2 {
            return Err(Error::invalid("trace needs at least two samples"));
        }
        if let Some(i) = check_uniform(&t) {
            return Err(Error::invalid(format!("non-uniform sampling at sample {i}")));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&t) || !finite(&x2) || !x1.as_deref().map_or(true, finite) {
            return Err(Error::NonFinite("trace sample"));
        }
        let fs = (t.len() - 1) as f64 / (t[t.len() - 1] - t[0]);
        Ok(Self { fs, t, x2, x1 })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fs
    }
}

/// Index of the first sample breaking uniform spacing, if any.
fn check_uniform(t: &[f64]) -> Option<usize> {
    if t.len() < 2 {
        return None;
    }
    let dt = t[1] - t[0];
    if !(dt > 0.0) {
        return Some(1);
    }
    t.windows(2)
        .position(|w| ((w[1] - w[0]) - dt).abs() > UNIFORM_TOL * dt)
        .map(|i| i + 1)
}

/// Reads a `t,x2` or `t,x1,x2` CSV; extra columns are ignored and `#` lines skipped.
pub fn load_csv(path: impl AsRef<Path>) -> Result<MeasuredTrace> {
    let path = path.as_ref();
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(file);

    let headers = rdr
        .headers()
        .map_err(|e| parse_err(csv_line(&e), e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ti), Some(x2i)) = (col("t"), col("x2")) else {
        return Err(parse_err(1, format!("header must contain t and x2, got {headers:?}")));
    };
    let x1i = col("x1");

    let mut t = Vec::new();
    let mut x2 = Vec::new();
    let mut x1 = x1i.map(|_| Vec::new());
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(csv_line(&e), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or_default();
            let v: f64 = s
                .parse()
                .map_err(|_| parse_err(line, format!("not a number: {s:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value {s:?}")));
            }
            Ok(v)
        };
        t.push(field(ti)?);
        x2.push(field(x2i)?);
        if let (Some(i), Some(x1)) = (x1i, x1.as_mut()) {
            x1.push(field(i)?);
        }
        lines.push(line);
    }
    if let Some(i) = check_uniform(&t) {
        return Err(Error::NonUniformSampling {
            path: path.to_path_buf(),
            line: lines[i],
        });
    }
    MeasuredTrace::new(t, x2, x1).map_err(|e| parse_err(0, e.to_string()))
}

fn csv_line(e: &csv::Error) -> u64 {
    e.position().map_or(0, |p| p.line())
}

/// Discrete derivative: central differences inside, second-order one-sided at the ends.
pub fn differentiate(x: &[f64], fs: f64) -> Result<Vec<f64>> {
    if x.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 samples to differentiate, got {}",
            x.len()
        )));
    }
    if !(fs > 0.0) || !fs.is_finite() {
        return Err(Error::invalid(format!("sample rate must be > 0, got {fs}")));
    }
    let n = x.len();
    let half = 0.5 * fs;
    let mut v = Vec::with_capacity(n);
    v.push((-3.0 * x[0] + 4.0 * x[1] - x[2]) * half);
    v.extend(x.windows(3).map(|w| (w[2] - w[0]) * half));
    v.push((3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) * half);
    Ok(v)
}

/// Second-order Butterworth section from the bilinear transform.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn butterworth_lowpass(fs: f64, fc: f64) -> Self {
        let k = (std::f64::consts::PI * fc / fs).tan();
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let norm = 1.0 / (1.0 + k / q + k * k);
        let b0 = k * k * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
        }
    }

    /// Direct form II transposed, with the state preset to the steady state of `x[0]`.
    fn run(&self, x: &[f64]) -> Vec<f64> {
        let Some(&x0) = x.first() else {
            return Vec::new();
        };
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        // steady state for constant input x0 with unit DC gain
        let mut s2 = (b2 - a2) * x0;
        let mut s1 = (b1 - a1) * x0 + s2;
        x.iter()
            .map(|&xi| {
                let y = b0 * xi + s1;
                s1 = b1 * xi - a1 * y + s2;
                s2 = b2 * xi - a2 * y;
                y
            })
            .collect()
    }
}

/// Zero-phase low-pass: second-order Butterworth run forward then backward.
pub fn lowpass(v: &[f64], fs: f64, fc: f64) -> Result<Vec<f64>> {
    if !(fs > 0.0) || !fs.is_finite() {
        return Err(Error::invalid(format!("sample rate must be > 0, got {fs}")));
    }
    if !(fc > 0.0 && fc < 0.5 * fs) {
        return Err(Error::invalid(format!(
            "cutoff {fc} Hz outside (0, {}) Hz",
            0.5 * fs
        )));
    }
    let bq = Biquad::butterworth_lowpass(fs, fc);
    let mut y = bq.run(v);
    y.reverse();
    let mut y = bq.run(&y);
    y.reverse();
    Ok(y)
}

/// Magnitude response of [`lowpass`] (both passes) at frequency `f`.
pub fn lowpass_gain(fs: f64, fc: f64, f: f64) -> f64 {
    let bq = Biquad::butterworth_lowpass(fs, fc);
    let w = 2.0 * std::f64::consts::PI * f / fs;
    let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
    let num_re = bq.b[0] + bq.b[1] * c1 + bq.b[2] * c2;
    let num_im = -(bq.b[1] * s1 + bq.b[2] * s2);
    let den_re = 1.0 + bq.a[0] * c1 + bq.a[1] * c2;
    let den_im = -(bq.a[0] * s1 + bq.a[1] * s2);
    (num_re * num_re + num_im * num_im) / (den_re * den_re + den_im * den_im)
}

/// Velocity estimate from a position trace: differentiate, then low-pass.
pub fn reconstruct_velocity(x: &[f64], fs: f64, fc: f64) -> Result<Vec<f64>> {
    lowpass(&differentiate(x, fs)?, fs, fc)
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(f))
}

/// Writes a trajectory as `t,x1,x2,v2,p,f,mode` with one `# event,kind,t` line per event.
///
/// `preamble` lines are written first as `#` comments.
pub fn export_trajectory(traj: &Trajectory, path: impl AsRef<Path>, preamble: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    write_preamble(&mut w, preamble).map_err(io)?;
    writeln!(w, "t,x1,x2,v2,p,f,mode").map_err(io)?;
    for s in &traj.samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_f64(s.state.t),
            fmt_f64(s.state.x1),
            fmt_f64(s.state.x2),
            fmt_f64(s.state.v2),
            fmt_f64(s.p),
            fmt_f64(s.f),
            s.state.mode
        )
        .map_err(io)?;
    }
    for e in &traj.events {
        writeln!(w, "# event,{},{}", e.kind, fmt_f64(e.t_event)).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes a `(p, ṗ, f)` map as `p,p_dot,f`.
pub fn export_hysteresis(
    trace: &[ContactSample],
    path: impl AsRef<Path>,
    preamble: &[String],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    write_preamble(&mut w, preamble).map_err(io)?;
    writeln!(w, "p,p_dot,f").map_err(io)?;
    for s in trace {
        writeln!(w, "{},{},{}", fmt_f64(s.p), fmt_f64(s.p_dot), fmt_f64(s.f)).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes named equal-length columns as CSV.
pub fn export_columns(
    path: impl AsRef<Path>,
    names: &[&str],
    columns: &[&[f64]],
    preamble: &[String],
) -> Result<()> {
    let path = path.as_ref();
    if names.len() != columns.len() || columns.windows(2).any(|c| c[0].len() != c[1].len()) {
        return Err(Error::invalid("column names and data do not line up"));
    }
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    write_preamble(&mut w, preamble).map_err(io)?;
    writeln!(w, "{}", names.join(",")).map_err(io)?;
    let rows = columns.first().map_or(0, |c| c.len());
    for i in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| fmt_f64(c[i])).collect();
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes plain text, creating parent directories.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn write_preamble(w: &mut impl Write, preamble: &[String]) -> std::io::Result<()> {
    for line in preamble {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

/// Events recorded as `# event,kind,t` comments in an exported trajectory.
pub fn read_event_lines(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.strip_prefix("# event,") else {
            continue;
        };
        let mut parts = rest.split(',');
        let (Some(kind), Some(t)) = (parts.next(), parts.next()) else {
            return Err(Error::Parse {
                path,
                line: i as u64 + 1,
                msg: "malformed event line".into(),
            });
        };
        let t = t.trim().parse().map_err(|_| Error::Parse {
            path: path.clone(),
            line: i as u64 + 1,
            msg: format!("bad event time {t:?}"),
        })?;
        out.push((kind.to_string(), t));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "# measured\nt,x2\n0,0.1\n0.0002,0.2\n0.0004,0.3\n");
        let tr = load_csv(&p).unwrap();
        assert_eq!(tr.len(), 3);
        assert!((tr.fs - 5000.0).abs() < 1e-6);
        assert!(tr.x1.is_none());
    }

    #[test]
    fn csv_with_x1_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "t,x1,x2\n0,1,0.1\n1,2,0.2\n2,3,0.3\n");
        let tr = load_csv(&p).unwrap();
        assert_eq!(tr.x1.unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn csv_nan_row_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "t,x2\n0,0.1\n1,NaN\n2,0.3\n");
        let err = load_csv(&p).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn csv_rejects_nonuniform_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "t,x2\n0,0\n1,0\n2.5,0\n3.5,0\n");
        assert!(matches!(load_csv(&p), Err(Error::NonUniformSampling { line: 4, .. })));
        let p = write(&dir, "b.csv", "t,x2\n0,0\n1,abc\n");
        assert!(matches!(load_csv(&p), Err(Error::Parse { line: 3, .. })));
        let p = write(&dir, "c.csv", "time,pos\n0,0\n");
        assert!(matches!(load_csv(&p), Err(Error::Parse { .. })));
        assert!(matches!(load_csv(dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn differentiate_linear_and_constant() {
        let fs = 5000.0;
        let x: Vec<f64> = (0..100).map(|i| 0.1 * i as f64 / fs).collect();
        for v in differentiate(&x, fs).unwrap() {
            assert!((v - 0.1).abs() < 1e-12, "{v}");
        }
        assert!(differentiate(&[2.0; 10], fs).unwrap().iter().all(|&v| v == 0.0));
        assert!(differentiate(&[1.0, 2.0], fs).is_err());
    }

    #[test]
    fn differentiate_sine_within_taylor_bound() {
        let fs = 5000.0;
        let w = 2.0 * PI * 20.0;
        let a = 0.003;
        let x: Vec<f64> = (0..2000).map(|i| a * (w * i as f64 / fs).sin()).collect();
        let v = differentiate(&x, fs).unwrap();
        let bound = (w / fs).powi(2) * a * w;
        for (i, vi) in v.iter().enumerate().skip(1).take(1997) {
            let exact = a * w * (w * i as f64 / fs).cos();
            assert!((vi - exact).abs() <= bound, "i={i}");
        }
    }

    #[test]
    fn lowpass_unit_dc_gain() {
        let y = lowpass(&[0.37; 500], 5000.0, 200.0).unwrap();
        assert!(y.iter().all(|v| (v - 0.37).abs() < 1e-12));
        assert!((lowpass_gain(5000.0, 200.0, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lowpass_half_power_at_cutoff() {
        // -3 dB per pass, -6 dB for both
        assert!((lowpass_gain(5000.0, 200.0, 200.0) - 0.5).abs() < 1e-9);
    }

    fn steady_amplitude(y: &[f64]) -> f64 {
        let mid = &y[y.len() / 4..3 * y.len() / 4];
        mid.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn lowpass_suppresses_tone_above_cutoff() {
        let (fs, fc) = (5000.0, 200.0);
        let f = 10.0 * fc;
        let x: Vec<f64> = (0..5000).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect();
        let y = lowpass(&x, fs, fc).unwrap();
        let amp = steady_amplitude(&y);
        assert!(amp <= 0.02, "{amp}");
        // measured against the analytic response of both passes
        assert!((amp - lowpass_gain(fs, fc, f)).abs() < 1e-3);
    }

    #[test]
    fn lowpass_rejects_bad_cutoff() {
        assert!(lowpass(&[0.0; 10], 5000.0, 3000.0).is_err());
        assert!(lowpass(&[0.0; 10], 5000.0, 0.0).is_err());
    }

    #[test]
    fn lowpass_reduces_white_noise_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        let y = lowpass(&x, 5000.0, 200.0).unwrap();
        assert!(var(&y) < var(&x));
    }

    #[test]
    fn filtering_twice_never_raises_gain() {
        for f in [1.0, 50.0, 200.0, 800.0, 2400.0] {
            let g = lowpass_gain(5000.0, 200.0, f);
            assert!(g <= 1.0 + 1e-12);
            assert!(g * g <= g + 1e-15);
        }
    }

    fn cumulative_trapezoid(v: &[f64], fs: f64) -> Vec<f64> {
        let mut x = vec![0.0];
        for w in v.windows(2) {
            x.push(x.last().unwrap() + 0.5 * (w[0] + w[1]) / fs);
        }
        x
    }

    proptest! {
        #[test]
        fn differentiate_inverts_integration(f in 1.0f64..50.0, phase in 0.0f64..6.0) {
            let fs = 5000.0;
            let v: Vec<f64> = (0..400).map(|i| (2.0 * PI * f * i as f64 / fs + phase).cos()).collect();
            let x = cumulative_trapezoid(&v, fs);
            let d = differentiate(&x, fs).unwrap();
            let wmax = 2.0 * PI * f;
            for i in 1..v.len() - 1 {
                prop_assert!((d[i] - v[i]).abs() <= (wmax / fs).powi(2));
            }
        }
    }
}
