//! Run configuration, CSV time series and binary field files.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{QhdError, Result};
use crate::experiments::{InitialDataSpec, InitialKind};
use crate::functionals::FunctionalRecord;
use crate::madelung::{Coupling, PressureLaw};
use crate::qdd::{QDDParams, QddRecord};
use crate::sl::SLParams;
use crate::spectral::{ComplexField, RealField, TorusGrid};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n1: usize,
    pub n2: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n1: 64, n2: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub m0: f64,
    pub n: u32,
    pub delta: f64,
    pub tau: f64,
    /// Relaxation times of a sweep, strictly decreasing.
    pub taus: Vec<f64>,
    pub pressure: bool,
    pub poisson: bool,
    /// Run the Hamiltonian limit (no damping, no `S/τ` term).
    pub undamped: bool,
    pub c0_cal: f64,
    pub epsilon: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            m0: 1.0,
            n: 1,
            delta: 0.25,
            tau: 0.1,
            taus: vec![0.1, 0.05, 0.025, 0.0125],
            pressure: true,
            poisson: true,
            undamped: false,
            c0_cal: 1.0,
            epsilon: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    pub monitor_every: usize,
    pub dealias: bool,
    /// Step of the drift-diffusion solver (in its own time variable).
    pub qdd_dt: f64,
    /// Horizon and spacing of the shared comparison grid of a sweep.
    pub t_prime_end: f64,
    pub t_prime_step: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Picard horizon; defaults to `τ/8`.
    pub t_star: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            t_end: 1.0,
            monitor_every: 1,
            dealias: true,
            qdd_dt: 2e-6,
            t_prime_end: 0.5,
            t_prime_step: 2e-5,
            picard_tol: 1e-10,
            picard_max_iter: 60,
            t_star: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub modes: Vec<[i64; 2]>,
    pub seed: u64,
    /// Largest `|j|∞` of a random band-limited perturbation.
    pub band: i64,
    pub velocity_amplitude: f64,
    pub velocity_modes: Vec<[i64; 2]>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            kind: InitialKind::Modal,
            amplitude: 0.05,
            modes: vec![[1, 0]],
            seed: 0,
            band: 3,
            velocity_amplitude: 0.0,
            velocity_modes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub preset: Option<String>,
    /// Overrides every upper-bound tolerance of the balance table.
    pub tolerance: Option<f64>,
    /// Dump the wave function every this many records (0 = never).
    pub checkpoint_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), preset: None, tolerance: None, checkpoint_every: 0 }
    }
}

/// Validated run configuration.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub integrator: IntegratorConfig,
    pub initial: InitialConfig,
    pub output: OutputConfig,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.chars().count(), |p| before[p + 1..].chars().count()) + 1;
    (line, column)
}

/// Parses and validates a TOML configuration; every key is optional.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        QhdError::Parse { line, column, message: e.message().to_string() }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(QhdError::Validation(format!("{name} must be > 0")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("grid.n1", self.grid.n1), ("grid.n2", self.grid.n2)] {
            if n < 8 || n % 2 != 0 {
                return Err(QhdError::Validation(format!("{name} must be even and >= 8")));
            }
        }
        let p = &self.physics;
        positive("physics.m0", p.m0)?;
        positive("physics.delta", p.delta)?;
        positive("physics.tau", p.tau)?;
        positive("physics.c0_cal", p.c0_cal)?;
        positive("physics.epsilon", p.epsilon)?;
        if p.n == 0 {
            return Err(QhdError::Validation("physics.n must be >= 1".into()));
        }
        if p.delta >= p.m0 {
            return Err(QhdError::Validation("physics.delta must be < physics.m0".into()));
        }
        for &t in &p.taus {
            positive("physics.taus", t)?;
        }
        if p.taus.windows(2).any(|w| w[1] >= w[0]) {
            return Err(QhdError::Validation("physics.taus must be strictly decreasing".into()));
        }
        let i = &self.integrator;
        positive("integrator.dt", i.dt)?;
        positive("integrator.t_end", i.t_end)?;
        positive("integrator.qdd_dt", i.qdd_dt)?;
        positive("integrator.t_prime_end", i.t_prime_end)?;
        positive("integrator.t_prime_step", i.t_prime_step)?;
        positive("integrator.picard_tol", i.picard_tol)?;
        if let Some(t) = i.t_star {
            positive("integrator.t_star", t)?;
        }
        if i.monitor_every == 0 {
            return Err(QhdError::Validation("integrator.monitor_every must be >= 1".into()));
        }
        if i.picard_max_iter == 0 {
            return Err(QhdError::Validation("integrator.picard_max_iter must be >= 1".into()));
        }
        let init = &self.initial;
        if !(init.amplitude >= 0.0 && init.amplitude.is_finite()) {
            return Err(QhdError::Validation("initial.amplitude must be >= 0".into()));
        }
        if !init.velocity_amplitude.is_finite() {
            return Err(QhdError::Validation("initial.velocity_amplitude must be finite".into()));
        }
        if init.band < 1 {
            return Err(QhdError::Validation("initial.band must be >= 1".into()));
        }
        if let Some(t) = self.output.tolerance {
            if !(t >= 0.0) {
                return Err(QhdError::Validation("output.tolerance must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.n1, self.grid.n2)
    }

    pub fn law(&self) -> PressureLaw {
        PressureLaw::new(self.physics.n, self.physics.m0)
    }

    pub fn coupling(&self) -> Coupling {
        Coupling { pressure: self.physics.pressure, poisson: self.physics.poisson }
    }

    /// Solver parameters for relaxation time `tau` (ignored in the undamped limit).
    pub fn sl_params_for(&self, tau: f64) -> SLParams {
        let tau = if self.physics.undamped { f64::INFINITY } else { tau };
        let mut p = SLParams::new(tau, self.law(), self.physics.delta, self.integrator.dt, self.integrator.t_end);
        p.coupling = self.coupling();
        p.dealias = self.integrator.dealias;
        p.monitor_every = self.integrator.monitor_every;
        p.checkpoint_every = self.output.checkpoint_every;
        p.c0_cal = self.physics.c0_cal;
        p
    }

    pub fn sl_params(&self) -> SLParams {
        self.sl_params_for(self.physics.tau)
    }

    pub fn qdd_params(&self) -> QDDParams {
        let mut p = QDDParams::new(self.law(), self.physics.delta, self.integrator.qdd_dt, self.integrator.t_end);
        p.coupling = self.coupling();
        p.dealias = self.integrator.dealias;
        p.monitor_every = self.integrator.monitor_every;
        p
    }

    pub fn initial_spec(&self) -> InitialDataSpec {
        let i = &self.initial;
        InitialDataSpec {
            kind: i.kind,
            m0: self.physics.m0,
            delta: self.physics.delta,
            amplitude: i.amplitude,
            modes: i.modes.clone(),
            seed: i.seed,
            band: i.band,
            velocity_amplitude: i.velocity_amplitude,
            velocity_modes: i.velocity_modes.clone(),
            epsilon: self.physics.epsilon,
        }
    }
}

pub const RECORD_HEADER: &str =
    "t,mass,energy,quantum,kinetic,internal,electric,gcp,entropy,combined,min_rho,cum_diss_v,cum_diss_sigma,cum_diss_v4";

/// Formats with 17 significant digits, enough to round-trip every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn record_row(r: &FunctionalRecord) -> [f64; 14] {
    [
        r.t,
        r.mass,
        r.energy,
        r.quantum,
        r.kinetic,
        r.internal,
        r.electric,
        r.gcp,
        r.entropy,
        r.combined,
        r.min_rho,
        r.cum_diss_v,
        r.cum_diss_sigma,
        r.cum_diss_v4,
    ]
}

/// Writes a CSV with a header line and one row of numbers per entry.
pub fn write_csv<W: Write>(out: W, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{header}")?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| fmt_f64(*x)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    write_csv(File::create(path)?, header, rows)
}

pub fn write_record_csv<'a, W: Write>(out: W, records: impl IntoIterator<Item = &'a FunctionalRecord>) -> Result<()> {
    write_csv(out, RECORD_HEADER, records.into_iter().map(|r| record_row(r).to_vec()))
}

pub fn write_record_csv_file(path: &Path, records: &[FunctionalRecord]) -> Result<()> {
    write_record_csv(File::create(path)?, records)
}

pub const QDD_RECORD_HEADER: &str = "t,mass,entropy,hessian_sqrt,quarter_grad4,min_rho,deviation";

pub fn write_qdd_csv_file(path: &Path, records: &[QddRecord]) -> Result<()> {
    write_csv_file(
        path,
        QDD_RECORD_HEADER,
        records.iter().map(|r| vec![r.t, r.mass, r.entropy, r.hessian_sqrt, r.quarter_grad4, r.min_rho, r.deviation]),
    )
}

/// Reads a numeric CSV written by [`write_csv`], returning its header fields and rows.
pub fn read_csv<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| QhdError::Format(e.to_string()))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| QhdError::Format(e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| QhdError::Format(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn read_record_csv<R: Read>(input: R) -> Result<Vec<FunctionalRecord>> {
    let (header, rows) = read_csv(input)?;
    if header.join(",") != RECORD_HEADER {
        return Err(QhdError::Format("unexpected record header".into()));
    }
    rows.into_iter()
        .map(|r| {
            if r.len() != 14 {
                return Err(QhdError::Format(format!("expected 14 columns, got {}", r.len())));
            }
            Ok(FunctionalRecord {
                t: r[0],
                mass: r[1],
                energy: r[2],
                quantum: r[3],
                kinetic: r[4],
                internal: r[5],
                electric: r[6],
                gcp: r[7],
                entropy: r[8],
                combined: r[9],
                min_rho: r[10],
                cum_diss_v: r[11],
                cum_diss_sigma: r[12],
                cum_diss_v4: r[13],
            })
        })
        .collect()
}

const MAGIC: &[u8; 4] = b"QHDF";
const VERSION: u32 = 1;

/// A field read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub enum StoredField {
    Real(RealField),
    Complex(ComplexField),
}

/// Field data accepted by [`dump_field`].
pub enum FieldRef<'a> {
    Real(&'a RealField),
    Complex(&'a ComplexField),
}

impl<'a> From<&'a RealField> for FieldRef<'a> {
    fn from(f: &'a RealField) -> Self {
        FieldRef::Real(f)
    }
}

impl<'a> From<&'a ComplexField> for FieldRef<'a> {
    fn from(f: &'a ComplexField) -> Self {
        FieldRef::Complex(f)
    }
}

pub fn write_field<'a, W: Write>(out: W, name: &str, field: impl Into<FieldRef<'a>>) -> Result<()> {
    let field = field.into();
    let grid = match &field {
        FieldRef::Real(f) => crate::spectral::Field::grid(*f),
        FieldRef::Complex(f) => crate::spectral::Field::grid(*f),
    };
    let name_len = u16::try_from(name.len()).map_err(|_| QhdError::Format("field name too long".into()))?;
    let mut w = BufWriter::new(out);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(grid.n1() as u32).to_le_bytes())?;
    w.write_all(&(grid.n2() as u32).to_le_bytes())?;
    match &field {
        FieldRef::Real(f) => {
            w.write_all(&[0])?;
            w.write_all(&name_len.to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            for x in f.values() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        FieldRef::Complex(f) => {
            w.write_all(&[1])?;
            w.write_all(&name_len.to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            for z in f.values() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn dump_field<'a>(path: &Path, name: &str, field: impl Into<FieldRef<'a>>) -> Result<()> {
    write_field(File::create(path)?, name, field)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(QhdError::Format("truncated field file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a field file; returns the stored name and field.
pub fn read_field(bytes: &[u8]) -> Result<(String, StoredField)> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(QhdError::Format("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(QhdError::Format(format!("unsupported version {version}")));
    }
    let (n1, n2) = (c.u32()? as usize, c.u32()? as usize);
    let grid = TorusGrid::new(n1, n2).map_err(|_| QhdError::Format(format!("bad dimensions {n1}x{n2}")))?;
    let kind = c.take(1)?[0];
    let name_len = u16::from_le_bytes(c.take(2)?.try_into().unwrap()) as usize;
    let name =
        String::from_utf8(c.take(name_len)?.to_vec()).map_err(|_| QhdError::Format("name is not UTF-8".into()))?;
    let field = match kind {
        0 => StoredField::Real(RealField::new(&grid, (0..grid.len()).map(|_| c.f64()).collect::<Result<_>>()?)),
        1 => StoredField::Complex(ComplexField::new(
            &grid,
            (0..grid.len()).map(|_| Ok(Complex64::new(c.f64()?, c.f64()?))).collect::<Result<_>>()?,
        )),
        k => return Err(QhdError::Format(format!("unknown field kind {k}"))),
    };
    if c.pos != bytes.len() {
        return Err(QhdError::Format("trailing bytes after payload".into()));
    }
    Ok((name, field))
}

pub fn load_field(path: &Path) -> Result<(String, StoredField)> {
    read_field(&std::fs::read(path)?)
}
