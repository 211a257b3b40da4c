//! Trajectory file layout.
//!
//! Floats are written in shortest round-trip form so two identical runs
//! produce identical bytes.

use std::io::{self, Write};

use nonsmooth_ggl::{GeneralizedState, StepOutcome, Vector};

use crate::config::{Format, ModelKind};

/// Column names of the trajectory file for `model`.
pub fn columns(model: ModelKind) -> Vec<String> {
    let mut c: Vec<String> = vec!["t".into()];
    fn numbered(prefix: &'static str, n: usize) -> impl Iterator<Item = String> {
        (1..=n).map(move |i| format!("{prefix}{i}"))
    }
    match model {
        ModelKind::SliderUnilateral => {
            c.extend(numbered("theta", 3));
            c.extend(numbered("omega", 3));
            c.extend(numbered("g", 4));
            c.extend(numbered("gd", 4));
            c.extend(numbered("L", 4));
            c.extend(numbered("P", 4));
            c.extend(["E", "active_mask", "newton_iters"].map(String::from));
        }
        ModelKind::SliderBilateral => {
            c.extend(numbered("theta", 2));
            c.extend(numbered("omega", 2));
            c.extend(["g", "gd", "lambda", "psi", "E", "newton_iters"].map(String::from));
        }
        ModelKind::Ball => {
            c.extend(
                ["q", "v", "g", "gd", "L", "P", "E", "active", "newton_iters"].map(String::from),
            );
        }
    }
    c
}

/// One trajectory row: floating-point columns followed by integer columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub floats: Vec<f64>,
    pub ints: Vec<u64>,
}

impl Row {
    /// Assembles the row for a recorded state. `out` is `None` for the
    /// initial state (zero multipliers, empty active set, no iterations).
    pub fn new(
        model: ModelKind,
        state: &GeneralizedState,
        gaps: &Vector,
        gap_velocities: &Vector,
        energy: f64,
        out: Option<&StepOutcome>,
    ) -> Self {
        let nc = gaps.len();
        let zeros = Vector::zeros(nc);
        let (lambda, psi) = out.map_or((&zeros, &zeros), |o| (&o.lambda, &o.psi));
        let mut floats = Vec::with_capacity(1 + 2 * state.q.len() + 4 * nc + 1);
        floats.push(state.t);
        floats.extend(state.q.iter());
        floats.extend(state.v.iter());
        for v in [gaps, gap_velocities, lambda, psi] {
            floats.extend(v.iter());
        }
        floats.push(energy);
        let iters = out.map_or(0, |o| o.iterations() as u64);
        let mask = out.map_or(0, |o| o.active.iter().map(|&i| 1u64 << i).sum());
        let ints = match model {
            ModelKind::SliderBilateral => vec![iters],
            ModelKind::SliderUnilateral | ModelKind::Ball => vec![mask, iters],
        };
        Self { floats, ints }
    }
}

/// Shortest decimal that parses back to `x`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:?}")
}

/// Streams rows to a CSV or JSON sink.
pub struct TrajectoryWriter<W: Write> {
    sink: W,
    format: Format,
    width: usize,
    rows: usize,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(mut sink: W, format: Format, columns: &[String]) -> io::Result<Self> {
        match format {
            Format::Csv => writeln!(sink, "{}", columns.join(","))?,
            Format::Json => {
                write!(sink, "{{\"columns\":")?;
                serde_json::to_writer(&mut sink, columns)?;
                write!(sink, ",\"rows\":[")?;
            }
        }
        Ok(Self {
            sink,
            format,
            width: columns.len(),
            rows: 0,
        })
    }

    pub fn write_row(&mut self, row: &Row) -> io::Result<()> {
        let n = row.floats.len() + row.ints.len();
        if n != self.width {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("row has {n} fields, header has {}", self.width),
            ));
        }
        match self.format {
            Format::Csv => {
                let fields: Vec<String> = row
                    .floats
                    .iter()
                    .map(|x| fmt_float(*x))
                    .chain(row.ints.iter().map(u64::to_string))
                    .collect();
                writeln!(self.sink, "{}", fields.join(","))?;
            }
            Format::Json => {
                let sep = if self.rows == 0 { "\n" } else { ",\n" };
                let fields: Vec<String> = row
                    .floats
                    .iter()
                    .map(|x| {
                        if x.is_finite() {
                            fmt_float(*x)
                        } else {
                            "null".into()
                        }
                    })
                    .chain(row.ints.iter().map(u64::to_string))
                    .collect();
                write!(self.sink, "{sep}[{}]", fields.join(","))?;
            }
        }
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn finish(mut self) -> io::Result<W> {
        if self.format == Format::Json {
            writeln!(self.sink, "\n]}}")?;
        }
        self.sink.flush()?;
        Ok(self.sink)
    }
}
