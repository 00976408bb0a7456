//! How many pairs to average for a target relative error.
//!
//! Reference errors were tabulated for one setup (`lambda_ref`, `diff_ref`).
//! A path with intensity `lambda` and mean difference `diff` behaves like the
//! reference setup with its error scaled by `(lambda / lambda_ref) *
//! (diff / diff_ref)`, so the user's target is mapped into table space and
//! the table is inverted there.

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative slack when comparing interpolated errors with the target, so a
/// target equal to a table entry lands on that row.
const CMP_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    rows: Vec<(u32, f64)>,
    lambda_ref: f64,
    diff_ref: f64,
}

impl ReferenceTable {
    pub fn new(rows: Vec<(u32, f64)>, lambda_ref: f64, diff_ref: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("reference table", "no rows"));
        }
        if rows
            .iter()
            .any(|&(n, eta)| n == 0 || !(eta > 0.0) || !eta.is_finite())
        {
            return Err(Error::invalid(
                "reference table",
                "rows need n > 0 and eta > 0",
            ));
        }
        if rows
            .windows(2)
            .any(|w| !(w[0].0 < w[1].0 && w[0].1 > w[1].1))
        {
            return Err(Error::invalid(
                "reference table",
                "eta must strictly decrease as n increases",
            ));
        }
        if !(lambda_ref > 0.0 && diff_ref > 0.0) {
            return Err(Error::invalid(
                "reference table",
                "reference constants must be positive",
            ));
        }
        Ok(ReferenceTable {
            rows,
            lambda_ref,
            diff_ref,
        })
    }

    pub fn rows(&self) -> &[(u32, f64)] {
        &self.rows
    }

    pub fn lambda_ref(&self) -> f64 {
        self.lambda_ref
    }

    pub fn diff_ref(&self) -> f64 {
        self.diff_ref
    }

    /// Interpolated reference error at `n` pairs.
    ///
    /// Between rows the error follows `eta = c * n^(-p)` through both
    /// neighbours (`p = 1/2` when the rows obey the 1/sqrt(n) law). Past the
    /// last row `c / sqrt(n)` is anchored on that row. Before the first row
    /// the first interval's law is extended.
    pub fn eta_at(&self, n: f64) -> f64 {
        let rows = &self.rows;
        let last = rows[rows.len() - 1];
        if n >= f64::from(last.0) {
            return last.1 * (f64::from(last.0) / n).sqrt();
        }
        if rows.len() == 1 {
            return last.1;
        }
        let i = rows
            .iter()
            .position(|&(rn, _)| f64::from(rn) > n)
            .unwrap_or(1)
            .max(1);
        let (na, ea) = (f64::from(rows[i - 1].0), rows[i - 1].1);
        let (nb, eb) = (f64::from(rows[i].0), rows[i].1);
        let p = (ea / eb).ln() / (nb / na).ln();
        ea * (na / n).powf(p)
    }
}

impl Default for ReferenceTable {
    /// Errors of the 100/1100-byte setup at `lambda = 1000/s`, `diff = 0.8 ms`.
    fn default() -> Self {
        ReferenceTable::new(
            vec![
                (5, 0.826),
                (10, 0.611),
                (20, 0.442),
                (30, 0.355),
                (50, 0.244),
                (100, 0.139),
                (200, 0.094),
            ],
            1000.0,
            8e-4,
        )
        .expect("static table is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanQuery {
    lambda: f64,
    diff: f64,
    eta_target: f64,
}

impl PlanQuery {
    /// `lambda` in 1/s, `diff` the observed mean `D2 - D1` in seconds, and
    /// `eta_target` as a fraction in (0, 1).
    pub fn new(lambda: f64, diff: f64, eta_target: f64) -> Result<Self> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(lambda) {
            return Err(Error::InvalidQuery(format!(
                "lambda {lambda} must be positive"
            )));
        }
        if !ok(diff) {
            return Err(Error::InvalidQuery(format!(
                "delay difference {diff} must be positive"
            )));
        }
        if !ok(eta_target) || eta_target >= 1.0 {
            return Err(Error::InvalidQuery(format!(
                "target error {eta_target} must be in (0, 1)"
            )));
        }
        Ok(PlanQuery {
            lambda,
            diff,
            eta_target,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn diff(&self) -> f64 {
        self.diff
    }

    pub fn eta_target(&self) -> f64 {
        self.eta_target
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Plan {
    pub n: u64,
    /// Target mapped into reference-table space.
    pub table_eta: f64,
    /// True when the target lies below the smallest tabulated error.
    pub extrapolated: bool,
}

/// Smallest `n` whose reference error meets `q.eta_target` on the query's path.
pub fn required_measurements(q: &PlanQuery, table: &ReferenceTable) -> Plan {
    let table_eta = (q.diff / table.diff_ref) * (q.lambda / table.lambda_ref) * q.eta_target;
    let meets = |eta: f64| eta <= table_eta * (1.0 + CMP_EPS);
    let rows = table.rows();
    let (first, last) = (rows[0], rows[rows.len() - 1]);

    if meets(first.1) {
        return Plan {
            n: u64::from(first.0),
            table_eta,
            extrapolated: false,
        };
    }
    if !meets(last.1) {
        // c / sqrt(n) <= t  <=>  n >= (c / t)^2
        let c = last.1 * f64::from(last.0).sqrt();
        let bound = (c / table_eta).powi(2);
        let mut n = (bound * (1.0 - CMP_EPS)).ceil() as u64;
        while !meets(table.eta_at(n as f64)) {
            n += 1;
        }
        return Plan {
            n: n.max(u64::from(last.0) + 1),
            table_eta,
            extrapolated: true,
        };
    }
    let i = rows
        .iter()
        .position(|&(_, eta)| meets(eta))
        .expect("last row meets target");
    let lo = rows[i - 1].0;
    let n = (lo + 1..=rows[i].0)
        .find(|&n| meets(table.eta_at(f64::from(n))))
        .expect("upper row meets target");
    Plan {
        n: u64::from(n),
        table_eta,
        extrapolated: false,
    }
}

/// Closed-form count for exponential delays: the SD of the difference of two
/// `n`-sample means is `sqrt(2) / (lambda * sqrt(n))`.
pub fn analytic_required_measurements(q: &PlanQuery) -> u64 {
    let n = (2f64.sqrt() / (q.lambda * q.diff * q.eta_target)).powi(2);
    ((n * (1.0 - 1e-9)).ceil() as u64).max(1)
}
