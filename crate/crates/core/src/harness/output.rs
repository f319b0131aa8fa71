use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::Result;
use crate::rates::{phi_l, psi_star, RateQuery};

use super::engine::{evaluate_coordinate, CoordinateReport};
use super::spec::{Coordinate, ExperimentSpec, GridPoint};

/// Column order of the results CSV.
pub const CSV_HEADER: [&str; 17] = [
    "d",
    "s",
    "sigma",
    "theta_family",
    "estimator",
    "preset",
    "alpha",
    "beta",
    "reps",
    "seed",
    "mse",
    "std_error",
    "phi_L",
    "psi_star",
    "ratio_to_phi",
    "worst_theta_id",
    "extra_json",
];

/// One output row. Numeric result fields are empty on error rows, and
/// `extra` then carries the error message.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub d: usize,
    /// `None` when the sparsity expression could not be resolved.
    pub s: Option<usize>,
    pub sigma: f64,
    pub theta_family: String,
    pub estimator: String,
    pub preset: String,
    pub alpha: f64,
    pub beta: f64,
    pub reps: usize,
    pub seed: u64,
    pub mse: Option<f64>,
    pub std_error: Option<f64>,
    pub phi_l: Option<f64>,
    pub psi_star: Option<f64>,
    pub ratio_to_phi: Option<f64>,
    pub worst_theta_id: Option<String>,
    pub extra: Map<String, Value>,
}

impl ResultRow {
    pub fn error(&self) -> Option<&str> {
        self.extra.get("error").and_then(Value::as_str)
    }

    /// Budget violations recorded against this row.
    pub fn check_failures(&self) -> Vec<String> {
        self.extra
            .get("check_failures")
            .and_then(Value::as_array)
            .map(|v| v.iter().filter_map(|x| x.as_str().map(str::to_owned)).collect())
            .unwrap_or_default()
    }

    fn record(&self) -> Vec<String> {
        let num = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        vec![
            self.d.to_string(),
            self.s.map(|s| s.to_string()).unwrap_or_default(),
            self.sigma.to_string(),
            self.theta_family.clone(),
            self.estimator.clone(),
            self.preset.clone(),
            self.alpha.to_string(),
            self.beta.to_string(),
            self.reps.to_string(),
            self.seed.to_string(),
            num(self.mse),
            num(self.std_error),
            num(self.phi_l),
            num(self.psi_star),
            num(self.ratio_to_phi),
            self.worst_theta_id.clone().unwrap_or_default(),
            Value::Object(self.extra.clone()).to_string(),
        ]
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| (*s).to_owned())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".to_owned())
}

fn fill_report(row: &mut ResultRow, report: &CoordinateReport, spec: &ExperimentSpec) {
    let risk = &report.risk;
    row.mse = Some(risk.mse);
    row.std_error = Some(risk.std_error);
    row.worst_theta_id = Some(risk.worst_theta_id.clone());
    if let Some(phi) = row.phi_l {
        row.ratio_to_phi = Some(risk.mse / phi);
    }
    let ratio_to_psi = row.psi_star.map(|p| risk.mse / p);
    let extra = &mut row.extra;
    extra.insert("members".into(), json!(report.members));
    if let Some(r) = ratio_to_psi {
        extra.insert("ratio_to_psi".into(), json!(r));
    }
    if let Some(h) = &report.s_hat_histogram {
        extra.insert("s_hat_histogram".into(), json!(h));
    }
    for (key, value) in [
        ("selection_exceedance", report.selection_exceedance),
        ("fallback_frequency", report.fallback_frequency),
        ("sigma_hat_coverage", report.sigma_hat_coverage),
        ("sigma_hat_fourth_moment", report.sigma_hat_fourth_moment),
    ] {
        if let Some(v) = value {
            extra.insert(key.into(), json!(v));
        }
    }
    let mut failures = Vec::new();
    if let (Some(max), Some(r)) = (spec.checks.max_ratio_to_phi, row.ratio_to_phi) {
        if !(r <= max) {
            failures.push(format!("ratio_to_phi {r} > {max}"));
        }
    }
    if let (Some(max), Some(r)) = (spec.checks.max_ratio_to_psi, ratio_to_psi) {
        if !(r <= max) {
            failures.push(format!("ratio_to_psi {r} > {max}"));
        }
    }
    if !failures.is_empty() {
        row.extra.insert("check_failures".into(), json!(failures));
    }
}

fn run_point(spec: &ExperimentSpec, point: &GridPoint) -> ResultRow {
    let mut row = ResultRow {
        d: point.d,
        s: None,
        sigma: spec.sigma,
        theta_family: point.family.label(),
        estimator: point.estimator.as_str().to_owned(),
        preset: spec.preset.preset.as_str().to_owned(),
        alpha: spec.preset.alpha,
        beta: spec.preset.beta,
        reps: spec.reps,
        seed: spec.seed,
        mse: None,
        std_error: None,
        phi_l: None,
        psi_star: None,
        ratio_to_phi: None,
        worst_theta_id: None,
        extra: Map::new(),
    };
    row.extra.insert("s_expr".into(), json!(point.s.to_string()));
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<CoordinateReport> {
        let s = point.s.resolve(point.d)?;
        row.s = Some(s);
        let q = RateQuery::new(point.d, s, spec.sigma)?;
        row.phi_l = Some(phi_l(&q));
        row.psi_star = Some(psi_star(&q));
        let coord = Coordinate {
            d: point.d,
            s,
            sigma: spec.sigma,
            family: point.family.clone(),
            estimator: point.estimator,
            config: spec.preset,
            reps: spec.reps,
            seed: spec.seed,
        };
        evaluate_coordinate(&coord)
    }));
    match outcome {
        Ok(Ok(report)) => fill_report(&mut row, &report, spec),
        Ok(Err(e)) => {
            row.extra.insert("error".into(), json!(e.to_string()));
        }
        Err(payload) => {
            row.extra.insert("error".into(), json!(format!("panic: {}", panic_message(payload))));
        }
    }
    row
}

/// Evaluates every grid point in expansion order. A failing point yields
/// a row with the coordinate echoed and the error in `extra_json`.
pub fn run_experiment(spec: &ExperimentSpec) -> Vec<ResultRow> {
    spec.expand().iter().map(|p| run_point(spec, p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(json: &str) -> ExperimentSpec {
        ExperimentSpec::from_json(json).unwrap()
    }

    #[test]
    fn grid_rows_and_columns() {
        let s = spec(
            r#"{"d_grid":[20,30,40],"s_grid":[1,2,"sqrt(d)"],"estimator":["oracle","adaptive"],
                "theta_family":"zero","reps":5,"seed":1}"#,
        );
        let rows = run_experiment(&s);
        assert_eq!(rows.len(), 18);
        let csv = to_csv_string(&rows).unwrap();
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(csv.lines().count(), 19);
        for r in &rows {
            assert!(r.error().is_none());
            assert!((r.ratio_to_phi.unwrap() - r.mse.unwrap() / r.phi_l.unwrap()).abs() < 1e-15);
        }
        assert!(rows[1].extra.contains_key("s_hat_histogram"));
        assert!(!rows[0].extra.contains_key("s_hat_histogram"));
    }

    #[test]
    fn bad_coordinates_become_error_rows() {
        let s = spec(r#"{"d_grid":[2,10],"s_grid":[20,3],"estimator":"oracle","theta_family":"zero","reps":3}"#);
        let rows = run_experiment(&s);
        assert_eq!(rows.len(), 4);
        assert!(rows[0].error().is_some() && rows[0].s.is_none());
        assert!(rows[1].error().is_some() && rows[1].s.is_none());
        assert!(rows[2].error().is_some());
        assert!(rows[3].error().is_none() && rows[3].s == Some(3));
        let csv = to_csv_string(&rows).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("2,,1,zero,oracle,practical,4,16,3,"));
    }

    #[test]
    fn checks_recorded() {
        let s = spec(
            r#"{"d_grid":[50],"s_grid":[2],"estimator":"zero","reps":4,
                "checks":{"max_ratio_to_phi":0.5,"max_ratio_to_psi":1e9}}"#,
        );
        let rows = run_experiment(&s);
        assert_eq!(rows[0].check_failures().len(), 1);
    }

    #[test]
    fn rerun_is_identical() {
        let s = spec(r#"{"d_grid":[64],"s_grid":[2,"d^1/4"],"estimator":"adaptive_unknown_sigma","reps":50,"seed":3}"#);
        assert_eq!(
            to_csv_string(&run_experiment(&s)).unwrap(),
            to_csv_string(&run_experiment(&s)).unwrap()
        );
    }
}
