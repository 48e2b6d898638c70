//! Coefficient and norm reports as printed by the command-line tool.

use serde::{Deserialize, Serialize};

use crate::coefficients::{closed_form, CoeffError, FormulaKind, SolverReport};
use crate::error_norm::{norm_sq_closed, norm_sq_quadratic};
use crate::numfmt::real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub kind: FormulaKind,
    pub k: usize,
    pub h: f64,
    pub norm_sq_quadratic: f64,
    pub norm_sq_closed: f64,
    pub abs_difference: f64,
}

pub fn norm_report(kind: FormulaKind, k: usize, h: f64) -> Result<NormReport, CoeffError> {
    let f = closed_form(kind, k, h)?;
    let quadratic = norm_sq_quadratic(&f);
    let closed = norm_sq_closed(kind, h);
    Ok(NormReport {
        kind,
        k,
        h,
        norm_sq_quadratic: quadratic,
        norm_sq_closed: closed,
        abs_difference: (quadratic - closed).abs(),
    })
}

fn write_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

/// One row per node `β = 0..k`; `c1` is empty where the kind has no weight.
pub fn coefficients_csv(r: &SolverReport) -> String {
    let f = &r.formula;
    let rows = (0..=f.k()).map(|beta| {
        vec![
            f.kind().to_string(),
            f.k().to_string(),
            real(f.h()),
            beta.to_string(),
            real(f.c()[beta]),
            f.c1().get(beta).map(|v| real(*v)).unwrap_or_default(),
            real(r.d),
            real(r.d_plus),
            real(r.d_minus),
            real(r.b),
            real(r.residual),
        ]
    });
    write_csv(
        &[
            "kind", "k", "h", "beta", "c", "c1", "d", "d_plus", "d_minus", "b", "residual",
        ],
        rows,
    )
}

pub fn norm_csv(r: &NormReport) -> String {
    write_csv(
        &[
            "kind",
            "k",
            "h",
            "norm_sq_quadratic",
            "norm_sq_closed",
            "abs_difference",
        ],
        [vec![
            r.kind.to_string(),
            r.k.to_string(),
            real(r.h),
            real(r.norm_sq_quadratic),
            real(r.norm_sq_closed),
            real(r.abs_difference),
        ]],
    )
}
