//! Standalone matplotlib script for the log-log MSE plot.

use std::fmt::Write as _;
use std::path::Path;

use super::{summarize, ResultRow};
use crate::error::Result;

const HEADER: &str = "\
#!/usr/bin/env python3
# Log-log plot of mean squared error against n * alpha^2.
import matplotlib
matplotlib.use(\"Agg\")
import matplotlib.pyplot as plt
";

/// Script text for `rows`; `csv_name` is recorded as the data source.
/// Cell means are embedded, one series per `(protocol, α, s)`.
pub fn render_plot_script(rows: &[ResultRow], csv_name: &str) -> String {
    let mut out = String::from(HEADER);
    writeln!(out, "# Data: {csv_name}").unwrap();
    if rows.is_empty() {
        return out;
    }
    let cells = summarize(rows);
    out.push_str("\nSERIES = [\n");
    let mut i = 0;
    while i < cells.len() {
        let head = &cells[i];
        let mut j = i;
        while j < cells.len()
            && cells[j].protocol == head.protocol
            && cells[j].alpha == head.alpha
            && cells[j].s == head.s
        {
            j += 1;
        }
        let group = &cells[i..j];
        let xs: Vec<String> = group.iter().map(|c| format!("{:?}", c.n as f64 * c.alpha * c.alpha)).collect();
        let ys: Vec<String> = group.iter().map(|c| format!("{:?}", c.mse)).collect();
        writeln!(
            out,
            "    (\"{} alpha={} s={}\", [{}], [{}]),",
            head.protocol,
            head.alpha,
            head.s,
            xs.join(", "),
            ys.join(", ")
        )
        .unwrap();
        i = j;
    }
    out.push_str(
        "]\n\
         \n\
         fig, ax = plt.subplots()\n\
         for label, x, y in SERIES:\n\
         \x20   ax.loglog(x, y, marker=\"o\", label=label)\n\
         ax.set_xlabel(\"n alpha^2\")\n\
         ax.set_ylabel(\"MSE\")\n\
         ax.legend()\n\
         fig.savefig(__file__.rsplit(\".\", 1)[0] + \".png\", dpi=150)\n",
    );
    out
}

/// Writes the script for `rows` to `path`.
pub fn emit_plot_script(rows: &[ResultRow], csv_name: &str, path: &Path) -> Result<()> {
    std::fs::write(path, render_plot_script(rows, csv_name))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Protocol;

    #[test]
    fn empty_rows_give_header_only() {
        let s = render_plot_script(&[], "r.csv");
        assert!(!s.contains("SERIES"));
        assert!(s.starts_with("#!/usr/bin/env python3"));
    }

    #[test]
    fn one_series_per_protocol() {
        let rows: Vec<ResultRow> = [Protocol::Ni, Protocol::Si]
            .into_iter()
            .flat_map(|p| (0..3).map(move |k| ResultRow::new(p, 64 << k, 1.0, 0.5, 0, 1.1, 1.0)))
            .collect();
        let s = render_plot_script(&rows, "r.csv");
        assert_eq!(s.matches("    (\"").count(), 2);
        assert_eq!(s, render_plot_script(&rows, "r.csv"));
    }
}
