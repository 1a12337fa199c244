//! Plot-ready CSV tables pulled out of a finished report.

use serde_json::Value;

use super::PipelineError;

pub const FIGURES: [&str; 5] = ["kernels", "conditional_kernels", "epr_bars", "memory_profile", "intensity_regimes"];

fn block<'a>(report: &'a Value, recipe: &str) -> Result<&'a Value, PipelineError> {
    let b = &report["recipes"][recipe]["result"];
    if b.is_null() {
        return Err(PipelineError::MissingBlock { block: format!("recipes.{recipe}"), recipe: recipe.to_string() });
    }
    Ok(b)
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().map(|a| a.iter().map(|x| x.as_f64().unwrap_or(f64::NAN)).collect()).unwrap_or_default()
}

fn entries(v: &Value) -> impl Iterator<Item = (&String, &Value)> {
    v.as_object().into_iter().flatten()
}

/// CSV text for one figure. Fails with the name of the recipe to run when
/// the report lacks the block the figure reads.
pub fn emit_figure_data(report: &Value, figure: &str) -> Result<String, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    match figure {
        "kernels" => {
            let b = block(report, "global_kernels")?;
            w.write_record(["series", "x", "y", "cumulative"])?;
            for (inv, k) in entries(&b["investors"]) {
                let c = floats(&k["kernel"]["coefficients"]);
                let cum = floats(&k["cumulative"]);
                for (lag, (y, s)) in c.iter().zip(&cum).enumerate() {
                    w.write_record([inv.clone(), lag.to_string(), y.to_string(), s.to_string()])?;
                }
            }
        }
        "conditional_kernels" => {
            let b = block(report, "regime_breakdown")?;
            w.write_record(["series", "x", "y", "cumulative"])?;
            for (inv, v) in entries(&b["investors"]) {
                for (group, g) in entries(&v["groups"]) {
                    let c = floats(&g["kernel"]["coefficients"]);
                    let cum = floats(&g["cumulative"]);
                    for (lag, (y, s)) in c.iter().zip(&cum).enumerate() {
                        w.write_record([format!("{inv}:{group}"), lag.to_string(), y.to_string(), s.to_string()])?;
                    }
                }
            }
        }
        "epr_bars" => {
            let b = block(report, "epr")?;
            w.write_record(["series", "x", "y", "lower", "upper", "p_value"])?;
            for (i, (inv, e)) in entries(&b["investors"]).enumerate() {
                let ci = floats(&e["ci"]);
                let get = |k: &str| e[k].as_f64().map_or(String::new(), |x| x.to_string());
                let (lo, hi) = (ci.first().copied().unwrap_or(f64::NAN), ci.get(1).copied().unwrap_or(f64::NAN));
                w.write_record([inv.clone(), i.to_string(), get("epr"), lo.to_string(), hi.to_string(), get("p_value")])?;
            }
        }
        "memory_profile" => {
            let b = block(report, "memory")?;
            w.write_record(["series", "x", "y", "baseline"])?;
            for (inv, m) in entries(&b["investors"]) {
                let p = &m["profile"]["profile"];
                let base = p["baseline"].as_f64().unwrap_or(f64::NAN);
                for (k, y) in floats(&p["conditional_prob"]).iter().enumerate() {
                    w.write_record([inv.clone(), (k + 1).to_string(), y.to_string(), base.to_string()])?;
                }
            }
        }
        "intensity_regimes" => {
            let b = block(report, "regime_breakdown")?;
            w.write_record(["series", "x", "y", "regime"])?;
            for row in b["intensity"].as_array().into_iter().flatten() {
                let high = row[2].as_bool().unwrap_or(false);
                let y = row[1].as_f64().map_or(String::new(), |x| x.to_string());
                let regime = if high { super::HIGH } else { super::NORMAL };
                w.write_record(["intensity".to_string(), row[0].to_string(), y, regime.to_string()])?;
            }
        }
        other => {
            return Err(PipelineError::Config(format!("unknown figure `{other}`; valid: {}", FIGURES.join(", "))));
        }
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn missing_block_names_recipe() {
        let err = emit_figure_data(&json!({ "recipes": {} }), "epr_bars").unwrap_err();
        assert!(err.to_string().contains("`epr`"));
    }

    #[test]
    fn kernel_rows_per_lag() {
        let r = json!({ "recipes": { "global_kernels": { "result": { "investors": {
            "foreign": { "kernel": { "coefficients": [1.0, 0.5] }, "cumulative": [1.0, 1.5] }
        }}}}});
        let csv = emit_figure_data(&r, "kernels").unwrap();
        assert_eq!(csv, "series,x,y,cumulative\nforeign,0,1,1\nforeign,1,0.5,1.5\n");
    }
}
