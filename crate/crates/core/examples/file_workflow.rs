//! File-based workflow through the command-line layer: write an IPD CSV and a
//! target JSON, solve weights, estimate with standard errors, and show the
//! exit code for a target outside the data.
//!
//! cargo run --example file_workflow

use calibra::cli::run;
use std::fs;

fn main() -> std::io::Result<()> {
    let dir = std::env::temp_dir().join("calibra-file-workflow");
    fs::create_dir_all(&dir)?;
    let ipd = dir.join("ipd.csv");
    let target = dir.join("target.json");
    let far = dir.join("far.json");
    let weights = dir.join("weights.csv");

    let mut rows = String::from("row_id,age,score,y\n");
    for i in 0..40 {
        let age = 40.0 + (i as f64 * 1.7) % 25.0;
        let score = ((i * 7) % 11) as f64 / 10.0;
        let y = 0.05 * age + score + if i % 3 == 0 { 0.4 } else { -0.2 };
        rows.push_str(&format!("p{i:02},{age:.1},{score:.2},{y:.3}\n"));
    }
    fs::write(&ipd, rows)?;
    fs::write(&target, r#"{"names": ["age", "score"], "means": [50.0, 0.45], "ybar0": 2.9}"#)?;
    fs::write(&far, r#"{"means": [90.0, 0.45]}"#)?;

    let path = |p: &std::path::Path| p.to_string_lossy().into_owned();
    let code = run(["calibra", "weights", "--ipd", &path(&ipd), "--target", &path(&target), "--out", &path(&weights)]);
    println!("weights exit code {code}");
    println!("{}", fs::read_to_string(&weights)?.lines().take(4).collect::<Vec<_>>().join("\n"));

    let code = run([
        "calibra", "estimate", "--ipd", &path(&ipd), "--target", &path(&target),
        "--estimand", "unanchored", "--variance", "v0,v2s,boot", "--boot-reps", "100",
    ]);
    println!("estimate exit code {code}");

    let code = run(["calibra", "weights", "--ipd", &path(&ipd), "--target", &path(&far), "--out", &path(&weights)]);
    println!("target outside the data: exit code {code}");
    Ok(())
}
