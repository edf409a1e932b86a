//! Acceptance criterion 12: identical invocations write bit-identical result
//! files.

use std::fs;
use std::path::Path;
use std::process::Command;

const PROBLEM: &str = r#"{
  "n": 2,
  "m": 1,
  "modes": [
    {
      "A": [[0.1, 1.1], [0.1, -1.0]],
      "B": [[0.0], [1.0]],
      "e": [0.0, 1.0],
      "region": { "polygon": [[-3.0, -2.0], [-1.0, -2.0], [-1.0, 2.0], [-3.0, 2.0]] }
    },
    {
      "A": [[0.1, 1.1], [-0.9, -1.0]],
      "B": [[0.0], [1.0]],
      "e": [0.0, 0.0],
      "region": { "polygon": [[-1.0, -2.0], [1.0, -2.0], [1.0, 2.0], [-1.0, 2.0]] }
    },
    {
      "A": [[0.1, 1.1], [-1.9, -1.0]],
      "B": [[0.0], [1.0]],
      "e": [0.0, 1.0],
      "region": { "polygon": [[1.0, -2.0], [3.0, -2.0], [3.0, 2.0], [1.0, 2.0]] }
    }
  ],
  "input": { "H": [[1.0], [-1.0]], "h": [2.0, 2.0] },
  "domain": { "polygon": [[-3.0, -2.0], [3.0, -2.0], [3.0, 2.0], [-3.0, 2.0]] },
  "options": { "rho0": 2.0, "rho_min": 2.0, "max_iters_phase2": 8 }
}
"#;

fn run_synth(problem: &Path, out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_pwa-synth"))
        .args(["synth", "--seed", "0"])
        .arg("--problem")
        .arg(problem)
        .arg("--out")
        .arg(out)
        .status()
        .expect("binary launches");
    assert!(status.success(), "synth exited with {status}");
}

#[test]
fn criterion_12_reruns_write_bit_identical_results() {
    let base = Path::new(env!("CARGO_TARGET_TMPDIR")).join("determinism");
    let _ = fs::remove_dir_all(&base);
    fs::create_dir_all(&base).expect("scratch directory");
    let problem = base.join("problem.json");
    fs::write(&problem, PROBLEM).expect("problem file");

    let first = base.join("first");
    let second = base.join("second");
    run_synth(&problem, &first);
    run_synth(&problem, &second);

    let result_a = fs::read(first.join("result.json")).expect("first result");
    let result_b = fs::read(second.join("result.json")).expect("second result");
    assert_eq!(result_a, result_b, "result.json differs between identical runs");
    serde_json::from_slice::<serde_json::Value>(&result_a).expect("result is valid JSON");

    let mesh_a = fs::read(first.join("mesh.json")).expect("first mesh");
    let mesh_b = fs::read(second.join("mesh.json")).expect("second mesh");
    assert_eq!(mesh_a, mesh_b, "mesh.json differs between identical runs");

    println!(
        "PASS criterion 12: result.json ({} bytes) and mesh.json ({} bytes) bit-identical across reruns",
        result_a.len(),
        mesh_a.len()
    );
}
