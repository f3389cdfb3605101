//! Acceptance suite: one pass/fail line per criterion.
//!
//! Criterion 9 additionally runs the binary under different thread counts and
//! compares its stdout byte for byte.

use std::process::{Command, ExitCode};

use stein_wilks::acceptance::{run_criterion, CRITERIA};

const BIN: &str = env!("CARGO_BIN_EXE_stein-wilks");

fn binary_stdout(threads: usize, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(BIN)
        .args(args)
        .env("STEIN_WILKS_THREADS", threads.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited with {}", out.status));
    }
    Ok(out.stdout)
}

fn binary_determinism() -> Result<(), String> {
    let commands: [&[&str]; 2] = [
        &["simulate", "--model", "exponential", "--theta0", "3", "--n", "200", "--reps", "20000", "--seed", "42"],
        &["dim-sweep", "--n", "300", "--d-grid", "1,2", "--reps", "10000", "--seed", "42"],
    ];
    for args in commands {
        let one = binary_stdout(1, args)?;
        let three = binary_stdout(3, args)?;
        if one != three {
            return Err(format!("{} output differs between 1 and 3 threads", args[0]));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let mut failures = 0;
    for (id, _) in CRITERIA {
        let line = match run_criterion(id) {
            Ok(mut report) => {
                if id == 9 {
                    match binary_determinism() {
                        Ok(()) => report.detail.push_str("; binary stdout identical"),
                        Err(e) => {
                            report.passed = false;
                            report.detail.push_str(&format!("; {e}"));
                        }
                    }
                }
                if !report.passed {
                    failures += 1;
                }
                format!(
                    "criterion {id} [{}]: {} ({:.1} s) — {}",
                    report.name,
                    if report.passed { "PASS" } else { "FAIL" },
                    report.seconds,
                    report.detail
                )
            }
            Err(e) => {
                failures += 1;
                format!("criterion {id}: FAIL — error: {e}")
            }
        };
        println!("{line}");
    }
    println!("acceptance: {} of {} criteria passed", CRITERIA.len() - failures, CRITERIA.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
