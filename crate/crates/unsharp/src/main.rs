use std::path::PathBuf;
use std::process::ExitCode;

use unsharp::scenario::{
    emit_report, list_scenarios, load_report_rows, run_scenario, ReportFormat, ScenarioConfig,
};

const USAGE: &str = "usage:
  unsharp run <scenario> [--config FILE] [--key=value ...]
  unsharp list-scenarios
  unsharp report --format json|csv --out PATH [--in DIR]

exit codes: 0 all checks pass, 1 any check fails, 2 configuration error";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.first().map(String::as_str) {
        Some("run") => cmd_run(&args[1..]),
        Some("list-scenarios") => {
            for (name, desc) in list_scenarios() {
                println!("{:28} {}", name, desc);
            }
            ExitCode::SUCCESS
        }
        Some("report") => cmd_report(&args[1..]),
        Some("--help") | Some("-h") | None => {
            println!("{}", USAGE);
            ExitCode::SUCCESS
        }
        Some(other) => {
            eprintln!("unknown command '{}'\n{}", other, USAGE);
            ExitCode::from(2)
        }
    }
}

fn cmd_run(args: &[String]) -> ExitCode {
    let Some(scenario) = args.first() else {
        eprintln!("run: missing scenario name\n{}", USAGE);
        return ExitCode::from(2);
    };
    let mut cfg = match ScenarioConfig::defaults(scenario) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", e);
            return ExitCode::from(2);
        }
    };
    let mut it = args[1..].iter();
    while let Some(arg) = it.next() {
        if arg == "--config" {
            let Some(path) = it.next() else {
                eprintln!("--config needs a file path");
                return ExitCode::from(2);
            };
            if let Err(e) = cfg.apply_file(&PathBuf::from(path)) {
                eprintln!("{}", e);
                return ExitCode::from(2);
            }
        } else if let Some(kv) = arg.strip_prefix("--") {
            let Some((key, value)) = kv.split_once('=') else {
                eprintln!("expected --key=value, got '{}'", arg);
                return ExitCode::from(2);
            };
            if let Err(e) = cfg.set(key, value) {
                eprintln!("{}", e);
                return ExitCode::from(2);
            }
        } else {
            eprintln!("unexpected argument '{}'", arg);
            return ExitCode::from(2);
        }
    }
    if let Err(e) = cfg.validate() {
        eprintln!("{}", e);
        return ExitCode::from(2);
    }
    match run_scenario(&cfg) {
        Ok(rows) => {
            let mut any_fail = false;
            for r in &rows {
                let status = match r.pass {
                    Some(true) => "pass",
                    Some(false) => {
                        any_fail = true;
                        "FAIL"
                    }
                    None => "    ",
                };
                let value = match r.value {
                    Some(v) => format!("{:.6e}", v),
                    None => "inf".into(),
                };
                println!("[{}] {:40} = {:>13}  {}", status, r.metric, value, r.note);
            }
            println!(
                "report written to {}",
                cfg.output_dir
                    .join(format!("{}.json", cfg.scenario))
                    .display()
            );
            if any_fail {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("{}", e);
            ExitCode::from(2)
        }
    }
}

fn cmd_report(args: &[String]) -> ExitCode {
    let mut format = None;
    let mut out = None;
    let mut input = std::env::var(unsharp::scenario::OUTPUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|_| PathBuf::from("out"));
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--format" => match it.next().map(String::as_str) {
                Some("json") => format = Some(ReportFormat::Json),
                Some("csv") => format = Some(ReportFormat::Csv),
                other => {
                    eprintln!("--format needs json or csv, got {:?}", other);
                    return ExitCode::from(2);
                }
            },
            "--out" => match it.next() {
                Some(p) => out = Some(PathBuf::from(p)),
                None => {
                    eprintln!("--out needs a path");
                    return ExitCode::from(2);
                }
            },
            "--in" => match it.next() {
                Some(p) => input = PathBuf::from(p),
                None => {
                    eprintln!("--in needs a directory");
                    return ExitCode::from(2);
                }
            },
            other => {
                eprintln!("unexpected argument '{}'", other);
                return ExitCode::from(2);
            }
        }
    }
    let (Some(format), Some(out)) = (format, out) else {
        eprintln!("report needs --format and --out\n{}", USAGE);
        return ExitCode::from(2);
    };
    // Collect rows from every scenario report under the input root, in
    // registry order for stable output.
    let mut rows = Vec::new();
    for (name, _) in list_scenarios() {
        let path = input.join(format!("{}.json", name));
        if path.exists() {
            match load_report_rows(&path) {
                Ok(mut r) => rows.append(&mut r),
                Err(e) => {
                    eprintln!("{}", e);
                    return ExitCode::from(2);
                }
            }
        }
    }
    match emit_report(&rows, format, &out) {
        Ok(()) => {
            println!("wrote {} rows to {}", rows.len(), out.display());
            if rows.iter().any(|r| r.pass == Some(false)) {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("{}", e);
            ExitCode::from(2)
        }
    }
}
