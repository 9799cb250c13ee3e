//! Per-command execution: build the requested table from the library, then
//! hand it to the output layer. Scans parallelize internally through the
//! library; all file writes happen sequentially on this thread.

use crate::config::{
    lib_err, resolve, BathArg, Cli, Command, CommonArgs, Failure, FigureId, FormatArg, Settings,
    ShapeArg,
};
use crate::output::{write_table, Cell, Meta};
use std::path::{Path, PathBuf};

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Kernels(args) => kernels(&resolve(&args)?),
        Command::Green(args) => green(&resolve(&args)?),
        Command::QfiCurve(args) => qfi_curve(&resolve(&args)?),
        Command::ProtocolScan(args) => protocol_scan(&resolve(&args)?),
        Command::Fit(args) => fit(&resolve(&args)?),
        Command::Asymptotics(args) => asymptotics(&resolve(&args)?),
        Command::Figure { which, args } => figure(which, &args),
    }
}

fn bath_spec(s: &Settings) -> Result<qsense::BathSpec, Failure> {
    qsense::BathSpec::new(s.gamma, s.lambda, s.temperature).map_err(lib_err)
}

fn protocol_config(s: &Settings) -> Result<qsense::ProtocolConfig, Failure> {
    let spec = bath_spec(s)?;
    let mut cfg =
        qsense::ProtocolConfig::new(spec, s.bath.to_bath(), s.shape.to_shape(), s.r, s.t_tot)
            .map_err(lib_err)?
            .with_grid(s.step, 64)
            .map_err(lib_err)?;
    if let Some(m) = s.n_max {
        cfg = cfg.with_n_max(m);
    }
    Ok(cfg)
}

fn out_path(s: &Settings, default_stem: &str) -> PathBuf {
    s.out.clone().unwrap_or_else(|| {
        PathBuf::from(format!("{default_stem}.{}", s.format.extension()))
    })
}

fn base_meta(s: &Settings, command: &str, columns: Vec<&'static str>) -> Meta {
    Meta {
        tool: "qsense",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        gamma: s.gamma,
        lambda: s.lambda,
        temperature: s.temperature,
        shape: s.shape.name(),
        bath: s.bath.name(),
        r: None,
        r_min: None,
        r_max: None,
        r_step: None,
        t_tot: s.t_tot,
        step: s.step,
        grid_step: None,
        n_max: None,
        n_opt: None,
        h_opt: None,
        fit: None,
        columns,
    }
}

fn kernels(s: &Settings) -> Result<(), Failure> {
    let spec = bath_spec(s)?;
    let table = qsense::tabulate_kernels(&spec, s.step, s.t_tot).map_err(lib_err)?;
    let rows: Vec<Vec<Cell>> = (0..table.gamma.len())
        .map(|i| {
            vec![
                Cell::Num(i as f64 * table.step),
                Cell::Num(table.gamma[i]),
                Cell::Num(table.nu[i]),
            ]
        })
        .collect();
    let mut meta = base_meta(s, "kernels", vec!["t", "memory_kernel", "noise_kernel"]);
    meta.grid_step = Some(table.step);
    write_table(&out_path(s, "kernels"), &meta, &rows, s.format)
}

fn green(s: &Settings) -> Result<(), Failure> {
    let spec = bath_spec(s)?;
    let kernels = qsense::tabulate_kernels(&spec, s.step, s.t_tot).map_err(lib_err)?;
    let table = qsense::solve_green(&kernels, s.t_tot).map_err(lib_err)?;
    let rows: Vec<Vec<Cell>> = (0..table.g.len())
        .map(|i| {
            vec![
                Cell::Num(i as f64 * table.step),
                Cell::Num(table.g[i]),
                Cell::Num(table.gdot[i]),
                Cell::Num(table.gddot[i]),
            ]
        })
        .collect();
    let mut meta = base_meta(s, "green", vec!["t", "g", "g_dot", "g_ddot"]);
    meta.grid_step = Some(table.step);
    write_table(&out_path(s, "green"), &meta, &rows, s.format)
}

fn curve_steps(s: &Settings) -> u32 {
    ((s.t_tot / s.step).round() as u32).max(1)
}

fn qfi_curve(s: &Settings) -> Result<(), Failure> {
    let cfg = protocol_config(s)?;
    let steps = curve_steps(s);
    let curve = qsense::qfi_curve(&cfg, steps).map_err(lib_err)?;
    let rows: Vec<Vec<Cell>> = curve
        .iter()
        .map(|p| vec![Cell::Num(p.t), Cell::Num(p.h_opt), Cell::Num(p.theta_opt)])
        .collect();
    let mut meta = base_meta(s, "qfi-curve", vec!["t", "h_opt", "theta_opt"]);
    meta.r = Some(s.r);
    meta.grid_step = Some(s.t_tot / steps as f64);
    write_table(&out_path(s, "qfi-curve"), &meta, &rows, s.format)
}

fn protocol_scan(s: &Settings) -> Result<(), Failure> {
    let cfg = protocol_config(s)?;
    let cache = qsense::WindowCache::new();
    let scan = qsense::optimize_protocol(&cfg, &cache).map_err(lib_err)?;
    let rows: Vec<Vec<Cell>> = scan
        .curve
        .iter()
        .map(|&(n, h)| {
            vec![
                Cell::Int(n as i64),
                Cell::Num(s.t_tot / n as f64),
                Cell::Num(h),
            ]
        })
        .collect();
    let mut meta = base_meta(s, "protocol-scan", vec!["n", "tau", "h_total"]);
    meta.r = Some(s.r);
    meta.n_max = s.n_max;
    meta.n_opt = Some(scan.n_opt);
    meta.h_opt = Some(scan.best.h_total);
    write_table(&out_path(s, "protocol-scan"), &meta, &rows, s.format)
}

fn fit(s: &Settings) -> Result<(), Failure> {
    let (r_min, r_max, r_step) = match (s.r_min, s.r_max, s.r_step) {
        (None, None, None) => (3.0, 4.5, 0.1),
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(Failure::Config(
                "key `r-min`: a sweep needs all of r-min, r-max, r-step \
                 (or none of them for the default 3.0..4.5 by 0.1)"
                    .into(),
            ))
        }
    };
    let grid = r_grid(r_min, r_max, r_step);
    if grid.len() < 6 {
        return Err(Failure::Config(format!(
            "key `r-step`: the scaling fit needs at least 6 sweep points, \
             got {} from {r_min}..{r_max} by {r_step}",
            grid.len()
        )));
    }
    let cfg = protocol_config(s)?;
    let cache = qsense::WindowCache::new();
    let report = qsense::scaling_report(&cfg, &grid, &cache).map_err(lib_err)?;
    let rows: Vec<Vec<Cell>> = report
        .points
        .iter()
        .map(|p| {
            vec![
                Cell::Num(p.r),
                Cell::Num(p.energy),
                Cell::Int(p.n_opt as i64),
                Cell::Num(p.h_opt),
            ]
        })
        .collect();
    let (n_exp, h_exp) = match s.bath {
        BathArg::Nonmarkovian => (0.5, 0.5),
        BathArg::Markovian => (1.0 / 3.0, -2.0 / 3.0),
        // scaling_report has already rejected the ideal branch.
        BathArg::Ideal => unreachable!(),
    };
    let mut meta = base_meta(s, "fit", vec!["r", "energy", "n_opt", "h_opt"]);
    meta.r_min = Some(r_min);
    meta.r_max = Some(r_max);
    meta.r_step = Some(r_step);
    meta.n_max = s.n_max;
    meta.fit = Some(serde_json::json!({
        "n_opt": fit_json(n_exp, &report.n_fit),
        "h_opt": fit_json(h_exp, &report.h_fit),
    }));
    write_table(&out_path(s, "fit"), &meta, &rows, s.format)
}

fn r_grid(r_min: f64, r_max: f64, r_step: f64) -> Vec<f64> {
    let count = (((r_max - r_min) / r_step) + 1e-9).floor() as usize;
    (0..=count).map(|i| r_min + r_step * i as f64).collect()
}

fn fit_json(exponent: f64, fit: &qsense::ScalingFit) -> serde_json::Value {
    match *fit {
        qsense::ScalingFit::Power { amplitude, residual } => serde_json::json!({
            "model": "power",
            "exponent": exponent,
            "amplitude": amplitude,
            "residual": residual,
        }),
        qsense::ScalingFit::Shifted { plateau, drop, residual } => serde_json::json!({
            "model": "shifted_power",
            "exponent": exponent,
            "plateau": plateau,
            "drop": drop,
            "residual": residual,
        }),
    }
}

fn asymptotics(s: &Settings) -> Result<(), Failure> {
    let cfg = protocol_config(s)?;
    let a = qsense::asymptotic_qfi(&cfg).map_err(lib_err)?;
    let rows = vec![vec![
        Cell::Num(a.n_opt),
        Cell::Num(a.h_opt),
        Cell::Num(a.tau_opt),
        Cell::Bool(a.in_regime),
    ]];
    let mut meta = base_meta(s, "asymptotics", vec!["n_opt", "h_opt", "tau_opt", "in_regime"]);
    meta.r = Some(s.r);
    write_table(&out_path(s, "asymptotics"), &meta, &rows, s.format)
}

// ---------------------------------------------------------------------------
// Figure bundles
// ---------------------------------------------------------------------------

fn figure(which: FigureId, args: &CommonArgs) -> Result<(), Failure> {
    reject_fixed_flags(args)?;
    let s = resolve(args)?;
    let stem = match which {
        FigureId::Fig1a => "fig1a",
        FigureId::Fig1b => "fig1b",
        FigureId::Fig2a => "fig2a",
        FigureId::Fig2b => "fig2b",
    };
    let base = out_path(&s, stem);
    match which {
        FigureId::Fig1a => fig1a(&base, s.format),
        FigureId::Fig1b => fig1b(&base, s.format),
        FigureId::Fig2a => fig2(&base, s.format, "figure fig2a", &[BathArg::Nonmarkovian, BathArg::Markovian]),
        FigureId::Fig2b => fig2(
            &base,
            s.format,
            "figure fig2b",
            &[BathArg::Ideal, BathArg::Nonmarkovian, BathArg::Markovian],
        ),
    }
}

/// Figure bundles resolve every physics parameter internally; accepting an
/// explicit flag and then ignoring it would be worse than refusing it.
fn reject_fixed_flags(args: &CommonArgs) -> Result<(), Failure> {
    let fixed = [
        ("gamma", args.gamma.is_some()),
        ("lambda", args.lambda.is_some()),
        ("temperature", args.temperature.is_some()),
        ("shape", args.shape.is_some()),
        ("bath", args.bath.is_some()),
        ("r", args.r.is_some()),
        ("r-min", args.r_min.is_some()),
        ("r-max", args.r_max.is_some()),
        ("r-step", args.r_step.is_some()),
        ("t-tot", args.t_tot.is_some()),
        ("step", args.step.is_some()),
        ("n-max", args.n_max.is_some()),
    ];
    for (key, given) in fixed {
        if given {
            return Err(Failure::Config(format!(
                "key `{key}`: figure bundles fix the physics parameters; \
                 only --out, --format and --config apply"
            )));
        }
    }
    Ok(())
}

/// Insert `_<series>` before the extension of the base output path.
fn series_path(base: &Path, series: &str) -> PathBuf {
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "figure".into());
    let name = match base.extension() {
        Some(ext) => format!("{stem}_{series}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{series}"),
    };
    base.with_file_name(name)
}

/// Optimal single-window QFI against time at strong squeezing (r = 5), for
/// both damped baths and both force envelopes.
fn fig1a(base: &Path, format: FormatArg) -> Result<(), Failure> {
    let combos = [
        (BathArg::Nonmarkovian, ShapeArg::Constant),
        (BathArg::Nonmarkovian, ShapeArg::Resonant),
        (BathArg::Markovian, ShapeArg::Constant),
        (BathArg::Markovian, ShapeArg::Resonant),
    ];
    for (bath, shape) in combos {
        let s = Settings { bath, shape, r: 5.0, format, ..Settings::default() };
        let cfg = protocol_config(&s)?;
        let steps = curve_steps(&s);
        let curve = qsense::qfi_curve(&cfg, steps).map_err(lib_err)?;
        let rows: Vec<Vec<Cell>> = curve
            .iter()
            .map(|p| vec![Cell::Num(p.t), Cell::Num(p.h_opt), Cell::Num(p.theta_opt)])
            .collect();
        let mut meta = base_meta(&s, "figure fig1a", vec!["t", "h_opt", "theta_opt"]);
        meta.r = Some(s.r);
        meta.grid_step = Some(s.t_tot / steps as f64);
        let series = format!("{}_{}", bath.name(), shape.name());
        write_table(&series_path(base, &series), &meta, &rows, format)?;
    }
    Ok(())
}

/// Total QFI of the sequential protocol against the window count, for three
/// squeeze magnitudes straddling the single-window/many-window crossover.
fn fig1b(base: &Path, format: FormatArg) -> Result<(), Failure> {
    let cache = qsense::WindowCache::new();
    for r in [2.50, 2.66, 2.80] {
        let s = Settings { r, format, ..Settings::default() };
        let cfg = protocol_config(&s)?;
        let mut rows = Vec::with_capacity(60);
        for n in 1..=60u32 {
            let res = qsense::sequential_qfi(&cfg, n, &cache).map_err(lib_err)?;
            rows.push(vec![
                Cell::Int(n as i64),
                Cell::Num(res.tau),
                Cell::Num(res.h_total),
            ]);
        }
        let mut meta = base_meta(&s, "figure fig1b", vec!["n", "tau", "h_total"]);
        meta.r = Some(r);
        meta.n_max = Some(60);
        let series = format!("r{r:.2}");
        write_table(&series_path(base, &series), &meta, &rows, format)?;
    }
    Ok(())
}

/// Optimal window count and QFI against the squeeze magnitude, one series
/// per bath, over r = 1.0..4.5 in steps of 0.25.
fn fig2(
    base: &Path,
    format: FormatArg,
    command: &str,
    baths: &[BathArg],
) -> Result<(), Failure> {
    let rs: Vec<f64> = (0..=14).map(|i| 1.0 + 0.25 * i as f64).collect();
    let cache = qsense::WindowCache::new();
    for &bath in baths {
        let s = Settings { bath, format, ..Settings::default() };
        let cfg = protocol_config(&s)?;
        let points = qsense::sweep_r(&cfg, &rs, &cache).map_err(lib_err)?;
        let rows: Vec<Vec<Cell>> = points
            .iter()
            .map(|p| {
                vec![
                    Cell::Num(p.r),
                    Cell::Num(p.energy),
                    Cell::Int(p.n_opt as i64),
                    Cell::Num(p.h_opt),
                ]
            })
            .collect();
        let mut meta = base_meta(&s, command, vec!["r", "energy", "n_opt", "h_opt"]);
        meta.r_min = Some(rs[0]);
        meta.r_max = Some(*rs.last().expect("non-empty grid"));
        meta.r_step = Some(0.25);
        write_table(&series_path(base, bath.name()), &meta, &rows, format)?;
    }
    Ok(())
}
