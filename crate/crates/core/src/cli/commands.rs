use super::config::{BenchMode, Method, RunConfig};
use super::output::Output;
use super::CliError;
use flexseg::conic::dump_program;
use flexseg::distflow::{
    build_opf, initial_operating_point, solve_opf, ActivationContext, InterfaceWindow,
    ObjectiveDirection, OperatingPoint,
};
use flexseg::geometry::Point;
use flexseg::grid::Network;
use flexseg::misocp::{solve_misocp, write_node_log};
use flexseg::render::{layout_force, render_area, render_network, render_segmentation};
use flexseg::segmentation::{
    rank_subsets, segment_by_count, segment_probabilistic, trace_level, ProbabilisticOptions,
    Segmentation,
};
use flexseg::tracer::{
    monte_carlo_cloud_with, trace_epsilon_with, trace_radial_with, TraceOptions,
};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

fn csv_text(
    rows: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    rows(&mut w).map_err(|e| CliError::Internal(e.to_string()))?;
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn f(v: f64) -> String {
    format!("{v:.9}")
}

fn opts(cfg: &RunConfig) -> TraceOptions {
    TraceOptions {
        workers: cfg.workers,
    }
}

/// Context for `opf` and `area`: a fixed subset, a cardinality limit, or all units.
fn context(cfg: &RunConfig, net: &Network) -> ActivationContext {
    match (&cfg.subset, cfg.cardinality) {
        (Some(s), _) => ActivationContext::subset(s.iter().copied()),
        (None, Some(m)) => ActivationContext::Relaxed {
            cardinality_limit: Some(m),
        },
        (None, None) => ActivationContext::all_units(net),
    }
}

/// Flat records: one row for the interface, then per bus, branch and unit.
fn operating_point_records(net: &Network, op: &OperatingPoint) -> Result<String, CliError> {
    let inj = op.injections(net);
    csv_text(|w| {
        w.write_record([
            "record",
            "id",
            "p_kW",
            "q_kVAr",
            "v_pu",
            "l_pu",
            "activation",
        ])?;
        let r = net.reference_index();
        w.write_record([
            "interface".into(),
            net.buses[r].id.to_string(),
            f(op.interface_p),
            f(op.interface_q),
            String::new(),
            String::new(),
            String::new(),
        ])?;
        for (i, b) in net.buses.iter().enumerate() {
            w.write_record([
                "bus".into(),
                b.id.to_string(),
                f(inj[i].0),
                f(inj[i].1),
                f(op.voltages[i]),
                String::new(),
                String::new(),
            ])?;
        }
        for fl in &op.flows {
            w.write_record([
                "branch".into(),
                fl.branch.to_string(),
                f(fl.p),
                f(fl.q),
                String::new(),
                f(fl.l),
                String::new(),
            ])?;
        }
        for u in &op.flex_outputs {
            w.write_record([
                "unit".into(),
                u.unit.to_string(),
                f(u.p),
                f(u.q),
                String::new(),
                String::new(),
                f(u.activation),
            ])?;
        }
        Ok(())
    })
}

pub fn opf(cfg: &RunConfig, dump: Option<&Path>, node_log: Option<&Path>) -> Result<(), CliError> {
    let net = cfg.load_network()?;
    let dir = ObjectiveDirection::parse(&cfg.direction)?;
    if node_log.is_some() && cfg.cardinality.is_none() {
        return Err(CliError::Validation(
            "--node-log needs --cardinality".into(),
        ));
    }
    let act = context(cfg, &net);
    let window = InterfaceWindow::default();
    let mut out = Output::start(cfg, &net, "opf")?;
    if let Some(path) = dump {
        let built = build_opf(&net, dir, &act, &window)?;
        out.write_at(path, &dump_program(&built.program))?;
    }
    let op = match cfg.cardinality {
        Some(m) => {
            let none = BTreeSet::new();
            let sol = solve_misocp(&net, dir, m, &window, &none, &none)?;
            if let Some(path) = node_log {
                let mut buf = Vec::new();
                write_node_log(&sol.log, &mut buf)?;
                out.write_at(path, &String::from_utf8_lossy(&buf))?;
            }
            println!("nodes {}", sol.nodes);
            sol.point
        }
        None => solve_opf(&net, dir, &act, &window)?,
    };
    out.write("csv", &operating_point_records(&net, &op)?)?;
    let active: Vec<String> = op
        .flex_outputs
        .iter()
        .filter(|u| u.is_active())
        .map(|u| u.unit.to_string())
        .collect();
    println!("interface_p_kW {:.6}", op.interface_p);
    println!("interface_q_kVAr {:.6}", op.interface_q);
    println!("losses_kW {:.6}", op.losses_p);
    println!("exactness_residual {:e}", op.exactness_residual);
    println!("active_units {}", active.join(","));
    out.report();
    Ok(())
}

pub fn area(cfg: &RunConfig) -> Result<(), CliError> {
    let net = cfg.load_network()?;
    let act = context(cfg, &net);
    let o = opts(cfg);
    let started = Instant::now();
    let area = match cfg.method {
        Method::Epsilon => trace_epsilon_with(&net, &act, cfg.k, &o)?,
        Method::Radial => trace_radial_with(&net, &act, cfg.k, &o)?,
    };
    let elapsed = started.elapsed();
    let mut out = Output::start(cfg, &net, "area")?;
    out.write("csv", &area.to_table())?;
    let samples = if cfg.samples > 0 {
        monte_carlo_cloud_with(&net, &act, cfg.samples, cfg.seed, &o)?
    } else {
        Vec::new()
    };
    if !samples.is_empty() {
        let hull = area.hull();
        let inflated = hull.inflate_convex(0.01 * hull.diameter());
        let feasible: Vec<Point> = samples
            .iter()
            .filter(|s| s.feasible)
            .map(|s| Point::new(s.p, s.q))
            .collect();
        let inside = feasible
            .iter()
            .filter(|&&p| hull.contains_point(p, 1e-9))
            .count();
        let inside_inflated = feasible
            .iter()
            .filter(|&&p| inflated.contains_point(p, 0.0))
            .count();
        println!(
            "samples {} feasible {} inside_hull {} inside_inflated_hull {}",
            samples.len(),
            feasible.len(),
            inside,
            inside_inflated
        );
        let table = csv_text(|w| {
            w.write_record(["P_kW", "Q_kVAr", "feasible"])?;
            for s in &samples {
                w.write_record([f(s.p), f(s.q), s.feasible.to_string()])?;
            }
            Ok(())
        })?;
        out.write("samples.csv", &table)?;
    }
    out.write("svg", &render_area(&area, &samples))?;
    println!(
        "points {} flagged {} empty_intervals {} hull_area {:.3} seconds {:.3}",
        area.boundary.len(),
        area.flagged().count(),
        area.gaps.len(),
        area.hull().area(),
        elapsed.as_secs_f64()
    );
    out.report();
    Ok(())
}

fn reference_point(net: &Network) -> Result<(f64, f64), CliError> {
    let op = initial_operating_point(net)?;
    Ok((op.interface_p, op.interface_q))
}

fn write_segmentation(
    cfg: &RunConfig,
    net: &Network,
    seg: &Segmentation,
    mode: &str,
) -> Result<(), CliError> {
    let reference = reference_point(net)?;
    let mut out = Output::start(cfg, net, mode)?;
    let doc = serde_json::json!({
        "config_hash": out.hash,
        "network": net.name,
        "reference_point": [reference.0, reference.1],
        "segmentation": seg,
    });
    out.write(
        "json",
        &serde_json::to_string_pretty(&doc).expect("document serializes"),
    )?;
    out.write("svg", &render_segmentation(seg, reference))?;
    let summary = csv_text(|w| {
        w.write_record([
            "segment",
            "cardinality",
            "probability",
            "area",
            "subset",
            "flagged_points",
            "empty_intervals",
        ])?;
        for (i, s) in seg.segments.iter().enumerate() {
            let subset: Vec<String> = s.subset.iter().map(|id| id.to_string()).collect();
            w.write_record([
                i.to_string(),
                s.cardinality.to_string(),
                format!("{:.12}", s.probability),
                format!("{:.6}", s.polygon.area()),
                subset.join(";"),
                s.flagged_points.to_string(),
                s.empty_intervals.to_string(),
            ])?;
        }
        Ok(())
    })?;
    out.write("summary.csv", &summary)?;
    println!(
        "{:>7} {:>11} {:>12} {:>16}  subset",
        "segment", "cardinality", "probability", "area"
    );
    for (i, s) in seg.segments.iter().enumerate() {
        let subset: Vec<String> = s.subset.iter().map(|id| id.to_string()).collect();
        println!(
            "{i:>7} {:>11} {:>12.6} {:>16.3}  {}",
            s.cardinality,
            s.probability,
            s.polygon.area(),
            subset.join(",")
        );
    }
    if !seg.discarded.is_empty() || !seg.failures.is_empty() {
        println!(
            "discarded {} failed {}",
            seg.discarded.len(),
            seg.failures.len()
        );
    }
    if let Some(env) = &seg.envelope {
        println!(
            "envelope_area {:.3} threshold {}",
            env.area(),
            seg.threshold.unwrap_or(0.0)
        );
    }
    out.report();
    Ok(())
}

pub fn segment_count(cfg: &RunConfig) -> Result<(), CliError> {
    let net = cfg.load_network()?;
    let seg = segment_by_count(&net, cfg.k, &opts(cfg))?;
    write_segmentation(cfg, &net, &seg, "segment-count")
}

fn prob_options(cfg: &RunConfig) -> ProbabilisticOptions {
    ProbabilisticOptions {
        k: cfg.k,
        max_segments: cfg.max_segments,
        threshold: cfg.threshold,
        containment_tol: cfg.containment_tol,
    }
}

pub fn segment_prob(cfg: &RunConfig) -> Result<(), CliError> {
    let net = cfg.load_network()?;
    let seg = segment_probabilistic(&net, &prob_options(cfg), &opts(cfg))?;
    write_segmentation(cfg, &net, &seg, "segment-prob")
}

pub fn render(cfg: &RunConfig, segmentation: Option<&Path>) -> Result<(), CliError> {
    let net = cfg.load_network()?;
    match segmentation {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
            let doc: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
            let seg: Segmentation = serde_json::from_value(doc["segmentation"].clone())
                .map_err(|e| CliError::Parse(format!("{}: segmentation: {e}", path.display())))?;
            let reference: (f64, f64) = serde_json::from_value(doc["reference_point"].clone())
                .map_err(|e| {
                    CliError::Parse(format!("{}: reference_point: {e}", path.display()))
                })?;
            let mut out = Output::start(cfg, &net, "chart")?;
            out.write("svg", &render_segmentation(&seg, reference))?;
            out.report();
        }
        None => {
            let layout = layout_force(&net, cfg.layout_iterations, cfg.seed);
            let op = initial_operating_point(&net)?;
            let mut out = Output::start(cfg, &net, "network")?;
            out.write("svg", &render_network(&net, &layout, &op))?;
            println!(
                "layout iterations {} residual {:e}",
                layout.iterations, layout.residual
            );
            out.report();
        }
    }
    Ok(())
}

pub fn bench(cfg: &RunConfig) -> Result<(), CliError> {
    let net = cfg.load_network()?;
    let o = opts(cfg);
    // Each job traces one segment and is labelled for the summary.
    type Job<'a> = Box<dyn Fn() -> Result<(), CliError> + 'a>;
    let mut jobs: Vec<(String, Job)> = Vec::new();
    match cfg.bench_mode {
        BenchMode::Count => {
            for m in 0..=net.flex_units.len() {
                let (net, o, k) = (&net, o, cfg.k);
                jobs.push((
                    format!("m={m}"),
                    Box::new(move || trace_level(net, m, k, &o).map(|_| ()).map_err(Into::into)),
                ));
            }
        }
        BenchMode::Prob => {
            for r in rank_subsets(&net, Some(cfg.max_segments))? {
                let ids: Vec<String> = r.subset.iter().map(|i| i.to_string()).collect();
                let act = ActivationContext::FixedSubset { subset: r.subset };
                let (net, o, k) = (&net, o, cfg.k);
                jobs.push((
                    format!("{{{}}}", ids.join(",")),
                    Box::new(move || {
                        trace_epsilon_with(net, &act, k, &o)
                            .map(|_| ())
                            .map_err(Into::into)
                    }),
                ));
            }
        }
    }
    let mut records = Vec::new();
    for repeat in 0..cfg.repeats {
        for (id, (_, job)) in jobs.iter().enumerate() {
            let t = Instant::now();
            job()?;
            records.push((id, repeat, t.elapsed().as_secs_f64() * 1e3));
        }
    }
    let mut out = Output::start(cfg, &net, "bench")?;
    let table = csv_text(|w| {
        w.write_record(["segment", "repeat", "ms"])?;
        for (id, repeat, ms) in &records {
            w.write_record([id.to_string(), repeat.to_string(), format!("{ms:.3}")])?;
        }
        Ok(())
    })?;
    out.write("csv", &table)?;
    let mut summary = String::new();
    for (id, (label, _)) in jobs.iter().enumerate() {
        let times: Vec<f64> = records.iter().filter(|r| r.0 == id).map(|r| r.2).collect();
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let _ = writeln!(summary, "{id:>7} {label:<24} mean_ms {mean:.3}");
    }
    print!("{summary}");
    out.report();
    Ok(())
}
