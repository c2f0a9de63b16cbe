use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use lrcc::baseline::{lr_lloyd, InitMode, LloydOptions};
use lrcc::dataset::{
    gen_balanced_mixture, gen_quarter_spheres, gen_recovery_recipe, gen_unbalanced_gaussian, load_labels,
    load_mts, random_low_rank_means, save_labels, save_mts, seeded_rng, LabelVector, MixtureSpec,
    ObservationSet, QuarterSphereParams,
};
use lrcc::eval::{ari, nmi, pca_embed};
use lrcc::graph::{connected_components, gaussian_weights, knn_graph, WeightedGraph};
use lrcc::solver::{alm_solve, clusterpath, extract_clusters, ProblemSpec};
use lrcc::theory::{asymptotic_check, cluster_means, prediction_bound, recovery_check};

use crate::error::{CliError, CliResult};
use crate::manifest::ManifestBuilder;
use crate::settings::Settings;

const DEFAULT_GRAPH_K: usize = 10;

fn load_data(s: &Settings) -> CliResult<ObservationSet> {
    Ok(load_mts(Settings::require(&s.data, "data")?)?)
}

fn load_truth(s: &Settings, n: usize) -> CliResult<Option<LabelVector>> {
    let Some(path) = &s.labels else {
        return Ok(None);
    };
    let labels = load_labels(path)?;
    if labels.len() != n {
        return Err(CliError::usage(format!(
            "{} has {} labels but the data has {n} samples",
            path.display(),
            labels.len()
        )));
    }
    Ok(Some(labels))
}

/// The edge list if one is given, otherwise a k-NN graph with unit or
/// Gaussian weights.
fn resolve_graph(s: &Settings, obs: &ObservationSet) -> CliResult<WeightedGraph> {
    if let Some(path) = &s.edges {
        return Ok(WeightedGraph::load_edge_list(path, obs.n())?);
    }
    if obs.n() == 1 && s.graph_k.is_none() {
        return Ok(WeightedGraph::new(1, Vec::new(), Vec::new())?);
    }
    let k = s.graph_k.unwrap_or(DEFAULT_GRAPH_K.min(obs.n() - 1));
    if k == 0 || k >= obs.n() {
        return Err(CliError::usage(format!(
            "--graph-k must lie in 1..{} for {} samples",
            obs.n(),
            obs.n()
        )));
    }
    let g = knn_graph(obs, k)?;
    Ok(match s.kernel_scale {
        Some(phi) => gaussian_weights(obs, &g, phi)?,
        None => g,
    })
}

fn metrics(truth: Option<&LabelVector>, pred: &[usize]) -> CliResult<Value> {
    Ok(match truth {
        Some(t) => json!({ "ari": ari(t.labels(), pred)?, "nmi": nmi(t.labels(), pred)? }),
        None => Value::Null,
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, format!("{text}\n")).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn centroid_set(centroids: &[Vec<f64>], d1: usize, d2: usize) -> CliResult<ObservationSet> {
    Ok(ObservationSet::new(centroids.len(), d1, d2, centroids.concat())?)
}

// A closed stdout (e.g. piped into `head`) is not an error for the run.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn print(value: &impl serde::Serialize) {
    emit(&serde_json::to_string_pretty(value).expect("output serializes"));
}

pub fn gen(s: &Settings) -> CliResult<()> {
    let name = Settings::require(&s.generator, "generator")?.as_str();
    let out = s.out_dir()?;
    let seed = s.seed();
    let noise = s.noise.unwrap_or(0.1);
    let d1 = s.d1.unwrap_or(20);
    let d2 = s.d2.unwrap_or(10);
    let (obs, labels, means, params) = match name {
        "quarter-spheres" => {
            let p = QuarterSphereParams::new(s.n_per.unwrap_or(100), d1, d2, noise);
            let (obs, labels) = gen_quarter_spheres(&p, seed)?;
            (obs, labels, None, serde_json::to_value(&p).expect("params"))
        }
        "unbalanced" => {
            let sizes = s.sizes.clone().unwrap_or_else(|| vec![200, 200, 200, 10, 10, 10, 10, 10]);
            let sizes: [usize; 8] = sizes
                .try_into()
                .map_err(|v: Vec<usize>| CliError::usage(format!("--sizes needs 8 entries, got {}", v.len())))?;
            let (obs, labels) = gen_unbalanced_gaussian(&sizes, d1, d2, noise, seed)?;
            let params = json!({ "sizes": sizes, "d1": d1, "d2": d2, "noise": noise });
            (obs, labels, None, params)
        }
        "mixture" => {
            let k = s.k.unwrap_or(3);
            let rank = s.rank.unwrap_or(2);
            let n_per = s.n_per.unwrap_or(50);
            let mut rng = seeded_rng(seed);
            let means = random_low_rank_means(&mut rng, k, rank, d1, d2)?;
            let spec = MixtureSpec {
                weights: vec![1.0 / k as f64; k],
                ranks: vec![rank; k],
                sigma: noise,
                means: means.clone(),
            };
            let (obs, labels) = gen_balanced_mixture(&spec, n_per, seed.wrapping_add(1))?;
            let params = json!({ "k": k, "rank": rank, "n_per": n_per, "d1": d1, "d2": d2, "noise": noise });
            (obs, labels, Some(means), params)
        }
        "recovery" => {
            let k = s.k.unwrap_or(4);
            let rank = s.rank.unwrap_or(2);
            let n_per = s.n_per.unwrap_or(50);
            let (obs, labels, means) = gen_recovery_recipe(k, rank, d1, d2, n_per, noise, seed)?;
            let params = json!({ "k": k, "rank": rank, "n_per": n_per, "d1": d1, "d2": d2, "noise": noise });
            (obs, labels, Some(means), params)
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown generator {other:?}; expected quarter-spheres, unbalanced, mixture or recovery"
            )))
        }
    };
    let mut m = ManifestBuilder::new("gen", s).params(json!({ "generator": name, "n": obs.n(), "params": params }));
    let data_path = out.join("data.mts");
    save_mts(&obs, &data_path)?;
    m.output(&data_path)?;
    let label_path = out.join("labels.txt");
    save_labels(labels.labels(), &label_path)?;
    m.output(&label_path)?;
    if let Some(means) = means {
        let path = out.join("means.mts");
        save_mts(&ObservationSet::from_matrices(&means)?, &path)?;
        m.output(&path)?;
    }
    let manifest = m.finish();
    emit(&manifest.write(out)?);
    Ok(())
}

pub fn graph(s: &Settings) -> CliResult<()> {
    let obs = load_data(s)?;
    let out = s.out_dir()?;
    let g = resolve_graph(s, &obs)?;
    let comps = connected_components(g.n(), g.edges())?;
    let path = out.join("edges.txt");
    g.save_edge_list(&path)?;
    let mut m = ManifestBuilder::new("graph", s);
    m.output(&path)?;
    let w = g.weights();
    let summary = json!({
        "n": g.n(),
        "edges": g.num_edges(),
        "components": comps.count,
        "min_weight": w.iter().cloned().fold(f64::INFINITY, f64::min),
        "max_weight": w.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    });
    m.finish().write(out)?;
    print(&summary);
    Ok(())
}

pub fn fit(s: &Settings) -> CliResult<()> {
    let obs = load_data(s)?;
    let truth = load_truth(s, obs.n())?;
    let out = s.out_dir()?;
    let g1 = *Settings::require(&s.gamma1, "gamma1")?;
    let g2 = *Settings::require(&s.gamma2, "gamma2")?;
    let opts = s.solver_options()?;
    let spec = ProblemSpec::new(&obs, resolve_graph(s, &obs)?, g1, g2)?;
    let mut m = ManifestBuilder::new("fit", s);
    let report_path = out.join("report.json");
    let (state, report) = match alm_solve(&spec, &opts) {
        Ok(r) => r,
        Err(e) => {
            write_json(&report_path, &json!({ "error": e.to_string() }))?;
            m.report(&report_path);
            m.finish().write(out)?;
            return Err(CliError::Solver(e.to_string()));
        }
    };
    let clustering = extract_clusters(&spec, &state, opts.merge_tol)?;
    let label_path = out.join("labels.txt");
    save_labels(&clustering.labels, &label_path)?;
    m.output(&label_path)?;
    let cent_path = out.join("centroids.mts");
    save_mts(&centroid_set(&clustering.centroids, clustering.d1, clustering.d2)?, &cent_path)?;
    m.output(&cent_path)?;
    let summary = json!({
        "gamma1": g1,
        "gamma2": g2,
        "converged": report.converged,
        "clusters": clustering.num_clusters(),
        "ranks": clustering.ranks,
        "objective": clustering.objective,
        "metrics": metrics(truth.as_ref(), &clustering.labels)?,
    });
    write_json(&report_path, &json!({ "summary": summary, "solve": report }))?;
    m.report(&report_path);
    m.finish().write(out)?;
    print(&summary);
    if !report.converged {
        return Err(CliError::Solver(
            report.message.unwrap_or_else(|| "solver did not converge".into()),
        ));
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn path(s: &Settings) -> CliResult<()> {
    let obs = load_data(s)?;
    let truth = load_truth(s, obs.n())?;
    let out = s.out_dir()?;
    let grid1 = match (&s.gamma1_grid, s.gamma1) {
        (Some(g), _) => g.clone(),
        (None, Some(g)) => vec![g],
        (None, None) => return Err(CliError::usage("--gamma1-grid or --gamma1 is required")),
    };
    let grid2 = match (&s.gamma2_grid, s.gamma2) {
        (Some(g), _) => g.clone(),
        (None, Some(g)) => vec![g],
        (None, None) => return Err(CliError::usage("--gamma2-grid or --gamma2 is required")),
    };
    let opts = s.solver_options()?;
    let graph = resolve_graph(s, &obs)?;
    let theory = match &truth {
        Some(t) => Some(recovery_check(&obs, t, &graph, grid1[0], grid2[0])?),
        None => None,
    };
    let template = ProblemSpec::new(&obs, graph, grid1[0], grid2[0])?;
    let points = clusterpath(&template, &grid1, &grid2, &opts, s.workers.unwrap_or(1))?;
    let mut csv = String::from("gamma1,gamma2,clusters,ari,nmi,region,converged,error\n");
    let mut failures = 0;
    for p in &points {
        let (clusters, converged) = match (&p.clustering, &p.report) {
            (Some(c), Some(r)) => (c.num_clusters().to_string(), r.converged.to_string()),
            _ => (String::new(), String::new()),
        };
        let (a, n) = match (&truth, &p.clustering) {
            (Some(t), Some(c)) => (Some(ari(t.labels(), &c.labels)?), Some(nmi(t.labels(), &c.labels)?)),
            _ => (None, None),
        };
        let region = theory
            .as_ref()
            .map(|r| r.at(p.gamma1, p.gamma2).region.as_str())
            .unwrap_or("");
        if p.error.is_some() || converged == "false" {
            failures += 1;
        }
        let err = p.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(
            csv,
            "{},{},{clusters},{},{},{region},{converged},{err}",
            p.gamma1,
            p.gamma2,
            fmt_opt(a),
            fmt_opt(n)
        )
        .expect("string write");
    }
    let csv_path = out.join("sweep.csv");
    write_text(&csv_path, &csv)?;
    let mut m = ManifestBuilder::new("path", s);
    m.output(&csv_path)?;
    m.finish().write(out)?;
    print(&json!({ "points": points.len(), "failures": failures, "sweep": csv_path }));
    Ok(())
}

fn load_means(s: &Settings, obs: &ObservationSet, labels: &LabelVector) -> CliResult<Vec<Vec<f64>>> {
    match &s.means {
        Some(path) => {
            let means = load_mts(path)?;
            if means.n() != labels.k() || means.d1() != obs.d1() || means.d2() != obs.d2() {
                return Err(CliError::usage(format!(
                    "{} holds {} blocks of {}x{}, expected {} of {}x{}",
                    path.display(),
                    means.n(),
                    means.d1(),
                    means.d2(),
                    labels.k(),
                    obs.d1(),
                    obs.d2()
                )));
            }
            Ok((0..means.n()).map(|i| means.sample(i).to_vec()).collect())
        }
        None => Ok(cluster_means(obs, labels)?),
    }
}

pub fn check(s: &Settings) -> CliResult<()> {
    let obs = load_data(s)?;
    let truth = load_truth(s, obs.n())?.ok_or_else(|| CliError::usage("--labels is required"))?;
    let out = s.out_dir()?;
    let g1 = *Settings::require(&s.gamma1, "gamma1")?;
    let g2 = *Settings::require(&s.gamma2, "gamma2")?;
    let graph = resolve_graph(s, &obs)?;
    let mode = s.mode.as_deref().unwrap_or("recovery");
    let result = match mode {
        "recovery" => {
            let r = recovery_check(&obs, &truth, &graph, g1, g2)?;
            let sqrt_d2 = (r.d2 as f64).sqrt();
            json!({
                "mode": mode,
                "region": r.region.as_str(),
                "boundaries": {
                    "gamma1_min": r.gamma1_min,
                    "separation": {
                        "equation": "gamma1 * w_max + gamma2 * sqrt_d2 = delta",
                        "w_max": r.w_max,
                        "sqrt_d2": sqrt_d2,
                        "delta": r.delta,
                        "gamma1_intercept": r.gamma1_intercept(),
                        "gamma2_intercept": r.gamma2_intercept(),
                    },
                },
                "delta_defined": r.delta.is_some(),
                "report": r,
            })
        }
        "asymptotic" => {
            if s.means.is_none() {
                return Err(CliError::usage("--means is required for asymptotic mode"));
            }
            let sigma = *Settings::require(&s.sigma, "sigma")?;
            let means = load_means(s, &obs, &truth)?;
            // Radius in noise units; the chi mass inside `t` is negligible
            // unless `t` is on the order of sqrt(d).
            let t = s.t.unwrap_or((obs.dim() as f64).sqrt() + 3.0);
            let eps = s.epsilon.unwrap_or(0.01);
            let r = asymptotic_check(&obs, &truth, &means, sigma, &graph, t, eps, g1, g2)?;
            json!({ "mode": mode, "report": r })
        }
        "prediction" => {
            if s.means.is_none() {
                return Err(CliError::usage("--means is required for prediction mode"));
            }
            let sigma = *Settings::require(&s.sigma, "sigma")?;
            let means = load_means(s, &obs, &truth)?;
            let x0: Vec<f64> = truth.labels().iter().flat_map(|&c| means[c].iter().cloned()).collect();
            let spec = ProblemSpec::new(&obs, graph.clone(), g1, g2)?;
            let (state, solve) = alm_solve(&spec, &s.solver_options()?)?;
            let r = prediction_bound(&x0, &graph, sigma, g1, g2, obs.d1(), obs.d2(), Some(&state.x))?;
            json!({ "mode": mode, "holds": r.holds(), "solver_converged": solve.converged, "report": r })
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown check mode {other:?}; expected recovery, asymptotic or prediction"
            )))
        }
    };
    let path = out.join("check.json");
    write_json(&path, &result)?;
    let mut m = ManifestBuilder::new("check", s);
    m.output(&path)?;
    m.finish().write(out)?;
    print(&result);
    Ok(())
}

pub fn baseline(s: &Settings) -> CliResult<()> {
    let obs = load_data(s)?;
    let truth = load_truth(s, obs.n())?;
    let k = *Settings::require(&s.k, "k")?;
    let mut opts = LloydOptions::new(k, s.rank.unwrap_or(obs.d2()));
    opts.seed = s.seed();
    if let Some(it) = s.max_iter {
        opts.max_iter = it;
    }
    if let Some(init) = &s.init {
        opts.init = serde_json::from_value::<InitMode>(Value::String(init.clone())).map_err(|_| {
            CliError::usage(format!("unknown init {init:?}; expected random-assignment or spectral"))
        })?;
    }
    let out = s.out_dir()?;
    let res = lr_lloyd(&obs, &opts)?;
    let mut m = ManifestBuilder::new("baseline", s);
    let label_path = out.join("labels.txt");
    save_labels(&res.labels, &label_path)?;
    m.output(&label_path)?;
    let cent_path = out.join("centroids.mts");
    save_mts(&centroid_set(&res.centroids, obs.d1(), obs.d2())?, &cent_path)?;
    m.output(&cent_path)?;
    let summary = json!({
        "k": k,
        "rank": opts.rank,
        "init": res.init.as_str(),
        "iterations": res.iterations,
        "converged": res.converged,
        "objective": res.objective.last(),
        "metrics": metrics(truth.as_ref(), &res.labels)?,
    });
    let path = out.join("baseline.json");
    write_json(&path, &summary)?;
    m.output(&path)?;
    m.finish().write(out)?;
    print(&summary);
    Ok(())
}

pub fn eval(s: &Settings) -> CliResult<()> {
    let a = load_labels(Settings::require(&s.labels, "labels")?)?;
    let b = load_labels(Settings::require(&s.pred, "pred")?)?;
    if a.len() != b.len() {
        return Err(CliError::usage(format!(
            "label files differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let result = json!({ "ari": ari(a.labels(), b.labels())?, "nmi": nmi(a.labels(), b.labels())? });
    if s.out.is_some() {
        let out = s.out_dir()?;
        let path = out.join("eval.json");
        write_json(&path, &result)?;
        let mut m = ManifestBuilder::new("eval", s);
        m.output(&path)?;
        m.finish().write(out)?;
    }
    print(&result);
    Ok(())
}

pub fn embed(s: &Settings) -> CliResult<()> {
    let obs = load_data(s)?;
    let truth = load_truth(s, obs.n())?;
    let out = s.out_dir()?;
    let dims = s.dims.unwrap_or(2);
    if dims == 0 || dims > obs.dim() {
        return Err(CliError::usage(format!("--dims must lie in 1..={}", obs.dim())));
    }
    let coords = pca_embed(&obs, dims)?;
    let mut csv: Vec<String> = (1..=dims).map(|c| format!("pc{c}")).collect();
    if truth.is_some() {
        csv.push("label".into());
    }
    let mut text = csv.join(",") + "\n";
    for (i, row) in coords.iter().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(t) = &truth {
            cells.push(t.labels()[i].to_string());
        }
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    let path: PathBuf = out.join("embed.csv");
    write_text(&path, &text)?;
    let mut m = ManifestBuilder::new("embed", s);
    m.output(&path)?;
    m.finish().write(out)?;
    print(&json!({ "n": obs.n(), "dims": dims, "embedding": path }));
    Ok(())
}
