use std::path::Path;

use commoninfo::csbs::{a0_of_a1, a1_of_a0, asymptote_gap, c_closed_form};
use commoninfo::dist::binary_entropy;
use commoninfo::graywyner::{
    certify_achievable, constant_witness, corner_point, full_witness, sum_rate_slack, Membership,
    RateTuple,
};
use commoninfo::measures::{gk_common_randomness, measure_ordering, pairwise_information};
use commoninfo::sim::{generator_sim, gw_codec_sim, CodecSimConfig, Estimator, GenSimConfig};
use commoninfo::wyner::{gamma, wyner_ci, AuxModel, OptResult, Witness, WynerEstimate};
use commoninfo::JointPmf;
use serde::Serialize;
use serde_json::{json, Value};

use crate::distfile;
use crate::record::{bits, summary, Output, RunRecord, Table, Timestamps, VERSION};
use crate::{Cli, CliError, Command, OptArgs, WitnessArgs};

/// Subsets of at most this many variables get every joint entropy listed.
const MAX_SUBSET_VARS: usize = 10;

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let started = Timestamps::now();
    let (result, table) = match &cli.command {
        Command::Measures { dist, wyner, opt } => measures(cli, dist, *wyner, opt)?,
        Command::Wyner {
            dist,
            opt,
            witness_out,
        } => wyner(cli, dist, opt, witness_out.as_deref())?,
        Command::Gamma {
            dist,
            delta1,
            delta2,
            opt,
        } => gamma_cmd(cli, dist, *delta1, *delta2, opt)?,
        Command::CsbsSweep {
            n,
            a0_grid,
            a1_grid,
            table,
        } => csbs_sweep(n, a0_grid.as_deref(), a1_grid.as_deref(), table.as_deref())?,
        Command::Region {
            dist,
            r0,
            rates,
            witness,
            wyner,
            opt,
        } => region(cli, dist, *r0, rates, witness, *wyner, opt)?,
        Command::SimGen {
            dist,
            source,
            n,
            rate,
            codebooks,
            samples,
        } => sim_gen(cli, dist, source, *n, *rate, *codebooks, *samples)?,
        Command::SimCodec {
            dist,
            source,
            n,
            r0,
            rates,
            margin,
            eps,
            trials,
        } => sim_codec(cli, dist, source, *n, *r0, rates, *margin, *eps, *trials)?,
    };
    let timestamps = cli.common.timing.then(|| Timestamps {
        started_unix_s: started,
        finished_unix_s: Timestamps::now(),
    });
    let config = json!({ "common": &cli.common, "command": &cli.command });
    Ok(Output {
        record: RunRecord {
            command: cli.command.name().to_owned(),
            config,
            seed: cli.common.seed,
            version: VERSION.to_owned(),
            result,
            timestamps,
        },
        table,
    })
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn labels(pmf: &JointPmf) -> Vec<String> {
    match pmf.spec().names() {
        Some(n) => n.to_vec(),
        None => (1..=pmf.n_vars()).map(|i| format!("X{i}")).collect(),
    }
}

fn subset_label(names: &[String], subset: &[usize]) -> String {
    subset
        .iter()
        .map(|&i| names[i].as_str())
        .collect::<Vec<_>>()
        .join(",")
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct SubsetEntropy {
    subset: Vec<usize>,
    bits: f64,
}

fn measures(
    cli: &Cli,
    path: &Path,
    with_wyner: bool,
    opt: &OptArgs,
) -> Result<(Value, String), CliError> {
    let pmf = distfile::read(path)?;
    let names = labels(&pmf);
    let n = pmf.n_vars();
    let subsets: Vec<Vec<usize>> = if n <= MAX_SUBSET_VARS {
        (1u32..1 << n)
            .map(|mask| (0..n).filter(|&i| mask >> i & 1 == 1).collect())
            .collect()
    } else {
        (0..n)
            .map(|i| vec![i])
            .chain(std::iter::once((0..n).collect()))
            .collect()
    };
    let entropies = subsets
        .into_iter()
        .map(|s| {
            let bits = pmf.entropy(&s)?;
            Ok(SubsetEntropy { subset: s, bits })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let pairwise = pairwise_information(&pmf);
    let k = gk_common_randomness(&pmf);

    let mut out = String::new();
    let mut t = Table::new(&["subset", "H (bits)"]).titled("entropies");
    for e in &entropies {
        t.row(vec![subset_label(&names, &e.subset), bits(e.bits)]);
    }
    out.push_str(&t.render());
    if !pairwise.is_empty() {
        let mut t = Table::new(&["pair", "I (bits)"]).titled("\npairwise information");
        for p in &pairwise {
            t.row(vec![
                subset_label(&names, &[p.i, p.j]),
                bits(p.mutual_information),
            ]);
        }
        out.push_str(&t.render());
    }
    let mut pairs = vec![
        ("K", bits(k)),
        ("multi-information", bits(pmf.multi_information())),
    ];

    let mut result = json!({
        "sizes": pmf.sizes(),
        "entropies": to_value(&entropies),
        "pairwise": to_value(&pairwise),
        "k": k,
        "multi_information": pmf.multi_information(),
    });
    if with_wyner {
        let cfg = opt.config(&cli.common);
        let est = wyner_ci(&pmf, &cfg)?;
        let ordering = measure_ordering(&pmf, est.value, cfg.cross_tol);
        pairs.push(("C", bits(est.value)));
        pairs.push(("K <= I <= C", ordering.is_ordered().to_string()));
        result["wyner"] = json!({
            "value": est.value,
            "upper_value": est.upper_value,
            "gamma_value": est.gamma_value,
            "ordering": to_value(&ordering),
        });
    }
    out.push('\n');
    out.push_str(&summary("common parts", &pairs));
    Ok((result, out))
}

fn residual_pairs(r: &OptResult) -> Vec<(&'static str, String)> {
    vec![
        ("value", bits(r.value)),
        ("ci violation", format!("{:.3e}", r.ci_violation)),
        ("marginal gap", format!("{:.3e}", r.marginal_gap)),
        ("certificate", format!("{:?}", r.certificate).to_lowercase()),
        ("best restart", r.best_restart.to_string()),
    ]
}

fn matrix_table(title: &str, rows: &[Vec<f64>], row_label: &str) -> String {
    let cols = rows.first().map_or(0, Vec::len);
    let header: Vec<String> = std::iter::once(row_label.to_owned())
        .chain((0..cols).map(|j| j.to_string()))
        .collect();
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&refs).titled(title);
    for (i, r) in rows.iter().enumerate() {
        t.row(
            std::iter::once(i.to_string())
                .chain(r.iter().map(|v| format!("{v:.6}")))
                .collect(),
        );
    }
    t.render()
}

/// The witness reported for an estimate: the test channel, since it meets
/// the source law exactly, and its single-letter view.
fn witness_of(est: &WynerEstimate) -> (Witness, AuxModel) {
    let aux = AuxModel::from_coupling(&est.test_channel.coupling);
    (est.test_channel.model.clone(), aux)
}

fn wyner(
    cli: &Cli,
    path: &Path,
    opt: &OptArgs,
    witness_out: Option<&Path>,
) -> Result<(Value, String), CliError> {
    let pmf = distfile::read(path)?;
    let cfg = opt.config(&cli.common);
    let est = wyner_ci(&pmf, &cfg)?;
    let (witness, aux) = witness_of(&est);
    let corner = corner_point(&pmf, &witness)?;
    if let Some(p) = witness_out {
        let text = serde_json::to_string_pretty(&witness).expect("witness serializes");
        write_file(p, &(text + "\n"))?;
    }

    let mut out = summary(
        "wyner common information",
        &[
            ("C (bits)", bits(est.value)),
            ("chosen route", format!("{:?}", est.chosen)),
            ("test channel I(X;W)", bits(est.upper_value)),
            ("H(X) - Gamma(0,0)", bits(est.gamma_value)),
            ("disagreement", format!("{:.3e}", est.disagreement)),
            ("|W|", aux.w_size().to_string()),
        ],
    );
    out.push('\n');
    out.push_str(&summary(
        "test channel route",
        &residual_pairs(&est.test_channel),
    ));
    out.push('\n');
    out.push_str(&summary("joint route", &residual_pairs(&est.gamma)));
    out.push('\n');
    out.push_str(&matrix_table("p(w)", &[aux.w_prior().to_vec()], "-"));
    let names = labels(&pmf);
    for (i, ch) in aux.channels().iter().enumerate() {
        out.push('\n');
        out.push_str(&matrix_table(&format!("q({}|w)", names[i]), ch, "w"));
    }
    out.push('\n');
    out.push_str(&corner_summary(&names, &corner));

    let result = json!({
        "value": est.value,
        "chosen": to_value(&est.chosen),
        "upper_value": est.upper_value,
        "gamma_value": est.gamma_value,
        "disagreement": est.disagreement,
        "test_channel": residuals(&est.test_channel),
        "gamma": residuals(&est.gamma),
        "witness": to_value(&aux),
        "corner": to_value(&corner),
    });
    Ok((result, out))
}

fn residuals(r: &OptResult) -> Value {
    json!({
        "value": r.value,
        "ci_violation": r.ci_violation,
        "marginal_gap": r.marginal_gap,
        "certificate": to_value(&r.certificate),
        "best_restart": r.best_restart,
        "final_objectives": r.trace.iter().map(|t| t.final_objective()).collect::<Vec<_>>(),
    })
}

fn corner_summary(names: &[String], corner: &RateTuple) -> String {
    let mut pairs = vec![("R0".to_owned(), bits(corner.r0))];
    for (n, r) in names.iter().zip(&corner.r) {
        pairs.push((format!("R({n})"), bits(*r)));
    }
    pairs.push(("sum".to_owned(), bits(corner.sum())));
    let refs: Vec<(&str, String)> = pairs.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    summary("corner point", &refs)
}

fn gamma_cmd(
    cli: &Cli,
    path: &Path,
    delta1: f64,
    delta2: f64,
    opt: &OptArgs,
) -> Result<(Value, String), CliError> {
    if !(delta1 >= 0.0 && delta2 >= 0.0) {
        return Err(CliError::Input(
            "delta1 and delta2 must be nonnegative".into(),
        ));
    }
    let pmf = distfile::read(path)?;
    let r = gamma(&pmf, delta1, delta2, &opt.config(&cli.common))?;
    let h = pmf.total_entropy();
    let mut pairs = residual_pairs(&r);
    pairs.insert(1, ("H(X) - value", bits(h - r.value)));
    let out = summary(&format!("Gamma({delta1}, {delta2})"), &pairs);
    let mut result = residuals(&r);
    result["delta1"] = json!(delta1);
    result["delta2"] = json!(delta2);
    result["entropy"] = json!(h);
    result["witness"] = to_value(&r.model);
    Ok((result, out))
}

/// `lo:hi:count`, endpoints included.
fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Input(format!("grid {spec:?} is not lo:hi:count"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err(bad());
    };
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    let count: usize = count.parse().map_err(|_| bad())?;
    if count == 0 || lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo + step * i as f64
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub a0: f64,
    pub a1: f64,
    pub c: f64,
    pub i_pair: f64,
    pub k: f64,
    pub asymptote_gap: f64,
}

pub fn sweep_rows(ns: &[usize], a1s: &[(f64, f64)]) -> Result<Vec<SweepRow>, CliError> {
    let mut rows = Vec::new();
    for &n in ns {
        for &(a0, a1) in a1s {
            // Past a1 = 1/2 the common bit is independent of the sources.
            let gap = if a1 < 0.5 {
                asymptote_gap(n, a1)?.gap
            } else {
                1.0
            };
            rows.push(SweepRow {
                n,
                a0,
                a1,
                c: c_closed_form(n, a1)?,
                i_pair: 1.0 - binary_entropy(a0)?,
                // Full support unless every variable copies the common bit.
                k: if a1 == 0.0 { 1.0 } else { 0.0 },
                asymptote_gap: gap,
            });
        }
    }
    Ok(rows)
}

fn csbs_sweep(
    ns: &[usize],
    a0_grid: Option<&str>,
    a1_grid: Option<&str>,
    table: Option<&Path>,
) -> Result<(Value, String), CliError> {
    if ns.is_empty() {
        return Err(CliError::Input("at least one N is required".into()));
    }
    let points: Vec<(f64, f64)> = match (a0_grid, a1_grid) {
        (_, Some(g)) => parse_grid(g)?
            .into_iter()
            .map(|a1| Ok((a0_of_a1(a1)?, a1)))
            .collect::<Result<_, CliError>>()?,
        (g, None) => parse_grid(g.unwrap_or("0:0.5:51"))?
            .into_iter()
            .map(|a0| Ok((a0, a1_of_a0(a0)?)))
            .collect::<Result<_, CliError>>()?,
    };
    let rows = sweep_rows(ns, &points)?;

    let mut csv = String::from("N,a0,a1,C_N,I_pair,K,asymptote_gap\n");
    let mut t = Table::new(&["N", "a0", "a1", "C_N", "I_pair", "K", "asymptote_gap"]);
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.n, r.a0, r.a1, r.c, r.i_pair, r.k, r.asymptote_gap
        ));
        t.row(vec![
            r.n.to_string(),
            format!("{:.4}", r.a0),
            format!("{:.4}", r.a1),
            bits(r.c),
            bits(r.i_pair),
            bits(r.k),
            bits(r.asymptote_gap),
        ]);
    }
    if let Some(p) = table {
        write_file(p, &csv)?;
    }
    Ok((json!({ "rows": to_value(&rows) }), t.render()))
}

fn read_witness(path: &Path) -> Result<Witness, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn optimizer_witness(cli: &Cli, pmf: &JointPmf, opt: &OptArgs) -> Result<Witness, CliError> {
    let est = wyner_ci(pmf, &opt.config(&cli.common))?;
    Ok(witness_of(&est).0)
}

#[allow(clippy::too_many_arguments)]
fn region(
    cli: &Cli,
    path: &Path,
    r0: f64,
    rates: &[f64],
    files: &[std::path::PathBuf],
    with_wyner: bool,
    opt: &OptArgs,
) -> Result<(Value, String), CliError> {
    let pmf = distfile::read(path)?;
    let target = RateTuple::new(r0, rates.to_vec())?;
    if target.r.len() != pmf.n_vars() {
        return Err(CliError::Input(format!(
            "{} private rates for {} variables",
            target.r.len(),
            pmf.n_vars()
        )));
    }
    let mut witnesses = vec![
        ("constant".to_owned(), constant_witness(&pmf)),
        ("identity".to_owned(), full_witness(&pmf)),
    ];
    for f in files {
        witnesses.push((f.display().to_string(), read_witness(f)?));
    }
    if with_wyner {
        witnesses.push(("optimizer".to_owned(), optimizer_witness(cli, &pmf, opt)?));
    }

    let names = labels(&pmf);
    let mut header = vec!["witness".to_owned(), "R0".to_owned()];
    header.extend(names.iter().map(|n| format!("R({n})")));
    header.push("sum".to_owned());
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&refs).titled("corner points");
    let mut corners = Vec::new();
    for (label, w) in &witnesses {
        let c = corner_point(&pmf, w)?;
        let mut row = vec![label.clone(), bits(c.r0)];
        row.extend(c.r.iter().map(|&r| bits(r)));
        row.push(bits(c.sum()));
        t.row(row);
        corners.push(json!({ "witness": label, "corner": to_value(&c) }));
    }
    let list: Vec<Witness> = witnesses.iter().map(|(_, w)| w.clone()).collect();
    let membership = certify_achievable(&pmf, &target, &list);
    let slack = sum_rate_slack(&pmf, &target);

    let mut out = t.render();
    out.push('\n');
    let verdict = match &membership {
        Membership::Certified(c) => format!("achievable via {}", witnesses[c.witness_index].0),
        Membership::Unknown { .. } => "unknown".to_owned(),
    };
    out.push_str(&summary(
        "target",
        &[
            ("membership", verdict),
            ("sum-rate slack over H(X)", bits(slack)),
        ],
    ));
    let result = json!({
        "target": to_value(&target),
        "corners": corners,
        "membership": to_value(&membership),
        "sum_rate_slack": slack,
    });
    Ok((result, out))
}

fn sim_model(cli: &Cli, pmf: &JointPmf, source: &WitnessArgs) -> Result<AuxModel, CliError> {
    let witness = match (&source.witness, source.wyner) {
        (Some(p), _) => read_witness(p)?,
        (None, true) => optimizer_witness(cli, pmf, &source.opt)?,
        (None, false) => {
            return Err(CliError::Input("give --witness <file> or --wyner".into()));
        }
    };
    Ok(match witness {
        Witness::Aux(a) => a,
        Witness::Channel(t) => AuxModel::from_coupling(&t.coupling(pmf)?),
    })
}

fn sim_gen(
    cli: &Cli,
    path: &Path,
    source: &WitnessArgs,
    n: usize,
    rate: f64,
    codebooks: usize,
    samples: Option<usize>,
) -> Result<(Value, String), CliError> {
    let pmf = distfile::read(path)?;
    let model = sim_model(cli, &pmf, source)?;
    let cfg = GenSimConfig {
        source: pmf,
        model,
        n,
        rate,
        codebook_trials: codebooks,
        estimator: samples.map_or(Estimator::Exact, |samples| Estimator::MonteCarlo {
            samples,
        }),
        seed: cli.common.seed,
    };
    let mut report = generator_sim(&cfg)?;
    if !cli.common.timing {
        report.wall_time_s = 0.0;
    }
    let mut t = Table::new(&["codebook", "seed", "D_n (bits)", "std error"]).titled("trials");
    for tr in &report.trials {
        t.row(vec![
            tr.trial.to_string(),
            tr.gen_seed.to_string(),
            bits(tr.divergence),
            tr.std_error.map_or("-".into(), |s| format!("{s:.3e}")),
        ]);
    }
    let mut out = t.render();
    out.push('\n');
    out.push_str(&summary(
        "synthesis",
        &[
            ("n", n.to_string()),
            ("rate", bits(rate)),
            ("codebook size", report.codebook_size.to_string()),
            ("min D_n", bits(report.min)),
            ("mean D_n", bits(report.mean)),
            ("max D_n", bits(report.max)),
        ],
    ));
    Ok((to_value(&report), out))
}

#[allow(clippy::too_many_arguments)]
fn sim_codec(
    cli: &Cli,
    path: &Path,
    source: &WitnessArgs,
    n: usize,
    r0: Option<f64>,
    rates: &[f64],
    margin: f64,
    eps: f64,
    trials: usize,
) -> Result<(Value, String), CliError> {
    let pmf = distfile::read(path)?;
    let model = sim_model(cli, &pmf, source)?;
    let corner = corner_point(&pmf, &Witness::Aux(model.clone()))?;
    let r0 = r0.unwrap_or(corner.r0 + margin);
    let private = if rates.is_empty() {
        corner.r.iter().map(|r| r + margin).collect()
    } else {
        rates.to_vec()
    };
    let cfg = CodecSimConfig {
        pmf,
        witness: model,
        n,
        rates: RateTuple::new(r0, private)?,
        typicality_eps: eps,
        trials,
        seed: cli.common.seed,
    };
    let mut report = gw_codec_sim(&cfg)?;
    if !cli.common.timing {
        report.wall_time_s = 0.0;
    }
    let mut t = Table::new(&["trial", "index", "E1", "E2", "E3", "error"]).titled("trials");
    let flag = |b: bool| if b { "x" } else { "." }.to_owned();
    for tr in &report.trials {
        t.row(vec![
            tr.trial.to_string(),
            tr.common_index.to_string(),
            flag(tr.e1),
            flag(tr.e2),
            flag(tr.e3),
            flag(tr.error),
        ]);
    }
    let mut out = t.render();
    out.push('\n');
    let private_rates: Vec<String> = cfg.rates.r.iter().map(|&r| bits(r)).collect();
    out.push_str(&summary(
        "codec",
        &[
            ("n", n.to_string()),
            ("R0", bits(cfg.rates.r0)),
            ("private rates", private_rates.join(", ")),
            ("codebook size", report.codebook_size.to_string()),
            ("E1 no typical codeword", report.e1_count.to_string()),
            ("E2 truth not typical", report.e2_count.to_string()),
            ("E3 typical impostor", report.e3_count.to_string()),
            ("errors", report.errors.to_string()),
            ("error rate", format!("{:.4}", report.error_rate)),
        ],
    ));
    Ok((to_value(&report), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_include_both_ends() {
        assert_eq!(parse_grid("0:0.5:3").unwrap(), vec![0.0, 0.25, 0.5]);
        assert_eq!(parse_grid("0.1:0.1:1").unwrap(), vec![0.1]);
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("1:0:3").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn sweep_columns_follow_the_closed_forms() {
        let rows = sweep_rows(&[2], &[(0.25, a1_of_a0(0.25).unwrap())]).unwrap();
        let r = &rows[0];
        let h = |p: f64| binary_entropy(p).unwrap();
        assert!((r.c - (1.0 + h(0.25) - 2.0 * h(r.a1))).abs() < 1e-12);
        assert!((r.i_pair - (1.0 - h(0.25))).abs() < 1e-15);
        assert_eq!(r.k, 0.0);
        assert!(r.asymptote_gap > 0.0 && r.asymptote_gap < 1.0);
    }
}
